"""
Problem files: JSON documents with tagged records.

    {
      "version": "1",
      "name": "...",
      "problem":    {"dim": n, "objective": <dc>, "constraint": <constraint>, "Q": <polytope>},
      "sip":        {"dim": n, "objective": <dc>, "index_points": [...], "phi_t": [<dc>, ...], "box": <polytope>},
      "sdp":        {"dim": n, "p": p, "entries": [[<dc>, ...], ...], "objective": <dc>, "Q": <polytope>},
      "stochastic": {"dim": n, "terms": [{"weight": w, "f": <dc>}, ...], "constraint": <constraint>, "Q": <polytope>},
      "options":    {"tol": ..., "eta_points": ..., ...}
    }

Exactly one of problem / sip / sdp / stochastic is required.

    <dc>         {"u": <func>, "h": <func>}            (h defaults to zero)
    <func>       {"maxaffine": [[a_1, ..., a_n, b], ...]} | {"quadratic": {"Q", "q", "c"}}
                 | {"indicator": <polytope>} | {"sum": [<func>, ...]} | {"zero": {}}
    <polytope>   {"hrep": {"A", "b", "Aeq"?, "beq"?}} | {"vrep": [[...], ...]} | {"box": {"lo", "hi"}}
    <map>        {"u": [<func>, ...], "h": <func>, "domain": <polytope>?} | {"affine": {"J", "offset"?}}
    <constraint> {"set": {"map": <map>, "C": <polytope>, "z0": [...]}}
                 | {"cone": {"map": <map>, "generators": [[...]] | "hrep": [[...]], "base_e": [...]?}}

Numbers may be JSON numbers or decimal strings. Errors name the offending
field path, e.g. problem.constraint.set.C.hrep.b.
"""

import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from .certificates import Problem, SetConstraint
from .config import Options
from .conic import ConeConstraint
from .convex_functions import ConvexFunc, DCPair, IndicatorPoly, MaxAffine, Quadratic, Sum
from .dc_calculus import VectorMap
from .errors import DCCertError, ProblemFileError
from .geometry import PolyCone, Polytope
from .sdp import SdpConstraint, matrix_map_from_entries
from .sip import SipProblem
from .stochastic import ExpectedFunctional

logger = logging.getLogger(__name__)

FORMAT_VERSION = "1"
KINDS = ("problem", "sip", "sdp", "stochastic")


@dataclass
class ProblemFile:
    version: str
    kind: str
    name: str
    problem: Any
    options: Options
    raw: Dict[str, Any] = field(default_factory=dict)
    objective: Optional[DCPair] = None
    Q: Optional[Polytope] = None
    input_digest: str = ""


def digest(data) -> str:
    """sha256 of the raw input bytes."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()


# ---- readers ----

def _get(obj: Dict[str, Any], key: str, path: str, required: bool = True):
    if not isinstance(obj, dict):
        raise ProblemFileError(path, f"expected an object, got {type(obj).__name__}")
    if key not in obj:
        if required:
            raise ProblemFileError(f"{path}.{key}", "missing")
        return None
    return obj[key]


def _number(v, path: str) -> float:
    try:
        return float(v)
    except (TypeError, ValueError):
        raise ProblemFileError(path, f"expected a number, got {v!r}")


def _array(v, path: str, ndim: int, cols: Optional[int] = None) -> np.ndarray:
    try:
        arr = np.array(v, dtype=float)
    except (TypeError, ValueError):
        raise ProblemFileError(path, "expected numbers")
    if ndim == 1:
        arr = np.atleast_1d(arr)
        if arr.ndim != 1:
            raise ProblemFileError(path, f"expected a vector, got shape {arr.shape}")
    else:
        if arr.size == 0 and cols is not None:
            arr = np.zeros((0, cols))
        arr = np.atleast_2d(arr)
        if arr.ndim != 2:
            raise ProblemFileError(path, f"expected a matrix, got shape {arr.shape}")
        if cols is not None and arr.shape[1] != cols:
            raise ProblemFileError(path, f"expected {cols} columns, got {arr.shape[1]}")
    return arr


def parse_polytope(obj, path: str, dim: int) -> Polytope:
    try:
        if isinstance(obj, dict) and "hrep" in obj:
            h = obj["hrep"]
            hp = f"{path}.hrep"
            A = _array(_get(h, "A", hp), f"{hp}.A", 2, dim)
            b = _array(_get(h, "b", hp), f"{hp}.b", 1)
            if A.shape[0] != b.size:
                raise ProblemFileError(f"{hp}.b", f"{b.size} entries for {A.shape[0]} rows of A")
            Aeq = beq = None
            if "Aeq" in h:
                Aeq = _array(h["Aeq"], f"{hp}.Aeq", 2, dim)
                beq = _array(_get(h, "beq", hp), f"{hp}.beq", 1)
                if Aeq.shape[0] != beq.size:
                    raise ProblemFileError(f"{hp}.beq", f"{beq.size} entries for {Aeq.shape[0]} rows of Aeq")
            return Polytope(dim, A=A, b=b, Aeq=Aeq, beq=beq)
        if isinstance(obj, dict) and "vrep" in obj:
            return Polytope(dim, vertices=_array(obj["vrep"], f"{path}.vrep", 2, dim))
        if isinstance(obj, dict) and "box" in obj:
            bp = f"{path}.box"
            lo = _array(_get(obj["box"], "lo", bp), f"{bp}.lo", 1)
            hi = _array(_get(obj["box"], "hi", bp), f"{bp}.hi", 1)
            if lo.size != dim or hi.size != dim:
                raise ProblemFileError(bp, f"bounds must have {dim} entries")
            return Polytope.box(lo, hi)
    except ProblemFileError:
        raise
    except (DCCertError, ValueError) as exc:
        raise ProblemFileError(path, str(exc))
    raise ProblemFileError(path, "expected one of hrep, vrep, box")


def parse_func(obj, path: str, dim: int) -> ConvexFunc:
    if not isinstance(obj, dict) or len(obj) != 1:
        raise ProblemFileError(path, "expected a single-key tagged record")
    tag, body = next(iter(obj.items()))
    p = f"{path}.{tag}"
    if tag == "maxaffine":
        rows = _array(body, p, 2, dim + 1)
        if rows.shape[0] == 0:
            raise ProblemFileError(p, "needs at least one piece")
        return MaxAffine(rows[:, :dim], rows[:, dim])
    if tag == "quadratic":
        if not isinstance(body, dict):
            raise ProblemFileError(p, "expected an object with Q, q, c")
        Q = _array(body["Q"], f"{p}.Q", 2, dim) if "Q" in body else np.zeros((dim, dim))
        q = _array(body["q"], f"{p}.q", 1) if "q" in body else np.zeros(dim)
        if Q.shape != (dim, dim) or q.size != dim:
            raise ProblemFileError(p, f"Q must be {dim}x{dim} and q must have {dim} entries")
        try:
            return Quadratic(Q, q, _number(body.get("c", 0.0), f"{p}.c"))
        except (DCCertError, ValueError) as exc:
            raise ProblemFileError(p, str(exc))
    if tag == "indicator":
        return IndicatorPoly(parse_polytope(body, p, dim))
    if tag == "sum":
        if not isinstance(body, list) or not body:
            raise ProblemFileError(p, "expected a nonempty list")
        return Sum([parse_func(t, f"{p}[{k}]", dim) for k, t in enumerate(body)])
    if tag == "zero":
        return Quadratic.zero(dim)
    raise ProblemFileError(path, f"unknown function kind {tag!r}")


def parse_dc(obj, path: str, dim: int) -> DCPair:
    u = parse_func(_get(obj, "u", path), f"{path}.u", dim)
    h_obj = _get(obj, "h", path, required=False)
    h = Quadratic.zero(dim) if h_obj is None else parse_func(h_obj, f"{path}.h", dim)
    return DCPair(u, h)


def parse_map(obj, path: str, dim: int) -> VectorMap:
    if isinstance(obj, dict) and "affine" in obj:
        ap = f"{path}.affine"
        J = _array(_get(obj["affine"], "J", ap), f"{ap}.J", 2, dim)
        off = obj["affine"].get("offset")
        offset = None if off is None else _array(off, f"{ap}.offset", 1)
        if offset is not None and offset.size != J.shape[0]:
            raise ProblemFileError(f"{ap}.offset", f"expected {J.shape[0]} entries")
        return VectorMap.affine(J, offset)
    us = _get(obj, "u", path)
    if not isinstance(us, list) or not us:
        raise ProblemFileError(f"{path}.u", "expected a nonempty list of functions")
    h_obj = _get(obj, "h", path, required=False)
    h = Quadratic.zero(dim) if h_obj is None else parse_func(h_obj, f"{path}.h", dim)
    domain = None
    if obj.get("domain") is not None:
        domain = parse_polytope(obj["domain"], f"{path}.domain", dim)
    return VectorMap([parse_func(u, f"{path}.u[{k}]", dim) for k, u in enumerate(us)], h, domain)


def parse_constraint(obj, path: str, dim: int):
    if isinstance(obj, dict) and "set" in obj:
        sp = f"{path}.set"
        body = obj["set"]
        Phi = parse_map(_get(body, "map", sp), f"{sp}.map", dim)
        C = parse_polytope(_get(body, "C", sp), f"{sp}.C", Phi.m)
        z0 = _array(_get(body, "z0", sp), f"{sp}.z0", 1)
        if z0.size != Phi.m:
            raise ProblemFileError(f"{sp}.z0", f"expected {Phi.m} entries")
        return SetConstraint(Phi, C, z0)
    if isinstance(obj, dict) and "cone" in obj:
        cp_ = f"{path}.cone"
        body = obj["cone"]
        Phi = parse_map(_get(body, "map", cp_), f"{cp_}.map", dim)
        if "generators" in body:
            K = PolyCone.from_generators(_array(body["generators"], f"{cp_}.generators", 2, Phi.m), Phi.m)
        elif "hrep" in body:
            K = PolyCone.from_hrep(_array(body["hrep"], f"{cp_}.hrep", 2, Phi.m), Phi.m)
        else:
            raise ProblemFileError(cp_, "expected generators or hrep")
        e = body.get("base_e")
        try:
            return ConeConstraint(Phi, K, e=None if e is None else _array(e, f"{cp_}.base_e", 1))
        except ProblemFileError:
            raise
        except ValueError as exc:
            raise ProblemFileError(f"{cp_}.base_e" if e is not None else cp_, str(exc))
    raise ProblemFileError(path, "expected a set or cone record")


def _dim(body, path: str) -> int:
    n = _get(body, "dim", path)
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise ProblemFileError(f"{path}.dim", f"expected a positive integer, got {n!r}")
    return n


def _optional_polytope(body, key: str, path: str, dim: int) -> Optional[Polytope]:
    obj = body.get(key)
    return None if obj is None else parse_polytope(obj, f"{path}.{key}", dim)


def parse_problem(doc: Dict[str, Any]) -> ProblemFile:
    if not isinstance(doc, dict):
        raise ProblemFileError("$", "the document must be a JSON object")
    version = str(doc.get("version", FORMAT_VERSION))
    if version != FORMAT_VERSION:
        raise ProblemFileError("version", f"unsupported version {version!r}")
    kinds = [k for k in KINDS if k in doc]
    if len(kinds) != 1:
        raise ProblemFileError("$", f"expected exactly one of {', '.join(KINDS)}")
    kind = kinds[0]
    body = doc[kind]
    try:
        options = Options.from_mapping(doc.get("options"))
    except (TypeError, ValueError) as exc:
        raise ProblemFileError("options", str(exc))
    name = str(doc.get("name", ""))
    n = _dim(body, kind)
    out = ProblemFile(version, kind, name, None, options, raw=doc)

    if kind == "problem":
        objective = parse_dc(_get(body, "objective", kind), f"{kind}.objective", n)
        constraint = parse_constraint(_get(body, "constraint", kind), f"{kind}.constraint", n)
        Q = _optional_polytope(body, "Q", kind, n)
        out.problem = Problem(objective, constraint, Q, name=name)
    elif kind == "sip":
        objective = parse_dc(_get(body, "objective", kind), f"{kind}.objective", n)
        points = _get(body, "index_points", kind)
        funcs = _get(body, "phi_t", kind)
        if not isinstance(points, list) or not isinstance(funcs, list):
            raise ProblemFileError(kind, "index_points and phi_t must be lists")
        pairs = [parse_dc(f, f"{kind}.phi_t[{k}]", n) for k, f in enumerate(funcs)]
        try:
            out.problem = SipProblem(objective, list(points), pairs, _optional_polytope(body, "box", kind, n))
        except ValueError as exc:
            raise ProblemFileError(f"{kind}.phi_t", str(exc))
    elif kind == "sdp":
        p = _get(body, "p", kind)
        rows = _get(body, "entries", kind)
        if not isinstance(rows, list) or len(rows) != p or any(not isinstance(r, list) or len(r) != p for r in rows):
            raise ProblemFileError(f"{kind}.entries", f"expected a {p}x{p} array")
        entries = [[parse_dc(rows[i][j], f"{kind}.entries[{i}][{j}]", n) for j in range(p)] for i in range(p)]
        out.problem = SdpConstraint(matrix_map_from_entries(entries))
        out.objective = parse_dc(_get(body, "objective", kind), f"{kind}.objective", n)
        out.Q = _optional_polytope(body, "Q", kind, n)
    else:
        terms = _get(body, "terms", kind)
        if not isinstance(terms, list) or not terms:
            raise ProblemFileError(f"{kind}.terms", "expected a nonempty list")
        parsed = []
        for k, t in enumerate(terms):
            tp = f"{kind}.terms[{k}]"
            parsed.append((_number(_get(t, "weight", tp), f"{tp}.weight"), parse_dc(_get(t, "f", tp), f"{tp}.f", n)))
        try:
            out.problem = ExpectedFunctional(parsed)
        except ValueError as exc:
            raise ProblemFileError(f"{kind}.terms", str(exc))
        constraint = body.get("constraint")
        out.objective = out.problem.aggregate()
        out.Q = _optional_polytope(body, "Q", kind, n)
        if constraint is not None:
            out.problem = Problem(out.objective, parse_constraint(constraint, f"{kind}.constraint", n),
                                  out.Q, name=name)
    logger.debug(f"parsed {kind} problem {name!r} of dimension {n}")
    return out


def load_problem(path: str) -> ProblemFile:
    """Read and parse a problem file; the raw bytes are kept for the digest."""
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as exc:
        raise ProblemFileError(path, str(exc))
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProblemFileError(path, f"not valid JSON: {exc}")
    pf = parse_problem(doc)
    pf.input_digest = digest(data)
    return pf


# ---- writers ----

def serialize_map(Phi: VectorMap) -> Dict[str, Any]:
    out = {"u": [u.to_dict() for u in Phi.us], "h": Phi.h.to_dict()}
    if Phi.domain is not None:
        out["domain"] = Phi.domain.to_dict()
    return out


def serialize_constraint(con) -> Dict[str, Any]:
    if isinstance(con, SetConstraint):
        return {"set": {"map": serialize_map(con.Phi), "C": con.C.to_dict(), "z0": con.z0.tolist()}}
    if isinstance(con, ConeConstraint):
        body = {"map": serialize_map(con.Phi), "generators": con.K.generators.tolist()}
        if con.base.e is not None:
            body["base_e"] = con.base.e.tolist()
        return {"cone": body}
    raise TypeError(f"cannot serialize {type(con).__name__}")


def serialize_problem(P: Problem, options: Optional[Options] = None) -> Dict[str, Any]:
    body: Dict[str, Any] = {
        "dim": P.dim,
        "objective": {"u": P.objective.u.to_dict(), "h": P.objective.h.to_dict()},
        "constraint": serialize_constraint(P.constraint),
    }
    if P.Q is not None:
        body["Q"] = P.Q.to_dict()
    doc: Dict[str, Any] = {"version": FORMAT_VERSION, "name": P.name, "problem": body}
    if options is not None:
        doc["options"] = options.to_dict()
    return doc


def dumps(doc: Dict[str, Any]) -> str:
    """Deterministic JSON text (sorted keys, shortest round-trip floats)."""
    return json.dumps(doc, sort_keys=True, indent=2)


def problem_dimensions(pf: ProblemFile) -> List[int]:
    """Dimensions a checker will see, for the report header."""
    prob = pf.problem
    if isinstance(prob, Problem):
        return [prob.dim]
    if isinstance(prob, SipProblem):
        return [prob.dim, len(prob.index_points)]
    if isinstance(prob, SdpConstraint):
        return [prob.M.n, prob.M.p]
    return [prob.dim]
