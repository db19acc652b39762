"""
dccert CLI - optimality certificates for DC programs.

Usage:
    dccert check-global <FILE> --point X [--eps0 E] [--converse]
    dccert check-local <FILE> --point X
    dccert check-sufficient <FILE> --point X
    dccert check-cone <FILE> --point X
    dccert sip <FILE> --point X [--refined FILE]
    dccert sdp <FILE> --point X
    dccert validate <FILE> [--point X]
    dccert solve <FILE> --point X0 [--start X0 ...] [--csv trace.csv]
    dccert oracle <FILE> [--point X] [--box LO HI]
"""

import argparse
import csv
import json
import logging
import sys
import time
from datetime import datetime
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from dccert import __version__
from dccert.errors import DCCertError, NumericFailure, ProblemFileError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    raise TypeError(f"{type(obj).__name__} is not JSON serializable")


class ReportWriter:
    """Collects verdicts of one run and writes them as a JSON report."""

    def __init__(self, command: str, source: str, input_digest: str, options, dimensions=None):
        self.report: Dict[str, Any] = {
            "timestamp": datetime.now().isoformat(),
            "version": __version__,
            "command": command,
            "input": source,
            "input_digest": input_digest,
            "dimensions": dimensions or [],
            "options": options.to_dict(),
            "assumptions": [],
            "verdicts": {},
            "witnesses": {},
            "timings": {},
        }

    def assume(self, *items: str):
        for item in items:
            if item not in self.report["assumptions"]:
                self.report["assumptions"].append(item)

    def run(self, name: str, fn: Callable[[], Any]) -> Optional[Any]:
        """Run one check; abstentions become reason codes, numeric failures propagate."""
        start = time.perf_counter()
        try:
            result = fn()
        except NumericFailure:
            raise
        except DCCertError as exc:
            if isinstance(exc, ValueError):
                raise
            self.report["verdicts"][name] = {"verdict": "abstain", "reason": exc.reason, "message": str(exc)}
            result = None
        else:
            payload = result.to_dict() if hasattr(result, "to_dict") else result
            if isinstance(payload, dict) and "witnesses" in payload:
                self.report["witnesses"][name] = payload.pop("witnesses")
            self.report["verdicts"][name] = payload
        self.report["timings"][name] = round(time.perf_counter() - start, 6)
        return result

    def write(self, path: str):
        with open(path, "w") as f:
            json.dump(self.report, f, indent=2, sort_keys=True, default=_json_default)
            f.write("\n")

    def write_csv(self, path: str):
        """One row per global witness: check, eta, alpha1, alpha2, eta1, eta2, eta3, slack."""
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["check", "eta", "alpha1", "alpha2", "eta1", "eta2", "eta3", "slack"])
            for name, witnesses in self.report["witnesses"].items():
                for w in witnesses:
                    writer.writerow([name, repr(w["eta"]), repr(w["alpha"][0]), repr(w["alpha"][1]),
                                     repr(w["eta1"]), repr(w["eta2"]), repr(w["eta3"]), repr(w["slack"])])

    def print_summary(self):
        print(f"dccert {self.report['version']}  {self.report['command']}  {self.report['input']}")
        for name, payload in self.report["verdicts"].items():
            if isinstance(payload, dict):
                verdict = payload.get("verdict", payload.get("found", payload.get("passed", payload.get("status"))))
            else:
                verdict = payload
            extra = f"  ({payload['reason']})" if isinstance(payload, dict) and "reason" in payload else ""
            print(f"  {name:24s} {verdict}{extra}")


def _vector(text: str) -> List[float]:
    try:
        return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _require_point(args) -> np.ndarray:
    if args.point is None:
        raise ProblemFileError("--point", "this command needs a point")
    return np.asarray(args.point, dtype=float)


def _options(pf, args):
    return pf.options.with_overrides(tol=args.tol, eta_max=args.eta_max, eta_points=args.eta_points,
                                     seed=args.seed, threads=args.threads)


def _need(pf, *kinds: str):
    if pf.kind not in kinds:
        raise ProblemFileError(pf.kind, f"this command needs a {' or '.join(kinds)} record")


# ---- command handlers ----

def cmd_check_global(pf, args, opts, rw: ReportWriter):
    from dccert.certificates import ASSUMPTIONS, check_converse, check_global, check_global_sufficient
    from dccert.conic import ConeConstraint, check_cone_global

    _need(pf, "problem")
    P, x = pf.problem, _require_point(args)
    rw.assume(*ASSUMPTIONS)
    if isinstance(P.constraint, ConeConstraint):
        rw.run("cone_global", lambda: check_cone_global(P, x, opts))
    else:
        rw.run("global", lambda: check_global(P, x, opts))
    if args.eps0 is not None:
        rw.run("global_sufficient", lambda: check_global_sufficient(P, x, args.eps0, opts))
    if args.converse:
        rw.run("check_converse", lambda: check_converse(P, x, opts=opts))


def cmd_check_local(pf, args, opts, rw: ReportWriter):
    from dccert.certificates import check_local_necessary
    from dccert.conic import ConeConstraint, check_cone_local
    from dccert.sip import sip_check_local
    from dccert.stochastic import ExpectedFunctional, expected_subdiff_contains

    x = _require_point(args)
    rw.assume("h and the constraint control are differentiable at the point")
    if pf.kind == "sip":
        rw.run("sip_local", lambda: sip_check_local(pf.problem, x, opts))
        return
    _need(pf, "problem", "stochastic")
    P = pf.problem
    if isinstance(P, ExpectedFunctional):
        # unconstrained: 0 in the expected regular subdifferential
        rw.run("expected_stationary",
               lambda: {"verdict": expected_subdiff_contains(P, x, np.zeros(P.dim), opts.tol)})
        return
    if isinstance(P.constraint, ConeConstraint):
        rw.run("cone_local", lambda: check_cone_local(P, x, opts))
    else:
        rw.run("local_necessary", lambda: check_local_necessary(P, x, opts))


def cmd_check_sufficient(pf, args, opts, rw: ReportWriter):
    from dccert.certificates import check_local_sufficient
    from dccert.conic import ConeConstraint, check_cone_sufficient

    _need(pf, "problem")
    P, x = pf.problem, _require_point(args)
    if isinstance(P.constraint, ConeConstraint):
        rw.run("cone_sufficient", lambda: check_cone_sufficient(P, x, opts))
    else:
        rw.run("local_sufficient", lambda: check_local_sufficient(P, x, opts))


def cmd_check_cone(pf, args, opts, rw: ReportWriter):
    from dccert.conic import ConeConstraint, check_cone_global, check_cone_local, set_as_cone

    _need(pf, "problem")
    P, x = pf.problem, _require_point(args)
    if not isinstance(P.constraint, ConeConstraint):
        P = set_as_cone(P)
        rw.assume("set constraint rewritten as an orthant cone constraint")
    rw.run("cone_global", lambda: check_cone_global(P, x, opts))
    rw.run("cone_local", lambda: check_cone_local(P, x, opts))


def cmd_sip(pf, args, opts, rw: ReportWriter):
    from dccert.problem_io import load_problem
    from dccert.sip import sip_check_local, sip_multiplier_stability

    _need(pf, "sip")
    x = _require_point(args)
    rw.assume("index set replaced by its finite discretization")
    rw.run("sip_local", lambda: sip_check_local(pf.problem, x, opts))
    if args.refined:
        refined = load_problem(args.refined)
        _need(refined, "sip")
        rw.run("multiplier_stability", lambda: sip_multiplier_stability(pf.problem, refined.problem, x, opts))


def cmd_sdp(pf, args, opts, rw: ReportWriter):
    from dccert.sdp import scalarization_equiv_check, sdp_check_local

    _need(pf, "sdp")
    x = _require_point(args)
    con = pf.problem
    rw.run("sdp_local", lambda: sdp_check_local(con.M, pf.objective, pf.Q, x, opts))
    rw.run("scalarization_gap", lambda: {"gap": scalarization_equiv_check(con.M, x, opts=opts)})


def cmd_validate(pf, args, opts, rw: ReportWriter):
    from dccert.certificates import SetConstraint
    from dccert.dc_calculus import validate_bdc
    from dccert.sdp import validate_matrix_map

    if pf.kind == "sdp":
        rw.run("matrix_map", lambda: validate_matrix_map(pf.problem.M, opts=opts))
    elif pf.kind == "problem":
        con = pf.problem.constraint
        B = con.slope if isinstance(con, SetConstraint) else con.base.B
        rw.run("bdc", lambda: validate_bdc(con.Phi, B, opts=opts))
    else:
        raise ProblemFileError(pf.kind, "validate needs a problem or sdp record")
    if args.point is not None:
        x = _require_point(args)
        target = pf.problem
        rw.run("feasible", lambda: {"verdict": bool(target.feasible(x))})


def cmd_solve(pf, args, opts, rw: ReportWriter):
    from dccert.certificates import check_local_sufficient
    from dccert.solver import solve_dca, solve_multistart, write_trace_csv

    _need(pf, "problem")
    P = pf.problem
    starts = [_require_point(args)] + [np.asarray(s, dtype=float) for s in (args.start or [])]
    if len(starts) == 1:
        trace = rw.run("solve", lambda: solve_dca(P, starts[0], opts))
    else:
        best, traces = solve_multistart(P, starts, opts)
        rw.run("solve", lambda: {"runs": [t.to_dict() for t in traces],
                                 "best": None if best is None else best.to_dict()})
        trace = best
    if trace is None:
        return
    if args.csv:
        write_trace_csv(trace, args.csv)
    if P.feasible(trace.final, 1e-7):
        rw.run("local_sufficient", lambda: check_local_sufficient(P, trace.final, opts))


def cmd_oracle(pf, args, opts, rw: ReportWriter):
    from dccert.geometry import Polytope
    from dccert.oracle import GridSpec, brute_local_min, brute_min

    _need(pf, "problem")
    P = pf.problem
    if args.box:
        lo, hi = args.box
        box = Polytope.box(lo, hi)
    elif P.Q is not None:
        box = P.Q
    else:
        raise ProblemFileError("--box", "the problem has no Q; give a search box")
    grid = GridSpec(box, args.grid_points or opts.grid_points)

    def global_min():
        x, value, count = brute_min(P, grid, opts=opts)
        return {"x_min": x.tolist(), "value": value, "feasible_count": count}

    rw.run("brute_min", global_min)
    if args.point is not None:
        x = _require_point(args)

        def local_min():
            ok, best, value = brute_local_min(P, x, opts=opts)
            return {"verdict": ok, "best": best.tolist(), "value": value}

        rw.run("brute_local_min", local_min)


COMMANDS = {
    "check-global": cmd_check_global,
    "check-local": cmd_check_local,
    "check-sufficient": cmd_check_sufficient,
    "check-cone": cmd_check_cone,
    "sip": cmd_sip,
    "sdp": cmd_sdp,
    "validate": cmd_validate,
    "solve": cmd_solve,
    "oracle": cmd_oracle,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dccert",
        description="Optimality certificates for DC (difference-of-convex) programs",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Workflow:
  1. validate          - Check the B-DC / matrix-map structure of the problem
  2. solve             - Produce a candidate point with DCA
  3. check-global      - Global optimality test of the candidate
  4. check-local       - Multipliers and qualification condition at the candidate
  5. oracle            - Brute-force ground truth on a grid

Examples:
  %(prog)s check-global problem.json --point 1.0
  %(prog)s check-local problem.json --point 1,0 --out report.json
  %(prog)s solve problem.json --point 3.0 --csv trace.csv
  %(prog)s oracle problem.json --box 0 4 --grid-points 1001

Exit codes: 0 verdict produced (including fails), 2 input error, 3 numeric failure.
        """,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", help="Command to run")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("file", help="Problem file (JSON)")
    common.add_argument("--point", type=_vector, default=None,
                        help="Point to test (comma-separated coordinates)")
    common.add_argument("--tol", type=float, default=None, help="Absolute tolerance")
    common.add_argument("--eta-max", type=float, default=None, help="Upper end of the eta schedule")
    common.add_argument("--eta-points", type=int, default=None, help="Uniform points in the eta schedule")
    common.add_argument("--seed", type=int, default=None, help="Seed for random draws")
    common.add_argument("--threads", type=int, default=None,
                        help="Worker threads (default: $DCCERT_THREADS or 1)")
    common.add_argument("--out", default=None, help="Write the JSON report here")
    common.add_argument("--csv", default=None,
                        help="Write CSV data (solve: iteration trace; checks: witness table)")
    common.add_argument("-v", "--verbose", action="store_true", help="Verbose logging")

    g = subparsers.add_parser("check-global", parents=[common], help="Global optimality test")
    g.add_argument("--eps0", type=float, default=None, help="Also run the alpha1 >= eps0 sufficiency test")
    g.add_argument("--converse", action="store_true", help="Run the converse check on a grid and estimate eta_bar")
    subparsers.add_parser("check-local", parents=[common], help="Local necessary conditions")
    subparsers.add_parser("check-sufficient", parents=[common], help="Local sufficient conditions")
    subparsers.add_parser("check-cone", parents=[common], help="Cone-constrained certificates")
    s = subparsers.add_parser("sip", parents=[common], help="Semi-infinite local multipliers")
    s.add_argument("--refined", default=None, help="Refined discretization for a stability report")
    subparsers.add_parser("sdp", parents=[common], help="Semidefinite local multipliers")
    subparsers.add_parser("validate", parents=[common], help="Validate the DC structure")
    v = subparsers.add_parser("solve", parents=[common], help="DCA local solver")
    v.add_argument("--start", type=_vector, action="append", help="Extra start points (multi-start)")
    o = subparsers.add_parser("oracle", parents=[common], help="Brute-force grid search")
    o.add_argument("--box", type=_vector, nargs=2, metavar=("LO", "HI"), default=None,
                   help="Search box corners (comma-separated)")
    o.add_argument("--grid-points", type=int, default=None, help="Grid points per dimension")
    return parser


def run(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        return EXIT_INPUT

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s'
    )

    from dccert.problem_io import load_problem, problem_dimensions

    try:
        pf = load_problem(args.file)
        opts = _options(pf, args)
        rw = ReportWriter(args.command, args.file, pf.input_digest, opts, problem_dimensions(pf))
        COMMANDS[args.command](pf, args, opts, rw)
    except ProblemFileError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericFailure as exc:
        print(f"numeric failure ({exc.reason}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, TypeError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT

    rw.print_summary()
    if args.out:
        rw.write(args.out)
        print(f"Report: {args.out}")
    if args.csv and args.command != "solve":
        rw.write_csv(args.csv)
    return EXIT_OK


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
