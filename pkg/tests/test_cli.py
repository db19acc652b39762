import csv
import json

import pytest

from dccert.cli import EXIT_INPUT, EXIT_OK, build_parser, run


def read_json(path):
    with open(path) as f:
        return json.load(f)


class TestParser:
    def test_point_is_a_vector(self):
        args = build_parser().parse_args(["check-global", "p.json", "--point", "1,2.5"])
        assert args.point == [1.0, 2.5]

    def test_box(self):
        args = build_parser().parse_args(["oracle", "p.json", "--box", "0", "4"])
        assert args.box == [[0.0], [4.0]]

    def test_no_alpha_points_flag(self, capsys):
        with pytest.raises(SystemExit) as info:
            build_parser().parse_args(["check-global", "p.json", "--alpha-points", "11"])
        assert info.value.code == 2
        assert "--alpha-points" in capsys.readouterr().err

    def test_version(self, capsys):
        with pytest.raises(SystemExit) as info:
            build_parser().parse_args(["--version"])
        assert info.value.code == 0
        assert "dccert" in capsys.readouterr().out


class TestRun:
    def test_no_command(self, capsys):
        assert run([]) == EXIT_INPUT
        assert "Workflow" in capsys.readouterr().out

    def test_check_global_report(self, abs_problem_doc, write_doc, tmp_path):
        out = tmp_path / "report.json"
        assert run(["check-global", write_doc(abs_problem_doc), "--point", "1.0", "--out", str(out)]) == EXIT_OK
        report = read_json(out)
        assert report["verdicts"]["global"]["verdict"] == "holds"
        assert report["command"] == "check-global"
        assert report["dimensions"] == [1]
        assert len(report["input_digest"]) == 64
        assert report["options"]["eta_points"] == 6
        assert report["witnesses"]["global"]
        assert "global" in report["timings"]

    def test_fails_is_still_success(self, abs_problem_doc, write_doc, tmp_path):
        out = tmp_path / "report.json"
        assert run(["check-global", write_doc(abs_problem_doc), "--point", "2", "--out", str(out)]) == EXIT_OK
        assert read_json(out)["verdicts"]["global"]["verdict"] == "fails"

    def test_flags_override_file_options(self, abs_problem_doc, write_doc, tmp_path):
        out = tmp_path / "report.json"
        run(["check-global", write_doc(abs_problem_doc), "--point", "1", "--eta-points", "4", "--out", str(out)])
        assert read_json(out)["options"]["eta_points"] == 4

    def test_witness_csv(self, abs_problem_doc, write_doc, tmp_path):
        table = tmp_path / "witnesses.csv"
        assert run(["check-global", write_doc(abs_problem_doc), "--point", "1", "--csv", str(table)]) == EXIT_OK
        with open(table, newline="") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["check", "eta", "alpha1", "alpha2", "eta1", "eta2", "eta3", "slack"]
        assert len(rows) > 1
        assert rows[1][0] == "global"

    def test_malformed_file(self, abs_problem_doc, write_doc, capsys):
        del abs_problem_doc["problem"]["constraint"]["set"]["z0"]
        assert run(["check-global", write_doc(abs_problem_doc), "--point", "1"]) == EXIT_INPUT
        assert "problem.constraint.set.z0" in capsys.readouterr().err

    def test_missing_point(self, abs_problem_doc, write_doc, capsys):
        assert run(["check-global", write_doc(abs_problem_doc)]) == EXIT_INPUT
        assert "--point" in capsys.readouterr().err

    def test_infeasible_point_abstains(self, abs_problem_doc, write_doc, tmp_path):
        out = tmp_path / "report.json"
        assert run(["check-local", write_doc(abs_problem_doc), "--point", "0", "--out", str(out)]) == EXIT_OK
        verdict = read_json(out)["verdicts"]["local_necessary"]
        assert verdict["verdict"] == "abstain"
        assert verdict["reason"] == "infeasible"

    def test_validate(self, abs_problem_doc, write_doc, tmp_path):
        out = tmp_path / "report.json"
        assert run(["validate", write_doc(abs_problem_doc), "--point", "1", "--out", str(out)]) == EXIT_OK
        report = read_json(out)
        assert report["verdicts"]["bdc"]["passed"]
        assert report["verdicts"]["feasible"]["verdict"]

    def test_wrong_record_kind(self, write_doc, capsys):
        doc = {"sip": {"dim": 1, "objective": {"u": {"maxaffine": [[-1, 0]]}},
                       "index_points": [1], "phi_t": [{"u": {"maxaffine": [[1, -1]]}}]}}
        assert run(["check-global", write_doc(doc), "--point", "1"]) == EXIT_INPUT
        assert "sip" in capsys.readouterr().err

    def test_sip_command(self, write_doc, tmp_path):
        doc = {"sip": {"dim": 1, "objective": {"u": {"maxaffine": [[-1, 0]]}},
                       "index_points": [1, 2, 3],
                       "phi_t": [{"u": {"maxaffine": [[1, -t]]}} for t in (1, 2, 3)]}}
        out = tmp_path / "report.json"
        assert run(["sip", write_doc(doc), "--point", "1", "--out", str(out)]) == EXIT_OK
        assert read_json(out)["verdicts"]["sip_local"]["found"]

    def test_solve(self, abs_problem_doc, write_doc, tmp_path):
        out, trace = tmp_path / "report.json", tmp_path / "trace.csv"
        assert run(["solve", write_doc(abs_problem_doc), "--point", "3", "--out", str(out),
                    "--csv", str(trace)]) == EXIT_OK
        report = read_json(out)
        assert report["verdicts"]["solve"]["final"] == pytest.approx([1.0], abs=1e-6)
        assert report["verdicts"]["local_sufficient"]["verdict"] == "local_min"
        assert trace.exists()

    def test_oracle(self, abs_problem_doc, write_doc, tmp_path):
        out = tmp_path / "report.json"
        assert run(["oracle", write_doc(abs_problem_doc), "--box", "0", "4", "--grid-points", "401",
                    "--out", str(out)]) == EXIT_OK
        assert read_json(out)["verdicts"]["brute_min"]["value"] == pytest.approx(1.0)
