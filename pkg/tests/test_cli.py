import csv
import json
import subprocess
import sys

import pytest

from gammaforms import cli
from gammaforms.suites import SuiteResult
from gammaforms.verdicts import IdentityVerdict


def _read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def _strip_runtime(report):
    return [{k: v for k, v in r.items() if k != "runtime_ms"} for r in report]


def test_passing_run_writes_outputs(tmp_path):
    out = tmp_path / "o"
    code = cli.main(["verify", "moments", "--n", "5000", "--seed", "3", "--out", str(out)])
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert len(report) == 4 and all(r["pass"] for r in report)
    assert {"identity", "lhs", "rhs", "se", "tolerance", "pass", "kind", "c", "n", "seed", "runtime_ms"} <= set(report[0])
    meta = json.loads((out / "run.json").read_text())
    assert meta["config"]["seed"] == 3 and "timestamp" in meta
    rows = _read_csv(out / "verdicts.csv")
    assert tuple(rows[0]) == cli.VERDICT_HEADER and len(rows) == 5 and rows[1][0] == "moments"


@pytest.mark.parametrize("argv", [
    ["verify", "nonsense"],
    ["verify"],
    ["run", "moments"],
    ["--suite", "moments", "--n", "0"],
    ["--suite", "moments", "--shards", "0"],
    ["--suite", "moments", "--eps", "0.1"],
    ["--suite", "moments", "--dim", "4"],
    ["--suite", "moments", "--coeff", "quartic"],
    [],
])
def test_invalid_configurations_exit_2(argv, tmp_path):
    assert cli.main(argv + ["--out", str(tmp_path)]) == 2


def test_failing_suite_exits_1(tmp_path, monkeypatch):
    def boom(name, cfg):
        raise RuntimeError("broken suite")
    monkeypatch.setattr(cli, "run_suite", boom)
    assert cli.main(["--suite", "moments", "--out", str(tmp_path)]) == 1
    report = json.loads((tmp_path / "report.json").read_text())
    assert report[0]["identity"] == "suite_error" and not report[0]["pass"]
    assert "broken suite" in report[0]["details"]["error"]


def test_failed_verdict_exits_1(tmp_path, monkeypatch):
    bad = IdentityVerdict("x", 1.0, 0.0, 0.1, 0.0, False)
    monkeypatch.setattr(cli, "run_suite", lambda name, cfg: SuiteResult([bad]))
    assert cli.main(["--suite", "moments", "--out", str(tmp_path)]) == 1


def test_empty_report_gives_header_only_csv(tmp_path, monkeypatch):
    monkeypatch.setattr(cli, "run_suite", lambda name, cfg: SuiteResult())
    assert cli.main(["--suite", "moments", "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "report.json").read_text()) == []
    assert _read_csv(tmp_path / "verdicts.csv") == [list(cli.VERDICT_HEADER)]


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# a run\nsuite = moments, gamma-marginal\nn = 2000\nseed = 5  # trailing comment\n")
    args = cli.build_parser().parse_args(["--config", str(cfg), "--seed", "9", "--suite", "moments"])
    rc = cli.resolve_config(args)
    assert rc.seed == 9 and rc.n == 2000 and rc.suites == ("moments",)
    rc = cli.resolve_config(cli.build_parser().parse_args(["--config", str(cfg)]))
    assert rc.suites == ("moments", "gamma-marginal") and rc.seed == 5


def test_config_file_errors(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = blue\n")
    assert cli.main(["--config", str(bad)]) == 2
    bad.write_text("n = many\n")
    assert cli.main(["--config", str(bad)]) == 2
    assert cli.main(["--config", str(tmp_path / "missing.cfg")]) == 2


def test_all_expands_and_duplicates_collapse():
    rc = cli.resolve_config(cli.build_parser().parse_args(["verify", "all", "--suite", "besq"]))
    assert len(rc.suites) == 9 and len(set(rc.suites)) == 9


def test_determinism_across_reruns_and_threads(tmp_path):
    args = ["verify", "moments", "gamma-marginal", "--n", "3000", "--shards", "3", "--seed", "11"]
    cli.main(args + ["--out", str(tmp_path / "a")])
    cli.main(args + ["--workers", "3", "--out", str(tmp_path / "b")])
    a = json.loads((tmp_path / "a" / "report.json").read_text())
    b = json.loads((tmp_path / "b" / "report.json").read_text())
    assert _strip_runtime(a) == _strip_runtime(b)


def test_refinement_table(tmp_path):
    assert cli.main(["verify", "one-particle", "--out", str(tmp_path)]) == 0
    rows = _read_csv(tmp_path / "refinement.csv")
    assert rows[0] == ["nodes", "spacing", "index", "value", "order"]
    spacing = [float(r[1]) for r in rows[1:]]
    assert all(b <= a for a, b in zip(spacing, spacing[1:]))


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "gammaforms", "verify", "gamma-marginal", "--n", "2000",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0 and "gamma-marginal: 1/1 pass" in proc.stderr
