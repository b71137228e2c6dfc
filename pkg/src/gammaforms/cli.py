"""Batch entry point.

    gammaforms verify laplace --seed 7 --n 100000
    gammaforms --suite forms,besq --shards 4 --out results/
    gammaforms verify all --config run.cfg

Writes ``report.json`` (array of verdict objects), ``run.json`` (resolved
configuration, timestamp, notes), ``verdicts.csv`` and one CSV per table a
suite produces.  Exit status: 0 when every verdict passes, 1 when any fails
or a suite raises, 2 on an invalid configuration.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import sys
import traceback
from pathlib import Path

from .suites import SUITE_NAMES, ConfigError, RunConfig, run_suite
from .verdicts import IdentityVerdict

VERDICT_HEADER = ("suite", "identity", "case", "kind", "c", "n", "lhs", "rhs", "se", "tolerance", "sigma_distance",
                  "pass")
_INT_KEYS = {"seed", "shards", "n", "dim", "quad_degree", "workers"}
_FLOAT_KEYS = {"eps"}
_STR_KEYS = {"coeff", "out"}


def parse_config_file(path) -> dict:
    """Flat ``key = value`` text; ``#`` starts a comment.  ``suite`` takes a comma list."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        key = key.replace("-", "_")
        if key in ("suite", "suites"):
            out["suites"] = _split_suites(value)
        elif key in _INT_KEYS:
            out[key] = _convert(int, key, value, path, lineno)
        elif key in _FLOAT_KEYS:
            out[key] = _convert(float, key, value, path, lineno)
        elif key in _STR_KEYS:
            out[key] = value
        else:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
    return out


def _convert(kind, key, value, path, lineno):
    try:
        return kind(value)
    except ValueError:
        raise ConfigError(f"{path}:{lineno}: {key} must be {kind.__name__}, got {value!r}") from None


def _split_suites(text) -> list:
    names = [s.strip() for s in text.split(",") if s.strip()]
    if "all" in names:
        return list(SUITE_NAMES)
    return names


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gammaforms", description="Run verification suites and write reports.")
    p.add_argument("words", nargs="*", metavar="verify SUITE",
                   help=f"'verify' followed by suite names ({', '.join(SUITE_NAMES)}, or all)")
    p.add_argument("--suite", action="append", help="suite name or comma list (repeatable)")
    p.add_argument("--seed", type=int)
    p.add_argument("--shards", type=int)
    p.add_argument("--n", type=int, help="Monte Carlo samples per identity")
    p.add_argument("--eps", type=float, help="mass floor of the gamma sampler")
    p.add_argument("--coeff", help="mass coefficient: one | s | s2 | cubic:a1,a2,a3 (default: sweep all)")
    p.add_argument("--dim", type=int, help="spatial dimension for the measure-level suites")
    p.add_argument("--quad-degree", dest="quad_degree", type=int)
    p.add_argument("--workers", type=int, help="threads per sharded estimate")
    p.add_argument("--out", help="output directory")
    p.add_argument("--config", help="flat key=value config file; flags override its keys")
    return p


def resolve_config(args) -> RunConfig:
    values = parse_config_file(args.config) if args.config else {}
    words = list(args.words)
    if words:
        if words[0] != "verify":
            raise ConfigError(f"unknown command {words[0]!r}; use 'verify SUITE' or --suite")
        if len(words) == 1:
            raise ConfigError("'verify' needs at least one suite name")
    suites = []
    for w in words[1:]:
        suites += _split_suites(w)
    for s in args.suite or ():
        suites += _split_suites(s)
    if suites:
        values["suites"] = suites
    for key in ("seed", "shards", "n", "eps", "coeff", "dim", "quad_degree", "workers", "out"):
        v = getattr(args, key)
        if v is not None:
            values[key] = v
    # a suite listed twice runs once
    values["suites"] = tuple(dict.fromkeys(values.get("suites", ())))
    return RunConfig(**values).validate()


def verdicts_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(VERDICT_HEADER)
    for r in rows:
        d = r.get("details") or {}
        writer.writerow([d.get("suite", ""), r["identity"], d.get("case", ""), r.get("kind") or "", r.get("c") or "",
                         r.get("n") if r.get("n") is not None else "",
                         *(_num(r.get(k)) for k in ("lhs", "rhs", "se", "tolerance", "sigma_distance")),
                         int(bool(r["pass"]))])
    return buf.getvalue()


def _num(v):
    return "" if v is None else f"{v:.17g}"


def table_csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([f"{v:.17g}" if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def emit_plot_data(report: list, tables: dict, out: Path) -> list:
    """Write ``verdicts.csv`` (header only for an empty report) and each table as ``<name>.csv``."""
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "verdicts.csv"]
    written[0].write_text(verdicts_csv(report))
    for name, (header, rows) in tables.items():
        path = out / f"{name}.csv"
        path.write_text(table_csv(header, rows))
        written.append(path)
    return written


def _error_verdict(suite: str, exc: BaseException) -> IdentityVerdict:
    return IdentityVerdict("suite_error", float("nan"), float("nan"), 0.0, 0.0, False, rule="error",
                           details={"suite": suite, "error": f"{type(exc).__name__}: {exc}"})


def run(cfg: RunConfig, log=sys.stderr) -> int:
    out = Path(cfg.out)
    report, tables, notes = [], {}, {}
    for name in cfg.suites:
        try:
            res = run_suite(name, cfg)
        except (KeyboardInterrupt, SystemExit):
            raise
        except Exception as exc:  # recorded as a failing verdict, the run continues
            traceback.print_exc(file=log)
            report.append(_error_verdict(name, exc).to_json())
            continue
        report += [v.to_json() for v in res.verdicts]
        tables.update(res.tables)
        if res.notes:
            notes[name] = res.notes
        failed = sum(not v.passed for v in res.verdicts)
        print(f"{name}: {len(res.verdicts) - failed}/{len(res.verdicts)} pass", file=log)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    meta = {"config": cfg.to_dict(), "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(), "notes": notes}
    (out / "run.json").write_text(json.dumps(meta, indent=2) + "\n")
    emit_plot_data(report, tables, out)
    return 0 if all(r["pass"] for r in report) else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
    except (ConfigError, TypeError) as exc:
        print(f"gammaforms: invalid configuration: {exc}", file=sys.stderr)
        return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
