"""``lab``: run scenarios, verify run directories, print the soliton gallery, compare finite spaces.

Exit codes: 0 success, 1 a verification verdict failed, 2 usage or input
error, 3 numerical breakdown.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import os
import sys
import traceback
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .artifacts import (
    MANIFEST,
    MissingArtifact,
    atomic_write,
    csv_text,
    load_trace,
    read_csv,
    read_json,
    sha256,
    write_csv,
    write_json,
    write_trace,
)
from .flow import run
from .geometry import NumericalBreakdown
from .metric_spaces import BRUTE_FORCE_LIMIT, FiniteMetricSpace, gh_bounds, pointed_gh_brute_force
from .pipeline import (
    DYADIC_COLUMNS,
    LEDGER_COLUMNS,
    analyze,
    dyadic_rows,
    functional_rows,
    ledger_rows,
    verify_trace,
)
from .plotting import plot_script, render_profiles, render_rates
from .scenarios import ScenarioError, describe_keys, parse_scenario, scenario_from_mapping, scenario_to_mapping
from .verification import soliton_gallery

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_BREAKDOWN = 0, 1, 2, 3
OUTPUT_ENV = "LAB_OUTPUT_DIR"
DEFAULT_OUTPUT = "lab_output"
MANIFEST_SCHEMA = "riccilab-manifest/1"
# written by `lab run`, in writing order; the manifest comes last
RUN_ARTIFACTS = ("trace.csv", "profiles.csv", "functionals.csv", "dyadic.csv", "ledger.csv",
                 "gap_report.json", "plot_rates.py", "rates.png", "profiles.png")


class InputError(Exception):
    pass


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _write_manifest(run_dir: Path, source: Path, sc, trace, started: str, written) -> None:
    manifest = {
        "schema": MANIFEST_SCHEMA,
        "tool": "riccilab",
        "version": __version__,
        "scenario_source": str(source.resolve()),
        "parameters": scenario_to_mapping(sc),
        "status": trace.status,
        "message": trace.message,
        "steps": trace.steps,
        "snapshots": len(trace),
        "timestamps": {"started": started, "finished": _now()},
        "artifacts": {name: {"path": name, "sha256": sha256(run_dir / name)} for name in written},
    }
    write_json(run_dir / MANIFEST, manifest)


def cmd_run(scenario_path, name: str | None = None) -> int:
    source = Path(scenario_path)
    sc = parse_scenario(source)
    run_dir = output_root() / (name or source.stem)
    run_dir.mkdir(parents=True, exist_ok=True)
    # a stale manifest must not vouch for a half-rewritten directory
    (run_dir / MANIFEST).unlink(missing_ok=True)
    started = _now()
    trace = run(sc)
    written = []
    if trace.status == "breakdown":
        write_trace(run_dir, trace)
        written += ["trace.csv", "profiles.csv"]
        _write_manifest(run_dir, source, sc, trace, started, written)
        print(f"numerical breakdown at t = {trace.times[-1]:.8g}: {trace.message}", file=sys.stderr)
        print(f"partial artifacts in {run_dir}")
        return EXIT_BREAKDOWN
    a = analyze(trace)
    kappa = {int(k): float(v) for k, v in zip(a.kappa.index, a.kappa.kappa)}
    write_trace(run_dir, trace, kappa)
    header, rows = functional_rows(a)
    write_csv(run_dir / "functionals.csv", header, rows)
    write_csv(run_dir / "dyadic.csv", DYADIC_COLUMNS, dyadic_rows(a.decomposition))
    write_csv(run_dir / "ledger.csv", LEDGER_COLUMNS, ledger_rows(a.ledger))
    atomic_write(run_dir / "gap_report.json", a.report.to_json() + "\n")
    atomic_write(run_dir / "plot_rates.py", plot_script())
    render_rates(run_dir)
    render_profiles(trace, run_dir / "profiles.png")
    _write_manifest(run_dir, source, sc, trace, started, RUN_ARTIFACTS)
    _print_run_summary(run_dir, a)
    return EXIT_OK


def _print_run_summary(run_dir: Path, a) -> None:
    tr = a.trace
    print(f"run: {run_dir}")
    print(f"  status {tr.status}, {tr.steps} steps, {len(tr)} snapshots, t_end = {tr.times[-1]:.10g}")
    if a.fit is not None:
        print(f"  T_hat = {a.fit.T_hat:.10g} (fit residual {a.fit.residual:.3g})")
    print(f"  dyadic levels {len(a.decomposition)}, epsilon_hat = {a.decomposition.epsilon_hat:.6g}")
    for e in a.report.entries:
        value = "-" if e.value is None else f"{e.value:.6g}"
        print(f"  {e.name:<26}{e.verdict:<10}{value}")


def cmd_verify(run_dir) -> int:
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise MissingArtifact(f"run directory {run_dir} does not exist")
    manifest = read_json(run_dir / MANIFEST)
    digests = {}
    for name, entry in manifest.get("artifacts", {}).items():
        path = run_dir / entry["path"]
        if not path.is_file():
            raise MissingArtifact(f"missing artifact {path}")
        digests[name] = sha256(path) == entry["sha256"]
    sc = scenario_from_mapping(manifest["parameters"])
    trace = load_trace(run_dir, sc.n, sc, manifest.get("status", "completed"))
    report = verify_trace(trace)
    report["checks"]["digests"] = {
        "verdict": "pass" if all(digests.values()) else "fail",
        "mismatched": sorted(k for k, ok in digests.items() if not ok)}
    report["hard_fail"] = any(c["verdict"] == "fail" for c in report["checks"].values())
    report["run_dir"] = str(run_dir.resolve())
    report["version"] = __version__
    write_json(run_dir / "verify_report.json", report)
    for name, c in report["checks"].items():
        print(f"{name:<20}{c['verdict']}")
    print(f"report: {run_dir / 'verify_report.json'}")
    return EXIT_FAIL if report["hard_fail"] else EXIT_OK


GALLERY_COLUMNS = ("name", "dimension", "radius_sq", "sup_rm", "sup_ric", "sup_r", "gap")


def cmd_gallery() -> int:
    entries = soliton_gallery()
    root = output_root()
    root.mkdir(parents=True, exist_ok=True)
    rows = [(e.name, e.dimension, np.nan if e.radius_sq is None else e.radius_sq,
             e.sup_rm, e.sup_ric, e.sup_r, e.gap) for e in entries]
    atomic_write(root / "gallery.csv", csv_text(GALLERY_COLUMNS, rows))
    write_json(root / "gallery.json", [asdict(e) for e in entries])
    print(f"{'soliton':<16}{'n':>3}{'r^2':>8}{'|Rm|':>12}{'|Ric|':>12}{'R':>12}{'gap':>20}")
    for e in entries:
        r2 = "-" if e.radius_sq is None else f"{e.radius_sq:g}"
        print(f"{e.name:<16}{e.dimension:>3}{r2:>8}{e.sup_rm:>12.6f}{e.sup_ric:>12.6f}"
              f"{e.sup_r:>12.6f}{e.gap!r:>20}")
    print(f"written: {root / 'gallery.csv'}, {root / 'gallery.json'}")
    return EXIT_OK


def read_space(path) -> FiniteMetricSpace:
    """Square distance matrix from CSV; a non-numeric first row is taken as labels."""
    header, rows = read_csv(path)
    try:
        first = [float(v) for v in header]
        labels, data = (), [first] + [[float(v) for v in r] for r in rows]
    except ValueError:
        labels = tuple(header)
        try:
            data = [[float(v) for v in r] for r in rows]
        except ValueError as exc:
            raise InputError(f"{path}: non-numeric distance entry ({exc})") from None
    try:
        return FiniteMetricSpace(np.array(data, dtype=float), 0, labels)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None


def cmd_gh(path_a, path_b) -> int:
    X, Y = read_space(path_a), read_space(path_b)
    lower, upper = gh_bounds(X, Y)
    small = len(X) <= BRUTE_FORCE_LIMIT and len(Y) <= BRUTE_FORCE_LIMIT
    out = {"sizes": [len(X), len(Y)], "exact": small, "gh_lower": lower, "gh_upper": upper}
    if small:
        out["gh"] = lower
        out["pointed_gh"] = pointed_gh_brute_force(X, Y)
    print(json.dumps(out, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="lab", description=__doc__.split("\n")[0],
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=f"output root: ${OUTPUT_ENV} (default ./{DEFAULT_OUTPUT})\n"
               "exit codes: 0 ok, 1 verification failure, 2 usage/input error, 3 numerical breakdown")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="integrate a scenario and write its artifacts",
                       formatter_class=argparse.RawDescriptionHelpFormatter, epilog=describe_keys())
    r.add_argument("scenario", help="scenario YAML file")
    r.add_argument("--name", help="run directory name under the output root (default: file stem)")
    v = sub.add_parser("verify", help="re-check the artifacts of a run directory")
    v.add_argument("run_dir")
    sub.add_parser("gallery", help="curvature gap of closed-form shrinking solitons")
    g = sub.add_parser("gh", help="Gromov-Hausdorff distance of two finite spaces",
                       epilog="each CSV is a square distance matrix, optionally with a label row; "
                              "the first point is the base point")
    g.add_argument("space_a")
    g.add_argument("space_b")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args.scenario, args.name)
        if args.command == "verify":
            return cmd_verify(args.run_dir)
        if args.command == "gallery":
            return cmd_gallery()
        return cmd_gh(args.space_a, args.space_b)
    except NumericalBreakdown as exc:
        print(f"lab: numerical breakdown: {exc}", file=sys.stderr)
        return EXIT_BREAKDOWN
    except (ScenarioError, InputError, MissingArtifact) as exc:
        print(f"lab: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (OSError, ValueError, KeyError) as exc:
        print(f"lab: invalid input: {exc!r}", file=sys.stderr)
        return EXIT_INPUT
    except ArithmeticError as exc:
        print(f"lab: numerical failure: {exc!r}", file=sys.stderr)
        return EXIT_BREAKDOWN
    except Exception:  # keep the exit-code contract even on bugs
        traceback.print_exc()
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
