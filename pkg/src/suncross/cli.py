"""Command-line entry point.

    suncross <command> [--config PATH] [--out DIR] [--seed N] [--threads K]

Commands: spectrum, trichotomy, admissibility, simulate, center-manifold,
verify, and run (every analysis listed in the config, in dependency order).
Exit codes: 0 pass, 2 configuration error, 3 analysis error, 4 failed checks.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .config import ANALYSES, ORDER, ScenarioConfig, bundled, load
from .errors import AnalysisError, ConfigError

EXIT_OK, EXIT_CONFIG, EXIT_ANALYSIS, EXIT_SUITE = 0, 2, 3, 4

log = logging.getLogger("suncross")


def _setup_logging():
    level = os.environ.get("SUNCROSS_LOG", "WARNING").upper()
    if level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
        level = "WARNING"
    logging.basicConfig(level=getattr(logging, level), format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)


def build_parser():
    p = argparse.ArgumentParser(prog="suncross", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"suncross {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("run",) + ANALYSES:
        s = sub.add_parser(name)
        s.add_argument("--config", help="scenario JSON (bundled names such as hayes.json are accepted)")
        s.add_argument("--out", default="suncross-out", help="output directory (default: %(default)s)")
        s.add_argument("--seed", type=int, help="override the config seed")
        s.add_argument("--threads", type=int, default=1, help="worker threads for manifold sampling")
        s.add_argument("--no-plots", action="store_true", help="skip PNG rendering")
        if name == "verify":
            s.add_argument("--level", choices=("quick", "full"), help="override the config level")
    return p


def _resolve_config(arg, command) -> ScenarioConfig:
    if arg is None:
        if command == "verify":
            return load(bundled("verify.json"))
        raise ConfigError(f"'{command}' needs --config")
    path = Path(arg)
    if not path.exists() and not path.is_absolute() and path.parent == Path("."):
        path = bundled(arg)
    return load(path)


def execute(args) -> int:
    from . import pipeline, plotting
    from .report import REPORT_SCHEMA_VERSION, checks_summary, write_csv, write_json

    cfg = _resolve_config(args.config, args.command)
    if args.threads < 1:
        raise ConfigError("--threads must be at least 1")
    seed = cfg.seed if args.seed is None else args.seed
    if seed < 0:
        raise ConfigError("--seed must be non-negative")
    if args.command == "run":
        todo = [a for a in ORDER if a in cfg.analyses]
    else:
        todo = [args.command]
    if "center-manifold" in todo and cfg.nonlinear is None:
        raise ConfigError("center-manifold needs system.nonlinearity in the config")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ctx = pipeline.Context(cfg, seed, args.threads)
    report = {"schema_version": REPORT_SCHEMA_VERSION, "name": cfg.name, "command": args.command,
              "seed": seed, "config": cfg.raw, "analyses": {}}
    timings = {"schema_version": REPORT_SCHEMA_VERSION, "seconds": {}, "runtime_checks": []}
    all_checks, tables, error = [], {}, None
    for name in todo:
        try:
            kw = {"level": args.level} if name == "verify" else {}
            res = pipeline.run_analysis(name, ctx, **kw)
        except AnalysisError as e:
            error = {"module": name, "type": type(e).__name__, "message": str(e)}
            log.error("%s failed: %s", name, e)
            break
        report["analyses"][name] = res.section
        all_checks += res.checks
        tables.update(res.tables)
        timings["seconds"][name] = res.seconds
        timings["runtime_checks"] += getattr(res, "runtime", [])
        for line in getattr(res, "lines", []):
            print(line)
    runtime = timings["runtime_checks"]
    report["summary"] = {"checks": len(all_checks), "failed": checks_summary(all_checks + runtime)}
    if error:
        report["error"] = error
    for rel, (header, rows) in sorted(tables.items()):
        write_csv(out / rel, header, rows)
    write_json(out / "report.json", report)
    write_json(out / "timings.json", timings)
    if not args.no_plots and tables:
        plotting.render(tables, out)
    for c in all_checks + runtime:
        if not c.passed:
            print(c.line(), file=sys.stderr)
    if error:
        print(f"analysis error in {error['module']}: {error['type']}: {error['message']}", file=sys.stderr)
        return EXIT_ANALYSIS
    if not report["summary"]["failed"].passed:
        return EXIT_SUITE
    print(f"{args.command}: {len(all_checks) + len(runtime)} checks passed; output in {out}")
    return EXIT_OK


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return execute(args)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except AnalysisError as e:
        print(f"analysis error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_ANALYSIS


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
