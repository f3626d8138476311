"""Command-line entry point.

Subcommands::

    schrolab run <spec.json> [--out DIR] [--jobs N]
    schrolab validate <spec.json>
    schrolab plot-data <report.json> [--index I] [--out FILE]

Exit status: 0 when every verdict passes, 1 when any experiment fails or
errors, 2 for an invalid experiment file or unusable report.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .experiments import SpecError, emit_plotdata, load_spec, run

EXIT_OK, EXIT_FAIL, EXIT_INVALID = 0, 1, 2


def _cmd_run(args) -> int:
    spec = load_spec(args.spec)
    out = args.out
    if out is None and "output_dir" in spec:
        out = Path(args.spec).resolve().parent / spec["output_dir"]
    manifest = run(spec, out_dir=out, jobs=args.jobs, spec_path=str(args.spec))
    width = max(len(e["name"]) for e in manifest["experiments"])
    for e in manifest["experiments"]:
        status = "PASS" if e["verdict"] else "FAIL"
        tail = f"  ({e['error']})" if "error" in e else ""
        print(f"{status}  {e['name']:<{width}}  {e['kind']:<16} {e['wall_time_s']:8.2f}s{tail}")
    print(f"manifest: {Path(out or spec.get('output_dir', 'schrolab-out')) / 'manifest.json'}")
    return EXIT_OK if manifest["all_passed"] else EXIT_FAIL


def _cmd_validate(args) -> int:
    spec = load_spec(args.spec)
    print(f"{args.spec}: valid ({len(spec['experiments'])} experiments)")
    return EXIT_OK


def _cmd_plot(args) -> int:
    path = emit_plotdata(args.report, args.out, args.index)
    print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="schrolab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"schrolab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run every experiment in a JSON spec")
    r.add_argument("spec")
    r.add_argument("--out", help="output directory (overrides the spec's output_dir)")
    r.add_argument("--jobs", type=int, default=1, help="parallel experiment workers")
    r.set_defaults(fn=_cmd_run)
    v = sub.add_parser("validate", help="check a spec against the experiment schemas")
    v.add_argument("spec")
    v.set_defaults(fn=_cmd_validate)
    d = sub.add_parser("plot-data", help="export double-well eigenfunctions from a report as CSV")
    d.add_argument("report")
    d.add_argument("--index", type=int, default=0, help="which stored encoding to export")
    d.add_argument("--out", help="output CSV path")
    d.set_defaults(fn=_cmd_plot)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (SpecError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
