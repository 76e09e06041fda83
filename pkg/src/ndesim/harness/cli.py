"""Command-line driver: ``ndesim <command> [--manifest M] [--out DIR] ...``."""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from .experiments import ExperimentOutput, run_experiment
from .manifest import KINDS, ExperimentManifest
from .svg import write_svg

THREADS_ENV = "NDESIM_THREADS"


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ndesim", description="Noisy-device-enhanced simulation experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        s = sub.add_parser(kind)
        s.add_argument("--manifest", type=Path, help="TOML manifest; defaults to the built-in desk-scale setup")
        s.add_argument("--out", type=Path, default=Path("results"), help="output directory (default: ./results)")
        s.add_argument("--seed", type=_u64, help="root seed, overrides the manifest")
        s.add_argument("--threads", type=int, default=_default_threads(), help=f"worker processes (default: ${THREADS_ENV} or 1)")
        s.add_argument("--plot", action="store_true", help="also write SVG figures")
    return p


def _json_default(o):
    if hasattr(o, "item"):
        return o.item()
    if hasattr(o, "tolist"):
        return o.tolist()
    raise TypeError(repr(o))


def write_outputs(out: ExperimentOutput, manifest: ExperimentManifest, outdir: Path, plot: bool) -> list[Path]:
    outdir.mkdir(parents=True, exist_ok=True)
    written = [t.write(outdir / f"{manifest.kind}_{name}.csv") for name, t in out.tables.items()]
    meta = {"manifest": manifest.to_dict(), "manifest_hash": manifest.hash, "root_seed": manifest.seed, "summary": out.summary, "passed": out.passed}
    path = outdir / f"{manifest.kind}_summary.json"
    path.write_text(json.dumps(meta, indent=2, default=_json_default) + "\n")
    written.append(path)
    if plot:
        written.extend(write_svg(outdir / f"{name}.svg", s) for name, s in out.figures.items())
    return written


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    kind = args.command
    m = ExperimentManifest.load(args.manifest, kind) if args.manifest else ExperimentManifest.default(kind)
    if args.seed is not None:
        m = m.with_seed(args.seed)
    t0 = time.perf_counter()
    out = run_experiment(m, max(1, args.threads))
    files = write_outputs(out, m, args.out, args.plot)
    if kind == "verify":
        for c in out.summary["checks"]:
            print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']} worst={c['worst']:.3e} tol={c['tolerance']:.0e}")
    print(f"{kind}: manifest {m.hash} seed {m.seed} in {time.perf_counter() - t0:.1f}s")
    for f in files:
        print(f"  wrote {f}")
    if not out.passed:
        print(f"failed: {', '.join(out.summary.get('failed', []))}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
