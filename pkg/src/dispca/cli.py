"""``dispca`` command line: ratio-versus-projection-dimension sweeps and the property suite."""

import argparse
import logging
import sys

from .exceptions import DisPcaError
from .experiments import ExperimentConfig, emit_results, run
from .datasets import FORMATS

log = logging.getLogger("dispca")


def _dims(text):
    try:
        dims = [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--dims expects a comma list of integers, got {text!r}") from None
    if not dims or any(t < 1 for t in dims):
        raise argparse.ArgumentTypeError("--dims needs at least one positive integer")
    return dims


def _add_task(sub, name, help_text, rank_flag, rank_default):
    p = sub.add_parser(name, help=help_text)
    p.add_argument("--data", help="dataset file; a synthetic stand-in is generated when omitted")
    p.add_argument("--format", choices=FORMATS, default="csv-dense")
    p.add_argument("--nodes", type=int, default=25, help="number of simulated nodes s")
    p.add_argument("--alpha", type=float, default=2.0, help="power-law exponent of the row partition")
    p.add_argument(rank_flag, dest="rank", type=int, default=rank_default)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--dims", type=_dims, default=[10, 20, 30, 40, 50], help="comma list of projection dims")
    p.add_argument("--backend", choices=("exact", "fast"), default="exact")
    p.add_argument("--reps", type=int, default=5, help="repetitions averaged for the fast backend")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output base path; writes <out>.json and <out>.csv")
    p.add_argument("--timeout", type=float, default=600.0, help="seconds before the sweep stops")
    p.add_argument("--ell", type=int, default=None, help="CountSketch rows per node (fast backend)")
    p.add_argument("--delta", type=float, default=None, help="booster failure probability (fast backend)")
    p.add_argument("--q", type=int, default=None, help="power iterations (fast backend)")
    p.add_argument("--rows", type=int, default=2000, help="synthetic rows")
    p.add_argument("--cols", type=int, default=50, help="synthetic columns")
    p.add_argument("--no-timing", action="store_true", help="record wall time as 0 for byte-identical output")
    if name == "kmeans":
        p.add_argument("--coreset-size", type=int, default=200)
    if name == "pcr":
        p.add_argument("--target-column", type=int, default=-1)
    return p


def build_parser():
    parser = argparse.ArgumentParser(prog="dispca", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_task(sub, "lowrank", "rank-r approximation ratio sweep", "--rank", 10)
    _add_task(sub, "kmeans", "distributed k-means ratio sweep", "--clusters", 10)
    _add_task(sub, "pcr", "principal component regression ratio sweep", "--rank", 10)
    v = sub.add_parser("verify", help="run the property suite on synthetic data")
    v.add_argument("--seed", type=int, default=0)
    return parser


def _config(args):
    return ExperimentConfig(
        task=args.command,
        dataset_path=args.data,
        fmt=args.format,
        s=args.nodes,
        alpha=args.alpha,
        rank=args.rank,
        eps=args.eps,
        projection_dims=args.dims,
        backend=args.backend,
        repetitions=args.reps,
        seed=args.seed,
        output_path=args.out,
        timeout=args.timeout,
        ell=args.ell,
        delta=args.delta,
        rsvd_q=args.q,
        coreset_size=getattr(args, "coreset_size", 200),
        record_time=not args.no_timing,
        synthetic_rows=args.rows,
        synthetic_cols=args.cols,
        target_column=getattr(args, "target_column", -1),
    )


def _verify(seed):
    from .verify import run_all

    results = run_all(seed)
    for r in results:
        print(r.line())
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 1 if failed else 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "verify":
        return _verify(args.seed)
    try:
        cfg = _config(args)
        report = {}
        rows = run(cfg, report=report)
        if not rows:
            print("error: timeout reached before any projection dim finished", file=sys.stderr)
            return 2
        paths = emit_results(rows, cfg.output_path, cfg, report.get("baseline"))
    except (DisPcaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for r in rows:
        print(f"t={r.projection_dim:<5d} ratio={r.ratio:.6f} words={r.comm_words} time_ms={r.wall_time_ms:.1f}")
    print("wrote " + ", ".join(paths))
    return 0


if __name__ == "__main__":
    sys.exit(main())
