"""
Command-line front end.

    mcrank approximate --input A.csv --format csv --k 10 [...]
    mcrank svd         --input A.csv --format csv [--top 5] [--out svd.json]
    mcrank compare     --input A.csv --format csv --k 10 --seeds 1..10
    mcrank bench       --input A.csv --format csv --k 10 --target-ratio 2

Exit codes: 0 success, 2 bad flags, 3 I/O or file-format error, 4 numerical
failure, 5 matrix too large for the exact SVD.
"""

from __future__ import annotations

import argparse
import json
import statistics
import sys

from . import io as mio
from .bench import bench, optimum_relative_error, re_ratio
from .engine import Config, NumericalError, run, triplet_estimates
from .linalg import ORACLE_MAX_DIM, ConvergenceError, OracleTooLarge, svd_oracle
from .sampling import Sampler, weights_from_gradient_image, weights_from_row_norms

EXIT_FLAGS, EXIT_IO, EXIT_NUMERIC, EXIT_TOO_LARGE = 2, 3, 4, 5

SAMPLERS = ("uniform-wr", "uniform-wor", "weighted-norms", "weighted-gradient")
ORIENT = {"cols": "columns", "rows": "rows", "auto": "auto"}
STRATEGY = {"gram": "gram_eig", "svd": "small_svd"}


class FlagError(Exception):
    pass


def _log(msg: str):
    print(msg, file=sys.stderr)


def _add_input(p):
    p.add_argument("--input", required=True, help="matrix file")
    p.add_argument("--format", required=True, choices=("csv", "mm", "pgm"))


def _add_run(p, iters=20, epsilon=1e-3):
    p.add_argument("--k", type=int, required=True, help="target rank")
    p.add_argument("--l", type=int, help="columns read per iteration (default k)")
    p.add_argument("--iters", type=int, default=iters, help="maximum iterations N")
    p.add_argument("--epsilon", type=float, default=epsilon, help="stopping threshold")
    p.add_argument("--sampler", choices=SAMPLERS, default="uniform-wor")
    p.add_argument("--orientation", choices=tuple(ORIENT), default="auto")
    p.add_argument("--strategy", choices=tuple(STRATEGY), default="gram")
    p.add_argument("--threads", type=int, default=1, help="workers for A^T X")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcrank", description="Monte-Carlo rank-k approximation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("approximate", help="run the iterative approximation")
    _add_input(p)
    _add_run(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trace")
    p.add_argument("--trace-format", choices=("json", "csv"), default="json")
    p.add_argument("--timing", action="store_true", help="include wall times in the trace")
    p.add_argument("--factors-out")
    p.add_argument("--triplets-out")

    p = sub.add_parser("svd", help="exact SVD (desk-scale oracle)")
    _add_input(p)
    p.add_argument("--top", type=int)
    p.add_argument("--out")
    p.add_argument("--rank-tol", type=float, default=1e-10)
    p.add_argument("--max-dim", type=int, default=ORACLE_MAX_DIM)

    p = sub.add_parser("compare", help="achieved vs optimum relative error")
    _add_input(p)
    _add_run(p)
    seeds = p.add_mutually_exclusive_group()
    seeds.add_argument("--seed", type=int, default=0)
    seeds.add_argument("--seeds", help="'a..b' (inclusive) or comma list")

    p = sub.add_parser("bench", help="timing and Re. ratio against the oracle")
    _add_input(p)
    _add_run(p, epsilon=1e-9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--target-ratio", type=float, default=2.0)
    p.add_argument("--label")
    p.add_argument("--report", help="write the report as JSON")
    return parser


def _parse_seeds(text: str) -> list[int]:
    try:
        if ".." in text:
            a, b = text.split("..")
            seeds = list(range(int(a), int(b) + 1))
        else:
            seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise FlagError(f"cannot parse --seeds {text!r}") from None
    if not seeds:
        raise FlagError("--seeds is empty")
    return seeds


def _config(args, A, seed) -> Config:
    m, n = A.shape
    if args.k < 1 or args.k > min(m, n):
        raise FlagError(f"--k must satisfy 1 <= k <= min(m, n) = {min(m, n)}, got {args.k}")
    try:
        return Config(
            k=args.k,
            l=args.l,
            max_iterations=args.iters,
            epsilon=args.epsilon,
            seed=seed,
            orientation=ORIENT[args.orientation],
            strategy=STRATEGY[args.strategy],
            workers=max(1, args.threads),
        )
    except ValueError as exc:
        raise FlagError(str(exc)) from None


def _sampler(args, A, cfg: Config, seed: int) -> Sampler:
    axis = "rows" if cfg.resolve_orientation(A.shape) == "rows" else "columns"
    if args.sampler == "weighted-norms":
        return Sampler("weighted", seed, weights=weights_from_row_norms(A, axis))
    if args.sampler == "weighted-gradient":
        try:
            w = weights_from_gradient_image(A, axis)
        except ValueError as exc:
            raise FlagError(str(exc)) from None
        return Sampler("weighted", seed, weights=w)
    return Sampler(args.sampler, seed)


def cmd_approximate(args) -> int:
    A = mio.read_matrix(args.input, args.format)
    cfg = _config(args, A, args.seed)
    sampler = _sampler(args, A, cfg, args.seed)

    def progress(rec):
        _log(f"iter {rec.t:3d}  rel.err {rec.relative_error:.6e}  "
             f"||B||^2 {rec.norm_b_sq:.6e}  read {rec.samples_total}")

    state, trace = run(A, cfg, sampler, on_record=progress)
    last = trace.records[-1]
    print(f"relative_error {last.relative_error:.17g}")
    print(f"norm_b_sq {last.norm_b_sq:.17g}")
    print(f"iterations {last.t}")
    print(f"ratio_initial {last.ratio_to_initial:.17g}")
    print(f"ratio_last {last.improvement_ratio:.17g}")
    if args.trace:
        mio.write_trace(trace, args.trace, args.trace_format, include_timing=args.timing)
    if args.factors_out:
        mio.write_factors(state, args.factors_out)
    if args.triplets_out:
        est = triplet_estimates(state)
        mio.write_triplets(args.triplets_out, est.sigma, est.u, est.v, est.degenerate)
    return 0


def cmd_svd(args) -> int:
    A = mio.read_matrix(args.input, args.format)
    res = svd_oracle(A, rank_tol=args.rank_tol, max_dim=args.max_dim)
    top = res.rank if args.top is None else min(args.top, res.rank)
    print(f"rank {res.rank}")
    for s in res.singular_values[:top]:
        print(f"{s:.17g}")
    if args.out:
        mio.write_triplets(args.out, res.singular_values[:top],
                           res.left_vectors[:, :top], res.right_vectors[:, :top])
    return 0


def cmd_compare(args) -> int:
    A = mio.read_matrix(args.input, args.format)
    seeds = _parse_seeds(args.seeds) if args.seeds else [args.seed]
    _config(args, A, seeds[0])
    opt = optimum_relative_error(A, args.k)
    ratios = []
    for seed in seeds:
        cfg = _config(args, A, seed)
        _, trace = run(A, cfg, _sampler(args, A, cfg, seed), optimum_relative_error=opt)
        achieved = trace.records[-1].relative_error
        ratio = re_ratio(achieved, opt)
        ratios.append(ratio)
        print(f"seed {seed}  achieved {achieved:.10g}  optimum {opt:.10g}  "
              f"ratio {ratio:.10g}  iterations {trace.records[-1].t}")
    if len(seeds) > 1:
        print(f"ratio mean {statistics.fmean(ratios):.10g}  min {min(ratios):.10g}  "
              f"max {max(ratios):.10g}")
    return 0


def cmd_bench(args) -> int:
    A = mio.read_matrix(args.input, args.format)
    cfg = _config(args, A, args.seed)
    report = bench(A, cfg, _sampler(args, A, cfg, args.seed),
                   target_ratio=args.target_ratio, label=args.label or args.input)
    print(report.table())
    doc = json.dumps(report.to_dict(), indent=1) + "\n"
    if args.report:
        mio._atomic_write(args.report, doc)
    else:
        print(doc, end="")
    return 0


COMMANDS = {
    "approximate": cmd_approximate,
    "svd": cmd_svd,
    "compare": cmd_compare,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except FlagError as exc:
        _log(f"mcrank: error: {exc}")
        return EXIT_FLAGS
    except OracleTooLarge as exc:
        _log(f"mcrank: {exc}")
        return EXIT_TOO_LARGE
    except (OSError, mio.FormatError) as exc:
        _log(f"mcrank: I/O error: {exc}")
        return EXIT_IO
    except (NumericalError, ConvergenceError, FloatingPointError) as exc:
        _log(f"mcrank: numerical failure: {exc}")
        return EXIT_NUMERIC
    except ValueError as exc:
        _log(f"mcrank: error: {exc}")
        return EXIT_FLAGS


if __name__ == "__main__":
    sys.exit(main())
