"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import os
import sys
from typing import Sequence

import numpy as np

from . import __version__
from .errors import DataFormatError, NumericalError
from .evaluation import BoundInputs, complexity_bound, confusion_matrix, hungarian_min_assignment
from .imaging import DenoiseConfig, denoise, extract_patches, psnr, read_pgm, write_pgm
from .io import load_dataset, load_operator, save_dataset, save_operator
from .objective import ObjectiveParams
from .oblique import AnalysisOperator
from .synthetic import CosparseSpec, generate_cosparse, random_tight_operator
from .trainer import TrainerConfig, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_dims(text: str) -> list[tuple[int, int]]:
    """Parse ``"8x7,8x7"`` into ``[(8, 7), (8, 7)]``."""
    dims = []
    for part in text.split(","):
        try:
            m, p = part.lower().split("x")
            dims.append((int(m), int(p)))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad factor size {part!r}, expected MxP") from None
        if dims[-1][0] < 1 or dims[-1][1] < 1:
            raise argparse.ArgumentTypeError(f"factor size {part!r} must be positive")
    return dims


def _dense_dims(text: str) -> list[tuple[int, int]]:
    dims = parse_dims(text)
    if len(dims) != 1:
        raise argparse.ArgumentTypeError("--dense takes a single MxP size")
    return dims


def _now() -> str:
    # SOURCE_DATE_EPOCH pins the timestamp so reruns give byte-identical files
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch:
        stamp = _dt.datetime.fromtimestamp(int(epoch), _dt.timezone.utc)
    else:
        stamp = _dt.datetime.now(_dt.timezone.utc)
    return stamp.replace(microsecond=0).isoformat()


# -- commands ---------------------------------------------------------------

def cmd_init(args) -> int:
    dims = args.dense or args.factors
    rng = np.random.default_rng(args.seed)
    op = random_tight_operator(dims, rng) if args.tight else AnalysisOperator.random(dims, rng)
    save_operator(args.out, op, {"seed": args.seed, "iterations": 0, "created": _now()})
    return EXIT_OK


def cmd_generate(args) -> int:
    gt, _ = load_operator(args.gt)
    spec = CosparseSpec(args.cosparsity, args.sigma, args.count, args.seed)
    save_dataset(args.out, generate_cosparse(gt, spec))
    return EXIT_OK


def cmd_extract(args) -> int:
    images = [read_pgm(p) for p in args.image]
    signals = extract_patches(images, args.patch, args.count, np.random.default_rng(args.seed))
    save_dataset(args.out, signals)
    return EXIT_OK


def cmd_train(args) -> int:
    signals = load_dataset(args.data)
    dims = args.dense if args.dense else args.factors
    if args.dense:
        if dims[0][1] != signals.p:
            raise UsageError(f"--dense {dims[0][0]}x{dims[0][1]} does not match sample length {signals.p}")
    elif tuple(p for _, p in dims) != tuple(signals.mode_sizes):
        raise UsageError(f"factor column sizes {[p for _, p in dims]} do not match "
                         f"dataset modes {list(signals.mode_sizes)}")
    params = ObjectiveParams(args.nu, args.kappa, args.mu)
    cfg = TrainerConfig(batch_size=args.batch, params=params, a0=args.a0, armijo_b=args.armijo_b,
                        armijo_c=args.armijo_c, k_max=args.kmax, avg_window=args.window,
                        stop_window=args.stop_window, stop_tol=args.stop_tol,
                        max_iters=args.max_iters, seed=args.seed)
    init = AnalysisOperator.random(dims, np.random.default_rng(args.seed))
    log = open(args.log, "w", encoding="utf-8") if args.log else None
    try:
        report = train(signals, init, cfg, log_stream=log)
    finally:
        if log is not None:
            log.close()
    meta = {"nu": args.nu, "kappa": args.kappa, "mu": args.mu, "seed": args.seed,
            "iterations": report.iterations, "termination": report.reason, "created": _now()}
    save_operator(args.out, report.op, meta)
    print(f"iterations {report.iterations} ({report.reason}), accepted {report.accepted_steps}, "
          f"failed searches {report.failed_searches}")
    return EXIT_OK


def cmd_recover_eval(args) -> int:
    learned, _ = load_operator(args.learned)
    gt, _ = load_operator(args.gt)
    if learned.m != gt.m or learned.p != gt.p:
        raise DataFormatError(f"operators differ in size: {learned.m}x{learned.p} vs {gt.m}x{gt.p}")
    perm, total = hungarian_min_assignment(confusion_matrix(learned, gt))
    print(f"H(C) = {total:.6f}")
    print("permutation (learned -> gt, 1-based): " + " ".join(str(int(j) + 1) for j in perm))
    return EXIT_OK


def cmd_bound(args) -> int:
    configs = []
    if args.factors:
        configs.append(("separable", args.factors, True))
    if args.dense:
        configs.append(("dense", args.dense, False))
    if not configs:
        raise UsageError("give --factors and/or --dense")
    print(f"{'config':<10} {'dims':<16} {'C':>12} {'eta':>14}")
    for name, dims, sep in configs:
        c, eta = complexity_bound(BoundInputs(tuple(dims), args.lipschitz, args.samples, args.delta, sep))
        label = ",".join(f"{m}x{p}" for m, p in dims)
        print(f"{name:<10} {label:<16} {c:>12.3f} {eta:>14.6g}")
    return EXIT_OK


def cmd_denoise(args) -> int:
    noisy = read_pgm(args.image)
    op, _ = load_operator(args.op)
    cfg = DenoiseConfig(tau=args.tau, huber_mu=args.huber_mu, max_iters=args.max_iters, tol=args.tol,
                        remove_dc=not args.keep_dc)
    result = denoise(noisy, op, cfg)
    write_pgm(args.out, result.image)
    print(f"iterations {result.iterations}, objective {result.objective[-1]:.6g}")
    if args.ref:
        ref = read_pgm(args.ref)
        print(f"PSNR input  {psnr(ref, noisy):.2f} dB")
        print(f"PSNR output {psnr(ref, np.clip(np.rint(result.image), 0, 255)):.2f} dB")
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="saol", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("init", help="write a random operator (e.g. a ground truth)")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--factors", type=parse_dims)
    g.add_argument("--dense", type=_dense_dims)
    p.add_argument("--tight", action="store_true", help="draw each factor as a unit-norm tight frame")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("generate", help="synthetic cosparse signals from a ground-truth operator")
    p.add_argument("--gt", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--cosparsity", type=int, default=15)
    p.add_argument("--sigma", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("extract-patches", help="normalized random patches from PGM images")
    p.add_argument("--image", action="append", required=True)
    p.add_argument("--patch", type=int, default=7)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="learn an operator by geometric SGD")
    p.add_argument("--data", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--factors", type=parse_dims, help="separable factor sizes, e.g. 8x7,8x7")
    g.add_argument("--dense", type=_dense_dims, help="single-factor size, e.g. 64x49")
    p.add_argument("--nu", type=float, default=500.0)
    p.add_argument("--kappa", type=float, default=6500.0)
    p.add_argument("--mu", type=float, default=1e-4)
    p.add_argument("--batch", type=int, default=500)
    p.add_argument("--a0", type=float, default=0.1)
    p.add_argument("--armijo-b", type=float, default=0.9)
    p.add_argument("--armijo-c", type=float, default=1e-4)
    p.add_argument("--kmax", type=int, default=40)
    p.add_argument("--window", type=int, default=2000)
    p.add_argument("--stop-window", type=int, default=200)
    p.add_argument("--stop-tol", type=float, default=5e-5)
    p.add_argument("--max-iters", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="per-iteration JSON lines")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("recover-eval", help="recovery error H(C) against a ground truth")
    p.add_argument("--learned", required=True)
    p.add_argument("--gt", required=True)
    p.set_defaults(func=cmd_recover_eval)

    p = sub.add_parser("bound", help="sample-complexity constants and deviation bound")
    p.add_argument("--factors", type=parse_dims)
    p.add_argument("--dense", type=_dense_dims)
    p.add_argument("--lambda", dest="lipschitz", type=float, required=True)
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--delta", type=float, default=0.05)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("denoise", help="analysis-prior denoising of a PGM image")
    p.add_argument("--image", required=True)
    p.add_argument("--op", required=True)
    p.add_argument("--tau", type=float, default=0.40)
    p.add_argument("--huber-mu", type=float, default=0.01)
    p.add_argument("--max-iters", type=int, default=300)
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--keep-dc", action="store_true", help="filter raw patches without mean removal")
    p.add_argument("--out", required=True)
    p.add_argument("--ref", help="clean reference image; prints PSNR")
    p.set_defaults(func=cmd_denoise)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ValueError) as exc:
        print(f"saol {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataFormatError, OSError) as exc:
        print(f"saol {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"saol {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
