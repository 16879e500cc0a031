"""``hankel-doa`` command line entry point.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from contextlib import nullcontext

from . import experiments as ex
from .lowrank import SVDConvergenceError
from .training import NumericalError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config file, or a manifest.json to re-run")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", default="runs", help="output root directory (default: runs)")
    common.add_argument("--threads", type=int, help="BLAS thread limit")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="hankel-doa", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="write the training dataset")
    p = sub.add_parser("train", parents=[common], help="train IHT-Net, write checkpoint and history.csv")
    p.add_argument("--resume", action="store_true", help="continue from the last saved epoch")
    p = sub.add_parser("sweep-phases", parents=[common], help="test loss against the number of phases")
    p.add_argument("--k-list", type=_int_list, help="comma separated phase counts")
    p = sub.add_parser("sweep-snr", parents=[common], help="reconstruction loss per method and SNR")
    p.add_argument("--checkpoint")
    p.add_argument("--snr-list", type=_float_list, help="comma separated SNRs in dB, 'inf' for noiseless")
    p = sub.add_parser("spectrum", parents=[common], help="four beamforming spectra for one sample")
    p.add_argument("--checkpoint")
    p.add_argument("--sample", type=int)
    p.add_argument("--snr", type=float)
    p = sub.add_parser("doa", parents=[common], help="DOA MSE per method and SNR")
    p.add_argument("--checkpoint")
    p.add_argument("--snr-list", type=_float_list)
    p = sub.add_parser("solve", parents=[common], help="complete one held-out sample with IHT or FIHT")
    p.add_argument("--algo", choices=["fiht", "iht"])
    p.add_argument("--rank", type=int, help="target rank r")
    p.add_argument("--beta", type=float, help="step size")
    p.add_argument("--mode", choices=["masked", "literal"], help="residual mode")
    p.add_argument("--sample", type=int)
    p.add_argument("--snr", type=float)
    sub.add_parser("pipeline", parents=[common], help="generate, train, sweep-snr, spectrum and doa")
    return parser


def dispatch(args, cfg):
    out = args.out
    if args.command == "generate":
        return ex.cmd_generate(cfg, out)
    if args.command == "train":
        return ex.cmd_train(cfg, out, resume=args.resume)
    if args.command == "sweep-phases":
        return ex.cmd_sweep_phases(cfg, out, args.k_list)
    if args.command == "sweep-snr":
        return ex.cmd_sweep_snr(cfg, out, args.checkpoint, args.snr_list)
    if args.command == "spectrum":
        return ex.cmd_spectrum(cfg, out, args.checkpoint, args.sample, args.snr)
    if args.command == "doa":
        return ex.cmd_doa(cfg, out, args.checkpoint, args.snr_list)
    if args.command == "solve":
        cfg = ex.with_solver_overrides(cfg, rank_r=args.rank, step_beta=args.beta, residual_mode=args.mode)
        return ex.cmd_solve(cfg, out, args.algo, args.sample, args.snr)
    return ex.cmd_pipeline(cfg, out)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = ex.load_config(args.config, args.seed)
        if args.threads is not None and args.threads < 1:
            raise ex.ConfigError("--threads must be positive")
        if args.threads:
            from threadpoolctl import threadpool_limits

            limit = threadpool_limits(args.threads)
        else:
            limit = nullcontext()
        with limit:
            result = dispatch(args, cfg)
    except ex.ConfigError as exc:
        print(f"hankel-doa: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, SVDConvergenceError, FloatingPointError) as exc:
        print(f"hankel-doa: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    runs = result if isinstance(result, list) else [result]
    for run in runs:
        print(f"{run.command}: run {run.id} -> {run.dir}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
