"""Command-line front end.

Exit codes: 0 success, 1 I/O failure, 2 validation error, 3 numerical failure.
Results go to stdout; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .evaluation import (DegenerateDatasetError, masked_mean, score_2afc, score_jnd, sweep_n,
                         write_sweep_csv)
from .gradient import Wrt, fd_check
from .imageio import ImageFormatError, ManifestError, load_image, load_manifest, save_image
from .mad import DegenerateGradientError, MadConfig, run_mad
from .metrics import MetricId, ShapeMismatchError, evaluate
from .wls import LasiConfig, NumericalError, predict, solve_embeddings

log = logging.getLogger("lasi")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _fmt(v: float) -> str:
    return f"{v:.9f}"


def _lasi_config(args) -> LasiConfig:
    return LasiConfig(n=args.n, omega=args.omega, channel_mode=args.mode, pad=args.pad)


def _metric(name: str, args) -> MetricId:
    return MetricId.lasi(_lasi_config(args)) if name == "lasi" else MetricId(name)


def _require_files(*paths):
    for p in paths:
        if not Path(p).is_file():
            raise CliError(f"no such file: {p}", 1)


def _same_shape(a, b):
    if a.shape != b.shape:
        raise CliError(f"image sizes differ: {a.shape} vs {b.shape}", 2)


def cmd_compare(args):
    _require_files(args.img_a, args.img_b)
    a, b = load_image(args.img_a), load_image(args.img_b)
    _same_shape(a, b)
    print(_fmt(evaluate(_metric(args.metric, args), a, b, args.threads)))


def cmd_embed(args):
    _require_files(args.img)
    emb = solve_embeddings(load_image(args.img), _lasi_config(args), args.threads)
    Path(args.out).write_bytes(emb.to_bytes())
    log.info("wrote %d x %d embedding to %s", emb.dim, emb.columns, args.out)


def cmd_residual(args):
    _require_files(args.img)
    img = load_image(args.img)
    pred = predict(img, cfg=_lasi_config(args), threads=args.threads)
    ext = "pgm" if img.channels == 1 else "ppm"
    prefix = str(args.out)
    save_image(np.clip(pred.predicted, 0.0, 1.0), f"{prefix}_pred.{ext}")
    z = pred.residual
    peak = z.max()
    save_image(z / peak if peak > 0 else z, f"{prefix}_residual.{ext}")
    np.save(f"{prefix}_residual.npy", z)
    print(_fmt(masked_mean(z, args.margin)))


def cmd_eval_2afc(args):
    _require_files(args.manifest)
    manifest = load_manifest(args.manifest)
    res = score_2afc(manifest, _metric(args.metric, args), args.threads)
    if args.csv:
        res.write_csv(args.csv)
    log.info("majority bound %.6f, human level %.6f", res.majority_bound, res.human_level)
    print(_fmt(res.score))


def cmd_eval_jnd(args):
    _require_files(args.manifest)
    manifest = load_manifest(args.manifest)
    res = score_jnd(manifest, _metric(args.metric, args), args.threads)
    if args.csv:
        res.write_csv(args.csv)
    print(_fmt(res.map_score))


def cmd_mad(args):
    _require_files(args.ref)
    cfg = MadConfig(
        fixed_metric=_metric(args.fixed, args),
        moving_metric=_metric(args.moving, args),
        steps=args.steps,
        step_size=args.step_size,
        noise_sigma=args.sigma,
        correction_tol=args.tol,
        seed=args.seed,
    )
    traj = run_mad(load_image(args.ref), cfg)
    traj.write(args.out)
    print(_fmt(traj.max_drift()))


def cmd_sweep(args):
    _require_files(args.manifest)
    try:
        n_values = [int(v) for v in args.n_list.split(",") if v.strip()]
    except ValueError:
        raise CliError(f"bad --n-list {args.n_list!r}", 2) from None
    rows = sweep_n(load_manifest(args.manifest), n_values, _lasi_config(args), args.threads,
                   include_train_loss=args.train_loss)
    write_sweep_csv(rows, args.csv or sys.stdout)


def cmd_gradcheck(args):
    _require_files(args.img_a, args.img_b)
    a, b = load_image(args.img_a), load_image(args.img_b)
    _same_shape(a, b)
    rep = fd_check(_metric(args.metric, args), a, b, Wrt(args.wrt), args.step)
    print(f"max_rel_err {rep.max_rel_err:.9e}")
    print(f"max_abs_err {rep.max_abs_err:.9e}")


METRICS = ["lasi", "mse", "psnr", "ssim", "msssim"]


def _add_lasi_flags(p):
    p.add_argument("--n", type=int, default=12, help="neighborhood size / embedding dimension")
    p.add_argument("--omega", type=float, default=0.8, help="distance decay in (0, 1]")
    p.add_argument("--mode", choices=["per-channel", "joint"], default="per-channel")
    p.add_argument("--pad", type=float, default=0.5, help="value of out-of-image neighbors")
    p.add_argument("--threads", type=int, default=None, help="worker cap (default: all cores)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lasi", description="LASI perceptual similarity toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compare", help="distance between two images")
    p.add_argument("--metric", choices=METRICS, default="lasi")
    _add_lasi_flags(p)
    p.add_argument("img_a")
    p.add_argument("img_b")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("embed", help="dump the embedding matrix")
    _add_lasi_flags(p)
    p.add_argument("img")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("residual", help="prediction and squared-residual maps")
    _add_lasi_flags(p)
    p.add_argument("img")
    p.add_argument("--out", required=True, help="output prefix")
    p.add_argument("--margin", type=int, default=0,
                   help="exclude the first MARGIN rows and MARGIN columns on each side from the MSE")
    p.set_defaults(func=cmd_residual)

    for name, func in (("eval-2afc", cmd_eval_2afc), ("eval-jnd", cmd_eval_jnd)):
        p = sub.add_parser(name, help=f"score a metric on a {name[5:].upper()} manifest")
        p.add_argument("manifest")
        p.add_argument("--metric", choices=METRICS, default="lasi")
        p.add_argument("--csv", default=None)
        _add_lasi_flags(p)
        p.set_defaults(func=func)

    p = sub.add_parser("mad", help="maximum differentiation competition")
    p.add_argument("ref")
    p.add_argument("--fixed", choices=METRICS, default="lasi")
    p.add_argument("--moving", choices=METRICS, default="mse")
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--step-size", type=float, default=1e-2)
    p.add_argument("--sigma", type=float, default=0.3)
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _add_lasi_flags(p)
    p.set_defaults(func=cmd_mad)

    p = sub.add_parser("sweep", help="prediction error and 2-AFC score versus N")
    p.add_argument("manifest")
    p.add_argument("--n-list", default="1,2,4,8,12")
    p.add_argument("--csv", default=None)
    p.add_argument("--train-loss", action="store_true", help="also report the mean WLS objective")
    _add_lasi_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gradcheck", help="analytic vs finite-difference gradient")
    p.add_argument("--metric", choices=METRICS, default="lasi")
    p.add_argument("--wrt", choices=["first", "second"], default="second")
    p.add_argument("--step", type=float, default=1e-4)
    _add_lasi_flags(p)
    p.add_argument("img_a")
    p.add_argument("img_b")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    if getattr(args, "threads", None) is not None and args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        args.func(args)
    except CliError as exc:
        print(f"lasi: {exc}", file=sys.stderr)
        return exc.code
    except (ImageFormatError, OSError) as exc:
        print(f"lasi: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, DegenerateGradientError, ArithmeticError) as exc:
        print(f"lasi: numerical failure: {exc}", file=sys.stderr)
        return 3
    except (ShapeMismatchError, ManifestError, DegenerateDatasetError, ValueError) as exc:
        print(f"lasi: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
