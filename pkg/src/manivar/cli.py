"""Command line interface: phantom, noise, denoise, mse, render.

Exit codes: 0 on success, 2 on validation errors (bad flags, bad files,
unsupported model/solver combinations), 3 on geometry errors (cut locus).
"""

from __future__ import annotations

import argparse
import os
import sys

from .errors import (
    ConvergenceError,
    CutLocusError,
    DegenerateGeodesicError,
    ManivarError,
    ValidationError,
)
from .imaging import PHANTOMS, NoiseSpec, add_noise, mse, phantom
from .models import MODELS, ModelConfig, make_phi
from .mvdio import read_mvd, write_mvd
from .render import render_png
from .solvers import SolverRun, StepSchedule, solve

SOLVERS = ("subgradient", "hq", "cppa", "dr", "pdr")


def _default_workers() -> int:
    env = os.environ.get("MANIVAR_WORKERS", "")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="manivar",
        description="Variational denoising of manifold-valued signals and images",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="generate a deterministic test image")
    p.add_argument("--name", required=True, choices=PHANTOMS)
    p.add_argument("--n1", type=int, required=True)
    p.add_argument("--n2", type=int, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("noise", help="add seeded tangent-Gaussian noise")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--seed", type=int, default=1)

    p = sub.add_parser("denoise", help="run a variational denoising model")
    p.add_argument("--model", required=True, choices=MODELS)
    p.add_argument("--solver", required=True, choices=SOLVERS)
    p.add_argument("--alpha", type=float, default=0.2)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--p", type=int, default=1, choices=(1, 2))
    p.add_argument("--phi", default="phi1", choices=("phi1", "phi2", "phi3"))
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--tau0", type=float, default=4.0)
    p.add_argument("--eta", type=float, default=0.35)
    p.add_argument("--seed", type=int, default=1,
                   help="accepted and recorded; all solvers are deterministic")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trace", default=None,
                   help="CSV trace file (iteration, objective, change)")
    p.add_argument("--workers", type=int, default=_default_workers())

    p = sub.add_parser("mse", help="mean squared geodesic error of two images")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--ref", required=True)

    p = sub.add_parser("render", help="write a PNG rendering")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    return parser


def _cmd_phantom(args) -> int:
    write_mvd(phantom(args.name, args.n1, args.n2), args.out)
    return 0


def _cmd_noise(args) -> int:
    image = read_mvd(args.infile)
    write_mvd(add_noise(image, NoiseSpec(args.sigma, args.seed)), args.out)
    return 0


def _make_config(args) -> ModelConfig:
    beta = args.beta
    if beta is None and args.model in ("tvtv2", "tgv"):
        beta = 0.65
    phi = make_phi(args.phi, args.eps) if args.model == "tvphi" else None
    return ModelConfig(args.model, alpha=args.alpha, beta=beta, p=args.p, phi=phi)


def _write_trace(run: SolverRun, path: str) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write("iteration,objective,change\n")
        for k, (obj, ch) in enumerate(zip(run.objectives, run.changes)):
            fh.write(f"{k},{obj:.17g},{ch:.17g}\n")


def _cmd_denoise(args) -> int:
    if not args.alpha > 0:
        raise ValidationError("--alpha must be positive")
    if args.workers < 1:
        raise ValidationError("--workers must be at least 1")
    if not args.tau0 > 0:
        raise ValidationError("--tau0 must be positive")
    if not args.eta > 0:
        raise ValidationError("--eta must be positive")
    config = _make_config(args)
    f = read_mvd(args.infile)
    schedule = StepSchedule.harmonic(args.tau0)
    if args.solver in ("dr", "pdr"):
        schedule = StepSchedule.constant(0.9)
    run = solve(f, config, args.solver, schedule=schedule, eta=args.eta,
                max_iters=args.iters, workers=args.workers)
    write_mvd(run.image, args.out)
    if args.trace:
        _write_trace(run, args.trace)
    print(
        f"{run.solver}: {run.iterations} iterations, "
        f"objective {run.final_objective():.17g}, {run.stop_reason}"
    )
    return 0


def _cmd_mse(args) -> int:
    value = mse(read_mvd(args.infile), read_mvd(args.ref))
    print(f"{value:.17g}")
    return 0


def _cmd_render(args) -> int:
    render_png(read_mvd(args.infile), args.out)
    return 0


_COMMANDS = {
    "phantom": _cmd_phantom,
    "noise": _cmd_noise,
    "denoise": _cmd_denoise,
    "mse": _cmd_mse,
    "render": _cmd_render,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (CutLocusError, DegenerateGeodesicError) as err:
        print(f"geometry error: {err}", file=sys.stderr)
        return 3
    except (ValidationError, ConvergenceError, ManivarError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
