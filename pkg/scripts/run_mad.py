"""MAD competition between LASI and MSE on crops of the bundled cameraman.

    python scripts/run_mad.py --out runs/mad --seeds 0 1 2 --steps 20
"""

import argparse
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from lasi import data
from lasi.mad import MadConfig, run_mad
from lasi.metrics import MSE, MetricId


@dataclass(frozen=True)
class MadExperiment:
    crop: int = 32
    n: int = 12
    steps: int = 20
    step_size: float = 1e-2
    swap: bool = False


def run(exp: MadExperiment, seeds, out: Path | None) -> None:
    cam = data.camera().array
    lasi = MetricId.lasi(n=exp.n)
    fixed, moving = (MSE, lasi) if exp.swap else (lasi, MSE)
    print("seed,row,col,drift,moving_max,moving_min,ratio")
    for seed in seeds:
        r, c = np.random.default_rng(seed).integers(0, cam.shape[0] - exp.crop + 1, 2)
        cfg = MadConfig(fixed, moving, steps=exp.steps, step_size=exp.step_size, seed=seed)
        traj = run_mad(cam[r : r + exp.crop, c : c + exp.crop], cfg)
        hi, lo = traj.moving_max[-1], traj.moving_min[-1]
        print(f"{seed},{r},{c},{traj.max_drift():.6f},{hi:.6g},{lo:.6g},{hi / lo:.3f}")
        if out:
            traj.write(out / f"seed{seed}")


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    p.add_argument("--steps", type=int, default=MadExperiment.steps)
    p.add_argument("--step-size", type=float, default=MadExperiment.step_size)
    p.add_argument("--n", type=int, default=MadExperiment.n)
    p.add_argument("--swap", action="store_true", help="hold MSE fixed and move LASI")
    args = p.parse_args()
    run(MadExperiment(n=args.n, steps=args.steps, step_size=args.step_size, swap=args.swap),
        args.seeds, args.out)


if __name__ == "__main__":
    main()
