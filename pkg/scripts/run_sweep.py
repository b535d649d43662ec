"""Prediction error and 2-AFC score versus neighborhood size on a synthetic task.

    python scripts/run_sweep.py --out runs/sweep --examples 50 --n-list 1,2,4,8,12
"""

import argparse
import logging
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path

from lasi.evaluation import score_2afc, spearman, sweep_n, write_sweep_csv
from lasi.imageio import load_manifest
from lasi.metrics import MSE, MS_SSIM, SSIM
from lasi.synthetic import make_2afc_task

log = logging.getLogger("run_sweep")


@dataclass(frozen=True)
class SweepExperiment:
    examples: int = 50
    size: int = 32
    seed: int = 0
    n_values: tuple = (1, 2, 4, 8, 12)


def run(exp: SweepExperiment, out: Path | None) -> None:
    with tempfile.TemporaryDirectory() as tmp:
        task_dir = out / "task" if out else Path(tmp)
        manifest = load_manifest(make_2afc_task(task_dir, exp.examples, exp.seed, exp.size))
        rows = sweep_n(manifest, exp.n_values, include_train_loss=True)
        baselines = {str(m): score_2afc(manifest, m).score for m in (MSE, SSIM, MS_SSIM)}
    if out:
        out.mkdir(parents=True, exist_ok=True)
        write_sweep_csv(rows, out / "sweep.csv")
    write_sweep_csv(rows, sys.stdout)
    rho = spearman([r.prediction_mse for r in rows], [r.afc_score for r in rows])
    print(f"spearman(prediction_mse, afc_score) = {rho:.3f}")
    for name, score in baselines.items():
        print(f"{name} 2-AFC = {score:.3f}")


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", type=Path, default=None)
    p.add_argument("--examples", type=int, default=SweepExperiment.examples)
    p.add_argument("--size", type=int, default=SweepExperiment.size)
    p.add_argument("--seed", type=int, default=SweepExperiment.seed)
    p.add_argument("--n-list", default="1,2,4,8,12")
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO)
    n_values = tuple(int(v) for v in args.n_list.split(","))
    run(SweepExperiment(args.examples, args.size, args.seed, n_values), args.out)


if __name__ == "__main__":
    main()
