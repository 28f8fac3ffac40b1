"""Build (or rebuild) the training runs the acceptance tests read.

Five prioritized runs and five direct-sampling baseline runs at the default
desk-scale configuration. Existing completed runs are kept, so the script
is safe to re-invoke after an interruption.
"""

import json
import sys
import time
from pathlib import Path

from replaylab.harness import ExperimentConfig, run_training
from replaylab.learner import UpdateConfig
from replaylab.sampler import ReplayConfig

ROOT = Path(__file__).resolve().parent.parent / "runs" / "acceptance"
SEEDS = [0, 1, 2, 3, 4]


def build(baseline: bool, out: Path):
    cfg = ExperimentConfig(
        replay=ReplayConfig(metric="value_l1", prioritization="rank", beta=0.1, rho=0.3),
        update=UpdateConfig(),
        seeds=SEEDS,
        baseline=baseline,
        output_dir=str(out),
    )
    for seed in SEEDS:
        marker = out / f"seed_{seed}" / "params.bin"
        if marker.exists():
            print(f"skip {marker.parent} (already complete)", flush=True)
            continue
        t0 = time.time()
        records = run_training(cfg, seed)
        print(json.dumps({
            "dir": str(out), "seed": seed, "minutes": round((time.time() - t0) / 60, 2),
            "final_test_return": records[-1]["test_return_mean"],
            "final_tier4_mass": records[-1]["tier_mass_replay"]["4"],
        }), flush=True)


if __name__ == "__main__":
    only = sys.argv[1] if len(sys.argv) > 1 else None
    if only in (None, "plr"):
        build(False, ROOT / "plr")
    if only in (None, "uniform"):
        build(True, ROOT / "uniform")
    print("acceptance suite runs complete", flush=True)
