"""Switching discriminator branches off, one at a time.

Each toggle removes a part of the multi-branch discriminator: the colour
branch, the texture branch, or the three pyramid scales plus the local patch.
The per-branch loss file shows which branches were live in each run.

Run:  python3 demos/ablation.py [workdir] [iterations]
"""

import csv
import sys
from pathlib import Path

from umle.cli import run_ablation
from umle.config import TrainConfig
from umle.data import make_toy_corpus

work = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_ablation")
iterations = int(sys.argv[2]) if len(sys.argv) > 2 else 100
root = make_toy_corpus(work / "toy", n_low=8, n_normal=8, size=64)

for toggles in (frozenset(), {"NO_COLOR_D"}, {"NO_TEXTURE_D"}, {"NO_MULTISCALE_D"}):
    cfg = TrainConfig(iterations=iterations, ablation=frozenset(toggles))
    out = work / ("default" if not toggles else next(iter(toggles)).lower())
    row = run_ablation(cfg, root, out)
    with open(out / "loss_trace_branches.csv") as f:
        live = sorted({k.split("/")[1] for k in next(csv.reader(f))[1:]})
    print(f"{row['condition']:36s} NIQE {row['niqe']:7.3f}  entropy {row['entropy']:.3f}  branches {live}")
