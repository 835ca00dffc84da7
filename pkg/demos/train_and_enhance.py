"""Training a small model on the toy corpus and enhancing its dark images.

The toy corpus is built from sample photos: the "normal" half is the photos
as they are, the "low" half is darkened, gamma-shifted and noisy copies of
other photos.  Nothing is paired.  Training for a few hundred iterations on
one CPU core takes a few minutes.

Run:  python3 demos/train_and_enhance.py [workdir] [iterations]
"""

import sys
from pathlib import Path

import numpy as np

from umle.config import TrainConfig
from umle.data import load_unpaired, make_toy_corpus
from umle.evaluation import enhance_dir, score_dir
from umle.training import load_generator, train

work = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_run")
iterations = int(sys.argv[2]) if len(sys.argv) > 2 else 300

root = make_toy_corpus(work / "toy", n_low=8, n_normal=8, size=64)
low, normal = load_unpaired(root, (64, 64))
print(f"{len(low.images)} low and {len(normal.images)} normal images at 64x64")

# Every image pick, patch crop and weight init comes from the seed, so the
# same config reproduces the same loss trace bit for bit.
cfg = TrainConfig(seed=0, iterations=iterations, checkpoint_every=100)
final, trace = train(cfg, low, normal, output_dir=work / "run")

total = np.array([r.total_g for r in trace])
print(f"generator loss: first 20 mean {total[:20].mean():.2f}, last 20 mean {total[-20:].mean():.2f}")
for term in ("adv_g", "cyc", "idt", "pre", "color"):
    v = np.array([getattr(r, term) for r in trace])
    print(f"  {term:6s} {v[:20].mean():7.3f} -> {v[-20:].mean():7.3f}")

# Enhance the dark images at 192x192, large enough for NIQE's 96 px patches,
# and score input and output.
model = load_generator(work / "run" / "final.npz")
enhance_dir(model, root / "low", work / "enhanced", size=(192, 192), report=None)
before = score_dir(root / "low", size=(192, 192))[-1]
after = score_dir(work / "enhanced")[-1]
print(f"mean entropy  before {before['entropy']:.3f}  after {after['entropy']:.3f}")
print(f"mean NIQE     before {before['niqe']:.3f}  after {after['niqe']:.3f}")
print("enhanced images in", work / "enhanced")
