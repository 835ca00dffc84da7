"""Fit the NIQE pristine model that ships with the package.

The canonical NIQE corpus is not redistributable, so the bundled model is fit
on the fifteen scikit-image sample photographs.  Scores are therefore only
comparable with each other, not with published NIQE numbers.

Run:  python3 demos/fit_pristine.py [out.npz]
"""

import sys

import numpy as np

from umle.data import _natural_images
from umle.metrics import DEFAULT_PRISTINE, fit_pristine, niqe

out = sys.argv[1] if len(sys.argv) > 1 else DEFAULT_PRISTINE

photos = _natural_images()
images = [im.transpose(2, 0, 1).astype(np.float64) / 255.0 for _, im in photos]
model = fit_pristine(images)
model.fit_metadata["corpus"] = "scikit-image sample photos: " + ",".join(n for n, _ in photos)
model.save(out)
print(f"wrote {out}: {model.fit_metadata['n_patches']} patches from {model.fit_metadata['n_images']} images")

# Sanity: clean photos against noisy copies.
rng = np.random.default_rng(0)
for name, img in zip((n for n, _ in photos), images):
    noisy = np.clip(img + rng.normal(0, 0.1, img.shape), 0, 1)
    print(f"{name:22s} clean {niqe(img, model):7.3f}   noisy {niqe(noisy, model):7.3f}")
