"""Splitting an image into low and high frequency bands.

The colour discriminator looks at the blurred image and the texture
discriminator at what the blur removed.  This walk-through builds the kernel,
splits a photo, and checks the two bands add back up to the input.

Run:  python3 demos/frequency_split.py
"""

import numpy as np
import torch

from umle.data import _natural_images
from umle.filters import build_gaussian_kernel, build_pyramid, frequency_split, highpass

# The kernel is a fixed 21x21 Gaussian.  Its centre tap equals the amplitude and
# the taps sum to a little under one, so a flat image leaks a tiny residual.
k = build_gaussian_kernel()
print("kernel", k.shape, "centre", k[10, 10], "sum", round(float(k.sum()), 6))
print("highpass of a flat grey image, max |value|:",
      float(highpass(torch.full((1, 3, 32, 32), 0.5)).abs().max()))

# Take one sample photo, centre crop to 128x128 and scale to [0, 1] in float32,
# which is what the loader produces.
name, photo = _natural_images()[0]
h, w = photo.shape[:2]
crop = photo[(h - 128) // 2:(h + 128) // 2, (w - 128) // 2:(w + 128) // 2]
x = torch.from_numpy(crop.transpose(2, 0, 1)[None].astype(np.float32) / 255)

low, high = frequency_split(x)
print(f"\n{name}: low band mean {low.mean():.4f}, high band mean {high.mean():.5f}")
print("low + high == input, bitwise:", torch.equal(low + high, x.double()))

# Most of the energy stays in the low band; the high band is edges and grain.
print(f"std  low {low.std():.4f}   high {high.std():.4f}")

# The multi-scale discriminator sees a three-level pyramid of the same image.
for level, p in enumerate(build_pyramid(x)):
    print("pyramid level", level, tuple(p.shape))
