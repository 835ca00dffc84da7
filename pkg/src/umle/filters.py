"""Gaussian frequency separation and the image pyramid used by the discriminator.

The low-pass kernel is tabulated directly from

    G(x, y) = lam * exp(-(x - mu_x)^2 / (2 sigma_x) - (y - mu_y)^2 / (2 sigma_y))

where ``sigma`` enters the denominator un-squared, i.e. it acts as a variance.
With ``lam = 0.053`` and ``sigma = 3`` the gain is almost exactly ``1 / (6 pi)``,
so the kernel sums to ~1 without renormalisation.

The split into low and high frequencies is done in double precision and is
exactly complementary: ``lowpass(x) + highpass(x) == x`` bit for bit for any
input with at most 24 significant bits per value (float32 or 8-bit images).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from umle.errors import InvalidKernelSpec, PyramidShapeError

__all__ = [
    "KernelSpec",
    "build_gaussian_kernel",
    "lowpass",
    "highpass",
    "frequency_split",
    "build_pyramid",
    "dump_kernel",
]


@dataclass(frozen=True)
class KernelSpec:
    lam: float = 0.053
    mu_x: float = 0.0
    mu_y: float = 0.0
    sigma_x: float = 3.0
    sigma_y: float = 3.0
    support_radius: int = 10

    def validate(self) -> None:
        if not self.lam > 0:
            raise InvalidKernelSpec(f"lam must be positive, got {self.lam}")
        if not (self.sigma_x > 0 and self.sigma_y > 0):
            raise InvalidKernelSpec(f"sigma must be positive, got ({self.sigma_x}, {self.sigma_y})")
        if int(self.support_radius) != self.support_radius or self.support_radius < 1:
            raise InvalidKernelSpec(f"support_radius must be an integer >= 1, got {self.support_radius}")


DEFAULT_KERNEL = KernelSpec()


def build_gaussian_kernel(spec: KernelSpec = DEFAULT_KERNEL) -> np.ndarray:
    """Return the ``(2r+1, 2r+1)`` float64 kernel; ``weights[r + y, r + x] = G(x, y)``."""
    spec.validate()
    r = int(spec.support_radius)
    offsets = np.arange(-r, r + 1, dtype=np.float64)
    ex = (offsets - spec.mu_x) ** 2 / (2.0 * spec.sigma_x)
    ey = (offsets - spec.mu_y) ** 2 / (2.0 * spec.sigma_y)
    return spec.lam * np.exp(-ey[:, None] - ex[None, :])


def _as_kernel(kernel):
    if kernel is None:
        kernel = DEFAULT_KERNEL
    if isinstance(kernel, KernelSpec):
        return kernel
    return np.asarray(kernel, dtype=np.float64)


def _separable_factors(spec: KernelSpec) -> tuple[np.ndarray, np.ndarray]:
    # G(x, y) = [lam * exp(-(y - mu_y)^2 / 2 sigma_y)] * [exp(-(x - mu_x)^2 / 2 sigma_x)]
    r = int(spec.support_radius)
    offsets = np.arange(-r, r + 1, dtype=np.float64)
    col = spec.lam * np.exp(-(offsets - spec.mu_y) ** 2 / (2.0 * spec.sigma_y))
    row = np.exp(-(offsets - spec.mu_x) ** 2 / (2.0 * spec.sigma_x))
    return col, row


def _blur(x: torch.Tensor, kernel) -> torch.Tensor:
    """Depthwise Gaussian convolution with reflect padding (needs H, W > r).

    A :class:`KernelSpec` is applied as two 1-D passes; an explicit 2-D array
    is applied directly.  ``conv2d`` correlates, so kernels are flipped.
    """
    c = x.shape[1]
    if isinstance(kernel, KernelSpec):
        kernel.validate()
        r = int(kernel.support_radius)
        col, row = _separable_factors(kernel)
        kc = torch.as_tensor(col[::-1].copy(), dtype=x.dtype, device=x.device).view(1, 1, -1, 1)
        kr = torch.as_tensor(row[::-1].copy(), dtype=x.dtype, device=x.device).view(1, 1, 1, -1)
        y = F.conv2d(F.pad(x, (0, 0, r, r), mode="reflect"), kc.expand(c, 1, -1, 1), groups=c)
        return F.conv2d(F.pad(y, (r, r, 0, 0), mode="reflect"), kr.expand(c, 1, 1, -1), groups=c)
    r = kernel.shape[0] // 2
    k = torch.as_tensor(np.ascontiguousarray(kernel[::-1, ::-1]), dtype=x.dtype, device=x.device)
    padded = F.pad(x, (r, r, r, r), mode="reflect")
    return F.conv2d(padded, k.expand(c, 1, *kernel.shape), groups=c)


def frequency_split(x: torch.Tensor, kernel=None) -> tuple[torch.Tensor, torch.Tensor]:
    """Split ``x`` into (low, high) float64 components with ``low + high == x``.

    ``kernel`` is a :class:`KernelSpec` (default: the standard constants) or a
    tabulated 2-D array.

    ``low`` is the Gaussian blur nudged by at most a few ulps so that the
    residual ``x - low`` is exactly representable.
    """
    x64 = x.to(torch.float64)
    blurred = _blur(x64, _as_kernel(kernel))
    low = x64 - (x64 - blurred)
    return low, x64 - low


def lowpass(x: torch.Tensor, kernel=None) -> torch.Tensor:
    return frequency_split(x, kernel)[0]


def highpass(x: torch.Tensor, kernel=None) -> torch.Tensor:
    """Spatial residual ``x - lowpass(x)``; zero on constant images up to the kernel-sum error."""
    return frequency_split(x, kernel)[1]


def build_pyramid(x: torch.Tensor, levels: int = 3) -> list[torch.Tensor]:
    """Level 0 is ``x``; each further level is a 2x2 mean-pool of the previous one."""
    if levels < 1:
        raise PyramidShapeError(f"levels must be >= 1, got {levels}")
    h, w = x.shape[-2:]
    factor = 2 ** (levels - 1)
    if h % factor or w % factor:
        raise PyramidShapeError(f"{h}x{w} is not divisible by {factor} for {levels} levels")
    out = [x]
    for _ in range(levels - 1):
        out.append(F.avg_pool2d(out[-1], 2))
    return out


def dump_kernel(path, spec: KernelSpec = DEFAULT_KERNEL) -> np.ndarray:
    """Write the realised kernel as CSV (one row per kernel row, full repr precision)."""
    weights = build_gaussian_kernel(spec)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in weights:
            writer.writerow([repr(float(v)) for v in row])
    return weights
