"""No-reference image quality: Shannon entropy, NIQE, and generator throughput.

NIQE follows the usual construction: MSCN coefficients under a 7x7 Gaussian
window (sigma 7/6), a GGD fit of the coefficients plus AGGD fits of their
products with four neighbours, computed on 96x96 patches at two scales
(36 features per patch).  The score is the Mahalanobis-like distance between
the Gaussian fitted to the test image's patches and a pristine model.
"""

from __future__ import annotations

import logging
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from scipy import ndimage
from scipy.special import gamma as gamma_fn

from umle.errors import ImageTooSmall, InvalidCount

log = logging.getLogger(__name__)

PATCH = 96
SHARPNESS_THRESHOLD = 0.75
LUMA = np.array([0.299, 0.587, 0.114])

_ALPHAS = np.arange(0.2, 10.0, 0.001)
# GGD: E[x^2] / E[|x|]^2 as a function of the shape parameter.
_GGD_RATIO = gamma_fn(1 / _ALPHAS) * gamma_fn(3 / _ALPHAS) / gamma_fn(2 / _ALPHAS) ** 2
# AGGD: E[|x|]^2 / E[x^2] for the symmetric case.
_AGGD_RATIO = gamma_fn(2 / _ALPHAS) ** 2 / (gamma_fn(1 / _ALPHAS) * gamma_fn(3 / _ALPHAS))


def _to_hwc(img) -> np.ndarray:
    """Accept (C,H,W) / (H,W,C) / (H,W) arrays or tensors; floats are taken to be in [0, 1]."""
    if isinstance(img, torch.Tensor):
        img = img.detach().cpu().numpy()
    arr = np.asarray(img)
    if arr.ndim == 4 and arr.shape[0] == 1:
        arr = arr[0]
    if np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(np.float64) * 255.0
    else:
        arr = arr.astype(np.float64)
    if arr.ndim == 3 and arr.shape[0] in (1, 3) and arr.shape[-1] not in (1, 3):
        arr = arr.transpose(1, 2, 0)
    if arr.ndim == 3 and arr.shape[-1] == 1:
        arr = arr[..., 0]
    if arr.ndim not in (2, 3):
        raise ValueError(f"expected a single image, got shape {arr.shape}")
    return arr


def luma(img) -> np.ndarray:
    """Grayscale in [0, 255] (float, unrounded)."""
    arr = _to_hwc(img)
    if arr.ndim == 3:
        arr = arr[..., :3] @ LUMA
    return arr


def entropy(img) -> float:
    """Shannon entropy (bits) of the 256-bin histogram of the rounded 8-bit luma."""
    gray = np.clip(np.rint(luma(img)), 0, 255).astype(np.int64)
    counts = np.bincount(gray.ravel(), minlength=256)
    p = counts[counts > 0] / gray.size
    return float(-(p * np.log2(p)).sum()) + 0.0


# ---------------------------------------------------------------------------
# NIQE
# ---------------------------------------------------------------------------

def _gauss_window(radius: int = 3, sigma: float = 7 / 6) -> np.ndarray:
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-0.5 * x**2 / sigma**2)
    w /= w.sum()
    return np.outer(w, w)


_WINDOW = _gauss_window()


def mscn(gray: np.ndarray, c: float = 1.0):
    """Return (mscn coefficients, local sigma map)."""
    mu = ndimage.correlate(gray, _WINDOW, mode="nearest")
    var = ndimage.correlate(gray * gray, _WINDOW, mode="nearest") - mu * mu
    sigma = np.sqrt(np.abs(var))
    return (gray - mu) / (sigma + c), sigma


def fit_ggd(x: np.ndarray) -> tuple[float, float]:
    """Shape and variance of a zero-mean generalized Gaussian (moment matching)."""
    x = x.ravel()
    sigma_sq = np.mean(x * x)
    e = np.mean(np.abs(x))
    if e == 0:
        return np.nan, np.nan
    rho = sigma_sq / e**2
    return float(_ALPHAS[np.argmin(np.abs(rho - _GGD_RATIO))]), float(sigma_sq)


def fit_aggd(x: np.ndarray) -> tuple[float, float, float, float]:
    """Shape, mean, left variance and right variance of an asymmetric GGD."""
    x = x.ravel()
    left, right = x[x < 0], x[x > 0]
    if left.size == 0 or right.size == 0:
        return np.nan, np.nan, np.nan, np.nan
    left_std = np.sqrt(np.mean(left * left))
    right_std = np.sqrt(np.mean(right * right))
    g = left_std / right_std
    r_hat = np.mean(np.abs(x)) ** 2 / np.mean(x * x)
    r_norm = r_hat * (g**3 + 1) * (g + 1) / (g**2 + 1) ** 2
    alpha = float(_ALPHAS[np.argmin((_AGGD_RATIO - r_norm) ** 2)])
    mean = (right_std - left_std) * gamma_fn(2 / alpha) / gamma_fn(1 / alpha) * np.sqrt(
        gamma_fn(1 / alpha) / gamma_fn(3 / alpha))
    return alpha, float(mean), float(left_std**2), float(right_std**2)


_SHIFTS = ((0, 1), (1, 0), (1, 1), (1, -1))


def patch_features(block: np.ndarray) -> np.ndarray:
    """18 features of one MSCN block: GGD (2) + AGGD on four neighbour products (4 x 4)."""
    feats = list(fit_ggd(block))
    for dy, dx in _SHIFTS:
        shifted = np.roll(block, shift=(-dy, -dx), axis=(0, 1))
        feats.extend(fit_aggd(block * shifted))
    return np.asarray(feats)


def _half(gray: np.ndarray) -> np.ndarray:
    im = Image.fromarray(gray.astype(np.float32), mode="F")
    h, w = gray.shape
    return np.asarray(im.resize((w // 2, h // 2), Image.BICUBIC), dtype=np.float64)


def image_features(gray: np.ndarray, patch: int = PATCH, select_sharp: bool = False) -> np.ndarray:
    """(n_patches, 36) features on non-overlapping patches at full and half scale.

    With ``select_sharp`` only patches whose mean local sigma exceeds
    0.75 x the sharpest patch are kept (pristine-model fitting).
    """
    h, w = gray.shape
    if h < patch or w < patch:
        raise ImageTooSmall(f"NIQE needs at least {patch}x{patch}, got {h}x{w}")
    gray = gray[: h - h % patch, : w - w % patch]
    rows, cols = gray.shape[0] // patch, gray.shape[1] // patch
    coeffs, sigma = mscn(gray)
    coeffs2, _ = mscn(_half(gray))
    half = patch // 2
    keep = [(i, j) for i in range(rows) for j in range(cols)]
    if select_sharp:
        sharp = {(i, j): sigma[i * patch:(i + 1) * patch, j * patch:(j + 1) * patch].mean() for i, j in keep}
        top = max(sharp.values())
        keep = [k for k in keep if sharp[k] > SHARPNESS_THRESHOLD * top] or keep
    out = []
    for i, j in keep:
        f1 = patch_features(coeffs[i * patch:(i + 1) * patch, j * patch:(j + 1) * patch])
        f2 = patch_features(coeffs2[i * half:(i + 1) * half, j * half:(j + 1) * half])
        out.append(np.concatenate([f1, f2]))
    return np.asarray(out)


@dataclass
class PristineModel:
    mean_vector: np.ndarray
    covariance: np.ndarray
    fit_metadata: dict = field(default_factory=dict)

    def save(self, path) -> None:
        import json

        np.savez(path, mean=self.mean_vector, cov=self.covariance,
                 meta=np.frombuffer(json.dumps(self.fit_metadata).encode(), dtype=np.uint8))

    @classmethod
    def load(cls, path) -> "PristineModel":
        import json

        with np.load(path) as z:
            return cls(z["mean"].copy(), z["cov"].copy(), json.loads(bytes(z["meta"]).decode()))


DEFAULT_PRISTINE = Path(__file__).with_name("pristine_default.npz")


def default_pristine() -> PristineModel:
    """Model shipped with the package (fitted on scikit-image sample photos, not the canonical NIQE corpus)."""
    return PristineModel.load(DEFAULT_PRISTINE)


def fit_pristine(images, patch: int = PATCH) -> PristineModel:
    """Fit the multivariate Gaussian of sharp-patch features over a corpus of >= 10 images.

    ``images`` may be a :class:`~umle.data.DomainDataset` or any iterable of images.
    """
    images = list(getattr(images, "images", images))
    if len(images) < 10:
        raise ValueError(f"fit_pristine needs at least 10 images, got {len(images)}")
    feats = np.vstack([image_features(luma(im), patch, select_sharp=True) for im in images])
    feats = feats[np.isfinite(feats).all(axis=1)]
    if len(feats) < 2:
        raise ValueError("too few usable patches to fit a pristine model")
    mean = feats.mean(axis=0)
    cov = np.cov(feats, rowvar=False)
    cov = (cov + cov.T) / 2
    eig = np.linalg.eigvalsh(cov)
    if eig.min() <= 1e-12 * max(eig.max(), 1e-300):
        log.warning("pristine covariance is degenerate (min eigenvalue %.3g); adding 1e-6 I", eig.min())
        cov = cov + 1e-6 * np.eye(len(cov))
    meta = {"n_images": len(images), "n_patches": int(len(feats)), "patch": patch}
    return PristineModel(mean, cov, meta)


def niqe(img, model: PristineModel | None = None, patch: int = PATCH) -> float:
    """NIQE score of one image (lower is better)."""
    model = default_pristine() if model is None else model
    feats = image_features(luma(img), patch)
    finite = np.isfinite(feats)
    # columns with no finite entry (flat images) fall back to 0 below
    mu = np.where(finite, feats, 0).sum(axis=0) / np.maximum(finite.sum(axis=0), 1)
    mu[~finite.any(axis=0)] = np.nan
    valid = feats[finite.all(axis=1)]
    cov = np.cov(valid, rowvar=False) if len(valid) > 1 else np.zeros_like(model.covariance)
    diff = np.nan_to_num(mu - model.mean_vector)
    pooled = np.nan_to_num((model.covariance + cov) / 2)
    return float(np.sqrt(max(diff @ np.linalg.pinv(pooled) @ diff, 0.0)))


# ---------------------------------------------------------------------------
# Throughput
# ---------------------------------------------------------------------------

@dataclass
class FPSReport:
    mean: float
    std: float
    repeats: list[float]

    @property
    def cv(self) -> float:
        """Coefficient of variation across repeats."""
        return self.std / self.mean if self.mean else float("nan")


@torch.no_grad()
def measure_fps(model, n_images: int, resolution: int = 64, repeats: int = 3, warmup: int = 5,
                direction: str = "LN", seed: int = 0) -> FPSReport:
    """Frames per second of ``model.generate`` (or a plain callable) on random images."""
    if n_images < 1:
        raise InvalidCount(f"n_images must be >= 1, got {n_images}")
    fn = (lambda x: model.generate(x, direction)) if hasattr(model, "generate") else model
    gen = torch.Generator().manual_seed(seed)
    frames = torch.rand(n_images, 1, 3, resolution, resolution, generator=gen)
    for k in range(warmup):
        fn(frames[k % n_images])
    rates = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        for x in frames:
            fn(x)
        rates.append(n_images / (time.perf_counter() - t0))
    std = statistics.stdev(rates) if len(rates) > 1 else 0.0
    return FPSReport(statistics.fmean(rates), std, rates)
