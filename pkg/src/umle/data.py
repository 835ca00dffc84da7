"""Unpaired two-domain image loading, keyed sampling and checkpoint files."""

from __future__ import annotations

import enum
import hashlib
import io
import json
import logging
import zipfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

from umle.errors import CheckpointCorrupt, ConfigMismatch, DatasetEmpty, PatchTooLarge

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}
PATCH_SIZE = 10

# Independent streams of the keyed generator.
STREAM_LOW, STREAM_NORMAL, STREAM_PATCH = 0, 1, 2


class DomainTag(str, enum.Enum):
    LOW = "low"
    NORMAL = "normal"


@dataclass
class DomainDataset:
    root_path: Path
    domain_tag: DomainTag
    image_paths: list[Path]
    target_size: tuple[int, int]
    images: list[np.ndarray] = field(repr=False, default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def __len__(self):
        return len(self.image_paths)

    def __getitem__(self, i) -> np.ndarray:
        return self.images[i]


def _decode(path: Path, target_size) -> np.ndarray:
    with Image.open(path) as im:
        im = im.convert("RGB")
        h, w = target_size
        if im.size != (w, h):
            im = im.resize((w, h), Image.BILINEAR)
        arr = np.asarray(im, dtype=np.float32) / 255.0
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def load_dataset(root, domain_tag=DomainTag.LOW, target_size=(64, 64), workers: int = 1) -> DomainDataset:
    """Load every PNG/JPEG in ``root`` (lexicographic order) as a (3, H, W) float32 array in [0, 1].

    Files that fail to decode are skipped and reported in ``dataset.warnings``.
    Decoding may run on several threads; the output order never changes.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetEmpty(f"{root} is not a directory")
    candidates = sorted(p for p in root.iterdir() if p.is_file())
    if not candidates:
        raise DatasetEmpty(f"{root} contains no files")
    target_size = (int(target_size[0]), int(target_size[1]))

    def attempt(path):
        try:
            return _decode(path, target_size)
        except (UnidentifiedImageError, OSError, ValueError) as exc:
            return exc

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(attempt, candidates))
    else:
        results = [attempt(p) for p in candidates]

    paths, images, warnings = [], [], []
    for path, res in zip(candidates, results):
        if isinstance(res, Exception):
            msg = f"skipped {path.name}: {type(res).__name__}"
            log.warning(msg)
            warnings.append(msg)
        else:
            paths.append(path)
            images.append(res)
    if not images:
        raise DatasetEmpty(f"no decodable images in {root}")
    return DomainDataset(root, DomainTag(domain_tag), paths, target_size, images, warnings)


def load_unpaired(root, target_size=(64, 64), workers: int = 1) -> tuple[DomainDataset, DomainDataset]:
    """Load the ``<root>/low`` and ``<root>/normal`` collections."""
    root = Path(root)
    return (load_dataset(root / "low", DomainTag.LOW, target_size, workers),
            load_dataset(root / "normal", DomainTag.NORMAL, target_size, workers))


def keyed_rng(seed: int, iteration: int, stream: int) -> np.random.Generator:
    """Counter-based generator: a pure function of (seed, iteration, stream)."""
    return np.random.Generator(np.random.Philox(key=int(seed), counter=[int(iteration), int(stream), 0, 0]))


def sample_indices(n_low: int, n_normal: int, seed: int, iteration: int) -> tuple[int, int]:
    i = int(keyed_rng(seed, iteration, STREAM_LOW).integers(n_low))
    j = int(keyed_rng(seed, iteration, STREAM_NORMAL).integers(n_normal))
    return i, j


def sample_unpaired(low: DomainDataset, normal: DomainDataset, seed: int, iteration: int):
    """One independently drawn image per domain, each shaped (1, 3, H, W)."""
    i, j = sample_indices(len(low), len(normal), seed, iteration)
    return torch.from_numpy(low[i][None].copy()), torch.from_numpy(normal[j][None].copy())


def extract_local_patch(x: torch.Tensor, seed: int, iteration: int, size: int = PATCH_SIZE) -> torch.Tensor:
    h, w = x.shape[-2:]
    if h < size or w < size:
        raise PatchTooLarge(f"cannot take a {size}x{size} patch from a {h}x{w} image")
    rng = keyed_rng(seed, iteration, STREAM_PATCH)
    top = int(rng.integers(h - size + 1))
    left = int(rng.integers(w - size + 1))
    return x[..., top:top + size, left:left + size]


def save_png(img, path) -> None:
    """Write a (3, H, W) array in [0, 1] as 8-bit PNG (round to nearest)."""
    arr = np.asarray(img, dtype=np.float64)
    arr = np.clip(np.rint(arr.transpose(1, 2, 0) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr).save(path, format="PNG")


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

@dataclass
class Checkpoint:
    iteration: int
    params: dict[str, np.ndarray]
    optimizer_state: dict[str, np.ndarray]
    rng_state: dict
    config_digest: str
    meta: dict = field(default_factory=dict)


def config_digest(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    """Single ``.npz`` file: ``params/*`` and ``optim/*`` arrays plus a JSON ``__meta__`` entry."""
    arrays = {}
    for prefix, group in (("params", ckpt.params), ("optim", ckpt.optimizer_state)):
        for name, arr in group.items():
            arrays[f"{prefix}/{name}"] = np.asarray(arr)
    meta = {
        "iteration": int(ckpt.iteration),
        "config_digest": ckpt.config_digest,
        "rng_state": ckpt.rng_state,
        "arrays": {k: {"shape": list(v.shape), "dtype": v.dtype.str} for k, v in arrays.items()},
        "meta": ckpt.meta,
    }
    arrays["__meta__"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path, expected_digest: str | None = None, allow_mismatch: bool = False) -> Checkpoint:
    try:
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(bytes(z["__meta__"]).decode())
            params, optim = {}, {}
            for key, info in meta["arrays"].items():
                arr = z[key]
                if list(arr.shape) != info["shape"] or arr.dtype.str != info["dtype"]:
                    raise CheckpointCorrupt(f"{key}: stored shape/dtype disagrees with the inventory")
                prefix, name = key.split("/", 1)
                (params if prefix == "params" else optim)[name] = arr
    except CheckpointCorrupt:
        raise
    except (zipfile.BadZipFile, OSError, ValueError, KeyError, EOFError, UnicodeDecodeError) as exc:
        raise CheckpointCorrupt(f"cannot read checkpoint {path}: {exc}") from exc
    if expected_digest is not None and meta["config_digest"] != expected_digest and not allow_mismatch:
        raise ConfigMismatch(f"checkpoint config digest {meta['config_digest'][:12]} != {expected_digest[:12]}")
    return Checkpoint(meta["iteration"], params, optim, meta["rng_state"], meta["config_digest"], meta.get("meta", {}))


# ---------------------------------------------------------------------------
# Toy corpus
# ---------------------------------------------------------------------------

def _natural_images():
    from skimage import data

    names = ["astronaut", "coffee", "chelsea", "rocket", "immunohistochemistry", "hubble_deep_field",
             "colorwheel", "camera", "moon", "brick", "grass", "gravel", "coins", "clock", "cell"]
    out = []
    for name in names:
        im = np.asarray(getattr(data, name)())
        if im.ndim == 2:
            im = np.repeat(im[..., None], 3, axis=2)
        out.append((name, im[..., :3].astype(np.uint8)))
    return out


def make_toy_corpus(root, n_low: int = 8, n_normal: int = 8, size: int = 64, seed: int = 0) -> Path:
    """Write an unpaired ``low/`` + ``normal/`` corpus cut from scikit-image's sample photos.

    Low-light images are crops from *different* positions than the normal
    ones, darkened with a gamma curve, a gain of ~0.25 and sensor-like noise.
    """
    rng = np.random.default_rng(seed)
    root = Path(root)
    (root / "low").mkdir(parents=True, exist_ok=True)
    (root / "normal").mkdir(parents=True, exist_ok=True)
    photos = [im for _, im in _natural_images()[:7]]

    def crop(im):
        side = int(rng.integers(size, min(im.shape[:2]) + 1))
        top = int(rng.integers(im.shape[0] - side + 1))
        left = int(rng.integers(im.shape[1] - side + 1))
        patch = Image.fromarray(im[top:top + side, left:left + side]).resize((size, size), Image.BILINEAR)
        return np.asarray(patch, dtype=np.float64) / 255.0

    for k in range(n_normal):
        img = crop(photos[k % len(photos)])
        Image.fromarray(np.rint(img * 255).astype(np.uint8)).save(root / "normal" / f"n{k:03d}.png")
    for k in range(n_low):
        img = crop(photos[(k + 3) % len(photos)])
        dark = rng.uniform(0.15, 0.35) * img ** rng.uniform(1.4, 2.2)
        dark = dark + rng.normal(0.0, 0.01, dark.shape)
        Image.fromarray(np.clip(np.rint(dark * 255), 0, 255).astype(np.uint8)).save(root / "low" / f"l{k:03d}.png")
    return root
