"""Enhancement of arbitrary-size images and directory-level scoring."""

from __future__ import annotations

import csv
import time
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

from umle.data import IMAGE_SUFFIXES, save_png
from umle.metrics import PristineModel, entropy, niqe


@torch.no_grad()
def enhance(model, img: np.ndarray, direction: str = "LN") -> np.ndarray:
    """Translate one (3, H, W) image in [0, 1]; any H, W (reflect-padded to the encoder stride)."""
    factor = 2**model.arch.n_down
    x = torch.as_tensor(np.asarray(img, dtype=np.float32))[None]
    h, w = x.shape[-2:]
    ph, pw = (-h) % factor, (-w) % factor
    if ph or pw:
        x = F.pad(x, (0, pw, 0, ph), mode="reflect" if ph < h and pw < w else "replicate")
    dtype = next(model.parameters()).dtype
    y = model.generate(x.to(dtype), direction)[0, :, :h, :w]
    return y.float().numpy()


def read_image(path, size=None) -> np.ndarray:
    with Image.open(path) as im:
        im = im.convert("RGB")
        if size is not None and im.size != (size[1], size[0]):
            im = im.resize((size[1], size[0]), Image.BILINEAR)
        return np.asarray(im, dtype=np.float32).transpose(2, 0, 1) / 255.0


def list_images(directory) -> list[Path]:
    return sorted(p for p in Path(directory).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def enhance_dir(model, input_dir, output_dir, size=None, report=print) -> list[Path]:
    out_dir = Path(output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for path in list_images(input_dir):
        img = read_image(path, size)
        t0 = time.perf_counter()
        out = enhance(model, img)
        ms = (time.perf_counter() - t0) * 1e3
        target = out_dir / (path.stem + ".png")
        save_png(out, target)
        written.append(target)
        if report is not None:
            report(f"{path.name}\t{ms:.1f} ms")
    return written


def score_dir(input_dir, pristine: PristineModel | None = None, size=None) -> list[dict]:
    """Per-image NIQE and entropy followed by a ``mean`` row."""
    rows = []
    for path in list_images(input_dir):
        img = read_image(path, size)
        rows.append({"image": path.name, "niqe": niqe(img, pristine), "entropy": entropy(img)})
    if rows:
        rows.append({"image": "mean",
                     "niqe": float(np.mean([r["niqe"] for r in rows])),
                     "entropy": float(np.mean([r["entropy"] for r in rows]))})
    return rows


def write_rows(rows, path, fields) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)


def condition_label(ablation) -> str:
    """Row label for an ablation set, e.g. "with D_T, with D_M, w/o D_C"."""
    ablation = set(ablation)
    if not ablation:
        return "default configuration"
    parts = []
    for name, flag in (("D_C", "NO_COLOR_D"), ("D_T", "NO_TEXTURE_D"), ("D_M", "NO_MULTISCALE_D")):
        parts.append(f"w/o {name}" if flag in ablation else f"with {name}")
    if "NO_CPAM" in ablation:
        parts.append("w/o CPAF")
    if "NO_SHARED_ENCODER" in ablation:
        parts.append("w/o shared encoder")
    with_parts = [p for p in parts if p.startswith("with")]
    without = [p for p in parts if not p.startswith("with")]
    return ", ".join(with_parts + without)
