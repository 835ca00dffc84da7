"""Adversarial, cycle, color, preserving and identity losses and their weighted sum."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

ADVERSARIAL_FORMS = ("ls", "log")
TERMS = ("adv", "cyc", "color", "pre", "idt")


@dataclass(frozen=True)
class LossWeights:
    w_adv: float = 1.0
    w_cyc: float = 100.0
    w_color: float = 0.005
    w_pre: float = 0.005
    w_idt: float = 10.0

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not (v >= 0 and math.isfinite(v)):
                raise ValueError(f"{k} must be a finite non-negative number, got {v}")

    def as_dict(self) -> dict:
        return asdict(self)


def adversarial_loss(scores_real, scores_fake, side: str, form: str = "ls") -> torch.Tensor:
    """Loss for one score map.

    ``side="D"``: real pushed to 1, fake to 0.  ``side="G"``: fake pushed to 1
    (``scores_real`` is ignored).  ``form="log"`` uses the logistic loss on the
    raw scores instead of squared distance.
    """
    if form not in ADVERSARIAL_FORMS:
        raise ValueError(f"adversarial form must be one of {ADVERSARIAL_FORMS}, got {form!r}")
    if side == "D":
        if form == "ls":
            return ((scores_real - 1) ** 2).mean() + (scores_fake ** 2).mean()
        return (F.binary_cross_entropy_with_logits(scores_real, torch.ones_like(scores_real))
                + F.binary_cross_entropy_with_logits(scores_fake, torch.zeros_like(scores_fake)))
    if side == "G":
        if form == "ls":
            return ((scores_fake - 1) ** 2).mean()
        return F.binary_cross_entropy_with_logits(scores_fake, torch.ones_like(scores_fake))
    raise ValueError(f"side must be 'D' or 'G', got {side!r}")


def branch_adversarial(real: dict | None, fake: dict, side: str, form: str = "ls"):
    """Equal-weight mean of :func:`adversarial_loss` over the branches present in ``fake``.

    Returns ``(mean, {branch: loss})``.
    """
    per_branch = {b: adversarial_loss(None if real is None else real[b], s, side, form) for b, s in fake.items()}
    return torch.stack(list(per_branch.values())).mean(), per_branch


def cycle_loss(x, x_cycled) -> torch.Tensor:
    return (x - x_cycled).abs().mean()


def identity_loss(x_target, g_of_x) -> torch.Tensor:
    return (x_target - g_of_x).abs().mean()


def color_loss(color_scores_fake, form: str = "ls") -> torch.Tensor:
    """Generator-side realism of the color branch alone (scores of the blurred fake)."""
    return adversarial_loss(None, color_scores_fake, "G", form)


class RandomPerceptual(nn.Module):
    """Frozen four-layer conv stack with seeded random weights.

    Stands in for pretrained VGG-16 features.  ``layer_index`` (1-4) selects
    which ReLU output is compared.
    """

    widths = (16, 32, 32, 64)
    strides = (1, 2, 1, 2)

    def __init__(self, layer_index: int = 4, seed: int = 1234):
        super().__init__()
        if not 1 <= layer_index <= len(self.widths):
            raise ValueError(f"layer_index must be in 1..{len(self.widths)}")
        self.layer_index = layer_index
        gen = torch.Generator().manual_seed(seed)
        layers, cin = [], 3
        for cout, stride in zip(self.widths[:layer_index], self.strides):
            conv = nn.Conv2d(cin, cout, 3, stride=stride, padding=1)
            bound = math.sqrt(6.0 / (cin * 9))
            with torch.no_grad():
                conv.weight.copy_(torch.empty_like(conv.weight).uniform_(-bound, bound, generator=gen))
                conv.bias.zero_()
            layers += [conv, nn.ReLU()]
            cin = cout
        self.net = nn.Sequential(*layers)
        self.requires_grad_(False)
        self.eval()

    def forward(self, x):
        return self.net(x * 2 - 1)


class VGGFeatures(nn.Module):
    """Frozen torchvision VGG-16 truncated after ``layer_index`` modules of ``features``.

    Weights must be supplied as a local state-dict file; nothing is downloaded.
    """

    def __init__(self, weights_path, layer_index: int = 23):
        super().__init__()
        from torchvision.models import vgg16

        model = vgg16(weights=None)
        model.load_state_dict(torch.load(weights_path, map_location="cpu"))
        self.net = model.features[:layer_index]
        self.register_buffer("mean", torch.tensor([0.485, 0.456, 0.406]).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor([0.229, 0.224, 0.225]).view(1, 3, 1, 1))
        self.requires_grad_(False)
        self.eval()

    def forward(self, x):
        return self.net((x - self.mean) / self.std)


def preserving_loss(x, y, extractor: nn.Module) -> torch.Tensor:
    """Mean squared feature distance, normalised by C * H * W of the feature map."""
    return ((extractor(x) - extractor(y)) ** 2).mean()


def total_loss(components: dict, weights: LossWeights = LossWeights()):
    """Weighted sum over the five terms; returns ``(total, {term: weighted value})``.

    Missing components count as zero.  Plain numbers are summed with
    ``math.fsum`` (correctly rounded); tensors keep the autograd graph.
    """
    w = weights.as_dict()
    breakdown = {t: w[f"w_{t}"] * components.get(t, 0.0) for t in TERMS}
    if not any(isinstance(v, torch.Tensor) for v in breakdown.values()):
        return math.fsum(breakdown.values()), breakdown
    total = 0.0
    for t in TERMS:
        total = total + breakdown[t]
    return total, breakdown
