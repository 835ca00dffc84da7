"""Shared-encoder generators and multi-branch discriminators.

Encoders are keyed by the domain they read.  ``encoders["L"]`` encodes
low-light images: it is the front half of G_{L->N} and, when sharing is on,
the very same module is the feature extractor of the discriminator that
judges low-light images (``discriminators["L"]``).  Likewise for ``"N"``.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from umle.attention import CPAM
from umle.data import extract_local_patch
from umle.errors import ShapeError
from umle.filters import DEFAULT_KERNEL, KernelSpec, build_pyramid, frequency_split

DIRECTIONS = {"LN": ("L", "N"), "NL": ("N", "L")}
BRANCHES = ("color", "texture", "scale_0", "scale_1", "scale_2", "local")


@dataclass(frozen=True)
class ArchConfig:
    base_channels: int = 32
    n_down: int = 2
    n_res: int = 3
    scales: int = 3
    local_patch: int = 10

    def __post_init__(self):
        if self.scales != 3 or self.local_patch != 10:
            raise ValueError("scales is fixed at 3 and local_patch at 10")
        if self.base_channels < 1 or self.n_down < 0 or self.n_res < 0:
            raise ValueError(f"invalid architecture {self}")

    @property
    def feature_channels(self) -> int:
        return self.base_channels * 2**self.n_down


def _conv(cin, cout, k, stride=1):
    return nn.Conv2d(cin, cout, k, stride=stride, padding=k // 2, padding_mode="reflect")


class Encoder(nn.Module):
    """Conv stem + ``n_down`` stride-2 blocks, each with instance norm and ReLU."""

    def __init__(self, arch: ArchConfig):
        super().__init__()
        self.arch = arch
        c = arch.base_channels
        layers = [_conv(3, c, 7), nn.InstanceNorm2d(c, affine=True), nn.ReLU()]
        for _ in range(arch.n_down):
            layers += [_conv(c, 2 * c, 3, stride=2), nn.InstanceNorm2d(2 * c, affine=True), nn.ReLU()]
            c *= 2
        self.net = nn.Sequential(*layers)

    def forward(self, x):
        if x.dim() != 4 or x.shape[1] != 3:
            raise ShapeError(f"encoder expects (N, 3, H, W), got {tuple(x.shape)}")
        factor = 2**self.arch.n_down
        h, w = x.shape[-2:]
        # instance norm needs at least 2x2 outputs
        if h % factor or w % factor or min(h, w) < max(4, 2 * factor):
            raise ShapeError(f"encoder needs H, W divisible by {factor} and >= {max(4, 2 * factor)}, got {h}x{w}")
        return self.net(x)


class AdaLIN(nn.Module):
    """Per-channel blend of instance-norm and layer-norm statistics.

    ``rho`` is kept in [0, 1] by the optimizer, which clamps every parameter
    named ``*.rho`` after each step.
    """

    def __init__(self, channels: int, eps: float = 1e-5, rho_init: float = 0.9):
        super().__init__()
        self.eps = eps
        # rank-1 so gradient centralization leaves them alone
        self.rho = nn.Parameter(torch.full((channels,), rho_init))
        self.gamma = nn.Parameter(torch.ones(channels))
        self.beta = nn.Parameter(torch.zeros(channels))

    def forward(self, x):
        in_mean = x.mean(dim=(2, 3), keepdim=True)
        in_var = x.var(dim=(2, 3), keepdim=True, unbiased=False)
        ln_mean = x.mean(dim=(1, 2, 3), keepdim=True)
        ln_var = x.var(dim=(1, 2, 3), keepdim=True, unbiased=False)
        x_in = (x - in_mean) / torch.sqrt(in_var + self.eps)
        x_ln = (x - ln_mean) / torch.sqrt(ln_var + self.eps)
        rho = self.rho.view(1, -1, 1, 1)
        mixed = rho * x_in + (1 - rho) * x_ln
        return mixed * self.gamma.view(1, -1, 1, 1) + self.beta.view(1, -1, 1, 1)


class ResBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = _conv(channels, channels, 3)
        self.norm1 = AdaLIN(channels)
        self.conv2 = _conv(channels, channels, 3)
        self.norm2 = AdaLIN(channels)

    def forward(self, x):
        y = F.relu(self.norm1(self.conv1(x)))
        return x + self.norm2(self.conv2(y))


class Decoder(nn.Module):
    """Residual AdaLIN blocks, a CPAM, then nearest-neighbour upsampling back to RGB in [0, 1]."""

    def __init__(self, arch: ArchConfig, use_cpam: bool = True, pixel_form: str = "textual"):
        super().__init__()
        c = arch.feature_channels
        self.in_channels = c
        self.blocks = nn.Sequential(*[ResBlock(c) for _ in range(arch.n_res)])
        self.cpam = CPAM(c, pixel_form=pixel_form) if use_cpam else nn.Identity()
        ups = []
        for _ in range(arch.n_down):
            ups += [nn.Upsample(scale_factor=2, mode="nearest"), _conv(c, c // 2, 3), AdaLIN(c // 2), nn.ReLU()]
            c //= 2
        self.up = nn.Sequential(*ups)
        self.to_rgb = _conv(c, 3, 7)

    def forward(self, f):
        if f.dim() != 4 or f.shape[1] != self.in_channels:
            raise ShapeError(f"decoder expects (N, {self.in_channels}, h, w), got {tuple(f.shape)}")
        y = self.up(self.cpam(self.blocks(f)))
        return (torch.tanh(self.to_rgb(y)) + 1) / 2


class Head(nn.Module):
    """Three conv layers ending in a 1-channel raw score map (no sigmoid)."""

    def __init__(self, in_channels: int, hidden: int):
        super().__init__()
        self.net = nn.Sequential(
            _conv(in_channels, hidden, 3), nn.ReLU(),
            _conv(hidden, hidden, 3), nn.ReLU(),
            nn.Conv2d(hidden, 1, 1),
        )

    def forward(self, x):
        return self.net(x)


class Discriminator(nn.Module):
    """Color, texture, three-scale and 10x10 local branches over one encoder."""

    def __init__(self, encoder: Encoder, arch: ArchConfig, branches=BRANCHES,
                 use_cpam: bool = True, pixel_form: str = "textual", kernel: KernelSpec = DEFAULT_KERNEL):
        super().__init__()
        unknown = set(branches) - set(BRANCHES)
        if unknown or not branches:
            raise ValueError(f"invalid branch set {branches}")
        self.branches = tuple(b for b in BRANCHES if b in branches)
        self.encoder = encoder
        self.kernel = kernel
        c = arch.feature_channels
        hidden = 2 * arch.base_channels

        def refine():
            return CPAM(c, pixel_form=pixel_form) if use_cpam else nn.Identity()

        self.refine = nn.ModuleDict()
        self.heads = nn.ModuleDict()
        for b in self.branches:
            if b in ("color", "texture"):
                self.refine[b] = refine()
            self.heads[b] = Head(3 if b == "local" else c, hidden)

    def forward(self, x, patch_key=(0, 0)):
        # Full-resolution inputs of the color, texture and scale_0 branches go
        # through the encoder as one batch; instance norm keeps samples independent.
        n = x.shape[0]
        full, names = [], []
        if "color" in self.branches or "texture" in self.branches:
            low, high = frequency_split(x, self.kernel)
            for b, part in (("color", low), ("texture", high)):
                if b in self.branches:
                    full.append(part.to(x.dtype))
                    names.append(b)
        if "scale_0" in self.branches:
            full.append(x)
            names.append("scale_0")
        feats = {}
        if full:
            for b, f in zip(names, self.encoder(torch.cat(full)).split(n)):
                feats[b] = self.refine[b](f) if b in self.refine else f
        if "scale_1" in self.branches or "scale_2" in self.branches:
            for i, level in enumerate(build_pyramid(x, 3)[1:], 1):
                if f"scale_{i}" in self.branches:
                    feats[f"scale_{i}"] = self.encoder(level)
        scores = {b: self.heads[b](feats[b]) for b in self.branches if b != "local"}
        if "local" in self.branches:
            seed, iteration = patch_key
            scores["local"] = self.heads["local"](extract_local_patch(x, seed, iteration))
        return scores


class UMLE(nn.Module):
    """Two generators and two discriminators with optional encoder sharing."""

    def __init__(self, arch: ArchConfig = ArchConfig(), share_encoder: bool = True, branches=BRANCHES,
                 use_cpam: bool = True, pixel_form: str = "textual"):
        super().__init__()
        self.arch = arch
        self.share_encoder = share_encoder
        self.encoders = nn.ModuleDict({d: Encoder(arch) for d in ("L", "N")})
        self.decoders = nn.ModuleDict({k: Decoder(arch, use_cpam, pixel_form) for k in DIRECTIONS})
        self.discriminators = nn.ModuleDict({
            d: Discriminator(self.encoders[d] if share_encoder else Encoder(arch), arch,
                             branches, use_cpam, pixel_form)
            for d in ("L", "N")
        })

    @property
    def branches(self):
        return self.discriminators["N"].branches

    def encode(self, x, direction: str):
        return self.encoders[DIRECTIONS[direction][0]](x)

    def decode(self, f, direction: str):
        return self.decoders[direction](f)

    def generate(self, x, direction: str):
        return self.decode(self.encode(x, direction), direction)

    def discriminate(self, x, domain: str, patch_key=(0, 0)):
        return self.discriminators[domain](x, patch_key)

    def _named(self, modules) -> list[tuple[str, nn.Parameter]]:
        names = {id(p): n for n, p in self.named_parameters()}
        seen, out = set(), []
        for m in modules:
            for p in m.parameters():
                if id(p) not in seen:
                    seen.add(id(p))
                    out.append((names[id(p)], p))
        return out

    def generator_parameters(self):
        return self._named([self.encoders["L"], self.encoders["N"], self.decoders["LN"], self.decoders["NL"]])

    def discriminator_parameters(self):
        return self._named([self.discriminators["L"], self.discriminators["N"]])


def _count(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


def count_params(model: UMLE) -> list[dict]:
    """Per-component parameter counts; a shared encoder is listed once with its users.

    The counts sum to ``sum(p.numel() for p in model.parameters())``.
    """
    rows = []
    for d, (src, dst) in (("L", ("L", "N")), ("N", ("N", "L"))):
        direction = src + dst
        users = [f"G_{src}->{dst}"] + ([f"D_{d}"] if model.share_encoder else [])
        rows.append({"component": f"encoder_{d}", "params": _count(model.encoders[d]), "shared_by": users})
    for k, (src, dst) in DIRECTIONS.items():
        rows.append({"component": f"decoder_{k}", "params": _count(model.decoders[k]), "shared_by": [f"G_{src}->{dst}"]})
    for d, disc in model.discriminators.items():
        if not model.share_encoder:
            rows.append({"component": f"D_{d}.encoder", "params": _count(disc.encoder), "shared_by": [f"D_{d}"]})
        for b in disc.branches:
            n = _count(disc.heads[b]) + (_count(disc.refine[b]) if b in disc.refine else 0)
            rows.append({"component": f"D_{d}.{b}", "params": n, "shared_by": [f"D_{d}"]})
    return rows


def generator_param_count(model: UMLE, direction: str = "LN") -> int:
    return _count(model.encoders[DIRECTIONS[direction][0]]) + _count(model.decoders[direction])


def format_param_table(rows) -> str:
    width = max(len(r["component"]) for r in rows)
    lines = [f"{'component':<{width}}  {'params':>10}  shared_by"]
    for r in rows:
        lines.append(f"{r['component']:<{width}}  {r['params']:>10,}  {', '.join(r['shared_by'])}")
    lines.append(f"{'total':<{width}}  {sum(r['params'] for r in rows):>10,}")
    return "\n".join(lines)
