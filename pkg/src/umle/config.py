"""Training configuration and the flat ``key = value`` run-config format."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from umle.data import config_digest
from umle.errors import ConfigError
from umle.losses import ADVERSARIAL_FORMS, LossWeights
from umle.networks import BRANCHES, ArchConfig

ABLATIONS = ("NO_COLOR_D", "NO_TEXTURE_D", "NO_MULTISCALE_D", "NO_CPAM", "NO_SHARED_ENCODER")

# Keys that only control run length or bookkeeping; they do not enter the digest,
# so a run can be resumed with a longer horizon.
_UNDIGESTED = {"iterations", "checkpoint_every", "data_root", "output_dir", "workers", "eval_resolution"}


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    iterations: int = 500
    lr: float = 1e-4
    weight_decay: float = 1e-4
    loss_weights: LossWeights = field(default_factory=LossWeights)
    ablation: frozenset = frozenset()
    arch: ArchConfig = field(default_factory=ArchConfig)
    resolution: int = 64
    adversarial_form: str = "ls"
    pixel_attention_form: str = "textual"
    share_encoder: bool = True
    d_updates_encoder: bool = True
    clip_norm: float = 10.0
    perceptual_layer: int = 4
    vgg_weights: str | None = None
    checkpoint_every: int = 0
    data_root: str | None = None
    output_dir: str = "runs/default"
    workers: int = 1
    eval_resolution: int = 192

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if not self.lr > 0:
            raise ConfigError("lr must be > 0")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0")
        bad = set(self.ablation) - set(ABLATIONS)
        if bad:
            raise ConfigError(f"unknown ablation(s) {sorted(bad)}; choose from {ABLATIONS}")
        if self.adversarial_form not in ADVERSARIAL_FORMS:
            raise ConfigError(f"adversarial_form must be one of {ADVERSARIAL_FORMS}")
        if self.pixel_attention_form not in ("textual", "literal"):
            raise ConfigError("pixel_attention_form must be 'textual' or 'literal'")
        # The coarsest pyramid level (resolution / 4) must still encode to at least 2x2.
        step = 4 * 2**self.arch.n_down
        if self.resolution % step or self.resolution < max(16, 2 * step):
            raise ConfigError(f"resolution {self.resolution} must be >= {max(16, 2 * step)} and divisible by {step}")
        if not self.branches:
            raise ConfigError("the ablation set removes every discriminator branch")

    @property
    def branches(self) -> tuple[str, ...]:
        drop = set()
        if "NO_COLOR_D" in self.ablation:
            drop.add("color")
        if "NO_TEXTURE_D" in self.ablation:
            drop.add("texture")
        if "NO_MULTISCALE_D" in self.ablation:
            drop |= {"scale_0", "scale_1", "scale_2", "local"}
        return tuple(b for b in BRANCHES if b not in drop)

    @property
    def shares_encoder(self) -> bool:
        return self.share_encoder and "NO_SHARED_ENCODER" not in self.ablation

    @property
    def uses_cpam(self) -> bool:
        return "NO_CPAM" not in self.ablation

    @property
    def effective_weights(self) -> LossWeights:
        if "NO_COLOR_D" in self.ablation:
            return replace(self.loss_weights, w_color=0.0)
        return self.loss_weights

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ablation"] = sorted(self.ablation)
        return d

    def digest(self) -> str:
        return config_digest({k: v for k, v in self.to_dict().items() if k not in _UNDIGESTED})

    def with_overrides(self, **kw) -> "TrainConfig":
        return replace(self, **kw)


_BOOL = {"on": True, "off": False, "true": True, "false": False, "yes": True, "no": False, "1": True, "0": False}


def _parse_bool(key, value):
    try:
        return _BOOL[value.lower()]
    except KeyError:
        raise ConfigError(f"{key}: expected on/off, got {value!r}") from None


def parse_config(text: str) -> TrainConfig:
    """Parse ``key = value`` lines (``#`` starts a comment) into a :class:`TrainConfig`."""
    top, weights, arch = {}, {}, {}
    scalar = {f.name: f.type for f in fields(TrainConfig)}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            if key in LossWeights.__dataclass_fields__:
                weights[key] = float(value)
            elif key in ("base_channels", "n_down", "n_res"):
                arch[key] = int(value)
            elif key == "ablation":
                top[key] = frozenset(v.strip().upper() for v in value.split(",") if v.strip())
            elif key in ("share_encoder", "d_updates_encoder"):
                top[key] = _parse_bool(key, value)
            elif key in ("seed", "iterations", "resolution", "perceptual_layer", "checkpoint_every", "workers",
                         "eval_resolution"):
                top[key] = int(value)
            elif key in ("lr", "weight_decay", "clip_norm"):
                top[key] = float(value)
            elif key in ("adversarial_form", "pixel_attention_form", "data_root", "output_dir", "vgg_weights"):
                top[key] = value
            elif key in scalar:
                raise ConfigError(f"line {lineno}: {key!r} cannot be set from a config file")
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from exc
    try:
        return TrainConfig(loss_weights=LossWeights(**weights), arch=ArchConfig(**arch), **top)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> TrainConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def format_config(cfg: TrainConfig) -> str:
    d = cfg.to_dict()
    lines = [f"seed = {d['seed']}", f"iterations = {d['iterations']}", f"lr = {d['lr']}",
             f"weight_decay = {d['weight_decay']}"]
    lines += [f"{k} = {v}" for k, v in d["loss_weights"].items()]
    lines += [f"{k} = {d['arch'][k]}" for k in ("base_channels", "n_down", "n_res")]
    lines += [f"resolution = {d['resolution']}", f"ablation = {','.join(d['ablation'])}",
              f"adversarial_form = {d['adversarial_form']}",
              f"pixel_attention_form = {d['pixel_attention_form']}",
              f"share_encoder = {'on' if d['share_encoder'] else 'off'}",
              f"d_updates_encoder = {'on' if d['d_updates_encoder'] else 'off'}",
              f"clip_norm = {d['clip_norm']}", f"perceptual_layer = {d['perceptual_layer']}",
              f"checkpoint_every = {d['checkpoint_every']}", f"output_dir = {d['output_dir']}",
              f"eval_resolution = {d['eval_resolution']}"]
    if d["data_root"]:
        lines.append(f"data_root = {d['data_root']}")
    if d["vgg_weights"]:
        lines.append(f"vgg_weights = {d['vgg_weights']}")
    return "\n".join(lines)
