"""Alternating discriminator / generator optimisation with resumable checkpoints."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from umle.config import TrainConfig
from umle.data import Checkpoint, load_checkpoint, sample_unpaired, save_checkpoint
from umle.errors import UMLEError
from umle.losses import (LossWeights, RandomPerceptual, VGGFeatures, branch_adversarial, color_loss, cycle_loss,
                         identity_loss, preserving_loss, total_loss)
from umle.networks import UMLE, ArchConfig
from umle.optim import AdamGC, clip_grad_norm

log = logging.getLogger(__name__)

TRACE_FIELDS = ("iter", "adv_d", "adv_g", "cyc", "color", "pre", "idt", "total_g", "wall_ms")


@dataclass
class LossBreakdown:
    iter: int
    adv_d: float
    adv_g: float
    cyc: float
    color: float
    pre: float
    idt: float
    total_g: float
    wall_ms: float
    # "D_N/color", "G_N/scale_0", ... for every active branch
    branches: dict = field(default_factory=dict)

    def losses(self) -> tuple:
        """The deterministic part of a trace row (everything except wall time)."""
        return (self.iter, self.adv_d, self.adv_g, self.cyc, self.color, self.pre, self.idt, self.total_g)


def build_model(cfg: TrainConfig, dtype=torch.float32) -> UMLE:
    torch.manual_seed(cfg.seed)
    model = UMLE(cfg.arch, share_encoder=cfg.shares_encoder, branches=cfg.branches,
                 use_cpam=cfg.uses_cpam, pixel_form=cfg.pixel_attention_form)
    return model.to(dtype)


def build_extractor(cfg: TrainConfig, dtype=torch.float32):
    if cfg.vgg_weights:
        return VGGFeatures(cfg.vgg_weights).to(dtype)
    return RandomPerceptual(cfg.perceptual_layer).to(dtype)


class Trainer:
    """Holds the model, both optimizers and the iteration counter."""

    def __init__(self, cfg: TrainConfig, low=None, normal=None, dtype=torch.float32):
        self.cfg = cfg
        self.low, self.normal = low, normal
        self.model = build_model(cfg, dtype)
        self.extractor = build_extractor(cfg, dtype)
        self.weights = cfg.effective_weights
        d_params = self.model.discriminator_parameters()
        if cfg.shares_encoder and not cfg.d_updates_encoder:
            d_params = [(n, p) for n, p in d_params if not n.startswith("encoders.")]
        self.opt_g = AdamGC(self.model.generator_parameters(), cfg.lr, cfg.weight_decay)
        self.opt_d = AdamGC(d_params, cfg.lr, cfg.weight_decay)
        self.iteration = 0

    def _grads(self, loss, opt: AdamGC):
        params = [p for _, p in opt.named_params]
        grads = torch.autograd.grad(loss, params, allow_unused=True)
        grads = [torch.zeros_like(p) if g is None else g for p, g in zip(params, grads)]
        if self.cfg.clip_norm:
            clip_grad_norm(grads, self.cfg.clip_norm)
        return grads

    def _judge(self, real, fake, domain, key):
        """Score real and fake images in one discriminator batch."""
        scores = self.model.discriminate(torch.cat([real, fake]), domain, key)
        return ({b: s[:1] for b, s in scores.items()}, {b: s[1:] for b, s in scores.items()})

    def d_step(self, x_low, x_normal, iteration: int):
        m, form = self.model, self.cfg.adversarial_form
        key = (self.cfg.seed, iteration)
        with torch.no_grad():
            fake_n = m.generate(x_low, "LN")
            fake_l = m.generate(x_normal, "NL")
        loss_n, br_n = branch_adversarial(*self._judge(x_normal, fake_n, "N", key), "D", form)
        loss_l, br_l = branch_adversarial(*self._judge(x_low, fake_l, "L", key), "D", form)
        loss = loss_n + loss_l
        self.opt_d.step(self._grads(loss, self.opt_d), iteration)
        branches = {f"D_N/{b}": v.item() for b, v in br_n.items()}
        branches.update({f"D_L/{b}": v.item() for b, v in br_l.items()})
        return loss.item(), branches

    def g_step(self, x_low, x_normal, iteration: int):
        m, form = self.model, self.cfg.adversarial_form
        key = (self.cfg.seed, iteration)
        # Three batched generator calls cover translation, identity and cycle passes.
        fake_n, idt_n = m.generate(torch.cat([x_low, x_normal]), "LN").split(1)
        fake_l, idt_l, rec_l = m.generate(torch.cat([x_normal, x_low, fake_n]), "NL").split(1)
        rec_n = m.generate(fake_l, "LN")
        scores_n = m.discriminate(fake_n, "N", key)
        scores_l = m.discriminate(fake_l, "L", key)
        adv_n, br_n = branch_adversarial(None, scores_n, "G", form)
        adv_l, br_l = branch_adversarial(None, scores_l, "G", form)
        terms = {
            "adv": adv_n + adv_l,
            "cyc": cycle_loss(x_low, rec_l) + cycle_loss(x_normal, rec_n),
            "pre": preserving_loss(x_low, fake_n, self.extractor),
            "idt": identity_loss(x_normal, idt_n) + identity_loss(x_low, idt_l),
        }
        if "color" in scores_n and self.weights.w_color > 0:
            terms["color"] = color_loss(scores_n["color"], form)
        total, _ = total_loss(terms, self.weights)
        self.opt_g.step(self._grads(total, self.opt_g), iteration)
        values = {k: v.item() for k, v in terms.items()}
        branches = {f"G_N/{b}": v.item() for b, v in br_n.items()}
        branches.update({f"G_L/{b}": v.item() for b, v in br_l.items()})
        return values, total.item(), branches

    def train_step(self, x_low, x_normal, iteration: int | None = None) -> LossBreakdown:
        """One D update on detached fakes followed by one G update."""
        it = self.iteration if iteration is None else iteration
        t0 = time.perf_counter()
        adv_d, d_br = self.d_step(x_low, x_normal, it)
        terms, total, g_br = self.g_step(x_low, x_normal, it)
        wall_ms = (time.perf_counter() - t0) * 1e3
        self.iteration = it + 1
        return LossBreakdown(it, adv_d, terms["adv"], terms["cyc"], terms.get("color", 0.0), terms["pre"],
                             terms["idt"], total, wall_ms, {**d_br, **g_br})

    def step(self) -> LossBreakdown:
        x_low, x_normal = sample_unpaired(self.low, self.normal, self.cfg.seed, self.iteration)
        dtype = next(self.model.parameters()).dtype
        return self.train_step(x_low.to(dtype), x_normal.to(dtype))

    # -- persistence ---------------------------------------------------------

    def checkpoint(self) -> Checkpoint:
        params = {k: v.detach().cpu().numpy().copy() for k, v in self.model.state_dict().items()}
        optim = {f"G/{k}": v for k, v in self.opt_g.state_dict().items()}
        optim.update({f"D/{k}": v for k, v in self.opt_d.state_dict().items()})
        rng = {"seed": hex(self.cfg.seed), "next_iteration": hex(self.iteration)}
        return Checkpoint(self.iteration, params, optim, rng, self.cfg.digest(), {"config": self.cfg.to_dict()})

    def restore(self, ckpt: Checkpoint) -> None:
        state = {k: torch.from_numpy(np.asarray(v).copy()) for k, v in ckpt.params.items()}
        self.model.load_state_dict(state)
        self.opt_g.load_state_dict({k[2:]: v for k, v in ckpt.optimizer_state.items() if k.startswith("G/")})
        self.opt_d.load_state_dict({k[2:]: v for k, v in ckpt.optimizer_state.items() if k.startswith("D/")})
        self.iteration = int(ckpt.rng_state["next_iteration"], 16)


class TraceWriter:
    """Loss trace CSV plus a per-branch sidecar file."""

    def __init__(self, path, append: bool = False):
        self.path = Path(path)
        self.branch_path = self.path.with_name(self.path.stem + "_branches.csv")
        mode = "a" if append and self.path.exists() else "w"
        self._fh = open(self.path, mode, newline="")
        self._writer = csv.writer(self._fh)
        if mode == "w":
            self._writer.writerow(TRACE_FIELDS)
        self._bfh = open(self.branch_path, mode, newline="")
        self._bwriter = csv.writer(self._bfh)
        self._branch_keys = None
        self._new_branch_file = mode == "w"

    def write(self, row: LossBreakdown) -> None:
        d = asdict(row)
        self._writer.writerow([repr(d[k]) if isinstance(d[k], float) else d[k] for k in TRACE_FIELDS])
        if self._branch_keys is None:
            self._branch_keys = sorted(row.branches)
            if self._new_branch_file:
                self._bwriter.writerow(["iter", *self._branch_keys])
        self._bwriter.writerow([row.iter, *(repr(row.branches[k]) for k in self._branch_keys)])
        self._fh.flush()
        self._bfh.flush()

    def close(self):
        self._fh.close()
        self._bfh.close()


def read_trace(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: (int(v) if k == "iter" else float(v)) for k, v in row.items()} for row in csv.DictReader(fh)]


def train(cfg: TrainConfig, low, normal, output_dir=None, resume_from=None, allow_mismatch=False,
          until: int | None = None, progress=None) -> tuple[Checkpoint, list[LossBreakdown]]:
    """Run training up to ``until`` (default ``cfg.iterations``) iterations.

    Writes ``loss_trace.csv`` and checkpoints (``ckpt_XXXXXX.npz`` every
    ``cfg.checkpoint_every`` iterations, ``final.npz`` at the end) when
    ``output_dir`` is given.  Returns the final checkpoint and the trace of the
    iterations run by this call.
    """
    trainer = Trainer(cfg, low, normal)
    if resume_from is not None:
        ckpt = load_checkpoint(resume_from, expected_digest=cfg.digest(), allow_mismatch=allow_mismatch)
        trainer.restore(ckpt)
        log.info("resumed from %s at iteration %d", resume_from, trainer.iteration)
    until = cfg.iterations if until is None else until
    out = Path(output_dir) if output_dir is not None else None
    writer = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        writer = TraceWriter(out / "loss_trace.csv", append=resume_from is not None)
    trace = []
    try:
        while trainer.iteration < until:
            row = trainer.step()
            trace.append(row)
            if writer is not None:
                writer.write(row)
            if progress is not None:
                progress(row)
            if out is not None and cfg.checkpoint_every and trainer.iteration % cfg.checkpoint_every == 0:
                _save(trainer, out / f"ckpt_{trainer.iteration:06d}.npz")
        final = trainer.checkpoint()
        if out is not None:
            _save(trainer, out / "final.npz", final)
    finally:
        if writer is not None:
            writer.close()
    return final, trace


def _save(trainer: Trainer, path, ckpt=None):
    try:
        save_checkpoint(ckpt or trainer.checkpoint(), path)
    except OSError as exc:
        raise CheckpointWriteError(f"iteration {trainer.iteration}: cannot write {path}: {exc}") from exc


class CheckpointWriteError(UMLEError, OSError):
    pass


def load_generator(checkpoint_path, cfg: TrainConfig | None = None) -> UMLE:
    """Rebuild the model stored in a checkpoint (config taken from the file unless given)."""
    ckpt = load_checkpoint(checkpoint_path)
    if cfg is None:
        d = dict(ckpt.meta["config"])
        d["loss_weights"] = LossWeights(**d["loss_weights"])
        d["arch"] = ArchConfig(**d["arch"])
        d["ablation"] = frozenset(d["ablation"])
        cfg = TrainConfig(**d)
    model = build_model(cfg)
    model.load_state_dict({k: torch.from_numpy(np.asarray(v).copy()) for k, v in ckpt.params.items()})
    model.eval()
    return model
