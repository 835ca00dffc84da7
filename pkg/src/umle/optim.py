"""Adam with gradient centralization and decoupled weight decay."""

from __future__ import annotations

import numpy as np
import torch

from umle.errors import NonFiniteGradient


def centralize_gradient(grad: torch.Tensor) -> torch.Tensor:
    """Subtract the mean over every axis but the first (output) axis; rank < 2 is untouched."""
    if grad.dim() < 2:
        return grad
    return grad - grad.mean(dim=tuple(range(1, grad.dim())), keepdim=True)


def clip_grad_norm(grads: list[torch.Tensor], max_norm: float) -> float:
    """Scale ``grads`` in place so their global L2 norm is at most ``max_norm``; returns the pre-clip norm."""
    norms = torch._foreach_norm(grads)
    total = float(torch.linalg.vector_norm(torch.stack(norms).double()))
    if max_norm and total > max_norm:
        torch._foreach_mul_(grads, max_norm / (total + 1e-12))
    return total


class AdamGC:
    """Adam (decoupled weight decay) over a list of ``(name, parameter)`` pairs.

    Parameters whose name ends in ``rho`` are clamped to [0, 1] after each step.
    """

    def __init__(self, named_params, lr=1e-4, weight_decay=1e-4, betas=(0.9, 0.999), eps=1e-8,
                 centralize=True):
        self.named_params = list(named_params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.betas = betas
        self.eps = eps
        self.centralize = centralize
        self.t = 0
        self.m = {n: torch.zeros_like(p) for n, p in self.named_params}
        self.v = {n: torch.zeros_like(p) for n, p in self.named_params}

    @property
    def names(self):
        return [n for n, _ in self.named_params]

    @torch.no_grad()
    def step(self, grads, iteration=None):
        """Apply one update.  ``grads`` is aligned with ``named_params`` (None means zero)."""
        params = [p for _, p in self.named_params]
        grads = [torch.zeros_like(p) if g is None else g for p, g in zip(params, grads)]
        if not bool(torch.isfinite(torch.stack(torch._foreach_norm(grads))).all()):
            bad = next(n for (n, _), g in zip(self.named_params, grads) if not torch.isfinite(g).all())
            raise NonFiniteGradient(bad, iteration)
        if self.centralize:
            grads = [centralize_gradient(g) for g in grads]
        self.t += 1
        b1, b2 = self.betas
        bc1 = 1 - b1**self.t
        bc2 = 1 - b2**self.t
        ms = [self.m[n] for n in self.names]
        vs = [self.v[n] for n in self.names]
        torch._foreach_mul_(ms, b1)
        torch._foreach_add_(ms, grads, alpha=1 - b1)
        torch._foreach_mul_(vs, b2)
        torch._foreach_addcmul_(vs, grads, grads, value=1 - b2)
        # p <- p * (1 - lr * wd) - lr * m_hat / (sqrt(v_hat) + eps)
        denom = torch._foreach_div(vs, bc2)
        torch._foreach_sqrt_(denom)
        torch._foreach_add_(denom, self.eps)
        update = torch._foreach_div(ms, denom)
        torch._foreach_mul_(params, 1 - self.lr * self.weight_decay)
        torch._foreach_add_(params, update, alpha=-self.lr / bc1)
        for name, p in self.named_params:
            if name.endswith("rho"):
                p.clamp_(0.0, 1.0)

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {"step": np.array(self.t, dtype=np.int64)}
        for n in self.names:
            out[f"m/{n}"] = self.m[n].detach().cpu().numpy().copy()
            out[f"v/{n}"] = self.v[n].detach().cpu().numpy().copy()
        return out

    def load_state_dict(self, state: dict) -> None:
        self.t = int(state["step"])
        for n in self.names:
            self.m[n].copy_(torch.from_numpy(np.asarray(state[f"m/{n}"])))
            self.v[n].copy_(torch.from_numpy(np.asarray(state[f"v/{n}"])))
