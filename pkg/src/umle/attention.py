"""Channel-and-pixel attention (CPA) and its residual wrapper (CPAM)."""

from __future__ import annotations

import math

import torch
import torch.nn as nn

PIXEL_FORMS = ("textual", "literal")


def global_avg_pool(x: torch.Tensor) -> torch.Tensor:
    """(N, C, H, W) -> (N, C, 1, 1) per-channel spatial mean."""
    return x.mean(dim=(2, 3), keepdim=True)


def _fan_in_uniform_(conv: nn.Module) -> None:
    w = conv.weight
    fan_in = w[0].numel()
    bound = 1.0 / math.sqrt(fan_in)
    with torch.no_grad():
        w.uniform_(-bound, bound)
        if conv.bias is not None:
            conv.bias.zero_()


class ChannelAttention(nn.Module):
    """Reweights channels by ``sigmoid(conv1d(avg_pool(x)))``; no channel reduction."""

    def __init__(self, kernel_size: int = 3):
        super().__init__()
        self.conv = nn.Conv1d(1, 1, kernel_size, padding=kernel_size // 2, bias=True)
        _fan_in_uniform_(self.conv)

    def weights(self, x: torch.Tensor) -> torch.Tensor:
        n, c = x.shape[:2]
        g = global_avg_pool(x).view(n, 1, c)
        return torch.sigmoid(self.conv(g)).view(n, c, 1, 1)

    def forward(self, x):
        return self.weights(x) * x


class PixelAttention(nn.Module):
    """Per-pixel gate over the channel-reweighted map.

    ``textual`` (default): channel-wise mean and max maps are concatenated,
    projected 2 -> 1 by a 1x1 conv and squashed with a sigmoid.

    ``literal``: ``cat(sigmoid(c), fc(c))`` followed by a second 1x1 "fully
    connected" projection back to C channels, used as the multiplier with no
    squashing.  Its coefficients are therefore unbounded.
    """

    def __init__(self, channels: int, form: str = "textual"):
        super().__init__()
        if form not in PIXEL_FORMS:
            raise ValueError(f"pixel attention form must be one of {PIXEL_FORMS}, got {form!r}")
        self.form = form
        if form == "textual":
            self.proj = nn.Conv2d(2, 1, 1, bias=True)
            _fan_in_uniform_(self.proj)
        else:
            self.fc_in = nn.Conv2d(channels, channels, 1, bias=True)
            self.fc_out = nn.Conv2d(2 * channels, channels, 1, bias=True)
            _fan_in_uniform_(self.fc_in)
            _fan_in_uniform_(self.fc_out)

    def attention(self, c_r: torch.Tensor) -> torch.Tensor:
        if self.form == "textual":
            a_map = c_r.mean(dim=1, keepdim=True)
            m_map = c_r.amax(dim=1, keepdim=True)
            return torch.sigmoid(self.proj(torch.cat([a_map, m_map], dim=1)))
        p_r = torch.cat([torch.sigmoid(c_r), self.fc_in(c_r)], dim=1)
        return self.fc_out(p_r)

    def forward(self, c_r):
        return self.attention(c_r) * c_r


class CPA(nn.Module):
    def __init__(self, channels: int, kernel_size: int = 3, pixel_form: str = "textual"):
        super().__init__()
        self.channel = ChannelAttention(kernel_size)
        self.pixel = PixelAttention(channels, pixel_form)

    def forward(self, x):
        return self.pixel(self.channel(x))


class CPAM(nn.Module):
    """``x + CPA(x)``."""

    def __init__(self, channels: int, kernel_size: int = 3, pixel_form: str = "textual"):
        super().__init__()
        self.cpa = CPA(channels, kernel_size, pixel_form)

    def forward(self, x):
        return x + self.cpa(x)


# Thin functional wrappers, mirroring the module API for callers holding parameters.

def channel_attention(x: torch.Tensor, module: ChannelAttention) -> torch.Tensor:
    return module(x)


def pixel_attention(c_r: torch.Tensor, module: PixelAttention) -> torch.Tensor:
    return module(c_r)


def cpam(x: torch.Tensor, module: CPAM) -> torch.Tensor:
    return module(x)
