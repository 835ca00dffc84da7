"""Channel-pixel attention on a small feature map.

Channel attention rescales each channel by one weight from its pooled mean.
Pixel attention then rescales every pixel by one weight built from the
channel mean and channel max at that pixel.  The module adds the result back
to its input, so a closed attention path leaves features untouched.

Run:  python3 demos/attention.py
"""

import torch

from umle.attention import CPAM

torch.manual_seed(0)
module = CPAM(4)
x = torch.randn(1, 4, 8, 8)

# Look inside: the per-channel weights and the per-pixel weight map.
with torch.no_grad():
    pooled = x.mean(dim=(2, 3))
    omega = module.cpa.channel.weights(x).view(-1)
    s = module.cpa.pixel.attention(module.cpa.channel(x))
print("pooled channel means ", pooled.numpy().round(3))
print("channel weights      ", omega.numpy().round(3))
print("pixel weights range  ", float(s.min()), float(s.max()))

y = module(x)
print("output shape", tuple(y.shape), "changed:", not torch.equal(x, y))

# Drive the pixel projection far negative: every weight becomes zero and the
# residual connection returns the input unchanged.
with torch.no_grad():
    module.cpa.pixel.proj.weight.zero_()
    module.cpa.pixel.proj.bias.fill_(-1e4)
print("closed attention path returns input:", torch.equal(module(x), x))
