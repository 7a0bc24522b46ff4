"""Building blocks for supernet and discrete cells over the diffcore ops.

Modules collect their trainable tensors explicitly (no reflection); a
ForwardCtx carries the training/eval mode that drives normalization
statistics. Stride-2 paths round spatial dims up (ceil), so odd-sized
feature maps halve as 49 -> 25 -> 13.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import diffcore as dc
from ..diffcore import Tensor


@dataclass
class ForwardCtx:
    """training=True: batch statistics (and running updates); else frozen."""

    training: bool = True


class Module:
    def __init__(self):
        self._params: list[Tensor] = []
        self._children: list[Module] = []

    def _param(self, t: Tensor) -> Tensor:
        self._params.append(t)
        return t

    def _child(self, m: "Module") -> "Module":
        self._children.append(m)
        return m

    def parameters(self) -> list[Tensor]:
        out = list(self._params)
        for c in self._children:
            out.extend(c.parameters())
        return out

    def norm_stats(self) -> list[dc.NormStats]:
        out = []
        for c in self._children:
            out.extend(c.norm_stats())
        return out

    def forward(self, x: Tensor, ctx: ForwardCtx) -> Tensor:
        raise NotImplementedError


def conv_weight(rng, c_out, c_in, kh, kw, dtype) -> Tensor:
    fan_in = c_in * kh * kw
    std = np.sqrt(2.0 / fan_in)
    return Tensor(rng.normal(0.0, std, size=(c_out, c_in, kh, kw)).astype(dtype),
                  requires_grad=True)


class AffineNorm(Module):
    def __init__(self, channels: int, affine: bool, dtype=np.float32):
        super().__init__()
        self.stats = dc.NormStats(channels, dtype=dtype)
        self.scale = self._param(Tensor(np.ones(channels, dtype=dtype),
                                        requires_grad=True)) if affine else None
        self.shift = self._param(Tensor(np.zeros(channels, dtype=dtype),
                                        requires_grad=True)) if affine else None

    def norm_stats(self) -> list[dc.NormStats]:
        return [self.stats]

    def forward(self, x, ctx):
        return dc.affine_norm(x, self.scale, self.shift, self.stats,
                              batch_stats=ctx.training,
                              update_stats=ctx.training)


class Conv(Module):
    def __init__(self, rng, c_in, c_out, kernel, stride=1, padding=0,
                 dilation=1, groups=1, dtype=np.float32):
        super().__init__()
        kh, kw = (kernel, kernel) if isinstance(kernel, int) else kernel
        self.weight = self._param(conv_weight(rng, c_out, c_in // groups,
                                              kh, kw, dtype))
        self.stride, self.padding = stride, padding
        self.dilation, self.groups = dilation, groups

    def forward(self, x, ctx):
        return dc.conv2d(x, self.weight, stride=self.stride,
                         padding=self.padding, dilation=self.dilation,
                         groups=self.groups)


class ReLUConvBN(Module):
    def __init__(self, rng, c_in, c_out, kernel, stride, padding,
                 affine, dtype=np.float32):
        super().__init__()
        self.conv = self._child(Conv(rng, c_in, c_out, kernel, stride,
                                     padding, dtype=dtype))
        self.bn = self._child(AffineNorm(c_out, affine, dtype))

    def forward(self, x, ctx):
        return self.bn.forward(self.conv.forward(dc.relu(x), ctx), ctx)


class SepConv(Module):
    """Separable conv applied twice (depthwise+pointwise, DARTS-style)."""

    def __init__(self, rng, c, kernel, stride, affine, dtype=np.float32):
        super().__init__()
        pad = kernel // 2
        self.blocks = []
        for s in (stride, 1):
            dw = Conv(rng, c, c, kernel, s, pad, groups=c, dtype=dtype)
            pw = Conv(rng, c, c, 1, dtype=dtype)
            bn = AffineNorm(c, affine, dtype)
            for m in (dw, pw, bn):
                self._child(m)
            self.blocks.append((dw, pw, bn))

    def forward(self, x, ctx):
        out = x
        for dw, pw, bn in self.blocks:
            out = bn.forward(pw.forward(dw.forward(dc.relu(out), ctx), ctx), ctx)
        return out


class DilConv(Module):
    def __init__(self, rng, c, kernel, stride, dilation, affine,
                 dtype=np.float32):
        super().__init__()
        pad = dilation * (kernel - 1) // 2
        self.dw = self._child(Conv(rng, c, c, kernel, stride, pad,
                                   dilation=dilation, groups=c, dtype=dtype))
        self.pw = self._child(Conv(rng, c, c, 1, dtype=dtype))
        self.bn = self._child(AffineNorm(c, affine, dtype))

    def forward(self, x, ctx):
        return self.bn.forward(
            self.pw.forward(self.dw.forward(dc.relu(x), ctx), ctx), ctx)


class Pool(Module):
    def __init__(self, kind: str, stride: int):
        super().__init__()
        self.kind, self.stride = kind, stride

    def forward(self, x, ctx):
        if self.kind == "max":
            return dc.max_pool2d(x, 3, stride=self.stride, padding=1)
        return dc.avg_pool2d(x, 3, stride=self.stride, padding=1)


class Identity(Module):
    def forward(self, x, ctx):
        return x


class Zero(Module):
    def __init__(self, stride: int):
        super().__init__()
        self.stride = stride

    def forward(self, x, ctx):
        return dc.zero_op(x, stride=self.stride)


def _pad_to_even(x: Tensor) -> Tensor:
    ph = x.shape[2] % 2
    pw = x.shape[3] % 2
    if ph or pw:
        return dc.pad2d(x, (0, ph, 0, pw))
    return x


class FactorizedReduce(Module):
    """Stride-2 two-branch 1x1 reduction; odd dims are padded to even
    first so the output is ceil(H/2) x ceil(W/2)."""

    def __init__(self, rng, c_in, c_out, affine, dtype=np.float32):
        super().__init__()
        co1 = c_out // 2
        self.conv1 = self._child(Conv(rng, c_in, co1, 1, stride=2, dtype=dtype))
        self.conv2 = self._child(Conv(rng, c_in, c_out - co1, 1, stride=2,
                                      dtype=dtype))
        self.bn = self._child(AffineNorm(c_out, affine, dtype))

    def forward(self, x, ctx):
        x = _pad_to_even(dc.relu(x))
        n, c, h, w = x.shape
        shifted = dc.narrow(dc.narrow(x, 2, 1, h - 1), 3, 1, w - 1)
        out = dc.concat([self.conv1.forward(x, ctx),
                         self.conv2.forward(shifted, ctx)], axis=1)
        return self.bn.forward(out, ctx)


def downsample_rest(x: Tensor) -> Tensor:
    """Ceil-halving 2x2 max-pool for the untouched partial-channel rest."""
    return dc.max_pool2d(x, 2, stride=2, ceil_mode=True)


#: Candidate operation sets; order is the alpha column order.
OP_SETS = {
    "darts8": ("none", "max_pool_3x3", "avg_pool_3x3", "skip_connect",
               "sep_conv_3x3", "sep_conv_5x5", "dil_conv_3x3", "dil_conv_5x5"),
    "reduced4": ("none", "skip_connect", "sep_conv_3x3", "max_pool_3x3"),
}

NONE_OP = "none"


def build_candidate(name: str, rng, c: int, stride: int, affine: bool,
                    dtype=np.float32) -> Module:
    if name == "none":
        return Zero(stride)
    if name == "skip_connect":
        return Identity() if stride == 1 else \
            FactorizedReduce(rng, c, c, affine, dtype)
    if name == "max_pool_3x3":
        return Pool("max", stride)
    if name == "avg_pool_3x3":
        return Pool("avg", stride)
    if name == "sep_conv_3x3":
        return SepConv(rng, c, 3, stride, affine, dtype)
    if name == "sep_conv_5x5":
        return SepConv(rng, c, 5, stride, affine, dtype)
    if name == "dil_conv_3x3":
        return DilConv(rng, c, 3, stride, 2, affine, dtype)
    if name == "dil_conv_5x5":
        return DilConv(rng, c, 5, stride, 2, affine, dtype)
    raise ValueError(f"unknown candidate op {name!r}")
