"""Relaxed cell-based supernet: alpha-weighted mixed ops, beta-weighted
edges, partial channel connections.

Cells follow the standard wiring: two input nodes fed by the previous
two cells, I intermediate nodes each summing over all earlier states,
output = channel-concat of the intermediate states. Reduction cells sit
at one and two thirds of the stack and double the channel count while
ceil-halving the spatial dims.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import diffcore as dc
from ..diffcore import Tensor
from .modules import (OP_SETS, AffineNorm, Conv, FactorizedReduce, ForwardCtx,
                      Module, ReLUConvBN, build_candidate, downsample_rest)


@dataclass(frozen=True)
class CellTopology:
    intermediate_nodes: int = 4
    candidate_ops: tuple[str, ...] = OP_SETS["darts8"]
    partial_channel_k: int = 2

    def __post_init__(self):
        if self.intermediate_nodes < 1:
            raise ValueError("need at least one intermediate node")
        if not self.candidate_ops:
            raise ValueError("candidate op set is empty")

    @property
    def num_edges(self) -> int:
        return sum(i + 2 for i in range(self.intermediate_nodes))

    @property
    def num_ops(self) -> int:
        return len(self.candidate_ops)

    def node_edges(self, node: int) -> tuple[int, int]:
        """(offset, count) of the edge block feeding intermediate node."""
        offset = sum(i + 2 for i in range(node))
        return offset, node + 2


@dataclass
class ArchParams:
    """alpha: (edges, ops) per cell type; beta: (edges,) per cell type."""

    alpha_normal: Tensor
    alpha_reduce: Tensor
    beta_normal: Tensor
    beta_reduce: Tensor

    @classmethod
    def initialize(cls, topology: CellTopology, rng: np.random.Generator,
                   sigma: float = 1e-3, dtype=np.float32) -> "ArchParams":
        def t(*shape):
            return Tensor(rng.normal(0.0, sigma, size=shape).astype(dtype),
                          requires_grad=True)

        e, o = topology.num_edges, topology.num_ops
        return cls(alpha_normal=t(e, o), alpha_reduce=t(e, o),
                   beta_normal=t(e), beta_reduce=t(e))

    def tensors(self) -> list[Tensor]:
        return [self.alpha_normal, self.alpha_reduce,
                self.beta_normal, self.beta_reduce]

    def for_cell(self, reduction: bool) -> tuple[Tensor, Tensor]:
        if reduction:
            return self.alpha_reduce, self.beta_reduce
        return self.alpha_normal, self.beta_normal


class MixedOp(Module):
    """All candidates on a 1/K channel slice, alpha-softmax combined,
    concatenated with the untouched remainder, then beta-scaled."""

    def __init__(self, rng, channels: int, stride: int,
                 topology: CellTopology, dtype=np.float32):
        super().__init__()
        k = topology.partial_channel_k
        if channels % k != 0:
            raise ValueError(
                f"channels {channels} not divisible by partial-channel K={k}")
        self.channels = channels
        self.sub = channels // k
        self.stride = stride
        self.candidates = [
            self._child(build_candidate(name, rng, self.sub, stride,
                                        affine=False, dtype=dtype))
            for name in topology.candidate_ops
        ]

    def forward(self, x: Tensor, alpha_weights: Tensor,
                beta_scalar: Tensor | None, ctx: ForwardCtx) -> Tensor:
        if self.sub == self.channels:
            active, rest = x, None
        else:
            active = dc.narrow(x, 1, 0, self.sub)
            rest = dc.narrow(x, 1, self.sub, self.channels - self.sub)
        outs = [op.forward(active, ctx) for op in self.candidates]
        mixed = dc.weighted_sum(outs, alpha_weights)
        if rest is not None:
            if self.stride != 1:
                rest = downsample_rest(rest)
            mixed = dc.concat([mixed, rest], axis=1)
        if beta_scalar is not None:
            mixed = dc.mul(mixed, beta_scalar)
        return mixed


def mixed_op_forward(x: Tensor, mixed_op: MixedOp, alpha_row: Tensor,
                     beta_edge: Tensor | None, ctx: ForwardCtx | None = None) -> Tensor:
    """Relaxed edge evaluation from raw (pre-softmax) alpha logits."""
    ctx = ctx or ForwardCtx(training=False)
    weights = dc.softmax(alpha_row)
    return mixed_op.forward(x, weights, beta_edge, ctx)


class Cell(Module):
    def __init__(self, rng, topology: CellTopology, c_prev_prev, c_prev, c,
                 reduction: bool, reduction_prev: bool, dtype=np.float32):
        super().__init__()
        self.topology = topology
        self.reduction = reduction
        if reduction_prev:
            self.pre0 = self._child(
                FactorizedReduce(rng, c_prev_prev, c, affine=False, dtype=dtype))
        else:
            self.pre0 = self._child(
                ReLUConvBN(rng, c_prev_prev, c, 1, 1, 0, affine=False, dtype=dtype))
        self.pre1 = self._child(
            ReLUConvBN(rng, c_prev, c, 1, 1, 0, affine=False, dtype=dtype))
        self.edges: list[MixedOp] = []
        for i in range(topology.intermediate_nodes):
            for j in range(i + 2):
                stride = 2 if reduction and j < 2 else 1
                self.edges.append(self._child(
                    MixedOp(rng, c, stride, topology, dtype=dtype)))

    def forward(self, s0: Tensor, s1: Tensor, alpha: Tensor, beta: Tensor,
                ctx: ForwardCtx) -> Tensor:
        n_ops = self.topology.num_ops
        states = [self.pre0.forward(s0, ctx), self.pre1.forward(s1, ctx)]
        offset = 0
        for i in range(self.topology.intermediate_nodes):
            incoming = len(states)
            beta_w = dc.softmax(dc.narrow(beta, 0, offset, incoming))
            acc = None
            for j in range(incoming):
                a_row = dc.reshape(dc.narrow(alpha, 0, offset + j, 1), (n_ops,))
                out = self.edges[offset + j].forward(
                    states[j], dc.softmax(a_row), dc.narrow(beta_w, 0, j, 1),
                    ctx)
                acc = out if acc is None else dc.add(acc, out)
            states.append(acc)
            offset += incoming
        keep = states[-self.topology.intermediate_nodes:]
        return dc.concat(keep, axis=1)


class Supernet(Module):
    """Stem -> stacked relaxed cells -> global average pool -> classifier."""

    def __init__(self, topology: CellTopology, num_cells: int,
                 initial_channels: int, num_classes: int,
                 rng: np.random.Generator, stem_multiplier: int = 3,
                 dtype=np.float32):
        super().__init__()
        if num_cells < 3:
            raise ValueError("supernet needs at least 3 cells "
                             "(two reduction positions)")
        self.topology = topology
        self.num_classes = num_classes
        c_stem = stem_multiplier * initial_channels
        self.stem_conv = self._child(Conv(rng, 1, c_stem, 3, 1, 1, dtype=dtype))
        self.stem_bn = self._child(AffineNorm(c_stem, affine=True, dtype=dtype))
        self.reduction_cells = (num_cells // 3, (2 * num_cells) // 3)

        self.cells: list[Cell] = []
        c_pp, c_p, c_curr = c_stem, c_stem, initial_channels
        reduction_prev = False
        for i in range(num_cells):
            reduction = i in self.reduction_cells
            if reduction:
                c_curr *= 2
            cell = self._child(Cell(rng, topology, c_pp, c_p, c_curr,
                                    reduction, reduction_prev, dtype=dtype))
            self.cells.append(cell)
            reduction_prev = reduction
            c_pp, c_p = c_p, topology.intermediate_nodes * c_curr
        self.head_channels = c_p
        std = float(np.sqrt(1.0 / c_p))
        self.fc_w = self._param(Tensor(
            rng.normal(0.0, std, size=(num_classes, c_p)).astype(dtype),
            requires_grad=True))
        self.fc_b = self._param(Tensor(np.zeros(num_classes, dtype=dtype),
                                       requires_grad=True))

    def forward(self, x: Tensor, arch: ArchParams, ctx: ForwardCtx) -> Tensor:
        s0 = s1 = self.stem_bn.forward(self.stem_conv.forward(x, ctx), ctx)
        for cell in self.cells:
            alpha, beta = arch.for_cell(cell.reduction)
            s0, s1 = s1, cell.forward(s0, s1, alpha, beta, ctx)
        pooled = dc.mean_axes(s1, (2, 3))
        return dc.linear(pooled, self.fc_w, self.fc_b)


def build_supernet(topology: CellTopology, num_cells: int,
                   initial_channels: int, num_classes: int,
                   rng: np.random.Generator, stem_multiplier: int = 3,
                   dtype=np.float32) -> Supernet:
    return Supernet(topology, num_cells, initial_channels, num_classes,
                    rng, stem_multiplier=stem_multiplier, dtype=dtype)
