"""The discrete network instantiated from a genotype (evaluation phase)."""

from __future__ import annotations

import json

import numpy as np

from .. import diffcore as dc
from ..diffcore import Tensor
from .genotype import Genotype
from .modules import (AffineNorm, Conv, FactorizedReduce, ForwardCtx, Module,
                      ReLUConvBN, build_candidate)


class DiscreteCell(Module):
    def __init__(self, rng, genotype_pairs, concat, c_prev_prev, c_prev, c,
                 reduction: bool, reduction_prev: bool, dtype=np.float32):
        super().__init__()
        if reduction_prev:
            self.pre0 = self._child(FactorizedReduce(rng, c_prev_prev, c,
                                                     affine=True, dtype=dtype))
        else:
            self.pre0 = self._child(ReLUConvBN(rng, c_prev_prev, c, 1, 1, 0,
                                               affine=True, dtype=dtype))
        self.pre1 = self._child(ReLUConvBN(rng, c_prev, c, 1, 1, 0,
                                           affine=True, dtype=dtype))
        if len(genotype_pairs) % 2 != 0:
            raise ValueError("genotype must list two input edges per node")
        self.concat = tuple(concat)
        self.pairs = list(genotype_pairs)
        self.ops: list[Module] = []
        for op_name, src in self.pairs:
            stride = 2 if reduction and src < 2 else 1
            self.ops.append(self._child(
                build_candidate(op_name, rng, c, stride, affine=True,
                                dtype=dtype)))

    def forward(self, s0, s1, ctx):
        states = [self.pre0.forward(s0, ctx), self.pre1.forward(s1, ctx)]
        for n in range(len(self.pairs) // 2):
            op_a, op_b = self.ops[2 * n], self.ops[2 * n + 1]
            (_, src_a), (_, src_b) = self.pairs[2 * n], self.pairs[2 * n + 1]
            states.append(dc.add(op_a.forward(states[src_a], ctx),
                                 op_b.forward(states[src_b], ctx)))
        return dc.concat([states[i] for i in self.concat], axis=1)


class DiscreteNetwork(Module):
    def __init__(self, genotype: Genotype, num_cells: int,
                 initial_channels: int, num_classes: int,
                 rng: np.random.Generator, stem_multiplier: int = 3,
                 dtype=np.float32):
        super().__init__()
        if num_cells < 3:
            raise ValueError("network needs at least 3 cells")
        self.genotype = genotype
        self.num_cells = num_cells
        self.initial_channels = initial_channels
        self.num_classes = num_classes
        self.stem_multiplier = stem_multiplier
        multiplier = len(genotype.concat)

        c_stem = stem_multiplier * initial_channels
        self.stem_conv = self._child(Conv(rng, 1, c_stem, 3, 1, 1, dtype=dtype))
        self.stem_bn = self._child(AffineNorm(c_stem, affine=True, dtype=dtype))
        reduction_cells = (num_cells // 3, (2 * num_cells) // 3)

        self.cells: list[DiscreteCell] = []
        c_pp, c_p, c_curr = c_stem, c_stem, initial_channels
        reduction_prev = False
        for i in range(num_cells):
            reduction = i in reduction_cells
            if reduction:
                c_curr *= 2
            pairs = genotype.reduce if reduction else genotype.normal
            cell = self._child(DiscreteCell(rng, pairs, genotype.concat,
                                            c_pp, c_p, c_curr, reduction,
                                            reduction_prev, dtype=dtype))
            self.cells.append(cell)
            reduction_prev = reduction
            c_pp, c_p = c_p, multiplier * c_curr
        self.head_channels = c_p
        std = float(np.sqrt(1.0 / c_p))
        self.fc_w = self._param(Tensor(
            rng.normal(0.0, std, size=(num_classes, c_p)).astype(dtype),
            requires_grad=True))
        self.fc_b = self._param(Tensor(np.zeros(num_classes, dtype=dtype),
                                       requires_grad=True))

    def forward(self, x: Tensor, ctx: ForwardCtx) -> Tensor:
        s0 = s1 = self.stem_bn.forward(self.stem_conv.forward(x, ctx), ctx)
        for cell in self.cells:
            s0, s1 = s1, cell.forward(s0, s1, ctx)
        pooled = dc.mean_axes(s1, (2, 3))
        return dc.linear(pooled, self.fc_w, self.fc_b)

    # -- persistence -----------------------------------------------------

    def save(self, path) -> None:
        arrays = {}
        for i, p in enumerate(self.parameters()):
            arrays[f"p{i:04d}"] = p.data
        for i, s in enumerate(self.norm_stats()):
            arrays[f"m{i:04d}"] = s.mean
            arrays[f"v{i:04d}"] = s.var
        meta = {
            "genotype": self.genotype.to_dict(),
            "num_cells": self.num_cells,
            "initial_channels": self.initial_channels,
            "num_classes": self.num_classes,
            "stem_multiplier": self.stem_multiplier,
        }
        arrays["meta"] = np.frombuffer(
            json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path, dtype=np.float32) -> "DiscreteNetwork":
        with np.load(path) as blob:
            meta = json.loads(bytes(blob["meta"]).decode())
            net = cls(Genotype.from_dict(meta["genotype"]),
                      meta["num_cells"], meta["initial_channels"],
                      meta["num_classes"], np.random.default_rng(0),
                      stem_multiplier=meta["stem_multiplier"], dtype=dtype)
            for i, p in enumerate(net.parameters()):
                stored = blob[f"p{i:04d}"]
                if stored.shape != p.shape:
                    raise ValueError("stored parameters do not match genotype")
                p.data = stored.astype(dtype)
            for i, s in enumerate(net.norm_stats()):
                s.mean = blob[f"m{i:04d}"].astype(dtype)
                s.var = blob[f"v{i:04d}"].astype(dtype)
        return net


def param_count(genotype: Genotype, initial_channels: int, num_cells: int,
                num_classes: int, stem_multiplier: int = 3) -> int:
    """Exact trainable-parameter count of the instantiated model."""
    net = DiscreteNetwork(genotype, num_cells, initial_channels, num_classes,
                          np.random.default_rng(0),
                          stem_multiplier=stem_multiplier)
    return int(sum(p.size for p in net.parameters()))
