"""Discretization of relaxed cell parameters into a genotype."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .modules import NONE_OP
from .supernet import ArchParams, CellTopology


@dataclass(frozen=True)
class Genotype:
    """Chosen (op, source_state) pairs, two per intermediate node."""

    normal: tuple[tuple[str, int], ...]
    reduce: tuple[tuple[str, int], ...]
    concat: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "normal": [[op, src] for op, src in self.normal],
            "reduce": [[op, src] for op, src in self.reduce],
            "concat": list(self.concat),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "Genotype":
        return cls(
            normal=tuple((str(op), int(src)) for op, src in d["normal"]),
            reduce=tuple((str(op), int(src)) for op, src in d["reduce"]),
            concat=tuple(int(i) for i in d["concat"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "Genotype":
        return cls.from_dict(json.loads(text))


def _softmax(v: np.ndarray) -> np.ndarray:
    z = v - v.max()
    e = np.exp(z)
    return e / e.sum()


def edge_scores(alpha: np.ndarray, beta: np.ndarray,
                topology: CellTopology) -> list[list[tuple[float, str]]]:
    """Per node, per incoming edge: (score, best_op).

    Edge score = softmax-over-ops of the best non-'none' op times the
    softmax-over-incoming-edges beta weight. Op ties resolve to the
    lowest op index (argmax semantics).
    """
    ops = topology.candidate_ops
    op_indices = [i for i, name in enumerate(ops) if name != NONE_OP]
    if not op_indices:
        raise ValueError("no selectable ops besides 'none'")
    per_node = []
    for node in range(topology.intermediate_nodes):
        offset, count = topology.node_edges(node)
        beta_w = _softmax(np.asarray(beta[offset:offset + count],
                                     dtype=np.float64))
        rows = []
        for j in range(count):
            a = _softmax(np.asarray(alpha[offset + j], dtype=np.float64))
            best = max(op_indices, key=lambda i: (a[i], -i))
            rows.append((float(a[best] * beta_w[j]), ops[best]))
        per_node.append(rows)
    return per_node


def _select_cell(alpha: np.ndarray, beta: np.ndarray,
                 topology: CellTopology) -> tuple[tuple[str, int], ...]:
    chosen: list[tuple[str, int]] = []
    for rows in edge_scores(alpha, beta, topology):
        order = sorted(range(len(rows)), key=lambda j: (-rows[j][0], j))
        for j in sorted(order[:2]):
            chosen.append((rows[j][1], j))
    return tuple(chosen)


def discretize(arch: ArchParams, topology: CellTopology) -> Genotype:
    """Top-2 scoring input edges per node, best non-'none' op per edge."""
    for t in arch.tensors():
        if not np.isfinite(t.data).all():
            raise ValueError("non-finite architecture parameters")
    normal = _select_cell(arch.alpha_normal.data, arch.beta_normal.data,
                          topology)
    reduce_ = _select_cell(arch.alpha_reduce.data, arch.beta_reduce.data,
                           topology)
    concat = tuple(range(2, 2 + topology.intermediate_nodes))
    return Genotype(normal=normal, reduce=reduce_, concat=concat)
