"""Numpy-backed tensors with reverse-mode differentiation.

Every operation builds a node that remembers its parents, a forward
recompute closure and a backward rule. A ComputationRecord captures the
graph reachable from one output so it can be replayed after leaves are
perturbed (which is what the finite-difference checker needs).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ContractError(ValueError):
    """An operation was called outside its contract."""


DEFAULT_DTYPE = np.float32

# Name of the op whose backward contributions get their sign flipped, or
# None. Test instrumentation only (see gradcheck.gradient_fault).
_GRAD_FAULT: str | None = None


def set_gradient_fault(op_name: str | None) -> None:
    global _GRAD_FAULT
    _GRAD_FAULT = op_name


class Tensor:
    """A numpy array plus graph bookkeeping.

    Leaves are created directly; non-leaves come out of the ops in
    danas.diffcore.ops. ``grad`` is populated by ``backward``.
    """

    __slots__ = ("data", "requires_grad", "grad", "op", "parents",
                 "_backward_fn", "_compute_fn")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype if dtype is not None else None)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.op = "leaf"
        self.parents: tuple[Tensor, ...] = ()
        self._backward_fn = None
        self._compute_fn = None

    # -- introspection -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._compute_fn is None

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of size {self.data.size}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(op={self.op!r}, shape={self.shape}{flag})"

    # -- operator sugar (thin wrappers over ops) ------------------------
    def __add__(self, other):
        from . import ops
        return ops.add(self, _as_tensor(other, self.dtype))

    def __mul__(self, other):
        from . import ops
        if isinstance(other, (int, float)):
            return ops.scale(self, float(other))
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.scale(self, -1.0)

    def __sub__(self, other):
        from . import ops
        return ops.add(self, ops.scale(_as_tensor(other, self.dtype), -1.0))

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)


def _as_tensor(x, dtype) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=dtype))


def make_node(data: np.ndarray, op: str, parents: tuple[Tensor, ...],
              backward_fn, compute_fn) -> Tensor:
    """Build a non-leaf tensor.

    ``backward_fn(grad_out) -> [(parent, grad), ...]`` and
    ``compute_fn() -> np.ndarray`` must read parent ``.data`` live so the
    node stays valid across replays.
    """
    t = Tensor.__new__(Tensor)
    t.data = data
    t.requires_grad = any(p.requires_grad for p in parents)
    t.grad = None
    t.op = op
    t.parents = parents
    t._backward_fn = backward_fn
    t._compute_fn = compute_fn
    return t


@dataclass
class ComputationRecord:
    """Topologically ordered view of the graph below one output."""

    output: Tensor
    nodes: list[Tensor]          # topological order, leaves first
    leaves: list[Tensor]
    params: list[Tensor]         # leaves with requires_grad

    def __post_init__(self):
        ids = {id(n) for n in self.nodes}
        for n in self.nodes:
            for p in n.parents:
                if id(p) not in ids:
                    raise ContractError("record is not closed under parents")


def trace(output: Tensor) -> ComputationRecord:
    """Capture the graph reachable from ``output`` (iterative DFS)."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(output, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    leaves = [n for n in order if n.is_leaf]
    params = [n for n in leaves if n.requires_grad]
    return ComputationRecord(output=output, nodes=order, leaves=leaves,
                             params=params)


def replay(record: ComputationRecord) -> None:
    """Recompute every non-leaf value from current leaf data, in order."""
    for node in record.nodes:
        if node._compute_fn is not None:
            node.data = node._compute_fn()


def backward(target: ComputationRecord | Tensor) -> dict[Tensor, Tensor]:
    """Reverse-mode gradients of a scalar output.

    Returns a map ``parameter -> gradient tensor`` covering every leaf
    with ``requires_grad``; also mirrors gradients onto ``.grad`` (as a
    fresh array each call, not accumulated across calls).
    """
    record = target if isinstance(target, ComputationRecord) else trace(target)
    out = record.output
    if out.data.size != 1:
        raise ContractError(
            f"backward needs a scalar loss, got shape {out.shape}")

    grads: dict[int, np.ndarray] = {
        id(out): np.ones_like(out.data)}
    for node in reversed(record.nodes):
        if node._backward_fn is None:
            continue  # leaf: keep its accumulated gradient
        g = grads.pop(id(node), None)
        if g is None or not node.requires_grad:
            continue
        contributions = node._backward_fn(g)
        if _GRAD_FAULT is not None and node.op == _GRAD_FAULT:
            contributions = [(p, -pg) for p, pg in contributions]
        for parent, pg in contributions:
            if not parent.requires_grad:
                continue
            acc = grads.get(id(parent))
            if acc is None:
                grads[id(parent)] = pg.astype(parent.dtype, copy=True)
            else:
                acc += pg

    result: dict[Tensor, Tensor] = {}
    for leaf in record.params:
        g = grads.get(id(leaf))
        if g is None:
            g = np.zeros_like(leaf.data)
        leaf.grad = g
        result[leaf] = Tensor(g)
    return result


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape))
                 if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)
