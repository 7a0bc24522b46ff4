"""Central finite-difference verification of the gradient rules.

The checker re-executes a recorded graph with perturbed leaves and
compares against reverse-mode gradients, so it is independent of every
backward rule it verifies. Checks must run in 64-bit precision.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass

import numpy as np

from . import ops
from .tensor import (ComputationRecord, ContractError, Tensor, backward,
                     replay, set_gradient_fault, trace)


def finite_diff_check(record: ComputationRecord, param: Tensor,
                      eps: float = 1e-5) -> float:
    """Max over elements of |analytic - central| / max(1, |central|).

    Non-finite loss at a perturbed point is reported as a failure (inf).
    """
    if record.output.data.dtype != np.float64:
        raise ContractError("finite_diff_check requires 64-bit records")
    if not 1e-7 <= eps <= 1e-3:
        raise ContractError(f"eps {eps} outside [1e-7, 1e-3]")
    if not any(p is param for p in record.params):
        raise ContractError("parameter is not a requires_grad leaf of the record")

    grads = backward(record)
    analytic = grads[param].data.reshape(-1)

    flat = param.data.reshape(-1)
    numeric = np.empty_like(flat)
    ok = True
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        replay(record)
        lp = float(record.output.data.reshape(()))
        flat[i] = orig - eps
        replay(record)
        lm = float(record.output.data.reshape(()))
        flat[i] = orig
        if not (np.isfinite(lp) and np.isfinite(lm)):
            ok = False
            break
        numeric[i] = (lp - lm) / (2.0 * eps)
    replay(record)  # restore all node values
    if not ok:
        return float("inf")
    err = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))
    return float(err.max())


@contextlib.contextmanager
def gradient_fault(op_name: str):
    """Flip the sign of one op's backward contributions (mutation testing)."""
    set_gradient_fault(op_name)
    try:
        yield
    finally:
        set_gradient_fault(None)


@dataclass
class CheckResult:
    name: str
    max_rel_err: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tolerance


def _t(rng: np.random.Generator, *shape, lo=-1.0, hi=1.0) -> Tensor:
    return Tensor(rng.uniform(lo, hi, size=shape).astype(np.float64),
                  requires_grad=True)


def _case_builders():
    """One scalar-loss builder per primitive; returns (record, param)."""

    def scalar_loss(out: Tensor) -> ComputationRecord:
        return trace(ops.sum_all(ops.mul(out, out)))

    def add_case(rng):
        a, b = _t(rng, 3, 4), _t(rng, 3, 4)
        return scalar_loss(ops.add(a, b)), a

    def mul_case(rng):
        a, b = _t(rng, 3, 4), _t(rng, 3, 4)
        return scalar_loss(ops.mul(a, b)), b

    def scale_case(rng):
        a = _t(rng, 5)
        return scalar_loss(ops.scale(a, -1.7)), a

    def matmul_case(rng):
        a, b = _t(rng, 3, 4), _t(rng, 4, 2)
        return scalar_loss(ops.matmul(a, b)), a

    def linear_case(rng):
        x, w, b = _t(rng, 4, 6), _t(rng, 3, 6), _t(rng, 3)
        return scalar_loss(ops.linear(x, w, b)), w

    def conv_case(rng):
        x, w, b = _t(rng, 1, 2, 6, 5), _t(rng, 3, 2, 3, 3), _t(rng, 3)
        return scalar_loss(ops.conv2d(x, w, b, stride=2, padding=1)), w

    def dw_conv_case(rng):
        x, w = _t(rng, 1, 3, 6, 6), _t(rng, 3, 1, 3, 3)
        return scalar_loss(ops.depthwise_conv2d(x, w, stride=1, padding=1)), x

    def dil_conv_case(rng):
        x, w = _t(rng, 1, 2, 8, 7), _t(rng, 2, 2, 3, 3)
        return scalar_loss(ops.dilated_conv2d(x, w, padding=2, dilation=2)), w

    def max_pool_case(rng):
        x = _t(rng, 1, 2, 7, 6)
        return scalar_loss(ops.max_pool2d(x, 3, stride=2, padding=1)), x

    def avg_pool_case(rng):
        x = _t(rng, 1, 2, 7, 6)
        return scalar_loss(ops.avg_pool2d(x, 3, stride=2, padding=1,
                                          ceil_mode=True)), x

    def norm_batch_case(rng):
        x = _t(rng, 3, 2, 4, 4)
        sc, sh = _t(rng, 2, lo=0.5, hi=1.5), _t(rng, 2)
        stats = ops.NormStats(2, dtype=np.float64)
        out = ops.affine_norm(x, sc, sh, stats, batch_stats=True)
        return scalar_loss(out), x

    def norm_frozen_case(rng):
        x = _t(rng, 2, 3, 4, 3)
        sc, sh = _t(rng, 3, lo=0.5, hi=1.5), _t(rng, 3)
        stats = ops.NormStats(3, dtype=np.float64)
        stats.mean = rng.uniform(-0.5, 0.5, 3)
        stats.var = rng.uniform(0.5, 1.5, 3)
        out = ops.affine_norm(x, sc, sh, stats, batch_stats=False)
        return scalar_loss(out), sc

    def relu_case(rng):
        x = _t(rng, 4, 5)
        return scalar_loss(ops.relu(x)), x

    def softmax_case(rng):
        x = _t(rng, 3, 6, lo=-3, hi=3)
        return scalar_loss(ops.softmax(x)), x

    def ce_case(rng):
        x = _t(rng, 5, 4, lo=-2, hi=2)
        labels = rng.integers(0, 4, size=5)
        return trace(ops.cross_entropy(x, labels)), x

    def sum_case(rng):
        x = _t(rng, 3, 3)
        return trace(ops.sum_all(ops.mul(x, x))), x

    def mean_case(rng):
        x = _t(rng, 2, 3, 4, 4)
        return scalar_loss(ops.mean_axes(x, (2, 3))), x

    def concat_case(rng):
        a, b = _t(rng, 2, 3, 2, 2), _t(rng, 2, 2, 2, 2)
        return scalar_loss(ops.concat([a, b], axis=1)), b

    def narrow_case(rng):
        x = _t(rng, 2, 6, 3, 3)
        return scalar_loss(ops.narrow(x, 1, 2, 3)), x

    def reshape_case(rng):
        x = _t(rng, 2, 6)
        return scalar_loss(ops.reshape(x, (3, 4))), x

    def pad_case(rng):
        x = _t(rng, 2, 2, 3, 3)
        return scalar_loss(ops.pad2d(x, (1, 0, 2, 1))), x

    def zero_case(rng):
        x = _t(rng, 1, 2, 4, 4)
        out = ops.add(ops.zero_op(x, stride=2),
                      ops.scale(ops.narrow(ops.narrow(
                          x, 2, 0, 2), 3, 0, 2), 0.5))
        return scalar_loss(out), x

    def weighted_sum_case(rng):
        xs = [_t(rng, 2, 3) for _ in range(4)]
        w = ops.softmax(_t(rng, 4, lo=-2, hi=2))
        return scalar_loss(ops.weighted_sum(xs, w)), w.parents[0]

    return {
        "add": add_case, "mul": mul_case, "scale": scale_case,
        "matmul": matmul_case, "linear": linear_case, "conv2d": conv_case,
        "depthwise_conv2d": dw_conv_case, "dilated_conv2d": dil_conv_case,
        "max_pool2d": max_pool_case, "avg_pool2d": avg_pool_case,
        "affine_norm": norm_batch_case, "affine_norm_frozen": norm_frozen_case,
        "relu": relu_case, "softmax": softmax_case,
        "cross_entropy": ce_case, "sum": sum_case, "mean": mean_case,
        "concat": concat_case, "narrow": narrow_case,
        "reshape": reshape_case, "pad2d": pad_case, "zero": zero_case,
        "weighted_sum": weighted_sum_case,
    }


def run_battery(seed: int = 0, instances: int = 10, eps: float = 1e-5,
                tolerance: float = 1e-4) -> list[CheckResult]:
    """Finite-difference-check every primitive on random instances.

    Inputs are drawn from continuous distributions, keeping the checks
    away from relu/max-pool kinks with probability one.
    """
    builders = _case_builders()
    covered = {name.removesuffix("_frozen") for name in builders}
    missing = set(ops.primitive_set()) - covered
    if missing:
        raise ContractError(f"battery does not cover primitives: {sorted(missing)}")

    results = []
    for case_index, (name, build) in enumerate(builders.items()):
        rng = np.random.default_rng([seed, case_index])
        worst = 0.0
        for _ in range(instances):
            record, param = build(rng)
            worst = max(worst, finite_diff_check(record, param, eps))
        results.append(CheckResult(name, worst, tolerance))
    return results
