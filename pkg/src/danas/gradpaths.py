"""Composite finite-difference checks: the relaxed mixed-op path (alpha,
beta) and the gamma-mixing path, on top of the per-primitive battery."""

from __future__ import annotations

import numpy as np

from . import diffcore as dc
from .archspace import CellTopology, ForwardCtx, MixedOp, OP_SETS, \
    mixed_op_forward
from .dataspace import DataConfig, FeatureAligner, mix_inputs
from .diffcore import CheckResult, Tensor, finite_diff_check, trace

_CHECK_CONFIGS = [DataConfig(640, 320, 40), DataConfig(400, 200, 40),
                  DataConfig(400, 100, 40)]


def _leaf(rng, *shape, lo=-1.0, hi=1.0) -> Tensor:
    return Tensor(rng.uniform(lo, hi, size=shape), requires_grad=True)


def _loss(out: Tensor):
    return trace(dc.sum_all(dc.mul(out, out)))


def _mixed_op_case(rng: np.random.Generator, target: str):
    topo = CellTopology(intermediate_nodes=1,
                        candidate_ops=OP_SETS["reduced4"],
                        partial_channel_k=2)
    mo = MixedOp(rng, channels=4, stride=int(rng.integers(1, 3)),
                 topology=topo, dtype=np.float64)
    x = Tensor(rng.normal(0.0, 1.0, size=(2, 4, 7, 6)))
    alpha = _leaf(rng, topo.num_ops)
    beta = _leaf(rng, 1, lo=0.2, hi=1.0)
    out = mixed_op_forward(x, mo, alpha, beta, ForwardCtx(training=True))
    record = _loss(out)
    return record, (alpha if target == "alpha" else beta)


def _gamma_case(rng: np.random.Generator, strategy: str, target: str):
    aligner = FeatureAligner(_CHECK_CONFIGS, strategy, dtype=np.float64)
    feats = [Tensor(rng.normal(0.0, 1.0, size=(2, 1) + shape))
             for shape in aligner.shapes]
    gamma = _leaf(rng, len(_CHECK_CONFIGS), lo=-0.5, hi=0.5)
    mixed = mix_inputs(aligner.align(feats), dc.softmax(gamma))
    record = _loss(mixed)
    if target == "gamma":
        return record, gamma
    return record, aligner.parameters()[0]


def run_paths(seed: int = 0, instances: int = 10, eps: float = 1e-5,
              tolerance: float = 1e-4) -> list[CheckResult]:
    cases = {
        "mixed_op_alpha": lambda rng: _mixed_op_case(rng, "alpha"),
        "mixed_op_beta": lambda rng: _mixed_op_case(rng, "beta"),
        "gamma_mix_zero_pad": lambda rng: _gamma_case(rng, "zero_pad", "gamma"),
        "gamma_mix_pre_process": lambda rng: _gamma_case(rng, "pre_process",
                                                         "gamma"),
        "pre_process_reducer": lambda rng: _gamma_case(rng, "pre_process",
                                                       "reducer"),
    }
    results = []
    for case_index, (name, build) in enumerate(cases.items()):
        rng = np.random.default_rng([seed, 1000 + case_index])
        worst = 0.0
        for _ in range(instances):
            record, param = build(rng)
            worst = max(worst, finite_diff_check(record, param, eps))
        results.append(CheckResult(name, worst, tolerance))
    return results


def run_all_checks(seed: int = 0, instances: int = 10, eps: float = 1e-5,
                   tolerance: float = 1e-4) -> list[CheckResult]:
    """Primitive battery plus the relaxation paths (gradcheck command)."""
    return (dc.run_battery(seed, instances, eps, tolerance)
            + run_paths(seed, instances, eps, tolerance))
