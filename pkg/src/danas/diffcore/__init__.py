"""Differentiable tensor core: ops, reverse-mode gradients, SGD, checks."""

from .tensor import (ComputationRecord, ContractError, Tensor, backward,
                     replay, trace, unbroadcast)
from .ops import (NormStats, add, affine_norm, avg_pool2d, concat, conv2d,
                  cross_entropy, depthwise_conv2d, dilated_conv2d, linear,
                  matmul, max_pool2d, mean_axes, mul, narrow, pad2d,
                  primitive_set, relu, reshape, scale, softmax, sum_all,
                  weighted_sum, zero_op)
from .optim import SGD, OptimizerState, sgd_step
from .gradcheck import (CheckResult, finite_diff_check, gradient_fault,
                        run_battery)

__all__ = [
    "ComputationRecord", "ContractError", "Tensor", "backward", "replay",
    "trace", "unbroadcast",
    "NormStats", "add", "affine_norm", "avg_pool2d", "concat", "conv2d",
    "cross_entropy", "depthwise_conv2d", "dilated_conv2d", "linear",
    "matmul", "max_pool2d", "mean_axes", "mul", "narrow", "pad2d",
    "primitive_set", "relu", "reshape", "scale", "softmax", "sum_all",
    "weighted_sum", "zero_op",
    "SGD", "OptimizerState", "sgd_step",
    "CheckResult", "finite_diff_check", "gradient_fault", "run_battery",
]
