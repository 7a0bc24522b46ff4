"""The data-configuration search space and its continuous relaxation.

A DataConfig is one point in the MFCC hyperparameter grid. Each config d
gets a relaxation parameter gamma_d; softmax(gamma) gives the fraction it
contributes to the combined input. Differently-shaped per-config features
are made commensurable either by zero-padding up to the largest shape or
by learnable strided-conv reduction down to the smallest.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor

SAMPLE_RATE = 16000
CLIP_SAMPLES = 16000


@dataclass(frozen=True, order=True)
class DataConfig:
    """One MFCC hyperparameter triple (all sizes in samples)."""

    window_size: int
    hop_length: int
    mel_filters: int

    def __post_init__(self):
        if self.hop_length > self.window_size:
            raise ValueError(
                f"hop {self.hop_length} exceeds window {self.window_size}")
        if min(self.window_size, self.hop_length, self.mel_filters) <= 0:
            raise ValueError(f"non-positive field in {self}")

    def frame_count(self, n_samples: int = CLIP_SAMPLES) -> int:
        return 1 + (n_samples - self.window_size) // self.hop_length

    def feature_shape(self, n_samples: int = CLIP_SAMPLES) -> tuple[int, int]:
        return (self.frame_count(n_samples), self.mel_filters)

    @property
    def key(self) -> str:
        return f"{self.window_size}x{self.hop_length}x{self.mel_filters}"

    def as_list(self) -> list[int]:
        return [self.window_size, self.hop_length, self.mel_filters]


#: The stock 8-row search grid: window 400 or 640 samples, hop a quarter
#: or half of the window, 40 or 80 mel filters.
DEFAULT_SPACE: tuple[DataConfig, ...] = tuple(
    DataConfig(w, int(w * frac), m)
    for w in (400, 640)
    for frac in (0.25, 0.5)
    for m in (40, 80)
)

ALLOWED_MEL_COUNTS = (40, 80)


def enumerate_configs(space, *, allow_custom: bool = False) -> list[DataConfig]:
    """Materialize a space description into an ordered config list.

    Accepts a list of (window, hop, mels) triples / DataConfigs, or a dict
    with ``windows``, ``hop_fractions`` and ``mel_filters`` enumerated in
    window-major order (matching the stock grid's row order). Configs
    outside the stock grid are rejected unless ``allow_custom``.
    """
    if space is None:
        return list(DEFAULT_SPACE)
    if isinstance(space, dict):
        if "configs" in space:
            return enumerate_configs(space["configs"], allow_custom=allow_custom)
        windows = space["windows"]
        fracs = space["hop_fractions"]
        mels = space["mel_filters"]
        configs = [DataConfig(int(w), int(round(w * f)), int(m))
                   for w in windows for f in fracs for m in mels]
    else:
        configs = []
        for item in space:
            if isinstance(item, DataConfig):
                configs.append(item)
            else:
                w, h, m = item
                configs.append(DataConfig(int(w), int(h), int(m)))
    if not configs:
        raise ValueError("empty data configuration space")
    if not allow_custom:
        stock = set(DEFAULT_SPACE)
        bad = [c for c in configs if c not in stock]
        if bad:
            raise ValueError(
                f"configs outside the stock grid (pass allow_custom to "
                f"permit): {[c.key for c in bad]}")
    return configs


# -- gamma relaxation ---------------------------------------------------

def gamma_weights(gamma: np.ndarray) -> np.ndarray:
    """Softmax of raw gamma values (shift-invariant, sums to 1)."""
    g = np.asarray(gamma, dtype=np.float64)
    z = g - g.max()
    e = np.exp(z)
    return e / e.sum()


@dataclass
class GammaState:
    """Raw gamma vector plus per-epoch snapshots and the freeze latch."""

    gamma: np.ndarray
    history: list[dict] = field(default_factory=list)
    frozen: bool = False
    freeze_epoch: int | None = None

    @classmethod
    def uniform(cls, n_configs: int) -> "GammaState":
        return cls(gamma=np.zeros(n_configs, dtype=np.float64))

    def weights(self) -> np.ndarray:
        return gamma_weights(self.gamma)

    def set_gamma(self, values: np.ndarray) -> None:
        if self.frozen:
            raise ValueError("gamma is frozen; no further updates allowed")
        values = np.asarray(values, dtype=np.float64)
        if values.shape != self.gamma.shape:
            raise ValueError(
                f"gamma shape {values.shape} != {self.gamma.shape}")
        self.gamma = values.copy()

    def freeze(self, epoch: int | None = None) -> None:
        self.frozen = True
        if self.freeze_epoch is None:
            self.freeze_epoch = epoch

    def snapshot(self, epoch: int) -> None:
        self.history.append({
            "epoch": epoch,
            "gamma": self.gamma.copy(),
            "weights": self.weights(),
        })


def early_stop_check(state: GammaState, *, on_raw_gamma: bool = False) -> bool:
    """True once the top config dominates the runner-up by >= 2x.

    Compared on softmax weights by default; raw gamma can be negative,
    which makes "double" ill-defined, but the raw mode is kept for study.
    """
    if state.gamma.size < 2:
        raise ValueError("early stop needs at least 2 configs")
    values = state.gamma if on_raw_gamma else state.weights()
    top_two = np.sort(values)[-2:]
    return bool(top_two[1] >= 2.0 * top_two[0])


def select_config(state: GammaState, configs: list[DataConfig]) -> DataConfig:
    """Argmax-weight config; ties resolve to the lowest row index."""
    if len(configs) != state.gamma.size:
        raise ValueError("config list does not match gamma length")
    return configs[int(np.argmax(state.weights()))]


# -- alignment ----------------------------------------------------------

@dataclass(frozen=True)
class AlignmentPlan:
    """Common target shape for per-config feature maps.

    zero_pad grows everything to the elementwise max shape; pre_process
    shrinks to the elementwise min via per-config learnable reducers.
    """

    strategy: str
    target_frames: int
    target_coefficients: int

    @classmethod
    def for_space(cls, configs: list[DataConfig], strategy: str,
                  n_samples: int = CLIP_SAMPLES) -> "AlignmentPlan":
        if strategy not in ("zero_pad", "pre_process"):
            raise ValueError(f"unknown alignment strategy {strategy!r}")
        shapes = [c.feature_shape(n_samples) for c in configs]
        agg = max if strategy == "zero_pad" else min
        return cls(strategy=strategy,
                   target_frames=agg(s[0] for s in shapes),
                   target_coefficients=agg(s[1] for s in shapes))

    @property
    def target_shape(self) -> tuple[int, int]:
        return (self.target_frames, self.target_coefficients)


def reducer_geometry(size: int, target: int) -> tuple[int, int]:
    """(kernel, stride) of a strided conv mapping ``size`` -> ``target``.

    Largest stride that still leaves a positive kernel, then the kernel
    that makes the output size exact: k = size - stride * (target - 1).
    """
    if target > size:
        raise ValueError(f"cannot reduce {size} below target {target}")
    if target == 1:
        return size, 1
    stride = max(1, (size - 1) // (target - 1))
    kernel = size - stride * (target - 1)
    return kernel, stride


def zero_pad_array(values: np.ndarray, plan: AlignmentPlan) -> np.ndarray:
    """Place a (frames, coeffs) map top-left in a zero target canvas."""
    f, c = values.shape[-2], values.shape[-1]
    tf, tc = plan.target_shape
    if f > tf or c > tc:
        raise ValueError(f"feature shape ({f}, {c}) exceeds target {plan.target_shape}")
    widths = [(0, 0)] * (values.ndim - 2) + [(0, tf - f), (0, tc - c)]
    return np.pad(values, widths)


class FeatureAligner:
    """Aligns one batch tensor per config to the plan's target shape.

    For pre_process alignment each off-target config owns a 1-channel
    strided conv whose weights belong to the model-weight group; the
    config already at the target shape passes through untouched.
    """

    def __init__(self, configs: list[DataConfig], strategy: str,
                 dtype=np.float32, n_samples: int = CLIP_SAMPLES):
        self.configs = list(configs)
        self.plan = AlignmentPlan.for_space(self.configs, strategy, n_samples)
        self.shapes = [c.feature_shape(n_samples) for c in self.configs]
        self.dtype = dtype
        self.reducers: dict[int, tuple[Tensor, tuple, tuple]] = {}
        if strategy == "pre_process":
            for i, (f, c) in enumerate(self.shapes):
                if (f, c) == self.plan.target_shape:
                    continue
                kh, sh = reducer_geometry(f, self.plan.target_frames)
                kw, sw = reducer_geometry(c, self.plan.target_coefficients)
                # center-tap init: starts as a plain subsampler, so every
                # config enters the mix equally sharp (no blur asymmetry)
                init = np.zeros((1, 1, kh, kw), dtype=dtype)
                init[0, 0, kh // 2, kw // 2] = 1.0
                weight = Tensor(init, requires_grad=True)
                self.reducers[i] = (weight, (kh, kw), (sh, sw))

    def parameters(self) -> list[Tensor]:
        return [w for w, _, _ in self.reducers.values()]

    def expected_shape(self, index: int) -> tuple[int, int]:
        return self.shapes[index]

    def align(self, features: list[Tensor]) -> list[Tensor]:
        """One (N, 1, frames_d, coeffs_d) tensor per config, in order."""
        if len(features) != len(self.configs):
            raise ValueError(
                f"expected {len(self.configs)} feature tensors, got {len(features)}")
        aligned = []
        for i, feat in enumerate(features):
            f, c = self.shapes[i]
            if feat.shape[-2:] != (f, c):
                raise ValueError(
                    f"config {self.configs[i].key} features have shape "
                    f"{feat.shape[-2:]}, expected ({f}, {c})")
            if (f, c) == self.plan.target_shape:
                aligned.append(feat)
            elif self.plan.strategy == "zero_pad":
                tf, tc = self.plan.target_shape
                aligned.append(dc.pad2d(feat, (0, tf - f, 0, tc - c)))
            else:
                weight, _, strides = self.reducers[i]
                aligned.append(dc.conv2d(feat, weight, stride=strides))
        return aligned


def mix_inputs(aligned: list[Tensor], weights: Tensor) -> Tensor:
    """Combine equal-shape per-config tensors by simplex weights."""
    return dc.weighted_sum(aligned, weights)


# -- trajectory export ---------------------------------------------------

GAMMA_CSV_HEADER = ["epoch", "config_index", "window", "hop", "mels",
                    "gamma", "weight"]


def write_gamma_history(path, state: GammaState,
                        configs: list[DataConfig]) -> None:
    """CSV with one row per (epoch, config)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(GAMMA_CSV_HEADER)
        for entry in state.history:
            for i, cfg in enumerate(configs):
                writer.writerow([
                    entry["epoch"], i, cfg.window_size, cfg.hop_length,
                    cfg.mel_filters,
                    repr(float(entry["gamma"][i])),
                    repr(float(entry["weights"][i])),
                ])


def read_gamma_history(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [
            {
                "epoch": int(row["epoch"]),
                "config_index": int(row["config_index"]),
                "window": int(row["window"]),
                "hop": int(row["hop"]),
                "mels": int(row["mels"]),
                "gamma": float(row["gamma"]),
                "weight": float(row["weight"]),
            }
            for row in reader
        ]
