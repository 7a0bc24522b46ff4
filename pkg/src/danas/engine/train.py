"""Evaluation Phase: train the discovered system from scratch, report
accuracy and parameter count on the held-out test split."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .. import diffcore as dc
from ..archspace import DiscreteNetwork, ForwardCtx, Genotype
from ..dataspace import DataConfig
from ..diffcore import Tensor
from .config import ConfigError, SearchRunConfig
from .data import DatasetManifest, FeatureCache, load_scramble
from .rundir import RunError
from .search import prepare_manifest


@dataclass
class Metrics:
    accuracy: float
    parameter_count: int
    per_class_accuracy: dict[str, float]
    wall_clock_seconds: float
    train_loss: list[float]

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "parameter_count": self.parameter_count,
            "per_class_accuracy": self.per_class_accuracy,
            "wall_clock_seconds": self.wall_clock_seconds,
            "train_loss": self.train_loss,
        }


def predict(net: DiscreteNetwork, cache: FeatureCache, indices: np.ndarray,
            batch_size: int = 64) -> np.ndarray:
    """Deterministic argmax predictions over a split (eval-mode stats)."""
    ctx = ForwardCtx(training=False)
    preds = np.empty(len(indices), dtype=np.int64)
    for start in range(0, len(indices), batch_size):
        chunk = indices[start:start + batch_size]
        logits = net.forward(Tensor(cache.batch(0, chunk)), ctx)
        preds[start:start + len(chunk)] = logits.data.argmax(axis=1)
    return preds


def evaluate(net: DiscreteNetwork, cache: FeatureCache,
             manifest: DatasetManifest, split: str = "testing",
             batch_size: int = 64) -> tuple[float, dict[str, float]]:
    """Accuracy = correct/total over the split, plus per-class accuracy."""
    indices = manifest.split_indices(split)
    if len(indices) == 0:
        raise RunError(f"cannot evaluate on empty split {split!r}")
    if net.num_classes != manifest.num_classes:
        raise RunError(
            f"model head has {net.num_classes} classes but dataset has "
            f"{manifest.num_classes}")
    labels = manifest.labels()[indices]
    preds = predict(net, cache, indices, batch_size)
    accuracy = float((preds == labels).mean())
    per_class = {}
    for label, name in enumerate(manifest.classes):
        mask = labels == label
        if mask.any():
            per_class[name] = float((preds[mask] == label).mean())
    return accuracy, per_class


def train_final(genotype: Genotype, data_config: DataConfig,
                cfg: SearchRunConfig,
                manifest: DatasetManifest | None = None
                ) -> tuple[DiscreteNetwork, Metrics]:
    """Fresh weights, single-config input (no mixing, no alignment)."""
    t_start = time.monotonic()
    if manifest is None:
        manifest = prepare_manifest(cfg)
    train_idx = manifest.split_indices("train")
    if len(train_idx) == 0:
        raise ConfigError("dataset split 'train' is empty")
    if len(manifest.split_indices("testing")) == 0:
        raise ConfigError("dataset split 'testing' is empty")

    dtype = cfg.dtype()
    rng = np.random.default_rng([cfg.seed, 1])
    cache = FeatureCache(manifest, [data_config], dtype=dtype,
                         scramble=load_scramble(manifest.root))
    if cfg.normalize_features:
        cache.normalize(train_idx)

    net = DiscreteNetwork(genotype, cfg.model.cells, cfg.model.channels,
                          manifest.num_classes, rng,
                          stem_multiplier=cfg.model.stem_multiplier,
                          dtype=dtype)
    params = net.parameters()
    opt = dc.OptimizerState(cfg.eta_w, cfg.momentum, cfg.weight_decay)
    labels = manifest.labels()
    batch = cfg.batch_size
    losses = []
    for epoch in range(1, cfg.eval_epochs + 1):
        order = rng.permutation(train_idx)
        epoch_losses = []
        for b in range(max(1, len(order) // batch)):
            idx = order[b * batch:(b + 1) * batch]
            logits = net.forward(Tensor(cache.batch(0, idx)),
                                 ForwardCtx(training=True))
            loss = dc.cross_entropy(logits, labels[idx])
            value = loss.item()
            if not np.isfinite(value):
                raise RunError(
                    f"non-finite loss at evaluation-phase epoch {epoch}")
            grad_map = dc.backward(loss)
            grads = [grad_map[p].data if p in grad_map
                     else np.zeros_like(p.data) for p in params]
            dc.sgd_step(params, grads, opt)
            epoch_losses.append(value)
        losses.append(float(np.mean(epoch_losses)))

    accuracy, per_class = evaluate(net, cache, manifest)
    metrics = Metrics(
        accuracy=accuracy,
        parameter_count=int(sum(p.size for p in params)),
        per_class_accuracy=per_class,
        wall_clock_seconds=time.monotonic() - t_start,
        train_loss=losses,
    )
    return net, metrics
