"""Search Phase: warm-up, then alternating weight and architecture
updates with gamma early stopping.

Per paired batch: one SGD step on the model weights w using a training
batch, then one plain gradient step on (alpha, beta, gamma) - or
(alpha, beta) once gamma is frozen - using a validation batch. The
validation half is cycled when exhausted. After each epoch the gamma
weights are snapshot and the early-stop rule may freeze the data search.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .. import diffcore as dc
from ..archspace import (ArchParams, CellTopology, Genotype, OP_SETS,
                         ForwardCtx, Supernet, build_supernet, discretize)
from ..dataspace import (DataConfig, FeatureAligner, GammaState,
                         early_stop_check, gamma_weights, mix_inputs,
                         select_config, write_gamma_history)
from ..diffcore import Tensor
from .config import ConfigError, SearchRunConfig, validate_config
from .data import DataError, DatasetManifest, FeatureCache, build_manifest, \
    load_scramble
from .rundir import (CONFIG_FILE, GAMMA_FILE, GENOTYPE_FILE, METRICS_FILE,
                     RunDirectory, RunError)


@dataclass
class SearchResult:
    genotype: Genotype
    selected_config: DataConfig
    gamma_state: GammaState | None
    warmup_loss: list[float]
    train_loss: list[float]
    arch_loss: list[float]
    early_stop_epoch: int | None
    gamma_grad_steps: int
    wall_clock_seconds: float
    run_dir: str | None = None


class MixingFrontend:
    """Data-aware input assembly: align per-config batches, softmax the
    gamma vector, mix. Reducer weights belong to the w group."""

    def __init__(self, cache: FeatureCache, configs: list[DataConfig],
                 alignment: str, dtype):
        self.cache = cache
        self.configs = configs
        self.dtype = dtype
        self.aligner = FeatureAligner(configs, alignment, dtype=dtype)
        self.state = GammaState.uniform(len(configs))
        self.gamma_tensor = Tensor(np.zeros(len(configs), dtype=dtype),
                                   requires_grad=False)
        self.gamma_grad_steps = 0

    @property
    def has_gamma(self) -> bool:
        return True

    def parameters(self) -> list[Tensor]:
        return self.aligner.parameters()

    def gamma_active(self, arch_step: bool) -> bool:
        return arch_step and not self.state.frozen and len(self.configs) > 1

    def build_input(self, indices: np.ndarray, arch_step: bool) -> Tensor:
        feats = [Tensor(self.cache.batch(d, indices))
                 for d in range(len(self.configs))]
        aligned = self.aligner.align(feats)
        if self.gamma_active(arch_step):
            self.gamma_tensor.requires_grad = True
            weights = dc.softmax(self.gamma_tensor)
        else:
            self.gamma_tensor.requires_grad = False
            weights = Tensor(self.state.weights().astype(self.dtype))
        return mix_inputs(aligned, weights)

    def arch_step_gamma(self) -> list[Tensor]:
        return [self.gamma_tensor] if self.gamma_active(True) else []

    def after_arch_step(self, stepped_gamma: bool) -> None:
        if stepped_gamma:
            self.gamma_grad_steps += 1
            self.state.set_gamma(self.gamma_tensor.data.astype(np.float64))

    def end_of_epoch(self, epoch: int, cfg: SearchRunConfig) -> None:
        self.state.snapshot(epoch)
        if (not self.state.frozen and len(self.configs) >= 2
                and early_stop_check(
                    self.state, on_raw_gamma=cfg.early_stop_on_raw_gamma)):
            self.state.freeze(epoch)


class FixedFrontend:
    """Single fixed config; no gamma, no alignment, no mixing."""

    def __init__(self, cache: FeatureCache):
        self.cache = cache
        self.gamma_grad_steps = 0

    @property
    def has_gamma(self) -> bool:
        return False

    def parameters(self) -> list[Tensor]:
        return []

    def build_input(self, indices: np.ndarray, arch_step: bool) -> Tensor:
        return Tensor(self.cache.batch(0, indices))

    def arch_step_gamma(self) -> list[Tensor]:
        return []

    def after_arch_step(self, stepped_gamma: bool) -> None:
        pass

    def end_of_epoch(self, epoch: int, cfg: SearchRunConfig) -> None:
        pass


def topology_for(cfg: SearchRunConfig) -> CellTopology:
    return CellTopology(intermediate_nodes=cfg.model.nodes,
                        candidate_ops=OP_SETS[cfg.model.op_set],
                        partial_channel_k=cfg.model.partial_channel_k)


def _set_requires_grad(params: list[Tensor], flag: bool) -> None:
    for p in params:
        p.requires_grad = flag


def _grad_arrays(params: list[Tensor],
                 grad_map: dict[Tensor, Tensor]) -> list[np.ndarray]:
    out = []
    for p in params:
        g = grad_map.get(p)
        out.append(g.data if g is not None else np.zeros_like(p.data))
    return out


def _loss_value(loss: Tensor, where: str) -> float:
    value = loss.item()
    if not np.isfinite(value):
        raise RunError(f"non-finite loss ({value}) during {where}; "
                       "lower the learning rates or check the features")
    return value


class SearchLoop:
    """Drives the alternating updates over one supernet + frontend."""

    def __init__(self, cfg: SearchRunConfig, supernet: Supernet,
                 arch: ArchParams, frontend, labels: np.ndarray,
                 w_indices: np.ndarray, v_indices: np.ndarray,
                 rng: np.random.Generator):
        self.cfg = cfg
        self.supernet = supernet
        self.arch = arch
        self.frontend = frontend
        self.labels = labels
        self.w_indices = w_indices
        self.v_indices = v_indices
        self.rng = rng
        self.w_params = supernet.parameters() + frontend.parameters()
        self.w_opt = dc.OptimizerState(cfg.eta_w, cfg.momentum,
                                       cfg.weight_decay)
        # plain descent on the relaxation parameters, as in the update
        # equations: theta <- theta - eta_arch * grad
        self.arch_opt = dc.OptimizerState(cfg.eta_arch, 0.0,
                                          cfg.arch_weight_decay)
        self.warmup_loss: list[float] = []
        self.train_loss: list[float] = []
        self.arch_loss: list[float] = []

    def _num_batches(self) -> int:
        return max(1, len(self.w_indices) // self.cfg.batch_size)

    def _weight_step(self, indices: np.ndarray, where: str) -> float:
        _set_requires_grad(self.w_params, True)
        _set_requires_grad(self.arch.tensors(), False)
        x = self.frontend.build_input(indices, arch_step=False)
        logits = self.supernet.forward(x, self.arch, ForwardCtx(training=True))
        loss = dc.cross_entropy(logits, self.labels[indices])
        value = _loss_value(loss, where)
        grad_map = dc.backward(loss)
        dc.sgd_step(self.w_params, _grad_arrays(self.w_params, grad_map),
                    self.w_opt)
        return value

    def _arch_step(self, indices: np.ndarray, where: str) -> float:
        _set_requires_grad(self.w_params, False)
        _set_requires_grad(self.arch.tensors(), True)
        x = self.frontend.build_input(indices, arch_step=True)
        logits = self.supernet.forward(x, self.arch,
                                       ForwardCtx(training=False))
        loss = dc.cross_entropy(logits, self.labels[indices])
        value = _loss_value(loss, where)
        grad_map = dc.backward(loss)
        gamma_extra = self.frontend.arch_step_gamma()
        params = self.arch.tensors() + gamma_extra
        dc.sgd_step(params, _grad_arrays(params, grad_map), self.arch_opt)
        self.frontend.after_arch_step(stepped_gamma=bool(gamma_extra))
        return value

    def warmup(self) -> None:
        """Weight-only epochs; relaxation parameters stay untouched."""
        batch = self.cfg.batch_size
        for epoch in range(self.cfg.warmup_epochs):
            order = self.rng.permutation(self.w_indices)
            losses = [
                self._weight_step(order[b * batch:(b + 1) * batch],
                                  f"warm-up epoch {epoch + 1}")
                for b in range(self._num_batches())
            ]
            self.warmup_loss.append(float(np.mean(losses)))

    def search_epoch(self, epoch: int) -> None:
        batch = self.cfg.batch_size
        w_order = self.rng.permutation(self.w_indices)
        v_order = self.rng.permutation(self.v_indices)
        w_losses, v_losses = [], []
        for b in range(self._num_batches()):
            wb = w_order[b * batch:(b + 1) * batch]
            vb = np.take(v_order, np.arange(b * batch, b * batch + len(wb)),
                         mode="wrap")
            w_losses.append(self._weight_step(wb, f"search epoch {epoch}"))
            v_losses.append(self._arch_step(vb, f"search epoch {epoch}"))
        self.train_loss.append(float(np.mean(w_losses)))
        self.arch_loss.append(float(np.mean(v_losses)))
        self.frontend.end_of_epoch(epoch, self.cfg)

    def run(self) -> None:
        self.warmup()
        for epoch in range(1, self.cfg.search_epochs + 1):
            self.search_epoch(epoch)


def prepare_manifest(cfg: SearchRunConfig) -> DatasetManifest:
    try:
        return build_manifest(cfg.dataset.root, cfg.dataset.task)
    except DataError as exc:
        raise ConfigError(str(exc)) from exc


def split_for_search(manifest: DatasetManifest, rng: np.random.Generator
                     ) -> tuple[np.ndarray, np.ndarray]:
    """50/50 split of the train list into weight and architecture halves."""
    train = manifest.split_indices("train")
    perm = rng.permutation(train)
    half = len(perm) // 2
    return perm[:half], perm[half:]


def run_search(cfg: SearchRunConfig, run_dir) -> SearchResult:
    """Full Search Phase; writes all artifacts into ``run_dir``."""
    t_start = time.monotonic()
    problems = validate_config(cfg)
    if problems:
        raise ConfigError("invalid config:\n  " + "\n  ".join(problems))
    manifest = prepare_manifest(cfg)
    for split in ("train", "testing"):
        if len(manifest.split_indices(split)) == 0:
            raise ConfigError(f"dataset split {split!r} is empty")

    if cfg.data_aware:
        configs = cfg.configs()
    else:
        configs = [cfg.fixed_data_config()]
    dtype = cfg.dtype()

    rng = np.random.default_rng([cfg.seed, 0])
    w_idx, v_idx = split_for_search(manifest, rng)
    if len(w_idx) == 0 or len(v_idx) == 0:
        raise ConfigError("train split too small to halve for the search")

    scramble = load_scramble(manifest.root)
    cache = FeatureCache(manifest, configs, dtype=dtype, scramble=scramble)
    if cfg.normalize_features:
        cache.normalize(manifest.split_indices("train"))

    topology = topology_for(cfg)
    supernet = build_supernet(topology, cfg.model.cells, cfg.model.channels,
                              manifest.num_classes, rng,
                              stem_multiplier=cfg.model.stem_multiplier,
                              dtype=dtype)
    arch = ArchParams.initialize(topology, rng, dtype=dtype)
    if cfg.data_aware:
        frontend = MixingFrontend(cache, configs, cfg.alignment, dtype)
    else:
        frontend = FixedFrontend(cache)

    with RunDirectory(run_dir) as rd:
        log = rd.logger()
        rd.write_json(CONFIG_FILE, cfg.to_dict())
        log.info("search start: %d classes, %d train / %d val files, "
                 "%d configs, data_aware=%s", manifest.num_classes,
                 len(w_idx), len(v_idx), len(configs), cfg.data_aware)

        loop = SearchLoop(cfg, supernet, arch, frontend, manifest.labels(),
                          w_idx, v_idx, rng)
        loop.warmup()
        for epoch in range(1, cfg.search_epochs + 1):
            loop.search_epoch(epoch)
            if frontend.has_gamma:
                weights = frontend.state.weights()
                log.info("epoch %d: train %.4f arch %.4f gamma %s%s",
                         epoch, loop.train_loss[-1], loop.arch_loss[-1],
                         np.array2string(weights, precision=3),
                         " [frozen]" if frontend.state.frozen else "")
            else:
                log.info("epoch %d: train %.4f arch %.4f", epoch,
                         loop.train_loss[-1], loop.arch_loss[-1])

        genotype = discretize(arch, topology)
        if frontend.has_gamma:
            selected = select_config(frontend.state, configs)
            early_stop_epoch = frontend.state.freeze_epoch
            write_gamma_history(rd.file(GAMMA_FILE), frontend.state, configs)
        else:
            selected = configs[0]
            early_stop_epoch = None
            rd.write_text(GAMMA_FILE,
                          "epoch,config_index,window,hop,mels,gamma,weight\n")

        rd.write_text(GENOTYPE_FILE, genotype.to_json())
        elapsed = time.monotonic() - t_start
        rd.write_json(METRICS_FILE, {
            "schema_version": cfg.schema_version,
            "search": {
                "selected_config": selected.as_list(),
                "num_classes": manifest.num_classes,
                "early_stop_epoch": early_stop_epoch,
                "warmup_loss": loop.warmup_loss,
                "train_loss": loop.train_loss,
                "arch_loss": loop.arch_loss,
                "gamma_grad_steps": frontend.gamma_grad_steps,
                "data_aware": cfg.data_aware,
                "wall_clock_seconds": elapsed,
            },
        })
        log.info("search done in %.1fs: selected %s", elapsed, selected.key)

    return SearchResult(
        genotype=genotype, selected_config=selected,
        gamma_state=frontend.state if frontend.has_gamma else None,
        warmup_loss=loop.warmup_loss, train_loss=loop.train_loss,
        arch_loss=loop.arch_loss, early_stop_epoch=early_stop_epoch,
        gamma_grad_steps=frontend.gamma_grad_steps,
        wall_clock_seconds=elapsed, run_dir=str(run_dir))
