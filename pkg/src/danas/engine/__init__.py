"""Two-phase protocol: search over (w, alpha, beta, gamma), then train
the discovered system from scratch."""

from .config import (ConfigError, DatasetConfig, ModelConfig, SearchRunConfig,
                     config_from_dict, load_config, validate_config,
                     validate_config_dict)
from .data import (DataError, DatasetManifest, FeatureCache, ManifestEntry,
                   build_manifest, load_scramble)
from .rundir import RunDirectory, RunError, canonical_json
from .search import (FixedFrontend, MixingFrontend, SearchLoop, SearchResult,
                     run_search, split_for_search, topology_for)
from .train import Metrics, evaluate, predict, train_final

__all__ = [
    "ConfigError", "DatasetConfig", "ModelConfig", "SearchRunConfig",
    "config_from_dict", "load_config", "validate_config",
    "validate_config_dict",
    "DataError", "DatasetManifest", "FeatureCache", "ManifestEntry",
    "build_manifest", "load_scramble",
    "RunDirectory", "RunError", "canonical_json",
    "FixedFrontend", "MixingFrontend", "SearchLoop", "SearchResult",
    "run_search", "split_for_search", "topology_for",
    "Metrics", "evaluate", "predict", "train_final",
]
