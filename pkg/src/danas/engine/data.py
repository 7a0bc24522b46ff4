"""Dataset manifests (class-folder layout with split lists) and the
per-config MFCC feature cache."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import audiofeat
from ..dataspace import DataConfig

VALIDATION_LIST = "validation_list.txt"
TESTING_LIST = "testing_list.txt"
SCRAMBLE_FILE = "scramble.json"

NAME_CLASSES = ("marvin", "sheila", "unknown")


class DataError(RuntimeError):
    """Dataset layout problems (missing lists, empty splits, bad files)."""


@dataclass(frozen=True)
class ManifestEntry:
    path: str   # relative "class_dir/file.wav"
    label: int
    split: str  # train | validation | testing


@dataclass
class DatasetManifest:
    root: Path
    task: str
    classes: list[str]
    entries: list[ManifestEntry]

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def labels(self) -> np.ndarray:
        return np.array([e.label for e in self.entries], dtype=np.int64)

    def split_indices(self, split: str) -> np.ndarray:
        return np.array([i for i, e in enumerate(self.entries)
                         if e.split == split], dtype=np.int64)

    def to_dict(self) -> dict:
        return {
            "root": str(self.root),
            "task": self.task,
            "classes": self.classes,
            "entries": [{"path": e.path, "class": self.classes[e.label],
                         "split": e.split} for e in self.entries],
        }


def _read_split_list(path: Path) -> set[str]:
    return {line.strip().replace("\\", "/")
            for line in path.read_text().splitlines() if line.strip()}


def build_manifest(root, task: str = "folders") -> DatasetManifest:
    """Scan a class-folder tree; split membership comes from the two
    list files (one relative path per line); the rest is train."""
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"dataset root {root} is not a directory")
    val_path, test_path = root / VALIDATION_LIST, root / TESTING_LIST
    missing = [p.name for p in (val_path, test_path) if not p.is_file()]
    if missing:
        raise DataError(f"{root}: missing split lists: {', '.join(missing)}")
    val_set, test_set = _read_split_list(val_path), _read_split_list(test_path)

    folders = sorted(p.name for p in root.iterdir()
                     if p.is_dir() and not p.name.startswith("_"))
    if not folders:
        raise DataError(f"{root}: no class folders found")

    if task == "names":
        classes = list(NAME_CLASSES)

        def label_of(folder: str) -> int:
            if folder in ("marvin", "sheila"):
                return classes.index(folder)
            return classes.index("unknown")
    elif task in ("folders", "all35"):
        classes = folders

        def label_of(folder: str) -> int:
            return classes.index(folder)
    else:
        raise DataError(f"unknown dataset task {task!r}")

    entries = []
    for folder in folders:
        for wav in sorted((root / folder).glob("*.wav")):
            rel = f"{folder}/{wav.name}"
            split = ("testing" if rel in test_set
                     else "validation" if rel in val_set else "train")
            entries.append(ManifestEntry(rel, label_of(folder), split))
    if not entries:
        raise DataError(f"{root}: no WAV files found")
    return DatasetManifest(root=root, task=task, classes=classes,
                           entries=entries)


def load_scramble(root) -> dict[str, dict[str, str]] | None:
    """Per-config file permutations (synthetic-oracle datasets only)."""
    path = Path(root) / SCRAMBLE_FILE
    if not path.is_file():
        return None
    data = json.loads(path.read_text())
    return data.get("decoy_permutations", {})


class FeatureCache:
    """Precomputed MFCC maps, one array (n_files, frames, coeffs) per config.

    MFCCs are pure functions of (file, config), so the cache is computed
    once per run. A scramble table re-routes decoy configs through a
    label-breaking file permutation; features can be standardized by
    per-config scalar moments estimated on the given indices.
    """

    def __init__(self, manifest: DatasetManifest, configs: list[DataConfig],
                 dtype=np.float32, scramble=None):
        self.manifest = manifest
        self.configs = list(configs)
        self.dtype = dtype
        self.scramble = scramble or {}
        self.arrays: list[np.ndarray] = []
        waveforms: dict[str, np.ndarray] = {}

        def samples_of(rel: str) -> np.ndarray:
            cached = waveforms.get(rel)
            if cached is None:
                wav = audiofeat.load_wav(manifest.root / rel)
                cached = audiofeat.pad_to_one_second(wav).samples
                waveforms[rel] = cached
            return cached

        for config in self.configs:
            table = self.scramble.get(config.key)
            frames, coeffs = config.feature_shape()
            arr = np.empty((len(manifest.entries), frames, coeffs), dtype=dtype)
            for i, entry in enumerate(manifest.entries):
                rel = table.get(entry.path, entry.path) if table else entry.path
                feat = audiofeat.mfcc(
                    audiofeat.Waveform(samples_of(rel)), config)
                arr[i] = feat.values.astype(dtype)
            self.arrays.append(arr)

    def normalize(self, fit_indices: np.ndarray) -> None:
        """Standardize each config's features by train-split moments."""
        for i, arr in enumerate(self.arrays):
            sample = arr[fit_indices]
            mean = float(sample.mean())
            std = float(sample.std())
            if std < 1e-8:
                std = 1.0
            self.arrays[i] = (arr - mean) / std

    def batch(self, config_index: int, indices: np.ndarray) -> np.ndarray:
        """(B, 1, frames, coeffs) slice ready for the stem."""
        return self.arrays[config_index][indices][:, None]
