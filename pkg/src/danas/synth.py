"""Synthetic tone dataset with a designated informative data config.

Every clip is a pure tone (class-specific frequency) plus noise, written
as 16 kHz PCM WAV in the class-folder layout with split lists. Because
all configs see the same audio, decoy configs are made uninformative by
a label-breaking file permutation (scramble.json) that the feature cache
applies per config: only the designated config's features stay aligned
with the labels. Same seed, byte-identical output.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .audiofeat import save_wav
from .dataspace import SAMPLE_RATE, DataConfig
from .engine.data import SCRAMBLE_FILE, TESTING_LIST, VALIDATION_LIST
from .engine.rundir import canonical_json

#: Decoy, informative, decoy - the informative config is deliberately not
#: at index 0 so tie-breaking can never hand it the selection, and the
#: decoys bracket it in feature dimensionality (1960 / 3160 / 3880).
DEFAULT_SYNTH_SPACE = (
    DataConfig(640, 320, 40),
    DataConfig(400, 200, 40),
    DataConfig(640, 160, 40),
)
DEFAULT_INFORMATIVE = DataConfig(400, 200, 40)

META_FILE = "meta.json"


def class_frequencies(num_classes: int) -> np.ndarray:
    """Well-separated tone frequencies inside the speech band."""
    if num_classes == 1:
        return np.array([1000.0])
    return np.geomspace(500.0, 4000.0, num_classes)


def _render_clip(rng: np.random.Generator, freq: float,
                 min_duration: float, max_duration: float) -> np.ndarray:
    duration = rng.uniform(min_duration, max_duration)
    n = int(round(duration * SAMPLE_RATE))
    t = np.arange(n) / SAMPLE_RATE
    amp = rng.uniform(0.35, 0.6)
    jitter = rng.uniform(0.97, 1.03)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    tone = amp * np.sin(2.0 * np.pi * freq * jitter * t + phase)
    fade = min(160, n // 4)  # 10 ms ramps against clicks
    envelope = np.ones(n)
    envelope[:fade] = np.linspace(0.0, 1.0, fade)
    envelope[n - fade:] = np.linspace(1.0, 0.0, fade)
    noise = rng.normal(0.0, 0.05, size=n)
    return tone * envelope + noise


def generate_dataset(out_dir, num_classes: int = 2,
                     clips_per_class: int = 80, seed: int = 0,
                     configs=DEFAULT_SYNTH_SPACE,
                     informative: DataConfig = DEFAULT_INFORMATIVE,
                     scramble_decoys: bool = True,
                     val_fraction: float = 0.15,
                     test_fraction: float = 0.2,
                     min_duration: float = 0.7,
                     max_duration: float = 1.0) -> dict:
    """Write the dataset tree; returns the meta description."""
    configs = [c if isinstance(c, DataConfig) else DataConfig(*c)
               for c in configs]
    if informative not in configs:
        raise ValueError(
            f"informative config {informative.key} is not in the space")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    freqs = class_frequencies(num_classes)
    class_names = [f"tone{int(round(f)):05d}hz" for f in freqs]

    by_split: dict[str, list[str]] = {"train": [], "validation": [],
                                      "testing": []}
    n_test = int(round(test_fraction * clips_per_class))
    n_val = int(round(val_fraction * clips_per_class))
    if n_test + n_val >= clips_per_class:
        raise ValueError("val/test fractions leave no training clips")

    for name, freq in zip(class_names, freqs):
        (out / name).mkdir(exist_ok=True)
        rel_paths = []
        for i in range(clips_per_class):
            rel = f"{name}/clip{i:04d}.wav"
            save_wav(out / rel,
                     _render_clip(rng, freq, min_duration, max_duration))
            rel_paths.append(rel)
        order = rng.permutation(clips_per_class)
        for pos, clip_index in enumerate(order):
            split = ("testing" if pos < n_test
                     else "validation" if pos < n_test + n_val else "train")
            by_split[split].append(rel_paths[clip_index])

    for split, list_name in (("validation", VALIDATION_LIST),
                             ("testing", TESTING_LIST)):
        (out / list_name).write_text(
            "".join(f"{p}\n" for p in sorted(by_split[split])))

    scramble: dict[str, dict[str, str]] = {}
    if scramble_decoys:
        for config in configs:
            if config == informative:
                continue
            table: dict[str, str] = {}
            for split_paths in by_split.values():
                paths = sorted(split_paths)
                targets = [paths[j] for j in rng.permutation(len(paths))]
                table.update(zip(paths, targets))
            scramble[config.key] = table
        (out / SCRAMBLE_FILE).write_text(canonical_json({
            "informative": informative.as_list(),
            "decoy_permutations": scramble,
        }))

    meta = {
        "num_classes": num_classes,
        "classes": class_names,
        "frequencies_hz": [float(f) for f in freqs],
        "clips_per_class": clips_per_class,
        "seed": seed,
        "configs": [c.as_list() for c in configs],
        "informative": informative.as_list(),
        "scramble_decoys": scramble_decoys,
        "val_fraction": val_fraction,
        "test_fraction": test_fraction,
    }
    (out / META_FILE).write_text(canonical_json(meta))
    return meta
