import numpy as np
import pytest

from danas.engine import DatasetConfig, ModelConfig, SearchRunConfig
from danas.synth import generate_dataset

SYNTH_SPACE = [[640, 320, 40], [400, 200, 40], [640, 160, 40]]
INFORMATIVE = [400, 200, 40]


@pytest.fixture(scope="session")
def synth_dataset(tmp_path_factory):
    """Shared 2-class tone dataset with one informative config among 3."""
    root = tmp_path_factory.mktemp("synth")
    meta = generate_dataset(root, num_classes=2, clips_per_class=60, seed=0)
    return {"root": root, "meta": meta}


def tiny_search_config(root, seed=0, **overrides) -> SearchRunConfig:
    """The calibrated desk-scale recipe for the synthetic task."""
    base = dict(
        seed=seed,
        dataset=DatasetConfig(root=str(root), task="folders"),
        space=SYNTH_SPACE,
        data_aware=True,
        alignment="zero_pad",
        warmup_epochs=4,
        search_epochs=10,
        eval_epochs=10,
        batch_size=16,
        eta_w=0.05,
        eta_arch=0.3,
        weight_decay=1e-3,
        model=ModelConfig(cells=3, nodes=2, channels=8, stem_multiplier=1,
                          partial_channel_k=2, op_set="reduced4"),
    )
    base.update(overrides)
    return SearchRunConfig(**base)


def rng_of(*seed) -> np.random.Generator:
    return np.random.default_rng(list(seed))


# -- acceptance summary -------------------------------------------------

_ACCEPTANCE: dict[int, tuple[str, str]] = {}


@pytest.fixture
def acceptance():
    """Tests register one line per criterion for the final summary."""

    def record(number: int, title: str, passed: bool, detail: str = ""):
        status = "PASS" if passed else "FAIL"
        _ACCEPTANCE[number] = (title, f"{status}{' - ' + detail if detail else ''}")
        assert passed, f"acceptance criterion {number} ({title}): {detail}"

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, status = _ACCEPTANCE[number]
        terminalreporter.write_line(f"  {number:2d}. {title}: {status}")
