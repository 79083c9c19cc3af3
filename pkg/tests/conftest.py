"""Shared pytest fixtures for gbmask tests."""

import os
import sys
from pathlib import Path

import numpy as np
import pytest

# Add the package to the path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))


def pytest_collection_modifyitems(config, items):
    if os.environ.get("GBMASK_RUN_SLOW") == "1":
        return
    skip = pytest.mark.skip(reason="slow reproduction run; set GBMASK_RUN_SLOW=1")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(autouse=True)
def isolate_gbmask_runtime(monkeypatch, tmp_path):
    """Keep every test away from this machine's data directory and config."""
    monkeypatch.setenv("GBMASK_DATA_DIR", str(tmp_path / "gbmask-data"))
    monkeypatch.setenv("XDG_CONFIG_HOME", str(tmp_path / "config"))
    monkeypatch.delenv("GBMASK_LOG_DIR", raising=False)

    from gbmask import config, telemetry

    config.reset_config_cache()
    telemetry.reset()
    yield
    config.reset_config_cache()
    telemetry.reset()


@pytest.fixture
def np_rng():
    """Plain numpy generator for test data (not the engine's RngState)."""
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_spec():
    """A 16³ brain-like phantom small enough for depth-2 training in seconds."""
    from gbmask.phantom import PhantomSpec, StructureSpec

    return PhantomSpec(
        dims=(16, 16, 16),
        spacing=1.5,
        body_semi_axes=(9.0, 9.0, 9.0),
        structures=(
            StructureSpec(name="a", semi_axes=(3.0, 3.0, 3.0), offset=(-3.0, 0.0, 0.0), hu_mean=80.0),
            StructureSpec(name="b", semi_axes=(2.0, 2.0, 2.0), offset=(3.0, 2.0, 0.0), hu_mean=140.0),
        ),
        translation_mm=0.5,
        structure_jitter_mm=0.3,
        noise_sigma=5.0,
        body_hu=20.0,
    )


@pytest.fixture
def tiny_dataset(tiny_spec):
    """Preprocessed 16³ subjects (4 train, 2 val, 2 test) at native spacing."""
    from gbmask.phantom import Dataset, generate_dataset
    from gbmask.pipeline import PreprocessSettings, preprocess_subject

    raw = generate_dataset(tiny_spec, 4, 2, 2, seed=7)
    settings = PreprocessSettings(target_spacing=1.5, size=16)
    return Dataset(
        train=[preprocess_subject(s, settings) for s in raw.train],
        val=[preprocess_subject(s, settings) for s in raw.val],
        test=[preprocess_subject(s, settings) for s in raw.test],
    )
