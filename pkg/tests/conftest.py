import os
from pathlib import Path

import numpy as np
import pytest

from gateformer.data import SplitSpec, TimeSeriesDataset
from gateformer.evaluation import SyntheticSpec, make_synthetic
from gateformer.model import ModelConfig

REPO = Path(__file__).resolve().parents[1]
ACCEPTANCE_LINES: list[str] = []


def data_dir() -> Path:
    return Path(os.environ.get("GATEFORMER_DATA_DIR", REPO / "data"))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_config():
    return ModelConfig(lookback=32, horizon=8, patch_len=8, d_model=16, n_heads=4)


@pytest.fixture(scope="session")
def seasonal_dataset():
    raw = make_synthetic(SyntheticSpec(n_variates=4, length=700, noise_sigma=0.1, seed=3))
    return TimeSeriesDataset(raw, SplitSpec(), lookback=32, horizon=8, name="synthetic")


@pytest.fixture(autouse=True)
def _clean_tape():
    yield
    from gateformer.tensor import reset_tape
    reset_tape()
