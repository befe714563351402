import numpy as np
import pytest

from gvcnet.config import GvcnetConfig
from gvcnet.data import split_dataset
from gvcnet.synth import GeneratorConfig, generate


@pytest.fixture(scope="session")
def small_cohort():
    """A 5-ROI synthetic cohort, its graph and a fixed split."""
    gcfg = GeneratorConfig(R=5, n=240)
    ds, graph, _ = generate(gcfg, 3, oracle_draws=0)
    train_ds, test_ds = split_dataset(ds, 0.3, 0)
    return ds, graph, train_ds, test_ds


@pytest.fixture
def tiny_config():
    return GvcnetConfig(epochs=5, lr=1e-3, cheb_hidden=(4, 4), deep_hidden=(4, 4), dcn_out=3,
                        vc_hidden=(4,), repeats=1, adrf_grid=9)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def suite_reports():
    from gvcnet.gradsuite import run_suite

    return run_suite(seed=7, n_configs=3)
