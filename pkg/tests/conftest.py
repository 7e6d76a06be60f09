import pytest

from pedsafe.config import builtin_scenario
from pedsafe.sim import context_for, train_betas


@pytest.fixture(scope="session")
def crossing_cfg():
    return builtin_scenario("crossing")


@pytest.fixture(scope="session")
def betas(crossing_cfg):
    return train_betas(crossing_cfg, K_pairs=200, horizon=5.0, seed=0)


@pytest.fixture(scope="session")
def ctx(crossing_cfg, betas):
    return context_for(crossing_cfg, betas)


@pytest.fixture(scope="session")
def beta_dir(tmp_path_factory, betas):
    from pedsafe.sim import beta_filename

    d = tmp_path_factory.mktemp("betas")
    for mode, b in betas.items():
        b.save(d / beta_filename(mode))
    return d
