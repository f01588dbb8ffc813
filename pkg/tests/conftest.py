from pathlib import Path

import numpy as np
import pytest

from influence_gate.core_model import MMData, RegressionData, deletion_set

REPO_ROOT = Path(__file__).resolve().parents[1]
DATA_DIR = REPO_ROOT / "data"


@pytest.fixture(scope="session")
def repo_root() -> Path:
    return REPO_ROOT


@pytest.fixture(scope="session")
def puromycin_path() -> Path:
    return DATA_DIR / "puromycin.csv"


@pytest.fixture(scope="session")
def feigl_zelen_path() -> Path:
    return DATA_DIR / "feigl_zelen.csv"


PUROMYCIN_CONC = [0.02, 0.02, 0.06, 0.06, 0.11, 0.11, 0.22, 0.22, 0.56, 0.56, 1.1]
PUROMYCIN_VEL = [67, 51, 84, 86, 98, 115, 131, 124, 144, 158, 160]


@pytest.fixture(scope="session")
def puromycin() -> MMData:
    return MMData(concentration=PUROMYCIN_CONC, velocity=PUROMYCIN_VEL)


@pytest.fixture(scope="session")
def derived_linear() -> RegressionData:
    """Intercept-only data with one outlier; hand-computed quantities:
    theta_hat = 0.5, RSS = 5, leverage 0.25, deleted residual 1.5."""
    return RegressionData(design=np.ones((4, 1)), response=[0.0, 1.0, -1.0, 2.0])


@pytest.fixture(scope="session")
def delete_last_of_4():
    return deletion_set([3], 4)


def random_regression(rng: np.random.Generator, n: int, k: int) -> RegressionData:
    """Full-rank random dataset; redraws on the (rare) rank-deficient draw."""
    while True:
        X = rng.standard_normal((n, k))
        y = X @ rng.standard_normal(k) + rng.standard_normal(n)
        try:
            return RegressionData(design=X, response=y)
        except Exception:
            continue
