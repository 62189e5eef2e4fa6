import numpy as np
import pytest

from pasr.config import ModelConfig
from pasr.locations import LocationTable
from pasr.pipeline import SyntheticSpec, generate_synthetic


def tiny_config(**kw):
    base = dict(d=4, d_h=6, n_layers=1, m=5, ngram=2, geohash_len=4, grid_intervals=7, knn=3, neg_count=2)
    base.update(kw)
    return ModelConfig(**base)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def toy_table():
    r = np.random.default_rng(5)
    lat = 40.6 + 0.2 * r.random(12)
    lon = -74.1 + 0.3 * r.random(12)
    return LocationTable.from_arrays(np.arange(100, 112), lat, lon, r.integers(1, 30, 12))


@pytest.fixture(scope="session")
def small_dataset():
    spec = SyntheticSpec(n_users=12, n_locations=30, n_clusters=3, checkins_per_user=40)
    return generate_synthetic(spec, seed=3)


# acceptance lines, printed together at the end of the run
ACCEPTANCE = {}


@pytest.fixture
def report():
    def record(number, title, passed, detail=""):
        line = f"ACCEPTANCE {number} {title}: {'PASS' if passed else 'FAIL'}" + (f" ({detail})" if detail else "")
        ACCEPTANCE[number] = line
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
