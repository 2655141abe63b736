from pathlib import Path

import pytest

from kinoplan.dynamics import make_system
from kinoplan.metric import StateMetric
from kinoplan.primitives import (
    PrimitiveLibrary,
    generate_primitives,
    load_library,
    save_library,
    sort_by_dispersion,
)

CACHE = Path(__file__).parent / "_cache"


def make_library(name: str, variant: str, count: int, seed: int):
    """Deterministically generated, dispersion-sorted library (disk-cached).

    Generation is a pure function of the seed, so the cache only saves time.
    """
    CACHE.mkdir(exist_ok=True)
    system = make_system(name, variant)
    path = CACHE / f"{name}_{variant}_{count}_{seed}.kpl"
    if path.exists():
        try:
            return list(load_library(path, system).motions)
        except Exception:
            path.unlink()
    metric = StateMetric()
    motions = sort_by_dispersion(metric, system, generate_primitives(system, count, seed=seed))
    save_library(PrimitiveLibrary(name, variant, metric, tuple(motions)), path)
    return motions


@pytest.fixture(scope="session")
def lib_u1v0():
    return make_library("unicycle1", "v0", 300, seed=3)


@pytest.fixture(scope="session")
def lib_u1v2():
    return make_library("unicycle1", "v2", 120, seed=5)


@pytest.fixture(scope="session")
def lib_u2():
    return make_library("unicycle2", "v0", 80, seed=7)


@pytest.fixture(scope="session")
def lib_trailer():
    return make_library("car_with_trailer", "v0", 60, seed=9)


@pytest.fixture(scope="session")
def scenario_dir():
    import kinoplan

    return Path(kinoplan.__file__).parent / "scenarios"
