import numpy as np
import pytest

from poolpricer.population import DEFAULT_CLASSES, NetworkModel, discretize_class, make_request
from poolpricer.shareability import CandidateRide, SharingParams


@pytest.fixture
def net():
    return NetworkModel("rectilinear", 20.0)


@pytest.fixture
def sharing():
    return SharingParams()


@pytest.fixture(scope="session")
def dists20():
    return tuple(discretize_class(c, 20) for c in DEFAULT_CLASSES)


@pytest.fixture(scope="session")
def dists5():
    return tuple(discretize_class(c, 5) for c in DEFAULT_CLASSES)


def make_ride(ride_id=100, d=(2.0, 3.0), t=None, shared=None, wait=None, distance=None, ids=None):
    """Hand-built pooled ride; times in hours."""
    k = len(d)
    t = t or tuple(x / 20.0 for x in d)
    shared = shared or tuple(1.05 * x for x in t)
    wait = wait or tuple(0.01 * j for j in range(k))
    ids = ids or tuple(range(k))
    distance = distance if distance is not None else 0.8 * sum(d)
    seq = tuple(ids) + tuple(ids)
    return CandidateRide(ride_id, tuple(ids), seq, tuple(shared), tuple(wait), tuple(t), tuple(d), distance)


def random_ride(rng, k, ride_id=1):
    d = tuple(rng.uniform(0.5, 6.0, k))
    t = tuple(x / 20.0 for x in d)
    shared = tuple(x * rng.uniform(1.0, 1.4) for x in t)
    wait = tuple(rng.uniform(0.0, 0.08, k))
    return make_ride(ride_id, d, t, shared, wait, distance=rng.uniform(0.6, 1.0) * sum(d))


def random_belief(rng, J=4):
    w = rng.dirichlet(np.ones(J))
    if rng.random() < 0.3:
        w = np.zeros(J)
        w[rng.integers(J)] = 1.0
    return w


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    """Remember one acceptance verdict; printed in the terminal summary."""
    ACCEPTANCE[criterion] = (bool(ok), detail)
    print(f"criterion {criterion}: {'PASS' if ok else 'FAIL'} ({detail})")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
