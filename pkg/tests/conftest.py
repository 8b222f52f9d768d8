import numpy as np
import pytest

from pscare import ComparisonDataset, CovariateSet, ComparisonEvent


def make_dataset(n, events, Z=None, d=0):
    """Dataset from (i, j, y) tuples (1-based items), times assigned 1..T."""
    if Z is not None:
        cov = CovariateSet(n=n, d=Z.shape[1], Z=Z)
    elif d:
        rng = np.random.default_rng(0)
        cov = CovariateSet(n=n, d=d, Z=rng.uniform(-0.5, 0.5, size=(n, d)))
    else:
        cov = CovariateSet.without_covariates(n)
    evs = [ComparisonEvent(t=t + 1, i=i, j=j, y=y)
           for t, (i, j, y) in enumerate(events)]
    return ComparisonDataset.from_events(cov, evs)


def round_robin(n, rounds, winner="low"):
    """Every pair compared `rounds` times; low index always wins by default."""
    events = []
    for _ in range(rounds):
        for i in range(1, n + 1):
            for j in range(i + 1, n + 1):
                events.append((i, j, 1 if winner == "low" else 0))
    return events


def balanced_pairs(n, rounds):
    """Every ordered pair wins exactly half its meetings."""
    events = []
    for _ in range(rounds):
        for i in range(1, n + 1):
            for j in range(i + 1, n + 1):
                events.append((i, j, 1))
                events.append((i, j, 0))
    return events


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)
