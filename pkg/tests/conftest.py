import math

import numpy as np
import pytest

from mixcap import CostSpec, Dmc, InputDist, MixedChannel, constrained_capacity


def bsc(p: float) -> Dmc:
    return Dmc([[1.0 - p, p], [p, 1.0 - p]])


def binary_entropy(p: float) -> float:
    if p in (0.0, 1.0):
        return 0.0
    return -p * math.log(p) - (1.0 - p) * math.log(1.0 - p)


def bsc_capacity(p: float) -> float:
    return math.log(2.0) - binary_entropy(p)


def random_dmc(rng: np.random.Generator, num_inputs: int = 2, num_outputs: int = 2,
               floor: float = 0.02) -> Dmc:
    rows = rng.dirichlet(np.ones(num_outputs), size=num_inputs)
    rows = rows * (1.0 - floor * num_outputs) + floor
    rows = rows / rows.sum(axis=1, keepdims=True)
    return Dmc(rows)


def random_mixture(rng: np.random.Generator, max_atoms: int = 5,
                   num_inputs: int = 2, num_outputs: int = 2) -> MixedChannel:
    k = int(rng.integers(1, max_atoms + 1))
    weights = rng.dirichlet(np.ones(k))
    return MixedChannel(tuple(
        (float(weights[i]), random_dmc(rng, num_inputs, num_outputs)) for i in range(k)
    ))


def z_channel_matching(target_capacity: float) -> Dmc:
    """Z-channel whose unconstrained capacity equals the target, by bisection."""

    def cap(z):
        return constrained_capacity(Dmc([[1.0, 0.0], [z, 1.0 - z]])).capacity

    lo, hi = 0.0, 0.95
    assert cap(lo) > target_capacity > cap(hi)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if cap(mid) > target_capacity:
            lo = mid
        else:
            hi = mid
    return Dmc([[1.0, 0.0], [0.5 * (lo + hi), 1.0 - 0.5 * (lo + hi)]])


@pytest.fixture
def uniform2() -> InputDist:
    return InputDist([0.5, 0.5])


@pytest.fixture
def bsc_pair() -> MixedChannel:
    return MixedChannel(((0.5, bsc(0.05)), (0.5, bsc(0.2))))


def free_cost(k: int = 2) -> CostSpec:
    return CostSpec.free(k)
