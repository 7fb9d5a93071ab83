import numpy as np
import pytest

from grouphub.model import HubModelParams, ModelVariant

# Pairs of distinct parameterizations that induce identical group
# distributions; each breaks exactly one identifiability condition.

PAIR_COND_I = (
    HubModelParams(
        variant=ModelVariant.ASYMMETRIC,
        n=3,
        hub_set=(1, 2),
        rho=np.array([0.5, 0.5]),
        A=np.array([[1.0, 0.5, 0.0], [1.0, 1.0, 0.5]]),
    ),
    HubModelParams(
        variant=ModelVariant.ASYMMETRIC,
        n=3,
        hub_set=(1, 2),
        rho=np.array([0.25, 0.75]),
        A=np.array([[1.0, 0.0, 0.0], [1.0, 1.0, 1.0 / 3.0]]),
    ),
)

PAIR_COND_II = (
    HubModelParams(
        variant=ModelVariant.ASYMMETRIC,
        n=3,
        hub_set=(1, 2),
        rho=np.array([0.5, 0.5]),
        A=np.array([[1.0, 0.5, 0.5], [0.5, 1.0, 0.5]]),
    ),
    HubModelParams(
        variant=ModelVariant.ASYMMETRIC,
        n=3,
        hub_set=(1, 2),
        rho=np.array([0.25, 0.75]),
        A=np.array([[1.0, 0.0, 0.5], [2.0 / 3.0, 1.0, 0.5]]),
    ),
)

PAIR_COND_III = (
    HubModelParams(
        variant=ModelVariant.WITH_NULL,
        n=3,
        hub_set=(1,),
        rho=np.array([0.5, 0.5]),
        A=np.array([[0.5, 0.0, 0.5], [1.0, 0.5, 0.5]]),
    ),
    HubModelParams(
        variant=ModelVariant.WITH_NULL,
        n=3,
        hub_set=(1,),
        rho=np.array([0.25, 0.75]),
        A=np.array([[0.0, 0.0, 0.5], [1.0, 1.0 / 3.0, 0.5]]),
    ),
)


@pytest.fixture
def equivalent_pairs():
    return {"cond_i": PAIR_COND_I, "cond_ii": PAIR_COND_II, "cond_iii": PAIR_COND_III}


def random_params(rng, n=None, n_L=None, variant=None, low=0.05, high=0.6):
    """A valid random parameter set for oracle cross-checks."""
    if variant is None:
        variant = rng.choice([ModelVariant.ASYMMETRIC, ModelVariant.WITH_NULL])
    if n is None:
        n = int(rng.integers(3, 9))
    if n_L is None:
        n_L = int(rng.integers(1, min(4, n)))
    hub_set = tuple(sorted(rng.choice(np.arange(1, n + 1), size=n_L, replace=False).tolist()))
    K = n_L + (1 if variant is ModelVariant.WITH_NULL else 0)
    A = rng.uniform(low, high, size=(K, n))
    null_rows = 1 if variant is ModelVariant.WITH_NULL else 0
    for i, v in enumerate(hub_set):
        A[i + null_rows, v - 1] = 1.0
    rho = rng.dirichlet(np.ones(K))
    return HubModelParams(variant=variant, n=n, hub_set=hub_set, rho=rho, A=A)
