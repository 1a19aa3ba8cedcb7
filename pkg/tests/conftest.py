import numpy as np
import pytest

from covax.instance import GenParams, generate_synthetic


def random_instance(
    n=12,
    m=6,
    seed=0,
    edge_density=0.15,
    sparsity=0.5,
    lo=0.05,
    hi=0.95,
    weight_law="uniform",
):
    params = GenParams(
        n=n,
        m_count=m,
        edge_density=edge_density,
        binding_sparsity=sparsity,
        prob_lo=lo,
        prob_hi=hi,
        weight_law=weight_law,
    )
    return generate_synthetic(params, seed)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
