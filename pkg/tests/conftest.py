from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from finvn.algebra import BlockAlgebra, diagonal, invert, random_invertible

settings.register_profile("finvn", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("finvn")


@st.composite
def algebras(draw, max_blocks: int = 3, max_dim: int = 4) -> BlockAlgebra:
    n = draw(st.integers(1, max_blocks))
    dims = draw(st.lists(st.integers(1, max_dim), min_size=n, max_size=n))
    weights = draw(st.lists(st.floats(0.1, 5.0), min_size=n, max_size=n))
    return BlockAlgebra(dims, weights)


seeds = st.integers(0, 2 ** 32 - 1)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240601)


def similar_to_unitary(alg: BlockAlgebra, rng: np.random.Generator, radius: float = 1.0,
                       cond: float = 10.0, phases: np.ndarray | None = None):
    """T = S r diag(e^{i theta}) S^{-1}."""
    s = random_invertible(alg, rng, cond)
    if phases is None:
        phases = np.exp(2j * np.pi * rng.random(alg.dim))
    return s @ diagonal(alg, radius * phases) @ invert(s)
