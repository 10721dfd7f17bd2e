from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given

from conftest import algebras, seeds
from finvn.algebra import (
    BlockAlgebra,
    TraceFunctional,
    amplification_trace,
    eigh,
    invert,
    l2_inner,
    op_norm,
    polar,
    random_element,
    random_hermitian,
    random_invertible,
    random_psd,
    spectral_radius,
    spectrum_hermitian,
    sqrt_psd,
    trace,
)
from finvn.errors import NotHermitian, NotPSD, ShapeMismatch, Singular


def test_rejects_non_faithful_weights():
    with pytest.raises(ValueError):
        BlockAlgebra([2, 3], [1.0, 0.0])
    with pytest.raises(ValueError):
        BlockAlgebra([2], [1.0, 2.0])


def test_sizes():
    alg = BlockAlgebra([2, 3], [1.0, 0.5])
    assert alg.dim == 5 and alg.element_dim == 13
    assert trace(alg.identity()) == pytest.approx(2 + 1.5)


@given(algebras(), seeds)
def test_trace_cyclic(alg, seed):
    rng = np.random.default_rng(seed)
    a, b = random_element(alg, rng), random_element(alg, rng)
    assert abs(trace(a @ b) - trace(b @ a)) <= 1e-12 * max(1.0, op_norm(a) * op_norm(b)) * alg.dim * 10


@given(algebras(), seeds)
def test_coordinates_are_orthonormal(alg, seed):
    # <X, Y> = tau(Y* X) equals the plain coordinate inner product
    rng = np.random.default_rng(seed)
    x, y = random_element(alg, rng), random_element(alg, rng)
    assert abs(l2_inner(x, y) - np.vdot(y.to_vector(), x.to_vector())) <= 1e-12
    back = alg.from_vector(x.to_vector())
    assert op_norm(back - x) <= 1e-14


def test_transpose_permutation_realizes_bilinear_pairing(rng):
    alg = BlockAlgebra([2, 3], [0.3, 2.0])
    x, y = random_element(alg, rng), random_element(alg, rng)
    perm = alg.transpose_permutation
    assert abs(trace(x @ y) - x.to_vector() @ y.to_vector()[perm]) <= 1e-13


@given(algebras(), seeds)
def test_sqrt_psd_squares_back(alg, seed):
    rng = np.random.default_rng(seed)
    p = random_psd(alg, rng)
    r = sqrt_psd(p)
    assert op_norm(r @ r - p) <= 1e-10 * max(1.0, op_norm(p))
    assert spectrum_hermitian(r, tol=1e-9)[0] >= -1e-12


def test_sqrt_psd_rejects_negative():
    alg = BlockAlgebra([2])
    with pytest.raises(NotPSD):
        sqrt_psd(alg.element([np.diag([1.0, -0.1])]))


def test_spectrum_rejects_non_hermitian():
    alg = BlockAlgebra([2])
    with pytest.raises(NotHermitian):
        spectrum_hermitian(alg.element([np.array([[0, 1], [0, 0]])]))


def test_eigh_vectors_are_block_supported(rng):
    alg = BlockAlgebra([2, 3])
    h = random_hermitian(alg, rng)
    vals, vecs = eigh(h)
    dense = h.to_dense()
    assert np.allclose(dense @ vecs, vecs * vals, atol=1e-12)
    for k in range(vecs.shape[1]):
        support = [np.abs(vecs[alg.space_slice(b), k]).max() > 1e-12 for b in range(2)]
        assert sum(support) == 1


def test_invert_and_singular(rng):
    alg = BlockAlgebra([3, 2])
    a = random_invertible(alg, rng, 50.0)
    assert op_norm(a @ invert(a) - alg.identity()) <= 1e-10
    with pytest.raises(Singular):
        invert(alg.element([np.zeros((3, 3)), np.eye(2)]))


def test_polar_factor_is_unitary(rng):
    alg = BlockAlgebra([3, 2])
    a = random_invertible(alg, rng, 20.0)
    u, p = polar(a)
    assert op_norm(u.H @ u - alg.identity()) <= 1e-12
    assert op_norm(u @ p - a) <= 1e-10 * op_norm(a)


def test_spectral_radius_of_similar_diagonal(rng):
    from conftest import similar_to_unitary

    alg = BlockAlgebra([4])
    t = similar_to_unitary(alg, rng, radius=0.7)
    assert spectral_radius(t) == pytest.approx(0.7, rel=1e-9)


def test_amplification_trace_sums_diagonal(rng):
    alg = BlockAlgebra([2, 1], [0.5, 3.0])
    entries = [[random_element(alg, rng) for _ in range(2)] for _ in range(2)]
    a = alg.embed(entries)
    assert a.algebra == alg.amplify(2)
    assert abs(amplification_trace(2, a) - (trace(entries[0][0]) + trace(entries[1][1]))) <= 1e-13
    back = alg.extract(2, a)
    assert op_norm(back[0][1] - entries[0][1]) == 0.0


def test_amplification_permutation(rng):
    alg = BlockAlgebra([2, 3], [0.5, 2.0])
    n = 2
    entries = [[random_element(alg, rng) for _ in range(n)] for _ in range(n)]
    amp_vec = alg.embed(entries).to_vector()
    flat = np.concatenate([entries[i][j].to_vector() for i in range(n) for j in range(n)])
    assert np.allclose(amp_vec[alg.amplification_permutation(n)], flat)


def test_vector_state_functional(rng):
    alg = BlockAlgebra([2, 3], [0.4, 1.5])
    x = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    y = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    el = random_element(alg, rng)
    f = TraceFunctional.vector_state(alg, x, y)
    assert abs(f(el) - np.vdot(y, el.apply(x))) <= 1e-12


def test_shape_mismatch():
    a, b = BlockAlgebra([2]), BlockAlgebra([3])
    with pytest.raises(ShapeMismatch):
        a.identity() @ b.identity()
    with pytest.raises(ShapeMismatch):
        a.from_dense(np.ones((2, 3)))
