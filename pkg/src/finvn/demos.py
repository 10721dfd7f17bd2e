"""Code-generated demonstrations on truncated block algebras M_2 + ... + M_P."""

from __future__ import annotations

from typing import Any, Callable

import numpy as np

from .algebra import AlgebraElement, BlockAlgebra, diagonal, invert, random_invertible
from .limits import SimilarityConfig, similarity
from .serialization import algebra_to_json
from .supermap import SuperOperator, algebra_norm, cp_certificate, tau_adjoint

DEFAULT_TRUNCATION = 8

TRUNCATION_NOTE = (
    "Every linear map on a finite-dimensional algebra has a trace adjoint and is bounded, "
    "so which maps admit a bounded adjoint cannot be decided at finite truncation. "
    "The tables show how the adjoint norms grow with the block size; that growth is what "
    "becomes unbounded in the infinite direct sum."
)


def cubic_weights(sizes: list[int]) -> list[float]:
    return [1.0 / p ** 3 for p in sizes]


def is_power_of_three(p: int) -> bool:
    while p > 1 and p % 3 == 0:
        p //= 3
    return p == 1


def dyadic_weights(sizes: list[int]) -> list[float]:
    """alpha_p = 1/2^p, boosted to p/2^p when p is a power of 3."""
    return [(p if is_power_of_three(p) and p > 1 else 1) / 2.0 ** p for p in sizes]


def truncated_algebra(P: int, weights: Callable[[list[int]], list[float]]) -> BlockAlgebra:
    if P < 2:
        raise ValueError("truncation P must be >= 2")
    sizes = list(range(2, P + 1))
    return BlockAlgebra(sizes, weights(sizes))


def rank_one_compression(alg: BlockAlgebra, n: int) -> SuperOperator:
    """X -> <X_n e, e> P_n with e the first basis vector of block n and P_n = I - e e*."""
    b = alg.dims.index(n)
    proj = np.eye(n)
    proj[0, 0] = 0.0

    def f(x: AlgebraElement) -> AlgebraElement:
        return alg.block_embedding(b, x.mats[b][0, 0] * proj)

    return SuperOperator.from_function(alg, f, f"compress-{n}")


def adjoint_norm_growth(P: int = DEFAULT_TRUNCATION) -> dict[str, Any]:
    """Maps of norm 1 whose trace adjoints have norm n - 1."""
    alg = truncated_algebra(P, cubic_weights)
    rows = []
    for n in range(2, P + 1):
        phi = rank_one_compression(alg, n)
        hat = tau_adjoint(phi)
        norm, exact = algebra_norm(phi)
        hat_norm, hat_exact = algebra_norm(hat)
        rows.append({"n": n, "norm": norm, "adjoint_norm": hat_norm, "expected_adjoint_norm": n - 1,
                     "exact": bool(exact and hat_exact)})
    return {"demo": "adjoint-norm-growth", "truncation": P, "algebra": algebra_to_json(alg),
            "table": rows, "note": TRUNCATION_NOTE}


def block_shift(alg: BlockAlgebra) -> SuperOperator:
    """X_p -> X_p (+) 0 placed in block p + 1; the last block is dropped."""
    dims = alg.dims

    def f(x: AlgebraElement) -> AlgebraElement:
        mats = [np.zeros((d, d), dtype=complex) for d in dims]
        for b in range(len(dims) - 1):
            mats[b + 1][: dims[b], : dims[b]] = x.mats[b]
        return alg.element(mats)

    return SuperOperator.from_function(alg, f, "shift")


def two_traces(P: int = DEFAULT_TRUNCATION) -> dict[str, Any]:
    """The block shift under cubic weights (bounded adjoint) and dyadic weights (growing adjoint)."""
    out: dict[str, Any] = {"demo": "two-traces", "truncation": P, "note": TRUNCATION_NOTE, "traces": {}}
    for name, weights in (("cubic", cubic_weights), ("dyadic", dyadic_weights)):
        alg = truncated_algebra(P, weights)
        phi = block_shift(alg)
        hat = tau_adjoint(phi)
        w = alg.weights
        # hat(phi)(Y)_p = (w_{p+1} / w_p) * top-left compression of Y_{p+1}
        ratios = [{"p": alg.dims[b], "weight_ratio": w[b + 1] / w[b]} for b in range(len(w) - 1)]
        out["traces"][name] = {
            "weights": [{"p": p, "weight": wt} for p, wt in zip(alg.dims, w)],
            "adjoint_ratios": ratios,
            "norm": algebra_norm(phi)[0],
            "adjoint_norm": algebra_norm(hat)[0],
            "adjoint_cp": cp_certificate(hat).cp,
        }
    return out


def similarity_demo(seed: int = 0, dim: int = 4, radius: float = 0.9, cond: float = 10.0) -> dict[str, Any]:
    """One seeded run of the similarity pipeline on T = S r diag(e^{i theta}) S^{-1}."""
    rng = np.random.default_rng(seed)
    alg = BlockAlgebra([dim])
    s = random_invertible(alg, rng, cond)
    phases = np.exp(2j * np.pi * rng.random(dim))
    t = s @ diagonal(alg, radius * phases) @ invert(s)
    rep = similarity([t], config=SimilarityConfig(seed=seed))
    return {"demo": "similarity", "seed": seed, "dim": dim, "radius": radius, "condition": cond,
            "verdict": rep.verdict, "spectral_radius": rep.spectral_radii[0],
            "unitarity_defect": rep.unitarity_defects[0], "min_eig_ei": rep.min_eig_ei,
            "r_spectrum_min": float(rep.r_spectrum[0])}


DEMOS: dict[str, Callable[..., dict[str, Any]]] = {
    "adjoint-norm-growth": adjoint_norm_growth,
    "two-traces": two_traces,
    "similarity": similarity_demo,
}
