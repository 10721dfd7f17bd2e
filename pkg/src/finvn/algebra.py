"""Finite-dimensional models of finite von Neumann algebras.

A :class:`BlockAlgebra` is ``M = M_{d_1}(C) + ... + M_{d_m}(C)`` (direct sum)
carrying the faithful trace ``tau(A) = sum_b w_b Tr(A_b)``.  Elements act on
``H = C^D`` with ``D = sum_b d_b``.

Element coordinates
-------------------
Elements are identified with vectors of length ``D2 = sum_b d_b**2`` through
the weighted matrix units ``sqrt(1/w_b) e_ij`` of each block, which form an
orthonormal basis for ``<X, Y> = tau(Y* X)``.  Concretely the coordinate
vector of ``X`` is the concatenation of ``sqrt(w_b) * X_b.ravel()`` (row-major).
Every superoperator is stored as a matrix in these coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np
import scipy.linalg as sla

from .errors import NotHermitian, NotPSD, ShapeMismatch, Singular

ALGEBRAIC_TOL = 1e-9
LIMIT_TOL = 1e-6
PSD_SLACK = 1e-10
SINGULAR_TOL = 1e-12


@dataclass(frozen=True)
class BlockAlgebra:
    dims: tuple[int, ...]
    weights: tuple[float, ...]

    def __init__(self, dims: Sequence[int], weights: Sequence[float] | None = None) -> None:
        dims = tuple(int(d) for d in dims)
        weights = tuple(1.0 for _ in dims) if weights is None else tuple(float(w) for w in weights)
        if not dims:
            raise ValueError("an algebra needs at least one block")
        if len(weights) != len(dims):
            raise ValueError(f"{len(dims)} blocks but {len(weights)} weights")
        if any(d < 1 for d in dims):
            raise ValueError(f"block dimensions must be positive, got {dims}")
        if any(not (np.isfinite(w) and w > 0) for w in weights):
            raise ValueError(f"trace weights must be finite and positive (faithfulness), got {weights}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "weights", weights)

    @property
    def n_blocks(self) -> int:
        return len(self.dims)

    @property
    def dim(self) -> int:
        """Dimension D of the Hilbert space the algebra acts on."""
        return sum(self.dims)

    @property
    def element_dim(self) -> int:
        """Dimension D2 of the algebra as a vector space."""
        return sum(d * d for d in self.dims)

    @cached_property
    def _coord_offsets(self) -> tuple[int, ...]:
        return tuple(np.concatenate([[0], np.cumsum([d * d for d in self.dims])]).tolist())

    @cached_property
    def _space_offsets(self) -> tuple[int, ...]:
        return tuple(np.concatenate([[0], np.cumsum(self.dims)]).tolist())

    def coord_slice(self, b: int) -> slice:
        return slice(self._coord_offsets[b], self._coord_offsets[b + 1])

    def space_slice(self, b: int) -> slice:
        return slice(self._space_offsets[b], self._space_offsets[b + 1])

    @cached_property
    def _sqrt_weights(self) -> np.ndarray:
        return np.concatenate([np.full(d * d, np.sqrt(w)) for d, w in zip(self.dims, self.weights)])

    @cached_property
    def transpose_permutation(self) -> np.ndarray:
        """Index map sending the coordinate of ``e_ij`` to that of ``e_ji`` in every block.

        The bilinear pairing reads ``tau(XY) = x @ y[perm]`` in coordinates.
        """
        perm = []
        for b, d in enumerate(self.dims):
            off = self._coord_offsets[b]
            idx = np.arange(d * d).reshape(d, d).T.ravel()
            perm.append(off + idx)
        return np.concatenate(perm)

    # construction helpers
    def element(self, mats: Sequence[np.ndarray]) -> AlgebraElement:
        return AlgebraElement(self, mats)

    def identity(self) -> AlgebraElement:
        return AlgebraElement(self, [np.eye(d) for d in self.dims])

    def zero(self) -> AlgebraElement:
        return AlgebraElement(self, [np.zeros((d, d)) for d in self.dims])

    def scalar(self, z: complex) -> AlgebraElement:
        return AlgebraElement(self, [z * np.eye(d) for d in self.dims])

    def matrix_unit(self, b: int, i: int, j: int) -> AlgebraElement:
        mats = [np.zeros((d, d)) for d in self.dims]
        mats[b][i, j] = 1.0
        return AlgebraElement(self, mats)

    def block_embedding(self, b: int, mat: np.ndarray) -> AlgebraElement:
        """iota_b: place ``mat`` in block ``b`` and zeros elsewhere."""
        mats = [np.zeros((d, d)) for d in self.dims]
        mats[b] = np.asarray(mat)
        return AlgebraElement(self, mats)

    def from_dense(self, mat: np.ndarray, tol: float = ALGEBRAIC_TOL) -> AlgebraElement:
        """Read the diagonal blocks of a D x D matrix; off-block mass must vanish."""
        mat = np.asarray(mat)
        if mat.shape != (self.dim, self.dim):
            raise ShapeMismatch(f"expected {(self.dim, self.dim)}, got {mat.shape}")
        el = AlgebraElement(self, [mat[self.space_slice(b), self.space_slice(b)] for b in range(self.n_blocks)])
        off = np.abs(mat - el.to_dense()).max() if mat.size else 0.0
        if off > tol * max(1.0, np.abs(mat).max()):
            raise ShapeMismatch(f"matrix is not block diagonal for dims {self.dims} (off-block {off:.2e})")
        return el

    def to_vector(self, x: AlgebraElement) -> np.ndarray:
        self._check(x)
        return np.concatenate([m.ravel() for m in x.mats]) * self._sqrt_weights

    def from_vector(self, v: np.ndarray) -> AlgebraElement:
        v = np.asarray(v)
        if v.shape != (self.element_dim,):
            raise ShapeMismatch(f"coordinate vector must have shape ({self.element_dim},), got {v.shape}")
        raw = v / self._sqrt_weights
        return AlgebraElement(
            self, [raw[self.coord_slice(b)].reshape(d, d) for b, d in enumerate(self.dims)])

    def basis(self) -> Iterator[AlgebraElement]:
        """The orthonormal weighted matrix units, in coordinate order."""
        eye = np.eye(self.element_dim)
        for k in range(self.element_dim):
            yield self.from_vector(eye[k])

    # amplification M_n(M) = sum_b M_{n d_b}(C), same weights
    def amplify(self, n: int) -> BlockAlgebra:
        if n < 1:
            raise ValueError("amplification order must be >= 1")
        return BlockAlgebra([n * d for d in self.dims], self.weights)

    def embed(self, entries: Sequence[Sequence[AlgebraElement]]) -> AlgebraElement:
        n = len(entries)
        if any(len(row) != n for row in entries):
            raise ShapeMismatch("amplified entries must form a square n x n array")
        for row in entries:
            for e in row:
                self._check(e)
        amp = self.amplify(n)
        mats = [np.block([[entries[i][j].mats[b] for j in range(n)] for i in range(n)])
                for b in range(self.n_blocks)]
        return AlgebraElement(amp, mats)

    def extract(self, n: int, a: AlgebraElement) -> list[list[AlgebraElement]]:
        amp = self.amplify(n)
        if a.algebra != amp:
            raise ShapeMismatch(f"element does not live in M_{n}(M)")
        out = []
        for i in range(n):
            row = []
            for j in range(n):
                row.append(AlgebraElement(self, [
                    a.mats[b][i * d:(i + 1) * d, j * d:(j + 1) * d] for b, d in enumerate(self.dims)]))
            out.append(row)
        return out

    def amplification_permutation(self, n: int) -> np.ndarray:
        """``perm`` with ``to_vector_amp(embed(A))[perm] == concat_ij to_vector(A_ij)``.

        Lets entrywise maps be written as ``kron(I_{n^2}, M)`` conjugated by a permutation.
        """
        amp = self.amplify(n)
        perm = np.empty(n * n * self.element_dim, dtype=int)
        pos = 0
        for i in range(n):
            for j in range(n):
                for b, d in enumerate(self.dims):
                    nd = n * d
                    rows = np.arange(d)[:, None] + i * d
                    cols = np.arange(d)[None, :] + j * d
                    idx = amp._coord_offsets[b] + (rows * nd + cols).ravel()
                    perm[pos:pos + d * d] = idx
                    pos += d * d
        return perm

    def _check(self, x: AlgebraElement) -> None:
        if x.algebra != self:
            raise ShapeMismatch(f"element belongs to {x.algebra}, not {self}")


@dataclass(frozen=True, eq=False)
class AlgebraElement:
    algebra: BlockAlgebra
    mats: tuple[np.ndarray, ...] = field(repr=False)

    def __init__(self, algebra: BlockAlgebra, mats: Sequence[np.ndarray]) -> None:
        if len(mats) != algebra.n_blocks:
            raise ShapeMismatch(f"expected {algebra.n_blocks} blocks, got {len(mats)}")
        frozen = []
        for d, m in zip(algebra.dims, mats):
            m = np.array(m, dtype=complex)
            if m.shape != (d, d):
                raise ShapeMismatch(f"block of shape {m.shape} where {(d, d)} was expected")
            if not np.all(np.isfinite(m)):
                raise ValueError("element entries must be finite")
            m.setflags(write=False)
            frozen.append(m)
        object.__setattr__(self, "algebra", algebra)
        object.__setattr__(self, "mats", tuple(frozen))

    def _same(self, other: AlgebraElement) -> None:
        if not isinstance(other, AlgebraElement) or other.algebra != self.algebra:
            raise ShapeMismatch("operands live in different algebras")

    def __add__(self, other: AlgebraElement) -> AlgebraElement:
        self._same(other)
        return AlgebraElement(self.algebra, [a + b for a, b in zip(self.mats, other.mats)])

    def __sub__(self, other: AlgebraElement) -> AlgebraElement:
        self._same(other)
        return AlgebraElement(self.algebra, [a - b for a, b in zip(self.mats, other.mats)])

    def __neg__(self) -> AlgebraElement:
        return AlgebraElement(self.algebra, [-a for a in self.mats])

    def __mul__(self, z: complex) -> AlgebraElement:
        if isinstance(z, AlgebraElement):
            raise TypeError("use @ for the algebra product")
        return AlgebraElement(self.algebra, [z * a for a in self.mats])

    __rmul__ = __mul__

    def __truediv__(self, z: complex) -> AlgebraElement:
        return AlgebraElement(self.algebra, [a / z for a in self.mats])

    def __matmul__(self, other: AlgebraElement) -> AlgebraElement:
        self._same(other)
        return AlgebraElement(self.algebra, [a @ b for a, b in zip(self.mats, other.mats)])

    def __pow__(self, n: int) -> AlgebraElement:
        return AlgebraElement(self.algebra, [np.linalg.matrix_power(a, n) for a in self.mats])

    @property
    def H(self) -> AlgebraElement:
        """The adjoint A*."""
        return AlgebraElement(self.algebra, [a.conj().T for a in self.mats])

    def to_dense(self) -> np.ndarray:
        return sla.block_diag(*self.mats) if self.mats else np.zeros((0, 0))

    def to_vector(self) -> np.ndarray:
        return self.algebra.to_vector(self)

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Action on a vector of H = C^D."""
        x = np.asarray(x, dtype=complex)
        alg = self.algebra
        return np.concatenate([m @ x[alg.space_slice(b)] for b, m in enumerate(self.mats)])

    def trace(self) -> complex:
        return trace(self)

    def norm(self) -> float:
        return op_norm(self)

    def allclose(self, other: AlgebraElement, atol: float = ALGEBRAIC_TOL) -> bool:
        return op_norm(self - other) <= atol


def trace(a: AlgebraElement) -> complex:
    """tau(A) = sum_b w_b Tr(A_b)."""
    return complex(sum(w * np.trace(m) for w, m in zip(a.algebra.weights, a.mats)))


def l2_inner(x: AlgebraElement, y: AlgebraElement) -> complex:
    """<X, Y> = tau(Y* X)."""
    x._same(y)
    return complex(sum(w * np.vdot(mb, ma) for w, ma, mb in zip(x.algebra.weights, x.mats, y.mats)))


def l2_norm(x: AlgebraElement) -> float:
    return float(np.sqrt(max(l2_inner(x, x).real, 0.0)))


def op_norm(a: AlgebraElement) -> float:
    return max(float(np.linalg.norm(m, 2)) if m.size else 0.0 for m in a.mats)


def hermitian_defect(a: AlgebraElement) -> float:
    return op_norm(a - a.H)


def _hermitian_blocks(a: AlgebraElement, tol: float) -> list[np.ndarray]:
    defect = hermitian_defect(a)
    if defect > tol * max(1.0, op_norm(a)):
        raise NotHermitian(f"Hermiticity defect {defect:.3e} exceeds tolerance", defect=defect)
    return [(m + m.conj().T) / 2 for m in a.mats]


def spectrum_hermitian(a: AlgebraElement, tol: float = ALGEBRAIC_TOL) -> np.ndarray:
    """Sorted eigenvalues (with multiplicity) of a Hermitian element."""
    vals = [np.linalg.eigvalsh(m) for m in _hermitian_blocks(a, tol)]
    return np.sort(np.concatenate(vals))


def eigh(a: AlgebraElement, tol: float = ALGEBRAIC_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of a Hermitian element as vectors of H (eigenvectors are block supported)."""
    alg = a.algebra
    vals, vecs = [], []
    for b, m in enumerate(_hermitian_blocks(a, tol)):
        w, v = np.linalg.eigh(m)
        full = np.zeros((alg.dim, len(w)), dtype=complex)
        full[alg.space_slice(b)] = v
        vals.append(w)
        vecs.append(full)
    vals = np.concatenate(vals)
    vecs = np.concatenate(vecs, axis=1)
    order = np.argsort(vals, kind="stable")
    return vals[order], vecs[:, order]


def sqrt_psd(a: AlgebraElement, tol: float = ALGEBRAIC_TOL) -> AlgebraElement:
    """The unique positive square root, blockwise."""
    out = []
    scale = max(1.0, op_norm(a))
    for m in _hermitian_blocks(a, tol):
        w, v = np.linalg.eigh(m)
        if w.size and w[0] < -PSD_SLACK * scale:
            raise NotPSD(f"minimum eigenvalue {w[0]:.3e} is negative", min_eig=float(w[0]))
        out.append((v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T)
    return AlgebraElement(a.algebra, out)


def min_singular_value(a: AlgebraElement) -> float:
    return min(float(np.linalg.svd(m, compute_uv=False)[-1]) for m in a.mats)


def invert(a: AlgebraElement, tol: float = SINGULAR_TOL) -> AlgebraElement:
    smin = min_singular_value(a)
    if smin <= tol:
        raise Singular(f"minimum singular value {smin:.3e} <= {tol:.1e}", min_singular_value=smin)
    return AlgebraElement(a.algebra, [np.linalg.inv(m) for m in a.mats])


def polar(a: AlgebraElement, tol: float = SINGULAR_TOL) -> tuple[AlgebraElement, AlgebraElement]:
    """Right polar decomposition A = U P (U unitary, P positive), blockwise.

    Injectivity is required; in finite dimension the isometric factor is then unitary.
    """
    smin = min_singular_value(a)
    if smin <= tol:
        raise Singular(f"polar decomposition needs an injective element (min singular value {smin:.3e})",
                       min_singular_value=smin)
    us, ps = zip(*(sla.polar(m, side="right") for m in a.mats))
    return AlgebraElement(a.algebra, us), AlgebraElement(a.algebra, ps)


def spectral_radius(a: AlgebraElement) -> float:
    return max(float(np.abs(np.linalg.eigvals(m)).max()) for m in a.mats)


def is_unitary(a: AlgebraElement, tol: float = ALGEBRAIC_TOL) -> bool:
    return op_norm(a.H @ a - a.algebra.identity()) <= tol


def is_positive_el(a: AlgebraElement, tol: float = ALGEBRAIC_TOL) -> bool:
    if hermitian_defect(a) > tol:
        return False
    return bool(spectrum_hermitian(a, tol=np.inf)[0] >= -tol)


def commute(a: AlgebraElement, b: AlgebraElement, tol: float = ALGEBRAIC_TOL) -> bool:
    return op_norm(a @ b - b @ a) <= tol


def amplification_trace(n: int, a: AlgebraElement) -> complex:
    """tau_n([A_ij]) = sum_k tau(A_kk), for ``a`` living in the amplified algebra."""
    amp = a.algebra
    dims = [d // n for d in amp.dims]
    if n < 1 or any(d * n != D for d, D in zip(dims, amp.dims)):
        raise ShapeMismatch(f"dims {amp.dims} are not an order-{n} amplification")
    base = BlockAlgebra(dims, amp.weights)
    entries = base.extract(n, a)
    return sum((trace(entries[k][k]) for k in range(n)), 0j)


@dataclass(frozen=True, eq=False)
class TraceFunctional:
    """The functional X -> tau(Z X) represented by Z."""

    representer: AlgebraElement

    @property
    def algebra(self) -> BlockAlgebra:
        return self.representer.algebra

    def __call__(self, x: AlgebraElement) -> complex:
        return trace(self.representer @ x)

    @classmethod
    def vector_state(cls, algebra: BlockAlgebra, x: np.ndarray, y: np.ndarray | None = None) -> TraceFunctional:
        """Represent X -> <X x, y> (default y = x) as tau(Z X)."""
        x = np.asarray(x, dtype=complex)
        y = x if y is None else np.asarray(y, dtype=complex)
        mats = []
        for b, w in enumerate(algebra.weights):
            s = algebra.space_slice(b)
            # <X x, y> = Tr(x y* X)
            mats.append(np.outer(x[s], y[s].conj()) / w)
        return cls(AlgebraElement(algebra, mats))


# random generators, seeded by the caller
def random_matrix(rng: np.random.Generator, d: int) -> np.ndarray:
    return (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2 * d)


def random_unitary_matrix(rng: np.random.Generator, d: int) -> np.ndarray:
    q, r = np.linalg.qr(random_matrix(rng, d))
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def random_element(algebra: BlockAlgebra, rng: np.random.Generator) -> AlgebraElement:
    return AlgebraElement(algebra, [random_matrix(rng, d) for d in algebra.dims])


def random_hermitian(algebra: BlockAlgebra, rng: np.random.Generator) -> AlgebraElement:
    x = random_element(algebra, rng)
    return (x + x.H) * 0.5


def random_psd(algebra: BlockAlgebra, rng: np.random.Generator) -> AlgebraElement:
    x = random_element(algebra, rng)
    return x.H @ x


def random_unitary(algebra: BlockAlgebra, rng: np.random.Generator) -> AlgebraElement:
    return AlgebraElement(algebra, [random_unitary_matrix(rng, d) for d in algebra.dims])


def random_invertible(algebra: BlockAlgebra, rng: np.random.Generator, cond: float = 100.0) -> AlgebraElement:
    """U diag(s) V with singular values log-uniform in [1, cond] (condition number <= cond per block)."""
    mats = []
    for d in algebra.dims:
        s = np.exp(rng.uniform(0.0, np.log(cond), d))
        if d > 1:
            s[0], s[-1] = 1.0, cond
        mats.append((random_unitary_matrix(rng, d) * s) @ random_unitary_matrix(rng, d))
    return AlgebraElement(algebra, mats)


def diagonal(algebra: BlockAlgebra, values: Sequence[complex]) -> AlgebraElement:
    values = np.asarray(values, dtype=complex)
    if values.shape != (algebra.dim,):
        raise ShapeMismatch(f"need {algebra.dim} diagonal entries")
    return AlgebraElement(algebra, [np.diag(values[algebra.space_slice(b)]) for b in range(algebra.n_blocks)])
