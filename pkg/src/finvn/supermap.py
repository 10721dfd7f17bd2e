"""Linear maps on a block algebra: trace adjoints, amplifications, positivity.

A :class:`SuperOperator` stores its action matrix in the orthonormal
weighted-matrix-unit coordinates of :mod:`finvn.algebra`.  Two different
"adjoints" live here and must not be confused:

* ``tau_adjoint(phi)`` is the transpose for the bilinear pairing
  ``(X, Y) -> tau(XY)``: ``tau(phi(X) Y) = tau(X phi^(Y))``.  In coordinates the
  pairing is ``x @ J @ y`` with ``J`` the within-block transposition
  permutation, so the action matrix is ``J M^T J``.
* ``phi.l2_adjoint()`` is the Hilbert-space adjoint on L^2(M, tau), i.e. the
  conjugate transpose ``M^H``.  It satisfies ``phi*(X) = phi^(X*)*``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np

from .algebra import (
    ALGEBRAIC_TOL,
    AlgebraElement,
    BlockAlgebra,
    op_norm,
    random_psd,
    random_unitary,
)
from .errors import LawViolation, Not2Positive, ResourceLimit

MAX_ELEMENT_DIM = 4096
MAX_AMPLIFIED_DIM = 512


def _check_size(algebra: BlockAlgebra) -> None:
    if algebra.element_dim > MAX_ELEMENT_DIM:
        raise ResourceLimit(f"dense superoperators need D2 <= {MAX_ELEMENT_DIM}, got {algebra.element_dim}",
                            element_dim=algebra.element_dim)


@dataclass(frozen=True, eq=False)
class SuperOperator:
    algebra: BlockAlgebra
    matrix: np.ndarray = field(repr=False)
    label: str = ""
    info: Mapping[str, Any] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        _check_size(self.algebra)
        m = np.array(self.matrix, dtype=complex)
        D2 = self.algebra.element_dim
        if m.shape != (D2, D2):
            raise ValueError(f"action matrix must be {D2} x {D2}, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("action matrix entries must be finite")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_function(cls, algebra: BlockAlgebra, func: Callable[[AlgebraElement], AlgebraElement],
                      label: str = "") -> SuperOperator:
        _check_size(algebra)
        cols = [algebra.to_vector(func(e)) for e in algebra.basis()]
        return cls(algebra, np.array(cols).T, label)

    @classmethod
    def identity(cls, algebra: BlockAlgebra) -> SuperOperator:
        return cls(algebra, np.eye(algebra.element_dim), "identity")

    @classmethod
    def sandwich(cls, a: AlgebraElement, b: AlgebraElement, label: str = "sandwich") -> SuperOperator:
        """X -> A X B."""
        a._same(b)
        alg = a.algebra
        _check_size(alg)
        m = np.zeros((alg.element_dim,) * 2, dtype=complex)
        for k, (ma, mb) in enumerate(zip(a.mats, b.mats)):
            s = alg.coord_slice(k)
            # row-major vec(A X B) = (A kron B^T) vec(X); block weights cancel
            m[s, s] = np.kron(ma, mb.T)
        return cls(alg, m, label)

    @classmethod
    def conjugation(cls, v: AlgebraElement) -> SuperOperator:
        """X -> V* X V."""
        return cls.sandwich(v.H, v, "conjugation")

    @classmethod
    def kraus(cls, ops: Sequence[AlgebraElement]) -> SuperOperator:
        """X -> sum_i K_i* X K_i."""
        if not ops:
            raise ValueError("need at least one Kraus operator")
        total = cls.conjugation(ops[0]).matrix
        for k in ops[1:]:
            total = total + cls.conjugation(k).matrix
        return cls(ops[0].algebra, total, "kraus")

    @classmethod
    def transpose(cls, algebra: BlockAlgebra, blocks: Iterable[int] | None = None) -> SuperOperator:
        """Transpose the chosen blocks (all by default), identity elsewhere."""
        chosen = set(range(algebra.n_blocks) if blocks is None else blocks)
        perm = np.arange(algebra.element_dim)
        full = algebra.transpose_permutation
        for b in chosen:
            s = algebra.coord_slice(b)
            perm[s] = full[s]
        return cls(algebra, np.eye(algebra.element_dim)[perm], "transpose")

    def apply(self, x: AlgebraElement) -> AlgebraElement:
        return self.algebra.from_vector(self.matrix @ self.algebra.to_vector(x))

    __call__ = apply

    def _same(self, other: SuperOperator) -> None:
        if not isinstance(other, SuperOperator) or other.algebra != self.algebra:
            raise ValueError("superoperators act on different algebras")

    def __matmul__(self, other: SuperOperator) -> SuperOperator:
        """Composition: (self @ other)(X) = self(other(X))."""
        self._same(other)
        return SuperOperator(self.algebra, self.matrix @ other.matrix, _join(self.label, other.label, "o"))

    def __add__(self, other: SuperOperator) -> SuperOperator:
        self._same(other)
        return SuperOperator(self.algebra, self.matrix + other.matrix, _join(self.label, other.label, "+"))

    def __sub__(self, other: SuperOperator) -> SuperOperator:
        self._same(other)
        return SuperOperator(self.algebra, self.matrix - other.matrix, _join(self.label, other.label, "-"))

    def __mul__(self, z: complex) -> SuperOperator:
        return SuperOperator(self.algebra, z * self.matrix, self.label)

    __rmul__ = __mul__

    def power(self, n: int) -> SuperOperator:
        return SuperOperator(self.algebra, np.linalg.matrix_power(self.matrix, n), self.label)

    def distance(self, other: SuperOperator) -> float:
        """Frobenius distance between action matrices."""
        self._same(other)
        return float(np.linalg.norm(self.matrix - other.matrix))

    def l2_adjoint(self) -> SuperOperator:
        return SuperOperator(self.algebra, self.matrix.conj().T, "l2-adjoint")

    def l2_norm(self) -> float:
        """Operator norm on L^2(M, tau): the largest singular value of the action matrix."""
        return float(np.linalg.svd(self.matrix, compute_uv=False)[0])

    def with_info(self, **info: Any) -> SuperOperator:
        return SuperOperator(self.algebra, self.matrix, self.label, {**self.info, **info})


def _join(a: str, b: str, op: str) -> str:
    return f"({a} {op} {b})" if a and b else ""


def tau_adjoint(phi: SuperOperator) -> SuperOperator:
    """The unique psi with tau(phi(X) Y) = tau(X psi(Y)).

    Solving ``M^T J = J N`` for the pairing matrix ``J`` gives ``N = J M^T J``;
    ``J`` is a permutation, so this is an index shuffle of ``M^T``.
    """
    perm = phi.algebra.transpose_permutation
    n = phi.matrix.T[np.ix_(perm, perm)]
    label = f"hat({phi.label})" if phi.label else "tau-adjoint"
    return SuperOperator(phi.algebra, n, label)


def duality_defect(phi: SuperOperator, psi: SuperOperator, rng: np.random.Generator, samples: int = 200) -> float:
    """max |tau(phi(X)Y) - tau(X psi(Y))| / (||X||_2 ||Y||_2) over random pairs."""
    from .algebra import l2_norm, random_element, trace

    alg = phi.algebra
    worst = 0.0
    for _ in range(samples):
        x = random_element(alg, rng)
        y = random_element(alg, rng)
        d = abs(trace(phi(x) @ y) - trace(x @ psi(y))) / (l2_norm(x) * l2_norm(y))
        worst = max(worst, d)
    return worst


@dataclass(frozen=True)
class InvolutionReport:
    ok: bool
    involution_defect: float
    composition_defects: tuple[float, ...]
    tol: float

    def to_dict(self) -> dict[str, Any]:
        return {"ok": self.ok, "involution_defect": self.involution_defect,
                "composition_defects": list(self.composition_defects), "tol": self.tol}


def adjoint_involution_check(phi: SuperOperator, pairs: Sequence[tuple[SuperOperator, SuperOperator]] = (),
                             tol: float = 1e-10) -> InvolutionReport:
    """Check hat(hat(phi)) = phi and the composition law on ``pairs``.

    The composition law is checked in the order-reversing form
    hat(phi1 o phi2) = hat(phi2) o hat(phi1), which is what the duality forces
    for a transpose; for commuting pairs both orders agree.
    """
    inv = tau_adjoint(tau_adjoint(phi)).distance(phi)
    comps = []
    for a, b in pairs:
        lhs = tau_adjoint(a @ b)
        rhs = tau_adjoint(b) @ tau_adjoint(a)
        comps.append(lhs.distance(rhs) / max(1.0, np.linalg.norm(lhs.matrix)))
    ok = inv <= tol * max(1.0, np.linalg.norm(phi.matrix)) and all(c <= tol for c in comps)
    return InvolutionReport(bool(ok), inv, tuple(comps), tol)


def amplify(phi: SuperOperator, n: int) -> SuperOperator:
    """phi_n([A_ij]) = [phi(A_ij)] on M_n(M)."""
    alg = phi.algebra
    if n < 1:
        raise ValueError("amplification order must be >= 1")
    if n * alg.dim > MAX_AMPLIFIED_DIM:
        raise ResourceLimit(f"n*D = {n * alg.dim} exceeds {MAX_AMPLIFIED_DIM}", n=n, dim=alg.dim)
    amp = alg.amplify(n)
    _check_size(amp)
    perm = alg.amplification_permutation(n)
    m = np.zeros((amp.element_dim,) * 2, dtype=complex)
    m[np.ix_(perm, perm)] = np.kron(np.eye(n * n), phi.matrix)
    label = f"{phi.label}_{n}" if phi.label else ""
    return SuperOperator(amp, m, label)


# complete positivity

@dataclass(frozen=True, eq=False)
class ChoiCertificate:
    """Per-source-block Choi data.

    The Choi matrix of ``phi o iota_b`` is ``C_b = sum_ij e_ij (x) phi(e_ij^b)``
    (unnormalized matrix units), a (d_b D) x (d_b D) matrix.  Since every
    ``phi(e_ij^b)`` is block diagonal, C_b splits into the pieces
    ``C_bc`` (d_b d_c square) stored in ``pieces[(b, c)]``.
    """

    phi: SuperOperator = field(repr=False)
    pieces: Mapping[tuple[int, int], np.ndarray] = field(repr=False)
    min_eigs: tuple[float, ...]
    hermitian_defects: tuple[float, ...]
    tol: float

    @property
    def cp(self) -> bool:
        return all(e >= -self.tol for e in self.min_eigs) and all(h <= self.tol for h in self.hermitian_defects)

    @property
    def min_eig(self) -> float:
        return min(self.min_eigs)

    def choi_matrix(self, b: int) -> np.ndarray:
        """The full (d_b D) x (d_b D) Choi matrix of phi o iota_b."""
        alg = self.phi.algebra
        d = alg.dims[b]
        images = [[self.phi(alg.matrix_unit(b, i, j)).to_dense() for j in range(d)] for i in range(d)]
        return np.block(images)

    def witness(self, b: int) -> tuple[int, np.ndarray]:
        """(target block, eigenvector) for the most negative eigenvalue of C_b."""
        best = None
        for (src, c), piece in self.pieces.items():
            if src != b:
                continue
            w, v = np.linalg.eigh((piece + piece.conj().T) / 2)
            if best is None or w[0] < best[0]:
                best = (w[0], c, v[:, 0])
        return best[1], best[2]

    def to_dict(self) -> dict[str, Any]:
        return {"cp": self.cp, "min_eigs": list(self.min_eigs), "min_eig": self.min_eig,
                "hermitian_defects": list(self.hermitian_defects), "tol": self.tol}


def cp_certificate(phi: SuperOperator, tol: float = ALGEBRAIC_TOL) -> ChoiCertificate:
    alg = phi.algebra
    pieces: dict[tuple[int, int], np.ndarray] = {}
    mins, herms = [], []
    for b, d in enumerate(alg.dims):
        images = [[phi(alg.matrix_unit(b, i, j)) for j in range(d)] for i in range(d)]
        lo, hd = np.inf, 0.0
        for c in range(alg.n_blocks):
            piece = np.block([[images[i][j].mats[c] for j in range(d)] for i in range(d)])
            pieces[(b, c)] = piece
            hd = max(hd, float(np.abs(piece - piece.conj().T).max()))
            lo = min(lo, float(np.linalg.eigvalsh((piece + piece.conj().T) / 2)[0]))
        mins.append(lo)
        herms.append(hd)
    return ChoiCertificate(phi, pieces, tuple(mins), tuple(herms), tol)


@dataclass(frozen=True, eq=False)
class PositivityVerdict:
    status: str  # "positive" | "violated" | "inconclusive"
    n: int
    tested: int
    min_eig: float
    witness: AlgebraElement | None = field(default=None, repr=False)

    def to_dict(self) -> dict[str, Any]:
        return {"status": self.status, "n": self.n, "tested": self.tested, "min_eig": self.min_eig,
                "has_witness": self.witness is not None}


def _positivity_panel(base: BlockAlgebra, n: int) -> list[AlgebraElement]:
    amp = base.amplify(n)
    panel = [amp.identity()]
    for b, D in enumerate(amp.dims):
        vecs = list(np.eye(D)) + [np.ones(D) / np.sqrt(D)]
        for v in vecs:
            panel.append(amp.block_embedding(b, np.outer(v, v.conj())))
    # entangled inputs [iota_b(e_ij)] padded to n x n: these carry the Choi matrices
    zero = base.zero()
    for b, d in enumerate(base.dims):
        if d > n:
            continue
        entries = [[base.matrix_unit(b, i, j) if (i < d and j < d) else zero for j in range(n)] for i in range(n)]
        panel.append(base.embed(entries))
    return panel


def positivity_check(phi: SuperOperator, n: int = 1, samples: int = 32, tol: float = ALGEBRAIC_TOL,
                     seed: int = 0) -> PositivityVerdict:
    """Sampling test of n-positivity.

    ``violated`` comes with a PSD witness input whose image is not PSD.
    ``positive`` is only returned when the Choi certificate settles complete
    positivity; otherwise the panel result is ``inconclusive``.
    """
    base = phi.algebra
    phi_n = amplify(phi, n)
    amp = phi_n.algebra
    rng = np.random.default_rng(seed)
    inputs = _positivity_panel(base, n) + [random_psd(amp, rng) for _ in range(samples)]
    worst = np.inf
    for x in inputs:
        y = phi_n(x)
        scale = max(1.0, op_norm(y))
        herm = op_norm(y - y.H)
        lo = min(float(np.linalg.eigvalsh((m + m.conj().T) / 2)[0]) for m in y.mats)
        worst = min(worst, lo / scale)
        if herm > tol * scale or lo < -tol * scale:
            return PositivityVerdict("violated", n, len(inputs), lo / scale, x)
    status = "positive" if cp_certificate(phi, tol).cp else "inconclusive"
    return PositivityVerdict(status, n, len(inputs), float(worst))


@dataclass(frozen=True)
class L2NormReport:
    norm: float
    adjoint_norm: float
    bound: float
    positivity: str

    def to_dict(self) -> dict[str, Any]:
        return {"norm": self.norm, "adjoint_norm": self.adjoint_norm, "bound": self.bound,
                "positivity": self.positivity}


def l2_extension_norm(phi: SuperOperator, tol: float = ALGEBRAIC_TOL) -> L2NormReport:
    """||phi||_{L^2} and the bound sqrt(||phi(I)|| ||hat(phi)(I)||) for 2-positive phi."""
    verdict = positivity_check(phi, 2, tol=tol) if 2 * phi.algebra.dim <= MAX_AMPLIFIED_DIM else None
    if verdict is not None and verdict.status == "violated":
        raise Not2Positive("map is not 2-positive (witness found)", min_eig=verdict.min_eig)
    status = "unchecked" if verdict is None else verdict.status
    if status != "positive":
        warnings.warn(f"2-positivity is {status}; the L^2 bound is only guaranteed for 2-positive maps",
                      stacklevel=2)
    hat = tau_adjoint(phi)
    one = phi.algebra.identity()
    norm, adj = phi.l2_norm(), hat.l2_norm()
    bound = float(np.sqrt(op_norm(phi(one)) * op_norm(hat(one))))
    if abs(norm - adj) > tol * max(1.0, norm):
        raise LawViolation("l2-norm-equality", abs(norm - adj), norm=norm, adjoint_norm=adj)
    if norm > bound + tol * max(1.0, bound):
        raise LawViolation("l2-norm-bound", norm - bound, norm=norm, bound=bound)
    return L2NormReport(norm, adj, bound, status)


def algebra_norm(phi: SuperOperator, samples: int = 64, seed: int = 0, tol: float = ALGEBRAIC_TOL) -> tuple[float, bool]:
    """Norm of phi as a map (M, ||.||) -> (M, ||.||); returns (value, exact).

    Positive maps attain their norm at the identity, so a passing Choi
    certificate makes ``||phi(I)||`` exact.  Otherwise the sup over unitaries
    (whose convex hull is the unit ball) is estimated from below by sampling.
    """
    alg = phi.algebra
    if cp_certificate(phi, tol).cp:
        return op_norm(phi(alg.identity())), True
    rng = np.random.default_rng(seed)
    cands = [alg.identity()] + [random_unitary(alg, rng) for _ in range(samples)]
    return max(op_norm(phi(u)) for u in cands), False
