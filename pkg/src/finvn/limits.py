"""Orbit-limit operators, semigroup net limits and similarity to unitaries.

``E_T(X) = L({T*^n X T^n / p(n)^2})`` is computed in one of two ways:

``"spectral"`` (default)
    For a regular gauge with constant c_p the normalized orbit map
    ``Phi(X) = T* X T / c_p^2`` is power bounded and the almost limit of
    ``Phi^n`` is its ergodic projection onto ``ker(Phi - I)`` along
    ``ran(Phi - I)``.  In the two-sided case it equals
    ``sum_lam P_lam* X P_lam`` over the Riesz projections of ``T / c_p`` at
    its unimodular eigenvalues; one-sided generators use a sorted Schur form
    and one Sylvester solve.  Both are exact up to rounding instead of O(1/N)
    like any finite average.  A scalar probe sequence ``tau(Y Phi_n(X))`` is
    still pushed through the Lorentz evaluator and its agreement is recorded
    in ``info["probe"]``.

``"window"``
    The literal route: materialize ``Phi_n`` for n <= N through the rescaled
    recurrence and take entrywise almost limits of the action matrices.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
import scipy.linalg as sla

from .algebra import (
    LIMIT_TOL,
    AlgebraElement,
    BlockAlgebra,
    commute,
    eigh,
    invert,
    op_norm,
    random_element,
    spectral_radius,
    sqrt_psd,
    trace,
)
from .errors import (
    CommutationDefect,
    FinvnError,
    LawViolation,
    NoConvergence,
    NonCommutingFamily,
    NotAlmostConvergent,
    NotC1,
    NotCompatible,
    NotDominated,
    NotRegularGauge,
    ResourceLimit,
    SingularEI,
    UnitarityDefect,
)
from .gauge import (
    GAUGE_TOL,
    Gauge,
    almost_limit,
    almost_limit_of_gauge_power,
    analyze_gauge,
    domination_from_ratios,
    norm_ratios,
    q_prime,
    q_tilde,
    window_statistics,
)
from .supermap import SuperOperator, cp_certificate, tau_adjoint

CLUSTER_RADIUS = 1e-6
SPECTRAL_SLACK = 1e-6
WINDOW_MAX_FLOATS = 2 ** 24
LAW_TOL = 1e-7


# ergodic projection

def ergodic_projection(m: np.ndarray, radius: float = CLUSTER_RADIUS) -> tuple[np.ndarray, dict[str, Any]]:
    """Spectral projection of ``m`` for its eigenvalues within ``radius`` of 1.

    Returns the projection and diagnostics: cluster size, spectral radius,
    distance from 1 of the nearest unselected eigenvalue, and the
    semisimplicity defect ``||(m - I) P||`` (0 when eigenvalue 1 has no
    Jordan blocks, which power boundedness guarantees).
    """
    n = m.shape[0]
    eig = np.linalg.eigvals(m)
    near = np.abs(eig - 1) < radius
    rest = eig[~near]
    proj = _riesz(m, lambda z: abs(z - 1) < radius)
    info = {
        "cluster": int(near.sum()),
        "spectral_radius": float(np.abs(eig).max()),
        "gap": float(np.abs(rest - 1).min()) if rest.size else None,
        "semisimple_defect": float(np.linalg.norm((m - np.eye(n)) @ proj, 2)),
    }
    return proj, info


def _riesz(m: np.ndarray, select) -> np.ndarray:
    """Spectral projection of ``m`` for the eigenvalues accepted by ``select``."""
    n = m.shape[0]
    t, q, k = sla.schur(m, output="complex", sort=select)
    if k == 0:
        return np.zeros((n, n), dtype=complex)
    if k == n:
        return np.eye(n, dtype=complex)
    y = sla.solve_sylvester(t[:k, :k], -t[k:, k:], -t[:k, k:])
    p = np.zeros_like(t)
    p[:k, :k] = np.eye(k)
    p[:k, k:] = -y
    return q @ p @ q.conj().T


def _group_on_circle(z: np.ndarray, radius: float) -> list[np.ndarray]:
    """Single-linkage groups of points closer than ``radius``."""
    groups: list[list[complex]] = []
    for w in z[np.argsort(np.angle(z))]:
        for g in groups:
            if min(abs(w - v) for v in g) < radius:
                g.append(w)
                break
        else:
            groups.append([w])
    return [np.array(g) for g in groups]


def peripheral_projections(u: np.ndarray, radius: float = CLUSTER_RADIUS
                           ) -> tuple[list[tuple[complex, np.ndarray]], dict[str, Any]]:
    """Riesz projections of ``u`` at its eigenvalues on the unit circle.

    For power-bounded ``u`` these eigenvalues are semisimple, so
    ``(u - lam) P_lam = 0``; the returned defect measures how far that fails.
    """
    eig = np.linalg.eigvals(u)
    mod = np.abs(eig)
    on_circle = np.abs(mod - 1) < radius
    inside = mod[~on_circle]
    out, defect = [], 0.0
    for g in _group_on_circle(eig[on_circle], radius):
        proj = _riesz(u, lambda z, g=g: bool(np.min(np.abs(z - g)) < radius))
        lam = complex(g.mean())
        defect = max(defect, float(np.linalg.norm((u - lam * np.eye(len(u))) @ proj, 2)
                                   / max(1.0, np.linalg.norm(proj, 2))))
        out.append((lam, proj))
    info = {"spectral_radius": float(mod.max()) if mod.size else 0.0, "peripheral": int(on_circle.sum()),
            "groups": len(out), "gap": float(1 - inside.max()) if inside.size else None,
            "semisimple_defect": defect}
    return out, info


def _two_sided_projection(t: AlgebraElement, c: float, radius: float) -> tuple[np.ndarray, dict[str, Any]]:
    """E(X) = sum_lam P_lam* X P_lam over the peripheral Riesz projections of T / c.

    conj(lam) mu = 1 with |lam|, |mu| <= 1 forces lam = mu on the circle, so this
    is the ergodic projection of X -> T* X T / c^2, written in Kraus form
    (hence completely positive up to rounding).
    """
    alg = t.algebra
    m = np.zeros((alg.element_dim,) * 2, dtype=complex)
    agg = {"spectral_radius": 0.0, "peripheral": 0, "groups": 0, "gap": None, "semisimple_defect": 0.0}
    for b, tb in enumerate(t.mats):
        s = alg.coord_slice(b)
        projs, info = peripheral_projections(tb / c, radius)
        for _, pr in projs:
            m[s, s] += np.kron(pr.conj().T, pr.T)
        agg["spectral_radius"] = max(agg["spectral_radius"], info["spectral_radius"])
        agg["peripheral"] += info["peripheral"]
        agg["groups"] += info["groups"]
        agg["semisimple_defect"] = max(agg["semisimple_defect"], info["semisimple_defect"])
        if info["gap"] is not None:
            agg["gap"] = info["gap"] if agg["gap"] is None else min(agg["gap"], info["gap"])
    return m, agg


# orbit limits

@dataclass(frozen=True)
class OrbitLimitSpec:
    """Input of :func:`orbit_limit`.

    ``mode="two-sided"`` averages X -> T*^n X T^n / p(n)^2 for ``operator``;
    ``mode="one-sided"`` averages psi^n / p(n) for the superoperator ``generator``.
    """

    operator: AlgebraElement | None
    gauge: Gauge
    horizon: int = 512
    tol: float = LIMIT_TOL
    mode: str = "two-sided"
    method: str = "spectral"
    generator: SuperOperator | None = None
    allow_irregular: bool = False
    cluster_radius: float = CLUSTER_RADIUS
    probe_seed: int = 0

    def __post_init__(self) -> None:
        if self.mode not in ("two-sided", "one-sided"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.method not in ("spectral", "window"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.mode == "two-sided" and self.operator is None:
            raise ValueError("two-sided mode needs an operator")
        if self.mode == "one-sided" and self.generator is None:
            raise ValueError("one-sided mode needs a generator superoperator")


def orbit_superoperator(t: AlgebraElement) -> SuperOperator:
    """X -> T* X T."""
    return SuperOperator.sandwich(t.H, t, "orbit")


def _gauge_for(spec: OrbitLimitSpec) -> tuple[Gauge, float, Any]:
    analysis = analyze_gauge(spec.gauge)
    if not analysis.regular and not spec.allow_irregular:
        raise NotRegularGauge(
            "gauge is not regular: c_p^n / p(n) does not strongly almost converge to 1",
            c_p=analysis.c_p, deviation=analysis.regularity_limit.deviation(0.0))
    return spec.gauge.resample(max(spec.horizon, spec.gauge.horizon)), analysis.c_p, analysis


def _one_sided_ratios(psi: SuperOperator, p: Gauge, horizon: int) -> np.ndarray:
    lv = p.log(np.arange(1, horizon + 1))
    m = psi.matrix / np.exp(lv[0])
    out = np.empty(horizon)
    for k in range(horizon):
        if k:
            m = np.exp(lv[k - 1] - lv[k]) * (psi.matrix @ m)
        out[k] = np.linalg.norm(m, 2)
    return out


def _probe(spec: OrbitLimitSpec, p: Gauge, result: np.ndarray, alg: BlockAlgebra) -> dict[str, Any]:
    """Run tau(Y Phi_n(X)) through the Lorentz evaluator and compare with tau(Y E(X))."""
    rng = np.random.default_rng(spec.probe_seed)
    x = random_element(alg, rng)
    y = random_element(alg, rng)
    N = spec.horizon
    seq = np.empty(N, dtype=complex)
    if spec.mode == "two-sided":
        t = spec.operator
        lv = 2 * p.log(np.arange(1, N + 1))
        cur = t.H @ x @ t / np.exp(lv[0])
        for k in range(N):
            if k:
                cur = (t.H @ cur @ t) * np.exp(lv[k - 1] - lv[k])
            seq[k] = trace(y @ cur)
    else:
        psi = spec.generator.matrix
        lv = p.log(np.arange(1, N + 1))
        cur = psi @ alg.to_vector(x) / np.exp(lv[0])
        for k in range(N):
            if k:
                cur = np.exp(lv[k - 1] - lv[k]) * (psi @ cur)
            seq[k] = trace(y @ alg.from_vector(cur))
    target = trace(y @ alg.from_vector(result @ alg.to_vector(x)))
    re, im = almost_limit(seq.real, spec.tol), almost_limit(seq.imag, spec.tol)
    est = complex(re.value, im.value)
    spread = max(re.spread, im.spread)
    err = abs(est - target)
    scale = max(1.0, abs(target))
    return {"estimate": [est.real, est.imag], "target": [target.real, target.imag], "error": err,
            "spread": spread, "converged": bool(re.converged and im.converged),
            "consistent": bool(err <= spread + 10 * spec.tol * scale), "horizon": N}


def _window_limit(spec: OrbitLimitSpec, psi: np.ndarray, lv: np.ndarray) -> tuple[np.ndarray, dict[str, Any]]:
    N = spec.horizon
    D2 = psi.shape[0]
    if 2 * N * D2 * D2 > WINDOW_MAX_FLOATS:
        raise ResourceLimit(f"window method would materialize {2 * N * D2 * D2} floats", horizon=N, element_dim=D2)
    stack = np.empty((N, D2, D2), dtype=complex)
    cur = psi / np.exp(lv[0])
    for k in range(N):
        if k:
            cur = np.exp(lv[k - 1] - lv[k]) * (psi @ cur)
        stack[k] = cur
    flat = np.concatenate([stack.real.reshape(N, -1), stack.imag.reshape(N, -1)], axis=1)
    sched, est, lo, hi = window_statistics(flat)
    spread = float((hi[-1] - lo[-1]).max())
    drift = float(np.abs(est[-1] - est[-2]).max()) if len(sched) > 1 else 0.0
    half = D2 * D2
    result = (est[-1][:half] + 1j * est[-1][half:]).reshape(D2, D2)
    info = {"spread": spread, "drift": drift, "schedule": sched, "converged": bool(spread <= spec.tol and drift <= spec.tol)}
    if not info["converged"]:
        raise NotAlmostConvergent(f"entrywise window spread {spread:.3e} (drift {drift:.3e}) exceeds {spec.tol:.1e}",
                                  spread=spread, drift=drift, horizon=N)
    return result, info


def orbit_limit(spec: OrbitLimitSpec) -> SuperOperator:
    """The limit operator E_{L,T} (two-sided) or E_{Phi,L} for phi_n = psi^n (one-sided).

    Raises NotRegularGauge, NotDominated or NotAlmostConvergent when the
    L-independent regime cannot be certified.
    """
    p, c_p, analysis = _gauge_for(spec)
    N = spec.horizon
    if spec.mode == "two-sided":
        t = spec.operator
        alg = t.algebra
        ratios = norm_ratios(t, p, N)
        psi = orbit_superoperator(t).matrix
        c = c_p ** 2
        lv = 2 * p.log(np.arange(1, N + 1))
        label = "E_T"
    else:
        alg = spec.generator.algebra
        ratios = _one_sided_ratios(spec.generator, p, N)
        psi = spec.generator.matrix
        c = c_p
        lv = p.log(np.arange(1, N + 1))
        label = "E_psi"
    dom = domination_from_ratios(ratios)
    if not dom.bounded:
        raise NotDominated(f"orbit norms outgrow the gauge (growth factor {dom.growth:.3f} over the horizon)",
                           constant=dom.constant, growth=dom.growth, horizon=N)

    info: dict[str, Any] = {"c_p": c_p, "mode": spec.mode, "horizon": N,
                            "domination_constant": dom.constant, "literally_dominated": dom.dominated,
                            "regular": analysis.regular}
    method = "window" if spec.allow_irregular else spec.method
    if method == "spectral":
        if spec.mode == "two-sided":
            result, pinfo = _two_sided_projection(spec.operator, c_p, spec.cluster_radius)
        else:
            result, pinfo = ergodic_projection(psi / c, spec.cluster_radius)
        if pinfo["spectral_radius"] > 1 + SPECTRAL_SLACK:
            raise NotDominated(f"normalized orbit map has spectral radius {pinfo['spectral_radius']:.6f} > 1",
                               **pinfo)
        if pinfo["semisimple_defect"] > 10 * spec.cluster_radius:
            raise NotDominated("a peripheral eigenvalue carries a Jordan block, so the orbit is not power bounded",
                               **pinfo)
        info.update(method="spectral", **pinfo)
        info["probe"] = _probe(spec, p, result, alg)
    else:
        result, winfo = _window_limit(spec, psi, lv)
        info.update(method="window", **winfo)
        if not analysis.regular:
            rho = almost_limit_of_gauge_power(p, c_p, 2 if spec.mode == "two-sided" else 1)
            info.update(l_dependent=not rho.converged, rho=rho.value)
    return SuperOperator(alg, result, label, info)


def limit_operator(t: AlgebraElement, gauge: Gauge, **kwargs: Any) -> SuperOperator:
    """Shorthand for ``orbit_limit(OrbitLimitSpec(t, gauge, **kwargs))``."""
    return orbit_limit(OrbitLimitSpec(t, gauge, **kwargs))


def sequence_limit(maps: Sequence[SuperOperator], gauge: Gauge, tol: float = LIMIT_TOL) -> SuperOperator:
    """Entrywise almost limit of phi_n / p(n) for an explicit list phi_1..phi_N."""
    if not maps:
        raise ValueError("need at least one map")
    alg = maps[0].algebra
    N = len(maps)
    lv = gauge.log(np.arange(1, N + 1))
    stack = np.array([m.matrix for m in maps]) / np.exp(lv)[:, None, None]
    D2 = alg.element_dim
    flat = np.concatenate([stack.real.reshape(N, -1), stack.imag.reshape(N, -1)], axis=1)
    sched, est, lo, hi = window_statistics(flat)
    spread = float((hi[-1] - lo[-1]).max())
    if spread > tol:
        raise NotAlmostConvergent(f"entrywise window spread {spread:.3e} exceeds {tol:.1e}", spread=spread)
    half = D2 * D2
    result = (est[-1][:half] + 1j * est[-1][half:]).reshape(D2, D2)
    return SuperOperator(alg, result, "E_Phi", {"spread": spread, "schedule": sched})


# law checks

@dataclass(frozen=True)
class LawReport:
    defects: Mapping[str, float]
    tol: float
    extra: Mapping[str, Any] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(d <= self.tol for d in self.defects.values())

    def raise_for_violation(self) -> LawReport:
        for name, d in self.defects.items():
            if d > self.tol:
                raise LawViolation(name, d, tol=self.tol)
        return self

    def to_dict(self) -> dict[str, Any]:
        return {"ok": self.ok, "tol": self.tol, "defects": dict(self.defects), **dict(self.extra)}


def residual(lhs: AlgebraElement, rhs: AlgebraElement, floor: float) -> float:
    """||lhs - rhs|| relative to the size of the terms, never below ``floor``.

    Rounding in E(X) scales with ||E|| ||X||, which is cond(S)^2 for T similar
    to a unitary through S; an absolute residual would measure conditioning.
    """
    return op_norm(lhs - rhs) / max(op_norm(lhs), op_norm(rhs), floor)


def _poly_in(elems: Sequence[AlgebraElement], rng: np.random.Generator) -> AlgebraElement:
    """A random element of the algebra generated by ``elems`` (so it commutes with their commutant)."""
    alg = elems[0].algebra
    out = alg.scalar(complex(rng.standard_normal(), rng.standard_normal()))
    for e in elems:
        coef = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        out = out + e * coef[0] + (e @ e) * coef[1]
    return out / max(1.0, op_norm(out))


def verify_orbit_laws(e: SuperOperator, t: AlgebraElement, p: Gauge, tol: float = LAW_TOL,
                  samples: int = 10, seed: int = 0) -> LawReport:
    """Check the orbit-limit identities on random inputs.

    intertwining-left   E(T* X T) = c^2 E(X)
    commutant           E(A* X B) = A* E(X) B   (A, B polynomials in T)
    intertwining-right  T* E(X) T = c^2 E(X)
    projection          E o E = rho E,  rho = L(c^{2n} / p(n)^2) in [0, 1]
    """
    rng = np.random.default_rng(seed)
    c_p = e.info.get("c_p") if e.info else None
    if c_p is None:
        c_p = analyze_gauge(p).c_p
    c2 = c_p ** 2
    rho_res = almost_limit_of_gauge_power(p, c_p, 2)
    rho = rho_res.value
    alg = t.algebra
    d_left = d_right = d_comm = 0.0
    for _ in range(samples):
        x = random_element(alg, rng)
        xn = op_norm(x)
        ex = e(x)
        d_left = max(d_left, residual(e(t.H @ x @ t), ex * c2, c2 * xn))
        d_right = max(d_right, residual(t.H @ ex @ t, ex * c2, c2 * xn))
        a, b = _poly_in([t], rng), _poly_in([t], rng)
        d_comm = max(d_comm, residual(e(a.H @ x @ b), a.H @ ex @ b, op_norm(a) * op_norm(b) * xn))
    ee = e.matrix @ e.matrix
    d_proj = float(np.linalg.norm(ee - rho * e.matrix, 2) / max(1.0, np.linalg.norm(e.matrix, 2)))
    defects = {"intertwining-left": d_left, "commutant": d_comm, "intertwining-right": d_right,
               "projection": d_proj, "rho-range": max(0.0, rho - 1, -rho)}
    analysis = analyze_gauge(p)
    if analysis.regular:
        defects["rho-regular"] = abs(rho - 1)
    return LawReport(defects, tol, {"rho": rho, "c_p": c_p})


def hat_compatibility(e_t: SuperOperator, t: AlgebraElement, p: Gauge, tol: float = 1e-8,
                      **kwargs: Any) -> LawReport:
    """tau_adjoint(E_T) = E_{T*}."""
    e_star = limit_operator(t.H, p, **kwargs)
    d = tau_adjoint(e_t).distance(e_star) / max(1.0, float(np.linalg.norm(e_star.matrix)))
    return LawReport({"hat-law": d}, tol)


# semigroup limits

def _gauges_for(family: Sequence[AlgebraElement], gauge: Gauge | Sequence[Gauge]) -> list[Gauge]:
    if isinstance(gauge, Gauge):
        return [gauge] * len(family)
    gauges = list(gauge)
    if len(gauges) != len(family):
        raise ValueError("need one gauge per family member")
    return gauges


def check_commuting(family: Sequence[AlgebraElement], tol: float = 1e-9) -> float:
    worst = 0.0
    for a, b in itertools.combinations(family, 2):
        defect = op_norm(a @ b - b @ a) / max(1.0, op_norm(a) * op_norm(b))
        worst = max(worst, defect)
        if defect > tol:
            raise NonCommutingFamily(f"family members do not commute (defect {defect:.3e})", defect=defect)
    return worst


def semigroup_limit(family: Sequence[AlgebraElement], gauge: Gauge | Sequence[Gauge], tol: float = 1e-9,
                    max_iter: int = 64, order: Sequence[int] | None = None, verify: bool = True,
                    law_tol: float = LAW_TOL, seed: int = 0, **kwargs: Any) -> SuperOperator:
    """Limit E of the net generated by {E_T : T in family}.

    The composed generator C = E_{T_1} o ... o E_{T_m} is iterated until the
    action matrix stops moving.  With ``verify`` the limit is checked to be an
    idempotent, completely positive map with E(T*XT) = c_T^2 E(X) and
    E(A*XB) = A*E(X)B for A, B in the algebra generated by the family.
    """
    if not family:
        raise ValueError("family must be non-empty")
    check_commuting(family)
    gauges = _gauges_for(family, gauge)
    gens = [limit_operator(t, g, **kwargs) for t, g in zip(family, gauges)]
    idx = list(range(len(family))) if order is None else list(order)
    comp = gens[idx[0]].matrix
    for i in idx[1:]:
        comp = comp @ gens[i].matrix
    cur = comp
    for it in range(1, max_iter + 1):
        nxt = comp @ cur
        delta = float(np.linalg.norm(nxt - cur, 2))
        cur = nxt
        if delta < tol * max(1.0, np.linalg.norm(cur, 2)):
            break
    else:
        raise NoConvergence(f"net iteration did not settle in {max_iter} steps (delta {delta:.3e})",
                            delta=delta, iterations=max_iter)
    alg = family[0].algebra
    info = {"iterations": it, "delta": delta, "c_p": [g.info["c_p"] for g in gens],
            "generators": [dict(g.info) for g in gens]}
    e = SuperOperator(alg, cur, "E", info)
    if verify:
        report = verify_semigroup_limit(e, family, [g.info["c_p"] for g in gens], law_tol, seed)
        report.raise_for_violation()
        e = e.with_info(laws=report.to_dict())
    return e


def verify_semigroup_limit(e: SuperOperator, family: Sequence[AlgebraElement], c_values: Sequence[float],
                           tol: float = LAW_TOL, seed: int = 0, samples: int = 5) -> LawReport:
    rng = np.random.default_rng(seed)
    alg = e.algebra
    proj = float(np.linalg.norm(e.matrix @ e.matrix - e.matrix, 2) / max(1.0, np.linalg.norm(e.matrix, 2)))
    cert = cp_certificate(e, tol=1e-8)
    d_int = d_comm = 0.0
    for _ in range(samples):
        x = random_element(alg, rng)
        xn = op_norm(x)
        ex = e(x)
        for t, c in zip(family, c_values):
            d_int = max(d_int, residual(e(t.H @ x @ t), ex * c ** 2, c ** 2 * xn))
        a, b = _poly_in(family, rng), _poly_in(family, rng)
        d_comm = max(d_comm, residual(e(a.H @ x @ b), a.H @ ex @ b, op_norm(a) * op_norm(b) * xn))
    defects = {"projection": proj, "intertwining": d_int, "commutant": d_comm,
               "cp": max(0.0, -cert.min_eig - 1e-8)}
    return LawReport(defects, tol, {"choi_min_eig": cert.min_eig})


# intertwining unitaries

def injectivity_threshold(x: AlgebraElement, rel: float = 1e-8, floor: float = 1e-12) -> float:
    return max(rel * op_norm(x), floor)


@dataclass(frozen=True, eq=False)
class Intertwining:
    unitaries: tuple[AlgebraElement, ...]
    sqrt_ei: AlgebraElement
    unitarity_defects: tuple[float, ...]
    commutation_defect: float
    laws: LawReport | None = None


def intertwine_unitaries(e: SuperOperator, family: Sequence[AlgebraElement], c_values: Sequence[float],
                         tol: float = 1e-6, rel_threshold: float = 1e-8, check_f: bool = False,
                         seed: int = 0) -> Intertwining:
    """U_T = (1/c_T) sqrt(E(I)) T sqrt(E(I))^{-1}, asserted unitary and pairwise commuting.

    With ``check_f`` the limit F of the net generated by {U_T} is built and the
    transfer identities E(A Z A) = A F(Z) A and A hat(E)(Z) A = hat(F)(A Z A)
    (A = sqrt(E(I))) are checked on random Z.
    """
    alg = e.algebra
    ei = e(alg.identity())
    vals, vecs = eigh(ei, tol=1e-6)
    thr = injectivity_threshold(ei, rel_threshold)
    if vals[0] <= thr:
        raise SingularEI(f"E(I) is not injective: min eigenvalue {vals[0]:.3e} <= {thr:.3e}",
                         min_eig=float(vals[0]), threshold=thr, witness=_vec_json(vecs[:, 0]))
    a = sqrt_psd(ei, tol=1e-6)
    a_inv = invert(a)
    us, defects = [], []
    for t, c in zip(family, c_values):
        u = (a @ t @ a_inv) / c
        d = op_norm(u.H @ u - alg.identity())
        if d > tol:
            raise UnitarityDefect(f"U_T is not unitary (defect {d:.3e})", defect=d)
        us.append(u)
        defects.append(d)
    comm = 0.0
    for u, v in itertools.combinations(us, 2):
        comm = max(comm, op_norm(u @ v - v @ u))
    if comm > tol:
        raise CommutationDefect(f"the unitaries U_T do not commute (defect {comm:.3e})", defect=comm)
    laws = None
    if check_f:
        f = semigroup_limit(us, Gauge.constant(1.0), verify=False)
        e_hat, f_hat = tau_adjoint(e), tau_adjoint(f)
        rng = np.random.default_rng(seed)
        d1 = d2 = 0.0
        for _ in range(5):
            z = random_element(alg, rng)
            scale = op_norm(z) * op_norm(a) ** 2
            d1 = max(d1, op_norm(e(a @ z @ a) - a @ f(z) @ a) / scale)
            d2 = max(d2, op_norm(a @ e_hat(z) @ a - f_hat(a @ z @ a)) / scale)
        laws = LawReport({"transfer": d1, "transfer-hat": d2}, LAW_TOL)
    return Intertwining(tuple(us), a, tuple(defects), comm, laws)


def _vec_json(v: np.ndarray) -> list[list[float]]:
    return [[float(z.real), float(z.imag)] for z in v]


# similarity pipeline

@dataclass(frozen=True)
class SimilarityConfig:
    mode: str = "per-member"  # or "shared"
    horizon: int = 512
    gauge_horizon: int = 4096
    injectivity_rel: float = 1e-8
    unitarity_tol: float = 1e-6
    spectrum_eps: float = 1e-6
    radius_match: float = 0.02
    verify_laws: bool = True
    seed: int = 0


@dataclass(frozen=True, eq=False)
class SimilarityReport:
    family: tuple[AlgebraElement, ...]
    gauges: tuple[Gauge, ...]
    spectral_radii: tuple[float, ...]
    c_values: tuple[float, ...]
    e: SuperOperator
    ei: AlgebraElement
    ei_spectrum: np.ndarray
    a: AlgebraElement
    unitaries: tuple[AlgebraElement, ...]
    unitarity_defects: tuple[float, ...]
    commutation_defect: float
    r: AlgebraElement
    r_spectrum: np.ndarray
    verdict: str
    telemetry: Mapping[str, Any] = field(default_factory=dict)

    @property
    def min_eig_ei(self) -> float:
        return float(self.ei_spectrum[0])

    @property
    def success(self) -> bool:
        return self.verdict == "success"


def _member_gauges(family: Sequence[AlgebraElement], gauge: Gauge | None,
                   config: SimilarityConfig) -> tuple[list[Gauge], list[float]]:
    radii = [spectral_radius(t) for t in family]
    if config.mode == "per-member":
        gauges = []
        for r in radii:
            if r <= 1e-12:
                raise NotCompatible("spectral radius is 0; no geometric gauge r(T)^n exists", spectral_radius=r)
            gauges.append(Gauge.geometric(r, config.gauge_horizon))
        return gauges, radii
    if config.mode != "shared":
        raise ValueError(f"unknown similarity mode {config.mode!r}")
    if gauge is None:
        raise ValueError("shared mode needs a gauge")
    return [gauge] * len(family), radii


def similarity(family: Sequence[AlgebraElement], gauge: Gauge | None = None,
               config: SimilarityConfig = SimilarityConfig()) -> SimilarityReport:
    """Build A = sqrt(E(I)) with r(T)^{-1} A T A^{-1} unitary for every T in the family.

    Gates, in order: commuting family, regular gauges, domination, compatibility
    (including r(T) = c_p), injectivity of E(I) (NotC1), unitarity and
    commutation of the U_T, and sigma(R) in [1 - eps, inf) for
    R = sqrt(E(I)) hat(E)(I) sqrt(E(I)).
    """
    family = list(family)
    if not family:
        raise ValueError("family must be non-empty")
    check_commuting(family)
    gauges, radii = _member_gauges(family, gauge, config)
    c_values = []
    for t, g, r in zip(family, gauges, radii):
        analysis = analyze_gauge(g)
        if not analysis.regular:
            raise NotRegularGauge("gauge is not regular", c_p=analysis.c_p,
                                  deviation=analysis.regularity_limit.deviation(0.0))
        dom = domination_from_ratios(norm_ratios(t, g, config.horizon))
        if not dom.bounded:
            raise NotDominated(f"||T^n|| / p(n) is unbounded (growth {dom.growth:.3f})",
                               constant=dom.constant, growth=dom.growth)
        if not dom.compatible:
            raise NotCompatible("||T^n|| / p(n) almost converges to 0",
                                ratio_limit=dom.ratio_limit.value, spectral_radius=r, c_p=analysis.c_p)
        if abs(r - analysis.c_p) > config.radius_match * analysis.c_p:
            raise NotCompatible(f"r(T) = {r:.6g} differs from c_p = {analysis.c_p:.6g}",
                                spectral_radius=r, c_p=analysis.c_p)
        c_values.append(analysis.c_p)

    e = semigroup_limit(family, gauges, horizon=config.horizon, verify=config.verify_laws, seed=config.seed)
    alg = family[0].algebra
    ei = e(alg.identity())
    vals, vecs = eigh(ei, tol=1e-6)
    thr = injectivity_threshold(ei, config.injectivity_rel)
    if vals[0] <= thr:
        raise NotC1(f"E(I) is singular: min eigenvalue {vals[0]:.3e} <= {thr:.3e}; some orbit dies",
                    min_eig=float(vals[0]), threshold=thr, witness=_vec_json(vecs[:, 0]),
                    ei_spectrum=vals.tolist())
    inter = intertwine_unitaries(e, family, c_values, tol=config.unitarity_tol,
                                 rel_threshold=config.injectivity_rel)
    a = inter.sqrt_ei
    y = tau_adjoint(e)(alg.identity())
    r_el = a @ y @ a
    r_el = (r_el + r_el.H) * 0.5
    r_spec = eigh(r_el, tol=np.inf)[0]
    if r_spec[0] < 1 - config.spectrum_eps:
        raise LawViolation("R-spectrum", float(1 - r_spec[0]), min_eig=float(r_spec[0]))
    telemetry = {"horizon": config.horizon, "gauge_horizon": config.gauge_horizon, "mode": config.mode,
                 "net_iterations": e.info.get("iterations"), "injectivity_threshold": thr,
                 "a_condition": float(np.sqrt(vals[-1] / vals[0])),
                 "generators": e.info.get("generators"), "laws": e.info.get("laws")}
    return SimilarityReport(
        family=tuple(family), gauges=tuple(gauges), spectral_radii=tuple(radii), c_values=tuple(c_values),
        e=e, ei=ei, ei_spectrum=vals, a=a, unitaries=inter.unitaries,
        unitarity_defects=inter.unitarity_defects, commutation_defect=inter.commutation_defect,
        r=r_el, r_spectrum=r_spec, verdict="success", telemetry=telemetry)


# asymptotic control diagnostics

def _orbit_vectors(t: AlgebraElement, g: Gauge, x: np.ndarray, horizon: int) -> np.ndarray:
    """Columns T^j x / p(j), j = 1..N."""
    lv = g.log(np.arange(1, horizon + 1))
    out = np.empty((x.size, horizon), dtype=complex)
    v = t.apply(x) / np.exp(lv[0])
    for j in range(horizon):
        if j:
            v = t.apply(v) * np.exp(lv[j - 1] - lv[j])
        out[:, j] = v
    return out


def asymptotic_control_report(family: Sequence[AlgebraElement], gauge: Gauge | Sequence[Gauge],
                              probes: Sequence[np.ndarray], horizon: int = 64,
                              subset_budget: int = 4) -> list[dict[str, Any]]:
    """Lower estimates of q' and nested q~ on truncated orbit energies, next to <E(I)x, x>.

    Diagnostic only: the binding gate of the similarity pipeline is the
    spectrum of E(I).
    """
    family = list(family)
    gauges = _gauges_for(family, gauge)
    try:
        e = semigroup_limit(family, gauges, verify=False)
        ei = e(family[0].algebra.identity())
        e_error = None
    except FinvnError as exc:
        ei, e_error = None, exc.name
    rows = []
    for x in probes:
        x = np.asarray(x, dtype=complex)
        x = x / np.linalg.norm(x)
        singles = []
        orbits = []
        for t, g in zip(family, gauges):
            vecs = _orbit_vectors(t, g, x, horizon)
            orbits.append(vecs)
            singles.append(q_prime(np.sum(np.abs(vecs) ** 2, axis=0), subset_budget))
        pairs = []
        for (i, t1), (j, t2) in itertools.combinations_with_replacement(enumerate(family), 2):
            g1 = gauges[i]
            lv = g1.log(np.arange(1, horizon + 1))
            arr = np.empty((horizon, horizon))
            # cur[:, j2] = T1^{j1} T2^{j2} x / (p1(j1) p2(j2))
            cur = np.stack([t1.apply(orbits[j][:, k]) for k in range(horizon)], axis=1) / np.exp(lv[0])
            for j1 in range(horizon):
                if j1:
                    cur = np.stack([t1.apply(cur[:, k]) for k in range(horizon)], axis=1) * np.exp(lv[j1 - 1] - lv[j1])
                arr[j1] = np.sum(np.abs(cur) ** 2, axis=0)
            pairs.append({"members": [i, j], "q_tilde": q_tilde(arr, 2, subset_budget)})
        ei_xx = None if ei is None else float(np.vdot(x, ei.apply(x)).real)
        rows.append({"probe": _vec_json(x), "q_prime": singles, "q_tilde": pairs, "ei_xx": ei_xx,
                     "e_error": e_error})
    return rows
