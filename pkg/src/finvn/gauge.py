"""Gauges, almost convergence and the q' functional.

Banach limits are not constructive, so this module only evaluates them on
almost-convergent sequences, where every Banach limit returns the same value.
Window means ``(1/w) sum_{i=k}^{k+w-1} u_i`` are taken over the doubling
schedule ``w = 16, 32, ..., N/4`` and every admissible start ``k`` past a
burn-in of N/8 terms.  Almost limits are shift invariant, so the burn-in only
removes the transient that would otherwise dominate the spread of fast
convergent sequences.  Sequences that fail the test are reported with their
spread, never given a value by fiat.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .algebra import LIMIT_TOL, AlgebraElement, op_norm
from .errors import DimensionTooLarge, HorizonTooShort, NotAGauge, NotAlmostConvergent

GAUGE_TOL = 1e-2
MIN_WINDOW = 16
MIN_SEQUENCE = 16
MIN_GAUGE_HORIZON = 256
DOMINATION_SLACK = 1e-9
GROWTH_FACTOR = 1.5
CINF_GAP_WARN = 0.05
BURN_IN_FRACTION = 8  # drop the first N // 8 terms


class GaugeWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class RealSequence:
    """Truncation u_1..u_N of a bounded real sequence."""

    values: np.ndarray

    def __init__(self, values: Sequence[float] | np.ndarray) -> None:
        arr = np.array(values, dtype=float).ravel()
        if arr.size < MIN_SEQUENCE:
            raise HorizonTooShort(f"sequence has {arr.size} terms, need at least {MIN_SEQUENCE}", horizon=arr.size)
        if not np.all(np.isfinite(arr)):
            raise ValueError("sequence terms must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def horizon(self) -> int:
        return int(self.values.size)


def window_schedule(horizon: int) -> list[int]:
    sched = []
    w = MIN_WINDOW
    while w <= -(-horizon // 4):  # w <= ceil(N/4)
        sched.append(w)
        w *= 2
    if not sched:
        raise HorizonTooShort(f"horizon {horizon} admits no window of length >= {MIN_WINDOW} and <= N/4",
                              horizon=horizon)
    return sched


@dataclass(frozen=True)
class AlmostLimitResult:
    value: float
    spread: float
    converged: bool
    schedule: tuple[int, ...]
    lower: float
    upper: float
    estimates: tuple[float, ...] = field(repr=False)
    tol: float = LIMIT_TOL

    def deviation(self, c: float) -> float:
        """sup_k |A(w, k) - c| at the final window length."""
        return max(self.upper - c, c - self.lower)

    def to_dict(self) -> dict[str, Any]:
        return {
            "value": self.value, "spread": self.spread, "converged": self.converged,
            "schedule": list(self.schedule), "lower": self.lower, "upper": self.upper,
            "estimates": list(self.estimates), "tol": self.tol,
        }


def window_statistics(values: np.ndarray) -> tuple[list[int], np.ndarray, np.ndarray, np.ndarray]:
    """Window-mean statistics of ``values`` (axis 0 is the sequence index).

    Returns the schedule and, per schedule step, the estimate (mean over start
    positions), minimum and maximum window means, each with the trailing shape
    of ``values``.
    """
    values = np.asarray(values, dtype=float)
    sched = window_schedule(values.shape[0])
    values = values[values.shape[0] // BURN_IN_FRACTION:]
    est, lo, hi = [], [], []
    for w in sched:
        # sliding_window_view puts the window axis last; numpy sums it pairwise
        means = sliding_window_view(values, w, axis=0).mean(axis=-1)
        est.append(means.mean(axis=0))
        lo.append(means.min(axis=0))
        hi.append(means.max(axis=0))
    return sched, np.array(est), np.array(lo), np.array(hi)


def almost_limit(u: Sequence[float] | np.ndarray | RealSequence, tol: float = LIMIT_TOL,
                 strict: bool = False) -> AlmostLimitResult:
    """Estimate the Lorentz almost limit of a real sequence.

    ``converged`` requires the final window spread to be within ``tol`` and the
    last two schedule estimates to agree within ``tol``.  With ``strict=True``
    a non-converged sequence raises :class:`NotAlmostConvergent`.
    """
    seq = u if isinstance(u, RealSequence) else RealSequence(u)
    sched, est, lo, hi = window_statistics(seq.values)
    spread = float(hi[-1] - lo[-1])
    stable = len(sched) < 2 or abs(est[-1] - est[-2]) <= tol
    res = AlmostLimitResult(
        value=float(est[-1]), spread=spread, converged=bool(spread <= tol and stable),
        schedule=tuple(sched), lower=float(lo[-1]), upper=float(hi[-1]),
        estimates=tuple(float(e) for e in est), tol=tol)
    if strict and not res.converged:
        raise NotAlmostConvergent(f"window spread {spread:.3e} exceeds {tol:.1e}", **res.to_dict())
    return res


def strong_almost_limit_result(u: Sequence[float] | np.ndarray, c: float,
                               tol: float = GAUGE_TOL) -> AlmostLimitResult:
    return almost_limit(np.abs(np.asarray(u, dtype=float) - c), tol)


def strong_almost_limit(u: Sequence[float] | np.ndarray, c: float, tol: float = GAUGE_TOL) -> bool:
    """Whether (|u_n - c|) almost converges to 0 within ``tol``."""
    res = strong_almost_limit_result(u, c, tol)
    return bool(res.converged and res.deviation(0.0) <= tol)


# gauges

@dataclass(frozen=True, eq=False)
class Gauge:
    """A positive sequence p(1..N), stored as log p to keep geometric gauges representable."""

    kind: str
    log_values: np.ndarray = field(repr=False)
    params: Mapping[str, Any] = field(default_factory=dict)
    exact_c: float | None = None

    def __post_init__(self) -> None:
        lv = np.array(self.log_values, dtype=float)
        if lv.ndim != 1 or lv.size == 0:
            raise ValueError("a gauge needs at least one sample")
        if not np.all(np.isfinite(lv)):
            raise ValueError("gauge values must be finite and strictly positive")
        lv.setflags(write=False)
        object.__setattr__(self, "log_values", lv)

    @classmethod
    def constant(cls, value: float = 1.0, horizon: int = 4096) -> Gauge:
        if value <= 0:
            raise ValueError("gauge values must be positive")
        return cls("constant", np.full(horizon, np.log(value)), {"value": float(value)}, exact_c=1.0)

    @classmethod
    def geometric(cls, c: float, horizon: int = 4096, scale: float = 1.0) -> Gauge:
        if c <= 0 or scale <= 0:
            raise ValueError("geometric gauges need c > 0 and scale > 0")
        n = np.arange(1, horizon + 1)
        params = {"c": float(c)} if scale == 1.0 else {"c": float(c), "scale": float(scale)}
        return cls("geometric", n * np.log(c) + np.log(scale), params, exact_c=float(c))

    @classmethod
    def custom(cls, values: Sequence[float]) -> Gauge:
        arr = np.asarray(values, dtype=float)
        if np.any(arr <= 0):
            raise ValueError("gauge values must be positive")
        return cls("custom", np.log(arr), {"values": arr.tolist()})

    @classmethod
    def from_function(cls, func: Callable[[np.ndarray], np.ndarray], horizon: int = 4096,
                      log: bool = False, **params: Any) -> Gauge:
        """Sample ``func`` on n = 1..horizon (``log=True`` if it returns log p)."""
        n = np.arange(1, horizon + 1, dtype=float)
        vals = np.asarray(func(n), dtype=float) * np.ones_like(n)
        if not log:
            if np.any(vals <= 0):
                raise ValueError("gauge values must be positive")
            vals = np.log(vals)
        return cls("formula", vals, dict(params))

    @classmethod
    def formula(cls, expr: str, horizon: int = 4096) -> Gauge:
        """Gauge from an expression in ``n``, e.g. ``"n + 1"`` or ``"0.9**n*(1 + 1/n)"``."""
        import sympy

        n = sympy.Symbol("n", positive=True)
        parsed = sympy.parse_expr(expr, local_dict={"n": n})
        if parsed.free_symbols - {n}:
            raise ValueError(f"formula may only depend on n: {expr!r}")
        log_fn = sympy.lambdify(n, sympy.expand_log(sympy.log(parsed), force=True), "numpy")
        return cls.from_function(log_fn, horizon, log=True, expr=expr)

    @property
    def horizon(self) -> int:
        return int(self.log_values.size)

    @property
    def values(self) -> np.ndarray:
        return np.exp(self.log_values)

    def __call__(self, n: int | np.ndarray) -> float | np.ndarray:
        """p(n) for 1-based n."""
        return np.exp(self.log(n))

    def log(self, n: int | np.ndarray) -> float | np.ndarray:
        idx = np.asarray(n) - 1
        if np.any(idx < 0) or np.any(idx >= self.horizon):
            raise HorizonTooShort(f"gauge sampled up to {self.horizon}, asked for n={n}", horizon=self.horizon)
        out = self.log_values[idx]
        return float(out) if np.ndim(out) == 0 else out

    def resample(self, horizon: int) -> Gauge:
        if horizon <= self.horizon:
            return Gauge(self.kind, self.log_values[:horizon], self.params, self.exact_c)
        if self.kind == "constant":
            return Gauge.constant(self.params["value"], horizon)
        if self.kind == "geometric":
            return Gauge.geometric(self.params["c"], horizon, self.params.get("scale", 1.0))
        if self.kind == "formula" and "expr" in self.params:
            return Gauge.formula(self.params["expr"], horizon)
        raise HorizonTooShort(f"{self.kind} gauge has only {self.horizon} samples", horizon=self.horizon)

    def squared(self) -> Gauge:
        c = None if self.exact_c is None else self.exact_c ** 2
        return Gauge(f"{self.kind}^2", 2 * self.log_values, {"base": dict(self.params)}, c)

    def to_json(self) -> dict[str, Any]:
        if self.kind in ("constant", "geometric"):
            return {"kind": self.kind, **self.params}
        if self.kind == "formula" and "expr" in self.params:
            return {"kind": "formula", "expr": self.params["expr"]}
        return {"kind": "custom", "values": self.values.tolist()}

    @classmethod
    def from_json(cls, data: Mapping[str, Any], horizon: int = 4096) -> Gauge:
        kind = data.get("kind")
        if kind == "constant":
            return cls.constant(float(data.get("value", 1.0)), horizon)
        if kind == "geometric":
            return cls.geometric(float(data["c"]), horizon, float(data.get("scale", 1.0)))
        if kind == "custom":
            return cls.custom(data["values"])
        if kind == "formula":
            return cls.formula(str(data["expr"]), horizon)
        raise ValueError(f"unknown gauge kind {kind!r}")


@dataclass(frozen=True)
class GaugeAnalysis:
    c_p: float
    regular: bool
    c_inf: float
    relative_gap: float
    ratio_limit: AlmostLimitResult
    regularity_limit: AlmostLimitResult
    warnings: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "c_p": self.c_p, "regular": self.regular, "c_inf": self.c_inf,
            "relative_gap": self.relative_gap, "ratio_limit": self.ratio_limit.to_dict(),
            "regularity_limit": self.regularity_limit.to_dict(), "warnings": list(self.warnings),
        }


def analyze_gauge(p: Gauge, tol: float = GAUGE_TOL) -> GaugeAnalysis:
    """Find c_p (ratios strongly almost convergent) and decide regularity.

    c_p is the almost limit of p(n+1)/p(n).  For analytic kinds the exact
    constant is used; otherwise the estimate is refined by the mean log-ratio
    over the second half of the horizon, which resolves c_p to O(1/N^2) for
    smooth gauges.  This matters because the regularity test raises c_p to the
    N-th power.
    """
    N = p.horizon
    if N < MIN_GAUGE_HORIZON:
        raise HorizonTooShort(f"gauge analysis needs horizon >= {MIN_GAUGE_HORIZON}, got {N}", horizon=N)
    ratios = np.exp(np.diff(p.log_values))
    ratio_res = almost_limit(ratios, tol)
    candidate = ratio_res.value
    strong = strong_almost_limit_result(ratios, candidate, tol)
    if candidate <= 0 or not (strong.converged and strong.deviation(0.0) <= tol):
        raise NotAGauge("p(n+1)/p(n) is not strongly almost convergent",
                        candidate=candidate, deviation=strong.deviation(0.0), spread=strong.spread)
    if p.exact_c is not None:
        c_p = p.exact_c
    else:
        half = N // 2
        c_tail = float(np.exp((p.log_values[-1] - p.log_values[half - 1]) / (N - half)))
        c_p = c_tail if abs(c_tail - candidate) <= tol * candidate else candidate

    n = np.arange(1, N + 1)
    c_inf = float(np.exp(np.min(p.log_values / n)))
    gap = abs(c_inf - c_p) / c_p
    notes = []
    if gap > CINF_GAP_WARN:
        msg = f"inf p(n)^(1/n) = {c_inf:.6g} differs from c_p = {c_p:.6g} by {100 * gap:.1f}%"
        notes.append(msg)
        warnings.warn(msg, GaugeWarning, stacklevel=2)

    normalized = np.exp(n * np.log(c_p) - p.log_values)
    reg_res = strong_almost_limit_result(normalized, 1.0, tol)
    regular = bool(reg_res.converged and reg_res.deviation(0.0) <= tol)
    return GaugeAnalysis(c_p=float(c_p), regular=regular, c_inf=c_inf, relative_gap=float(gap),
                         ratio_limit=ratio_res, regularity_limit=reg_res, warnings=tuple(notes))


def almost_limit_of_gauge_power(p: Gauge, c_p: float, power: int = 2, tol: float = GAUGE_TOL) -> AlmostLimitResult:
    """Almost limit of c_p^{k n} / p(n)^k (k=2 gives rho_L(p), k=1 gives gamma_L(p))."""
    n = np.arange(1, p.horizon + 1)
    return almost_limit(np.exp(power * (n * np.log(c_p) - p.log_values)), tol)


# domination

def norm_ratios(t: AlgebraElement, p: Gauge, horizon: int | None = None) -> np.ndarray:
    """||T^n|| / p(n) for n = 1..N, via M_{n+1} = (p(n)/p(n+1)) M_n T."""
    N = p.horizon if horizon is None else horizon
    lv = p.log(np.arange(1, N + 1))
    mats = [m / np.exp(lv[0]) for m in t.mats]
    out = np.empty(N)
    for k in range(N):
        if k:
            f = np.exp(lv[k - 1] - lv[k])
            mats = [f * (m @ tm) for m, tm in zip(mats, t.mats)]
        out[k] = max(float(np.linalg.norm(m, 2)) for m in mats)
    return out


@dataclass(frozen=True)
class DominationReport:
    dominated: bool
    bounded: bool
    compatible: bool
    constant: float
    growth: float
    ratio_limit: AlmostLimitResult
    q_prime: float | None
    horizon: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "dominated": self.dominated, "bounded": self.bounded, "compatible": self.compatible,
            "constant": self.constant, "growth": self.growth, "ratio_limit": self.ratio_limit.to_dict(),
            "q_prime": self.q_prime, "horizon": self.horizon,
        }


def domination_from_ratios(ratios: np.ndarray, tol: float = GAUGE_TOL) -> DominationReport:
    """Flags for a precomputed sequence ||T_n|| / p(n).

    ``dominated`` is the literal ||T_n|| <= p(n).  ``bounded`` is domination up
    to a constant: the sup of the ratio over the second half of the horizon
    may not exceed GROWTH_FACTOR times its sup over the first half.
    ``compatible`` means the ratio does not almost converge to 0; a
    non-convergent ratio is decided by q' > tol.
    """
    ratios = np.asarray(ratios, dtype=float)
    N = ratios.size
    half = N // 2
    K = float(ratios.max())
    first = float(ratios[:half].max())
    growth = K / first if first > 0 else np.inf
    dominated = bool(K <= 1 + DOMINATION_SLACK)
    bounded = bool(growth <= GROWTH_FACTOR)
    lim = almost_limit(ratios, tol)
    qp = None
    if lim.converged:
        compatible = abs(lim.value) > tol
    else:
        qp = q_prime(ratios)
        compatible = qp > tol
    return DominationReport(dominated=dominated, bounded=bounded, compatible=bool(bounded and compatible),
                            constant=K, growth=float(growth), ratio_limit=lim, q_prime=qp, horizon=N)


def domination(t: AlgebraElement, p: Gauge, horizon: int | None = None, tol: float = GAUGE_TOL) -> DominationReport:
    return domination_from_ratios(norm_ratios(t, p, horizon), tol)


# q' and its iterates

@dataclass(frozen=True)
class QPrimeResult:
    value: float
    offsets: tuple[int, ...]


def _tail_positions(N: int) -> tuple[int, np.ndarray]:
    if N < 4 * MIN_WINDOW:
        raise HorizonTooShort(f"q' needs at least {4 * MIN_WINDOW} terms, got {N}", horizon=N)
    omax = N // 4
    return omax, np.arange(N // 2, N - omax)


def q_prime_search(u: Sequence[float] | np.ndarray, subset_budget: int = 8, max_step: int = 32) -> QPrimeResult:
    """Best offset set found by the deterministic search.

    Index sets are normalized to start at offset 0 (the liminf over k absorbs
    a common shift).  The schedule scans the singleton, arithmetic
    progressions of up to ``subset_budget`` terms with steps up to
    ``max_step``, then greedily augments the best set.  liminf_k is the
    minimum over the tail k in [N/2, 3N/4).
    """
    vals = RealSequence(u).values
    omax, ks = _tail_positions(vals.size)
    table = vals[np.arange(omax)[:, None] + ks[None, :]]  # table[o, j] = u[o + k_j]

    def score(offs: Sequence[int]) -> float:
        return float(table[list(offs)].mean(axis=0).min())

    best = (score([0]), (0,))
    for m in range(2, subset_budget + 1):
        for step in range(1, min(max_step, (omax - 1) // (m - 1)) + 1):
            offs = tuple(range(0, step * m, step))
            s = score(offs)
            if s > best[0]:
                best = (s, offs)

    current = list(best[1])
    total = table[current].sum(axis=0)
    while len(current) < subset_budget:
        cand = (total[None, :] + table) / (len(current) + 1)
        scores = cand.min(axis=1)
        scores[current] = -np.inf
        o = int(np.argmax(scores))
        current.append(o)
        total = total + table[o]
        if scores[o] > best[0]:
            best = (float(scores[o]), tuple(sorted(current)))
    return QPrimeResult(value=best[0], offsets=best[1])


def q_prime(u: Sequence[float] | np.ndarray, subset_budget: int = 8) -> float:
    """Certified lower bound for q'(u) over the scanned index sets."""
    return q_prime_search(u, subset_budget).value


def q_tilde(tensor: np.ndarray, n: int | None = None, subset_budget: int = 8) -> float:
    """Nested q' along the last axis, then the next, down to a scalar."""
    arr = np.asarray(tensor, dtype=float)
    n = arr.ndim if n is None else n
    if n != arr.ndim:
        raise ValueError(f"array has {arr.ndim} axes but n={n}")
    if n > 3:
        raise DimensionTooLarge(f"n = {n} > 3 is rejected at desk scale", n=n)
    while arr.ndim > 1:
        lead = arr.shape[:-1]
        flat = arr.reshape(-1, arr.shape[-1])
        arr = np.array([q_prime(row, subset_budget) for row in flat]).reshape(lead)
    return q_prime(arr, subset_budget)


def op_norm_sequence(t: AlgebraElement, horizon: int) -> np.ndarray:
    """||T^n|| for n = 1..N (unnormalized; overflow-prone for r(T) far from 1)."""
    out = np.empty(horizon)
    power = t
    for k in range(horizon):
        if k:
            power = power @ t
        out[k] = op_norm(power)
    return out
