"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` (or as a script).
"""

from __future__ import annotations

import itertools
import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from finvn.algebra import BlockAlgebra, diagonal, invert, op_norm, random_element, random_invertible, random_unitary
from finvn.demos import cubic_weights, rank_one_compression, truncated_algebra
from finvn.errors import NotC1, NotCompatible, NotDominated, NotRegularGauge
from finvn.gauge import Gauge, almost_limit, analyze_gauge
from finvn.limits import SimilarityConfig, limit_operator, similarity, verify_orbit_laws
from finvn.supermap import (
    SuperOperator,
    algebra_norm,
    amplify,
    cp_certificate,
    duality_defect,
    tau_adjoint,
)

pytestmark = pytest.mark.acceptance


def emit(capsys, index: int, label: str, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"\nacceptance {index} {label}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, detail


def similar_instance(rng: np.random.Generator, dim_range=(2, 16), cond: float = 100.0):
    d = int(rng.integers(dim_range[0], dim_range[1] + 1))
    alg = BlockAlgebra([d])
    r = float(rng.uniform(0.5, 2.0))
    s = random_invertible(alg, rng, cond)
    t = s @ diagonal(alg, r * np.exp(2j * np.pi * rng.random(d))) @ invert(s)
    return t, r


def test_adjoint_norm_growth_anchor(capsys):
    start = time.perf_counter()
    alg = truncated_algebra(8, cubic_weights)
    errs = []
    for n in range(2, 9):
        value, exact = algebra_norm(tau_adjoint(rank_one_compression(alg, n)))
        errs.append(abs(value - (n - 1)) if exact else np.inf)
    elapsed = time.perf_counter() - start
    ok = max(errs) <= 1e-9 and elapsed < 1.0
    emit(capsys, 1, "adjoint-norm-growth", ok, f"max |norm - (n-1)| = {max(errs):.2e}, {elapsed:.2f} s")


def test_orbit_limit_law_suite(capsys):
    rng = np.random.default_rng(1001)
    start = time.perf_counter()
    worst_law, worst_choi, failed = 0.0, np.inf, []
    for k in range(20):
        t, r = similar_instance(rng)
        g = Gauge.geometric(r)
        e = limit_operator(t, g)
        rep = verify_orbit_laws(e, t, g, tol=1e-7)
        choi = cp_certificate(e).min_eig
        worst_law = max(worst_law, max(rep.defects.values()))
        worst_choi = min(worst_choi, choi)
        if not rep.ok or choi < -1e-8:
            failed.append(k)
    elapsed = time.perf_counter() - start
    ok = not failed and elapsed < 30
    emit(capsys, 2, "orbit-limit-laws", ok,
         f"worst law defect {worst_law:.2e}, min Choi eig {worst_choi:.2e}, failed {failed}, {elapsed:.1f} s")


def test_trace_adjoint_law_suite(capsys):
    rng = np.random.default_rng(1002)
    alg = BlockAlgebra([2, 3], [0.5, 2.0])
    u = random_unitary(alg, rng)
    panel = {
        "identity": SuperOperator.identity(alg),
        "sandwich-1": SuperOperator.sandwich(random_element(alg, rng), random_element(alg, rng)),
        "sandwich-2": SuperOperator.sandwich(random_element(alg, rng), random_element(alg, rng)),
        "kraus": SuperOperator.kraus([random_element(alg, rng), random_element(alg, rng)]),
        "conjugation": SuperOperator.conjugation(u),
        "transpose": SuperOperator.transpose(alg),
    }
    res: dict[str, float] = {"duality": 0.0, "involution": 0.0, "composition": 0.0,
                             "amplification": 0.0, "l2-equality": 0.0, "l2-bound": 0.0}
    transfer_ok = True
    for name, phi in panel.items():
        hat = tau_adjoint(phi)
        scale = max(1.0, float(np.linalg.norm(phi.matrix)))
        res["duality"] = max(res["duality"], duality_defect(phi, hat, rng, 50) / scale)
        res["involution"] = max(res["involution"], tau_adjoint(hat).distance(phi) / scale)
        for n in (2, 3):
            res["amplification"] = max(res["amplification"],
                                       tau_adjoint(amplify(phi, n)).distance(amplify(hat, n)) / scale)
        norm, hat_norm = phi.l2_norm(), hat.l2_norm()
        res["l2-equality"] = max(res["l2-equality"], abs(norm - hat_norm) / max(1.0, norm))
        cp, hat_cp = cp_certificate(phi).cp, cp_certificate(hat).cp
        transfer_ok &= cp == hat_cp
        if cp:
            one = alg.identity()
            bound = np.sqrt(op_norm(phi(one)) * op_norm(hat(one)))
            res["l2-bound"] = max(res["l2-bound"], max(0.0, norm - bound) / max(1.0, bound))
    transfer_ok &= not cp_certificate(panel["transpose"]).cp
    for (_, f), (_, g) in itertools.product(panel.items(), repeat=2):
        lhs = tau_adjoint(f @ g)
        res["composition"] = max(res["composition"], lhs.distance(tau_adjoint(g) @ tau_adjoint(f))
                                 / max(1.0, float(np.linalg.norm(lhs.matrix))))
    ok = max(res.values()) <= 1e-9 and transfer_ok
    detail = ", ".join(f"{k} {v:.1e}" for k, v in res.items()) + f", positivity transfer {transfer_ok}"
    emit(capsys, 3, "trace-adjoint-laws", ok, detail)


def test_similarity_end_to_end(capsys):
    rng = np.random.default_rng(1004)
    start = time.perf_counter()
    failed, worst_u, worst_r, min_ei = [], 0.0, np.inf, np.inf
    for k in range(50):
        t, _ = similar_instance(rng)
        try:
            rep = similarity([t])
        except Exception as exc:  # any named error counts as a failure of this criterion
            failed.append((k, type(exc).__name__))
            continue
        worst_u = max(worst_u, max(rep.unitarity_defects))
        worst_r = min(worst_r, float(rep.r_spectrum[0]))
        min_ei = min(min_ei, rep.min_eig_ei)
        if not (rep.success and max(rep.unitarity_defects) <= 1e-6 and rep.r_spectrum[0] >= 1 - 1e-6
                and rep.min_eig_ei > 0):
            failed.append((k, rep.verdict))
    # two commuting generators sharing the similarity
    alg = BlockAlgebra([6])
    s = random_invertible(alg, rng, 100.0)
    pair = [s @ diagonal(alg, r * np.exp(2j * np.pi * rng.random(6))) @ invert(s) for r in (0.8, 1.6)]
    rep = similarity(pair)
    pair_ok = rep.success and max(rep.unitarity_defects) <= 1e-6 and rep.commutation_defect <= 1e-6
    elapsed = time.perf_counter() - start
    ok = not failed and pair_ok and elapsed < 120
    emit(capsys, 4, "similarity-pipeline", ok,
         f"worst unitarity {worst_u:.1e}, min sigma(R) {worst_r:.6f}, min eig E(I) {min_ei:.2e}, "
         f"pair commutation {rep.commutation_defect:.1e}, failed {failed}, {elapsed:.1f} s")


def test_negative_paths(capsys):
    alg = BlockAlgebra([2])
    one = Gauge.constant(1.0)
    shared = SimilarityConfig(mode="shared")
    jordan = alg.element([np.array([[1.0, 1.0], [0.0, 1.0]])])
    cases = [
        ("contraction", [alg.identity() * 0.5], one, NotCompatible),
        ("jordan-constant", [jordan], one, NotDominated),
        ("jordan-linear", [jordan], Gauge.formula("n+1"), NotRegularGauge),
        ("mixed-block", [alg.element([np.diag([1.0, 0.5])])], one, NotC1),
    ]
    outcome = {}
    for name, fam, g, expected in cases:
        try:
            similarity(fam, g, shared)
            outcome[name] = "success"
        except expected as exc:
            witness = exc.details.get("witness")
            outcome[name] = expected.__name__ + (" +witness" if witness is not None else "")
        except Exception as exc:
            outcome[name] = f"wrong {type(exc).__name__}"
    ok = all(outcome[name].startswith(exp.__name__) for name, _, _, exp in cases) \
        and outcome["mixed-block"].endswith("+witness")
    emit(capsys, 5, "negative-paths", ok, ", ".join(f"{k} -> {v}" for k, v in outcome.items()))


def test_gauge_analytics(capsys):
    notes, ok = [], True
    for c in (0.5, 0.9, 1.0, 1.3, 2.0):
        a = analyze_gauge(Gauge.from_function(lambda n: n * np.log(c) + np.log1p(1 / n), 4096, log=True))
        good = a.regular and abs(a.c_p - c) <= 0.01 * c
        ok &= good
        notes.append(f"c={c}: c_p={a.c_p:.6f} regular={a.regular}")
    linear = analyze_gauge(Gauge.formula("n+1", 4096))
    ok &= not linear.regular
    rng = np.random.default_rng(1006)
    n = np.arange(1, 4097 + 200)
    shift_worst = agree_worst = 0.0
    for _ in range(50):
        a0, b0, c0 = rng.uniform(-2, 2, 3)
        theta = rng.uniform(0.1, 3.0)
        u = a0 + b0 * (-1.0) ** n + c0 * np.cos(theta * n) / np.sqrt(n)
        shift = int(rng.integers(1, 200))
        base, moved = almost_limit(u[:4096], 1e-3), almost_limit(u[shift:shift + 4096], 1e-3)
        ok &= base.converged and moved.converged
        shift_worst = max(shift_worst, abs(base.value - moved.value))
        L, d, rho = rng.uniform(-3, 3), rng.uniform(-2, 2), rng.uniform(0.1, 0.95)
        v = L + d * rho ** n[:4096] + rng.uniform(-1, 1) / n[:4096] ** 2
        res = almost_limit(v, 1e-5)
        ok &= res.converged
        agree_worst = max(agree_worst, abs(res.value - L))
    ok &= shift_worst <= 1e-3 and agree_worst <= 1e-5
    emit(capsys, 6, "gauge-analytics", ok,
         "; ".join(notes) + f"; n+1 regular={linear.regular}; shift {shift_worst:.1e}; limit {agree_worst:.1e}")


def brute_force_cesaro(t, horizon: int = 2048) -> np.ndarray:
    """Action matrix of (1/N) sum_n T*^n X T^n, from explicitly materialized powers."""
    alg = t.algebra
    cols = []
    for x in alg.basis():
        acc = np.zeros(alg.element_dim, dtype=complex)
        cur = x
        for _ in range(horizon):
            cur = t.H @ cur @ t
            acc += cur.to_vector()
        cols.append(acc / horizon)
    return np.array(cols).T


def test_oracle_equivalence(capsys):
    alg = BlockAlgebra([2])
    one = Gauge.constant(1.0)
    worst = {}
    for name, diag in (("diag(1,0)", [1.0, 0.0]), ("diag(1,i)", [1.0, 1j])):
        t = diagonal(alg, diag)
        oracle = brute_force_cesaro(t)
        for method in ("spectral", "window"):
            e = limit_operator(t, one, method=method, horizon=2048)
            worst[f"{name} {method}"] = float(np.abs(e.matrix - oracle).max())
    ok = max(worst.values()) <= 1e-6
    emit(capsys, 7, "oracle-equivalence", ok, ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))


DETERMINISM_JOBS = {
    "similarity.json": ("similarity", {
        "version": 1, "algebra": {"blocks": [{"dim": 5}]},
        "operators": {"T": {"random": "similar-unitary", "radius": 0.9, "condition": 100, "conjugator": "S"},
                      "T2": {"random": "similar-unitary", "radius": 1.2, "conjugator": "S"}},
        "params": {"seed": 11}, "probes": [[1, 0, 0, 0, 0]]}),
    "limit.json": ("limit", {
        "version": 1, "algebra": {"blocks": [{"dim": 3}]},
        "operators": {"T": {"random": "similar-unitary", "radius": 1.0}}, "operator": "T",
        "gauge": {"kind": "constant"}, "params": {"seed": 5}}),
    "gauge.json": ("gauge", {"version": 1, "gauge": {"kind": "formula", "expr": "0.9**n*(1+1/n)"}}),
}


def test_determinism(capsys, tmp_path: Path):
    digests = {}
    same = True
    jobs = [(cmd, ["--config", str(tmp_path / name)]) for name, (cmd, _) in DETERMINISM_JOBS.items()]
    jobs.append(("demo", ["similarity", "--seed", "9"]))
    for name, (_, cfg) in DETERMINISM_JOBS.items():
        (tmp_path / name).write_text(json.dumps(cfg))
    for cmd, extra in jobs:
        outs = []
        for _ in range(2):
            proc = subprocess.run([sys.executable, "-m", "finvn", cmd, *extra, "--reproducible", "--dump-matrices"],
                                  capture_output=True, check=False)
            outs.append(proc.stdout)
        same &= outs[0] == outs[1] and len(outs[0]) > 0
        digests[cmd] = len(outs[0])
    emit(capsys, 8, "determinism", same, ", ".join(f"{k} {v} bytes" for k, v in digests.items()))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
