"""finvn command line: gauge | adjoint | cp | limit | similarity | demo."""

from __future__ import annotations

import argparse
import datetime as dt
import json
import os
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Sequence

import jsonschema
import numpy as np

from . import errors as E
from .algebra import (
    AlgebraElement,
    BlockAlgebra,
    diagonal,
    eigh,
    invert,
    op_norm,
    random_element,
    random_invertible,
    random_unitary,
    spectral_radius,
)
from .demos import DEFAULT_TRUNCATION, DEMOS
from .gauge import (
    GAUGE_TOL,
    Gauge,
    almost_limit,
    almost_limit_of_gauge_power,
    analyze_gauge,
    domination,
    norm_ratios,
    q_prime,
)
from .limits import (
    LAW_TOL,
    OrbitLimitSpec,
    SimilarityConfig,
    asymptotic_control_report,
    hat_compatibility,
    limit_operator,
    orbit_limit,
    similarity,
    verify_orbit_laws,
)
from .serialization import (
    algebra_from_json,
    complex_list,
    dumps,
    element_from_json,
    element_to_json,
    gauge_from_json,
    superoperator_from_json,
    superoperator_to_json,
    to_jsonable,
)
from .supermap import (
    MAX_AMPLIFIED_DIM,
    adjoint_involution_check,
    algebra_norm,
    amplify,
    cp_certificate,
    duality_defect,
    l2_extension_norm,
    positivity_check,
    tau_adjoint,
)

REPORT_SCHEMA = "finvn.report.v1"
DEFAULT_MAX_DIM = 256
COMMANDS = ("gauge", "adjoint", "cp", "limit", "similarity", "demo")

EXIT_CODES: list[tuple[type[Exception], int]] = [
    (E.ConfigError, 2),
    (E.DimensionTooLarge, 2),
    (E.ResourceLimit, 2),
    (E.HorizonTooShort, 2),
    (E.NotAGauge, 3),
    (E.LawViolation, 3),
    (E.Not2Positive, 3),
    (E.UnitarityDefect, 3),
    (E.CommutationDefect, 3),
    (E.SingularEI, 4),
    (E.NotRegularGauge, 5),
    (E.NotDominated, 5),
    (E.NotCompatible, 5),
    (E.NonCommutingFamily, 5),
    (E.NoConvergence, 6),
    (E.NotAlmostConvergent, 6),
]


def exit_code_for(exc: BaseException) -> int:
    for cls, code in EXIT_CODES:
        if isinstance(exc, cls):
            return code
    return 1


def load_schema(name: str) -> dict[str, Any]:
    text = resources.files("finvn").joinpath("schemas", name).read_text()
    return json.loads(text)


def validate(doc: Any, schema_name: str) -> None:
    validator = jsonschema.Draft202012Validator(load_schema(schema_name))
    problems = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if problems:
        msgs = [f"{'/'.join(map(str, p.absolute_path)) or '<root>'}: {p.message}" for p in problems[:5]]
        raise E.ConfigError("config does not match schema: " + "; ".join(msgs), problems=msgs)


def load_config(path: Path | None) -> dict[str, Any]:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise E.ConfigError(f"cannot read config {path}: {exc}") from exc
    validate(doc, "config.v1.json")
    return doc


# job context

@dataclass
class Job:
    command: str
    config: dict[str, Any]
    params: dict[str, Any]
    dump_matrices: bool = False
    algebra: BlockAlgebra | None = None
    operators: dict[str, AlgebraElement] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if "algebra" in self.config:
            try:
                self.algebra = algebra_from_json(self.config["algebra"])
            except ValueError as exc:
                raise E.ConfigError(f"invalid algebra: {exc}") from exc
            cap = int(os.environ.get("FINVN_MAX_DIM", DEFAULT_MAX_DIM))
            if self.algebra.dim > cap:
                raise E.DimensionTooLarge(f"algebra dimension {self.algebra.dim} exceeds FINVN_MAX_DIM={cap}",
                                          dim=self.algebra.dim, cap=cap)
        self._build_operators()

    def need_algebra(self) -> BlockAlgebra:
        if self.algebra is None:
            raise E.ConfigError(f"command {self.command!r} needs an 'algebra' entry")
        return self.algebra

    def _build_operators(self) -> None:
        specs = self.config.get("operators", {})
        if not specs:
            return
        alg = self.need_algebra()
        rng = None
        conjugators: dict[str, AlgebraElement] = {}
        for name in sorted(specs):
            spec = specs[name]
            if "random" not in spec:
                self.operators[name] = self._parse_element(spec)
                continue
            if rng is None:
                if self.params.get("seed") is None:
                    raise E.ConfigError("random operators need a seed (params.seed or --seed)")
                rng = np.random.default_rng(self.params["seed"])
            kind = spec["random"]
            if kind == "element":
                self.operators[name] = random_element(alg, rng)
            elif kind == "unitary":
                self.operators[name] = random_unitary(alg, rng) * spec.get("radius", 1.0)
            else:
                key = spec.get("conjugator")
                if key is None or key not in conjugators:
                    s = random_invertible(alg, rng, spec.get("condition", 10.0))
                    if key is not None:
                        conjugators[key] = s
                else:
                    s = conjugators[key]
                if "phases" in spec:
                    ph = _complex_values(spec["phases"])
                    if ph.size != alg.dim:
                        raise E.ConfigError(f"operator {name!r}: need {alg.dim} phases")
                else:
                    ph = np.exp(2j * np.pi * rng.random(alg.dim))
                self.operators[name] = s @ diagonal(alg, spec.get("radius", 1.0) * ph) @ invert(s)

    def _parse_element(self, data: Any) -> AlgebraElement:
        try:
            return element_from_json(self.need_algebra(), data)
        except (ValueError, KeyError) as exc:
            raise E.ConfigError(f"invalid element: {exc}") from exc

    def element(self, ref: Any) -> AlgebraElement:
        if isinstance(ref, str):
            if ref not in self.operators:
                raise E.ConfigError(f"unknown operator {ref!r}", known=sorted(self.operators))
            return self.operators[ref]
        return self._parse_element(ref)

    def gauge(self, required: bool = True) -> Gauge | None:
        data = self.config.get("gauge")
        if data is None:
            if required:
                raise E.ConfigError(f"command {self.command!r} needs a 'gauge' entry")
            return None
        try:
            return gauge_from_json(data, self.params["gauge_horizon"])
        except (ValueError, KeyError, TypeError, SyntaxError) as exc:
            raise E.ConfigError(f"invalid gauge: {exc}") from exc

    def superoperator(self, key: str = "map"):
        if key not in self.config:
            raise E.ConfigError(f"command {self.command!r} needs a {key!r} entry")

        def resolve_limit(t: AlgebraElement, g: Gauge):
            return limit_operator(t, g, horizon=self.params["horizon"])

        try:
            return superoperator_from_json(self.need_algebra(), self.config[key], self.element, resolve_limit,
                                           self.params["gauge_horizon"])
        except (ValueError, KeyError, TypeError) as exc:
            if isinstance(exc, E.FinvnError):
                raise
            raise E.ConfigError(f"invalid {key}: {exc}") from exc


def _complex_values(items: Sequence[Any]) -> np.ndarray:
    return np.array([complex(z[0], z[1]) if isinstance(z, list) else complex(z) for z in items])


def _spectrum(x: AlgebraElement) -> list[float]:
    return eigh((x + x.H) * 0.5, tol=np.inf)[0].tolist()


# commands

def cmd_gauge(job: Job, csv: Path | None = None) -> tuple[str, dict[str, Any]]:
    tol = job.params.get("tol")
    seq = None
    if csv is not None:
        try:
            lines = [ln.strip() for ln in Path(csv).read_text().splitlines()]
            seq = np.array([float(ln.split(",")[0]) for ln in lines if ln and not ln.startswith("#")])
        except (OSError, ValueError) as exc:
            raise E.ConfigError(f"cannot read sequence CSV {csv}: {exc}") from exc
    elif "sequence" in job.config:
        seq = np.asarray(job.config["sequence"], dtype=float)
    if seq is not None:
        try:
            res = almost_limit(seq, tol or 1e-6)
        except ValueError as exc:
            raise E.ConfigError(str(exc)) from exc
        out = {"length": int(seq.size), "almost_limit": res.to_dict()}
        if seq.size >= 64:
            out["q_prime"] = q_prime(seq)
        return ("almost-convergent" if res.converged else "not-certified"), out

    g = job.gauge()
    analysis = analyze_gauge(g, tol or GAUGE_TOL)
    out: dict[str, Any] = {"gauge": g.to_json() if g.kind != "custom" else {"kind": "custom"},
                           "horizon": g.horizon, "analysis": analysis.to_dict(),
                           "rho": almost_limit_of_gauge_power(g, analysis.c_p, 2).to_dict(),
                           "gamma": almost_limit_of_gauge_power(g, analysis.c_p, 1).to_dict()}
    if "operator" in job.config:
        t = job.element(job.config["operator"])
        horizon = min(job.params["horizon"], g.horizon)
        ratios = norm_ratios(t, g, horizon)
        dom = domination(t, g, horizon, tol or GAUGE_TOL)
        out["operator"] = {"spectral_radius": spectral_radius(t), "domination": dom.to_dict(),
                           "ratio_q_prime": q_prime(ratios) if horizon >= 64 else None}
    return ("regular" if analysis.regular else "non-regular"), out


def cmd_adjoint(job: Job) -> tuple[str, dict[str, Any]]:
    phi = job.superoperator("map")
    tol = job.params.get("tol") or 1e-9
    hat = tau_adjoint(phi)
    rng = np.random.default_rng(job.params.get("seed") or 0)
    pairs = [(phi, job.superoperator("compose_with"))] if "compose_with" in job.config else []
    scale = max(1.0, float(np.linalg.norm(phi.matrix)))
    duality = duality_defect(phi, hat, rng, 50) / scale
    inv = adjoint_involution_check(phi, pairs, tol)
    amp = None
    if 2 * phi.algebra.dim <= MAX_AMPLIFIED_DIM:
        amp = tau_adjoint(amplify(phi, 2)).distance(amplify(hat, 2)) / scale
    norm, exact = algebra_norm(phi)
    hat_norm, hat_exact = algebra_norm(hat)
    out: dict[str, Any] = {
        "duality_defect": duality, "involution": inv.to_dict(), "amplification_defect": amp,
        "norm": {"value": norm, "exact": exact}, "adjoint_norm": {"value": hat_norm, "exact": hat_exact},
        "l2_norm": phi.l2_norm(), "adjoint_l2_norm": hat.l2_norm(),
    }
    if cp_certificate(phi).cp:
        out["l2_bound"] = l2_extension_norm(phi).to_dict()
    if job.dump_matrices:
        out["adjoint_matrix"] = superoperator_to_json(hat)
    if job.params.get("verify", True):
        for name, d in (("duality", duality), ("involution", inv.involution_defect / scale),
                        ("amplification-square", amp or 0.0)):
            if d > tol:
                raise E.LawViolation(name, d, tol=tol)
        for d in inv.composition_defects:
            if d > tol:
                raise E.LawViolation("composition", d, tol=tol)
    return "ok", out


def cmd_cp(job: Job) -> tuple[str, dict[str, Any]]:
    phi = job.superoperator("map")
    tol = job.params.get("tol") or 1e-9
    cert = cp_certificate(phi, tol)
    out: dict[str, Any] = {"certificate": cert.to_dict()}
    n = job.params.get("amplification", 2)
    if n * phi.algebra.dim <= MAX_AMPLIFIED_DIM:
        out["positivity"] = positivity_check(phi, n, tol=tol, seed=job.params.get("seed") or 0).to_dict()
    if not cert.cp:
        b = int(np.argmin(cert.min_eigs))
        target, vec = cert.witness(b)
        out["witness"] = {"source_block": b, "target_block": target, "vector": complex_list(vec)}
    return ("cp" if cert.cp else "not-cp"), out


def cmd_limit(job: Job) -> tuple[str, dict[str, Any]]:
    g = job.gauge()
    p = job.params
    mode = p.get("mode", "two-sided")
    if mode not in ("two-sided", "one-sided"):
        raise E.ConfigError(f"limit mode must be two-sided or one-sided, got {mode!r}")
    kwargs = dict(horizon=p["horizon"], method=p.get("method", "spectral"),
                  allow_irregular=p.get("allow_irregular", False), probe_seed=p.get("seed") or 0)
    if p.get("tol"):
        kwargs["tol"] = p["tol"]
    if mode == "two-sided":
        if "operator" not in job.config:
            raise E.ConfigError("two-sided limit needs an 'operator' entry")
        t = job.element(job.config["operator"])
        e = orbit_limit(OrbitLimitSpec(t, g, mode=mode, **kwargs))
    else:
        t = None
        e = orbit_limit(OrbitLimitSpec(None, g, mode=mode, generator=job.superoperator("map"), **kwargs))
    alg = e.algebra
    ei = e(alg.identity())
    out: dict[str, Any] = {"info": dict(e.info), "ei": element_to_json(ei) if job.dump_matrices else None,
                           "ei_spectrum": _spectrum(ei)}
    if t is not None and not kwargs["allow_irregular"]:
        laws = verify_orbit_laws(e, t, g, seed=p.get("seed") or 0)
        hat = hat_compatibility(e, t, g, **kwargs)
        out["laws"] = laws.to_dict()
        out["hat_law"] = hat.to_dict()
        if p.get("verify", True):
            laws.raise_for_violation()
            hat.raise_for_violation()
    else:
        idem = float(np.linalg.norm(e.matrix @ e.matrix - e.matrix, 2))
        out["idempotence_defect"] = idem
    if job.dump_matrices:
        out["matrix"] = superoperator_to_json(e)
    return "ok", out


def cmd_similarity(job: Job) -> tuple[str, dict[str, Any]]:
    p = job.params
    refs = job.config.get("family") or sorted(job.operators)
    if not refs:
        raise E.ConfigError("similarity needs a 'family' or named 'operators'")
    family = [job.element(r) for r in refs]
    mode = p.get("mode", "per-member")
    if mode not in ("per-member", "shared"):
        raise E.ConfigError(f"similarity mode must be per-member or shared, got {mode!r}")
    cfg_kwargs: dict[str, Any] = dict(mode=mode, horizon=p["horizon"], gauge_horizon=p["gauge_horizon"],
                                      seed=p.get("seed") or 0, verify_laws=p.get("verify", True))
    if p.get("tol"):
        cfg_kwargs["unitarity_tol"] = p["tol"]
    gauge = job.gauge(required=mode == "shared")
    rep = similarity(family, gauge, SimilarityConfig(**cfg_kwargs))
    members = []
    for i, ref in enumerate(refs):
        m = {"name": ref if isinstance(ref, str) else f"#{i}", "spectral_radius": rep.spectral_radii[i],
             "c_p": rep.c_values[i], "unitarity_defect": rep.unitarity_defects[i]}
        if job.dump_matrices:
            m["unitary"] = element_to_json(rep.unitaries[i])
        members.append(m)
    out: dict[str, Any] = {
        "members": members, "ei_spectrum": rep.ei_spectrum.tolist(), "min_eig_ei": rep.min_eig_ei,
        "r_spectrum": rep.r_spectrum.tolist(), "commutation_defect": rep.commutation_defect,
        "a_condition": rep.telemetry["a_condition"], "telemetry": rep.telemetry,
    }
    if job.dump_matrices:
        out["a"] = element_to_json(rep.a)
        out["ei"] = element_to_json(rep.ei)
    if "probes" in job.config:
        probes = [_complex_values(v) for v in job.config["probes"]]
        out["asymptotic_control"] = asymptotic_control_report(
            family, list(rep.gauges), probes, horizon=max(64, min(p["horizon"], 128)),
            subset_budget=p.get("budget", 4))
    return rep.verdict, out


def cmd_demo(job: Job, name: str | None) -> tuple[str, dict[str, Any]]:
    name = name or job.config.get("demo")
    if name not in DEMOS:
        raise E.ConfigError(f"unknown demo {name!r}", known=sorted(DEMOS))
    p = job.params
    if name == "similarity":
        return "ok", DEMOS[name](seed=p.get("seed") or 0)
    return "ok", DEMOS[name](p.get("truncation") or DEFAULT_TRUNCATION)


# entry point

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON job config (schema config.v1)")
    common.add_argument("--horizon", type=int, help="sequence horizon N")
    common.add_argument("--tol", type=float, help="tolerance override")
    common.add_argument("--seed", type=int, help="seed for randomized inputs and probes")
    fmt = common.add_mutually_exclusive_group()
    fmt.add_argument("--json", dest="format", action="store_const", const="json")
    fmt.add_argument("--text", dest="format", action="store_const", const="text")
    common.add_argument("--dump-matrices", action="store_true", help="include action and element matrices")
    common.add_argument("--reproducible", action="store_true", help="omit timestamp and timing fields")

    parser = argparse.ArgumentParser(prog="finvn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    g = sub.add_parser("gauge", parents=[common], help="gauge analysis or almost limit of a sequence")
    g.add_argument("--csv", type=Path, help="sequence file, one value per line")
    sub.add_parser("adjoint", parents=[common], help="trace adjoint and its laws")
    sub.add_parser("cp", parents=[common], help="Choi certificate and positivity panel")
    sub.add_parser("limit", parents=[common], help="orbit-limit operator")
    sub.add_parser("similarity", parents=[common], help="similarity to unitaries")
    d = sub.add_parser("demo", parents=[common], help="built-in demonstrations")
    d.add_argument("name", nargs="?", choices=sorted(DEMOS))
    d.add_argument("--truncation", type=int, help=f"largest block size P (default {DEFAULT_TRUNCATION})")
    return parser


def _merge_params(args: argparse.Namespace, config: dict[str, Any]) -> dict[str, Any]:
    params = dict(config.get("params", {}))
    defaults = {"gauge": 4096, "limit": 512, "similarity": 512}
    if args.horizon is not None:
        params["horizon"] = args.horizon
    params.setdefault("horizon", defaults.get(args.command, 512))
    # the gauge command's horizon is the gauge's own horizon
    params.setdefault("gauge_horizon", params["horizon"] if args.command == "gauge" else 4096)
    if args.tol is not None:
        params["tol"] = args.tol
    if args.seed is not None:
        params["seed"] = args.seed
    if getattr(args, "truncation", None) is not None:
        params["truncation"] = args.truncation
    return params


def run(args: argparse.Namespace) -> tuple[dict[str, Any], int]:
    start = time.perf_counter()
    params: dict[str, Any] = {}
    try:
        config = load_config(args.config)
        params = _merge_params(args, config)
        dump = args.dump_matrices or config.get("output", {}).get("dump_matrices", False)
        job = Job(args.command, config, params, dump)
        handlers: dict[str, Callable[[], tuple[str, dict[str, Any]]]] = {
            "gauge": lambda: cmd_gauge(job, args.csv),
            "adjoint": lambda: cmd_adjoint(job),
            "cp": lambda: cmd_cp(job),
            "limit": lambda: cmd_limit(job),
            "similarity": lambda: cmd_similarity(job),
            "demo": lambda: cmd_demo(job, args.name),
        }
        verdict, result = handlers[args.command]()
        code, error = 0, None
    except E.FinvnError as exc:
        code = exit_code_for(exc)
        verdict, result = exc.name, None
        error = {"name": exc.name, "message": str(exc), "details": exc.details}
    report = {"schema": REPORT_SCHEMA, "command": args.command, "verdict": verdict, "exit_code": code,
              "params": params, "result": result, "error": error}
    if not args.reproducible:
        report["timestamp"] = dt.datetime.now(dt.timezone.utc).isoformat()
        report["elapsed_s"] = time.perf_counter() - start
    return to_jsonable(report), code


def format_text(report: dict[str, Any]) -> str:
    lines = [f"command: {report['command']}", f"verdict: {report['verdict']}", f"exit code: {report['exit_code']}"]
    if report["error"]:
        lines.append(f"error: {report['error']['name']}: {report['error']['message']}")
    def scalar_lines(items: Any, prefix: str = "", depth: int = 0) -> None:
        for key, val in sorted(items):
            name = prefix + key
            if isinstance(val, (int, float, str, bool)) or val is None:
                lines.append(f"{name}: {val}")
            elif isinstance(val, list) and val and all(isinstance(v, (int, float)) for v in val) and len(val) <= 16:
                lines.append(f"{name}: " + " ".join(f"{v:.6g}" for v in val))
            elif key == "table":
                for row in val:
                    lines.append("  " + "  ".join(f"{k}={v}" for k, v in row.items()))
            elif isinstance(val, dict) and depth < 1:
                scalar_lines(val.items(), name + ".", depth + 1)

    scalar_lines((report["result"] or {}).items())
    return "\n".join(lines) + "\n"


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    report, code = run(args)
    if args.format == "text":
        sys.stdout.write(format_text(report))
    else:
        sys.stdout.write(dumps(report))
    return code


if __name__ == "__main__":
    sys.exit(main())
