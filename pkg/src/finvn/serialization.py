"""JSON formats for algebras, elements, gauges and superoperators.

Complex numbers are ``[re, im]`` pairs; blocks are flattened row-major.
Reports are emitted with sorted keys and Python's shortest round-trip float
repr, so identical inputs give byte-identical documents.
"""

from __future__ import annotations

import json
import math
from typing import Any, Callable, Mapping

import numpy as np

from .algebra import AlgebraElement, BlockAlgebra
from .gauge import Gauge
from .supermap import SuperOperator


def algebra_to_json(alg: BlockAlgebra) -> dict[str, Any]:
    return {"blocks": [{"dim": d, "weight": w} for d, w in zip(alg.dims, alg.weights)]}


def algebra_from_json(data: Mapping[str, Any]) -> BlockAlgebra:
    blocks = data["blocks"]
    return BlockAlgebra([int(b["dim"]) for b in blocks], [float(b.get("weight", 1.0)) for b in blocks])


def complex_list(values: np.ndarray) -> list[list[float]]:
    return [[float(z.real), float(z.imag)] for z in np.asarray(values, dtype=complex).ravel()]


def _complex_array(pairs: Any) -> np.ndarray:
    out = []
    for z in pairs:
        # a bare number is shorthand for [z, 0]
        if isinstance(z, (list, tuple)):
            if len(z) != 2:
                raise ValueError("complex entries must be [re, im] pairs")
            out.append(complex(float(z[0]), float(z[1])))
        else:
            out.append(complex(float(z)))
    return np.array(out, dtype=complex)


def element_to_json(x: AlgebraElement) -> dict[str, Any]:
    return {"blocks": [complex_list(m) for m in x.mats]}


def element_from_json(alg: BlockAlgebra, data: Mapping[str, Any]) -> AlgebraElement:
    blocks = data["blocks"]
    if len(blocks) != alg.n_blocks:
        raise ValueError(f"element has {len(blocks)} blocks, algebra has {alg.n_blocks}")
    mats = []
    for d, blk in zip(alg.dims, blocks):
        flat = _complex_array(blk) if len(blk) else np.zeros(0, complex)
        if flat.size != d * d:
            raise ValueError(f"block of dim {d} needs {d * d} entries, got {flat.size}")
        mats.append(flat.reshape(d, d))
    return alg.element(mats)


def gauge_to_json(g: Gauge) -> dict[str, Any]:
    return g.to_json()


def gauge_from_json(data: Mapping[str, Any], horizon: int = 4096) -> Gauge:
    return Gauge.from_json(data, horizon)


def superoperator_to_json(phi: SuperOperator) -> dict[str, Any]:
    return {"kind": "matrix", "entries": [complex_list(row) for row in phi.matrix]}


ElementResolver = Callable[[Any], AlgebraElement]
LimitResolver = Callable[[AlgebraElement, Gauge], SuperOperator]


def superoperator_from_json(alg: BlockAlgebra, data: Mapping[str, Any], resolve: ElementResolver,
                            orbit_limit: LimitResolver | None = None, horizon: int = 4096) -> SuperOperator:
    """Build a superoperator; ``resolve`` turns an element reference (name or JSON) into an element."""
    kind = data["kind"]
    if kind == "identity":
        return SuperOperator.identity(alg)
    if kind == "sandwich":
        return SuperOperator.sandwich(resolve(data["A"]), resolve(data["B"]))
    if kind == "conjugation":
        return SuperOperator.conjugation(resolve(data["V"]))
    if kind == "kraus":
        return SuperOperator.kraus([resolve(k) for k in data["ops"]])
    if kind == "transpose":
        return SuperOperator.transpose(alg, data.get("blocks"))
    if kind == "matrix":
        rows = np.array([_complex_array(r) for r in data["entries"]])
        return SuperOperator(alg, rows, "matrix")
    if kind == "orbit-limit":
        if orbit_limit is None:
            raise ValueError("orbit-limit maps need a limit resolver")
        return orbit_limit(resolve(data["operator"]), gauge_from_json(data["gauge"], horizon))
    raise ValueError(f"unknown superoperator kind {kind!r}")


# canonical report output

def to_jsonable(obj: Any) -> Any:
    """Recursively convert numpy scalars/arrays and non-finite floats to JSON values."""
    if isinstance(obj, Mapping):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return to_jsonable(complex_list(obj)) if obj.ndim <= 1 else [to_jsonable(r) for r in obj]
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isfinite(v):
            return v
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if isinstance(obj, (complex, np.complexfloating)):
        return to_jsonable([obj.real, obj.imag])
    if obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, AlgebraElement):
        return element_to_json(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(report: Any) -> str:
    return json.dumps(to_jsonable(report), sort_keys=True, indent=2, allow_nan=False) + "\n"
