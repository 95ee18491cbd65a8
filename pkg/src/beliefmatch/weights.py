"""Trainable message weights: dense (one scalar per iteration per Tanner
edge) or convolutional (one scalar per iteration per translation class,
independent of lattice size), plus the versioned JSON weight-file format and
the cross-distance transfer operation.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ._engine import CheckArrays
from .toric import ToricCode, build_edge_classes, class_convention_hash

FORMAT_VERSION = 1

MATRIX_KINDS = ("standard", "overcomplete")


class WeightFileError(ValueError):
    """Raised for malformed, corrupted or incompatible weight files."""


@dataclass(frozen=True)
class WeightSet:
    """Per-iteration multiplicative message weights.

    ``values`` has shape (iterations, n_edges) for dense sets and
    (iterations, 32) for convolutional sets.  ``distance`` and ``matrix``
    record the lattice/check-matrix binding; convolutional values are
    distance-independent, the binding is metadata plus a convention check.
    """

    kind: str  # "dense" | "conv"
    iterations: int
    values: np.ndarray
    distance: int
    matrix: str  # "standard" | "overcomplete"
    epsilon_train: float | None = None
    convention_hash: str | None = None

    def __post_init__(self):
        if self.kind not in ("dense", "conv"):
            raise ValueError(f"unknown weight kind {self.kind!r}")
        if self.matrix not in MATRIX_KINDS:
            raise ValueError(f"unknown matrix kind {self.matrix!r}")
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape[0] != self.iterations:
            raise ValueError("values must have one row per iteration")
        if self.kind == "conv" and v.shape[1] != 32:
            raise ValueError("convolutional sets carry 32 values per iteration")
        if not np.isfinite(v).all():
            raise ValueError("weights must be finite")
        object.__setattr__(self, "values", v)
        v.setflags(write=False)

    def is_unit(self) -> bool:
        return bool((self.values == 1.0).all())


def matrix_of(code: ToricCode, matrix: str):
    if matrix == "standard":
        return code.h_std
    if matrix == "overcomplete":
        return code.h_oc
    raise ValueError(f"unknown matrix kind {matrix!r}")


def init_unit(kind: str, iterations: int, code: ToricCode,
              matrix: str = "overcomplete") -> WeightSet:
    """All-ones weight set; decoding with it is bit-identical to plain BP."""
    if kind == "conv":
        width = 32
    else:
        width = CheckArrays.of(matrix_of(code, matrix)).n_edges
    return WeightSet(
        kind=kind,
        iterations=iterations,
        values=np.ones((iterations, width)),
        distance=code.d,
        matrix=matrix,
        convention_hash=class_convention_hash() if kind == "conv" else None,
    )


def bind_edges(ws: WeightSet, code: ToricCode,
               matrix: str | None = None) -> np.ndarray:
    """Expand a weight set to one value per Tanner edge of the bound matrix,
    shape (iterations, n_edges).

    Dense sets must match the code/matrix they were created for; conv sets
    bind to any distance by giving every edge the value of its class.
    """
    matrix = matrix or ws.matrix
    if matrix != ws.matrix:
        raise ValueError(
            f"weights are for the {ws.matrix} matrix, not {matrix}")
    n_edges = CheckArrays.of(matrix_of(code, matrix)).n_edges
    if ws.kind == "dense":
        if ws.distance != code.d or ws.values.shape[1] != n_edges:
            raise ValueError(
                f"dense weights bound to d={ws.distance} cannot decode d={code.d}")
        return ws.values
    if ws.convention_hash != class_convention_hash():
        raise WeightFileError("edge-class convention mismatch")
    per_edge = build_edge_classes(code).per_edge[:n_edges]
    return ws.values[:, per_edge]


def transfer(ws: WeightSet, target: ToricCode) -> WeightSet:
    """Re-bind convolutional weights to a (typically larger) lattice.

    Every Tanner edge of the target receives the value of its translation
    class; no retraining.  Dense sets have no class structure and are
    rejected.
    """
    if ws.kind != "conv":
        raise ValueError("only convolutional weight sets can be transferred")
    if ws.convention_hash != class_convention_hash():
        raise WeightFileError("edge-class convention mismatch")
    return replace(ws, distance=target.d)


def _payload(ws: WeightSet) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "kind": ws.kind,
        "iterations": ws.iterations,
        "d": ws.distance,
        "matrix": ws.matrix,
        "epsilon_train": ws.epsilon_train,
        "class_convention_hash": ws.convention_hash,
        "values": ws.values.tolist(),
    }


def _checksum(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def save_weights(ws: WeightSet, path: str | Path) -> None:
    payload = _payload(ws)
    payload["checksum"] = _checksum(_payload(ws))
    Path(path).write_text(json.dumps(payload, indent=1))


def load_weights(path: str | Path) -> WeightSet:
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise WeightFileError(f"unparseable weight file {path}: {exc}") from exc
    if not isinstance(payload, dict) or "checksum" not in payload:
        raise WeightFileError(f"weight file {path} has no checksum")
    stored = payload.pop("checksum")
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise WeightFileError(
            f"weight file format version {version} not supported")
    if _checksum(payload) != stored:
        raise WeightFileError(f"checksum mismatch in {path}")
    ws = WeightSet(
        kind=payload["kind"],
        iterations=payload["iterations"],
        values=np.array(payload["values"], dtype=np.float64),
        distance=payload["d"],
        matrix=payload["matrix"],
        epsilon_train=payload["epsilon_train"],
        convention_hash=payload["class_convention_hash"],
    )
    if ws.kind == "conv" and ws.convention_hash != class_convention_hash():
        raise WeightFileError(
            f"weight file {path} uses a different edge-class convention")
    return ws


def weights_checksum(ws: WeightSet) -> str:
    return _checksum(_payload(ws))
