"""Orbit files: JSON text with every float written to 17 significant digits."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .grid import LoopGrid, SymmetryClass, ZLoop, ZPair, drop_nyquist, project_symmetry
from .solvers import model_gradient

SCHEMA_VERSION = 1
MODELS = ("kepler", "av", "in", "interp", "decoupled")


class OrbitFileError(ValueError):
    pass


@dataclass
class OrbitFile:
    n: int
    model: str
    r: float
    N: float
    z1: np.ndarray
    z2: np.ndarray
    classes: list
    provenance: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    @classmethod
    def from_solution(cls, z, model: str, r: float, N: float, provenance: dict | None = None) -> "OrbitFile":
        if isinstance(z, ZLoop):
            z1, z2 = np.zeros(0), z.values
            classes = ["none", z.cls.value]
        else:
            z1, z2 = z.z1.values, z.z2.values
            classes = [z.z1.cls.value, z.z2.cls.value]
        f = cls(int(z2.size), model, float(r), float(N), np.array(z1), np.array(z2), classes, dict(provenance or {}))
        f.provenance["gradient_norm"] = gradient_norm(z, model, r, N)
        return f

    @property
    def is_kepler(self) -> bool:
        return self.model == "kepler"

    def solution(self):
        """The stored ZLoop (Kepler) or ZPair."""
        grid = LoopGrid(self.n)
        z2 = ZLoop(grid, self.z2, SymmetryClass(self.classes[1]))
        if self.is_kepler:
            return z2
        z1 = ZLoop(grid, self.z1, SymmetryClass(self.classes[0]))
        return ZPair(z1, z2, {"model": self.model, "r": self.r, "N": self.N})

    def as_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "n": self.n,
            "model": self.model,
            "r": self.r,
            "N": self.N,
            "classes": list(self.classes),
            "z1": [float(v) for v in self.z1],
            "z2": [float(v) for v in self.z2],
            "provenance": self.provenance,
        }


def gradient_norm(z, model: str, r: float, N: float) -> float:
    """sup norm of the gradient in the space the solver works in."""
    g = model_gradient(model, r, N)(z)
    gs = g if isinstance(g, tuple) else (g,)
    return max(float(np.max(np.abs(drop_nyquist(project_symmetry(x, x.cls)).values))) for x in gs)


def _encode(obj, indent: int = 0) -> str:
    pad = "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + "  " * indent + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_encode(v, indent + 1) for v in obj) + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        if not math.isfinite(obj):
            return "null"
        return format(float(obj), ".17g")
    if obj is None:
        return "null"
    return json.dumps(str(obj))


def dumps(f: OrbitFile) -> str:
    return _encode(f.as_dict()) + "\n"


def save(f: OrbitFile, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(f))
    return path


def _finite_array(d: dict, key: str) -> np.ndarray:
    try:
        a = np.asarray(d[key], dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise OrbitFileError(f"{key}: not an array of numbers") from exc
    if a.ndim != 1 or not np.all(np.isfinite(a)):
        raise OrbitFileError(f"{key}: expected a finite 1-d array")
    return a


def loads(text: str) -> OrbitFile:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise OrbitFileError(f"not valid JSON: {exc}") from exc
    if not isinstance(d, dict):
        raise OrbitFileError("top level must be an object")
    missing = {"schema_version", "n", "model", "r", "N", "z1", "z2", "classes"} - d.keys()
    if missing:
        raise OrbitFileError(f"missing fields: {sorted(missing)}")
    if d["schema_version"] != SCHEMA_VERSION:
        raise OrbitFileError(f"unsupported schema_version {d['schema_version']!r}")
    if d["model"] not in MODELS:
        raise OrbitFileError(f"unknown model {d['model']!r}")
    n = d["n"]
    if not isinstance(n, int) or n < 16 or n % 4:
        raise OrbitFileError(f"bad grid size {n!r}")
    z1, z2 = _finite_array(d, "z1"), _finite_array(d, "z2")
    if z2.size != n or (z1.size != (0 if d["model"] == "kepler" else n)):
        raise OrbitFileError("array lengths do not match n")
    classes = d["classes"]
    try:
        SymmetryClass(classes[1])
        if d["model"] != "kepler":
            SymmetryClass(classes[0])
    except (ValueError, TypeError, IndexError) as exc:
        raise OrbitFileError(f"bad classes {classes!r}") from exc
    r, N = float(d["r"]), float(d["N"])
    if not (0.0 <= r <= 1.0 and N > 0):
        raise OrbitFileError("r must lie in [0, 1] and N must be positive")
    return OrbitFile(n, d["model"], r, N, z1, z2, list(classes), dict(d.get("provenance") or {}), SCHEMA_VERSION)


def load(path) -> OrbitFile:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise OrbitFileError(f"cannot read {path}: {exc}") from exc
    return loads(text)
