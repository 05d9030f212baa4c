"""JSON files for paths, representations and experiment configs.

Path files look like ``{"T": 2, "kind": "step", "initial": 0,
"nodes": [[1, 1], [1.5, 0]]}``.  For step paths each node ``[t, v]`` means
the value becomes ``v`` at time ``t``.  For piecewise-linear paths the
nodes start at ``t = 0`` and two nodes with the same time encode a jump.
Floats are written with ``repr`` precision, so step paths round-trip
bit for bit.
"""

from __future__ import annotations

import dataclasses
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .paths import CadlagPath, DomainError
from .reps import ParametricRep

__all__ = [
    "ExperimentConfig",
    "PathFileError",
    "load_config",
    "load_path",
    "load_rep",
    "path_from_dict",
    "path_to_dict",
    "save_json",
    "save_path",
    "save_rep",
]


class PathFileError(DomainError):
    """Malformed input file; the message starts with ``file:line:col``."""


def _read_json(file) -> tuple[object, str, str]:
    name = str(file)
    text = Path(file).read_text()

    def reject(token):
        m = re.search(r"\b" + re.escape(token.lstrip("-")), text)
        line, col = _line_col(text, m.start() if m else 0)
        raise PathFileError(f"{name}:{line}:{col}: non-finite number {token}")

    try:
        return json.loads(text, parse_constant=reject), text, name
    except json.JSONDecodeError as e:
        raise PathFileError(f"{name}:{e.lineno}:{e.colno}: {e.msg}") from None


def _line_col(text: str, pos: int) -> tuple[int, int]:
    line = text.count("\n", 0, pos) + 1
    return line, pos - (text.rfind("\n", 0, pos) + 1) + 1


def _node_line(text: str, index: int) -> int:
    """Line of the ``index``-th ``[t, v]`` pair after the ``nodes`` key."""
    start = text.find('"nodes"')
    if start < 0:
        return 1
    pairs = list(re.finditer(r"\[\s*[^\[\]]*?\]", text[start:]))
    if index >= len(pairs):
        return 1
    return _line_col(text, start + pairs[index].start())[0]


def _number(obj, what: str) -> float:
    if isinstance(obj, bool) or not isinstance(obj, (int, float)):
        raise ValueError(f"{what} must be a number")
    v = float(obj)
    if not math.isfinite(v):
        raise ValueError(f"{what} must be finite")
    return v


def path_from_dict(d: dict, where: str = "<dict>", text: str | None = None) -> CadlagPath:
    """Validate a decoded path object and build the path."""

    def fail(msg, index=None):
        line = _node_line(text, index) if (text is not None and index is not None) else None
        loc = f"{where}:{line}" if line else where
        raise PathFileError(f"{loc}: {msg}")

    if not isinstance(d, dict):
        fail("top level must be an object")
    unknown = set(d) - {"T", "kind", "initial", "nodes"}
    if unknown:
        fail(f"unknown keys {sorted(unknown)}")
    try:
        T = _number(d.get("T"), "T")
    except ValueError as e:
        fail(str(e))
    if T <= 0:
        fail("T must be positive")
    kind = d.get("kind", "step")
    if kind not in ("step", "pl"):
        fail(f"kind must be 'step' or 'pl', got {kind!r}")
    nodes = d.get("nodes", [])
    if not isinstance(nodes, list):
        fail("nodes must be a list")
    parsed = []
    for i, nd in enumerate(nodes):
        if not (isinstance(nd, list) and len(nd) == 2):
            fail(f"nodes[{i}] must be a [t, v] pair", i)
        try:
            parsed.append((_number(nd[0], f"nodes[{i}] time"), _number(nd[1], f"nodes[{i}] value")))
        except ValueError as e:
            fail(str(e), i)
    for i, (t, _) in enumerate(parsed):
        if t < 0 or t > T:
            fail(f"nodes[{i}] time {t} outside [0, {T}]", i)
        if i:
            prev = parsed[i - 1][0]
            bad = t <= prev if kind == "step" else t < prev
            if kind == "pl" and t == prev and i >= 2 and parsed[i - 2][0] == t:
                bad = True
            if bad:
                fail(f"nodes[{i}] time {t} does not increase on nodes[{i - 1}]", i)
    if kind == "step":
        try:
            initial = _number(d.get("initial", 0.0), "initial")
        except ValueError as e:
            fail(str(e))
        if parsed and parsed[0][0] == 0:
            fail("nodes[0]: step nodes must have t > 0", 0)
        return CadlagPath.step(T, initial, parsed)
    if not parsed or parsed[0][0] != 0:
        fail("piecewise-linear nodes must start at t = 0", 0)
    if len(parsed) > 1 and parsed[1][0] == 0:
        fail("nodes[1]: no jump at t = 0", 1)
    return CadlagPath.pl(T, parsed)


def path_to_dict(x: CadlagPath) -> dict:
    t, left, right = x.knots, x.left_values, x.right_values
    if x.kind == "step":
        nodes = [[float(a), float(b)] for a, b in zip(t[1:], right[1:])]
        return {"T": x.T, "kind": "step", "initial": float(right[0]), "nodes": nodes}
    nodes = [[0.0, float(right[0])]]
    for a, lo, hi in zip(t[1:], left[1:], right[1:]):
        if lo != hi:
            nodes.append([float(a), float(lo)])
        nodes.append([float(a), float(hi)])
    return {"T": x.T, "kind": "pl", "nodes": nodes}


def load_path(file) -> CadlagPath:
    obj, text, name = _read_json(file)
    return path_from_dict(obj, name, text)


def save_json(obj, file) -> None:
    text = json.dumps(obj, indent=1, allow_nan=False)
    if file in (None, "-"):
        print(text)
    else:
        Path(file).write_text(text + "\n")


def save_path(x: CadlagPath, file) -> None:
    save_json(path_to_dict(x), file)


def save_rep(rep: ParametricRep, file) -> None:
    save_json(rep.to_json(), file)


def load_rep(file) -> ParametricRep:
    obj, _, name = _read_json(file)
    try:
        k = np.asarray(obj["knots"], dtype=float)
        return ParametricRep(k[:, 0], k[:, 1], k[:, 2], float(obj["T"]))
    except (KeyError, TypeError, IndexError, ValueError) as e:
        raise PathFileError(f"{name}: malformed representation: {e}") from None


@dataclass(frozen=True)
class ExperimentConfig:
    """Settings of ``fclt-experiment``."""

    ns: tuple[int, ...] = (100, 400, 1600)
    mu: float = 1.0
    theta: float = 1.0
    beta: float = 1.0
    alpha: float = 1.5
    T: float = 10.0
    reps: int = 500
    seed: int = 0
    interarrival: str = "pareto"
    scale: float | None = None
    skew: float = -1.0
    driver_step: float = 1e-2
    step: float = 1e-3
    workers: int = 1


def load_config(file, overrides: dict | None = None) -> ExperimentConfig:
    """Read an :class:`ExperimentConfig`; unknown keys are rejected."""
    obj, _, name = _read_json(file)
    if not isinstance(obj, dict):
        raise PathFileError(f"{name}: config must be an object")
    obj = {**obj, **(overrides or {})}
    fields = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(obj) - set(fields)
    if unknown:
        raise PathFileError(f"{name}: unknown config keys {sorted(unknown)}")
    if "ns" in obj:
        if not isinstance(obj["ns"], list) or not all(isinstance(v, int) for v in obj["ns"]):
            raise PathFileError(f"{name}: ns must be a list of integers")
        obj["ns"] = tuple(obj["ns"])
    return ExperimentConfig(**obj)
