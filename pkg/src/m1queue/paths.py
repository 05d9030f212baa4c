"""Cadlag paths with finitely many breakpoints.

A path lives on ``[0, T]`` and is stored as a sequence of knots
``0 = t_0 < t_1 < ... < t_K = T``.  At every knot we keep the left limit
``x(t_k-)``, the value ``x(t_k)`` and the signed jump ``x(t_k) - x(t_k-)``.
Between knots the path is affine, running from ``x(t_k)`` to ``x(t_{k+1}-)``;
a step path is the special case where the left limit at ``t_{k+1}`` equals
the value at ``t_k``, so every functional below is exact for step paths.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "CadlagPath",
    "CompletedGraph",
    "DomainError",
    "Jump",
    "completed_graph",
    "j_max",
    "jumps",
    "modulus",
    "oscillation",
    "oscillation_left",
    "segment_dist",
    "uniform_dist",
    "uniform_norm",
    "ws_osc",
]

VALUE_TOL = 1e-12
DEFAULT_MESH_FRACTION = 1e-3


class DomainError(ValueError):
    """Argument outside the domain of a path operation."""


@dataclass(frozen=True)
class Jump:
    t: float
    left: float
    right: float
    size: float


class CadlagPath:
    """Right-continuous real path on ``[0, T]`` with finitely many knots.

    Use :meth:`step` or :meth:`pl` to build one; the raw constructor takes
    the knot arrays directly and validates them.
    """

    __slots__ = ("T", "kind", "_t", "_left", "_right", "_jump")

    def __init__(self, T, kind, t, left, right, jump=None):
        t = np.array(t, dtype=float)
        left = np.array(left, dtype=float)
        right = np.array(right, dtype=float)
        if kind not in ("step", "pl"):
            raise ValueError(f"unknown path kind {kind!r}")
        T = float(T)
        if not np.isfinite(T) or T <= 0:
            raise ValueError("horizon T must be a positive finite number")
        if t.ndim != 1 or t.size < 2 or left.shape != t.shape or right.shape != t.shape:
            raise ValueError("knot arrays must be 1-d, equally sized, with at least two knots")
        if t[0] != 0.0 or t[-1] != T:
            raise ValueError("knots must start at 0 and end at T")
        if np.any(np.diff(t) <= 0):
            raise ValueError("knot times must be strictly increasing")
        if not (np.all(np.isfinite(left)) and np.all(np.isfinite(right))):
            raise ValueError("path values must be finite")
        if left[0] != right[0]:
            raise ValueError("a path cannot jump at t = 0")
        if jump is None:
            jump = right - left
        else:
            jump = np.array(jump, dtype=float)
            scale = 1.0 + np.maximum(np.abs(left), np.abs(right))
            if jump.shape != t.shape or np.any(np.abs(right - left - jump) > VALUE_TOL * scale):
                raise ValueError("explicit jumps disagree with left/right values")
        if kind == "step" and np.any(left[1:] != right[:-1]):
            raise ValueError("step path must be constant between knots")
        for arr in (t, left, right, jump):
            arr.setflags(write=False)
        self.T = T
        self.kind = kind
        self._t = t
        self._left = left
        self._right = right
        self._jump = jump

    # -- construction -----------------------------------------------------

    @classmethod
    def step(cls, T: float, initial: float, nodes: Iterable[Sequence[float]] = ()) -> "CadlagPath":
        """Step path that takes value ``v`` from time ``t`` on, for each ``(t, v)``."""
        T = float(T)
        nodes = np.asarray(list(nodes), dtype=float).reshape(-1, 2)
        times, vals = nodes[:, 0], nodes[:, 1]
        if times.size:
            if times[0] <= 0:
                raise DomainError("step nodes must lie in (0, T]")
            if np.any(np.diff(times) <= 0):
                raise DomainError("step node times must be strictly increasing")
            if times[-1] > T:
                raise DomainError("step nodes must lie in (0, T]")
        right = np.concatenate(([float(initial)], vals))
        t = np.concatenate(([0.0], times))
        if t[-1] < T:
            t = np.append(t, T)
            right = np.append(right, right[-1])
        left = np.concatenate(([right[0]], right[:-1]))
        return cls(T, "step", t, left, right)

    @classmethod
    def pl(cls, T: float, nodes: Iterable[Sequence[float]]) -> "CadlagPath":
        """Piecewise-linear path through ``nodes``.

        Two consecutive nodes with the same time encode a jump: the first
        gives the left limit, the second the value.  Nodes must start at
        ``t = 0``; if they stop short of ``T`` the last value is held.
        """
        T = float(T)
        nodes = np.asarray(list(nodes), dtype=float).reshape(-1, 2)
        if nodes.shape[0] == 0 or nodes[0, 0] != 0.0:
            raise DomainError("piecewise-linear nodes must start at t = 0")
        times, vals = nodes[:, 0], nodes[:, 1]
        dt = np.diff(times)
        if np.any(dt < 0):
            raise DomainError("node times must be nondecreasing")
        dup = np.flatnonzero(dt == 0)
        if dup.size and (dup[0] == 0 or np.any(np.diff(dup) == 1)):
            raise DomainError("at most two nodes per time, and no jump at t = 0")
        if times[-1] > T:
            raise DomainError("node times must not exceed T")
        keep_right = np.ones(times.size, dtype=bool)
        keep_right[dup] = False  # first of a double node is a left limit
        t = times[keep_right]
        right = vals[keep_right]
        left = right.copy()
        left[np.searchsorted(t, times[dup])] = vals[dup]
        if t[-1] < T:
            t = np.append(t, T)
            right = np.append(right, right[-1])
            left = np.append(left, right[-2])
        return cls(T, "pl", t, left, right)

    @classmethod
    def constant(cls, T: float, value: float) -> "CadlagPath":
        return cls.step(T, value)

    # -- accessors --------------------------------------------------------

    @property
    def knots(self) -> np.ndarray:
        return self._t

    @property
    def left_values(self) -> np.ndarray:
        return self._left

    @property
    def right_values(self) -> np.ndarray:
        return self._right

    @property
    def jump_values(self) -> np.ndarray:
        return self._jump

    @property
    def breakpoints(self) -> np.ndarray:
        """Knot times in ``(0, T]`` where the path jumps or changes slope."""
        t, left, right = self._t, self._left, self._right
        if self.kind == "step":
            mask = self._jump != 0
        else:
            seg = (left[1:] - right[:-1]) / np.diff(t)
            kink = np.zeros(t.size, dtype=bool)
            kink[1:-1] = seg[1:] != seg[:-1]
            mask = (self._jump != 0) | kink
        mask[0] = False
        return t[mask]

    def __repr__(self) -> str:
        return f"CadlagPath(kind={self.kind!r}, T={self.T}, knots={self._t.size})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, CadlagPath):
            return NotImplemented
        return (
            self.T == other.T
            and self.kind == other.kind
            and np.array_equal(self._t, other._t)
            and np.array_equal(self._left, other._left)
            and np.array_equal(self._right, other._right)
            and np.array_equal(self._jump, other._jump)
        )

    __hash__ = None

    def fingerprint(self) -> bytes:
        parts = [np.float64(self.T).tobytes(), self.kind.encode()]
        parts += [a.tobytes() for a in (self._t, self._left, self._right, self._jump)]
        return b"|".join(parts)

    # -- evaluation -------------------------------------------------------

    def _check_domain(self, t, allow_zero=True):
        t = np.asarray(t, dtype=float)
        lo_ok = t >= 0 if allow_zero else t > 0
        if not np.all(lo_ok & (t <= self.T)):
            raise DomainError(f"time outside the domain {'[' if allow_zero else '('}0, {self.T}]")
        return t

    def __call__(self, t):
        """Value ``x(t)`` (vectorised)."""
        t = self._check_domain(t)
        k = np.clip(np.searchsorted(self._t, t, side="right") - 1, 0, self._t.size - 1)
        return self._interp(k, t)

    def left_limit(self, t):
        """Left limit ``x(t-)`` for ``t`` in ``(0, T]`` (vectorised)."""
        t = self._check_domain(t, allow_zero=False)
        k = np.searchsorted(self._t, t, side="left")
        at_knot = self._t[np.minimum(k, self._t.size - 1)] == t
        km1 = np.maximum(k - 1, 0)
        val = self._interp(km1, t)
        return np.where(at_knot, self._left[np.minimum(k, self._t.size - 1)], val)

    def _interp(self, k, t):
        t0 = self._t[k]
        last = k == self._t.size - 1
        k1 = np.minimum(k + 1, self._t.size - 1)
        span = np.where(last, 1.0, self._t[k1] - t0)
        frac = np.where(last, 0.0, (t - t0) / span)
        a = self._right[k]
        b = self._left[k1]
        # a + 0 * (b - a) keeps step values exact
        out = np.where(a == b, a, a + (b - a) * frac)
        return out[()] if np.ndim(out) == 0 else out

    # -- transforms -------------------------------------------------------

    def add_affine(self, a: float, b: float) -> "CadlagPath":
        """Path ``x(t) + a + b t``; jumps are carried over unchanged."""
        if b == 0.0:
            return CadlagPath(self.T, self.kind, self._t, self._left + a, self._right + a, self._jump)
        drift = a + b * self._t
        return CadlagPath(self.T, "pl", self._t, self._left + drift, self._right + drift, self._jump)

    def scale(self, c: float, shift: float = 0.0) -> "CadlagPath":
        """Path ``c * (x(t) - shift)``."""
        return CadlagPath(self.T, self.kind, self._t, c * (self._left - shift), c * (self._right - shift))

    def restrict_values(self, a: float, b: float):
        """Values and left limits relevant to the closed window ``[a, b]``."""
        return _window_values(self, a, b, include_right=True)


def _window_values(x: CadlagPath, a: float, b: float, include_right: bool) -> np.ndarray:
    """Candidate extreme values of ``x`` over ``[a, b]`` (or ``[a, b)`` plus ``x(b-)``)."""
    t = x.knots
    inner = (t > a) & (t < b)
    vals = [np.atleast_1d(x(a)), x.left_values[inner], x.right_values[inner]]
    if b > a:
        vals.append(np.atleast_1d(x.left_limit(b)))
    if include_right:
        vals.append(np.atleast_1d(x(b)))
    return np.concatenate(vals)


# -- jump functionals -------------------------------------------------------


def jumps(x: CadlagPath, eps: float = 0.0) -> list[Jump]:
    """All jumps of ``x`` with absolute size strictly above ``eps``, by time."""
    size = np.abs(x.jump_values)
    idx = np.flatnonzero(size > eps)
    return [
        Jump(float(x.knots[k]), float(x.left_values[k]), float(x.right_values[k]), float(size[k]))
        for k in idx
    ]


def j_max(x: CadlagPath, a: float | None = None, b: float | None = None) -> float:
    """Largest absolute jump, optionally over the time window ``[a, b]``."""
    size = np.abs(x.jump_values)
    if a is not None or b is not None:
        lo = 0.0 if a is None else a
        hi = x.T if b is None else b
        size = size[(x.knots >= lo) & (x.knots <= hi)]
    return float(size.max()) if size.size else 0.0


# -- oscillation functionals --------------------------------------------------


def oscillation(x: CadlagPath, a: float, b: float) -> float:
    """``sup |x(u1) - x(u2)|`` over ``u1, u2`` in the closed interval ``[a, b]``."""
    if not (0 <= a <= b <= x.T):
        raise DomainError(f"need 0 <= a <= b <= T, got [{a}, {b}]")
    vals = _window_values(x, a, b, include_right=True)
    return float(vals.max() - vals.min())


def oscillation_left(x: CadlagPath, a: float, b: float) -> float:
    """Oscillation over ``[a, b)`` including the left limit ``x(b-)``.

    This is the window that approaches a jump at ``b`` from the left without
    picking up the jump itself.
    """
    if not (0 <= a < b <= x.T):
        raise DomainError(f"need 0 <= a < b <= T, got [{a}, {b})")
    vals = _window_values(x, a, b, include_right=False)
    return float(vals.max() - vals.min())


def _mesh_grid(x: CadlagPath, mesh: float | None) -> np.ndarray:
    h = DEFAULT_MESH_FRACTION * x.T if mesh is None else mesh
    n = int(np.ceil(x.T / h))
    return np.union1d(np.linspace(0.0, x.T, n + 1), x.knots)


def modulus(x: CadlagPath, delta: float, mesh: float | None = None) -> float:
    """``sup_t nu(x, [t, t + delta])``.

    Exact for step paths: the set of values seen by the window only changes
    when ``t`` or ``t + delta`` crosses a knot, so window starts at ``t_k``
    and ``t_k - delta`` suffice.  For piecewise-linear paths the candidate
    starts are refined by a grid of width ``mesh`` (default ``1e-3 T``),
    which can only underestimate.
    """
    if not (0 < delta <= x.T):
        raise DomainError("need 0 < delta <= T")
    starts = np.concatenate((x.knots, x.knots - delta))
    if x.kind == "pl":
        starts = np.concatenate((starts, _mesh_grid(x, mesh)))
    starts = np.unique(np.clip(starts, 0.0, x.T - delta))
    return max(oscillation(x, s, s + delta) for s in starts)


def segment_dist(c: float, a: float, b: float) -> float:
    """Distance from ``c`` to the segment between ``a`` and ``b``."""
    lo, hi = (a, b) if a <= b else (b, a)
    if c < lo:
        return lo - c
    if c > hi:
        return c - hi
    return 0.0


def _ws_kernel(lo_t, hi_t, vals, width, strict):
    """Max over index triples a < b < c with a feasible time gap of the
    distance from ``vals[b]`` to the segment ``[vals[a], vals[c]]``.

    Item ``i`` occupies the times ``[lo_t[i], hi_t[i])`` (a point when they
    coincide); the triple is feasible when ``lo_t[c] - hi_t[a]`` is below
    ``width`` (strictly for half-open items).
    """
    n = vals.size
    best = 0.0
    for a in range(n - 2):
        gap = lo_t[a + 2 :] - hi_t[a]
        ok = gap < width if strict else gap <= width
        cnt = int(np.argmin(ok)) if not ok.all() else ok.size
        if cnt == 0:
            continue
        mids = vals[a + 1 : a + 1 + cnt]
        run_max = np.maximum.accumulate(mids)
        run_min = np.minimum.accumulate(mids)
        ends = vals[a + 2 : a + 2 + cnt]
        lo = np.minimum(vals[a], ends)
        hi = np.maximum(vals[a], ends)
        d = np.maximum(np.maximum(lo - run_min, run_max - hi), 0.0)
        best = max(best, float(d.max()))
    return best


def ws_osc(x: CadlagPath, delta: float, mesh: float | None = None) -> float:
    """M1 oscillation ``w_s(x, delta)``.

    The supremum runs over ``t1 < t2 < t3`` inside a window ``[t - delta,
    t + delta]``, of the distance from ``x(t2)`` to the segment spanned by
    ``x(t1)`` and ``x(t3)``.  Step paths are handled exactly by working with
    the constant pieces; piecewise-linear paths are sampled on a grid of
    width ``mesh`` (plus knots and left limits), which can only underestimate.
    """
    if delta <= 0:
        raise DomainError("delta must be positive")
    t = x.knots
    if x.kind == "step":
        keep = np.concatenate(([True], x.jump_values[1:] != 0))
        starts = t[keep]
        vals = x.right_values[keep]
        ends = np.append(starts[1:], x.T)
        if vals.size < 3:
            return 0.0
        return _ws_kernel(starts, ends, vals, 2.0 * delta, strict=True)
    grid = _mesh_grid(x, mesh)
    vals = x(grid)
    lefts = x.left_limit(grid[1:])
    times = np.concatenate((grid, grid[1:]))
    allv = np.concatenate((vals, lefts))
    # left limit sorts before the value at the same time
    order = np.lexsort((np.concatenate((np.ones(grid.size), np.zeros(grid.size - 1))), times))
    times, allv = times[order], allv[order]
    if allv.size < 3:
        return 0.0
    return _ws_kernel(times, times, allv, 2.0 * delta, strict=False)


# -- uniform distance -----------------------------------------------------------


def _check_horizons(x: CadlagPath, y: CadlagPath):
    if x.T != y.T:
        raise DomainError(f"horizon mismatch: {x.T} vs {y.T}")


def uniform_dist(x: CadlagPath, y: CadlagPath, a: float | None = None, b: float | None = None) -> float:
    """``sup |x(t) - y(t)|`` over ``[0, T]`` or the window ``[a, b]``.

    Both paths are affine between merged knots, so the supremum is attained
    at a merged knot, either at the value or at the left limit.
    """
    _check_horizons(x, y)
    lo = 0.0 if a is None else float(a)
    hi = x.T if b is None else float(b)
    t = np.union1d(x.knots, y.knots)
    t = np.union1d(t[(t >= lo) & (t <= hi)], [lo, hi])
    d = np.abs(x(t) - y(t))
    inner = t[t > lo]
    if inner.size:
        d = np.concatenate((d, np.abs(x.left_limit(inner) - y.left_limit(inner))))
    return float(d.max())


def uniform_norm(x: CadlagPath) -> float:
    return float(max(np.abs(x.left_values).max(), np.abs(x.right_values).max()))


# -- completed graph --------------------------------------------------------------


@dataclass(frozen=True)
class CompletedGraph:
    """Polyline through the completed graph, vertices as ``(value, time)``.

    ``vertical[i]`` flags the segment from vertex ``i`` to ``i + 1`` as the
    filled-in segment of a jump.
    """

    vertices: np.ndarray
    vertical: np.ndarray
    T: float

    @property
    def values(self) -> np.ndarray:
        return self.vertices[:, 0]

    @property
    def times(self) -> np.ndarray:
        return self.vertices[:, 1]

    def segment_lengths(self) -> np.ndarray:
        return np.abs(np.diff(self.vertices, axis=0)).max(axis=1)

    def arclength(self) -> np.ndarray:
        """Cumulative max-norm length at each vertex."""
        return np.concatenate(([0.0], np.cumsum(self.segment_lengths())))

    def point_at(self, pos) -> np.ndarray:
        """Points at max-norm arclength ``pos`` along the graph, as ``(value, time)`` rows."""
        cum = self.arclength()
        pos = np.clip(np.asarray(pos, dtype=float), 0.0, cum[-1])
        k = np.clip(np.searchsorted(cum, pos, side="right") - 1, 0, len(cum) - 2)
        seg = cum[k + 1] - cum[k]
        frac = np.where(seg > 0, (pos - cum[k]) / np.where(seg > 0, seg, 1.0), 0.0)
        v0, v1 = self.vertices[k], self.vertices[k + 1]
        out = v0 + (v1 - v0) * frac[..., None]
        # keep the constant coordinate exact on axis-parallel segments
        same = v0 == v1
        return np.where(same, v0, out)


def completed_graph(x: CadlagPath) -> CompletedGraph:
    """Vertices of the completed graph in graph order, from ``(x(0), 0)`` to ``(x(T), T)``."""
    t, left, right, jump = x.knots, x.left_values, x.right_values, x.jump_values
    verts = [(right[0], 0.0)]
    vertical = []
    for k in range(1, t.size):
        verts.append((left[k], t[k]))
        vertical.append(False)
        if jump[k] != 0:
            verts.append((right[k], t[k]))
            vertical.append(True)
    verts = np.array(verts, dtype=float)
    vertical = np.array(vertical, dtype=bool)
    if x.kind == "step" and len(verts) > 2:
        # drop interior vertices of flat runs
        v = verts[:, 0]
        flat_in = np.concatenate(([False], ~vertical))
        flat_out = np.concatenate((~vertical, [False]))
        same = np.zeros(len(v), dtype=bool)
        same[1:-1] = (v[1:-1] == v[:-2]) & (v[1:-1] == v[2:])
        drop = same & flat_in & flat_out
        keep = ~drop
        seg_keep = keep[1:]
        verts = verts[keep]
        vertical = vertical[seg_keep]
    return CompletedGraph(verts, vertical, x.T)
