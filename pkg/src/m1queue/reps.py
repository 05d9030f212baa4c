"""Parametric representations ``(u, r)`` of completed graphs.

A representation is stored as piecewise-linear ``u`` and ``r`` over a knot
grid in ``[0, 1]``.  :func:`canonical_rep` builds the slope-``{0, 2T}`` time
function with one flat spot per jump (plus a terminal flat spot at ``T``);
:func:`validate_rep` checks an arbitrary representation against a path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .paths import CadlagPath, DomainError, completed_graph, jumps

__all__ = [
    "FlatSpot",
    "MAX_LADDER_JUMPS",
    "ParametricRep",
    "RepValidationReport",
    "canonical_rep",
    "deriv_profile",
    "flat_ladder",
    "l1_deriv_dist",
    "rep_sup_dist",
    "validate_rep",
]

MAX_LADDER_JUMPS = 30


@dataclass(frozen=True)
class FlatSpot:
    t: float
    s1: float
    s2: float
    assigned: float | None = None  # ladder length when first inserted

    @property
    def length(self) -> float:
        return self.s2 - self.s1


@dataclass(frozen=True)
class ParametricRep:
    s: np.ndarray
    u: np.ndarray
    r: np.ndarray
    T: float
    flat_spots: tuple[FlatSpot, ...] = field(default=())

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        u = np.asarray(self.u, dtype=float)
        r = np.asarray(self.r, dtype=float)
        if s.ndim != 1 or s.size < 2 or u.shape != s.shape or r.shape != s.shape:
            raise ValueError("knot arrays must be 1-d and equally sized")
        if s[0] != 0.0 or s[-1] != 1.0:
            raise ValueError("knots must run from s = 0 to s = 1")
        if np.any(np.diff(s) <= 0):
            raise ValueError("knots must be strictly increasing")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "r", r)
        if not self.flat_spots:
            object.__setattr__(self, "flat_spots", tuple(find_flat_spots(s, r)))

    @property
    def slopes(self) -> np.ndarray:
        return np.diff(self.r) / np.diff(self.s)

    @property
    def slope_bound(self) -> float:
        return float(np.abs(self.slopes).max())

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        return np.interp(s, self.s, self.u), np.interp(s, self.s, self.r)

    def to_json(self) -> dict:
        return {
            "T": self.T,
            "knots": np.column_stack((self.s, self.u, self.r)).tolist(),
            "flat_spots": [[f.t, f.s1, f.s2] for f in self.flat_spots],
        }


def find_flat_spots(s: np.ndarray, r: np.ndarray) -> list[FlatSpot]:
    """Maximal knot runs on which ``r`` is constant."""
    flat = np.diff(r) == 0
    out = []
    k = 0
    n = flat.size
    while k < n:
        if flat[k]:
            j = k
            while j + 1 < n and flat[j + 1]:
                j += 1
            out.append(FlatSpot(float(r[k]), float(s[k]), float(s[j + 1])))
            k = j + 1
        else:
            k += 1
    return out


def flat_ladder(count: int) -> list[Fraction]:
    """Initial flat lengths: 5/12, then 4**-j for j >= 2."""
    return [Fraction(5, 12) if j == 1 else Fraction(1, 4**j) for j in range(1, count + 1)]


def canonical_rep(x: CadlagPath) -> ParametricRep:
    """Canonical representation with slopes in ``{0, 2T}``.

    Jumps are taken by decreasing size (ties by time).  The ``j``-th one
    receives a flat spot of the ladder length, carved out of the nearest
    flat spot above it (the terminal one at ``T`` to begin with), so the
    flat lengths always total 1/2 and the rest of ``[0, 1]`` rises at slope
    ``2T``.  Continuous paths get ``r(s) = T s``.
    """
    T = x.T
    js = jumps(x, 0.0)
    if not js:
        s = x.knots / T
        s[-1] = 1.0
        return ParametricRep(s, x.right_values.copy(), x.knots.copy(), T, ())
    if len(js) > MAX_LADDER_JUMPS:
        raise DomainError(
            f"{len(js)} jumps exceed the flat-spot ladder limit of {MAX_LADDER_JUMPS}; "
            "pre-filter with jumps(x, eps)"
        )
    order = sorted(js, key=lambda j: (-j.size, j.t))
    ladder = flat_ladder(len(order))
    length: dict[float, Fraction] = {T: Fraction(1, 2)}
    assigned: dict[float, Fraction] = {}
    for jmp, f in zip(order, ladder):
        if jmp.t == T:
            # already covered by the terminal flat spot
            assigned[T] = f
            continue
        above = min(level for level in length if level > jmp.t)
        length[above] -= f
        length[jmp.t] = f
        assigned[jmp.t] = f

    two_T = 2 * Fraction(T)
    levels = sorted(length)
    knots: list[tuple[Fraction, float, float]] = [(Fraction(0), float(x.right_values[0]), 0.0)]
    below = Fraction(0)  # flat length strictly below the current time
    li = 0
    flats = []
    for k in range(1, x.knots.size):
        tau = float(x.knots[k])
        while li < len(levels) and levels[li] < tau:
            below += length[levels[li]]
            li += 1
        s_in = Fraction(tau) / two_T + below
        if tau in length:
            s_out = s_in + length[tau]
            knots.append((s_in, float(x.left_values[k]), tau))
            knots.append((s_out, float(x.right_values[k]), tau))
            flats.append((tau, s_in, s_out))
        else:
            knots.append((s_in, float(x.right_values[k]), tau))
    if knots[-1][0] != 1:
        raise AssertionError("canonical layout does not end at s = 1")

    s = np.array([float(k[0]) for k in knots])
    if np.any(np.diff(s) <= 0):
        raise DomainError("flat spots fall below floating-point resolution; pre-filter small jumps")
    u = np.array([k[1] for k in knots])
    r = np.array([k[2] for k in knots])
    spots = tuple(
        FlatSpot(tau, float(a), float(b), float(assigned[tau]) if tau in assigned else None)
        for tau, a, b in flats
    )
    rep = ParametricRep(s, u, r, T, spots)
    object.__setattr__(rep, "exact_flat_lengths", {tau: length[tau] for tau, _, _ in flats})
    object.__setattr__(rep, "ladder", tuple(ladder))
    return rep


# -- validation ---------------------------------------------------------------


@dataclass(frozen=True)
class RepValidationReport:
    passed: bool
    graph_residual: float
    monotonicity_residual: float
    coverage_residual: float
    endpoint_residual: float
    tol: float


def _graph_gap(x: CadlagPath, u, r):
    """Vertical distance from ``(u, r)`` to the completed graph at time ``r``."""
    r = np.clip(r, 0.0, x.T)
    right = x(r)
    left = np.where(r > 0, x.left_limit(np.where(r > 0, r, x.T)), right)
    lo = np.minimum(left, right)
    hi = np.maximum(left, right)
    return np.maximum(np.maximum(lo - u, u - hi), 0.0)


def point_segment_dist(q: np.ndarray, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Max-norm distance from point ``q`` to each segment ``[A_i, B_i]``."""
    a = A - q
    d = B - A
    a1, a2, d1, d2 = a[:, 0], a[:, 1], d[:, 0], d[:, 1]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        cands = np.stack(
            [
                np.zeros_like(a1),
                np.ones_like(a1),
                -a1 / d1,
                -a2 / d2,
                (a2 - a1) / (d1 - d2),
                -(a1 + a2) / (d1 + d2),
            ]
        )
    cands = np.clip(np.nan_to_num(cands, nan=0.0, posinf=0.0, neginf=0.0), 0.0, 1.0)
    val = np.maximum(np.abs(a1 + cands * d1), np.abs(a2 + cands * d2))
    return val.min(axis=0)


def validate_rep(x: CadlagPath, rep: ParametricRep, tol: float = 1e-9) -> RepValidationReport:
    """Check that ``rep`` is a parametric representation of ``x``.

    Residuals: distance of the curve from the completed graph (knots,
    piece midpoints and crossings of the path's knot times), backward
    motion in graph order, distance of each graph vertex from the curve,
    and endpoint errors.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    s, u, r = rep.s, rep.u, rep.r
    T = x.T
    endpoint = max(
        abs(r[0]),
        abs(r[-1] - T),
        abs(u[0] - float(x(0.0))),
        abs(u[-1] - float(x(T))),
        abs(rep.T - T),
    )

    # points on the curve to test against the graph
    mid_s = 0.5 * (s[:-1] + s[1:])
    mid_u = 0.5 * (u[:-1] + u[1:])
    mid_r = 0.5 * (r[:-1] + r[1:])
    cu, cr = [u, mid_u], [r, mid_r]
    rising = np.flatnonzero(r[1:] > r[:-1])
    if rising.size:
        kt = x.knots
        lo_i = np.searchsorted(kt, r[rising], side="right")
        hi_i = np.searchsorted(kt, r[rising + 1], side="left")
        cnt = hi_i - lo_i
        if cnt.sum():
            piece = np.repeat(rising, cnt)
            starts = np.repeat(lo_i, cnt)
            offs = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
            tau = kt[starts + offs]
            frac = (tau - r[piece]) / (r[piece + 1] - r[piece])
            cu.append(u[piece] + frac * (u[piece + 1] - u[piece]))
            cr.append(tau)
    graph = float(_graph_gap(x, np.concatenate(cu), np.concatenate(cr)).max())
    del mid_s

    # graph order: time never decreases; along a jump segment u moves one way
    mono = float(np.maximum(r[:-1] - r[1:], 0.0).max(initial=0.0))
    jt = x.knots[x.jump_values != 0]
    if jt.size:
        at_jump = np.isin(r, jt)
        kk = np.searchsorted(x.knots, np.where(at_jump, r, 0.0))
        left = np.where(at_jump, x.left_values[kk], 0.0)
        size = np.where(at_jump, x.jump_values[kk], 1.0)
        p = np.where(at_jump, (u - left) / size, 0.0)
        same = (r[1:] == r[:-1]) & at_jump[1:]
        back = np.maximum(p[:-1] - p[1:], 0.0) * np.abs(size[1:])
        mono = max(mono, float(np.where(same, back, 0.0).max(initial=0.0)))
        enter = at_jump[1:] & (r[:-1] < r[1:])
        leave = at_jump[:-1] & (r[1:] > r[:-1])
        right = left + size
        if enter.any():
            mono = max(mono, float(np.abs(u[1:][enter] - left[1:][enter]).max()))
        if leave.any():
            mono = max(mono, float(np.abs(u[:-1][leave] - right[:-1][leave]).max()))

    g = completed_graph(x)
    A = np.column_stack((u[:-1], r[:-1]))
    B = np.column_stack((u[1:], r[1:]))
    cover = 0.0
    for q in g.vertices:
        cover = max(cover, float(point_segment_dist(q, A, B).min()))

    passed = max(graph, mono, cover, endpoint) <= tol
    return RepValidationReport(bool(passed), graph, mono, cover, float(endpoint), tol)


# -- derivative statistics -------------------------------------------------------


def deriv_profile(rep: ParametricRep) -> tuple[float, float]:
    """``(sup |r'|, integral of |r'|)`` over ``[0, 1]``."""
    slopes = rep.slopes
    ds = np.diff(rep.s)
    return float(np.abs(slopes).max()), float(np.sum(np.abs(slopes) * ds))


def _slope_on(rep: ParametricRep, mids: np.ndarray) -> np.ndarray:
    k = np.clip(np.searchsorted(rep.s, mids, side="right") - 1, 0, rep.s.size - 2)
    return rep.slopes[k]


def l1_deriv_dist(
    rep_a: ParametricRep, rep_b: ParametricRep, lo: float = 0.0, hi: float = 1.0
) -> float:
    """``integral of |r_a' - r_b'|`` over ``[lo, hi]`` (default all of ``[0, 1]``)."""
    if rep_a.T != rep_b.T:
        raise DomainError(f"horizon mismatch: {rep_a.T} vs {rep_b.T}")
    grid = np.union1d(rep_a.s, rep_b.s)
    grid = np.union1d(grid[(grid > lo) & (grid < hi)], [lo, hi])
    ds = np.diff(grid)
    mids = 0.5 * (grid[:-1] + grid[1:])
    return float(np.sum(np.abs(_slope_on(rep_a, mids) - _slope_on(rep_b, mids)) * ds))


def rep_sup_dist(rep_a: ParametricRep, rep_b: ParametricRep) -> tuple[float, float]:
    """``(sup |u_a - u_b|, sup |r_a - r_b|)``, exact over the merged knots."""
    grid = np.union1d(rep_a.s, rep_b.s)
    ua, ra = rep_a(grid)
    ub, rb = rep_b(grid)
    return float(np.abs(ua - ub).max()), float(np.abs(ra - rb).max())
