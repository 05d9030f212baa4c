"""Approximate M1 distance by monotone couplings of discretized graphs.

Both completed graphs are subdivided so that consecutive points are at most
``mesh`` apart in the max norm.  A discrete Frechet recursion with max-norm
point cost then gives the bottleneck value of the best monotone coupling,
and a second pass picks, among the couplings achieving that value, the one
with the least total cost (ties prefer advancing the first path).
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .paths import (
    DEFAULT_MESH_FRACTION,
    CadlagPath,
    CompletedGraph,
    DomainError,
    completed_graph,
    uniform_dist,
)
from .reps import ParametricRep

__all__ = [
    "Coupling",
    "GraphDiscretization",
    "StaleCouplingError",
    "aligned_rep",
    "coupling_to_reps",
    "default_mesh",
    "discretize_graph",
    "m1_distance",
    "m1_estimate",
]


class StaleCouplingError(ValueError):
    """The paths no longer match the ones the coupling was computed for."""


@dataclass(frozen=True)
class GraphDiscretization:
    points: np.ndarray  # (N, 2) rows of (value, time)
    segment: np.ndarray  # index of the graph segment each point lies on
    position: np.ndarray  # max-norm arclength of each point
    graph: CompletedGraph

    @property
    def values(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def times(self) -> np.ndarray:
        return self.points[:, 1]

    def __len__(self) -> int:
        return self.points.shape[0]


def default_mesh(x: CadlagPath, y: CadlagPath | None = None) -> float:
    """``1e-3 * max(T, value range)`` over the given paths."""
    vals = [x.left_values, x.right_values]
    if y is not None:
        vals += [y.left_values, y.right_values]
    v = np.concatenate(vals)
    return DEFAULT_MESH_FRACTION * max(x.T, float(v.max() - v.min()))


def discretize_graph(g: CompletedGraph, mesh: float) -> GraphDiscretization:
    """Subdivide each graph segment into ``ceil(length / mesh)`` equal pieces."""
    if not mesh > 0:
        raise ValueError(f"mesh must be positive, got {mesh}")
    V = g.vertices
    lengths = g.segment_lengths()
    pieces = np.maximum(np.ceil(lengths / mesh).astype(np.int64), 1)
    pieces[lengths == 0] = 1
    total = int(pieces.sum()) + 1
    seg = np.repeat(np.arange(lengths.size), pieces)
    offs = np.arange(total - 1) - np.repeat(np.cumsum(pieces) - pieces, pieces)
    frac = offs / pieces[seg]
    a, b = V[seg], V[seg + 1]
    pts = a + (b - a) * frac[:, None]
    pts = np.where(a == b, a, pts)
    pts = np.vstack((pts, V[-1:]))
    seg = np.append(seg, max(lengths.size - 1, 0))
    cum = g.arclength()
    pos = np.append(cum[seg[:-1]] + lengths[seg[:-1]] * frac, cum[-1])
    return GraphDiscretization(pts, seg, pos, g)


# -- dynamic programs ----------------------------------------------------------------


@numba.njit(cache=True)
def _band_frechet(P, Q, lo, hi):
    """Bottleneck value over monotone couplings restricted to ``lo[i] <= j <= hi[i]``."""
    N = P.shape[0]
    inf = np.inf
    width = 0
    for i in range(N):
        width = max(width, hi[i] - lo[i] + 1)
    prev = np.full(width, inf)
    cur = np.full(width, inf)
    plo, phi = 0, -1
    for i in range(N):
        a, b = lo[i], hi[i]
        for j in range(a, b + 1):
            c = max(abs(P[i, 0] - Q[j, 0]), abs(P[i, 1] - Q[j, 1]))
            if i == 0 and j == 0:
                best = 0.0
            else:
                best = inf
                if plo <= j <= phi:
                    best = prev[j - plo]
                if j - 1 >= plo and j - 1 <= phi and prev[j - 1 - plo] < best:
                    best = prev[j - 1 - plo]
                if j - 1 >= a and cur[j - 1 - a] < best:
                    best = cur[j - 1 - a]
            cur[j - a] = max(c, best)
        prev, cur = cur, prev
        plo, phi = a, b
    if phi == Q.shape[0] - 1:
        return prev[phi - plo]
    return inf


@numba.njit(cache=True)
def _band_coupling(P, Q, lo, hi, bound):
    """Least total cost monotone coupling using only cells with cost <= bound.

    Back-pointers: 0 = advance first path, 1 = diagonal, 2 = advance second.
    """
    N = P.shape[0]
    inf = np.inf
    offs = np.zeros(N + 1, dtype=np.int64)
    for i in range(N):
        offs[i + 1] = offs[i] + hi[i] - lo[i] + 1
    acc = np.full(offs[N], inf)
    back = np.full(offs[N], -1, dtype=np.int8)
    for i in range(N):
        a, b = lo[i], hi[i]
        for j in range(a, b + 1):
            c = max(abs(P[i, 0] - Q[j, 0]), abs(P[i, 1] - Q[j, 1]))
            if c > bound:
                continue
            k = offs[i] + j - a
            if i == 0 and j == 0:
                acc[k] = c
                continue
            best = inf
            move = -1
            if i > 0:
                pa, pb = lo[i - 1], hi[i - 1]
                if pa <= j <= pb and acc[offs[i - 1] + j - pa] < best:
                    best = acc[offs[i - 1] + j - pa]
                    move = 0
                if pa <= j - 1 <= pb and acc[offs[i - 1] + j - 1 - pa] < best:
                    best = acc[offs[i - 1] + j - 1 - pa]
                    move = 1
            if j - 1 >= a and acc[k - 1] < best:
                best = acc[k - 1]
                move = 2
            if move >= 0:
                acc[k] = best + c
                back[k] = move
    M = Q.shape[0]
    if hi[N - 1] != M - 1 or acc[offs[N] - 1] == inf:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    ii = np.empty(N + M, dtype=np.int64)
    jj = np.empty(N + M, dtype=np.int64)
    i, j, n = N - 1, M - 1, 0
    while True:
        ii[n] = i
        jj[n] = j
        n += 1
        if i == 0 and j == 0:
            break
        mv = back[offs[i] + j - lo[i]]
        if mv == 0:
            i -= 1
        elif mv == 1:
            i -= 1
            j -= 1
        else:
            j -= 1
    return ii[:n][::-1].copy(), jj[:n][::-1].copy()


def _band(P: np.ndarray, Q: np.ndarray, radius: float):
    """Index window of ``Q`` whose times lie within ``radius`` of each ``P`` time."""
    tq = Q[:, 1]
    lo = np.searchsorted(tq, P[:, 1] - radius, side="left")
    hi = np.searchsorted(tq, P[:, 1] + radius, side="right") - 1
    lo = np.maximum.accumulate(np.minimum(lo, len(tq) - 1))
    hi = np.maximum(hi, lo)
    lo[0] = 0
    hi[-1] = len(tq) - 1
    # keep the window connected from one row to the next
    hi = np.maximum(hi, np.concatenate((lo[1:] - 1, [len(tq) - 1])))
    hi = np.maximum.accumulate(hi)
    return lo.astype(np.int64), hi.astype(np.int64)


def _bottleneck(P: np.ndarray, Q: np.ndarray, upper: float):
    """Exact discrete bottleneck value; the time window starts at ``upper``."""
    radius = upper
    span = max(P[-1, 1], Q[-1, 1])
    while True:
        lo, hi = _band(P, Q, radius * (1 + 1e-12) + 1e-15)
        val = _band_frechet(P, Q, lo, hi)
        if val <= radius or radius > span:
            return float(val), lo, hi
        radius = max(2 * radius, val)


@dataclass(frozen=True)
class Coupling:
    """Monotone staircase ``(i[k], j[k])`` through the two discretizations."""

    i: np.ndarray
    j: np.ndarray
    cost: float
    mesh: float
    first: GraphDiscretization
    second: GraphDiscretization
    fingerprints: tuple[bytes, bytes]

    def __len__(self) -> int:
        return self.i.size

    def pair_costs(self) -> np.ndarray:
        d = np.abs(self.first.points[self.i] - self.second.points[self.j])
        return d.max(axis=1)


def _prepare(x: CadlagPath, y: CadlagPath, mesh: float | None):
    if x.T != y.T:
        raise DomainError(f"horizon mismatch: {x.T} vs {y.T}")
    if mesh is None:
        mesh = default_mesh(x, y)
    if not mesh > 0:
        raise ValueError(f"mesh must be positive, got {mesh}")
    dx = discretize_graph(completed_graph(x), mesh)
    dy = discretize_graph(completed_graph(y), mesh)
    upper = uniform_dist(x, y) + 2 * mesh
    return mesh, dx, dy, upper


def m1_estimate(x: CadlagPath, y: CadlagPath, mesh: float | None = None) -> float:
    """Discrete M1 estimate without building the coupling."""
    mesh, dx, dy, upper = _prepare(x, y, mesh)
    return _bottleneck(dx.points, dy.points, upper)[0]


def m1_distance(x: CadlagPath, y: CadlagPath, mesh: float | None = None) -> tuple[float, Coupling]:
    """M1 distance estimate and an optimal coupling.

    Returns
    -------
    estimate : float
        Minimum over monotone couplings of the largest matched-pair
        distance ``max(|dvalue|, |dtime|)``.
    coupling : Coupling
        A coupling achieving the estimate.
    """
    mesh, dx, dy, upper = _prepare(x, y, mesh)
    val, lo, hi = _bottleneck(dx.points, dy.points, upper)
    ii, jj = _band_coupling(dx.points, dy.points, lo, hi, val)
    if ii.size == 0:  # pragma: no cover - the bottleneck pass guarantees a path
        raise RuntimeError("coupling reconstruction failed")
    cp = Coupling(ii, jj, val, mesh, dx, dy, (x.fingerprint(), y.fingerprint()))
    return val, cp


def _check_fresh(x: CadlagPath, y: CadlagPath, coupling: Coupling):
    if (x.fingerprint(), y.fingerprint()) != coupling.fingerprints:
        raise StaleCouplingError("coupling was computed for different paths")


def coupling_to_reps(
    x: CadlagPath, y: CadlagPath, coupling: Coupling
) -> tuple[ParametricRep, ParametricRep]:
    """Parametric representations traced out by a coupling.

    Step ``k`` of the coupling becomes the knot ``s = k / (K - 1)`` of both
    representations, so their sup distance is the coupling cost.
    """
    _check_fresh(x, y, coupling)
    K = len(coupling)
    if K == 1:
        s = np.array([0.0, 1.0])
        idx_i = np.array([0, 0])
        idx_j = np.array([0, 0])
    else:
        s = np.arange(K) / (K - 1)
        s[-1] = 1.0
        idx_i, idx_j = coupling.i, coupling.j
    px = coupling.first.points[idx_i]
    py = coupling.second.points[idx_j]
    return (
        ParametricRep(s, px[:, 0], px[:, 1], x.T),
        ParametricRep(s, py[:, 0], py[:, 1], y.T),
    )


def aligned_rep(
    x: CadlagPath,
    y: CadlagPath,
    coupling: Coupling,
    rep_x: ParametricRep,
    tilt: float = 1e-7,
) -> ParametricRep:
    """Representation of ``y`` matched to a given representation of ``x``.

    Each ``s`` is sent through ``rep_x`` to an arclength position on the graph
    of ``x``, then through the coupling to a position on the graph of ``y``.
    Both coupling position sequences are tilted towards uniform speed by
    ``tilt`` so that they are strictly increasing; the result has flat spots
    only at jumps of ``y`` (and wherever ``rep_x`` pauses), and stays within
    ``coupling.cost + tilt * (Lx + Ly)`` of ``rep_x``.
    """
    _check_fresh(x, y, coupling)
    if not 0 < tilt < 1:
        raise ValueError("tilt must lie in (0, 1)")
    gx, gy = coupling.first.graph, coupling.second.graph
    Lx, Ly = gx.arclength()[-1], gy.arclength()[-1]
    K = len(coupling)
    kappa = np.arange(K) / max(K - 1, 1)
    cx = (1 - tilt) * coupling.first.position[coupling.i] + tilt * Lx * kappa
    cy = (1 - tilt) * coupling.second.position[coupling.j] + tilt * Ly * kappa
    if K == 1:
        kappa = np.array([0.0, 1.0])
        cx = np.array([0.0, Lx])
        cy = np.array([0.0, Ly])

    sx = _rep_positions(gx, rep_x)  # arclength of rep_x at its knots
    # breakpoints of the composite map, pulled back to s
    targets_y = np.concatenate((cy, gy.arclength()))
    k_y = np.interp(targets_y, cy, kappa) if Ly > 0 else np.zeros_like(targets_y)
    pos_x = np.concatenate((cx, np.interp(k_y, kappa, cx)))
    s_new = _pull_back(sx, rep_x.s, pos_x)
    s = np.unique(np.concatenate((rep_x.s, s_new)))
    s = s[(s >= 0) & (s <= 1)]
    px = np.interp(s, rep_x.s, sx)
    kk = np.interp(px, cx, kappa) if Lx > 0 else np.interp(s, [0.0, 1.0], [0.0, 1.0])
    py = _snap(np.interp(kk, kappa, cy), gy.arclength())
    pts = gy.point_at(py)
    u, r = pts[:, 0], pts[:, 1]
    r[0], r[-1] = 0.0, y.T
    s, u, r = _dedupe(s, u, r)
    return ParametricRep(s, u, r, y.T)


def _rep_positions(g: CompletedGraph, rep: ParametricRep) -> np.ndarray:
    """Arclength positions of a representation's knots along its graph."""
    cum = g.arclength()
    V = g.vertices
    pos = np.empty(rep.s.size)
    seg = 0
    nseg = V.shape[0] - 1
    for k in range(rep.s.size):
        q = np.array([rep.u[k], rep.r[k]])
        # advance to the first segment, from the current one, containing q
        best, best_d = seg, np.inf
        for m in range(seg, nseg):
            a, b = V[m], V[m + 1]
            d = b - a
            L = np.abs(d).max()
            p = 0.0 if L == 0 else float(np.clip(np.dot(q - a, d) / np.dot(d, d), 0.0, 1.0))
            dist = np.abs(a + p * d - q).max()
            if dist < best_d - 1e-15:
                best, best_d = m, dist
                best_p = p
            if dist <= 1e-12 or a[1] > q[1] + 1e-12:
                break
        if nseg == 0:
            pos[k] = 0.0
            continue
        seg = best
        pos[k] = cum[best] + best_p * (cum[best + 1] - cum[best])
    return np.maximum.accumulate(pos)


def _pull_back(pos_knots: np.ndarray, s_knots: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Smallest ``s`` at which a nondecreasing piecewise-linear position reaches each target."""
    targets = np.asarray(targets, dtype=float)
    k = np.clip(np.searchsorted(pos_knots, targets, side="left"), 1, pos_knots.size - 1)
    a, b = pos_knots[k - 1], pos_knots[k]
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(b > a, (targets - a) / np.where(b > a, b - a, 1.0), 0.0)
    out = s_knots[k - 1] + np.clip(frac, 0.0, 1.0) * (s_knots[k] - s_knots[k - 1])
    out = np.where(targets <= pos_knots[0], s_knots[0], out)
    return np.where(targets >= pos_knots[-1], _first_at_end(pos_knots, s_knots), out)


def _snap(pos: np.ndarray, vertices: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Move positions within ``tol`` of a graph vertex onto it.

    Where the coupling stalls on one graph, the tilted positions advance by
    tiny steps and interpolation error is amplified on the other graph.
    """
    k = np.clip(np.searchsorted(vertices, pos), 1, vertices.size - 1)
    near = np.where(pos - vertices[k - 1] < vertices[k] - pos, vertices[k - 1], vertices[k])
    out = np.where(np.abs(pos - near) <= tol, near, pos)
    return np.maximum.accumulate(out)


def _first_at_end(pos_knots, s_knots):
    return s_knots[int(np.searchsorted(pos_knots, pos_knots[-1], side="left"))]


def _dedupe(s, u, r, gap: float = 1e-14):
    keep = np.concatenate(([True], np.diff(s) > gap))
    keep[-1] = True
    if not keep[-2] and s.size > 2:
        # merge a near-duplicate just before s = 1 into the endpoint
        keep[-2] = False
    s, u, r = s[keep], u[keep], r[keep]
    s[0], s[-1] = 0.0, 1.0
    return s, u, r
