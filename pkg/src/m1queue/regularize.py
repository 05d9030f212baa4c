"""Regularized parametric representations of an approximating path.

Given a limit path ``x``, an approximation ``xn`` and a tolerance ``eps``,
:func:`regularize` builds a representation ``(un_t, rn_t)`` of ``xn`` whose
time component has slope at most ``3T``, stays close to the canonical
``r`` of ``x`` in the L1 norm of derivatives, and is uniformly close to the
canonical representation ``(u, r)`` of ``x``.

The domain ``[0, 1]`` is split into ``4m + 1`` pieces around the ``m`` jumps
of ``x`` larger than ``eps1 = eps / 10``:

* large-jump pieces (the flat spots of ``r`` at those jumps), where ``rn_t``
  follows a given representation ``(un, rn)`` of ``xn`` at evenly spaced
  anchor points;
* short connecting pieces on either side, where ``rn_t`` is linear between
  the two regimes;
* small-jump pieces, where ``rn_t`` equals ``r`` except for short flat spots
  inserted for jumps of ``xn`` that ``x`` lacks.

Every flat spot of ``rn`` is given a flat spot of ``rn_t`` at the same
level, so ``rn_t = rn o phi`` for a nondecreasing ``phi`` and the spatial
part is ``un_t = un o phi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .metric import aligned_rep, m1_distance
from .paths import (
    CadlagPath,
    DomainError,
    j_max,
    jumps,
    oscillation,
    oscillation_left,
    uniform_dist,
    ws_osc,
)
from .reps import (
    ParametricRep,
    canonical_rep,
    find_flat_spots,
    l1_deriv_dist,
    rep_sup_dist,
)

__all__ = [
    "InfeasiblePartitionError",
    "Interval",
    "NotConvergedError",
    "PartitionSpec",
    "PhiMap",
    "RegularizeError",
    "RegularizedRep",
    "RepFragment",
    "UnsupportedInputError",
    "build_partition",
    "build_phi",
    "regularize",
    "regularize_case1",
    "regularize_case2",
    "regularize_case3",
]

MAX_HALVINGS = 60
SLOPE_SLACK = 1e-9


class RegularizeError(DomainError):
    """Base class for regularizer failures."""


class UnsupportedInputError(RegularizeError):
    pass


class InfeasiblePartitionError(RegularizeError):
    pass


class NotConvergedError(RegularizeError):
    """``xn`` is not yet close enough to ``x`` for the construction."""

    def __init__(self, condition: str, detail: str = ""):
        self.condition = condition
        super().__init__(f"not converged enough: {condition}" + (f" ({detail})" if detail else ""))


@dataclass(frozen=True)
class Interval:
    kind: str  # "large", "connect" or "small"
    lo: float
    hi: float
    j: int  # jump index for large/connect pieces, gap index for small ones
    side: str | None = None  # "lower" or "upper" for connecting pieces


@dataclass(frozen=True)
class PartitionSpec:
    eps: float
    eps1: float
    eps2: float
    eps3: float
    eps4: float
    times: tuple[float, ...]
    sizes: tuple[float, ...]
    anchors: tuple[int, ...]
    widths: tuple[float, ...]
    s_flat: tuple[tuple[float, float], ...]
    s_minus: tuple[float, ...]
    s_plus: tuple[float, ...]
    intervals: tuple[Interval, ...]
    halvings: tuple[int, int]

    @property
    def m(self) -> int:
        return len(self.times)


def _inverse_point(s: np.ndarray, r: np.ndarray, level: float) -> float:
    """The ``s`` with ``r(s) = level`` for a level that is not a flat spot."""
    k = int(np.searchsorted(r, level, side="right")) - 1
    k = min(max(k, 0), r.size - 2)
    if r[k + 1] == r[k]:
        return float(s[k])
    frac = (level - r[k]) / (r[k + 1] - r[k])
    return float(s[k] + min(max(frac, 0.0), 1.0) * (s[k + 1] - s[k]))


def build_partition(
    x: CadlagPath, rep: ParametricRep, eps: float, avoid: np.ndarray | None = None
) -> PartitionSpec:
    """Choose ``eps1`` to ``eps4`` and split ``[0, 1]`` into ``4m + 1`` pieces.

    ``eps2`` is halved from ``eps1 / 2`` until the large jumps are separated
    by ``4 eps2``, ``x`` oscillates by less than ``eps1 / 2`` within
    ``3 eps2`` on either side of each (the left window stops short of the
    jump), ``t_j +- 2 eps2`` are points of increase of ``r`` (and avoid the
    times in ``avoid``), and the connecting pieces are no longer than
    ``eps1 / (6 m T)``.  ``eps4`` is halved from ``eps3`` until
    ``ws_osc(x, eps4) < eps1``.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if x.jump_values[-1] != 0:
        raise UnsupportedInputError("unsupported: jump at horizon")
    T = x.T
    eps1 = eps / 10
    big = jumps(x, eps1)
    times = np.array([j.t for j in big])
    sizes = np.array([j.size for j in big])
    m = times.size
    flats = {f.t: (f.s1, f.s2) for f in rep.flat_spots}
    s_flat = [flats[t] for t in times]
    forbid = x.knots[x.jump_values != 0]
    if avoid is not None and len(avoid):
        forbid = np.union1d(forbid, np.asarray(avoid, dtype=float))
    short = eps1 / (6 * m * T) if m else math.inf

    def feasible(e2):
        if m == 0:
            return True
        if not (times[0] - 2 * e2 > 0 and times[-1] + 2 * e2 < T):
            return False
        if np.any(times[:-1] + 2 * e2 >= times[1:] - 2 * e2):
            return False
        for t in times:
            if oscillation(x, t, min(t + 3 * e2, T)) >= eps1 / 2:
                return False
            if oscillation_left(x, max(t - 3 * e2, 0.0), t) >= eps1 / 2:
                return False
            if forbid.size and np.min(np.abs(forbid - (t - 2 * e2))) < 1e-12:
                return False
            if forbid.size and np.min(np.abs(forbid - (t + 2 * e2))) < 1e-12:
                return False
        for t, (s1, s2) in zip(times, s_flat):
            if s1 - _inverse_point(rep.s, rep.r, t - 2 * e2) > short:
                return False
            if _inverse_point(rep.s, rep.r, t + 2 * e2) - s2 > short:
                return False
        return True

    e2 = eps1 / 2
    for h2 in range(MAX_HALVINGS + 1):
        if feasible(e2):
            break
        e2 /= 2
    else:
        raise InfeasiblePartitionError("no eps2 found: large jumps too close together")

    anchors = [max(1, math.ceil(2 * sz / e2)) for sz in sizes]
    widths = [(s2 - s1) / n for (s1, s2), n in zip(s_flat, anchors)]
    eps3 = min(e2 / (2 * m), T * min(widths) / 2) if m else e2 / 2
    e4 = eps3
    for h4 in range(MAX_HALVINGS + 1):
        if ws_osc(x, e4) < eps1:
            break
        e4 /= 2
    else:
        raise InfeasiblePartitionError("no eps4 found with ws_osc(x, eps4) < eps1")

    s_minus = [_inverse_point(rep.s, rep.r, t - 2 * e2) for t in times]
    s_plus = [_inverse_point(rep.s, rep.r, t + 2 * e2) for t in times]
    intervals = []
    cur = 0.0
    for j in range(m):
        intervals.append(Interval("small", cur, s_minus[j], j))
        intervals.append(Interval("connect", s_minus[j], s_flat[j][0], j, "lower"))
        intervals.append(Interval("large", s_flat[j][0], s_flat[j][1], j))
        intervals.append(Interval("connect", s_flat[j][1], s_plus[j], j, "upper"))
        cur = s_plus[j]
    intervals.append(Interval("small", cur, 1.0, m))
    return PartitionSpec(
        eps=eps,
        eps1=eps1,
        eps2=e2 if m else eps1 / 2,
        eps3=eps3,
        eps4=e4,
        times=tuple(float(t) for t in times),
        sizes=tuple(float(z) for z in sizes),
        anchors=tuple(anchors),
        widths=tuple(widths),
        s_flat=tuple(s_flat),
        s_minus=tuple(s_minus),
        s_plus=tuple(s_plus),
        intervals=tuple(intervals),
        halvings=(h2, h4),
    )


# -- construction of the time component -----------------------------------------------


@dataclass
class _Fragment:
    interval: Interval
    inserted: list = field(default_factory=list)  # (level, length, mode)
    max_slope: float = 0.0


class _TimeBuilder:
    def __init__(self, rep: ParametricRep, rep_n: ParametricRep, spec: PartitionSpec):
        self.rep = rep
        self.rep_n = rep_n
        self.spec = spec
        self.T = rep.T
        self.n_flats = {f.t: f for f in rep_n.flat_spots}
        self.n_levels = np.array(sorted(self.n_flats))
        self.placed: set[float] = set()
        self.s = [0.0]
        self.r = [0.0]

    # helpers
    def r_at(self, s):
        return float(np.interp(s, self.rep.s, self.rep.r))

    def rn_at(self, s):
        return float(np.interp(s, self.rep_n.s, self.rep_n.r))

    def needed(self, A, B, closed):
        lv = self.n_levels
        sel = (lv >= A) & ((lv <= B) if closed else (lv < B))
        return [float(t) for t in lv[sel] if t not in self.placed]

    def emit(self, s, r):
        if s < self.s[-1]:
            if self.s[-1] - s > 1e-12:
                raise AssertionError("knots out of order")
            s = self.s[-1]
        if s == self.s[-1]:
            if abs(r - self.r[-1]) > 1e-12 * (1 + abs(r)):
                raise AssertionError("conflicting values at one knot")
            return
        if r < self.r[-1]:
            r = self.r[-1]
        self.s.append(float(s))
        self.r.append(float(r))

    def mark_constant(self, level):
        if level in self.n_flats:
            self.placed.add(level)

    def ramp(self, p, q, A, B, flats, frag):
        """Linear rise from ``(p, A)`` to ``(q, B)`` with flat spots at the given levels."""
        F = sum(f for _, f in flats)
        rise = q - p - F
        slope = (B - A) / rise if B > A else 0.0
        frag.max_slope = max(frag.max_slope, slope)
        s, level = p, A
        for tau, f in flats:
            if slope > 0:
                s += (tau - level) / slope
            self.emit(s, tau)
            s += f
            self.emit(s, tau)
            self.placed.add(tau)
            level = tau
        self.emit(q, B)

    def share(self, levels, total):
        w = np.array([self.n_flats[t].length for t in levels])
        return list(zip(levels, total * w / w.sum()))

    # the three kinds of pieces
    def large(self, iv: Interval, frag: _Fragment):
        j = iv.j
        n = self.spec.anchors[j]
        S = iv.lo + (iv.hi - iv.lo) * np.arange(n + 1) / n
        S[-1] = iv.hi
        R = np.interp(S, self.rep_n.s, self.rep_n.r)
        cap = 2 * self.T
        for k in range(n):
            A, B = float(R[k]), float(max(R[k + 1], R[k]))
            w = S[k + 1] - S[k]
            if B == A:
                self.emit(S[k + 1], A)
                self.mark_constant(A)
                continue
            need = self.needed(A, B, closed=False)
            free = w - (B - A) / cap
            if free < -SLOPE_SLACK * w or (need and free <= 0):
                raise NotConvergedError(
                    "rn rises faster than 2T between anchor points",
                    f"jump {j}, anchor {k}: slope {(B - A) / w:.4g} vs {cap:.4g}",
                )
            flats = self.share(need, min(w / 2, free)) if need else []
            frag.inserted += [(t, f, "anchor") for t, f in flats]
            self.ramp(S[k], S[k + 1], A, B, flats, frag)

    def connect(self, iv: Interval, frag: _Fragment):
        p, q = iv.lo, iv.hi
        if iv.side == "lower":
            A, B = self.r_at(p), self.rn_at(q)
            if not B > A:
                raise NotConvergedError(
                    "rn at the start of a large-jump flat spot is not above t_j - 2 eps2",
                    f"jump {iv.j}: {B:.6g} <= {A:.6g}",
                )
        else:
            A, B = self.rn_at(p), self.r_at(q)
            if not B > A:
                raise NotConvergedError(
                    "rn at the end of a large-jump flat spot is not below t_j + 2 eps2",
                    f"jump {iv.j}: {A:.6g} >= {B:.6g}",
                )
        cap = 3 * self.T
        need = self.needed(A, B, closed=False)
        free = (q - p) - (B - A) / cap
        if free < -SLOPE_SLACK * (q - p) or (need and free <= 0):
            raise NotConvergedError(
                "connecting piece would need slope above 3T",
                f"jump {iv.j} {iv.side}: rise {B - A:.4g} over {q - p:.4g}",
            )
        flats = self.share(need, min((q - p) / 6, free)) if need else []
        frag.inserted += [(t, f, "connect") for t, f in flats]
        self.ramp(p, q, A, B, flats, frag)

    def small(self, iv: Interval, frag: _Fragment):
        p, q = iv.lo, iv.hi
        rep, T, spec = self.rep, self.T, self.spec
        inside = (rep.s > p) & (rep.s < q)
        ks = np.concatenate(([p], rep.s[inside], [q]))
        rs = np.interp(ks, rep.s, rep.r)
        if q == 1.0:
            rs[-1] = T
        A, B = float(rs[0]), float(rs[-1])
        r_flats = [f for f in rep.flat_spots if f.s1 >= p and f.s2 <= q and f.s2 > f.s1]
        r_levels = {f.t for f in r_flats}
        need = []
        for t in self.needed(A, B, closed=(q == 1.0)):
            if t in r_levels:
                self.placed.add(t)
            else:
                need.append(t)
        for t in r_levels:
            self.mark_constant(t)
        # group the needed levels by the rise run of r that contains them
        groups: dict[int, list[float]] = {}
        hosts = sorted(r_flats, key=lambda f: f.s1)
        for t in need:
            s_at = _inverse_point(rep.s, rep.r, t)
            idx = next((i for i, f in enumerate(hosts) if f.s1 >= s_at), len(hosts))
            groups.setdefault(idx, []).append(t)
        k_total = len(need)
        plan = []  # (run_start, run_end, host or None, [(tau, f)])
        for idx, taus in sorted(groups.items()):
            a = hosts[idx - 1].s2 if idx > 0 else p
            if idx < len(hosts):
                host = hosts[idx]
                b, cap = host.s1, host.length / 2
            else:
                host, b = None, q
                cap = (q - a) / 3
            kg = len(taus)
            f = min(spec.eps1 / (6 * T * k_total), spec.eps4 / (4 * T * kg), cap / kg)
            if not f > 0:
                raise NotConvergedError("no room to insert a flat spot in a small-jump piece")
            plan.append((a, b, host, [(t, f) for t in sorted(taus)]))
            mode = "transplant" if host is not None else "steepen"
            frag.inserted += [(t, f, mode) for t in sorted(taus)]

        out = list(zip(ks.tolist(), rs.tolist()))
        for a, b, host, flats in plan:
            F = sum(f for _, f in flats)
            kappa = 1.0 if host is not None else (b - a - F) / (b - a)
            levels = np.array([t for t, _ in flats])
            cum = np.concatenate(([0.0], np.cumsum([f for _, f in flats])))

            def shift(s, r_val):
                return a + (s - a) * kappa + cum[int(np.searchsorted(levels, r_val, side="left"))]

            new = []
            for s, r_val in out:
                if a <= s <= b:
                    new.append((shift(s, r_val), r_val))
                else:
                    new.append((s, r_val))
            for i, (t, f) in enumerate(flats):
                s_at = _inverse_point(rep.s, rep.r, t)
                s0 = a + (s_at - a) * kappa + cum[i]
                new += [(s0, t), (s0 + f, t)]
                self.placed.add(t)
            new.sort(key=lambda z: (z[0], z[1]))
            out = new
        for s, r_val in out[1:]:
            self.emit(s, r_val)
        kappas = [1.0]
        for a, b, host, flats in plan:
            if host is None:
                kappas.append((b - a - sum(f for _, f in flats)) / (b - a))
        frag.max_slope = max(frag.max_slope, 2 * T / min(kappas))

    def build(self):
        frags = []
        for iv in self.spec.intervals:
            frag = _Fragment(iv)
            getattr(self, iv.kind)(iv, frag)
            frags.append(frag)
        s = np.array(self.s)
        r = np.array(self.r)
        s[-1] = 1.0
        r[-1] = self.T
        missing = [t for t in self.n_levels if t not in self.placed]
        if missing:
            raise AssertionError(f"flat spots of rn left unmatched at levels {missing}")
        return s, r, frags


@dataclass(frozen=True)
class RepFragment:
    """Time component of the regularized representation on one piece."""

    interval: Interval
    s: np.ndarray
    r: np.ndarray
    max_slope: float
    inserted: tuple
    l1_contribution: float


def _l1_on(s_a, r_a, s_b, r_b, lo, hi) -> float:
    """``int_lo^hi |r_a' - r_b'|`` for piecewise-linear functions."""
    grid = np.union1d(s_a, s_b)
    grid = np.unique(np.concatenate(([lo, hi], grid[(grid > lo) & (grid < hi)])))
    da = np.diff(np.interp(grid, s_a, r_a))
    db = np.diff(np.interp(grid, s_b, r_b))
    return float(np.abs(da - db).sum())


def _fragment(spec: PartitionSpec, rep, rep_n, iv: Interval) -> RepFragment:
    b = _TimeBuilder(rep, rep_n, spec)
    starts_on_rn = iv.kind == "large" or (iv.kind == "connect" and iv.side == "upper")
    b.s = [iv.lo]
    b.r = [b.rn_at(iv.lo) if starts_on_rn else b.r_at(iv.lo)]
    frag = _Fragment(iv)
    getattr(b, iv.kind)(iv, frag)
    s, r = np.array(b.s), np.array(b.r)
    return RepFragment(
        iv, s, r, frag.max_slope, tuple(frag.inserted), _l1_on(s, r, rep.s, rep.r, iv.lo, iv.hi)
    )


def _pick(spec: PartitionSpec, kind: str, j: int, side: str | None = None) -> Interval:
    for iv in spec.intervals:
        if iv.kind == kind and iv.j == j and iv.side == side:
            return iv
    raise ValueError(f"no {kind} piece with index {j}" + (f" on the {side} side" if side else ""))


def regularize_case1(spec: PartitionSpec, rep, rep_n, j: int) -> RepFragment:
    """Large-jump piece ``j``: follow ``rn`` at the anchors, slope at most ``2T`` between."""
    return _fragment(spec, rep, rep_n, _pick(spec, "large", j))


def regularize_case2(spec: PartitionSpec, rep, rep_n, j: int, side: str) -> RepFragment:
    """Connecting piece on the ``"lower"`` or ``"upper"`` side of large jump ``j``."""
    if side not in ("lower", "upper"):
        raise ValueError("side must be 'lower' or 'upper'")
    return _fragment(spec, rep, rep_n, _pick(spec, "connect", j, side))


def regularize_case3(spec: PartitionSpec, rep, rep_n, j: int) -> RepFragment:
    """Small-jump piece ``j`` (``0 <= j <= m``): ``r`` with short flat spots inserted."""
    return _fragment(spec, rep, rep_n, _pick(spec, "small", j))


# -- the reparametrization ---------------------------------------------------------------


@dataclass(frozen=True)
class PhiMap:
    s: np.ndarray
    values: np.ndarray

    def __call__(self, s):
        return np.interp(s, self.s, self.values)

    @property
    def strictly_increasing(self) -> bool:
        return bool(np.all(np.diff(self.values) > 0))


def build_phi(rep_n: ParametricRep, s_t: np.ndarray, r_t: np.ndarray):
    """``phi`` with ``rn o phi = rn_t`` and the spatial part ``un o phi``.

    A flat spot of ``rn_t`` is mapped linearly onto the flat spot of ``rn``
    at the same level, or to a single point if ``rn`` has none there;
    elsewhere ``phi = rn^{-1} o rn_t``.
    """
    s_t = np.asarray(s_t, dtype=float)
    r_t = np.asarray(r_t, dtype=float)
    n_flats = {f.t: f for f in rep_n.flat_spots}
    t_flats = find_flat_spots(s_t, r_t)
    t_by_level = {f.t: f for f in t_flats}
    for level in n_flats:
        if r_t[0] <= level <= r_t[-1] and level not in t_by_level:
            raise AssertionError(f"flat spot of rn at level {level} has no partner")

    extra = []
    for sn, level in zip(rep_n.s, rep_n.r):
        if level in t_by_level:
            ft = t_by_level[level]
            fn = n_flats.get(level)
            if fn is not None and fn.length > 0:
                extra.append(ft.s1 + (sn - fn.s1) / fn.length * ft.length)
        elif r_t[0] <= level <= r_t[-1]:
            extra.append(_inverse_point(s_t, r_t, level))
    grid = np.unique(np.concatenate((s_t, np.clip(extra, 0.0, 1.0))))
    grid = grid[np.concatenate(([True], np.diff(grid) > 1e-15))]
    grid[0], grid[-1] = 0.0, 1.0

    rg = np.interp(grid, s_t, r_t)
    phi = np.empty(grid.size)
    starts = np.array([f.s1 for f in t_flats])
    for i, (s, level) in enumerate(zip(grid, rg)):
        k = int(np.searchsorted(starts, s, side="right")) - 1
        ft = t_flats[k] if k >= 0 and s <= t_flats[k].s2 else None
        if ft is not None and ft.t in n_flats:
            fn = n_flats[ft.t]
            phi[i] = fn.s1 + (s - ft.s1) / ft.length * fn.length
            rg[i] = ft.t
        else:
            if ft is not None:
                level = ft.t
                rg[i] = level
            phi[i] = _inverse_point(rep_n.s, rep_n.r, level)
    phi = np.clip(np.maximum.accumulate(phi), 0.0, 1.0)
    phi[0], phi[-1] = 0.0, 1.0
    u = np.interp(phi, rep_n.s, rep_n.u)
    return PhiMap(grid, phi), ParametricRep(grid, u, rg, rep_n.T)


# -- driver ------------------------------------------------------------------------------


@dataclass(frozen=True)
class RegularizedRep:
    rep: ParametricRep
    phi: PhiMap
    spec: PartitionSpec
    sup_slope: float
    sup_dist: float
    u_dist: float
    r_dist: float
    l1_dd: float
    contributions: dict
    per_interval: tuple[float, ...]
    inserted: tuple
    diagnostics: dict

    def bounds(self) -> dict:
        return {
            "sup_slope": self.sup_slope,
            "slope_cap": 3 * self.rep.T,
            "sup_dist": self.sup_dist,
            "u_dist": self.u_dist,
            "r_dist": self.r_dist,
            "l1_dd": self.l1_dd,
            "l1_cap": 3 * self.spec.eps1,
            "contributions": dict(self.contributions),
        }


def regularize(
    x: CadlagPath,
    xn: CadlagPath,
    eps: float,
    mesh: float | None = None,
    rep_n: ParametricRep | None = None,
) -> RegularizedRep:
    """Regularized representation of ``xn`` against the canonical one of ``x``.

    Parameters
    ----------
    x, xn : CadlagPath
        Limit path (no jump at ``T``) and approximating path.
    eps : float
        Target for ``max(||un_t - u||, ||rn_t - r||)``.
    mesh : float, optional
        Mesh for the M1 coupling that supplies ``(un, rn)``.
    rep_n : ParametricRep, optional
        Use this representation of ``xn`` instead of the coupling one.

    Raises
    ------
    UnsupportedInputError
        ``x`` jumps at ``T``.
    NotConvergedError
        ``xn`` is too far from ``x`` for the construction; the message
        names the failing condition.
    """
    if x.T != xn.T:
        raise DomainError(f"horizon mismatch: {x.T} vs {xn.T}")
    if x.jump_values[-1] != 0:
        raise UnsupportedInputError("unsupported: jump at horizon")
    rep = canonical_rep(x)
    spec = build_partition(x, rep, eps, avoid=xn.knots[xn.jump_values != 0])
    T = x.T
    if rep_n is not None:
        source, d = "given", float("nan")
    elif xn == x:
        rep_n, source, d = rep, "identity", 0.0
    else:
        d, cp = m1_distance(x, xn, mesh)
        rep_n = aligned_rep(x, xn, cp, rep)
        source = "coupling"

    s_t, r_t, frags = _TimeBuilder(rep, rep_n, spec).build()
    phi, rep_t = build_phi(rep_n, s_t, r_t)

    per = tuple(l1_deriv_dist(rep_t, rep, iv.lo, iv.hi) for iv in spec.intervals)
    contrib = {"large": 0.0, "connect": 0.0, "small": 0.0}
    for iv, v in zip(spec.intervals, per):
        contrib[iv.kind] += v
    l1 = l1_deriv_dist(rep_t, rep)
    du, dr = rep_sup_dist(rep_t, rep)
    sup_dist = max(du, dr)
    sup_slope = rep_t.slope_bound

    # conditions on the small-jump pieces
    for iv in spec.intervals:
        if iv.kind != "small":
            continue
        grid = np.union1d(rep.s, rep_t.s)
        grid = grid[(grid >= iv.lo) & (grid <= iv.hi)]
        gap = float(np.abs(rep_t(grid)[1] - rep(grid)[1]).max()) if grid.size else 0.0
        ta, tb = float(np.interp(iv.lo, rep.s, rep.r)), float(np.interp(iv.hi, rep.s, rep.r))
        jx = j_max(x, ta, tb)
        if gap > spec.eps4 * (1 + 1e-9):
            raise NotConvergedError("time component moved by more than eps4", f"{gap:.4g}")
        if j_max(xn, ta, tb) > jx + spec.eps1:
            raise NotConvergedError("xn has a jump larger than J_max(x) + eps1 off the large jumps")
        if uniform_dist(xn, x, ta, tb) > 3 * jx + spec.eps1:
            raise NotConvergedError("||xn - x|| exceeds 3 J_max(x) + eps1 off the large jumps")

    if sup_slope > 3 * T * (1 + SLOPE_SLACK):
        raise NotConvergedError("slope above 3T", f"{sup_slope:.6g}")
    if not sup_dist < eps:
        raise NotConvergedError("sup distance not below eps", f"{sup_dist:.6g} >= {eps}")
    if l1 > 3 * spec.eps1 * (1 + 1e-12):
        raise NotConvergedError("L1 derivative distance above 3 eps1", f"{l1:.6g}")

    # the triangle bound ||un o phi - u|| <= ||un - u|| + ||u o phi - u||
    un_u = max(rep_sup_dist(rep_n, rep)[0], 0.0) if source != "identity" else 0.0
    u_phi = np.interp(phi.values, rep.s, rep.u)
    u_id = np.interp(phi.s, rep.s, rep.u)
    diagnostics = {
        "rep_n_source": source,
        "coupling_cost": d,
        "coupling_within_eps3": bool(d <= spec.eps3) if not math.isnan(d) else None,
        "triangle_bound": un_u + float(np.abs(u_phi - u_id).max()),
        "phi_strictly_increasing": phi.strictly_increasing,
        "fragment_slopes": tuple(f.max_slope for f in frags),
    }
    inserted = tuple(
        (f.interval.kind, f.interval.j, lvl, length, mode)
        for f in frags
        for lvl, length, mode in f.inserted
    )
    return RegularizedRep(
        rep=rep_t,
        phi=phi,
        spec=spec,
        sup_slope=sup_slope,
        sup_dist=sup_dist,
        u_dist=du,
        r_dist=dr,
        l1_dd=l1,
        contributions=contrib,
        per_interval=per,
        inserted=inserted,
        diagnostics=diagnostics,
    )
