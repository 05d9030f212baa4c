"""The integral map ``y = x + int_0^t h(y(s)) ds`` for Lipschitz ``h``.

Between knots of ``x`` the equation is integrated with the implicit
trapezoidal rule, each step solved by fixed-point iteration; at every knot
the jump of ``x`` is added to ``y`` unchanged, so the two paths jump at the
same times by exactly the same amounts.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numba
import numpy as np

from .paths import CadlagPath, DomainError, uniform_dist

__all__ = [
    "ContinuityRow",
    "LipschitzDrift",
    "SolveReport",
    "check_lipschitz",
    "continuity_experiment",
    "gronwall_bound",
    "parse_drift",
    "solve_map",
]

PICARD_TOL = 1e-12
MAX_PICARD = 200

_ZERO, _LINEAR, _QED, _GENERIC = 0, 1, 2, 3


@dataclass(frozen=True)
class LipschitzDrift:
    """Drift ``h`` with declared Lipschitz constant ``c``.

    ``fn`` must be stateless and accept numpy arrays.  The built-in
    factories also carry a ``code``/``params`` pair that selects a compiled
    solver kernel.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    c: float
    name: str
    code: int = _GENERIC
    params: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if not (np.isfinite(self.c) and self.c >= 0):
            raise ValueError("Lipschitz constant must be finite and nonnegative")

    def __call__(self, w):
        return self.fn(np.asarray(w, dtype=float))

    @classmethod
    def zero(cls) -> "LipschitzDrift":
        return cls(lambda w: np.zeros_like(w), 0.0, "zero", _ZERO, ())

    @classmethod
    def linear(cls, c: float = 1.0) -> "LipschitzDrift":
        """``h(w) = -c w``."""
        c = float(c)
        return cls(lambda w: -c * w, abs(c), f"linear:c={c:g}", _LINEAR, (c,))

    @classmethod
    def qed(cls, mu: float = 1.0, theta: float = 1.0) -> "LipschitzDrift":
        """``h(w) = -mu min(w, 0) - theta max(w, 0)``."""
        mu, theta = float(mu), float(theta)
        if mu < 0 or theta < 0:
            raise ValueError("mu and theta must be nonnegative")
        return cls(
            lambda w: -mu * np.minimum(w, 0.0) - theta * np.maximum(w, 0.0),
            max(mu, theta),
            f"qed:mu={mu:g},theta={theta:g}",
            _QED,
            (mu, theta),
        )


def parse_drift(text: str) -> LipschitzDrift:
    """Parse ``zero``, ``linear:c=1`` or ``qed:mu=1,theta=1``."""
    kind, _, rest = text.partition(":")
    kw = {}
    if rest:
        for item in rest.split(","):
            key, eq, val = item.partition("=")
            if not eq:
                raise ValueError(f"malformed drift parameter {item!r}")
            kw[key.strip()] = float(val)
    kind = kind.strip()
    try:
        if kind == "zero" and not kw:
            return LipschitzDrift.zero()
        if kind == "linear":
            return LipschitzDrift.linear(**kw)
        if kind == "qed":
            return LipschitzDrift.qed(**kw)
    except TypeError as exc:
        raise ValueError(f"bad parameters for drift {kind!r}: {exc}") from None
    raise ValueError(f"unknown drift {text!r}; expected zero, linear:c=.. or qed:mu=..,theta=..")


@dataclass(frozen=True)
class SolveReport:
    y: CadlagPath
    step: float
    error_bound: float
    max_iterations: int


@numba.njit(cache=True)
def _h(code, p0, p1, w):
    if code == 0:
        return 0.0
    if code == 1:
        return -p0 * w
    if w < 0.0:
        return -p0 * w
    return -p1 * w


@numba.njit(cache=True)
def _picard_kernel(code, p0, p1, times, dx, jump_idx, jumps, y0):
    """Trapezoid steps on a fixed grid; ``dx[i]`` is the continuous increment of x."""
    n = times.size
    y = np.empty(n)
    y[0] = y0
    it_max = 0
    ji = 0
    for i in range(n - 1):
        yi = y[i]
        if ji < jump_idx.size and jump_idx[ji] == i:
            # y[i] holds the left limit; the jump is stored separately
            yi = yi + jumps[ji]
            ji += 1
        dt = times[i + 1] - times[i]
        base = yi + dx[i] + 0.5 * dt * _h(code, p0, p1, yi)
        z = base + 0.5 * dt * _h(code, p0, p1, yi)
        it = 0
        while True:
            znew = base + 0.5 * dt * _h(code, p0, p1, z)
            it += 1
            if abs(znew - z) <= 1e-12 * (1.0 + abs(znew)) or it >= 200:
                z = znew
                break
            z = znew
        y[i + 1] = z
        it_max = max(it_max, it)
    return y, it_max


def _picard_python(h, times, dx, jump_idx, jumps, y0):
    n = times.size
    y = np.empty(n)
    y[0] = y0
    it_max = 0
    ji = 0
    for i in range(n - 1):
        yi = y[i]
        if ji < jump_idx.size and jump_idx[ji] == i:
            yi = yi + jumps[ji]
            ji += 1
        dt = times[i + 1] - times[i]
        hi = float(h(yi))
        if not math.isfinite(hi):
            raise DomainError(f"drift returned a non-finite value at w={yi}")
        base = yi + dx[i] + 0.5 * dt * hi
        z = base + 0.5 * dt * hi
        for it in range(1, MAX_PICARD + 1):
            hz = float(h(z))
            if not math.isfinite(hz):
                raise DomainError(f"drift returned a non-finite value at w={z}")
            znew = base + 0.5 * dt * hz
            if abs(znew - z) <= PICARD_TOL * (1.0 + abs(znew)):
                z = znew
                break
            z = znew
        y[i + 1] = z
        it_max = max(it_max, it)
    return y, it_max


def _grid(x: CadlagPath, width: float):
    """Sub-grid refining the knots of ``x`` so that no cell exceeds ``width``."""
    t = x.knots
    gaps = np.diff(t)
    pieces = np.maximum(np.ceil(gaps / width - 1e-9).astype(np.int64), 1)
    idx = np.repeat(np.arange(gaps.size), pieces)
    offs = np.arange(idx.size) - np.repeat(np.cumsum(pieces) - pieces, pieces)
    times = np.append(t[idx] + gaps[idx] * (offs / pieces[idx]), t[-1])
    knot_pos = np.append(np.cumsum(pieces) - pieces, idx.size)  # grid index of each knot
    # continuous increment of x over each cell (x is affine between knots)
    a = x.right_values[idx]
    b = x.left_values[idx + 1]
    frac0 = offs / pieces[idx]
    frac1 = (offs + 1) / pieces[idx]
    dx = np.where(a == b, 0.0, (b - a) * (frac1 - frac0))
    return times, dx, knot_pos


def solve_map(x: CadlagPath, h: LipschitzDrift, step: float = 1e-3) -> SolveReport:
    """Solve ``y(t) = x(t) + int_0^t h(y(s)) ds`` on ``[0, T]``.

    Parameters
    ----------
    x : CadlagPath
        Input path.
    h : LipschitzDrift
        Drift; sub-steps are capped at ``1 / (2 c)`` so the fixed-point
        iteration contracts.
    step : float
        Largest sub-step.

    Returns
    -------
    SolveReport
        Piecewise-linear ``y`` whose jump array is copied from ``x``, the
        step used and an a-posteriori error bound.
    """
    if not step > 0:
        raise ValueError(f"step must be positive, got {step}")
    if h.code == _ZERO:
        return SolveReport(x, step, 0.0, 0)
    width = step if h.c == 0 else min(step, 1.0 / (2.0 * h.c))
    times, dx, knot_pos = _grid(x, width)
    jump_k = np.flatnonzero(x.jump_values != 0)
    jump_idx = knot_pos[jump_k].astype(np.int64)
    jumps = x.jump_values[jump_k].copy()
    y0 = float(x.right_values[0])
    if h.code == _GENERIC:
        yl, iters = _picard_python(h, times, dx, jump_idx, jumps, y0)
    else:
        p = tuple(h.params) + (0.0,) * (2 - len(h.params))
        if h.code == _QED:
            p0, p1 = p
        else:
            p0, p1 = p[0], p[0]
        yl, iters = _picard_kernel(h.code, p0, p1, times, dx, jump_idx, jumps, y0)
    if not np.all(np.isfinite(yl)):
        raise DomainError("solution became non-finite")
    # yl holds left limits at grid points; add jumps back for the values
    jump_arr = np.zeros(times.size)
    jump_arr[jump_idx] = jumps
    right = yl + jump_arr
    y = CadlagPath(x.T, "pl", times, yl, right, jump_arr)

    hy = np.abs(h(np.concatenate((yl, right))))
    var = float(np.abs(dx).sum())
    bound = (float(hy.max()) + var / x.T) * width * math.exp(h.c * x.T)
    return SolveReport(y, width, bound, int(iters))


def check_lipschitz(
    h: LipschitzDrift, lo: float = -10.0, hi: float = 10.0, samples: int = 1001, seed: int = 0
) -> float:
    """Largest difference quotient of ``h`` on a grid plus random pairs.

    Warns when the estimate exceeds the declared constant.
    """
    if not lo < hi:
        raise ValueError("need lo < hi")
    if samples < 2:
        raise ValueError("need at least two samples")
    grid = np.linspace(lo, hi, samples)
    hv = h(grid)
    est = float(np.max(np.abs(np.diff(hv)) / np.diff(grid)))
    rng = np.random.default_rng(seed)
    a = rng.uniform(lo, hi, samples)
    b = rng.uniform(lo, hi, samples)
    ok = a != b
    if ok.any():
        q = np.abs(h(a[ok]) - h(b[ok])) / np.abs(a[ok] - b[ok])
        est = max(est, float(q.max()))
    if est > h.c * (1 + 1e-9):
        warnings.warn(f"estimated Lipschitz constant {est:g} exceeds declared {h.c:g}", stacklevel=2)
    return est


def gronwall_bound(eta: float, h_sup: float, l1_dd: float, sup_slope: float, c: float) -> float:
    """``(eta + h_sup * l1_dd) * exp(sup_slope * c)``."""
    args = dict(eta=eta, h_sup=h_sup, l1_dd=l1_dd, sup_slope=sup_slope, c=c)
    for k, v in args.items():
        if not v >= 0:
            raise ValueError(f"{k} must be nonnegative, got {v}")
    base = eta + h_sup * l1_dd
    expo = sup_slope * c
    if base == 0:
        return 0.0
    if expo > 700:
        return math.inf
    return base * math.exp(expo)


@dataclass(frozen=True)
class ContinuityRow:
    index: int
    d_in: float
    d_out: float
    bound: float
    bound_source: str
    uniform_in: float


def continuity_experiment(
    x_seq: list[CadlagPath],
    x: CadlagPath,
    h: LipschitzDrift,
    mesh: float | None = None,
    step: float = 1e-3,
    eps: float = 0.9,
) -> list[ContinuityRow]:
    """M1 distances before and after the map, with the Gronwall bound.

    The bound is fed by the regularized representations when the
    regularizer accepts the pair, and otherwise by the coupling-aligned
    representation (``bound_source`` says which).
    """
    from .metric import aligned_rep, m1_distance, m1_estimate
    from .regularize import RegularizeError, regularize
    from .reps import canonical_rep, l1_deriv_dist, rep_sup_dist

    for xn in x_seq:
        if xn.T != x.T:
            raise DomainError(f"horizon mismatch: {xn.T} vs {x.T}")
    y = solve_map(x, h, step).y
    h_sup = float(np.abs(h(np.concatenate((y.left_values, y.right_values)))).max())
    rows = []
    for n, xn in enumerate(x_seq):
        d_in, cp = m1_distance(xn, x, mesh)
        yn = solve_map(xn, h, step).y
        d_out = m1_estimate(yn, y, mesh)
        try:
            rr = regularize(x, xn, eps, mesh)
            bound = gronwall_bound(rr.sup_dist, h_sup, rr.l1_dd, rr.sup_slope, h.c)
            source = "regularized"
        except RegularizeError:
            rep = canonical_rep(x)
            _, cp_x = m1_distance(x, xn, mesh)
            rn = aligned_rep(x, xn, cp_x, rep)
            du, dr = rep_sup_dist(rn, rep)
            bound = gronwall_bound(
                max(du, dr), h_sup, l1_deriv_dist(rn, rep), rn.slope_bound, h.c
            )
            source = "aligned"
        rows.append(ContinuityRow(n, d_in, d_out, bound, source, uniform_dist(xn, x)))
    return rows
