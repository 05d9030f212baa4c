"""Many-server queue with abandonment under heavy-tailed arrivals.

The G/M/n+M queue is simulated event by event: arrivals come from a
renewal stream, and between arrivals the next service completion or
abandonment is drawn from competing exponential clocks with total rate
``mu * min(Q, n) + theta * (Q - n)^+``.  Scaled processes use
``c_n = n**(1/alpha)`` and ``1 - rho_n = beta * c_n / n``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numba
import numpy as np
from scipy.stats import ks_2samp

from .integral import LipschitzDrift, solve_map
from .paths import CadlagPath, DomainError
from .stable import StableLevyConfig, pareto_tail_scale, simulate_stable_levy

__all__ = [
    "FcltRow",
    "INTERARRIVALS",
    "MartingaleDiagnostics",
    "QueueParams",
    "QueueTrace",
    "fclt_experiment",
    "ks_with_se",
    "martingale_diagnostics",
    "simulate_limit",
    "simulate_queue",
    "staffing",
]

INTERARRIVALS = ("pareto", "exponential", "deterministic")
ARRIVAL, SERVICE, ABANDON = 0, 1, 2


@dataclass(frozen=True)
class QueueParams:
    """Model ``n`` of the sequence; ``lam`` overrides the staffed arrival rate."""

    n: int
    mu: float
    theta: float
    beta: float
    alpha: float
    T: float = 10.0
    q0: int | None = None
    seed: int = 0
    lam: float | None = None

    def __post_init__(self):
        if not (isinstance(self.n, (int, np.integer)) and self.n >= 1):
            raise ValueError("n must be a positive integer")
        if not (self.mu > 0 and self.theta > 0):
            raise ValueError("mu and theta must be positive")
        if not 1 < self.alpha < 2:
            raise ValueError("alpha must lie in (1, 2)")
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ValueError("horizon T must be positive and finite")
        if self.q0 is not None and self.q0 < 0:
            raise ValueError("q0 must be nonnegative")
        if self.lam is None and not self.beta * self.c_n < self.n:
            raise ValueError(f"beta * c_n = {self.beta * self.c_n:.6g} must be below n = {self.n}")
        if self.lam is not None and not (self.lam >= 0 and math.isfinite(self.lam)):
            raise ValueError("arrival rate must be finite and nonnegative")

    @property
    def c_n(self) -> float:
        return self.n ** (1 / self.alpha)

    @property
    def rho_n(self) -> float:
        return 1 - self.beta * self.c_n / self.n

    @property
    def lambda_n(self) -> float:
        return self.lam if self.lam is not None else self.n * self.mu * self.rho_n

    @property
    def initial(self) -> int:
        return self.n if self.q0 is None else int(self.q0)


def staffing(n: int, mu: float, theta: float, beta: float, alpha: float, **kw) -> QueueParams:
    """Parameters in the heavy-traffic regime with ``c_n = n**(1/alpha)``."""
    return QueueParams(n=n, mu=mu, theta=theta, beta=beta, alpha=alpha, **kw)


# -- simulation ---------------------------------------------------------------------------


def _arrival_times(p: QueueParams, kind: str, rng: np.random.Generator) -> np.ndarray:
    lam, T = p.lambda_n, p.T
    if lam == 0:
        return np.empty(0)
    if kind not in INTERARRIVALS:
        raise ValueError(f"unknown interarrival law {kind!r}; expected one of {INTERARRIVALS}")
    if kind == "deterministic":
        return np.arange(1, int(math.floor(lam * T)) + 1) / lam
    chunks, total = [], 0.0
    size = int(lam * T * 1.1) + 64
    while total <= T:
        if kind == "exponential":
            gaps = rng.exponential(1 / lam, size)
        else:
            xm = (p.alpha - 1) / (p.alpha * lam)
            gaps = xm * (1 + rng.pareto(p.alpha, size))
        c = total + np.cumsum(gaps)
        chunks.append(c)
        total = c[-1]
    times = np.concatenate(chunks)
    return times[times <= T]


@numba.njit(cache=True)
def _event_loop(arr, n, mu, theta, q0, T, E, U):
    cap = arr.size + E.size + 1
    times = np.empty(cap)
    states = np.empty(cap, dtype=np.int64)
    kinds = np.empty(cap, dtype=np.int8)
    t = 0.0
    q = q0
    ia = 0
    ie = 0
    k = 0
    while True:
        a = arr[ia] if ia < arr.size else np.inf
        busy = min(q, n)
        rate = mu * busy + theta * max(q - n, 0)
        tau = np.inf
        u = 0.0
        if rate > 0:
            if ie >= E.size:
                return times[:k], states[:k], kinds[:k], False
            tau = t + E[ie] / rate
            u = U[ie]
            ie += 1
        if min(a, tau) > T:
            break
        if tau < a:
            t = tau
            kinds[k] = SERVICE if u * rate < mu * busy else ABANDON
            q -= 1
        else:
            t = a
            kinds[k] = ARRIVAL
            q += 1
            ia += 1
        times[k] = t
        states[k] = q
        k += 1
    return times[:k], states[:k], kinds[:k], True


def _simulate_arrays(p: QueueParams, interarrival: str, rng: np.random.Generator):
    arr = _arrival_times(p, interarrival, rng)
    q0 = p.initial
    draws = 2 * (arr.size + q0) + 16
    while True:
        E = rng.standard_exponential(draws)
        U = rng.random(draws)
        times, states, kinds, done = _event_loop(arr, p.n, p.mu, p.theta, q0, p.T, E, U)
        if done:
            break
        draws *= 2
    for v in (p.mu, p.theta, p.lambda_n):
        if not math.isfinite(v):
            raise DomainError("non-finite rate")
    return times, states, kinds


def _knots(times, values, initial, T):
    """Knot arrays of a step path from event times and post-event values."""
    if times.size:
        last = np.concatenate((times[1:] != times[:-1], [True]))
        times, values = times[last], values[last]
    t = np.concatenate(([0.0], times))
    right = np.concatenate(([float(initial)], values.astype(float)))
    if t[-1] < T:
        t = np.append(t, T)
        right = np.append(right, right[-1])
    left = np.concatenate((right[:1], right[:-1]))
    return t, left, right


@dataclass(frozen=True)
class QueueTrace:
    params: QueueParams
    interarrival: str
    event_times: np.ndarray
    event_states: np.ndarray
    event_kinds: np.ndarray
    Q: CadlagPath
    A: CadlagPath
    Qbar: CadlagPath
    Qhat: CadlagPath
    Ahat: CadlagPath
    counts: dict = field(default_factory=dict)

    def counting_identity_holds(self) -> bool:
        c = self.counts
        final = int(self.event_states[-1]) if self.event_states.size else self.params.initial
        return c["arrivals"] - c["departures"] - c["abandonments"] + self.params.initial == final


def simulate_queue(
    p: QueueParams, interarrival: str = "pareto", seed=None
) -> QueueTrace:
    """Simulate one trace of the queue on ``[0, p.T]``.

    ``seed`` defaults to ``p.seed`` and may also be a ``SeedSequence`` or
    ``Generator``; the same seed reproduces the same trace.
    """
    if interarrival not in INTERARRIVALS:
        raise ValueError(f"unknown interarrival law {interarrival!r}; expected one of {INTERARRIVALS}")
    seed = p.seed if seed is None else seed
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    times, states, kinds = _simulate_arrays(p, interarrival, rng)
    T, n, c, lam = p.T, p.n, p.c_n, p.lambda_n
    t, left, right = _knots(times, states, p.initial, T)
    Q = CadlagPath(T, "step", t, left, right)
    arrivals = np.cumsum(kinds == ARRIVAL)
    ta, la, ra = _knots(times, arrivals, 0, T)
    A = CadlagPath(T, "step", ta, la, ra)
    Qbar = CadlagPath(T, "step", t, left / n, right / n)
    Qhat = CadlagPath(T, "step", t, (left - n) / c, (right - n) / c)
    Ahat = CadlagPath(T, "pl", ta, (la - lam * ta) / c, (ra - lam * ta) / c)
    counts = {
        "arrivals": int(np.count_nonzero(kinds == ARRIVAL)),
        "departures": int(np.count_nonzero(kinds == SERVICE)),
        "abandonments": int(np.count_nonzero(kinds == ABANDON)),
    }
    return QueueTrace(p, interarrival, times, states, kinds, Q, A, Qbar, Qhat, Ahat, counts)


# -- martingale diagnostics ----------------------------------------------------------------


@dataclass(frozen=True)
class MartingaleDiagnostics:
    S_hat: CadlagPath
    L_hat: CadlagPath
    qv_S: CadlagPath
    qv_L: CadlagPath


def _compensators(t, q, p: QueueParams):
    """Cumulative ``mu int (Q ^ n)`` and ``theta int (Q - n)^+`` at the knots ``t``."""
    dt = np.diff(t)
    prev = q[:-1]
    busy = p.mu * np.minimum(prev, p.n) * dt
    extra = p.theta * np.maximum(prev - p.n, 0.0) * dt
    return np.concatenate(([0.0], np.cumsum(busy))), np.concatenate(([0.0], np.cumsum(extra)))


def martingale_diagnostics(tr: QueueTrace, p: QueueParams | None = None) -> MartingaleDiagnostics:
    """Compensated service and abandonment counts and their quadratic variations.

    ``<S_hat>(t) = (mu / c_n**2) int (Q ^ n)`` and
    ``<L_hat>(t) = (theta / c_n**2) int (Q - n)^+``, integrated exactly over
    the steps of ``Q``.
    """
    p = tr.params if p is None else p
    c2 = p.c_n**2
    t = tr.Q.knots
    q = tr.Q.right_values
    IS, IL = _compensators(t, q, p)
    kinds = tr.event_kinds
    dep = _counts_at(t, tr.event_times, kinds == SERVICE)
    ab = _counts_at(t, tr.event_times, kinds == ABANDON)
    dep_left = np.concatenate(([0.0], dep[:-1]))
    ab_left = np.concatenate(([0.0], ab[:-1]))
    c = p.c_n
    S_hat = CadlagPath(p.T, "pl", t, (dep_left - IS) / c, (dep - IS) / c)
    L_hat = CadlagPath(p.T, "pl", t, (ab_left - IL) / c, (ab - IL) / c)
    qv_S = CadlagPath(p.T, "pl", t, IS / c2, IS / c2)
    qv_L = CadlagPath(p.T, "pl", t, IL / c2, IL / c2)
    return MartingaleDiagnostics(S_hat, L_hat, qv_S, qv_L)


def _counts_at(knots, times, mask):
    """Number of flagged events at or before each knot."""
    return np.searchsorted(times[mask], knots, side="right").astype(float)


# -- the limit ------------------------------------------------------------------------------


def simulate_limit(
    q0hat: float, p: QueueParams, drv: CadlagPath, step: float = 1e-3
) -> CadlagPath:
    """Solve ``Q(t) = q0hat - mu beta t + drv(t) + int h(Q)`` with the heavy-traffic drift."""
    if drv.T != p.T:
        raise DomainError(f"driver horizon {drv.T} differs from T = {p.T}")
    x = drv.add_affine(q0hat, -p.mu * p.beta)
    return solve_map(x, LipschitzDrift.qed(p.mu, p.theta), step).y


# -- experiment -----------------------------------------------------------------------------


@dataclass(frozen=True)
class FcltRow:
    n: int
    ks: float
    ks_se: float
    fwlln_sup: float
    qv_sn: float
    qv_ln: float
    reps: int
    seed: int

    CSV_FIELDS = ("n", "ks", "fwlln_sup", "qv_sn", "qv_ln", "reps", "seed")

    def csv_row(self) -> dict:
        return {k: getattr(self, k) for k in self.CSV_FIELDS}


def ks_with_se(a, b, boot: int = 200, seed=0) -> tuple[float, float]:
    """Two-sample KS statistic and its bootstrap standard error."""
    a, b = np.asarray(a), np.asarray(b)
    stat = float(ks_2samp(a, b).statistic)
    rng = np.random.default_rng(seed)
    vals = np.empty(boot)
    for i in range(boot):
        vals[i] = ks_2samp(rng.choice(a, a.size), rng.choice(b, b.size)).statistic
    return stat, float(vals.std(ddof=1))


def _replicate(p: QueueParams, interarrival: str, ss: np.random.SeedSequence):
    times, states, _ = _simulate_arrays(p, interarrival, np.random.default_rng(ss))
    t, _, q = _knots(times, states, p.initial, p.T)
    IS, IL = _compensators(t, q, p)
    c2 = p.c_n**2
    return (
        (q[-1] - p.n) / p.c_n,
        float(np.abs(q / p.n - 1).max()),
        IS[-1] / c2,
        IL[-1] / c2,
    )


def limit_sample(
    p: QueueParams,
    reps: int,
    seed,
    scale: float | None = None,
    skew: float = -1.0,
    driver_step: float = 1e-2,
    step: float = 1e-3,
) -> np.ndarray:
    """``reps`` draws of the limit at ``T`` started from 0.

    ``scale=None`` uses the scale matched to Pareto interarrivals,
    ``pareto_tail_scale(alpha) * mu**(1/alpha)``.
    """
    if scale is None:
        scale = pareto_tail_scale(p.alpha) * p.mu ** (1 / p.alpha)
    cfg = StableLevyConfig(p.alpha, scale, skew, driver_step)
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    out = np.empty(reps)
    for i, child in enumerate(ss.spawn(reps)):
        drv = simulate_stable_levy(cfg, p.T, np.random.default_rng(child))
        out[i] = float(simulate_limit(0.0, p, drv, step)(p.T))
    return out


def fclt_experiment(
    ns,
    template: QueueParams,
    reps: int,
    seed: int,
    interarrival: str = "pareto",
    scale: float | None = None,
    skew: float = -1.0,
    driver_step: float = 1e-2,
    step: float = 1e-3,
    workers: int = 1,
    min_reps: int = 100,
) -> list[FcltRow]:
    """Compare scaled queue lengths at ``T`` with the limit, for each ``n``.

    Each row holds the KS statistic between ``reps`` draws of ``Qhat_n(T)``
    and ``reps`` draws of the limit at ``T``, its bootstrap standard error,
    the median of ``sup |Qbar_n - 1|`` and the medians of the quadratic
    variations at ``T``.  Every replication has its own seed spawned from
    ``seed``, so results do not depend on ``workers``.
    """
    if reps < min_reps:
        raise ValueError(f"reps must be at least {min_reps}")
    master = np.random.SeedSequence(seed)
    limit_ss, *n_ss = master.spawn(len(ns) + 1)
    limit = limit_sample(template, reps, limit_ss, scale, skew, driver_step, step)
    rows = []
    for n, ss in zip(ns, n_ss):
        p = replace(template, n=int(n), q0=None)
        children = ss.spawn(reps)
        if workers > 1:
            with ThreadPoolExecutor(workers) as ex:
                res = list(ex.map(lambda c: _replicate(p, interarrival, c), children))
        else:
            res = [_replicate(p, interarrival, c) for c in children]
        qhat, sup, qs, ql = (np.array(col) for col in zip(*res))
        ks, se = ks_with_se(qhat, limit, seed=int(n))
        rows.append(
            FcltRow(
                n=int(n),
                ks=ks,
                ks_se=se,
                fwlln_sup=float(np.median(sup)),
                qv_sn=float(np.median(qs)),
                qv_ln=float(np.median(ql)),
                reps=reps,
                seed=seed,
            )
        )
    return rows
