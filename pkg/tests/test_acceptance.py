"""Acceptance criteria 1 to 12.

Each test records one ``criterion N PASS|FAIL`` line, printed in the
terminal summary, and then asserts the criterion including its time budget.
"""

from __future__ import annotations

import math
import time
from fractions import Fraction

import numpy as np
import pytest

from m1queue.integral import LipschitzDrift, continuity_experiment, solve_map
from m1queue.manyserver import fclt_experiment, martingale_diagnostics, simulate_queue, staffing
from m1queue.metric import coupling_to_reps, m1_distance, m1_estimate
from m1queue.paths import CadlagPath, j_max, jumps, uniform_dist, ws_osc
from m1queue.regularize import regularize
from m1queue.reps import canonical_rep, rep_sup_dist, validate_rep

from .conftest import ACCEPTANCE_LINES, ramp, random_step_path

MESH = 1e-3
EPS = 0.9
RAMP_NS = [4 * 2**k for k in range(8)]  # 4, 8, ..., 512
STEP_X = CadlagPath.step(2.0, 0.0, [(1.0, 1.0)])
QUEUE_NS = (100, 400, 1600)


def _record(num: int, name: str, ok: bool, detail: str, elapsed: float, budget: float) -> None:
    in_time = elapsed < budget
    status = "PASS" if ok and in_time else "FAIL"
    line = f"criterion {num} {status}: {name} | {detail} | {elapsed:.2f}s of {budget:g}s"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line
    assert in_time, line


def _non_increasing(v, slack=0.0) -> bool:
    return all(b <= a + slack for a, b in zip(v, v[1:]))


def _perturb(x: CadlagPath, rng, dt: float, dv: float) -> CadlagPath:
    idx = np.flatnonzero(x.jump_values != 0)
    nodes = [(x.knots[i] + rng.uniform(-dt, dt), x.right_values[i] + dv * rng.normal()) for i in idx]
    return CadlagPath.step(x.T, x.right_values[0] + dv * rng.normal(), nodes)


def test_c01_solver_accuracy():
    t0 = time.perf_counter()
    rep = solve_map(CadlagPath.constant(1.0, 1.0), LipschitzDrift.linear(1.0), 1e-3)
    t = np.linspace(0.0, 1.0, 10_001)
    err = float(np.max(np.abs(rep.y(t) - np.exp(-t))))
    el = time.perf_counter() - t0
    _record(1, "solver vs exp(-t)", err <= 1e-3 * math.e, f"max err {err:.3g} <= {1e-3 * math.e:.3g}", el, 1)


def test_c02_jump_coincidence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    bad = 0
    for _ in range(100):
        x = random_step_path(rng)
        want = [(j.t, j.size) for j in jumps(x, 0)]
        for h in (LipschitzDrift.linear(1.0), LipschitzDrift.qed(2.0, 3.0)):
            y = solve_map(x, h, 1e-3).y
            bad += [(j.t, j.size) for j in jumps(y, 0)] != want
    el = time.perf_counter() - t0
    _record(2, "jumps of psi(x) equal jumps of x", bad == 0, f"{bad} mismatches in 200 solves", el, 10)


def test_c03_canonical_rep_contract():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    failures = []
    for k in range(100):
        x = random_step_path(rng, max_jumps=10)
        rep = canonical_rep(x)
        two_t = 2 * x.T
        sl = rep.slopes
        slopes_ok = bool(np.all((np.abs(sl) <= 1e-9 * two_t) | (np.abs(sl - two_t) <= 1e-9 * two_t)))
        total_ok = sum(rep.exact_flat_lengths.values(), Fraction(0)) == Fraction(1, 2)
        norm_ok = abs(rep.slope_bound - two_t) <= 1e-9 * two_t
        lad = rep.ladder
        prefix_ok = all(lad[j] > sum(lad[j + 1 :], Fraction(0)) for j in range(len(lad)))
        valid = validate_rep(x, rep, 1e-9).passed
        if not (slopes_ok and total_ok and norm_ok and prefix_ok and valid):
            failures.append(k)
    el = time.perf_counter() - t0
    _record(3, "canonical rep contract", not failures, f"{len(failures)} of 100 paths fail", el, 5)


def test_c04_metric_axioms():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    ident = sym = tri = dom = 0.0
    for _ in range(50):
        x, y, z = (random_step_path(rng, max_jumps=6) for _ in range(3))
        dxy, dyx = m1_estimate(x, y, MESH), m1_estimate(y, x, MESH)
        dyz, dxz = m1_estimate(y, z, MESH), m1_estimate(x, z, MESH)
        ident = max(ident, m1_estimate(x, x, MESH))
        sym = max(sym, abs(dxy - dyx))
        tri = max(tri, dxz - dxy - dyz)
        dom = max(dom, dxy - uniform_dist(x, y))
    ok = ident <= MESH and sym <= MESH and tri <= 3 * MESH and dom <= MESH
    detail = f"identity {ident:.2g}, symmetry gap {sym:.2g}, triangle gap {tri:.2g}, dominance excess {dom:.2g}"
    _record(4, "M1 axioms on 50 triples", ok, detail, time.perf_counter() - t0, 60)


def test_c05_m1_vs_uniform():
    t0 = time.perf_counter()
    d = [m1_estimate(ramp(n), STEP_X, MESH) for n in RAMP_NS]
    u = [uniform_dist(ramp(n), STEP_X) for n in RAMP_NS]
    close = all(v <= 1 / n + 2 * MESH for v, n in zip(d, RAMP_NS))
    decreasing = all(b < a for a, b in zip(d, d[1:]))
    far = all(v >= 1 - 1 / n for v, n in zip(u, RAMP_NS))
    detail = f"d_M1 {d[0]:.3g} -> {d[-1]:.3g}, min uniform {min(u):.3g}"
    _record(5, "ramps converge in M1 but not uniformly", close and decreasing and far, detail, time.perf_counter() - t0, 30)


def test_c06_continuity_of_map():
    t0 = time.perf_counter()
    rows = continuity_experiment([ramp(n) for n in RAMP_NS], STEP_X, LipschitzDrift.qed(1.0, 1.0), MESH, 1e-3, EPS)
    d_out = [r.d_out for r in rows]
    decreasing = all(b < a for a, b in zip(d_out, d_out[1:]))
    bounded = all(r.d_out <= r.bound for r in rows)
    n_reg = sum(r.bound_source == "regularized" for r in rows)
    ok = decreasing and d_out[-1] <= 0.05 and bounded
    detail = f"d_out {d_out[0]:.3g} -> {d_out[-1]:.3g}, bound from regularized reps for {n_reg}/{len(rows)}"
    _record(6, "d_M1(psi(x_n), psi(x)) decreases under Gronwall bound", ok, detail, time.perf_counter() - t0, 120)


def test_c07_regularizer_pipeline():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    pairs = [(STEP_X, ramp(64))]
    for _ in range(20):
        x = random_step_path(rng)
        pairs.append((x, _perturb(x, rng, 1e-4, 1e-4)))
    failures = []
    worst_ledger = 0.0
    for k, (x, xn) in enumerate(pairs):
        try:
            rr = regularize(x, xn, EPS, MESH)
        except Exception as e:  # noqa: BLE001 - any failure counts against the criterion
            failures.append(f"{k}: {e}")
            continue
        gap = abs(sum(rr.contributions.values()) - rr.l1_dd)
        worst_ledger = max(worst_ledger, gap)
        ok = (
            rr.sup_slope <= 3 * x.T * (1 + 1e-9)
            and max(rr.u_dist, rr.r_dist) < EPS
            and rr.l1_dd <= 3 * rr.spec.eps1
            and gap <= 1e-9
            and validate_rep(xn, rr.rep, 1e-9).passed
        )
        if not ok:
            failures.append(f"{k}: bounds")
    detail = f"{len(pairs) - len(failures)}/{len(pairs)} pairs, worst ledger gap {worst_ledger:.2g}"
    _record(7, "regularize bounds", not failures, detail, time.perf_counter() - t0, 120)


def test_c08_jump_and_uniform_bounds():
    t0 = time.perf_counter()
    jx = j_max(STEP_X)
    ok = True
    worst_slack = math.inf
    for n in RAMP_NS:
        xn = ramp(n)
        ok &= j_max(xn) == 0.0 <= jx
        dist = uniform_dist(xn, STEP_X)
        if n >= 64:
            ok &= dist <= jx + 0.05
        _, cp = m1_distance(xn, STEP_X, MESH)
        rn, r = coupling_to_reps(xn, STEP_X, cp)
        du, dr = rep_sup_dist(rn, r)
        rhs = ws_osc(xn, dr) + 2 * j_max(xn) + jx + du
        worst_slack = min(worst_slack, rhs - dist)
        ok &= dist <= rhs + 1e-12
    detail = f"J_max(x) = {jx:g}, smallest slack in the uniform bound {worst_slack:.3g}"
    _record(8, "jump and uniform-distance bounds", ok, detail, time.perf_counter() - t0, 30)


@pytest.fixture(scope="module")
def queue_runs():
    """20 replications per n; sup |Qbar - 1|, <S_hat>(T) and the counting identity."""
    t0 = time.perf_counter()
    out = {}
    for n in QUEUE_NS:
        p = staffing(n, 1.0, 1.0, 1.0, 1.5, T=10.0)
        sups, qvs, ident = [], [], []
        for child in np.random.SeedSequence(9).spawn(20):
            tr = simulate_queue(p, "pareto", np.random.default_rng(child))
            sups.append(float(np.abs(tr.Qbar.right_values - 1).max()))
            qvs.append(float(martingale_diagnostics(tr).qv_S(p.T)))
            ident.append(tr.counting_identity_holds())
        out[n] = (float(np.median(sups)), float(np.median(qvs)), all(ident))
    return out, time.perf_counter() - t0


def test_c09_fwlln(queue_runs):
    runs, el = queue_runs
    med = [runs[n][0] for n in QUEUE_NS]
    ok = _non_increasing(med) and med[-1] <= 0.1
    detail = "median sup|Qbar - 1| " + ", ".join(f"n={n}: {m:.3f}" for n, m in zip(QUEUE_NS, med))
    _record(9, "FWLLN", ok, detail, el, 300)


def test_c10_fclt_trend():
    t0 = time.perf_counter()
    tmpl = staffing(QUEUE_NS[0], 1.0, 1.0, 1.0, 1.5, T=10.0)
    rows = fclt_experiment(QUEUE_NS, tmpl, 500, seed=10, workers=4)
    ok = all(
        b.ks <= a.ks + 2 * math.hypot(a.ks_se, b.ks_se) for a, b in zip(rows, rows[1:])
    )
    detail = ", ".join(f"n={r.n}: KS {r.ks:.3f} (se {r.ks_se:.3f})" for r in rows)
    _record(10, "FCLT trend", ok, detail, time.perf_counter() - t0, 900)


def test_c11_qv_vanishing(queue_runs):
    runs, el = queue_runs
    qv = [runs[n][1] for n in QUEUE_NS]
    ratios = [b / a for a, b in zip(qv, qv[1:])]
    target = [(QUEUE_NS[i + 1] / QUEUE_NS[i]) ** (-1 / 3) for i in range(len(ratios))]
    ok = all(b < a for a, b in zip(qv, qv[1:])) and all(
        abs(r / t - 1) <= 0.25 for r, t in zip(ratios, target)
    )
    detail = "median <S_hat>(T) " + ", ".join(f"{v:.3f}" for v in qv) + "; ratios " + ", ".join(
        f"{r:.3f} vs {t:.3f}" for r, t in zip(ratios, target)
    )
    _record(11, "QV vanishing", ok, detail, el, 300)


def test_c12_counting_identity(queue_runs):
    t0 = time.perf_counter()
    runs, _ = queue_runs
    ok = all(runs[n][2] for n in QUEUE_NS)
    extra = []
    for law in ("exponential", "deterministic"):
        tr = simulate_queue(staffing(400, 1.0, 1.0, 1.0, 1.5, T=10.0), law, seed=12)
        extra.append(tr.counting_identity_holds())
    ok = ok and all(extra)
    _record(12, "counting identity", ok, "60 Pareto traces plus 2 other laws", time.perf_counter() - t0, 60)
