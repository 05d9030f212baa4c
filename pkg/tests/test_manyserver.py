from __future__ import annotations

import math

import numpy as np
import pytest

from m1queue.manyserver import (
    FcltRow,
    QueueParams,
    fclt_experiment,
    ks_with_se,
    martingale_diagnostics,
    simulate_limit,
    simulate_queue,
    staffing,
)
from m1queue.paths import CadlagPath


class TestStaffing:
    def test_example(self):
        p = staffing(100, 1.0, 1.0, 1.0, 1.5)
        assert p.c_n == pytest.approx(100 ** (2 / 3))
        assert p.rho_n == pytest.approx(1 - 100 ** (2 / 3) / 100)
        assert p.lambda_n == pytest.approx(100 * p.rho_n)

    def test_overloaded_staffing_rejected(self):
        with pytest.raises(ValueError):
            staffing(4, 1.0, 1.0, 2.0, 1.5)

    @pytest.mark.parametrize("alpha", [1.0, 2.0])
    def test_alpha_range(self, alpha):
        with pytest.raises(ValueError):
            staffing(100, 1.0, 1.0, 1.0, alpha)


class TestSimulation:
    def test_deterministic_given_seed(self):
        p = staffing(50, 1.0, 1.0, 1.0, 1.5, T=2.0)
        a, b = simulate_queue(p, seed=3), simulate_queue(p, seed=3)
        assert a.Q == b.Q and a.counts == b.counts
        assert simulate_queue(p, seed=4).Q != a.Q

    @pytest.mark.parametrize("law", ["pareto", "exponential", "deterministic"])
    def test_counting_identity(self, law):
        p = staffing(50, 1.0, 1.0, 1.0, 1.5, T=3.0)
        tr = simulate_queue(p, law, seed=1)
        assert tr.counting_identity_holds()
        assert tr.Q(p.T) == p.initial + tr.counts["arrivals"] - tr.counts["departures"] - tr.counts["abandonments"]

    def test_unknown_law(self):
        with pytest.raises(ValueError):
            simulate_queue(staffing(50, 1.0, 1.0, 1.0, 1.5), "weibull")

    def test_pure_death_mean(self):
        # no arrivals and q0 = n: every customer is in service, E Q(t) = n exp(-mu t)
        n, t = 50, 1.0
        p = QueueParams(n=n, mu=1.0, theta=1.0, beta=1.0, alpha=1.5, T=t, lam=0.0)
        vals = [simulate_queue(p, seed=s).Q(t) for s in range(400)]
        se = np.std(vals, ddof=1) / math.sqrt(len(vals))
        assert abs(np.mean(vals) - n * math.exp(-t)) < 4 * se

    def test_scalings(self):
        p = staffing(100, 1.0, 1.0, 1.0, 1.5, T=1.0)
        tr = simulate_queue(p, seed=0)
        t = 0.5
        assert tr.Qbar(t) == pytest.approx(tr.Q(t) / p.n)
        assert tr.Qhat(t) == pytest.approx((tr.Q(t) - p.n) / p.c_n)


class TestMartingales:
    def test_qv_bounds(self):
        p = staffing(100, 1.0, 2.0, 1.0, 1.5, T=2.0)
        tr = simulate_queue(p, seed=0)
        md = martingale_diagnostics(tr)
        c2 = p.c_n**2
        qmax = float(tr.Q.right_values.max())
        assert 0 <= md.qv_S(p.T) <= p.mu * p.n * p.T / c2 + 1e-12
        assert 0 <= md.qv_L(p.T) <= p.theta * max(qmax - p.n, 0) * p.T / c2 + 1e-12
        assert np.all(np.diff(md.qv_S.right_values) >= 0)

    def test_qv_with_queue_below_n(self):
        # pure death from n: Q <= n, so no abandonment compensator
        p = QueueParams(n=20, mu=1.0, theta=1.0, beta=1.0, alpha=1.5, T=1.0, lam=0.0)
        md = martingale_diagnostics(simulate_queue(p, seed=0))
        assert md.qv_L(p.T) == 0.0


class TestLimit:
    def _p(self, **kw):
        return staffing(100, kw.pop("mu", 1.0), kw.pop("theta", 1.0), kw.pop("beta", 0.0), 1.5, T=2.0, **kw)

    def test_positive_start_decays_at_theta(self):
        p = self._p(theta=3.0)
        y = simulate_limit(1.0, p, CadlagPath.constant(p.T, 0.0), 1e-3)
        t = np.linspace(0, p.T, 21)
        assert np.allclose(y(t), np.exp(-3.0 * t), atol=1e-5)

    def test_negative_start_decays_at_mu(self):
        p = self._p(mu=2.0)
        y = simulate_limit(-1.0, p, CadlagPath.constant(p.T, 0.0), 1e-3)
        t = np.linspace(0, p.T, 21)
        assert np.allclose(y(t), -np.exp(-2.0 * t), atol=1e-5)

    def test_zero_stays_zero(self):
        p = self._p()
        y = simulate_limit(0.0, p, CadlagPath.constant(p.T, 0.0), 1e-3)
        assert np.all(y.right_values == 0.0)


class TestExperiment:
    def test_rows_and_determinism(self):
        tmpl = staffing(100, 1.0, 1.0, 1.0, 1.5, T=2.0)
        kw = dict(driver_step=5e-2, step=1e-2, min_reps=20)
        a = fclt_experiment([50, 100], tmpl, 20, 5, **kw)
        b = fclt_experiment([50, 100], tmpl, 20, 5, workers=2, **kw)
        assert [r.n for r in a] == [50, 100]
        assert a == b
        assert set(a[0].csv_row()) == set(FcltRow.CSV_FIELDS)
        assert all(0 <= r.ks <= 1 for r in a)

    def test_min_reps(self):
        with pytest.raises(ValueError):
            fclt_experiment([100], staffing(100, 1.0, 1.0, 1.0, 1.5), 10, 0)

    def test_ks_with_se(self):
        rng = np.random.default_rng(0)
        a, b = rng.normal(size=300), rng.normal(size=300)
        stat, se = ks_with_se(a, b, boot=100)
        assert 0 <= stat < 0.15 and 0 < se < 0.1
        assert ks_with_se(a, a + 10, boot=20)[0] == 1.0
