from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings

from m1queue.metric import (
    StaleCouplingError,
    aligned_rep,
    coupling_to_reps,
    default_mesh,
    discretize_graph,
    m1_distance,
    m1_estimate,
)
from m1queue.paths import CadlagPath, DomainError, completed_graph, uniform_dist
from m1queue.reps import canonical_rep, rep_sup_dist, validate_rep

from .conftest import ramp, step_paths

MESH = 1e-3
# coarser mesh for property tests; the acceptance suite runs at MESH
PMESH = 1e-2


class TestDiscretize:
    def test_segment_counts(self, unit_step):
        d = discretize_graph(completed_graph(unit_step), 0.25)
        # three unit segments, four pieces each, plus the final vertex
        assert len(d) == 13
        assert np.allclose(d.position, np.arange(13) * 0.25)

    def test_bad_mesh(self, unit_step):
        with pytest.raises(ValueError):
            discretize_graph(completed_graph(unit_step), 0.0)

    def test_default_mesh(self, unit_step):
        assert default_mesh(unit_step) == pytest.approx(2e-3)


class TestExamples:
    def test_identity(self, unit_step):
        assert m1_estimate(unit_step, unit_step, MESH) <= MESH

    def test_ramp_close_to_step(self):
        x = CadlagPath.step(2.0, 0.0, [(1.0, 1.0)])
        assert m1_estimate(ramp(10), x, MESH) <= 0.1 + 2 * MESH

    def test_jump_size_difference(self):
        x = CadlagPath.step(2.0, 0.0, [(1.0, 1.0)])
        y = CadlagPath.step(2.0, 0.0, [(1.0, 2.0)])
        assert m1_estimate(x, y, MESH) == pytest.approx(1.0, abs=MESH)

    def test_horizon_mismatch(self, unit_step):
        with pytest.raises(DomainError):
            m1_estimate(unit_step, CadlagPath.constant(1.0, 0.0))

    def test_estimate_matches_distance(self, unit_step):
        y = ramp(8)
        assert m1_estimate(unit_step, y, MESH) == m1_distance(unit_step, y, MESH)[0]


class TestAxioms:
    @given(step_paths(), step_paths())
    def test_symmetry_and_dominance(self, x, y):
        dxy = m1_estimate(x, y, PMESH)
        assert abs(dxy - m1_estimate(y, x, PMESH)) <= PMESH
        assert dxy <= uniform_dist(x, y) + PMESH

    @settings(max_examples=20)
    @given(step_paths(max_jumps=4), step_paths(max_jumps=4), step_paths(max_jumps=4))
    def test_triangle(self, x, y, z):
        assert m1_estimate(x, z, PMESH) <= m1_estimate(x, y, PMESH) + m1_estimate(y, z, PMESH) + 3 * PMESH


class TestCoupling:
    @given(step_paths(), step_paths())
    def test_reps_are_valid_and_realize_cost(self, x, y):
        val, cp = m1_distance(x, y, PMESH)
        ra, rb = coupling_to_reps(x, y, cp)
        assert validate_rep(x, ra, 1e-9).passed
        assert validate_rep(y, rb, 1e-9).passed
        assert max(rep_sup_dist(ra, rb)) == pytest.approx(val, abs=1e-12)
        assert cp.pair_costs().max() == pytest.approx(val, abs=1e-12)

    def test_stale_coupling(self, unit_step):
        _, cp = m1_distance(unit_step, ramp(8), MESH)
        with pytest.raises(StaleCouplingError):
            coupling_to_reps(unit_step, ramp(16), cp)

    def test_aligned_rep_follows_canonical(self):
        x = CadlagPath.step(2.0, 0.0, [(1.0, 1.0)])
        xn = ramp(64)
        val, cp = m1_distance(x, xn, MESH)
        rep = canonical_rep(x)
        rn = aligned_rep(x, xn, cp, rep)
        assert validate_rep(xn, rn, 1e-9).passed
        assert max(rep_sup_dist(rn, rep)) <= val + 1e-5

    def test_aligned_rep_extra_jump(self):
        x = CadlagPath.step(2.0, 0.0, [(1.0, 1.0)])
        xn = CadlagPath.step(2.0, 0.0, [(0.5, 0.01), (1.0, 1.0)])
        _, cp = m1_distance(x, xn, MESH)
        rn = aligned_rep(x, xn, cp, canonical_rep(x))
        assert validate_rep(xn, rn, 1e-9).passed
