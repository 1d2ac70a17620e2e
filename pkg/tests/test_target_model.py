"""Tests for the flat abelian target model."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vortexlab.target_model import TargetModel, ZeroBasePoint, herm


@pytest.fixture
def m1():
    return TargetModel(n=1)


@pytest.fixture
def m3():
    return TargetModel(n=3)


class TestModelValidation:
    def test_defaults(self, m1):
        assert m1.mu_scale == pytest.approx(np.pi)
        assert m1.mu_sign == -1
        assert m1.lagrangian_radii == (1.0,)

    def test_radii_must_lie_on_unit_sphere(self):
        with pytest.raises(ValueError):
            TargetModel(n=2, lagrangian_radii=(1.0, 1.0))
        TargetModel(n=2, lagrangian_radii=(0.6, 0.8))

    def test_bad_n(self):
        with pytest.raises(ValueError):
            TargetModel(n=0)


class TestMomentMap:
    def test_origin_value(self, m1):
        # mu(0) = -sign * scale * (-1) with the default sign convention
        assert m1.moment_map(np.zeros(1, dtype=complex)) == pytest.approx(np.pi)

    def test_vanishes_on_unit_sphere(self, m3):
        u = np.array([0.5, 0.5j, np.sqrt(0.5)], dtype=complex)
        assert abs(m3.moment_map(u)) < 1e-15

    def test_dmu_is_directional_derivative(self, m3):
        rng = np.random.default_rng(11)
        u = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        w = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        h = 1e-6
        fd = (m3.moment_map(u + h * w) - m3.moment_map(u - h * w)) / (2 * h)
        assert abs(m3.dmu(u, w) - fd) < 1e-8 * max(1.0, abs(fd))

    def test_infinitesimal_action(self, m1):
        u = np.array([0.3 + 0.4j])
        out = m1.infinitesimal_action(2.0, u)
        assert np.allclose(out, 2j * u)

    def test_action_is_tangent_to_level_set(self, m3):
        # dmu(u, X_a(u)) = 0 on the level set and everywhere
        rng = np.random.default_rng(5)
        u = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        assert abs(m3.dmu(u, m3.infinitesimal_action(1.7, u))) < 1e-12


class TestSplitting:
    def test_decomposition_reconstructs(self, m3):
        rng = np.random.default_rng(2)
        u = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        xi = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        parts = m3.split_tangent(u, xi)
        assert np.allclose(parts.horizontal + parts.vertical, xi, atol=1e-14)

    def test_horizontal_orthogonal_to_gauge_directions(self, m3):
        rng = np.random.default_rng(4)
        u = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        xi = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        h = m3.split_tangent(u, xi).horizontal
        assert abs(herm(h, 1j * u).real) < 1e-12
        assert abs(herm(h, u).real) < 1e-12

    def test_single_component_is_all_vertical(self, m1):
        u = np.array([0.8 + 0.1j])
        xi = np.array([0.3 - 0.2j])
        parts = m1.split_tangent(u, xi)
        assert np.abs(parts.horizontal).max() < 1e-14
        assert np.allclose(parts.vertical, xi)

    def test_zero_base_point(self, m1):
        with pytest.raises(ZeroBasePoint):
            m1.split_tangent(np.zeros(1, dtype=complex),
                             np.ones(1, dtype=complex))

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(min_value=0, max_value=2 ** 31 - 1))
    def test_split_is_idempotent(self, seed):
        m = TargetModel(n=2, lagrangian_radii=(0.6, 0.8))
        rng = np.random.default_rng(seed)
        u = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        if np.sum(np.abs(u) ** 2) < 1e-6:
            return
        xi = rng.standard_normal(2) + 1j * rng.standard_normal(2)
        first = m.split_tangent(u, xi)
        again = m.split_tangent(u, first.horizontal)
        assert np.abs(again.vertical).max() < 1e-12 * max(1.0, np.abs(xi).max())


class TestLevelSetProjection:
    def test_projects_onto_sphere(self, m3):
        u = np.array([1.0, 2.0j, -2.0], dtype=complex)
        x, log_r = m3.project_to_level_set(u)
        assert abs(np.sum(np.abs(x) ** 2) - 1.0) < 1e-14
        assert abs(m3.moment_map(x)) < 1e-13
        assert log_r == pytest.approx(-np.log(3.0))

    def test_zero_cannot_be_projected(self, m1):
        with pytest.raises(ZeroBasePoint):
            m1.project_to_level_set(np.zeros(1, dtype=complex))


def test_herm_is_sesquilinear():
    a = np.array([1 + 2j, 3.0])
    b = np.array([0.5j, 1 - 1j])
    assert herm(2j * a, b) == pytest.approx(2j * herm(a, b))
    assert herm(a, 2j * b) == pytest.approx(-2j * herm(a, b))
    assert herm(a, b) == pytest.approx(np.conj(herm(b, a)))
