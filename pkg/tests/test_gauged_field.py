"""Tests for gauged fields: derivatives, energy, gauge motions, the
divergence gauge fix, holonomy reading, and snapshot io."""

import os

import numpy as np
import pytest

from vortexlab.grid_domain import Grid
from vortexlab.target_model import TargetModel
from vortexlab.gauged_field import (
    FieldVanishesOnLoop,
    GaugedField,
    NotInChart,
    apply_deformation,
    coulomb_fix,
    coulomb_residual,
    covariant_derivatives,
    curvature,
    energy,
    extract_deformation,
    gauge_transform,
    holonomy_at_infinity,
    load_snapshot,
    save_snapshot,
    vortex_residual,
)


def quadratic_field(n=33, half_width=4.0):
    """Polynomial data of degree <= 2: the difference stencils are exact
    on these, so derived quantities can be checked to rounding."""
    grid = Grid.plane(half_width=half_width, n=n)
    model = TargetModel(n=1)
    z = grid.zmesh
    s, t = z.real, z.imag
    u = (0.3 + 0.1 * s + 0.2j * t + 0.05 * s * t).astype(complex)
    phi = 0.4 * s - 0.1 * t
    psi = 0.2 * s * t
    return GaugedField(grid, model, u, phi, psi)


class TestDerivativesAndEnergy:
    def test_covariant_derivatives_exact_on_polynomials(self):
        v = quadratic_field()
        z = v.grid.zmesh
        s, t = z.real, z.imag
        vs, vt = covariant_derivatives(v)
        u = v.u[0]
        assert np.allclose(vs[0], 0.1 + 0.05 * t + 1j * v.phi * u, atol=1e-12)
        assert np.allclose(vt[0], 0.2j + 0.05 * s + 1j * v.psi * u, atol=1e-12)

    def test_curvature_exact_on_polynomials(self):
        v = quadratic_field()
        z = v.grid.zmesh
        assert np.allclose(curvature(v), 0.2 * z.imag + 0.1, atol=1e-12)

    def test_energy_of_covariantly_constant_field_is_area_weighted_mu(self):
        # u constant with |u| = 1 and no connection: only the kappa and mu
        # terms could contribute, and both vanish
        n = 25
        grid = Grid.plane(half_width=2.0, n=n)
        model = TargetModel(n=1)
        v = GaugedField(grid, model, np.ones((n, n), dtype=complex),
                        np.zeros((n, n)), np.zeros((n, n)))
        total, density = energy(v)
        assert abs(total) < 1e-14
        assert np.abs(density).max() < 1e-15

    def test_energy_gauge_invariance_improves_with_resolution(self):
        defects = []
        for n in (49, 97, 193):
            grid = Grid.plane(half_width=4.0, n=n)
            model = TargetModel(n=1)
            z = grid.zmesh
            r2 = np.abs(z) ** 2
            u = z / np.sqrt(1.0 + r2)
            phi = -z.imag / (2 + r2)
            psi = z.real / (2 + r2)
            v = GaugedField(grid, model, u, phi, psi, holonomy=-1)
            chi = 0.6 * np.exp(-r2 / 5.0)
            w = gauge_transform(v, chi)
            defects.append(abs(energy(v)[0] - energy(w)[0]))
        assert defects[0] > defects[1] > defects[2]
        assert 2.5 < defects[0] / defects[1] < 6.0
        assert 2.5 < defects[1] / defects[2] < 6.0

    def test_vortex_residual_components(self):
        v = quadratic_field()
        first, second = vortex_residual(v)
        vs, vt = covariant_derivatives(v)
        assert np.allclose(first, vs + 1j * vt, atol=1e-13)
        mu = v.model.moment_map(v.u)
        assert np.allclose(second, curvature(v) + mu, atol=1e-13)

    def test_volume_form_scales_residual_and_energy(self):
        v = quadratic_field()
        sigma = 2.0 * np.ones((v.grid.ny, v.grid.nx))
        _, second = vortex_residual(v, volume_sigma=sigma)
        _, base = vortex_residual(v)
        mu = v.model.moment_map(v.u)
        assert np.allclose(second - base, mu, atol=1e-13)


class TestGaugeMotions:
    def test_round_trip(self):
        v = quadratic_field()
        chi = 0.3 * v.grid.zmesh.real ** 2
        w = gauge_transform(gauge_transform(v, chi), -chi)
        assert np.allclose(w.u, v.u, atol=1e-13)
        assert np.allclose(w.phi, v.phi, atol=1e-13)
        assert np.allclose(w.psi, v.psi, atol=1e-13)

    def test_deformation_round_trip(self):
        from vortexlab.gauged_field import FieldDeformation
        v = quadratic_field()
        rng = np.random.default_rng(0)
        shape = (v.grid.ny, v.grid.nx)
        defo = FieldDeformation(
            0.05 * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))[np.newaxis],
            0.1 * rng.standard_normal(shape),
            0.1 * rng.standard_normal(shape))
        w = apply_deformation(v, defo)
        back = extract_deformation(w, v)
        assert np.allclose(back.xi, defo.xi, atol=1e-13)

    def test_chart_radius_enforced(self):
        v = quadratic_field()
        far = v.copy()
        far.u = far.u + 0.9
        with pytest.raises(NotInChart):
            extract_deformation(far, v)


class TestCoulombFix:
    def residual_sup(self, v, ref):
        return np.abs(coulomb_residual(v, ref)).max()

    def test_fix_reduces_residual_at_second_order(self):
        sups = []
        for n in (49, 97):
            grid = Grid.plane(half_width=5.0, n=n)
            model = TargetModel(n=1)
            z = grid.zmesh
            r2 = np.abs(z) ** 2
            u = z / np.sqrt(1.0 + r2)
            ref = GaugedField(grid, model, u, -z.imag / (2 + r2),
                              z.real / (2 + r2), holonomy=-1)
            # move off the gauge slice by a compactly supported rotation
            chi0 = 0.4 * np.exp(-r2 / 2.0)
            moved = gauge_transform(ref, chi0)
            before = self.residual_sup(moved, ref)
            fixed = coulomb_fix(moved, ref)
            after = self.residual_sup(fixed, ref)
            assert after < before / 30.0
            sups.append(after)
        assert 2.5 < sups[0] / sups[1] < 6.0

    def test_fix_recovers_gauge_slice_representative(self):
        n = 97
        grid = Grid.plane(half_width=5.0, n=n)
        model = TargetModel(n=1)
        z = grid.zmesh
        r2 = np.abs(z) ** 2
        u = z / np.sqrt(1.0 + r2)
        ref = GaugedField(grid, model, u, -z.imag / (2 + r2),
                          z.real / (2 + r2), holonomy=-1)
        chi0 = 0.4 * np.exp(-r2 / 2.0)
        fixed = coulomb_fix(gauge_transform(ref, chi0), ref)
        # the matter field should line up with the reference again
        assert np.abs(fixed.u - ref.u).max() < 5e-4

    def test_already_aligned_field_barely_moves(self):
        v = quadratic_field(n=49)
        fixed = coulomb_fix(v, v)
        assert np.abs(fixed.u - v.u).max() < 1e-9


class TestHolonomy:
    def circle_field(self, winding, n=129):
        grid = Grid.plane(half_width=6.0, n=n)
        model = TargetModel(n=1)
        z = grid.zmesh
        theta = np.angle(z + (np.abs(z) < 1e-12))
        u = np.exp(1j * winding * theta)
        return GaugedField(grid, model, u, np.zeros_like(theta),
                           np.zeros_like(theta), holonomy=-winding)

    def test_reads_negative_winding(self):
        assert holonomy_at_infinity(self.circle_field(2)) == -2
        assert holonomy_at_infinity(self.circle_field(-3)) == 3
        assert holonomy_at_infinity(self.circle_field(0)) == 0

    def test_vanishing_loop_detected(self):
        v = self.circle_field(1)
        v.u = 1e-6 * v.u
        with pytest.raises(FieldVanishesOnLoop):
            holonomy_at_infinity(v)

    def test_half_plane_rejected(self):
        grid = Grid.half_plane(half_width=4.0, n=33)
        model = TargetModel(n=1)
        shape = (grid.ny, grid.nx)
        v = GaugedField(grid, model, np.ones(shape, dtype=complex),
                        np.zeros(shape), np.zeros(shape))
        with pytest.raises(ValueError):
            holonomy_at_infinity(v)


class TestSnapshots:
    def test_round_trip_bits(self, tmp_path):
        v = quadratic_field(n=21)
        v.holonomy = -2
        path = tmp_path / "field.snap"
        save_snapshot(v, str(path))
        w = load_snapshot(str(path))
        assert w.grid == v.grid
        assert w.holonomy == -2
        assert (w.u == v.u).all()
        assert (w.phi == v.phi).all()
        assert (w.psi == v.psi).all()

    def test_no_partial_files_left(self, tmp_path):
        v = quadratic_field(n=21)
        path = tmp_path / "field.snap"
        save_snapshot(v, str(path))
        leftovers = [f for f in os.listdir(tmp_path) if f != "field.snap"]
        assert leftovers == []

    def test_snapshot_identical_on_repeat(self, tmp_path):
        v = quadratic_field(n=21)
        p1, p2 = tmp_path / "a.snap", tmp_path / "b.snap"
        save_snapshot(v, str(p1))
        save_snapshot(v, str(p2))
        assert p1.read_bytes() == p2.read_bytes()
