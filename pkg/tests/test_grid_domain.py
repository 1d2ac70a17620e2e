"""Tests for grids, weight functions, and the gluing geometry."""

import numpy as np
import pytest

from vortexlab.grid_domain import (
    Grid,
    GluingGeometry,
    OverlappingAnnuli,
    WeightSpec,
    beta_profile,
    classify_region,
    cutoff_beta,
    rho_a,
    rho_glued,
    rho_inf_eps,
    weight_at,
)


class TestGrid:
    def test_plane_factory(self):
        g = Grid.plane(half_width=5.0, n=11)
        assert g.nx == g.ny == 11
        assert g.spacing == pytest.approx(1.0)
        z = g.zmesh
        assert z[0, 0] == pytest.approx(-5 - 5j)
        assert z[-1, -1] == pytest.approx(5 + 5j)

    def test_half_plane_factory(self):
        g = Grid.half_plane(half_width=4.0, n=17)
        assert g.ny == 9
        assert g.t_coords[0] == 0.0
        assert g.zmesh[0, 0] == pytest.approx(-4.0)
        assert g.zmesh[-1, 0].imag == pytest.approx(4.0)

    def test_quad_weights_total_area(self):
        g = Grid.plane(half_width=3.0, n=25)
        assert np.sum(g.quad_weights) == pytest.approx(36.0, rel=1e-12)
        h = Grid.half_plane(half_width=3.0, n=25)
        assert np.sum(h.quad_weights) == pytest.approx(18.0, rel=1e-12)

    def test_boundary_mask(self):
        g = Grid.plane(half_width=2.0, n=9)
        m = g.boundary_mask
        assert m.sum() == 4 * 9 - 4
        assert not m[1:-1, 1:-1].any()

    def test_center_offset(self):
        g = Grid.plane(center=1 + 2j, half_width=2.0, n=5)
        assert g.zmesh[2, 2] == pytest.approx(1 + 2j)

    def test_half_plane_center_must_be_real(self):
        with pytest.raises(ValueError):
            Grid("HalfPlane", 1j, 2.0, 0.5, 9, 5)


class TestWeights:
    def test_rho_a_inner_and_outer(self):
        r = np.array([0.0, 0.3, 0.5, 1.0, 2.5, 7.0])
        out = rho_a(r)
        assert np.allclose(out[:3], 1.0)
        assert np.allclose(out[3:], [1.0, 2.5, 7.0])

    def test_rho_a_blend_is_c1(self):
        # one-sided slopes at the junctions: 0 at r=0.5, 1 at r=1
        h = 1e-7
        s_in = (rho_a(0.5 + h) - rho_a(0.5 - h)) / (2 * h)
        s_out = (rho_a(1.0 + h) - rho_a(1.0 - h)) / (2 * h)
        assert abs(s_in) < 1e-5
        assert abs(s_out - 1.0) < 1e-5

    def test_rho_a_known_dip(self):
        # the C^1 blend dips to 1 - 2/27 just inside the unit circle
        r = np.linspace(0.5, 1.0, 20001)
        assert rho_a(r).min() == pytest.approx(1.0 - 2.0 / 27.0, abs=1e-8)

    def test_rho_inf_eps_definition(self):
        z = np.array([3 + 4j, 50j])
        eps = 0.04
        expect = rho_a(eps * z) / np.sqrt(eps)
        assert np.allclose(rho_inf_eps(z, eps), expect)
        assert np.allclose(rho_inf_eps(z, 1.0), rho_a(z))

    def test_rho_glued_seam_value_and_continuity(self):
        eps = 0.04
        seam = 1.0 / np.sqrt(eps)
        on_seam = rho_glued(np.array([seam + 0j]), eps, [0j])
        assert on_seam[0] == pytest.approx(seam)
        # anchor at the origin: the two branches agree across the seam
        just_out = rho_glued(np.array([(seam + 1e-9) + 0j]), eps, [0j])
        assert just_out[0] == pytest.approx(seam, rel=1e-8)

    def test_rho_glued_inside_uses_translated_profile(self):
        eps = 0.04
        anchor = 40.0 + 0j
        z = np.array([anchor + 0.2, anchor + 3.0])
        vals = rho_glued(z, eps, [anchor])
        assert vals[0] == pytest.approx(1.0)
        assert vals[1] == pytest.approx(3.0)

    def test_weight_spec_validation(self):
        with pytest.raises(ValueError):
            WeightSpec(p=2.0)
        with pytest.raises(ValueError):
            WeightSpec(family="RhoInfEps")
        with pytest.raises(ValueError):
            WeightSpec(family="RhoGlued", epsilon=0.1)
        spec = WeightSpec()
        assert spec.delta == pytest.approx(2.0 - 4.0 / 3.0)

    def test_weight_at_dispatch(self):
        z = np.array([2.0 + 0j])
        assert weight_at(z, WeightSpec())[0] == pytest.approx(2.0)
        spec = WeightSpec(family="RhoInfEps", epsilon=0.25)
        assert weight_at(z, spec)[0] == pytest.approx(rho_a(0.5) / 0.5)


class TestGluingGeometry:
    def test_radii_ordering(self):
        geo = GluingGeometry(epsilon=0.04, anchors=(0j,), b=8.0, e=4.0)
        r = geo.radii
        assert len(r) == 5
        assert all(r[i] < r[i + 1] for i in range(4))
        assert r[2] == pytest.approx(1.0 / np.sqrt(0.04))

    def test_overlapping_anchors_rejected(self):
        with pytest.raises(OverlappingAnnuli):
            GluingGeometry(epsilon=0.04, anchors=(0j, 10.0 + 0j), b=8.0, e=4.0)

    def test_well_separated_anchors_accepted(self):
        GluingGeometry(epsilon=0.04, anchors=(0j, 400.0 + 0j), b=8.0, e=4.0)


class TestCutoffs:
    def test_beta_profile_endpoints(self):
        assert beta_profile(np.array([-2.0]))[0] == 1.0
        assert beta_profile(np.array([-1.0]))[0] == 1.0
        assert beta_profile(np.array([0.0]))[0] == 0.0
        assert beta_profile(np.array([1.0]))[0] == 0.0
        mid = beta_profile(np.array([-0.5]))[0]
        assert 0.0 < mid < 1.0

    def test_inner_cutoff_plateaus(self):
        geo = GluingGeometry(epsilon=0.01, anchors=(0j,), b=2.0, e=1.5)
        r1, r2, _, r4, r5 = geo.radii
        z = np.array([0.5 * r1, 0.99 * r1, 1.01 * r2, 3 * r2]) + 0j
        vals = cutoff_beta(z, geo, "inner")
        assert vals[0] == 1.0 and vals[1] == 1.0
        assert vals[2] == 0.0 and vals[3] == 0.0
        z_mid = np.array([np.sqrt(r1 * r2) + 0j])
        assert 0.0 < cutoff_beta(z_mid, geo, "inner")[0] < 1.0

    def test_outer_cutoff_plateaus(self):
        geo = GluingGeometry(epsilon=0.01, anchors=(0j,), b=2.0, e=1.5)
        _, _, _, r4, r5 = geo.radii
        z = np.array([0.5 * r4, 1.01 * r5, 2 * r5]) + 0j
        vals = cutoff_beta(z, geo, "outer")
        assert vals[0] == 0.0
        assert vals[1] == 1.0 and vals[2] == 1.0

    def test_cutoff_gradient_scale(self):
        """The transition bands have width ~log 2 in log radius, so the
        radial slope is bounded by sup|beta'| / (width * min radius)."""
        geo = GluingGeometry(epsilon=0.0025, anchors=(0j,), b=2.0, e=1.5)
        r1, r2, _, r4, r5 = geo.radii
        b, eps = geo.b, geo.epsilon

        r = np.linspace(r1, r2, 40001)
        vals = cutoff_beta(r.astype(complex), geo, "inner")
        slope = np.max(np.abs(np.diff(vals) / np.diff(r)))
        bound_in = 1.5 * 2.0 * b * np.sqrt(eps) / np.log(2.0)
        assert slope <= bound_in * 1.0001

        r = np.linspace(r4, r5, 40001)
        vals = cutoff_beta(r.astype(complex), geo, "outer")
        slope = np.max(np.abs(np.diff(vals) / np.diff(r)))
        bound_out = 1.5 * np.sqrt(eps) / (b * np.log(2.0))
        assert slope <= bound_out * 1.0001

    def test_region_classification(self):
        eps = 0.0025
        geo = GluingGeometry(epsilon=eps, anchors=(0j, 500.0 + 0j), b=2.0, e=1.5)
        r1, r4 = geo.radii[0], geo.radii[3]
        z = np.array([0j, 0.9 * r1 + 0j, 500.0 + 0j, 1j * r4,
                      500.0 + 1j * r4, 250.0 + 0j])
        tags = classify_region(z, geo)
        assert tags[0] == 0 and tags[1] == 0
        assert tags[2] == 1
        assert tags[3] == 128 + 0
        assert tags[4] == 128 + 1
        assert tags[5] == 255
