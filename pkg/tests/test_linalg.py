"""Tests for the conjugate-gradient kernel and bilinear sampling."""

import numpy as np
import pytest
import scipy.sparse as sp

from vortexlab.linalg import SolverDiverged, bilinear_sample, pcg


class TestPcg:
    def spd_system(self, n=80, seed=1):
        rng = np.random.default_rng(seed)
        m = rng.standard_normal((n, n))
        a = sp.csr_matrix(m @ m.T + n * np.eye(n))
        b = rng.standard_normal(n)
        return a, b

    def test_matches_dense_solve(self):
        a, b = self.spd_system()
        x, its = pcg(a, b, tol=1e-13)
        assert its > 0
        assert np.allclose(x, np.linalg.solve(a.toarray(), b), atol=1e-9)

    def test_jacobi_preconditioner_path(self):
        a, b = self.spd_system(seed=2)
        x, _ = pcg(a, b, diag=a.diagonal(), tol=1e-13)
        assert np.allclose(a @ x, b, atol=1e-9)

    def test_deterministic(self):
        a, b = self.spd_system(seed=3)
        x1, i1 = pcg(a, b, tol=1e-12)
        x2, i2 = pcg(a, b, tol=1e-12)
        assert i1 == i2
        assert (x1 == x2).all()

    def test_iteration_cap_raises(self):
        a, b = self.spd_system(seed=4)
        with pytest.raises(SolverDiverged):
            pcg(a, b, tol=1e-15, max_iter=2)

    def test_zero_rhs(self):
        a, _ = self.spd_system(seed=5)
        x, _ = pcg(a, np.zeros(a.shape[0]))
        assert np.abs(x).max() == 0.0


class TestBilinearSample:
    def grid_axes(self):
        s = np.linspace(-2.0, 2.0, 9)
        t = np.linspace(0.0, 3.0, 7)
        return s, t

    def test_exact_on_bilinear_functions(self):
        s, t = self.grid_axes()
        ss, tt = np.meshgrid(s, t)
        vals = 1.5 - 0.3 * ss + 0.7 * tt + 0.2 * ss * tt
        sq = np.array([-1.13, 0.0, 1.99])
        tq = np.array([0.21, 1.5, 2.87])
        out = bilinear_sample(vals, s, t, sq, tq)
        expect = 1.5 - 0.3 * sq + 0.7 * tq + 0.2 * sq * tq
        assert np.allclose(out, expect, atol=1e-13)

    def test_complex_values(self):
        s, t = self.grid_axes()
        ss, tt = np.meshgrid(s, t)
        vals = ss + 1j * tt
        out = bilinear_sample(vals, s, t, np.array([0.5]), np.array([1.25]))
        assert out[0] == pytest.approx(0.5 + 1.25j)

    def test_outside_hull_raises_or_fills(self):
        s, t = self.grid_axes()
        vals = np.zeros((7, 9))
        with pytest.raises(ValueError):
            bilinear_sample(vals, s, t, np.array([5.0]), np.array([1.0]))
        out = bilinear_sample(vals, s, t, np.array([5.0]), np.array([1.0]),
                              fill=-1.0)
        assert out[0] == -1.0
