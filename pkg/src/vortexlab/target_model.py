"""The flat abelian target C^N with its circle action, moment map, and Lagrangian.

The diagonal U(1) action is a . u = e^{ia} u, the complex structure is
multiplication by i, and the metric is the flat Hermitian one.  The moment map
is mu(u) = mu_sign * mu_scale * (|u|^2 - 1); with the defaults (-1, pi) its
zero level set is the unit sphere and the vortex curvature equation closes
against the scalar substitution used by the Taubes solver.  The boundary
condition set is the torus {|u_alpha| = r_alpha} inside the level set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ZeroBasePoint(Exception):
    """Tangent splitting or projection is singular where u vanishes."""


def herm(a, b):
    """Hermitian pairing sum_alpha a_alpha * conj(b_alpha), reducing axis 0."""
    return np.sum(a * np.conj(b), axis=0)


@dataclass(frozen=True)
class SplitVector:
    """A tangent vector split into horizontal and vertical (gauge) parts."""
    horizontal: np.ndarray
    vertical: np.ndarray

    @property
    def total(self):
        return self.horizontal + self.vertical


@dataclass(frozen=True)
class TargetModel:
    n: int = 1
    mu_scale: float = float(np.pi)
    mu_sign: int = -1
    lagrangian_radii: tuple = ()

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be a positive integer")
        if self.mu_scale <= 0:
            raise ValueError("mu_scale must be positive")
        if self.mu_sign not in (-1, 1):
            raise ValueError("mu_sign must be +1 or -1")
        radii = self.lagrangian_radii
        if not radii:
            radii = tuple([1.0 / np.sqrt(self.n)] * self.n)
            object.__setattr__(self, "lagrangian_radii", radii)
        if len(radii) != self.n:
            raise ValueError("lagrangian_radii must have one entry per component")
        total = sum(r * r for r in radii)
        if abs(total - 1.0) > 1e-12:
            raise ValueError("lagrangian radii must satisfy sum r^2 = 1, got %r" % total)

    # -- basic calculus on the target ------------------------------------

    def components(self, u):
        """View u with an explicit leading component axis of length n."""
        u = np.asarray(u)
        if u.ndim == 0 or u.shape[0] != self.n:
            if self.n == 1:
                return u[np.newaxis] if u.ndim else u.reshape(1)
            raise ValueError("field has no leading axis of length n=%d" % self.n)
        return u

    def moment_map(self, u):
        """mu(u) = mu_sign * mu_scale * (|u|^2 - 1), a real array."""
        u = self.components(u)
        return self.mu_sign * self.mu_scale * (np.sum(np.abs(u) ** 2, axis=0) - 1.0)

    def dmu(self, u, w):
        """Directional derivative of the moment map at u along w."""
        u = self.components(u)
        w = self.components(w)
        return 2.0 * self.mu_sign * self.mu_scale * np.real(herm(u, w))

    def infinitesimal_action(self, a, u):
        """Vector field of the circle action: X_a(u) = i a u, a real."""
        u = self.components(u)
        return 1j * np.asarray(a) * u

    def split_tangent(self, u, xi):
        """Split xi into the gauge plane span_R{iu, u} and its orthocomplement.

        Parameters
        ----------
        u : complex array, shape (n, ...)
            Base points; must be nonvanishing.
        xi : complex array, same shape
            Tangent vectors.

        Returns
        -------
        SplitVector
            horizontal + vertical == xi, with Re<h, v> = 0 pointwise.
        """
        u = self.components(u)
        xi = self.components(xi)
        norm2 = np.sum(np.abs(u) ** 2, axis=0)
        if np.any(norm2 < 1e-24):
            raise ZeroBasePoint("cannot split tangent vectors over a zero of u")
        # real-orthonormal gauge-plane basis {iu, u}/|u|
        c_iu = np.real(herm(xi, 1j * u)) / norm2
        c_u = np.real(herm(xi, u)) / norm2
        vertical = (c_iu * 1j + c_u) * u
        return SplitVector(horizontal=xi - vertical, vertical=vertical)

    def project_to_level_set(self, u):
        """Radially project u onto mu^-1(0).

        Returns the projected field u / |u| together with the logarithmic
        gap h = -log|u|, so that u = e^{-h} * (projection).
        """
        u = self.components(u)
        r = np.sqrt(np.sum(np.abs(u) ** 2, axis=0))
        if np.any(r < 1e-150):
            raise ZeroBasePoint("cannot project a vanishing field onto the level set")
        return u / r, -np.log(r)
