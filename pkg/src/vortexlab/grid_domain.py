"""Truncation grids on the plane and half plane, weight functions, and gluing
geometry.

The weight families implement the three norms the solvers use: the single
vortex weight rho_A (1 near the origin, |z| far out, C^1 cubic blend on
[0.5, 1]), its rescaled version rho_{inf,eps}(z) = rho_A(eps z)/sqrt(eps),
and the glued weight that equals a translated rho_A inside each anchor ball
of radius 1/sqrt(eps) and the rescaled weight outside, with value
1/sqrt(eps) on the seam circles.

The gluing geometry tracks five radii around each anchor z_i/eps,

    1/(2b se) < 1/(b se) < 1/se < b/se < 2b/se,      se = sqrt(eps),

with the approximate solution exactly equal to the translated component
inside the innermost ball, exactly covariantly constant between radii two
and four, and exactly equal to the rescaled disk outside the outermost one.
Cutoff functions interpolate on the two sub-annuli in between.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class OverlappingAnnuli(Exception):
    """Gluing annuli around distinct anchors intersect."""


# region codes for provenance planes (uint8): ball index i -> i,
# neck around anchor i -> 128 + i, everything else -> 255.
REGION_DISK = 255
REGION_NECK_BASE = 128


@dataclass(frozen=True)
class Grid:
    """A uniform finite-difference grid over a square truncation window.

    Plane grids span [center - W, center + W] in both coordinates.
    Half-plane grids span the same s-range but t in [0, W], always
    including the boundary row t = 0 and nothing below it.
    """

    domain_tag: str
    center: complex
    half_width: float
    spacing: float
    nx: int
    ny: int

    def __post_init__(self):
        if self.domain_tag not in ("Plane", "HalfPlane"):
            raise ValueError("domain_tag must be 'Plane' or 'HalfPlane'")
        if self.spacing <= 0 or self.half_width <= 0:
            raise ValueError("spacing and half_width must be positive")
        if self.nx < 2 or self.ny < 2:
            raise ValueError("grid needs at least 2 nodes per direction")
        if abs(self.spacing * (self.nx - 1) - 2 * self.half_width) > self.spacing:
            raise ValueError("nx inconsistent with half_width/spacing")
        if self.domain_tag == "HalfPlane" and self.center.imag != 0.0:
            raise ValueError("half-plane grids are anchored on the real axis")

    @staticmethod
    def plane(center=0j, half_width=20.0, n=256):
        dx = 2.0 * float(half_width) / (n - 1)
        return Grid("Plane", complex(center), float(half_width), dx, int(n), int(n))

    @staticmethod
    def half_plane(center=0j, half_width=20.0, n=256):
        dx = 2.0 * float(half_width) / (n - 1)
        ny = int(round(float(half_width) / dx)) + 1
        return Grid("HalfPlane", complex(center), float(half_width), dx, int(n), ny)

    @property
    def s_coords(self):
        return self.center.real + (np.arange(self.nx) - (self.nx - 1) / 2.0) * self.spacing

    @property
    def t_coords(self):
        if self.domain_tag == "HalfPlane":
            return np.arange(self.ny) * self.spacing
        return self.center.imag + (np.arange(self.ny) - (self.ny - 1) / 2.0) * self.spacing

    @property
    def zmesh(self):
        s, t = np.meshgrid(self.s_coords, self.t_coords)
        return s + 1j * t

    @property
    def quad_weights(self):
        """Trapezoid quadrature weights, shape (ny, nx), including spacing^2."""
        wx = np.ones(self.nx)
        wx[0] = wx[-1] = 0.5
        wy = np.ones(self.ny)
        wy[0] = wy[-1] = 0.5
        return np.outer(wy, wx) * self.spacing ** 2

    @property
    def boundary_mask(self):
        """True on the outermost node ring (truncation edges, plus the
        physical boundary row for half-plane grids)."""
        m = np.zeros((self.ny, self.nx), dtype=bool)
        m[0, :] = m[-1, :] = True
        m[:, 0] = m[:, -1] = True
        return m

    def is_compatible(self, other):
        return (self.domain_tag == other.domain_tag
                and abs(self.spacing - other.spacing) < 1e-13 * self.spacing)


def _rho_a_of_r(r):
    r = np.asarray(r, dtype=float)
    # cubic Hermite blend: value 1/slope 0 at r=0.5, value 1/slope 1 at r=1
    t = np.clip((r - 0.5) / 0.5, 0.0, 1.0)
    blend = 1.0 + 0.5 * (t ** 3 - t ** 2)
    return np.where(r >= 1.0, np.maximum(r, 1.0), blend)


def rho_a(z):
    """Single-component weight: 1 inside |z| <= 0.5, |z| outside the unit
    disk, C^1 cubic Hermite blend in between."""
    return _rho_a_of_r(np.abs(np.asarray(z)))


def rho_inf_eps(z, epsilon):
    """Rescaled weight rho_A(eps z) / sqrt(eps)."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive for the rescaled weight")
    return rho_a(epsilon * np.asarray(z)) / np.sqrt(epsilon)


def rho_glued(z, epsilon, anchors):
    """Glued weight: translated rho_A inside each anchor ball of radius
    1/sqrt(eps), the rescaled weight outside; 1/sqrt(eps) on the seam."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive for the glued weight")
    if not len(anchors):
        raise ValueError("glued weight needs at least one anchor")
    z = np.asarray(z, dtype=complex)
    out = rho_inf_eps(z, epsilon)
    seam = 1.0 / np.sqrt(epsilon)
    for c in anchors:
        w = z - c
        mask = np.abs(w) <= seam
        if np.any(mask):
            out = np.where(mask, _rho_a_of_r(np.abs(w)), out)
    return out


@dataclass(frozen=True)
class WeightSpec:
    """Parameters selecting one weighted norm family.

    p must lie in (2, 4); delta defaults to the critical exponent
    2 - 4/p.  The RhoInfEps and RhoGlued families need epsilon > 0, and
    RhoGlued additionally needs the anchor list z_i/eps.
    """

    p: float = 3.0
    delta: float | None = None
    epsilon: float = 0.0
    family: str = "RhoA"
    node_anchors: tuple = ()

    def __post_init__(self):
        if not 2.0 < self.p < 4.0:
            raise ValueError("p must lie in (2, 4)")
        if self.delta is None:
            object.__setattr__(self, "delta", 2.0 - 4.0 / self.p)
        if self.family not in ("RhoA", "RhoInfEps", "RhoGlued"):
            raise ValueError("unknown weight family %r" % (self.family,))
        if self.family in ("RhoInfEps", "RhoGlued") and self.epsilon <= 0:
            raise ValueError("%s requires epsilon > 0" % self.family)
        if self.family == "RhoGlued" and not len(self.node_anchors):
            raise ValueError("RhoGlued requires node_anchors")
        object.__setattr__(self, "node_anchors",
                           tuple(complex(a) for a in self.node_anchors))


def weight_at(z, spec):
    """Evaluate the weight function of ``spec`` at complex points ``z``."""
    if spec.family == "RhoA":
        return rho_a(z)
    if spec.family == "RhoInfEps":
        return rho_inf_eps(z, spec.epsilon)
    return rho_glued(z, spec.epsilon, spec.node_anchors)


@dataclass(frozen=True)
class GluingGeometry:
    """Anchors z_i/eps plus the (b, e) annulus parameters for one gluing."""

    epsilon: float
    anchors: tuple
    b: float = 8.0
    e: float = 4.0

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.b <= 1.0:
            raise ValueError("b must exceed 1")
        if not 1.0 < self.e < self.b:
            raise ValueError("e must lie strictly between 1 and b")
        object.__setattr__(self, "anchors", tuple(complex(a) for a in self.anchors))
        r = self.radii
        if not all(r[k] < r[k + 1] for k in range(4)):
            raise ValueError("annulus radii are not strictly ordered")
        outer = r[4]
        a = self.anchors
        for i in range(len(a)):
            for j in range(i + 1, len(a)):
                if abs(a[i] - a[j]) <= 2.0 * outer:
                    raise OverlappingAnnuli(
                        "anchors %d and %d are %.4g apart; annuli of radius %.4g overlap"
                        % (i, j, abs(a[i] - a[j]), outer))

    @property
    def radii(self):
        se = np.sqrt(self.epsilon)
        b = self.b
        return (1.0 / (2 * b * se), 1.0 / (b * se), 1.0 / se, b / se, 2 * b / se)


def beta_profile(s):
    """Smoothstep cutoff: 1 on s <= -1, 0 on s >= 0, 1 - (3q^2 - 2q^3) with
    q = s + 1 in between.  sup |beta'| = 1.5."""
    s = np.asarray(s, dtype=float)
    q = np.clip(s + 1.0, 0.0, 1.0)
    return 1.0 - q * q * (3.0 - 2.0 * q)


def cutoff_beta(z, geometry, kind, index=0):
    """Evaluate a gluing cutoff at complex points ``z``.

    kind = "inner": the cutoff around anchor ``index``; 1 inside radius
    1/(2b se), 0 outside radius 1/(b se).
    kind = "outer": the far cutoff; 1 at distance >= 2b/se from every
    anchor, 0 wherever some anchor is within b/se.
    """
    z = np.asarray(z, dtype=complex)
    se = np.sqrt(geometry.epsilon)
    b = geometry.b
    with np.errstate(divide="ignore"):
        if kind == "inner":
            d = np.abs(z - geometry.anchors[index])
            return beta_profile(np.log2(d * b * se))
        if kind == "outer":
            out = None
            for c in geometry.anchors:
                d = np.abs(z - c)
                val = beta_profile(np.log2(b / se) - np.log2(d))
                out = val if out is None else np.minimum(out, val)
            return out
    raise ValueError("kind must be 'inner' or 'outer'")


def classify_region(z, geometry):
    """Region provenance codes: i inside the innermost ball of anchor i,
    128+i on its neck (out to radius 2b/se), 255 elsewhere."""
    z = np.asarray(z, dtype=complex)
    out = np.full(z.shape, REGION_DISK, dtype=np.uint8)
    r_check2, _, _, _, r_hat2 = geometry.radii
    for i, c in enumerate(geometry.anchors):
        d = np.abs(z - c)
        out[d < r_hat2] = REGION_NECK_BASE + i
        out[d <= r_check2] = i
    return out
