"""Projective-space components and their unit-sphere lifts.

A polynomial tuple f = (f^1, ..., f^N) with no common zero defines a
holomorphic map into complex projective (N-1)-space.  Its canonical lift
u = f/|f| lands on the unit sphere, and there is a unique connection pair
(phi, psi) making the lifted derivatives orthogonal to the circle
direction iu; both have closed forms, assembled here into a GaugedField.
The module also provides the conformal rescaling z -> eps z of a lifted
field and phase-invariant evaluation in the quotient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gauged_field import GaugedField, d_ds, d_dt
from .grid_domain import Grid
from .linalg import bilinear_sample
from .target_model import TargetModel, herm

COMMON_ZERO_THRESHOLD = 1e-8


class CommonZero(ValueError):
    """The polynomial tuple (numerically) vanishes somewhere in the domain,
    so the quotient map is undefined there."""


class OutOfHull(ValueError):
    """A requested evaluation point lies outside the grid hull."""


def _coeffs(c):
    arr = np.asarray(c, dtype=complex)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("each component needs a nonempty 1-d coefficient list")
    return tuple(complex(x) for x in arr)


@dataclass(frozen=True)
class DiskComponent:
    """A projective component: polynomial tuple, marked points, wall flag.

    ``polys`` holds one coefficient list per component, highest degree
    first.  ``markers`` are the distinct attachment points carried to the
    gluing layer.  ``boundary_lagrangian`` declares that the map sends the
    wall of a half-plane into the Lagrangian torus of the target; the
    claim is verified numerically when the component is lifted.
    """

    polys: tuple
    markers: tuple = ()
    boundary_lagrangian: bool = False

    def __post_init__(self):
        polys = tuple(_coeffs(c) for c in self.polys)
        if not polys:
            raise ValueError("polys must hold at least one component")
        object.__setattr__(self, "polys", polys)
        markers = tuple(complex(z) for z in self.markers)
        object.__setattr__(self, "markers", markers)
        for i in range(len(markers)):
            for j in range(i + 1, len(markers)):
                if abs(markers[i] - markers[j]) <= 1e-12:
                    raise ValueError("markers must be pairwise distinct")

    @property
    def degree(self):
        degs = []
        for c in self.polys:
            mags = np.abs(np.asarray(c))
            nz = np.nonzero(mags > 0.0)[0]
            degs.append(-1 if nz.size == 0 else len(c) - 1 - int(nz[0]))
        return max(degs)

    def evaluate(self, z):
        """Component values, stacked along axis 0."""
        z = np.asarray(z, dtype=complex)
        rows = [np.polyval(np.asarray(c, dtype=complex), z) for c in self.polys]
        return np.stack(rows)

    def common_zeros(self):
        """Points where every component vanishes (numerically exact roots)."""
        candidates = None
        for c in self.polys:
            arr = np.trim_zeros(np.asarray(c, dtype=complex), "f")
            if arr.size > 1:
                candidates = np.roots(arr)
                break
            if arr.size == 1:
                return np.empty(0, dtype=complex)  # a nonzero constant
        if candidates is None:
            return np.empty(0, dtype=complex)  # identically zero tuple
        vals = self.evaluate(candidates)
        mask = np.sum(np.abs(vals) ** 2, axis=0) < 1e-20
        return candidates[mask]


@dataclass(frozen=True)
class LiftedDisk:
    """Unit-sphere lift of a projective component on a grid, with the
    quotient points at the component's markers."""

    field: GaugedField
    eval_at_markers: tuple


def horizontal_connection(u, spacing):
    """The unique (phi, psi) making d_s u + i phi u and d_t u + i psi u
    orthogonal to the circle direction iu at every node.

    Closed form: phi = -Im<d_s u, u> / |u|^2 and likewise for psi, with
    the difference quotients of np.gradient standing in for the
    derivatives.
    """
    u = np.asarray(u)
    norm2 = np.real(herm(u, u))
    phi = -np.imag(herm(d_ds(u, spacing), u)) / norm2
    psi = -np.imag(herm(d_dt(u, spacing), u)) / norm2
    return phi, psi


def chordal_distance(x, y):
    """Phase-invariant distance sqrt(1 - |<x, y>|^2) between the rays
    through x and y, after normalizing both."""
    x = np.asarray(x, dtype=complex)
    y = np.asarray(y, dtype=complex)
    nx2 = float(np.sum(np.abs(x) ** 2))
    ny2 = float(np.sum(np.abs(y) ** 2))
    if nx2 <= 0.0 or ny2 <= 0.0:
        raise ValueError("chordal distance needs nonzero representatives")
    overlap = abs(complex(np.sum(x * np.conj(y)))) ** 2 / (nx2 * ny2)
    return float(np.sqrt(max(0.0, 1.0 - overlap)))


def lift(disk, grid, threshold=COMMON_ZERO_THRESHOLD):
    """Lift a projective component to a gauged field on a grid.

    The matter field is f/|f| nodewise and the connection comes from
    horizontal_connection, so the circle-direction part of the covariant
    derivatives vanishes identically.  The wall condition is checked here
    when the component declares it.

    Raises
    ------
    CommonZero
        If the tuple has an exact common root inside the closed hull, or
        its squared modulus dips below ``threshold`` on the grid.
    OutOfHull
        If a marker lies outside the grid hull.
    """
    if disk.boundary_lagrangian and grid.domain_tag != "HalfPlane":
        raise ValueError("the wall condition needs a half-plane grid")

    s0, s1 = grid.s_coords[0], grid.s_coords[-1]
    t0, t1 = grid.t_coords[0], grid.t_coords[-1]
    for z in disk.common_zeros():
        if s0 <= z.real <= s1 and t0 <= z.imag <= t1:
            raise CommonZero("components share the zero %s inside the domain"
                             % format(z, "g"))

    fvals = disk.evaluate(grid.zmesh)
    big_f = np.sum(np.abs(fvals) ** 2, axis=0)
    low = float(np.min(big_f))
    if low < threshold:
        raise CommonZero("squared modulus of the tuple dips to %.3e on the "
                         "grid" % low)

    u = fvals / np.sqrt(big_f)
    phi, psi = horizontal_connection(u, grid.spacing)
    model = TargetModel(n=len(disk.polys))

    if disk.boundary_lagrangian:
        wall = np.abs(u[:, 0, :])
        radii = np.asarray(model.lagrangian_radii)[:, np.newaxis]
        dev = float(np.max(np.abs(wall - radii)))
        if dev > 1e-8:
            raise ValueError("wall moduli miss the Lagrangian radii by %.3e"
                             % dev)

    holo = -disk.degree if grid.domain_tag == "Plane" else 0
    field = GaugedField(grid, model, u, phi, psi, holo)
    lifted = LiftedDisk(field=field, eval_at_markers=())
    marks = tuple(evaluate_quotient(lifted, z) for z in disk.markers)
    return LiftedDisk(field=field, eval_at_markers=marks)


def rescale(lifted, eps):
    """Conformal rescaling z -> eps z of a lifted field.

    Pulls the field back under s_eps(z) = eps z: the matter field keeps
    its nodal values while the grid blows up by 1/eps, and the connection
    pair picks up the one-form weight eps.  No resampling happens; node k
    of the result sits at z_k / eps.
    """
    eps = float(eps)
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    v = lifted.field
    g = v.grid
    blown = Grid(g.domain_tag, g.center / eps, g.half_width / eps,
                 g.spacing / eps, g.nx, g.ny)
    return GaugedField(blown, v.model, v.u, eps * v.phi, eps * v.psi,
                       v.holonomy)


def evaluate_quotient(lifted, z):
    """Quotient point at z as a unit-sphere representative.

    Bilinear interpolation of the lifted matter field, re-projected to
    the sphere.  Comparisons should use chordal_distance, which forgets
    the representative's phase.
    """
    v = lifted.field
    g = v.grid
    z = complex(z)
    vals = np.empty(v.model.n, dtype=complex)
    try:
        for alpha in range(v.model.n):
            vals[alpha] = complex(bilinear_sample(
                v.u[alpha], g.s_coords, g.t_coords,
                np.array([z.real]), np.array([z.imag]))[0])
    except ValueError as err:
        raise OutOfHull("evaluation point %s is outside the grid hull"
                        % format(z, "g")) from err
    norm = float(np.sqrt(np.sum(np.abs(vals) ** 2)))
    if norm <= 0.0:
        raise CommonZero("interpolated field vanishes at %s" % format(z, "g"))
    return vals / norm
