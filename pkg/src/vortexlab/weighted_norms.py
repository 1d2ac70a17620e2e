"""Weighted Sobolev norms for gauged fields and their deformations.

Every norm used by the solvers lives here: the weighted Lp norm, the
six-term mixed deformation norm, the horizontal and vertical split norms
on a lifted-disk background, the epsilon-rescaled mixed norm used during
gluing, and the auxiliary norm that the rescaling map turns it into.

All integrals are trapezoid quadrature on the field's grid, all sup
norms are grid maxima, and reductions use numpy's fixed pairwise
summation so repeated runs are bit-identical.
"""

from dataclasses import dataclass, field

import numpy as np

from .grid_domain import WeightSpec, weight_at
from .gauged_field import d_ds, d_dt

NORM_NAMES = (
    "Lp_weighted",
    "L1p_mixed",
    "L1p_horizontal",
    "L1p_vertical_g",
    "L1p_eps_mixed",
    "L1p_aux",
)


class NotHorizontal(Exception):
    """Raised when a section expected to be horizontal has a vertical part."""


@dataclass(frozen=True)
class NormReport:
    """A computed norm value with its per-term breakdown.

    Parameters
    ----------
    name : str
        One of ``NORM_NAMES``.
    value : float
        The norm value, equal to the sum of the breakdown entries.
    breakdown : dict
        Ordered map from term label to the term's value, one entry per
        summand of the defining display.
    """

    name: str
    value: float
    breakdown: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in NORM_NAMES:
            raise ValueError("unknown norm name %r" % (self.name,))
        if not (self.value >= 0.0):
            raise ValueError("norm value must be nonnegative")
        total = 0.0
        for term in self.breakdown.values():
            total += float(term)
        if abs(self.value - total) > 1e-12 * max(1.0, abs(self.value)):
            raise ValueError("breakdown does not sum to the reported value")

    def csv_header(self):
        return ",".join(["name", "value"] + list(self.breakdown.keys()))

    def to_csv_row(self):
        cells = [self.name, format(self.value, ".17g")]
        cells += [format(float(t), ".17g") for t in self.breakdown.values()]
        return ",".join(cells)


def section_magnitude(f):
    """Pointwise Euclidean magnitude of a stacked section.

    Arrays of shape (ny, nx) are taken elementwise; any extra leading
    axes are treated as component axes and summed in quadrature.
    """
    a = np.asarray(f)
    if a.ndim == 2:
        return np.abs(a)
    flat = a.reshape(-1, a.shape[-2], a.shape[-1])
    return np.sqrt(np.sum(np.abs(flat) ** 2, axis=0))


def _weight_power(grid, spec):
    rho = weight_at(grid.zmesh, spec)
    return rho ** (2.0 * spec.p - 4.0)


def lp_weighted(f, grid, spec=None):
    """Weighted Lp norm: (integral of |f|^p rho^(2p-4)) ** (1/p).

    Parameters
    ----------
    f : array
        Scalar field (ny, nx) or stacked section with leading component
        axes; complex entries contribute their modulus.
    grid : Grid
        Quadrature domain.
    spec : WeightSpec, optional
        Weight family and exponent; defaults to the plain polynomial
        weight with p = 3.
    """
    if spec is None:
        spec = WeightSpec()
    mag = section_magnitude(f)
    if mag.shape != (grid.ny, grid.nx):
        raise ValueError("field shape does not match the grid")
    integrand = mag ** spec.p * _weight_power(grid, spec)
    return float(np.sum(integrand * grid.quad_weights)) ** (1.0 / spec.p)


def sup_norm(f):
    """Grid maximum of the pointwise magnitude."""
    return float(np.max(section_magnitude(f)))


def _check_same_grid(defm, base):
    if defm.xi.shape[-2:] != (base.grid.ny, base.grid.nx):
        raise ValueError("deformation and base live on different grids")


def deformation_gradient(defm, base):
    """Covariant gradient of a deformation along the base gauge field.

    Returns the six slot arrays (D_s xi, D_t xi, d_s eta, d_t eta,
    d_s zeta, d_t zeta) where D is the covariant derivative twisted by
    the base connection, D_s xi = d_s xi + i phi xi.
    """
    _check_same_grid(defm, base)
    dx = base.grid.spacing
    ds_xi = d_ds(defm.xi, dx) + 1j * base.phi * defm.xi
    dt_xi = d_dt(defm.xi, dx) + 1j * base.psi * defm.xi
    return (
        ds_xi,
        dt_xi,
        d_ds(defm.eta, dx),
        d_dt(defm.eta, dx),
        d_ds(defm.zeta, dx),
        d_dt(defm.zeta, dx),
    )


def _gradient_magnitude(defm, base):
    slots = deformation_gradient(defm, base)
    sq = np.zeros((base.grid.ny, base.grid.nx))
    for a in slots:
        sq += section_magnitude(a) ** 2
    return np.sqrt(sq)


def mixed_norm(defm, base, spec=None):
    """Six-term mixed norm of a deformation over a vortex background.

    The terms, in display order: sup of |xi|, weighted Lp of the
    covariant gradient, of the moment-map derivative applied to xi and
    to J xi, and of eta and zeta.
    """
    if spec is None:
        spec = WeightSpec()
    _check_same_grid(defm, base)
    grid, model = base.grid, base.model
    terms = {
        "xi_sup": sup_norm(defm.xi),
        "cov_grad": lp_weighted(_gradient_magnitude(defm, base), grid, spec),
        "dmu_xi": lp_weighted(model.dmu(base.u, defm.xi), grid, spec),
        "dmu_Jxi": lp_weighted(model.dmu(base.u, 1j * defm.xi), grid, spec),
        "eta": lp_weighted(defm.eta, grid, spec),
        "zeta": lp_weighted(defm.zeta, grid, spec),
    }
    return NormReport("L1p_mixed", sum(terms.values()), terms)


def _split_pointwise(base, xi):
    """Horizontal and vertical parts of xi at every node."""
    horiz = np.empty_like(xi)
    vert = np.empty_like(xi)
    u = base.u
    sq = np.sum(np.abs(u) ** 2, axis=0)
    if np.any(sq < 1e-24):
        raise ValueError("base field vanishes somewhere; no splitting there")
    c_iu = np.sum((xi * np.conj(1j * u)).real, axis=0) / sq
    c_u = np.sum((xi * np.conj(u)).real, axis=0) / sq
    vert[:] = (c_iu * 1j + c_u) * u
    horiz[:] = xi - vert
    return horiz, vert


def horizontal_norm(xi_h, base, spec=None):
    """Two-term norm of a horizontal section: sup plus the weighted Lp
    of the horizontally projected covariant derivative.

    Raises
    ------
    NotHorizontal
        If the vertical part of the input exceeds 1e-10 at any node.
    """
    if spec is None:
        spec = WeightSpec()
    xi_h = np.asarray(xi_h, dtype=complex)
    if xi_h.ndim == 2:
        xi_h = xi_h[np.newaxis]
    if xi_h.shape != base.u.shape:
        raise ValueError("section shape does not match the base field")
    _, vert = _split_pointwise(base, xi_h)
    worst = float(np.max(section_magnitude(vert)))
    if worst >= 1e-10:
        raise NotHorizontal("vertical part reaches %.3e" % worst)
    return _horizontal_norm_terms(xi_h, base, spec)[0]


def _horizontal_norm_terms(xi_h, base, spec):
    dx = base.grid.spacing
    ds = d_ds(xi_h, dx) + 1j * base.phi * xi_h
    dt = d_dt(xi_h, dx) + 1j * base.psi * xi_h
    ds_h, _ = _split_pointwise(base, ds)
    dt_h, _ = _split_pointwise(base, dt)
    grad_mag = np.sqrt(section_magnitude(ds_h) ** 2 + section_magnitude(dt_h) ** 2)
    t_sup = sup_norm(xi_h)
    t_grad = lp_weighted(grad_mag, base.grid, spec)
    return t_sup + t_grad, {"xiH_sup": t_sup, "projected_grad": t_grad}


def _g_part_magnitude(defm, base):
    _, vert = _split_pointwise(base, defm.xi)
    return np.sqrt(
        section_magnitude(vert) ** 2 + defm.eta ** 2 + defm.zeta ** 2
    ), vert


def vertical_g_norm(defm, base, spec=None):
    """Vertical-block norm: weighted Lp of the gauge-direction triple
    (vertical xi, eta, zeta) plus its diagonally projected covariant
    gradient."""
    if spec is None:
        spec = WeightSpec()
    _check_same_grid(defm, base)
    grid = base.grid
    dx = grid.spacing
    g_mag, vert = _g_part_magnitude(defm, base)

    ds_v = d_ds(vert, dx) + 1j * base.phi * vert
    dt_v = d_dt(vert, dx) + 1j * base.psi * vert
    _, ds_vv = _split_pointwise(base, ds_v)
    _, dt_vv = _split_pointwise(base, dt_v)
    grad_sq = section_magnitude(ds_vv) ** 2 + section_magnitude(dt_vv) ** 2
    for a in (defm.eta, defm.zeta):
        grad_sq = grad_sq + d_ds(a, dx) ** 2 + d_dt(a, dx) ** 2
    terms = {
        "G_part": lp_weighted(g_mag, grid, spec),
        "diag_grad_G": lp_weighted(np.sqrt(grad_sq), grid, spec),
    }
    return NormReport("L1p_vertical_g", sum(terms.values()), terms)


def disk_split_norm(defm, base, spec=None):
    """Split norm on a lifted-disk background: horizontal two-term norm
    of the horizontal part plus the vertical-block norm."""
    if spec is None:
        spec = WeightSpec()
    _check_same_grid(defm, base)
    horiz, _ = _split_pointwise(base, defm.xi)
    t_h, _ = _horizontal_norm_terms(horiz, base, spec)
    t_g = vertical_g_norm(defm, base, spec).value
    terms = {"xiH_h": t_h, "G_g": t_g}
    return NormReport("L1p_mixed", sum(terms.values()), terms)


def full_connection_norm(defm, base, spec=None):
    """Four-term variant of the split norm that uses the unprojected
    covariant derivative on both blocks; returns a plain value.

    Used to measure the equivalence constant between the diagonal and
    full connections.
    """
    if spec is None:
        spec = WeightSpec()
    _check_same_grid(defm, base)
    grid = base.grid
    dx = grid.spacing
    horiz, vert = _split_pointwise(base, defm.xi)
    g_mag, _ = _g_part_magnitude(defm, base)

    ds_h = d_ds(horiz, dx) + 1j * base.phi * horiz
    dt_h = d_dt(horiz, dx) + 1j * base.psi * horiz
    grad_h = np.sqrt(section_magnitude(ds_h) ** 2 + section_magnitude(dt_h) ** 2)

    ds_v = d_ds(vert, dx) + 1j * base.phi * vert
    dt_v = d_dt(vert, dx) + 1j * base.psi * vert
    grad_g_sq = section_magnitude(ds_v) ** 2 + section_magnitude(dt_v) ** 2
    for a in (defm.eta, defm.zeta):
        grad_g_sq = grad_g_sq + d_ds(a, dx) ** 2 + d_dt(a, dx) ** 2

    return (
        sup_norm(horiz)
        + lp_weighted(g_mag, grid, spec)
        + lp_weighted(grad_h, grid, spec)
        + lp_weighted(np.sqrt(grad_g_sq), grid, spec)
    )


def aux_norm(defm, base, spec):
    """Auxiliary norm on the unit-scale side of the rescaling map:
    horizontal two-term norm, plus the weighted Lp of the vertical
    block, plus epsilon times that block's covariant gradient."""
    if spec.epsilon <= 0:
        raise ValueError("aux norm needs spec.epsilon > 0")
    _check_same_grid(defm, base)
    grid = base.grid
    dx = grid.spacing
    horiz, vert = _split_pointwise(base, defm.xi)
    t_h, _ = _horizontal_norm_terms(horiz, base, spec)
    g_mag, _ = _g_part_magnitude(defm, base)

    ds_v = d_ds(vert, dx) + 1j * base.phi * vert
    dt_v = d_dt(vert, dx) + 1j * base.psi * vert
    grad_sq = section_magnitude(ds_v) ** 2 + section_magnitude(dt_v) ** 2
    for a in (defm.eta, defm.zeta):
        grad_sq = grad_sq + d_ds(a, dx) ** 2 + d_dt(a, dx) ** 2

    terms = {
        "xiH_h": t_h,
        "G_part": lp_weighted(g_mag, grid, spec),
        "eps_grad_G": spec.epsilon * lp_weighted(np.sqrt(grad_sq), grid, spec),
    }
    return NormReport("L1p_aux", sum(terms.values()), terms)


def eps_mixed_norm(defm, base, spec):
    """Rescaled mixed norm used while gluing.

    With the glued weight family this is the six-term display (eta,
    zeta, the two moment-map terms, the covariant gradient, and the sup
    of xi) integrated against the glued weight. With the rescaled-disk
    family it is the three-term display: vertical block, covariant
    gradient, and sup of the horizontal part.
    """
    if spec.family not in ("RhoGlued", "RhoInfEps"):
        raise ValueError("eps norm needs the glued or rescaled weight family")
    _check_same_grid(defm, base)
    grid, model = base.grid, base.model
    if spec.family == "RhoGlued":
        terms = {
            "eta": lp_weighted(defm.eta, grid, spec),
            "zeta": lp_weighted(defm.zeta, grid, spec),
            "dmu_xi": lp_weighted(model.dmu(base.u, defm.xi), grid, spec),
            "dmu_Jxi": lp_weighted(model.dmu(base.u, 1j * defm.xi), grid, spec),
            "cov_grad": lp_weighted(_gradient_magnitude(defm, base), grid, spec),
            "xi_sup": sup_norm(defm.xi),
        }
    else:
        horiz, _ = _split_pointwise(base, defm.xi)
        g_mag, _ = _g_part_magnitude(defm, base)
        terms = {
            "G_part": lp_weighted(g_mag, grid, spec),
            "cov_grad": lp_weighted(_gradient_magnitude(defm, base), grid, spec),
            "xiH_sup": sup_norm(horiz),
        }
    return NormReport("L1p_eps_mixed", sum(terms.values()), terms)


def decay_tail(f, grid, spec=None):
    """Estimate the norm contribution lost to truncation.

    Fits |f| ~ C r^(-q) on the two outermost sampling rings of the
    grid and integrates the fitted profile (with the far-field weight
    rho = r) from the truncation radius outward. Returns the fitted
    exponent q and the estimated tail of the norm integral; the tail is
    infinite when the fitted decay is too slow to integrate.
    """
    if spec is None:
        spec = WeightSpec()
    mag = section_magnitude(f)
    r = np.abs(grid.zmesh)
    r_max = min(grid.half_width, np.max(r))
    shells = []
    for frac in (0.75, 0.95):
        radius = frac * r_max
        band = (r > radius - grid.spacing) & (r < radius + grid.spacing)
        if not np.any(band):
            return 0.0, 0.0
        shells.append((radius, float(np.mean(mag[band]))))
    (r1, m1), (r2, m2) = shells
    if m1 <= 0.0 or m2 <= 0.0:
        return 0.0, 0.0
    q = -np.log(m2 / m1) / np.log(r2 / r1)
    amp = m2 * r2 ** q
    # integral over r > R of (C r^-q)^p r^(2p-4) r dr, in closed form
    power = spec.p * q - (2.0 * spec.p - 2.0)
    if power <= 0.0:
        return float(q), float("inf")
    tail_integral = 2.0 * np.pi * amp ** spec.p * r_max ** (-power) / power
    return float(q), float(tail_integral ** (1.0 / spec.p))
