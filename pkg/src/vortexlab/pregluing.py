"""Approximate solutions glued from vortex clusters and a disk background.

A stable configuration pairs one projective disk component with a list of
vortex components, one per disk marker.  For a gluing parameter eps the
assembled field lives on a large grid: each vortex is translated to its
anchor z_i/eps and copied verbatim inside the innermost gluing ball, the
rescaled disk fills the far region, and the neck annuli interpolate between
the two in the pole-free gauge,

    u = e^{-i lam theta} (x + beta_out (u_check_disk - x)
                            + beta_in  (u_check_vortex - x)),

with the connection blended the same way plus the lam dtheta pole.  Here
u_check_vortex = e^{i lam theta} u_vortex and u_check_disk = e^{-i m theta}
u_disk both tend to the common frame vector x at the anchor, where lam is
the vortex holonomy and m the common vanishing order of the disk tuple at
the marker.  When m = -lam (degree-matched disk) both seams of the neck are
continuous; a disk that does not vanish at the marker is allowed and leaves
an honest phase seam at the outer neck edge.

The disk background is the tuple f/|f| built directly on the grid, so disks
whose components vanish at the markers (the usual degree-matched case) are
accepted as long as the zeros stay inside the gluing balls.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid_domain import (Grid, GluingGeometry, OverlappingAnnuli, WeightSpec,
                          REGION_DISK, REGION_NECK_BASE, classify_region,
                          cutoff_beta)
from .target_model import TargetModel
from .gauged_field import (CHART_RADIUS, GaugedField, NotInChart,
                           coulomb_residual, energy, extract_deformation,
                           holonomy_at_infinity, load_snapshot, save_snapshot,
                           vortex_residual)
from .linalg import bilinear_sample
from .quotient_disk import CommonZero, chordal_distance, horizontal_connection
from .taubes import solve_taubes
from .weighted_norms import eps_mixed_norm, lp_weighted


class MatchingViolation(ValueError):
    """A vortex limit at infinity misses the disk value at its marker."""


# raised when gluing annuli collide with each other or the grid boundary
AnnulusOverlap = OverlappingAnnuli

_BOUNDARY_TOL = 1e-12


@dataclass(frozen=True)
class AnchorFrame:
    """Local gauge frame of one vortex component at its anchor.

    ``x`` is the common unit target vector of the blend chart, ``lam``
    the vortex holonomy, ``omega`` the constant phase pre-rotating the
    vortex into the disk's frame, ``vanishing_order`` the common zero
    order of the disk tuple at the marker, and ``distance`` the chordal
    mismatch between the two quotient limits.
    """

    marker: complex
    lam: int
    omega: float
    vanishing_order: int
    distance: float
    x: tuple


@dataclass(frozen=True)
class StableConfig:
    """One disk component plus one vortex component per disk marker.

    ``components`` holds the solved vortex fields in the same order as
    ``vortices``; ``assemble_config`` fills it.  Construction validates
    the marker bookkeeping; the matching condition is checked once the
    component fields exist (assemble_config and preglue both check).
    """

    disk: DiskComponent
    vortices: tuple
    match_tolerance: float = 5e-2
    components: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "vortices", tuple(self.vortices))
        object.__setattr__(self, "components", tuple(self.components))
        if self.match_tolerance <= 0:
            raise ValueError("match_tolerance must be positive")
        if not self.vortices:
            raise ValueError("a stable configuration needs at least one "
                             "vortex component")
        markers = self.disk.markers
        if len(self.vortices) != len(markers):
            raise ValueError("%d vortex components for %d disk markers; "
                             "each marker carries exactly one component"
                             % (len(self.vortices), len(markers)))
        taken = [False] * len(markers)
        for v in self.vortices:
            hits = [k for k, z in enumerate(markers)
                    if abs(v.marker - z) <= 1e-9]
            if not hits:
                raise ValueError("component marker %s is not a disk marker"
                                 % format(v.marker, "g"))
            k = hits[0]
            if taken[k]:
                raise ValueError("disk marker %s carries two components"
                                 % format(markers[k], "g"))
            taken[k] = True
            expected = "HalfPlane" if (self.domain_tag == "HalfPlane"
                                       and abs(v.marker.imag) <= _BOUNDARY_TOL) \
                else "Plane"
            if v.domain_tag != expected:
                raise ValueError(
                    "marker %s needs a %s component, got %s"
                    % (format(v.marker, "g"), expected, v.domain_tag))
        if self.components:
            if len(self.components) != len(self.vortices):
                raise ValueError("components and vortices differ in length")
            for sol, v in zip(self.components, self.vortices):
                if sol.data != v:
                    raise ValueError("solved component does not match its "
                                     "vortex data (marker %s)"
                                     % format(v.marker, "g"))

    @property
    def domain_tag(self):
        """Domain of the glued field, declared by the disk's wall flag."""
        return "HalfPlane" if self.disk.boundary_lagrangian else "Plane"


@dataclass(frozen=True)
class ApproximateSolution:
    """Assembled field with its gluing geometry and region bookkeeping.

    ``provenance`` tags every node with the region that produced it
    (ball index i, 128 + i on neck i, 255 in the disk region); ``frames``
    carries the per-anchor gauge data used by the blend.
    """

    field: GaugedField
    geometry: GluingGeometry
    provenance: np.ndarray
    config: StableConfig = None
    frames: tuple = ()


def _default_component_grid(tag):
    if tag == "HalfPlane":
        return Grid.half_plane(0j, 20.0, 161)
    return Grid.plane(0j, 20.0, 161)


def assemble_config(disk, vortices, match_tolerance=5e-2, component_grid=None,
                    tol=1e-9, max_newton=40):
    """Solve every vortex component and return the checked configuration.

    ``component_grid`` is used for each component whose domain matches its
    tag; other components get a default grid of the same size.  Raises
    MatchingViolation when a component's limit at infinity misses the disk
    value at its marker by more than ``match_tolerance``.
    """
    cfg = StableConfig(disk, tuple(vortices), match_tolerance)
    sols = []
    for v in cfg.vortices:
        grid = component_grid
        if grid is None or grid.domain_tag != v.domain_tag:
            grid = _default_component_grid(v.domain_tag)
        sols.append(solve_taubes(v, grid, tol=tol, max_newton=max_newton))
    cfg = StableConfig(disk, cfg.vortices, match_tolerance, tuple(sols))
    _require_matching(cfg, matching_report(cfg))
    return cfg


# -- local frames -------------------------------------------------------

def _root_multiplicity(coeffs, z0):
    """Multiplicity of z0 as a root, with the deflated coefficients."""
    c = np.asarray(coeffs, dtype=complex)
    scale = 1e-9 * max(1.0, float(np.max(np.abs(c)))) \
        * max(1.0, abs(z0)) ** (len(c) - 1)
    order = 0
    while len(c) >= 2:
        q, r = np.polydiv(c, np.array([1.0, -z0], dtype=complex))
        if abs(complex(r[-1])) > scale:
            break
        order += 1
        c = q
    return order, c


def disk_frame(disk, marker):
    """Vanishing order and unit frame vector of the disk tuple at a marker.

    The frame is the continuous extension of the quotient value: each
    component is deflated by the common vanishing order m before
    evaluation, so disks whose tuple vanishes at the marker (local degree
    m) still produce a well-defined unit vector.
    """
    marker = complex(marker)
    orders, deflated = [], []
    for c in disk.polys:
        arr = np.asarray(c, dtype=complex)
        if not np.any(np.abs(arr) > 0.0):
            orders.append(None)
            deflated.append(arr)
            continue
        order, _ = _root_multiplicity(arr, marker)
        orders.append(order)
        deflated.append(arr)
    finite = [o for o in orders if o is not None]
    m = min(finite)
    vals = np.empty(len(disk.polys), dtype=complex)
    for a, (c, order) in enumerate(zip(deflated, orders)):
        if order is None:
            vals[a] = 0.0
            continue
        cc = c
        for _ in range(m):
            cc, _rem = np.polydiv(cc, np.array([1.0, -marker], dtype=complex))
        vals[a] = complex(np.polyval(cc, marker))
    norm = float(np.sqrt(np.sum(np.abs(vals) ** 2)))
    if norm <= 1e-12:
        raise CommonZero("deflated disk tuple vanishes at marker %s"
                         % format(marker, "g"))
    return m, vals / norm


def asymptotic_frame(v, lam=None, samples=720):
    """Limit of e^{i lam theta} u on the outermost sampling arc.

    For plane fields ``lam`` defaults to the measured holonomy and the arc
    is a full circle; half-plane fields use lam = 0 and a semicircle.
    Returns (lam, x) with x a unit vector.
    """
    grid = v.grid
    radius = grid.half_width - 2.0 * grid.spacing
    if grid.domain_tag == "Plane":
        if lam is None:
            lam = holonomy_at_infinity(v, radius=radius)
        theta = np.linspace(0.0, 2.0 * np.pi, samples, endpoint=False)
    else:
        if lam is None:
            lam = 0
        theta = np.linspace(0.0, np.pi, samples // 2 + 1)
    zs = grid.center + radius * np.exp(1j * theta)
    vals = np.empty((v.model.n, theta.size), dtype=complex)
    for alpha in range(v.model.n):
        vals[alpha] = bilinear_sample(v.u[alpha], grid.s_coords, grid.t_coords,
                                      zs.real, zs.imag)
    x = np.mean(np.exp(1j * lam * theta) * vals, axis=1)
    norm = float(np.sqrt(np.sum(np.abs(x) ** 2)))
    if norm <= 1e-8:
        raise ValueError("asymptotic average of the component vanishes; "
                         "no limit frame on the sampling arc")
    return int(lam), x / norm


def _alignment_phase(x_disk, x_vortex):
    """Constant rotation e^{i omega} taking the vortex frame onto the disk
    frame, snapped to +-1 when the overlap is essentially real so exact
    copies stay exact."""
    c = complex(np.sum(np.asarray(x_disk) * np.conj(np.asarray(x_vortex))))
    if abs(c) == 0.0:
        return 0.0, 1.0 + 0.0j
    if abs(c.imag) <= 1e-12 * abs(c.real):
        rot = 1.0 + 0.0j if c.real > 0 else -1.0 + 0.0j
        return float(np.angle(rot)), rot
    omega = float(np.angle(c))
    return omega, np.exp(1j * omega)


def matching_report(config):
    """AnchorFrame per component, in component order.

    Pure diagnostics: computes the numeric asymptotics, the deflated disk
    frames, the alignment phases, and the chordal mismatch, without
    enforcing the tolerance.
    """
    if not config.components:
        raise ValueError("configuration carries no solved components; "
                         "build it with assemble_config")
    frames = []
    for sol in config.components:
        lam, x_v = asymptotic_frame(sol.field)
        m, x_d = disk_frame(config.disk, sol.data.marker)
        omega, _rot = _alignment_phase(x_d, x_v)
        dist = chordal_distance(x_v, x_d)
        frames.append(AnchorFrame(marker=complex(sol.data.marker), lam=lam,
                                  omega=omega, vanishing_order=m,
                                  distance=dist,
                                  x=tuple(complex(c) for c in x_d)))
    return tuple(frames)


def _require_matching(config, frames):
    for fr in frames:
        if fr.distance > config.match_tolerance:
            raise MatchingViolation(
                "component at marker %s misses the disk value by %.3e "
                "(tolerance %.3e)" % (format(fr.marker, "g"), fr.distance,
                                      config.match_tolerance))


# -- disk background ----------------------------------------------------

def _winding_lift(disk, grid, centers, radius, threshold=1e-8):
    """f/|f| on a grid, tolerating zeros close to the given centers.

    Unlike the strict quotient lift this accepts tuples that vanish at
    the markers, as degree-matched gluing disks must; any node where the
    squared modulus dips below ``threshold`` has to lie within ``radius``
    of some center, else CommonZero.  Values at those nodes are garbage
    and the caller is expected to overwrite them.
    """
    fvals = disk.evaluate(grid.zmesh)
    big_f = np.sum(np.abs(fvals) ** 2, axis=0)
    low = big_f < threshold
    if np.any(low):
        dmin = np.full(grid.zmesh.shape, np.inf)
        for c in centers:
            dmin = np.minimum(dmin, np.abs(grid.zmesh - c))
        stray = low & (dmin > radius)
        if np.any(stray):
            j, i = np.argwhere(stray)[0]
            raise CommonZero(
                "disk tuple dips to %.3e at %s, outside every gluing ball"
                % (float(big_f[j, i]), format(grid.zmesh[j, i], "g")))
    with np.errstate(divide="ignore", invalid="ignore"):
        u = fvals / np.sqrt(np.maximum(big_f, 1e-300))
        phi, psi = horizontal_connection(u, grid.spacing)
    phi = np.nan_to_num(phi, nan=0.0, posinf=0.0, neginf=0.0)
    psi = np.nan_to_num(psi, nan=0.0, posinf=0.0, neginf=0.0)
    model = TargetModel(n=len(disk.polys))
    if disk.boundary_lagrangian:
        wall_ok = ~low[0, :]
        if np.any(wall_ok):
            wall = np.abs(u[:, 0, :][:, wall_ok])
            radii = np.asarray(model.lagrangian_radii)[:, np.newaxis]
            dev = float(np.max(np.abs(wall - radii)))
            if dev > 1e-8:
                raise ValueError("wall moduli miss the Lagrangian radii "
                                 "by %.3e" % dev)
    holo = -disk.degree if grid.domain_tag == "Plane" else 0
    return GaugedField(grid, model, u, phi, psi, holo)


def rescaled_disk(config, eps, grid, zero_radius=None):
    """The disk background s_eps^* u_disk as a field on the glued grid.

    The tuple is evaluated on the shrunk copy of ``grid`` (spacing
    eps dx), so node k of the result carries the disk value at eps z_k
    and the connection the one-form weight eps.  ``zero_radius`` bounds,
    at glued scale, how far from a marker the tuple may vanish.
    """
    eps = float(eps)
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    shrunk = Grid(grid.domain_tag, grid.center * eps, grid.half_width * eps,
                  grid.spacing * eps, grid.nx, grid.ny)
    markers = config.disk.markers
    if zero_radius is None:
        if len(markers) > 1:
            sep = min(abs(a - b) for k, a in enumerate(markers)
                      for b in markers[k + 1:])
            zero_radius = 0.25 * sep / eps
        else:
            zero_radius = 0.25 * grid.half_width
    small = _winding_lift(config.disk, shrunk, markers, eps * zero_radius)
    return GaugedField(grid, small.model, small.u, eps * small.phi,
                       eps * small.psi, small.holonomy)


# -- sampling -----------------------------------------------------------

def _exact_indices(grid, s_q, t_q):
    """Integer node indices when every query point is a lattice node."""
    dx = grid.spacing
    fs = (s_q - grid.s_coords[0]) / dx
    ft = (t_q - grid.t_coords[0]) / dx
    cs = np.rint(fs)
    ct = np.rint(ft)
    if (np.max(np.abs(fs - cs), initial=0.0) > 1e-8
            or np.max(np.abs(ft - ct), initial=0.0) > 1e-8):
        return None
    cols = cs.astype(int)
    rows = ct.astype(int)
    if (cols.min(initial=0) < 0 or rows.min(initial=0) < 0
            or cols.max(initial=0) >= grid.nx or rows.max(initial=0) >= grid.ny):
        return None
    return rows, cols

def _sample_gauged(v, s_q, t_q):
    """Matter and connection values of a field at scattered points.

    Queries landing exactly on grid nodes are copied bit-for-bit; other
    points fall back to bilinear interpolation.
    """
    grid = v.grid
    hit = _exact_indices(grid, s_q, t_q)
    if hit is not None:
        rows, cols = hit
        return v.u[:, rows, cols].copy(), v.phi[rows, cols].copy(), \
            v.psi[rows, cols].copy()
    u = np.empty((v.model.n, len(s_q)), dtype=complex)
    for alpha in range(v.model.n):
        u[alpha] = bilinear_sample(v.u[alpha], grid.s_coords, grid.t_coords,
                                   s_q, t_q)
    phi = bilinear_sample(v.phi, grid.s_coords, grid.t_coords, s_q, t_q)
    psi = bilinear_sample(v.psi, grid.s_coords, grid.t_coords, s_q, t_q)
    return u, phi, psi


# -- assembly -----------------------------------------------------------

def _auto_grid(tag, anchors, outer, spacing):
    need = 0.0
    for a in anchors:
        need = max(need, abs(a.real) + outer, abs(a.imag) + outer)
    k = int(np.ceil((need + 2.0 * spacing) / spacing))
    hw = k * spacing
    nx = 2 * k + 1
    ny = k + 1 if tag == "HalfPlane" else nx
    return Grid(tag, 0j, hw, spacing, nx, ny)


def _snap_to_lattice(grid, z):
    s = grid.s_coords[0] + grid.spacing * round((z.real - grid.s_coords[0])
                                                / grid.spacing)
    t = grid.t_coords[0] + grid.spacing * round((z.imag - grid.t_coords[0])
                                                / grid.spacing)
    return complex(s, t)


def preglue(config, eps, geometry=None, grid=None):
    """Assemble the approximate solution at gluing parameter eps.

    Each vortex is copied inside its innermost ball (bit-identical when
    the grids align), the rescaled disk fills the far region, and the
    neck annuli blend the two in the pole-free gauge with the inner and
    outer cutoffs.  Anchors are snapped to the glued lattice so the
    translated components land on nodes.

    ``geometry`` supplies the annulus parameters (b, e); by default the
    glued grid reuses the component spacing and is sized to contain all
    necks.  Raises MatchingViolation, AnnulusOverlap (annuli collide or
    leave the grid), or NotInChart (a neck displacement exceeds the flat
    chart radius).
    """
    eps = float(eps)
    if eps <= 0.0:
        raise ValueError("eps must be positive")
    frames = matching_report(config)
    _require_matching(config, frames)
    n_target = len(config.disk.polys)
    for sol in config.components:
        if sol.field.model.n != n_target:
            raise ValueError("component and disk target sizes differ")

    spacings = [sol.field.grid.spacing for sol in config.components]
    dxv = spacings[0]
    if max(abs(s - dxv) for s in spacings) > 1e-12 * dxv:
        raise ValueError("component grids must share one spacing")

    b, e = (geometry.b, geometry.e) if geometry is not None else (8.0, 4.0)
    probe = GluingGeometry(eps, (0j,), b, e)
    outer = probe.radii[4]
    anchors0 = tuple(sol.data.marker / eps for sol in config.components)
    if geometry is not None:
        if abs(geometry.epsilon - eps) > 1e-12 * eps:
            raise ValueError("geometry.epsilon disagrees with eps")
        if len(geometry.anchors) != len(anchors0) or any(
                abs(a - z) > 0.51 * dxv + 1e-9
                for a, z in zip(geometry.anchors, anchors0)):
            raise ValueError("geometry anchors disagree with marker/eps")

    if grid is None:
        grid = _auto_grid(config.domain_tag, anchors0, outer, dxv)
    elif grid.domain_tag != config.domain_tag:
        raise ValueError("glued grid lives on %s, configuration on %s"
                         % (grid.domain_tag, config.domain_tag))

    anchors = tuple(_snap_to_lattice(grid, a) for a in anchors0)
    geometry = GluingGeometry(eps, anchors, b, e)
    r_ball = geometry.radii[0]

    s_lo, s_hi = grid.s_coords[0], grid.s_coords[-1]
    t_lo, t_hi = grid.t_coords[0], grid.t_coords[-1]
    for i, a in enumerate(anchors):
        fits = (a.real - outer >= s_lo - 1e-9 and a.real + outer <= s_hi + 1e-9
                and a.imag + outer <= t_hi + 1e-9)
        if grid.domain_tag == "Plane":
            fits = fits and a.imag - outer >= t_lo - 1e-9
        if not fits:
            raise AnnulusOverlap("neck %d (radius %.3g around %s) leaves the "
                                 "grid hull" % (i, outer, format(a, "g")))
    for sol in config.components:
        vg = sol.field.grid
        if outer > vg.half_width - 2.0 * vg.spacing + 1e-9:
            raise ValueError(
                "component grid (half width %.3g) cannot feed the neck out "
                "to radius %.3g; enlarge it or increase eps"
                % (vg.half_width, outer))

    background = rescaled_disk(config, eps, grid, zero_radius=r_ball)
    u_out = background.u.copy()
    phi_out = background.phi.copy()
    psi_out = background.psi.copy()

    zmesh = grid.zmesh
    regions = classify_region(zmesh, geometry)

    for i, (sol, fr) in enumerate(zip(config.components, frames)):
        zeta = anchors[i]
        x = np.asarray(fr.x, dtype=complex)
        lam = fr.lam
        m = fr.vanishing_order
        _lam, x_v = asymptotic_frame(sol.field, lam=lam)
        _omega, rot = _alignment_phase(x, x_v)

        ball = regions == i
        jj, ii = np.nonzero(ball)
        w = zmesh[jj, ii] - zeta
        u_b, phi_b, psi_b = _sample_gauged(sol.field, w.real, w.imag)
        u_out[:, jj, ii] = rot * u_b
        phi_out[jj, ii] = phi_b
        psi_out[jj, ii] = psi_b

        neck = regions == REGION_NECK_BASE + i
        jj, ii = np.nonzero(neck)
        w = zmesh[jj, ii] - zeta
        d2 = w.real ** 2 + w.imag ** 2
        theta = np.angle(w)
        ths = -w.imag / d2
        tht = w.real / d2
        beta_in = cutoff_beta(zmesh[jj, ii], geometry, "inner", i)
        beta_out = cutoff_beta(zmesh[jj, ii], geometry, "outer")

        u_v, phi_v, psi_v = _sample_gauged(sol.field, w.real, w.imag)
        twist = np.exp(1j * lam * theta)
        xi_v = twist * (rot * u_v) - x[:, None]
        phic_v = phi_v - lam * ths
        psic_v = psi_v - lam * tht

        untw_d = np.exp(-1j * m * theta)
        xi_d = untw_d * u_out[:, jj, ii] - x[:, None]
        phic_d = phi_out[jj, ii] + m * ths
        psic_d = psi_out[jj, ii] + m * tht

        blend = beta_out * xi_d + beta_in * xi_v
        disp = float(np.max(np.abs(blend), initial=0.0))
        if disp >= CHART_RADIUS:
            raise NotInChart(
                "neck %d displacement %.3f exceeds the chart radius %.2f; "
                "the configuration is too far from its limit at this eps"
                % (i, disp, CHART_RADIUS))
        untw = np.exp(-1j * lam * theta)
        u_out[:, jj, ii] = untw * (x[:, None] + blend)
        phi_out[jj, ii] = beta_out * phic_d + beta_in * phic_v + lam * ths
        psi_out[jj, ii] = beta_out * psic_d + beta_in * psic_v + lam * tht

    glued = GaugedField(grid, background.model, u_out, phi_out, psi_out,
                        background.holonomy)
    return ApproximateSolution(field=glued, geometry=geometry,
                               provenance=regions, config=config,
                               frames=frames)


def wrap_exact(sol, eps=1.0, b=8.0, e=4.0):
    """Wrap one solved component as a neck-free approximate solution.

    The whole grid counts as that component's ball, so the error
    functional sees the component's own residual and nothing else.
    """
    geometry = GluingGeometry(float(eps), (sol.field.grid.center,), b, e)
    provenance = np.zeros((sol.field.grid.ny, sol.field.grid.nx),
                          dtype=np.uint8)
    lam, x_v = asymptotic_frame(sol.field)
    frame = AnchorFrame(marker=complex(sol.data.marker), lam=lam, omega=0.0,
                        vanishing_order=0, distance=0.0,
                        x=tuple(complex(c) for c in x_v))
    return ApproximateSolution(field=sol.field, geometry=geometry,
                               provenance=provenance, config=None,
                               frames=(frame,))


# -- diagnostics --------------------------------------------------------

def pregluing_error(approx, spec=None):
    """Weighted norm of the three-component residual of the glued field.

    The first two components are the vortex equations; the third is the
    Coulomb functional relative to the approximate solution itself, which
    vanishes identically (the glued field is its own gauge reference).
    The norm is the glued-weight Lp with the anchors of the geometry.
    """
    geometry = approx.geometry
    if spec is None:
        spec = WeightSpec(p=3.0, epsilon=geometry.epsilon, family="RhoGlued",
                          node_anchors=geometry.anchors)
    if spec.family != "RhoGlued":
        raise ValueError("pregluing error needs the glued weight family")
    if abs(spec.epsilon - geometry.epsilon) > 1e-12 * geometry.epsilon:
        raise ValueError("spec.epsilon disagrees with the geometry")
    if len(spec.node_anchors) != len(geometry.anchors) or any(
            abs(a - z) > 1e-9 for a, z in zip(spec.node_anchors,
                                              geometry.anchors)):
        raise ValueError("spec anchors disagree with the geometry")
    fo, ce = vortex_residual(approx.field)
    third = coulomb_residual(approx.field, approx.field)
    mag = np.sqrt(np.sum(np.abs(fo) ** 2, axis=0) + ce ** 2 + third ** 2)
    return float(lp_weighted(mag, approx.field.grid, spec))


def cluster_energies(approx):
    """Energy split by provenance region, plus the total.

    Keys: ``ball_i`` per component ball, ``neck_i`` per neck annulus,
    ``disk`` for the far region, ``total``.  The regions partition the
    nodes, so the region energies sum to the total exactly (up to float
    summation order).
    """
    total, density = energy(approx.field)
    cells = density * approx.field.grid.quad_weights
    prov = approx.provenance
    table = {}
    for code in np.unique(prov):
        if code == REGION_DISK:
            key = "disk"
        elif code >= REGION_NECK_BASE:
            key = "neck_%d" % (int(code) - REGION_NECK_BASE)
        else:
            key = "ball_%d" % int(code)
        table[key] = float(np.sum(cells[prov == code]))
    table["total"] = total
    return table


def capped_component(approx, index):
    """Component ``index`` of the glued field, capped by its constant limit.

    On the component's own grid: the approximate solution (translated
    back) inside the middle ball of radius 1/sqrt(eps), the covariantly
    constant pair (e^{-i lam theta} x, lam dtheta) outside.  Comparing
    this against the free component measures how much the gluing bends
    the cluster.
    """
    sol = approx.config.components[index]
    fr = approx.frames[index]
    zeta = approx.geometry.anchors[index]
    r_mid = approx.geometry.radii[2]
    vg = sol.field.grid
    zc = vg.zmesh
    d = np.abs(zc)
    inside = d <= r_mid

    with np.errstate(divide="ignore", invalid="ignore"):
        theta = np.angle(zc)
        d2 = zc.real ** 2 + zc.imag ** 2
        ths = np.where(d2 > 0, -zc.imag / d2, 0.0)
        tht = np.where(d2 > 0, zc.real / d2, 0.0)
    x = np.asarray(fr.x, dtype=complex)
    lam = fr.lam
    u_cap = np.exp(-1j * lam * theta)[np.newaxis] * x[:, np.newaxis, np.newaxis]
    phi_cap = lam * ths
    psi_cap = lam * tht

    jj, ii = np.nonzero(inside)
    pts = zc[jj, ii] + zeta
    u_in, phi_in, psi_in = _sample_gauged(approx.field, pts.real, pts.imag)
    u_cap[:, jj, ii] = u_in
    phi_cap[jj, ii] = phi_in
    psi_cap[jj, ii] = psi_in
    return GaugedField(vg, sol.field.model, u_cap, phi_cap, psi_cap,
                       sol.field.holonomy)


def cap_distance(approx, index, p=3.0):
    """Mixed eps-norm between the capped component and the free one.

    The free component is pre-rotated into the disk's frame first, the
    same alignment the gluing applies, so the distance measures bending
    rather than the constant phase offset.
    """
    sol = approx.config.components[index]
    fr = approx.frames[index]
    capped = capped_component(approx, index)
    _lam, x_v = asymptotic_frame(sol.field, lam=fr.lam)
    _om, rot = _alignment_phase(np.asarray(fr.x), x_v)
    base = GaugedField(sol.field.grid, sol.field.model, rot * sol.field.u,
                       sol.field.phi, sol.field.psi, sol.field.holonomy)
    defm = extract_deformation(capped, base)
    spec = WeightSpec(p=p, epsilon=approx.geometry.epsilon, family="RhoGlued",
                      node_anchors=(0j,))
    return float(eps_mixed_norm(defm, base, spec).value)


# -- snapshot I/O -------------------------------------------------------

def save_approximate(approx, path):
    """Snapshot of the glued field with the region plane appended.

    The trailer holds one GLUE line (epsilon, b, e, anchors), one FRAME
    line per component, and the provenance bytes row-major after a
    PROVENANCE marker line.
    """
    save_snapshot(approx.field, path)
    lines = ["GLUE %r %r %r %d %s" % (
        approx.geometry.epsilon, approx.geometry.b, approx.geometry.e,
        len(approx.geometry.anchors),
        " ".join("%r %r" % (a.real, a.imag)
                 for a in approx.geometry.anchors))]
    for fr in approx.frames:
        lines.append("FRAME %r %r %d %r %d %r %s" % (
            fr.marker.real, fr.marker.imag, fr.lam, fr.omega,
            fr.vanishing_order, fr.distance,
            " ".join("%r %r" % (c.real, c.imag) for c in fr.x)))
    lines.append("PROVENANCE")
    trailer = ("\n".join(lines) + "\n").encode("ascii")
    with open(path, "ab") as fh:
        fh.write(trailer)
        fh.write(np.ascontiguousarray(approx.provenance,
                                      dtype=np.uint8).tobytes())


def load_approximate(path, config=None):
    """Read back a glued snapshot written by save_approximate."""
    v = load_snapshot(path)
    g = v.grid
    with open(path, "rb") as fh:
        fh.readline()
        fh.seek((2 * v.model.n + 2) * g.ny * g.nx * 8, 1)
        geometry = None
        frames = []
        for raw in fh:
            parts = raw.decode("ascii", errors="replace").split()
            if not parts:
                continue
            if parts[0] == "GLUE":
                eps, b, e = float(parts[1]), float(parts[2]), float(parts[3])
                count = int(parts[4])
                anchors = tuple(complex(float(parts[5 + 2 * k]),
                                        float(parts[6 + 2 * k]))
                                for k in range(count))
                geometry = GluingGeometry(eps, anchors, b, e)
            elif parts[0] == "FRAME":
                marker = complex(float(parts[1]), float(parts[2]))
                xs = tuple(complex(float(parts[7 + 2 * k]),
                                   float(parts[8 + 2 * k]))
                           for k in range((len(parts) - 7) // 2))
                frames.append(AnchorFrame(
                    marker=marker, lam=int(parts[3]), omega=float(parts[4]),
                    vanishing_order=int(parts[5]), distance=float(parts[6]),
                    x=xs))
            elif parts[0] == "PROVENANCE":
                plane = fh.read(g.ny * g.nx)
                if len(plane) != g.ny * g.nx:
                    raise ValueError("provenance plane truncated: %s" % path)
                provenance = np.frombuffer(plane, dtype=np.uint8) \
                    .reshape(g.ny, g.nx).copy()
                break
        else:
            raise ValueError("no provenance plane in %s" % path)
    if geometry is None:
        raise ValueError("no gluing geometry in %s" % path)
    return ApproximateSolution(field=v, geometry=geometry,
                               provenance=provenance, config=config,
                               frames=tuple(frames))
