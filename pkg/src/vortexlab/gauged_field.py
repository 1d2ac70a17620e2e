"""Discrete gauged maps (u, phi, psi) and their pointwise geometry.

Derivatives are second-order central differences with one-sided closures at
grid edges (np.gradient, edge_order=2).  The flat chart around a reference
field is plain addition, valid while the matter displacement stays below 0.5
pointwise.  Energy integrals use trapezoid quadrature.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .grid_domain import Grid
from .linalg import SolverDiverged, bilinear_sample, pcg
from .target_model import TargetModel

CHART_RADIUS = 0.5


class NotInChart(Exception):
    """Deformation between the two fields exceeds the flat-chart radius."""


class FieldVanishesOnLoop(Exception):
    """The matter field has no component bounded away from zero on the
    sampling circle, so no winding number can be read off."""


@dataclass
class GaugedField:
    grid: Grid
    model: TargetModel
    u: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    holonomy: int = 0

    def __post_init__(self):
        shape = (self.grid.ny, self.grid.nx)
        self.u = np.ascontiguousarray(self.u, dtype=complex)
        if self.u.shape != (self.model.n,) + shape:
            if self.model.n == 1 and self.u.shape == shape:
                self.u = self.u[np.newaxis]
            else:
                raise ValueError("u must have shape (n, ny, nx)")
        self.phi = np.ascontiguousarray(self.phi, dtype=float)
        self.psi = np.ascontiguousarray(self.psi, dtype=float)
        if self.phi.shape != shape or self.psi.shape != shape:
            raise ValueError("phi/psi must have shape (ny, nx)")
        if self.grid.domain_tag == "HalfPlane" and self.holonomy != 0:
            raise ValueError("half-plane fields have trivial holonomy")

    def copy(self):
        return GaugedField(self.grid, self.model, self.u.copy(),
                           self.phi.copy(), self.psi.copy(), self.holonomy)


@dataclass
class FieldDeformation:
    xi: np.ndarray
    eta: np.ndarray
    zeta: np.ndarray

    def scaled(self, factor):
        return FieldDeformation(self.xi * factor, self.eta * factor,
                                self.zeta * factor)


def d_ds(arr, spacing):
    return np.gradient(arr, spacing, axis=-1, edge_order=2)


def d_dt(arr, spacing):
    return np.gradient(arr, spacing, axis=-2, edge_order=2)


def covariant_derivatives(v):
    """Covariant derivatives (v_s, v_t) = (d_s u + X_phi(u), d_t u + X_psi(u))."""
    dx = v.grid.spacing
    vs = d_ds(v.u, dx) + v.model.infinitesimal_action(v.phi, v.u)
    vt = d_dt(v.u, dx) + v.model.infinitesimal_action(v.psi, v.u)
    return vs, vt


def curvature(v):
    """Abelian curvature kappa = d_s psi - d_t phi."""
    dx = v.grid.spacing
    return d_ds(v.psi, dx) - d_dt(v.phi, dx)


def energy(v, volume_sigma=None):
    """Total energy and its density.

    density = (|v_s|^2 + |v_t|^2 + kappa^2 + mu(u)^2) * sigma / 2, integrated
    with trapezoid weights.  Returns (total, density).
    """
    vs, vt = covariant_derivatives(v)
    kappa = curvature(v)
    mu = v.model.moment_map(v.u)
    density = 0.5 * (np.sum(np.abs(vs) ** 2, axis=0)
                     + np.sum(np.abs(vt) ** 2, axis=0)
                     + kappa ** 2 + mu ** 2)
    if volume_sigma is not None:
        density = density * volume_sigma
    total = float(np.sum(density * v.grid.quad_weights))
    return total, density


def vortex_residual(v, volume_sigma=None):
    """Residual of the two vortex equations.

    Returns (first_order, curvature_eq): the complex d-bar type combination
    v_s + J v_t per matter component, and kappa + sigma * mu(u).
    """
    vs, vt = covariant_derivatives(v)
    first_order = vs + 1j * vt
    sigma = 1.0 if volume_sigma is None else volume_sigma
    curvature_eq = curvature(v) + sigma * v.model.moment_map(v.u)
    return first_order, curvature_eq


def gauge_transform(v, chi):
    """Apply the gauge transformation e^{i chi}: u -> e^{i chi} u,
    phi -> phi - d_s chi, psi -> psi - d_t chi."""
    chi = np.asarray(chi, dtype=float)
    dx = v.grid.spacing
    return GaugedField(v.grid, v.model,
                       np.exp(1j * chi) * v.u,
                       v.phi - d_ds(chi, dx),
                       v.psi - d_dt(chi, dx),
                       v.holonomy)


def extract_deformation(v, v_ref):
    """Resolve v = (flat chart at v_ref) + (xi, eta, zeta)."""
    xi = v.u - v_ref.u
    if np.max(np.abs(xi)) >= CHART_RADIUS:
        raise NotInChart("matter displacement %.3f exceeds the chart radius %.2f"
                         % (float(np.max(np.abs(xi))), CHART_RADIUS))
    return FieldDeformation(xi, v.phi - v_ref.phi, v.psi - v_ref.psi)


def apply_deformation(v_ref, d):
    return GaugedField(v_ref.grid, v_ref.model, v_ref.u + d.xi,
                       v_ref.phi + d.eta, v_ref.psi + d.zeta, v_ref.holonomy)


def coulomb_residual(v, v_ref):
    """Coulomb-gauge functional of v relative to v_ref:
    d_s eta + d_t zeta + dmu(u_ref) . (J xi)."""
    d = extract_deformation(v, v_ref)
    dx = v.grid.spacing
    return (d_ds(d.eta, dx) + d_dt(d.zeta, dx)
            + v_ref.model.dmu(v_ref.u, 1j * d.xi))


def _gauge_laplacian(grid, neumann_data=None):
    """Five-point -Lap on the unknown nodes of a gauge-fixing solve (SPD, CSR).

    Truncation edges carry homogeneous Dirichlet data and are eliminated.
    On a half-plane grid the physical row t=0 stays unknown, closed by ghost
    elimination of the Neumann condition d_t chi = g (g = neumann_data); the
    row is scaled by 1/2 to keep the matrix symmetric.

    Returns (L, affine, scale, idx): the full affine action of the scaled
    operator is L @ x + affine, ``scale`` is the per-unknown row scaling, and
    ``idx`` maps (j, i) nodes to unknown indices (-1 where eliminated).
    """
    import scipy.sparse as sp

    ny, nx = grid.ny, grid.nx
    dx = grid.spacing
    half_plane = grid.domain_tag == "HalfPlane"
    idx = -np.ones((ny, nx), dtype=int)
    jlo = 0 if half_plane else 1
    count = 0
    for j in range(jlo, ny - 1):
        for i in range(1, nx - 1):
            idx[j, i] = count
            count += 1
    rows, cols, vals = [], [], []
    affine = np.zeros(count)
    scale = np.ones(count)
    inv2 = 1.0 / dx ** 2
    for j in range(jlo, ny - 1):
        for i in range(1, nx - 1):
            k = idx[j, i]
            sc = 0.5 if (half_plane and j == 0) else 1.0
            scale[k] = sc
            rows.append(k); cols.append(k); vals.append(4.0 * inv2 * sc)
            for (jj, ii) in ((j, i - 1), (j, i + 1), (j - 1, i), (j + 1, i)):
                if half_plane and jj < 0:
                    # ghost node chi_{-1} = chi_1 - 2 dx g folds into the
                    # (j+1) coefficient and a constant 2g/dx
                    rows.append(k); cols.append(idx[j + 1, i])
                    vals.append(-inv2 * sc)
                    if neumann_data is not None:
                        affine[k] += 2.0 * neumann_data[i] / dx * sc
                    continue
                kk = idx[jj, ii]
                if kk >= 0:
                    rows.append(k); cols.append(kk); vals.append(-inv2 * sc)
                # eliminated Dirichlet neighbors contribute zero
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(count, count))
    return mat, affine, scale, idx


def coulomb_fix(v, v_ref, tol=1e-11, max_newton=12):
    """Gauge-transform v into Coulomb gauge relative to v_ref.

    Newton-solves the scalar elliptic problem for chi and applies it.  chi
    vanishes on the truncation edges; on a half-plane grid the physical
    boundary row carries the Neumann data matching the zeta boundary
    condition.  Raises SolverDiverged if the residual over the unknown nodes
    cannot be pushed below tol.
    """
    import scipy.sparse as sp

    model = v.model
    grid = v.grid
    dx = grid.spacing
    d0 = extract_deformation(v, v_ref)
    base_div = d_ds(d0.eta, dx) + d_dt(d0.zeta, dx)
    neumann = d0.zeta[0, :].copy() if grid.domain_tag == "HalfPlane" else None

    L, affine, scale, idx = _gauge_laplacian(grid, neumann_data=neumann)
    sel = idx >= 0
    chi = np.zeros((grid.ny, grid.nx))
    chi_sel = np.zeros(int(np.count_nonzero(sel)))

    sup = np.inf
    for _ in range(max_newton):
        rotated = np.exp(1j * chi) * v.u
        data = base_div + model.dmu(v_ref.u, 1j * (rotated - v_ref.u))
        resid = scale * data[sel] + L @ chi_sel + affine
        sup = float(np.max(np.abs(resid / scale)))
        if sup < tol:
            return gauge_transform(v, chi)
        q = -model.dmu(v_ref.u, rotated)
        A = L + sp.diags(scale * q[sel])
        delta, _ = pcg(A, -resid, diag=A.diagonal(), tol=1e-13)
        chi_sel = chi_sel + delta
        chi[sel] = chi_sel
    raise SolverDiverged("coulomb_fix: residual %.3e after %d Newton rounds"
                         % (sup, max_newton))


def holonomy_at_infinity(v, radius=None, samples=720):
    """Holonomy integer lambda of a plane field, read off a far circle.

    Samples the matter field on the circle of the given radius (default: the
    largest circle two spacings inside the grid), takes the first component
    whose modulus stays above 0.5, and returns minus its phase winding, so
    that e^{lambda theta} u tends to a constant.
    """
    grid = v.grid
    if grid.domain_tag != "Plane":
        raise ValueError("holonomy is defined for plane fields only")
    if radius is None:
        radius = grid.half_width - 2 * grid.spacing
    theta = np.linspace(0.0, 2 * np.pi, samples, endpoint=False)
    zs = grid.center + radius * np.exp(1j * theta)
    for alpha in range(v.model.n):
        vals = bilinear_sample(v.u[alpha], grid.s_coords, grid.t_coords,
                               zs.real, zs.imag)
        if np.min(np.abs(vals)) > 0.5:
            ang = np.angle(vals)
            steps = np.diff(np.concatenate([ang, ang[:1]]))
            steps = (steps + np.pi) % (2 * np.pi) - np.pi
            winding = int(round(float(np.sum(steps)) / (2 * np.pi)))
            return -winding
    raise FieldVanishesOnLoop(
        "no matter component stays above 0.5 on the sampling circle")


# -- snapshot I/O -------------------------------------------------------

def _atomic_write_bytes(path, payload):
    tmp = "%s.tmp.%d" % (path, os.getpid())
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)


def save_snapshot(v, path):
    """Write the bit-exact binary snapshot.

    Header line: VLAB1 <domain_tag> <N> <nx> <ny> <dx> <center_re>
    <center_im> <holonomy>, then row-major little-endian float64 planes:
    Re u (N planes), Im u (N planes), phi, psi.
    """
    g = v.grid
    header = "VLAB1 %s %d %d %d %s %s %s %d\n" % (
        g.domain_tag, v.model.n, g.nx, g.ny,
        repr(g.spacing), repr(g.center.real), repr(g.center.imag), v.holonomy)
    chunks = [header.encode("ascii")]
    for alpha in range(v.model.n):
        chunks.append(np.ascontiguousarray(v.u[alpha].real, dtype="<f8").tobytes())
    for alpha in range(v.model.n):
        chunks.append(np.ascontiguousarray(v.u[alpha].imag, dtype="<f8").tobytes())
    chunks.append(np.ascontiguousarray(v.phi, dtype="<f8").tobytes())
    chunks.append(np.ascontiguousarray(v.psi, dtype="<f8").tobytes())
    _atomic_write_bytes(path, b"".join(chunks))


def load_snapshot(path, model=None):
    """Read a snapshot written by save_snapshot."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        if len(header) != 9 or header[0] != "VLAB1":
            raise ValueError("not a VLAB1 snapshot: %s" % path)
        tag = header[1]
        n, nx, ny = int(header[2]), int(header[3]), int(header[4])
        dx = float(header[5])
        center = complex(float(header[6]), float(header[7]))
        holonomy = int(header[8])
        if model is None:
            model = TargetModel(n=n)
        elif model.n != n:
            raise ValueError("snapshot has N=%d, model has N=%d" % (n, model.n))
        half_width = dx * (nx - 1) / 2.0
        grid = Grid(tag, center, half_width, dx, nx, ny)
        plane = ny * nx * 8
        raw = fh.read((2 * n + 2) * plane)
        if len(raw) != (2 * n + 2) * plane:
            raise ValueError("snapshot payload truncated: %s" % path)

        def take(k):
            return np.frombuffer(raw, dtype="<f8", count=ny * nx,
                                 offset=k * plane).reshape(ny, nx)

        u = np.empty((n, ny, nx), dtype=complex)
        for alpha in range(n):
            u[alpha] = take(alpha) + 1j * take(n + alpha)
        phi = take(2 * n).copy()
        psi = take(2 * n + 1).copy()
    return GaugedField(grid, model, u, phi, psi, holonomy)
