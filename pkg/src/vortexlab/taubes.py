"""Scalar form of the abelian vortex equations and its Newton solver.

Writing the matter field as u = e^h f for a fixed tuple of polynomials
f = (f^1, ..., f^N) turns the first-order vortex system into one real
elliptic equation for the profile h,

    -Lap(h) / (2 pi) + (e^{2h} F - 1) / 2 = 0,      F = sum_a |f^a|^2,

discretized with the five-point Laplacian and closed by the Dirichlet data
h = -(1/2) log F on the truncation edges.  On half-plane grids the physical
boundary row carries the same data, which pins |u| = 1 there.  The solved
profile reassembles into the gauged field

    u = e^h f,    phi = -d_t h,    psi = d_s h,

which satisfies both vortex equations to discretization accuracy.  The
comparison and degeneration utilities built on top of the solve live here
as well.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .gauged_field import GaugedField, d_ds, d_dt, energy
from .grid_domain import Grid
from .linalg import bilinear_sample, pcg
from .target_model import TargetModel

ZERO_MARGIN = 5.0


class NewtonDiverged(RuntimeError):
    """The damped Newton iteration failed to reach its tolerance.  Carries
    the sup-residual history of the attempt."""

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = tuple(float(x) for x in trace)


class ZeroOnBoundary(ValueError):
    """The matter data vanishes (numerically) on a boundary node, so the
    Dirichlet value -(1/2) log F is undefined there."""


class GridsIncompatible(ValueError):
    """Two solutions cannot be compared node-wise on their grids."""


def _coeff_tuple(c):
    arr = np.asarray(c, dtype=complex)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("each component needs a nonempty 1-d coefficient list")
    return tuple(complex(x) for x in arr)


def _coeff_degree(c):
    mags = np.abs(np.asarray(c, dtype=complex))
    nz = np.nonzero(mags > 0.0)[0]
    if nz.size == 0:
        return -1
    return len(c) - 1 - int(nz[0])


@dataclass(frozen=True)
class VortexData:
    """A vortex configuration given by polynomial matter data.

    ``polys`` holds one coefficient list per matter component, highest
    degree first (np.polyval order).  ``degree`` is the maximal component
    degree; when supplied it is validated against the coefficients.
    ``marker`` is a bookkeeping point carried along for the gluing layer
    and does not influence the solve.
    """

    domain_tag: str
    polys: tuple
    marker: complex = 0j
    degree: int = None

    def __post_init__(self):
        if self.domain_tag not in ("Plane", "HalfPlane"):
            raise ValueError("domain_tag must be 'Plane' or 'HalfPlane'")
        polys = tuple(_coeff_tuple(c) for c in self.polys)
        if not polys:
            raise ValueError("polys must hold at least one component")
        object.__setattr__(self, "polys", polys)
        object.__setattr__(self, "marker", complex(self.marker))
        deg = max(_coeff_degree(c) for c in polys)
        if deg < 0:
            raise ValueError("at least one component must be a nonzero polynomial")
        if self.degree is None:
            object.__setattr__(self, "degree", deg)
        elif int(self.degree) != deg:
            raise ValueError("stated degree %r does not match the coefficients "
                             "(max component degree %d)" % (self.degree, deg))
        if self.domain_tag == "HalfPlane":
            if len(polys) != 1:
                raise ValueError("half-plane data carries a single matter component")
            zs = self.component_zeros()
            if zs.size and float(np.min(zs.imag)) <= 1e-12:
                raise ValueError("zeros must lie strictly inside the open "
                                 "upper half-plane")

    def component_zeros(self):
        """Roots of all component polynomials, concatenated."""
        out = []
        for c in self.polys:
            arr = np.trim_zeros(np.asarray(c, dtype=complex), "f")
            if arr.size > 1:
                out.extend(np.roots(arr))
        return np.asarray(out, dtype=complex)

    def evaluate(self, z):
        """Component values f^a(z), stacked along axis 0."""
        z = np.asarray(z, dtype=complex)
        rows = [np.polyval(np.asarray(c, dtype=complex), z) for c in self.polys]
        return np.stack(rows)


@dataclass(frozen=True)
class TaubesSolution:
    """Converged profile with its final residual and the assembled field."""

    h: np.ndarray
    residual_inf: float
    field: GaugedField
    data: VortexData
    iterations: int
    trace: tuple


def _interior_laplacian(grid):
    """Five-point -Lap on interior nodes with Dirichlet edges eliminated.

    Row-major interior ordering, matching h[1:-1, 1:-1].ravel().  CSR, SPD.
    """
    mx, my = grid.nx - 2, grid.ny - 2
    inv2 = 1.0 / grid.spacing ** 2

    def tridiag(m):
        main = 2.0 * inv2 * np.ones(m)
        off = -inv2 * np.ones(m - 1)
        return sp.diags([off, main, off], offsets=(-1, 0, 1))

    L = sp.kron(sp.identity(my), tridiag(mx)) + sp.kron(tridiag(my), sp.identity(mx))
    return L.tocsr()


def _laplacian_apply(h, dx):
    lap = np.zeros_like(h)
    lap[1:-1, 1:-1] = (h[1:-1, 2:] + h[1:-1, :-2] + h[2:, 1:-1]
                       + h[:-2, 1:-1] - 4.0 * h[1:-1, 1:-1]) / dx ** 2
    return lap


def _initial_profile(data, grid, big_f):
    """Blend of 0 near the component zeros and -(1/2) log F far from them.

    The cubic Hermite ramp runs over distance 0.5 to 2 from the nearest
    zero; the log1p form keeps the argument positive all the way in, so the
    guess is finite even at nodes where F vanishes.
    """
    zs = data.component_zeros()
    z = grid.zmesh
    if zs.size:
        dist = np.min(np.abs(z[..., np.newaxis] - zs), axis=-1)
    else:
        dist = np.full(z.shape, np.inf)
    q = np.clip((dist - 0.5) / 1.5, 0.0, 1.0)
    w = q * q * (3.0 - 2.0 * q)
    return -0.5 * np.log1p(w * (big_f - 1.0))


def solve_taubes(data, grid, tol=1e-9, max_newton=40, h0=None):
    """Solve the scalar vortex equation for the profile h on a grid.

    Damped Newton iteration on the five-point discretization: each step
    solves the exact linearization -Lap/(2 pi) + e^{2h} F with a Jacobi
    preconditioned conjugate gradient (relative tolerance 1e-12) and
    backtracks by halving, at most 20 times, until the sup residual
    strictly decreases.

    Parameters
    ----------
    data : VortexData
        Polynomial matter data; the grid must cover its component zeros
        with margin at least 5.
    grid : Grid
        Plane or half-plane grid matching data.domain_tag.
    tol : float
        Target for the pointwise residual of the discrete equation.
    h0 : ndarray, optional
        Starting profile (e.g. a coarse solve resampled onto this grid);
        its boundary ring is overwritten with the exact Dirichlet data.
        Defaults to the zero/log blend around the component zeros.

    Returns
    -------
    TaubesSolution

    Raises
    ------
    ZeroOnBoundary
        If F vanishes on a boundary node, leaving no Dirichlet value.
    NewtonDiverged
        If the residual cannot be pushed below tol; carries the residual
        trace.
    """
    if grid.domain_tag != data.domain_tag:
        raise ValueError("data lives on %s but the grid is %s"
                         % (data.domain_tag, grid.domain_tag))

    zs = data.component_zeros()
    if zs.size:
        margin = min(float(np.min(zs.real) - grid.s_coords[0]),
                     float(grid.s_coords[-1] - np.max(zs.real)),
                     float(np.min(zs.imag) - grid.t_coords[0]),
                     float(grid.t_coords[-1] - np.max(zs.imag)))
        if margin < ZERO_MARGIN:
            raise ValueError("grid must cover the component zeros with margin "
                             ">= %g (have %.3f)" % (ZERO_MARGIN, margin))

    fvals = data.evaluate(grid.zmesh)
    big_f = np.sum(np.abs(fvals) ** 2, axis=0)
    bmask = grid.boundary_mask
    if float(np.min(big_f[bmask])) < 1e-30:
        raise ZeroOnBoundary("matter data vanishes on a boundary node")

    if h0 is None:
        h = _initial_profile(data, grid, big_f)
    else:
        h = np.array(h0, dtype=float)
        if h.shape != big_f.shape:
            raise ValueError("h0 must match the grid shape")
    h[bmask] = -0.5 * np.log(big_f[bmask])

    inv_two_pi = 1.0 / (2.0 * np.pi)
    L = _interior_laplacian(grid)
    dx = grid.spacing

    def residual(hh):
        lap = _laplacian_apply(hh, dx)
        return (-inv_two_pi * lap
                + 0.5 * (np.exp(2.0 * hh) * big_f - 1.0))[1:-1, 1:-1]

    r = residual(h)
    sup = float(np.max(np.abs(r)))
    trace = [sup]
    iterations = 0
    while sup >= tol:
        if iterations >= max_newton:
            raise NewtonDiverged("residual %.3e after %d Newton steps"
                                 % (sup, iterations), trace)
        mass = (np.exp(2.0 * h) * big_f)[1:-1, 1:-1].ravel()
        A = (inv_two_pi * L + sp.diags(mass)).tocsr()
        delta, _ = pcg(A, -r.ravel(), diag=A.diagonal(), tol=1e-12)
        step = delta.reshape(r.shape)

        lam = 1.0
        for _ in range(20):
            trial = h.copy()
            trial[1:-1, 1:-1] += lam * step
            r_try = residual(trial)
            sup_try = float(np.max(np.abs(r_try)))
            if sup_try < sup:
                break
            lam *= 0.5
        else:
            raise NewtonDiverged("line search stalled at residual %.3e" % sup,
                                 trace)
        h, r, sup = trial, r_try, sup_try
        trace.append(sup)
        iterations += 1

    u = np.exp(h) * fvals
    phi = -d_dt(h, dx)
    psi = d_ds(h, dx)
    holo = -data.degree if grid.domain_tag == "Plane" else 0
    fld = GaugedField(grid, TargetModel(n=len(data.polys)), u, phi, psi, holo)
    return TaubesSolution(h=h, residual_inf=sup, field=fld, data=data,
                          iterations=iterations, trace=tuple(trace))


def vortex_flux(sol):
    """Outward flux of grad h through the grid edge, divided by 2 pi.

    The profile falls off like -d log r, so the value approaches minus the
    vortex number once the edge is well outside the zeros.
    """
    grid = sol.field.grid
    dx = grid.spacing
    hs = d_ds(sol.h, dx)
    ht = d_dt(sol.h, dx)

    def line(vals):
        return dx * (np.sum(vals) - 0.5 * (vals[0] + vals[-1]))

    total = (line(hs[:, -1]) - line(hs[:, 0])
             + line(ht[-1, :]) - line(ht[0, :]))
    return float(total / (2.0 * np.pi))


def moduli_compare(sol_a, sol_b, translation, margin=3.0):
    """Sup-distance between two profiles after translating the first.

    Resamples sol_a.h at z - translation for every node z of sol_b's grid
    (bilinear), and takes the sup over nodes at least ``margin`` inside
    both truncation windows; the reported distance is therefore bounded by
    interpolation error plus the truncation mismatch of the two solves.
    Returns a dict with the sup distance, the comparison window size, and
    the two total energies.
    """
    ga = sol_a.field.grid
    gb = sol_b.field.grid
    if not ga.is_compatible(gb):
        raise GridsIncompatible("grids differ in domain tag or spacing")
    tau = complex(translation)
    z = gb.zmesh
    zq = z - tau
    inside_a = ((zq.real >= ga.s_coords[0] + margin)
                & (zq.real <= ga.s_coords[-1] - margin)
                & (zq.imag >= ga.t_coords[0] + margin)
                & (zq.imag <= ga.t_coords[-1] - margin))
    inside_b = ((z.real >= gb.s_coords[0] + margin)
                & (z.real <= gb.s_coords[-1] - margin)
                & (z.imag >= gb.t_coords[0] + margin)
                & (z.imag <= gb.t_coords[-1] - margin))
    window = inside_a & inside_b
    if not np.any(window):
        raise GridsIncompatible("translation leaves no comparison window")
    samp = bilinear_sample(sol_a.h, ga.s_coords, ga.t_coords,
                           zq.real[window], zq.imag[window])
    sup = float(np.max(np.abs(samp - sol_b.h[window])))
    return {
        "sup_distance": sup,
        "window_nodes": int(np.count_nonzero(window)),
        "energy_a": energy(sol_a.field)[0],
        "energy_b": energy(sol_b.field)[0],
    }


def degeneration_sweep(base, separations, n=256, tol=1e-9, out_path=None):
    """Solve a separating family of configurations and tabulate it.

    With one matter component the family is f = (z - s)(z + s) on a fixed
    window of half-width 24; each row records the energy inside the balls
    B(+-s, s/2), the middle strip |Re z| <= s/2, and in total.  With two
    components the family is f = (z - s, z) on a window of half-width
    2s + 8; each row records the sup over the annulus 0.5 <= |z/s| <= 2 of
    the distance between the matter field at z = sw and the unit-sphere
    representative of the rational curve [w - 1 : w].  (The direction
    u/|u| agrees with that curve identically for this ansatz, so the whole
    gap is carried by |u| - 1; it decays like 1/s^2.)  ``base`` fixes the
    mode through its number of components and must be plane data.  When
    ``out_path`` is given the table is also written there as CSV.
    """
    if base.domain_tag != "Plane":
        raise ValueError("degeneration families live on the plane")
    seps = [float(s) for s in separations]
    if any(s <= 0 for s in seps) or any(b <= a for a, b in zip(seps, seps[1:])):
        raise ValueError("separations must be positive and strictly increasing")
    rows = []
    if len(base.polys) == 1:
        for s in seps:
            data = VortexData("Plane", ([1.0, 0.0, -s * s],))
            grid = Grid.plane(half_width=24.0, n=n)
            sol = solve_taubes(data, grid, tol=tol)
            total, density = energy(sol.field)
            cell = density * grid.quad_weights
            z = grid.zmesh
            rows.append({
                "separation": s,
                "energy_total": total,
                "energy_left_ball": float(np.sum(cell[np.abs(z + s) <= s / 2])),
                "energy_right_ball": float(np.sum(cell[np.abs(z - s) <= s / 2])),
                "energy_middle_strip": float(np.sum(cell[np.abs(z.real) <= s / 2])),
                "residual_inf": sol.residual_inf,
            })
    else:
        for s in seps:
            data = VortexData("Plane", ([1.0, -s], [1.0, 0.0]))
            grid = Grid.plane(half_width=2.0 * s + 8.0, n=n)
            sol = solve_taubes(data, grid, tol=tol)
            w = grid.zmesh / s
            ann = (np.abs(w) >= 0.5) & (np.abs(w) <= 2.0)
            matter = sol.field.u[:, ann]
            target = np.stack([w[ann] - 1.0, w[ann]])
            target = target / np.sqrt(np.sum(np.abs(target) ** 2, axis=0))
            gap = np.sqrt(np.sum(np.abs(matter - target) ** 2, axis=0))
            rows.append({
                "separation": s,
                "sphere_distance": float(np.max(gap)),
                "energy_total": energy(sol.field)[0],
                "residual_inf": sol.residual_inf,
            })
    if out_path is not None:
        _write_text(out_path, sweep_csv(rows))
    return rows


def sweep_csv(rows):
    """Serialize sweep rows to CSV text with full float precision."""
    if not rows:
        return ""
    keys = list(rows[0].keys())
    lines = [",".join(keys)]
    for row in rows:
        lines.append(",".join(_fmt(row[k]) for k in keys))
    return "\n".join(lines) + "\n"


def _fmt(x):
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def _write_text(path, text):
    tmp = str(path) + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, str(path))


def solution_summary(sol):
    """Scalar facts of one solve, shaped for a JSON sidecar."""
    total, _ = energy(sol.field)
    return {
        "residual_inf": sol.residual_inf,
        "energy": total,
        "flux": vortex_flux(sol),
        "iterations": sol.iterations,
    }
