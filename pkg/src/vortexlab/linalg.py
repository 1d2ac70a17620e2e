"""Small deterministic linear-algebra helpers shared by the elliptic solvers."""

import numpy as np


class SolverDiverged(Exception):
    """An iterative solve failed to reach its tolerance."""


def pcg(A, b, diag=None, tol=1e-12, max_iter=20000, x0=None):
    """Jacobi-preconditioned conjugate gradient for SPD operators.

    Parameters
    ----------
    A : scipy sparse matrix or callable
        The operator. A callable must compute ``A(x)`` for a flat vector.
    b : array_like
        Right-hand side (flattened internally).
    diag : array_like, optional
        Diagonal of A for the Jacobi preconditioner. ``None`` disables
        preconditioning.
    tol : float
        Relative residual target, ||r|| <= tol * ||b||.

    Returns
    -------
    x : ndarray
    iterations : int

    Raises
    ------
    SolverDiverged
        If the residual target is not met within ``max_iter`` iterations.

    The iteration order is fixed, so repeated runs are bit-reproducible.
    """
    matvec = A if callable(A) else (lambda v: A @ v)
    b = np.asarray(b, dtype=float).ravel()
    bnorm = np.sqrt(b @ b)
    if bnorm == 0.0:
        return np.zeros_like(b), 0
    if diag is not None:
        dinv = 1.0 / np.asarray(diag, dtype=float).ravel()
    else:
        dinv = None

    x = np.zeros_like(b) if x0 is None else np.asarray(x0, dtype=float).ravel().copy()
    r = b - matvec(x) if x.any() else b.copy()
    z = dinv * r if dinv is not None else r.copy()
    p = z.copy()
    rz = r @ z
    for k in range(max_iter):
        rnorm = np.sqrt(r @ r)
        if rnorm <= tol * bnorm:
            return x, k
        Ap = matvec(p)
        alpha = rz / (p @ Ap)
        x = x + alpha * p
        r = r - alpha * Ap
        z = dinv * r if dinv is not None else r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverDiverged(
        "pcg: no convergence after %d iterations (rel. residual %.3e)"
        % (max_iter, np.sqrt(r @ r) / bnorm)
    )


def bilinear_sample(values, s_coords, t_coords, s_query, t_query, fill=None):
    """Bilinear interpolation of a plane of grid data at scattered points.

    ``values`` has shape (ny, nx) aligned with ``t_coords``/``s_coords``.
    Points outside the hull raise ValueError unless ``fill`` is given.
    Complex data is interpolated componentwise.
    """
    s = np.asarray(s_query, dtype=float)
    t = np.asarray(t_query, dtype=float)
    ds = s_coords[1] - s_coords[0]
    dt = t_coords[1] - t_coords[0]
    fs = (s - s_coords[0]) / ds
    ft = (t - t_coords[0]) / dt
    outside = (fs < 0) | (fs > len(s_coords) - 1) | (ft < 0) | (ft > len(t_coords) - 1)
    if np.any(outside):
        if fill is None:
            raise ValueError("bilinear_sample: %d points outside the grid hull"
                             % int(np.count_nonzero(outside)))
        fs = np.where(outside, 0.0, fs)
        ft = np.where(outside, 0.0, ft)
    i0 = np.clip(np.floor(fs).astype(int), 0, len(s_coords) - 2)
    j0 = np.clip(np.floor(ft).astype(int), 0, len(t_coords) - 2)
    ws = fs - i0
    wt = ft - j0
    v00 = values[..., j0, i0]
    v01 = values[..., j0, i0 + 1]
    v10 = values[..., j0 + 1, i0]
    v11 = values[..., j0 + 1, i0 + 1]
    out = ((1 - wt) * ((1 - ws) * v00 + ws * v01)
           + wt * ((1 - ws) * v10 + ws * v11))
    if np.any(outside):
        out = np.where(outside, fill, out)
    return out
