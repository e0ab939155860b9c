"""Non-negative least squares by active-set iteration.

Solves min_x ||a x - b||_2 subject to x >= 0 with the classic
Lawson-Hanson scheme: greedily move the most promising variable from the
zero set into the positive set, solve the unconstrained problem on the
positive set, and back off along the line segment whenever that solution
leaves the feasible region. Terminates at a KKT point: the gradient of
0.5||a x - b||^2 is (numerically) zero on the positive set and
non-negative on the zero set.
"""

import numpy as np


def _solve_ls(a_p, b):
    # lstsq + one step of iterative refinement; the refinement knocks the
    # gradient on the positive set down a few digits, which the 1e-8
    # stationarity check depends on at pixel scales
    z, _, _, _ = np.linalg.lstsq(a_p, b, rcond=None)
    dz, _, _, _ = np.linalg.lstsq(a_p, b - a_p @ z, rcond=None)
    return z + dz


def nnls(a, b, max_iterations=None, tol=None):
    """Solve ``min ||a x - b||`` subject to ``x >= 0``.

    Parameters
    ----------
    a : ndarray, shape (m, n)
        Design matrix.
    b : ndarray, shape (m,)
        Target vector.
    max_iterations : int, optional
        Cap on outer iterations, default ``max(3 * n, 30)``.
    tol : float, optional
        Dual-feasibility threshold on the negative gradient used for
        termination. Default ``10 * eps * max(m, n) * ||a||_F``.

    Returns
    -------
    x : ndarray, shape (n,)
        Solution with every entry >= 0; inactive entries are exactly 0.0.
    rnorm : float
        ``||a x - b||_2`` at the solution.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float).reshape(-1)
    if a.ndim != 2:
        raise ValueError("a must be 2-dimensional")
    m, n = a.shape
    if b.shape[0] != m:
        raise ValueError("a and b have incompatible shapes %s, %s" % (a.shape, b.shape))
    if n == 0:
        return np.zeros(0), float(np.linalg.norm(b))
    if max_iterations is None:
        max_iterations = max(3 * n, 30)
    if tol is None:
        tol = 10.0 * np.finfo(float).eps * max(m, n) * max(np.linalg.norm(a), 1.0)

    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)

    for _ in range(max_iterations):
        w = a.T @ (b - a @ x)

        # pick the steepest-ascent zero variable; reject picks whose trial
        # unconstrained solve does not actually move them positive (these
        # are numerical-noise directions and would cycle forever)
        t = -1
        while True:
            w_cand = np.where(~passive & (w > tol), w, -np.inf)
            t = int(np.argmax(w_cand))
            if not np.isfinite(w_cand[t]):
                t = -1
                break
            trial = passive.copy()
            trial[t] = True
            cols = np.flatnonzero(trial)
            z = _solve_ls(a[:, cols], b)
            if z[np.searchsorted(cols, t)] > 0.0:
                break
            w[t] = 0.0
        if t < 0:
            break
        passive[t] = True

        # feasibility restoration: walk from x toward z, dropping the
        # variables that hit zero, until the passive solve is all-positive
        while True:
            if np.all(z > 0.0):
                x = np.zeros(n)
                x[cols] = z
                break
            x_p = x[cols]
            bad = z <= 0.0
            step = np.min(x_p[bad] / (x_p[bad] - z[bad]))
            x_p = x_p + step * (z - x_p)
            x_p[x_p <= 1e-13 * max(1.0, np.abs(x_p).max())] = 0.0
            x = np.zeros(n)
            x[cols] = x_p
            passive[cols] = x_p > 0.0
            if not passive.any():
                break
            cols = np.flatnonzero(passive)
            z = _solve_ls(a[:, cols], b)

    residual = b - a @ x
    return x, float(np.linalg.norm(residual))


def kkt_violation(a, b, x):
    """Largest KKT violation of ``x`` for ``min ||a x - b||, x >= 0``.

    Measures max(primal infeasibility, -min gradient on the zero set,
    max |gradient| on the positive set); a true constrained minimum gives
    a value at numerical-noise level.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float).reshape(-1)
    x = np.asarray(x, dtype=float).reshape(-1)
    grad = a.T @ (a @ x - b)
    worst = 0.0
    if x.size:
        worst = max(worst, float(-x.min()))
        zero = x == 0.0
        if zero.any():
            worst = max(worst, float(-grad[zero].min()))
        if (~zero).any():
            worst = max(worst, float(np.abs(grad[~zero]).max()))
    return worst
