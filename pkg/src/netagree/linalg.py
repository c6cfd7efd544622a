"""Dense symmetric eigensolver for small matrices.

Cyclic Jacobi rotations. Graph Laplacians handled here have at most a few
hundred rows, so the O(n^3) sweep cost is irrelevant and the method's
accuracy on tiny eigenvalues (lambda_2 of weakly connected graphs) is the
property that matters.
"""

import math

import numpy as np

__all__ = ["symmetric_eigh", "symmetric_eigvalsh"]

_EPS = np.finfo(float).eps


def _off_norm(a):
    off = a - np.diag(np.diag(a))
    return math.sqrt(float(np.sum(off * off)))


def symmetric_eigh(matrix, tol=1e-14, max_sweeps=100):
    """Eigen-decomposition of a real symmetric matrix.

    Parameters
    ----------
    matrix : array_like, shape (n, n)
        Symmetric input. Asymmetry up to roundoff (1e-10 relative) is
        tolerated and removed by symmetrising; anything larger raises.
    tol : float
        Sweeps stop once the off-diagonal Frobenius norm falls below
        ``tol`` times the Frobenius norm of the input.
    max_sweeps : int
        Hard cap on the number of cyclic sweeps.

    Returns
    -------
    eigenvalues : ndarray, shape (n,)
        Sorted non-decreasing; repeated eigenvalues appear repeatedly.
    eigenvectors : ndarray, shape (n, n)
        Orthonormal columns, ``eigenvectors[:, k]`` pairs with
        ``eigenvalues[k]``.
    """
    a = np.array(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    if np.max(np.abs(a - a.T), initial=0.0) > 1e-10 * max(1.0, np.max(np.abs(a), initial=0.0)):
        raise ValueError("matrix is not symmetric")
    n = a.shape[0]
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    if n == 0:
        return np.zeros(0), v

    scale = math.sqrt(float(np.sum(a * a)))
    threshold = tol * scale if scale > 0 else 0.0
    for _ in range(max_sweeps):
        if _off_norm(a) <= threshold:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) < 1e-300:
                    a[p, q] = a[q, p] = 0.0
                    continue
                diff = a[q, q] - a[p, p]
                if abs(apq) <= _EPS * abs(diff):
                    # tan(phi) ~ apq/diff once theta^2 would overflow
                    t = apq / diff
                else:
                    # Rotation angle from the 2x2 symmetric Schur decomposition.
                    theta = diff / (2.0 * apq)
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c

                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                a[p, q] = a[q, p] = 0.0

                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        raise RuntimeError(f"Jacobi iteration did not converge in {max_sweeps} sweeps")

    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def symmetric_eigvalsh(matrix, **kwargs):
    """Sorted eigenvalues of a symmetric matrix (see :func:`symmetric_eigh`)."""
    return symmetric_eigh(matrix, **kwargs)[0]
