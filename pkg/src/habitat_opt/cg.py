"""Preconditioned conjugate gradients for symmetric positive definite operators."""

import numpy as np

from .errors import CGFailure


def conjugate_gradient(apply_A, b, x0=None, tol=1e-10, maxiter=None, precond=None):
    """Solve ``A x = b`` for SPD ``A`` given as a callable.

    Stops when ``||r|| <= tol * ||b||``. Returns ``(x, iterations)``; raises
    :class:`CGFailure` if the iteration cap is hit first.
    """
    b = np.asarray(b, dtype=float)
    shape = b.shape
    b = b.ravel()
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float).ravel()
    maxiter = maxiter or 10 * b.size
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(shape), 0

    def A(v):
        return np.asarray(apply_A(v.reshape(shape)), dtype=float).ravel()

    def M(v):
        return v if precond is None else np.asarray(precond(v.reshape(shape)), dtype=float).ravel()

    r = b - A(x)
    z = M(r)
    p = z.copy()
    rz = r @ z
    for it in range(1, maxiter + 1):
        Ap = A(p)
        pAp = p @ Ap
        if pAp <= 0:
            raise CGFailure(it, np.linalg.norm(r) / bnorm, "operator is not positive definite")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        res = np.linalg.norm(r) / bnorm
        if res <= tol:
            return x.reshape(shape), it
        z = M(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise CGFailure(maxiter, res)
