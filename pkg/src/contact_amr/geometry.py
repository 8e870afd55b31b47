"""1D Lagrange and Gauss rules used by the tensor-product element maps."""

from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre


@lru_cache(maxsize=None)
def gll_points(order):
    """Gauss-Lobatto-Legendre points on [-1, 1] for a degree-`order` basis."""
    if order < 1:
        raise ValueError("order must be >= 1")
    if order == 1:
        return np.array([-1.0, 1.0])
    # interior points are the roots of P'_order
    coef = np.zeros(order + 1)
    coef[-1] = 1.0
    interior = np.sort(legendre.legroots(legendre.legder(coef)).real)
    pts = np.concatenate(([-1.0], interior, [1.0]))
    pts.setflags(write=False)
    return pts


@lru_cache(maxsize=None)
def gauss_legendre(npts):
    x, w = legendre.leggauss(npts)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@lru_cache(maxsize=None)
def gauss_square(npts):
    """Tensor Gauss rule on [-1,1]^2. Points are ordered with xi fastest."""
    x, w = gauss_legendre(npts)
    xi, eta = np.meshgrid(x, x)
    pts = np.column_stack([xi.ravel(), eta.ravel()])
    wts = np.outer(w, w).ravel()
    return pts, wts


@lru_cache(maxsize=None)
def _lagrange_operators(nodes):
    nodes = np.asarray(nodes)
    n = len(nodes)
    vinv = np.linalg.inv(legendre.legvander(nodes, n - 1))
    dmat = np.zeros((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        d = legendre.legder(e)
        dmat[:len(d), j] = d
    return vinv, dmat @ vinv


def lagrange_1d(nodes, x, derivative=False):
    """Evaluate the Lagrange basis on `nodes` at points `x`.

    Returns an array of shape (len(x), len(nodes)); with ``derivative=True``
    a second array with the first derivatives is also returned.  Works through
    the Legendre-Vandermonde matrix, which is well conditioned on [-1, 1].
    """
    nodes = tuple(float(v) for v in np.asarray(nodes, dtype=float))
    vinv, dvinv = _lagrange_operators(nodes)
    pv = legendre.legvander(np.asarray(x, dtype=float), len(nodes) - 1)
    if not derivative:
        return pv @ vinv
    return pv @ vinv, pv @ dvinv
