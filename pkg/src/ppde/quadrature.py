"""Quadrature rules shared by the convolution and solution integrals.

Two ingredients:

* time windows whose integrands carry power singularities at either edge,
  handled by Gauss-Jacobi rules that absorb (r-s)**(p-1) / (t-r)**(q-1)
  exactly (the window is split at its midpoint, one rule per half);
* plane integrals of Gaussian-dominated integrands, handled by tensor
  Gauss-Hermite grids placed in the Mahalanobis frame of a reference
  Gaussian, returned as plain nodes/weights so any integrand can be summed
  directly.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.special import roots_jacobi


@lru_cache(maxsize=64)
def _jacobi_01(n: int, edge_power: float):
    """Nodes/weights on (0, 1] for integrands ~ u**(edge_power-1) at u=0.

    Returns (u, w) with sum w_i F(u_i) ~ int_0^1 F(u) du for F with the
    stated edge behavior; the singular factor is absorbed into the weights.
    """
    beta = edge_power - 1.0
    if abs(beta) < 1e-12:
        x, w = roots_jacobi(n, 0.0, 0.0)
        return (x + 1.0) / 2.0, w / 2.0
    x, w = roots_jacobi(n, 0.0, beta)
    u = (x + 1.0) / 2.0
    # int_{-1}^{1} (1+x)^beta G dx -> int_0^1 u^beta G du * 2^(beta+1)
    scale = 2.0 ** (-(beta + 1.0))
    plain_w = w * scale * u ** (-beta)
    return u, plain_w


def edge_graded_nodes(s: float, t: float, n_half: int,
                      left_power: float = 1.0, right_power: float = 1.0):
    """Quadrature for int_s^t F(r) dr with F ~ (r-s)**(left_power-1) near s
    and ~ (t-r)**(right_power-1) near t.  Returns (r, w) arrays."""
    mid = 0.5 * (s + t)
    half = mid - s
    ul, wl = _jacobi_01(n_half, left_power)
    ur, wr = _jacobi_01(n_half, right_power)
    r = np.concatenate([s + half * ul, t - half * ur])
    w = np.concatenate([half * wl, half * wr])
    return r, w


@lru_cache(maxsize=16)
def _hermite_pairs(n: int):
    x, v = hermgauss(n)
    # plain-summation factors: v_i * exp(x_i^2) stays O(1)
    return x, v * np.exp(x * x)


def gaussian_grid(mean, cov, n: int, inflate: float = 1.0):
    """Tensor Gauss-Hermite nodes for plane integrals near a Gaussian.

    Returns (points (n*n, 2), weights (n*n,)) with
    sum_i w_i F(p_i) ~ int F(z) dz exact for F = N(mean, inflate*cov) times
    any polynomial of degree < 2n per axis.
    """
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float) * inflate
    chol = np.linalg.cholesky(cov)
    x, u = _hermite_pairs(n)
    xe = np.sqrt(2.0) * x
    p1 = mean[0] + chol[0, 0] * xe[:, None] + 0.0 * xe[None, :]
    p2 = mean[1] + chol[1, 0] * xe[:, None] + chol[1, 1] * xe[None, :]
    w = 2.0 * abs(np.linalg.det(chol)) * (u[:, None] * u[None, :])
    pts = np.stack([p1.ravel(), p2.ravel()], axis=1)
    return pts, w.ravel()


def gaussian_line(mean: float, var: float, n: int, inflate: float = 1.0):
    """1-D counterpart of `gaussian_grid` for marginal integrals."""
    x, u = _hermite_pairs(n)
    scale = math.sqrt(2.0 * var * inflate)
    pts = mean + scale * x
    return pts, scale * u


def gaussian_product_frame(mean1, cov1, mean2, cov2):
    """Mean/covariance of the normalized product of two plane Gaussians."""
    p1 = np.linalg.inv(np.asarray(cov1, dtype=float))
    p2 = np.linalg.inv(np.asarray(cov2, dtype=float))
    cov = np.linalg.inv(p1 + p2)
    mean = cov @ (p1 @ np.asarray(mean1, dtype=float)
                  + p2 @ np.asarray(mean2, dtype=float))
    return mean, cov
