"""Angular-margin softmax (A-Softmax) classification head.

Logits are ``||x|| * cos(theta_j)`` where ``theta_j`` is the angle between
the embedding and the (normalized) weight vector of class ``j``. The
target class uses the monotone margin function

    psi(theta) = (-1)^k cos(m * theta) - 2k,   theta in [k*pi/m, (k+1)*pi/m]

blended with the plain cosine as ``(lam * cos + psi) / (1 + lam)`` so that
training can be annealed from ordinary softmax (large ``lam``) toward the
full margin (``lam = 0``).
"""

from __future__ import annotations

import numpy as np
from numpy.polynomial import chebyshev

_NORM_EPS = 1e-12


def _cheb(m: int):
    coef = np.zeros(m + 1)
    coef[m] = 1.0
    return coef, chebyshev.chebder(coef)


def psi(cos_theta: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Margin function and its derivative with respect to ``cos(theta)``."""
    c = np.clip(cos_theta, -1.0, 1.0)
    coef, dcoef = _cheb(m)
    k = np.clip(np.floor(m * np.arccos(c) / np.pi), 0, m - 1)
    sign = np.where(k % 2 == 0, 1.0, -1.0)
    value = sign * chebyshev.chebval(c, coef) - 2.0 * k
    deriv = sign * chebyshev.chebval(c, dcoef) if m > 1 else np.ones_like(c)
    return value, deriv


def cosine_logits(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Inference logits ``||x|| cos(theta_j)``, i.e. x projected on unit class weights."""
    wn = np.sqrt((w * w).sum(axis=1) + _NORM_EPS)
    return x @ (w / wn[:, None]).T


def asoftmax_loss(x, labels, w, margin=4, lam=0.0):
    """Mean A-Softmax cross-entropy.

    Args:
      x: embeddings, shape (N, D).
      labels: integer class ids, shape (N,).
      w: class weights, shape (C, D); used through their unit-norm direction.
      margin: integer angular margin m >= 1.
      lam: annealing weight on the plain cosine for the target logit.

    Returns:
      (loss, dx, dw)
    """
    if margin < 1 or int(margin) != margin:
        raise ValueError(f"margin must be a positive integer, got {margin}")
    labels = np.asarray(labels)
    n, _ = x.shape
    n_classes = w.shape[0]
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError(f"labels must lie in [0, {n_classes})")
    rows = np.arange(n)

    xn = np.sqrt((x * x).sum(axis=1) + _NORM_EPS)
    wn = np.sqrt((w * w).sum(axis=1) + _NORM_EPS)
    cos = (x @ w.T) / (xn[:, None] * wn[None, :])

    g = cos.copy()
    dg = np.ones_like(cos)
    p, dp = psi(cos[rows, labels], int(margin))
    g[rows, labels] = (lam * cos[rows, labels] + p) / (1.0 + lam)
    dg[rows, labels] = (lam + dp) / (1.0 + lam)

    z = xn[:, None] * g
    z_max = z.max(axis=1, keepdims=True)
    ez = np.exp(z - z_max)
    denom = ez.sum(axis=1, keepdims=True)
    loss = float(np.mean(np.log(denom[:, 0]) + z_max[:, 0] - z[rows, labels]))

    dz = ez / denom
    dz[rows, labels] -= 1.0
    dz /= n

    dxn = (dz * g).sum(axis=1)
    dc = dz * dg * xn[:, None]
    # d cos_ij / d x_i = w_j / (|x_i||w_j|) - cos_ij x_i / |x_i|^2, and symmetrically for w_j
    dx = (dc / wn[None, :]) @ w / xn[:, None] - ((dc * cos).sum(axis=1) / xn**2)[:, None] * x
    dx += (dxn / xn)[:, None] * x
    dw = (dc / xn[:, None]).T @ x / wn[:, None] - ((dc * cos).sum(axis=0) / wn**2)[:, None] * w
    return loss, dx.astype(x.dtype), dw.astype(w.dtype)


def softmax_cross_entropy(logits, labels):
    """Reference mean cross-entropy of raw logits."""
    labels = np.asarray(labels)
    zmax = logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(logits - zmax).sum(axis=1)) + zmax[:, 0]
    return float(np.mean(lse - logits[np.arange(len(labels)), labels]))
