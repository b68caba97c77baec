"""Finite-difference helpers shared by the gradient tests."""

import numpy as np


def rel_error(a, b):
    """Norm-wise relative error ||a - b|| / (||a|| + ||b||)."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    denom = np.linalg.norm(a) + np.linalg.norm(b)
    return 0.0 if denom == 0 else float(np.linalg.norm(a - b) / denom)


def numeric_grad(f, arr, h=1e-6, indices=None):
    """Central differences of scalar ``f()`` with respect to ``arr`` (edited in place).

    With ``indices`` only those entries are perturbed and a flat array of
    their derivatives is returned; otherwise the full gradient.
    """
    if indices is None:
        grad = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        idx_list = []
        while not it.finished:
            idx_list.append(it.multi_index)
            it.iternext()
    else:
        idx_list = list(indices)
        grad = np.zeros(len(idx_list))
    for k, idx in enumerate(idx_list):
        old = arr[idx]
        arr[idx] = old + h
        fp = f()
        arr[idx] = old - h
        fm = f()
        arr[idx] = old
        if indices is None:
            grad[idx] = (fp - fm) / (2 * h)
        else:
            grad[k] = (fp - fm) / (2 * h)
    return grad
