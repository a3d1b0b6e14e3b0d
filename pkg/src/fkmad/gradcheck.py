"""Finite-difference gradient oracle.

Central differences on float64 give roughly 1e-10 absolute agreement for
well-scaled functions with the default step, which leaves plenty of margin
under the 1e-3 relative bound used by the gradient tests.  The oracle never
touches the graph: the loss function is evaluated under no_grad().
"""

from __future__ import annotations

import numpy as np

from .tensor import no_grad


def fd_gradient(loss_fn, params: dict, step: float = 1e-4) -> dict:
    """Central-difference gradient of `loss_fn` w.r.t. every array in `params`.

    loss_fn: callable taking no arguments and returning a float; it must read
    the current contents of the arrays in `params` (they are perturbed in
    place, one coordinate at a time, and restored afterwards).
    """
    grads = {}
    with no_grad():
        for name, arr in params.items():
            arr = np.asarray(arr)
            g = np.zeros_like(arr, dtype=np.float64)
            flat = arr.reshape(-1)
            gflat = g.reshape(-1)
            for i in range(flat.size):
                saved = flat[i]
                flat[i] = saved + step
                hi = float(loss_fn())
                flat[i] = saved - step
                lo = float(loss_fn())
                flat[i] = saved
                gflat[i] = (hi - lo) / (2.0 * step)
            grads[name] = g
    return grads


def relative_error(approx: np.ndarray, exact: np.ndarray, floor: float = 1e-8) -> float:
    """max_i |approx - exact| / max(|exact|, floor), as a single scalar."""
    approx = np.asarray(approx, dtype=np.float64)
    exact = np.asarray(exact, dtype=np.float64)
    denom = np.maximum(np.abs(exact), floor)
    if approx.size == 0:
        return 0.0
    return float(np.max(np.abs(approx - exact) / denom))


def max_param_relative_error(analytic: dict, numeric: dict, floor: float = 1e-6) -> float:
    """Worst relative error across a whole parameter dictionary.

    Per parameter the comparison is ||g_a - g_n|| / max(||g_n||, floor) so a
    single near-zero coordinate does not blow up the ratio.
    """
    worst = 0.0
    for name, g_num in numeric.items():
        g_ana = np.asarray(analytic[name], dtype=np.float64)
        g_num = np.asarray(g_num, dtype=np.float64)
        denom = max(float(np.linalg.norm(g_num)), floor)
        err = float(np.linalg.norm(g_ana - g_num)) / denom
        if err > worst:
            worst = err
    return worst
