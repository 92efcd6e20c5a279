"""Pure-numpy implementations of the hot numeric kernels.

Twin of :mod:`dgselect._kernels_numba`; which one backs the public API is
decided in :mod:`dgselect._backend` via the ``DGSELECT_BACKEND`` environment
variable.  Both twins must agree to within 1e-10 relative on identical inputs
(the benchmark under ``benchmarks/`` checks this).
"""
from __future__ import annotations

import numpy as np
from scipy.special import rel_entr

BACKEND_NAME = "numpy"


def pairwise_sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances between rows of ``a`` (n×d) and ``b`` (m×d).

    Broadcasts the differences directly (O(n·m·d) memory) rather than using
    the ||a||² + ||b||² − 2a·b expansion: the expansion's cancellation error,
    scaled by the steepest kernel bandwidth, is visible at the 1e-12 level the
    estimator is held to.
    """
    d = np.square(a[:, np.newaxis, :] - b[np.newaxis, :, :]).sum(axis=-1)
    np.maximum(d, 0.0, out=d)
    return d


def multi_gamma_kernel(d: np.ndarray, gammas: np.ndarray) -> np.ndarray:
    """Sum of Gaussian kernels exp(−γ·d) over all γ, entrywise on ``d``."""
    k = np.zeros_like(d)
    for g in gammas:
        k += np.exp(-g * d)
    return k


def grid_curve_eval(
    row_risk: np.ndarray, contrib_u: np.ndarray, contrib_s: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Risk and KL discrepancy for every channel on a per-row simplex grid.

    ``row_risk[x, i]`` is the risk contribution of assigning grid row ``i`` to
    input ``x``; ``contrib_u[x, i]`` / ``contrib_s[x, i]`` are the matching
    (n_y × n_z) additive contributions to the unseen/seen joint tables.  A
    channel is one grid-row choice per input; channels are enumerated in
    C order with input 0 varying slowest.

    Returns flat arrays ``(risks, kls)`` of length ``n_pts ** n_x``.
    """
    n_x, n_pts = row_risk.shape
    n_y, n_z = contrib_u.shape[2], contrib_u.shape[3]
    shape = (n_pts,) * n_x

    risks = np.zeros(shape)
    joint_u = np.zeros(shape + (n_y, n_z))
    joint_s = np.zeros(shape + (n_y, n_z))
    for x in range(n_x):
        axes = (1,) * x + (n_pts,) + (1,) * (n_x - 1 - x)
        risks += row_risk[x].reshape(axes)
        joint_u += contrib_u[x].reshape(axes + (n_y, n_z))
        joint_s += contrib_s[x].reshape(axes + (n_y, n_z))

    kls = rel_entr(joint_u, joint_s).sum(axis=(-2, -1))
    np.maximum(kls, 0.0, out=kls)
    return risks.ravel(), kls.ravel()


def scalarized_solve(
    q0: np.ndarray,
    mu: float,
    p_u_x: np.ndarray,
    p_s_x: np.ndarray,
    label_u: np.ndarray,
    label_s: np.ndarray,
    r_s: np.ndarray,
    step_size: float,
    budget: int,
    window: int,
    tol: float,
) -> tuple[np.ndarray, float, int, float, bool]:
    """Minimize KL(unseen‖seen joint) + mu·risk over row-stochastic channels.

    Multiplicative-weights (mirror-descent) updates on each channel row,
    performed in log space with max-subtraction so that arbitrarily large
    gradients (large ``mu``) cannot overflow.  Stops once the best objective
    improves by less than ``tol`` over ``window`` iterations.

    Returns ``(best_q, best_obj, iterations, residual, converged)``.
    """
    q = q0.copy()
    best_q = q0.copy()
    best_obj = np.inf
    history = np.full(window, np.inf)

    wu = p_u_x[:, np.newaxis] * label_u  # (n_x, n_y)
    ws = p_s_x[:, np.newaxis] * label_s
    risk_grad = p_s_x[:, np.newaxis] * r_s  # constant in q

    it = 0
    residual = np.inf
    converged = False
    for it in range(1, budget + 1):
        joint_u = wu.T @ q  # (n_y, n_z)
        joint_s = ws.T @ q

        lu = np.log(np.maximum(joint_u, 1e-300))
        ls = np.log(np.maximum(joint_s, 1e-300))
        log_ratio = lu - ls
        kl = float(np.sum(np.where(joint_u > 0.0, joint_u * log_ratio, 0.0)))
        risk = float(np.sum(risk_grad * q))
        obj = kl + mu * risk

        if obj < best_obj:
            best_obj = obj
            best_q = q.copy()
        slot = (it - 1) % window
        prev = history[slot]
        history[slot] = best_obj
        if it > window:
            residual = prev - best_obj
            if residual < tol:
                converged = True
                break

        pos = joint_s > 0.0
        ratio = np.where(pos, joint_u / np.where(pos, joint_s, 1.0), 0.0)
        grad = wu @ (log_ratio + 1.0) - ws @ ratio + mu * risk_grad

        logits = np.log(np.maximum(q, 1e-300)) - step_size * grad
        logits -= logits.max(axis=1, keepdims=True)
        q = np.exp(logits)
        q /= q.sum(axis=1, keepdims=True)

    return best_q, best_obj, it, residual, converged
