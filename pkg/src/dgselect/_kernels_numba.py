"""Numba-compiled twins of the hot kernels in :mod:`dgselect._kernels_numpy`.

Import fails if numba is unavailable; :mod:`dgselect._backend` then falls back
to the numpy twin.  All loops are sequential with a fixed summation order, so
results are deterministic and match the numpy twin to within 1e-10 relative.
"""
from __future__ import annotations

import numpy as np
from numba import njit

BACKEND_NAME = "numba"


@njit(cache=True)
def pairwise_sq_dists(a, b):
    n, d = a.shape
    m = b.shape[0]
    out = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for c in range(d):
                diff = a[i, c] - b[j, c]
                acc += diff * diff
            out[i, j] = acc if acc > 0.0 else 0.0
    return out


@njit(cache=True)
def multi_gamma_kernel(d, gammas):
    n, m = d.shape
    out = np.zeros((n, m))
    for g in gammas:
        for i in range(n):
            for j in range(m):
                out[i, j] += np.exp(-g * d[i, j])
    return out


@njit(cache=True)
def grid_curve_eval(row_risk, contrib_u, contrib_s):
    n_x, n_pts = row_risk.shape
    n_y = contrib_u.shape[2]
    n_z = contrib_u.shape[3]
    total = n_pts**n_x

    risks = np.empty(total)
    kls = np.empty(total)
    idx = np.empty(n_x, dtype=np.int64)
    joint_u = np.empty((n_y, n_z))
    joint_s = np.empty((n_y, n_z))

    for t in range(total):
        rem = t
        for x in range(n_x - 1, -1, -1):
            idx[x] = rem % n_pts
            rem //= n_pts

        risk = 0.0
        for y in range(n_y):
            for z in range(n_z):
                joint_u[y, z] = 0.0
                joint_s[y, z] = 0.0
        for x in range(n_x):
            i = idx[x]
            risk += row_risk[x, i]
            for y in range(n_y):
                for z in range(n_z):
                    joint_u[y, z] += contrib_u[x, i, y, z]
                    joint_s[y, z] += contrib_s[x, i, y, z]

        kl = 0.0
        for y in range(n_y):
            for z in range(n_z):
                u = joint_u[y, z]
                if u > 0.0:
                    s = joint_s[y, z]
                    if s <= 0.0:
                        kl = np.inf
                    elif np.isfinite(kl):
                        kl += u * np.log(u / s)

        risks[t] = risk
        kls[t] = kl if kl > 0.0 else 0.0
    return risks, kls


@njit(cache=True)
def scalarized_solve(q0, mu, p_u_x, p_s_x, label_u, label_s, r_s, step_size, budget, window, tol):
    n_x, n_z = q0.shape
    n_y = label_u.shape[1]

    q = q0.copy()
    best_q = q0.copy()
    best_obj = np.inf
    history = np.full(window, np.inf)

    wu = np.empty((n_x, n_y))
    ws = np.empty((n_x, n_y))
    risk_grad = np.empty((n_x, n_z))
    for x in range(n_x):
        for y in range(n_y):
            wu[x, y] = p_u_x[x] * label_u[x, y]
            ws[x, y] = p_s_x[x] * label_s[x, y]
        for z in range(n_z):
            risk_grad[x, z] = p_s_x[x] * r_s[x, z]

    joint_u = np.empty((n_y, n_z))
    joint_s = np.empty((n_y, n_z))
    grad = np.empty((n_x, n_z))
    logits = np.empty(n_z)

    it = 0
    residual = np.inf
    converged = False
    for it in range(1, budget + 1):
        for y in range(n_y):
            for z in range(n_z):
                au = 0.0
                as_ = 0.0
                for x in range(n_x):
                    au += wu[x, y] * q[x, z]
                    as_ += ws[x, y] * q[x, z]
                joint_u[y, z] = au
                joint_s[y, z] = as_

        kl = 0.0
        risk = 0.0
        for y in range(n_y):
            for z in range(n_z):
                u = joint_u[y, z]
                if u > 0.0:
                    s = joint_s[y, z]
                    kl += u * (np.log(max(u, 1e-300)) - np.log(max(s, 1e-300)))
        for x in range(n_x):
            for z in range(n_z):
                risk += risk_grad[x, z] * q[x, z]
        obj = kl + mu * risk

        if obj < best_obj:
            best_obj = obj
            for x in range(n_x):
                for z in range(n_z):
                    best_q[x, z] = q[x, z]
        slot = (it - 1) % window
        prev = history[slot]
        history[slot] = best_obj
        if it > window:
            residual = prev - best_obj
            if residual < tol:
                converged = True
                break

        for x in range(n_x):
            for z in range(n_z):
                g = mu * risk_grad[x, z]
                for y in range(n_y):
                    u = joint_u[y, z]
                    s = joint_s[y, z]
                    log_ratio = np.log(max(u, 1e-300)) - np.log(max(s, 1e-300))
                    ratio = u / s if s > 0.0 else 0.0
                    g += wu[x, y] * (log_ratio + 1.0) - ws[x, y] * ratio
                grad[x, z] = g

        for x in range(n_x):
            mx = -np.inf
            for z in range(n_z):
                logits[z] = np.log(max(q[x, z], 1e-300)) - step_size * grad[x, z]
                if logits[z] > mx:
                    mx = logits[z]
            norm = 0.0
            for z in range(n_z):
                logits[z] = np.exp(logits[z] - mx)
                norm += logits[z]
            for z in range(n_z):
                q[x, z] = logits[z] / norm

    return best_q, best_obj, it, residual, converged
