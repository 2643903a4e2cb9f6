"""Pure numpy implementation of the sequential sweeps.

Mirrors ``_kernels.pyx`` step for step. Model arrays are step triples
``[start, mid, end]``; the backward sweeps walk from node ``M`` to ``0``.
``RiBt``, ``RiPt`` and ``Rir`` hold ``R^-1 B^T``, ``R^-1 P^T`` and
``R^-1 r`` per sample.
"""
import numpy as np


def _riccati_rhs(k, s, S, sv, A, Q, R, qv, q, RiBt, RiPt, Rir):
    Ak = A[k, s]
    L = -(RiPt[k, s] + RiBt[k, s] @ S)
    l = -(Rir[k, s] + RiBt[k, s] @ sv)
    RL = R[k, s] @ L
    Rl = R[k, s] @ l
    AtS = Ak.T @ S
    W = Q[k, s] + AtS + AtS.T - L.T @ RL
    w = qv[k, s] + Ak.T @ sv - L.T @ Rl
    return W, w, q[k, s], 0.5 * (l @ Rl), L, l


def riccati_sweep(A, B, Q, R, qv, q, RiBt, RiPt, Rir, step_dur, h, N, Qf, qvf):
    """Gains are returned on mode-local nodes: step ``k`` of mode ``i`` starts
    at local index ``k + i`` and ends at ``k + i + 1``."""
    M, _, nx, _ = A.shape
    nu = R.shape[-1]
    n_local = M + M // N
    S = np.empty((M + 1, nx, nx))
    sv = np.empty((M + 1, nx))
    cq = np.empty(M + 1)
    cl = np.empty(M + 1)
    L = np.empty((n_local, nu, nx))
    l = np.empty((n_local, nu))
    S[M] = Qf
    sv[M] = qvf
    cq[M] = 0.0
    cl[M] = 0.0
    args = (A, Q, R, qv, q, RiBt, RiPt, Rir)
    for k in range(M - 1, -1, -1):
        j = k + k // N
        if k % N == N - 1:
            # left limit at the end of a mode
            _, _, _, _, L[j + 1], l[j + 1] = _riccati_rhs(k, 2, S[k + 1], sv[k + 1], *args)
        d = step_dur[k]
        S1 = S[k + 1]
        v1 = sv[k + 1]
        c = h * d
        W1, w1, a1, b1, _, _ = _riccati_rhs(k, 2, S1, v1, *args)
        W2, w2, a2, b2, _, _ = _riccati_rhs(k, 1, S1 + 0.5 * c * W1, v1 + 0.5 * c * w1, *args)
        W3, w3, a3, b3, _, _ = _riccati_rhs(k, 1, S1 + 0.5 * c * W2, v1 + 0.5 * c * w2, *args)
        W4, w4, a4, b4, _, _ = _riccati_rhs(k, 0, S1 + c * W3, v1 + c * w3, *args)
        S0 = S1 + (c / 6.0) * (W1 + 2.0 * W2 + 2.0 * W3 + W4)
        S[k] = 0.5 * (S0 + S0.T)
        sv[k] = v1 + (c / 6.0) * (w1 + 2.0 * w2 + 2.0 * w3 + w4)
        cq[k] = cq[k + 1] + (c / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        cl[k] = cl[k + 1] + (c / 6.0) * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        if not (np.all(np.isfinite(S[k])) and np.all(np.isfinite(sv[k]))):
            return S, sv, cq, cl, L, l, k
        _, _, _, _, L[j], l[j] = _riccati_rhs(k, 0, S[k], sv[k], *args)
    return S, sv, cq, cl, L, l, -1


def sens_forward_sweep(A, B, f, Lp, du_extra, step_dur, ind, h, sign):
    M, _, nx, _ = A.shape
    dx = np.zeros((M + 1, nx))
    dx_mid = np.empty((M, nx))

    def rhs(k, s, y):
        du = sign * (Lp[k, s] @ y) + du_extra[k, s]
        return ind[k] * f[k, s] + step_dur[k] * (A[k, s] @ y + B[k, s] @ du)

    for k in range(M):
        y = dx[k]
        k1 = rhs(k, 0, y)
        k2 = rhs(k, 1, y + 0.5 * h * k1)
        k3 = rhs(k, 1, y + 0.5 * h * k2)
        k4 = rhs(k, 2, y + h * k3)
        y1 = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        dx[k + 1] = y1
        dx_mid[k] = 0.5 * (y + y1) + (h / 8.0) * (k1 - k4)
        if not np.all(np.isfinite(y1)):
            return dx, dx_mid, k
    return dx, dx_mid, -1


def _sens_rhs(k, s, S, sv, dS, dsv, a2, A, Q, R, qv, q, RiBt, RiPt, Rir, dq, Ridr, dqs):
    Ak = A[k, s]
    Rk = R[k, s]
    L = -(RiPt[k, s] + RiBt[k, s] @ S)
    l = -(Rir[k, s] + RiBt[k, s] @ sv)
    dL = -(RiBt[k, s] @ dS)
    dl = -(Ridr[k, s] + RiBt[k, s] @ dsv)
    RL = Rk @ L
    Rl = Rk @ l
    AtS = Ak.T @ S
    W = Q[k, s] + AtS + AtS.T - L.T @ RL
    w = qv[k, s] + Ak.T @ sv - L.T @ Rl
    ws = q[k, s] - a2 * (l @ Rl)
    AtdS = Ak.T @ dS
    dLtRL = dL.T @ RL
    dW = AtdS + AtdS.T - dLtRL - dLtRL.T
    dw = dq[k, s] + Ak.T @ dsv - dL.T @ Rl - RL.T @ dl
    dws = dqs[k, s] - a2 * 2.0 * (dl @ Rl)
    return W, w, ws, dW, dw, dws


def sens_backward_sweep(
    A, B, Q, R, qv, q, RiBt, RiPt, Rir, step_dur, ind, h, alpha, dq, Ridr, dqs, Qf, qvf, dsv_T, dsc_T
):
    M, _, nx, _ = A.shape
    S = np.empty((M + 1, nx, nx))
    sv = np.empty((M + 1, nx))
    dS = np.empty((M + 1, nx, nx))
    dsv = np.empty((M + 1, nx))
    dsc = np.empty(M + 1)
    S[M] = Qf
    sv[M] = qvf
    dS[M] = 0.0
    dsv[M] = dsv_T
    dsc[M] = dsc_T
    a2 = 0.5 * alpha * (2.0 - alpha)
    args = (a2, A, Q, R, qv, q, RiBt, RiPt, Rir, dq, Ridr, dqs)
    for k in range(M - 1, -1, -1):
        d = step_dur[k]
        e = ind[k]
        Y = (S[k + 1], sv[k + 1], dS[k + 1], dsv[k + 1], dsc[k + 1])
        G = []
        for s, frac in ((2, 0.0), (1, 0.5), (1, 0.5), (0, 1.0)):
            if G:
                prev = G[-1]
                Yst = tuple(y + frac * h * g for y, g in zip(Y, prev))
            else:
                Yst = Y
            W, w, ws, dW, dw, dws = _sens_rhs(k, s, Yst[0], Yst[1], Yst[2], Yst[3], *args)
            G.append((d * W, d * w, e * W + d * dW, e * w + d * dw, e * ws + d * dws))
        new = [
            y + (h / 6.0) * (g1 + 2.0 * g2 + 2.0 * g3 + g4)
            for y, g1, g2, g3, g4 in zip(Y, *G)
        ]
        S[k] = 0.5 * (new[0] + new[0].T)
        sv[k] = new[1]
        dS[k] = 0.5 * (new[2] + new[2].T)
        dsv[k] = new[3]
        dsc[k] = new[4]
        if not (np.all(np.isfinite(dS[k])) and np.all(np.isfinite(dsv[k])) and np.isfinite(dsc[k])):
            return S, sv, dS, dsv, dsc, k
    return S, sv, dS, dsv, dsc, -1
