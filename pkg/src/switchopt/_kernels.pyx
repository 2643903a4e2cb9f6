# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False, language_level=3
"""Compiled sequential sweeps; same signatures and results as ``_fallback``.

All matrices are handled as flat row-major blocks. The state and input
dimensions are small, so plain loops beat BLAS calls here.
"""
import numpy as np

from libc.math cimport isfinite


cdef inline double* blk4(double[:, :, :, ::1] a, Py_ssize_t k, Py_ssize_t s) noexcept nogil:
    return &a[k, s, 0, 0]


cdef inline double* blk3(double[:, :, ::1] a, Py_ssize_t k, Py_ssize_t s) noexcept nogil:
    return &a[k, s, 0]


cdef void ric_rhs(
    int nx, int nu,
    const double* A, const double* Q, const double* R, const double* qv,
    const double* RiBt, const double* RiPt, const double* Rir,
    const double* S, const double* sv,
    double* W, double* w, double* L, double* l, double* RL, double* Rl, double* ffq,
) noexcept nogil:
    cdef int i, j, m
    cdef double acc
    for i in range(nu):
        for j in range(nx):
            acc = RiPt[i * nx + j]
            for m in range(nx):
                acc += RiBt[i * nx + m] * S[m * nx + j]
            L[i * nx + j] = -acc
        acc = Rir[i]
        for m in range(nx):
            acc += RiBt[i * nx + m] * sv[m]
        l[i] = -acc
    for i in range(nu):
        for j in range(nx):
            acc = 0.0
            for m in range(nu):
                acc += R[i * nu + m] * L[m * nx + j]
            RL[i * nx + j] = acc
        acc = 0.0
        for m in range(nu):
            acc += R[i * nu + m] * l[m]
        Rl[i] = acc
    for i in range(nx):
        for j in range(nx):
            acc = Q[i * nx + j]
            for m in range(nx):
                acc += A[m * nx + i] * S[m * nx + j] + A[m * nx + j] * S[m * nx + i]
            for m in range(nu):
                acc -= L[m * nx + i] * RL[m * nx + j]
            W[i * nx + j] = acc
        acc = qv[i]
        for m in range(nx):
            acc += A[m * nx + i] * sv[m]
        for m in range(nu):
            acc -= L[m * nx + i] * Rl[m]
        w[i] = acc
    acc = 0.0
    for m in range(nu):
        acc += l[m] * Rl[m]
    ffq[0] = 0.5 * acc


cdef inline bint all_finite(const double* a, int n) noexcept nogil:
    cdef int i
    for i in range(n):
        if not isfinite(a[i]):
            return False
    return True


def riccati_sweep(A, B, Q, R, qv, q, RiBt, RiPt, Rir, step_dur, double h, int N, Qf, qvf):
    cdef double[:, :, :, ::1] A_ = np.ascontiguousarray(A, dtype=np.float64)
    cdef double[:, :, :, ::1] Q_ = np.ascontiguousarray(Q, dtype=np.float64)
    cdef double[:, :, :, ::1] R_ = np.ascontiguousarray(R, dtype=np.float64)
    cdef double[:, :, ::1] qv_ = np.ascontiguousarray(qv, dtype=np.float64)
    cdef double[:, ::1] q_ = np.ascontiguousarray(q, dtype=np.float64)
    cdef double[:, :, :, ::1] RiBt_ = np.ascontiguousarray(RiBt, dtype=np.float64)
    cdef double[:, :, :, ::1] RiPt_ = np.ascontiguousarray(RiPt, dtype=np.float64)
    cdef double[:, :, ::1] Rir_ = np.ascontiguousarray(Rir, dtype=np.float64)
    cdef double[::1] dur = np.ascontiguousarray(step_dur, dtype=np.float64)
    cdef int M = A_.shape[0]
    cdef int nx = A_.shape[2]
    cdef int nu = R_.shape[2]
    cdef int n_local = M + M // N

    S_arr = np.empty((M + 1, nx, nx))
    sv_arr = np.empty((M + 1, nx))
    cq_arr = np.empty(M + 1)
    cl_arr = np.empty(M + 1)
    L_arr = np.empty((n_local, nu, nx))
    l_arr = np.empty((n_local, nu))
    cdef double[:, :, ::1] S = S_arr
    cdef double[:, ::1] sv = sv_arr
    cdef double[::1] cq = cq_arr
    cdef double[::1] cl = cl_arr
    cdef double[:, :, ::1] Lg = L_arr
    cdef double[:, ::1] lg = l_arr
    S_arr[M] = Qf
    sv_arr[M] = qvf
    cq[M] = 0.0
    cl[M] = 0.0

    cdef double[:, ::1] Wst = np.empty((4, nx * nx))
    cdef double[:, ::1] wst = np.empty((4, nx))
    cdef double[::1] ast = np.empty(4)
    cdef double[::1] bst = np.empty(4)
    cdef double[::1] Stmp = np.empty(nx * nx)
    cdef double[::1] vtmp = np.empty(nx)
    cdef double[::1] Lb = np.empty(nu * nx)
    cdef double[::1] lb = np.empty(nu)
    cdef double[::1] RL = np.empty(nu * nx)
    cdef double[::1] Rl = np.empty(nu)
    cdef double[::1] S0 = np.empty(nx * nx)
    cdef double[::1] Wd = np.empty(nx * nx)
    cdef double[::1] wd = np.empty(nx)
    cdef double ffq
    cdef int k, j, st, i, n, s
    cdef int sidx[4]
    cdef double frac[4]
    cdef double c
    sidx[0] = 2; sidx[1] = 1; sidx[2] = 1; sidx[3] = 0
    frac[0] = 0.0; frac[1] = 0.5; frac[2] = 0.5; frac[3] = 1.0

    with nogil:
        for k in range(M - 1, -1, -1):
            j = k + k // N
            c = h * dur[k]
            for st in range(4):
                s = sidx[st]
                if st == 0:
                    for n in range(nx * nx):
                        Stmp[n] = (&S[k + 1, 0, 0])[n]
                    for n in range(nx):
                        vtmp[n] = sv[k + 1, n]
                else:
                    for n in range(nx * nx):
                        Stmp[n] = (&S[k + 1, 0, 0])[n] + frac[st] * c * Wst[st - 1, n]
                    for n in range(nx):
                        vtmp[n] = sv[k + 1, n] + frac[st] * c * wst[st - 1, n]
                ric_rhs(
                    nx, nu, blk4(A_, k, s), blk4(Q_, k, s), blk4(R_, k, s), blk3(qv_, k, s),
                    blk4(RiBt_, k, s), blk4(RiPt_, k, s), blk3(Rir_, k, s),
                    &Stmp[0], &vtmp[0], &Wst[st, 0], &wst[st, 0], &Lb[0], &lb[0], &RL[0], &Rl[0], &ffq,
                )
                ast[st] = q_[k, s]
                bst[st] = ffq
                if st == 0 and k % N == N - 1:
                    # left limit at the end of a mode
                    for n in range(nu * nx):
                        (&Lg[j + 1, 0, 0])[n] = Lb[n]
                    for n in range(nu):
                        lg[j + 1, n] = lb[n]
            for n in range(nx * nx):
                S0[n] = (&S[k + 1, 0, 0])[n] + (c / 6.0) * (
                    Wst[0, n] + 2.0 * Wst[1, n] + 2.0 * Wst[2, n] + Wst[3, n]
                )
            for i in range(nx):
                for n in range(nx):
                    S[k, i, n] = 0.5 * (S0[i * nx + n] + S0[n * nx + i])
                sv[k, i] = sv[k + 1, i] + (c / 6.0) * (
                    wst[0, i] + 2.0 * wst[1, i] + 2.0 * wst[2, i] + wst[3, i]
                )
            cq[k] = cq[k + 1] + (c / 6.0) * (ast[0] + 2.0 * ast[1] + 2.0 * ast[2] + ast[3])
            cl[k] = cl[k + 1] + (c / 6.0) * (bst[0] + 2.0 * bst[1] + 2.0 * bst[2] + bst[3])
            if not (all_finite(&S[k, 0, 0], nx * nx) and all_finite(&sv[k, 0], nx)):
                with gil:
                    return S_arr, sv_arr, cq_arr, cl_arr, L_arr, l_arr, k
            ric_rhs(
                nx, nu, blk4(A_, k, 0), blk4(Q_, k, 0), blk4(R_, k, 0), blk3(qv_, k, 0),
                blk4(RiBt_, k, 0), blk4(RiPt_, k, 0), blk3(Rir_, k, 0),
                &S[k, 0, 0], &sv[k, 0], &Wd[0], &wd[0], &Lg[j, 0, 0], &lg[j, 0], &RL[0], &Rl[0], &ffq,
            )
    return S_arr, sv_arr, cq_arr, cl_arr, L_arr, l_arr, -1


def sens_forward_sweep(A, B, f, Lp, du_extra, step_dur, ind, double h, double sign):
    cdef double[:, :, :, ::1] A_ = np.ascontiguousarray(A, dtype=np.float64)
    cdef double[:, :, :, ::1] B_ = np.ascontiguousarray(B, dtype=np.float64)
    cdef double[:, :, ::1] f_ = np.ascontiguousarray(f, dtype=np.float64)
    cdef double[:, :, :, ::1] Lp_ = np.ascontiguousarray(Lp, dtype=np.float64)
    cdef double[:, :, ::1] ex_ = np.ascontiguousarray(du_extra, dtype=np.float64)
    cdef double[::1] dur = np.ascontiguousarray(step_dur, dtype=np.float64)
    cdef double[::1] ind_ = np.ascontiguousarray(ind, dtype=np.float64)
    cdef int M = A_.shape[0]
    cdef int nx = A_.shape[2]
    cdef int nu = B_.shape[3]
    dx_arr = np.zeros((M + 1, nx))
    dxm_arr = np.empty((M, nx))
    cdef double[:, ::1] dx = dx_arr
    cdef double[:, ::1] dxm = dxm_arr
    cdef double[:, ::1] K = np.empty((4, nx))
    cdef double[::1] y = np.empty(nx)
    cdef double[::1] du = np.empty(nu)
    cdef int k, st, s, i, m
    cdef int sidx[4]
    cdef double frac[4]
    cdef double acc, d, e
    sidx[0] = 0; sidx[1] = 1; sidx[2] = 1; sidx[3] = 2
    frac[0] = 0.0; frac[1] = 0.5; frac[2] = 0.5; frac[3] = 1.0
    with nogil:
        for k in range(M):
            d = dur[k]
            e = ind_[k]
            for st in range(4):
                s = sidx[st]
                for i in range(nx):
                    y[i] = dx[k, i]
                    if st > 0:
                        y[i] += frac[st] * h * K[st - 1, i]
                for i in range(nu):
                    acc = ex_[k, s, i]
                    for m in range(nx):
                        acc += sign * Lp_[k, s, i, m] * y[m]
                    du[i] = acc
                for i in range(nx):
                    acc = 0.0
                    for m in range(nx):
                        acc += A_[k, s, i, m] * y[m]
                    for m in range(nu):
                        acc += B_[k, s, i, m] * du[m]
                    K[st, i] = e * f_[k, s, i] + d * acc
            for i in range(nx):
                dx[k + 1, i] = dx[k, i] + (h / 6.0) * (K[0, i] + 2.0 * K[1, i] + 2.0 * K[2, i] + K[3, i])
                dxm[k, i] = 0.5 * (dx[k, i] + dx[k + 1, i]) + (h / 8.0) * (K[0, i] - K[3, i])
            if not all_finite(&dx[k + 1, 0], nx):
                with gil:
                    return dx_arr, dxm_arr, k
    return dx_arr, dxm_arr, -1


cdef void sens_rhs(
    int nx, int nu, double a2,
    const double* A, const double* Q, const double* R, const double* qv, double q,
    const double* RiBt, const double* RiPt, const double* Rir,
    const double* dq, const double* Ridr, double dqs,
    const double* S, const double* sv, const double* dS, const double* dsv,
    double* W, double* w, double* ws, double* dW, double* dw, double* dws,
    double* L, double* l, double* RL, double* Rl, double* dL, double* dl, double* T,
) noexcept nogil:
    cdef int i, j, m
    cdef double acc, ffq
    ric_rhs(nx, nu, A, Q, R, qv, RiBt, RiPt, Rir, S, sv, W, w, L, l, RL, Rl, &ffq)
    ws[0] = q - a2 * 2.0 * ffq
    for i in range(nu):
        for j in range(nx):
            acc = 0.0
            for m in range(nx):
                acc += RiBt[i * nx + m] * dS[m * nx + j]
            dL[i * nx + j] = -acc
        acc = Ridr[i]
        for m in range(nx):
            acc += RiBt[i * nx + m] * dsv[m]
        dl[i] = -acc
    # T = A^T dS - dL^T R L; dW = T + T^T
    for i in range(nx):
        for j in range(nx):
            acc = 0.0
            for m in range(nx):
                acc += A[m * nx + i] * dS[m * nx + j]
            for m in range(nu):
                acc -= dL[m * nx + i] * RL[m * nx + j]
            T[i * nx + j] = acc
    for i in range(nx):
        for j in range(nx):
            dW[i * nx + j] = T[i * nx + j] + T[j * nx + i]
        acc = dq[i]
        for m in range(nx):
            acc += A[m * nx + i] * dsv[m]
        for m in range(nu):
            acc -= dL[m * nx + i] * Rl[m] + RL[m * nx + i] * dl[m]
        dw[i] = acc
    acc = 0.0
    for m in range(nu):
        acc += dl[m] * Rl[m]
    dws[0] = dqs - a2 * 2.0 * acc


def sens_backward_sweep(
    A, B, Q, R, qv, q, RiBt, RiPt, Rir, step_dur, ind, double h, double alpha,
    dq, Ridr, dqs, Qf, qvf, dsv_T, double dsc_T,
):
    cdef double[:, :, :, ::1] A_ = np.ascontiguousarray(A, dtype=np.float64)
    cdef double[:, :, :, ::1] Q_ = np.ascontiguousarray(Q, dtype=np.float64)
    cdef double[:, :, :, ::1] R_ = np.ascontiguousarray(R, dtype=np.float64)
    cdef double[:, :, ::1] qv_ = np.ascontiguousarray(qv, dtype=np.float64)
    cdef double[:, ::1] q_ = np.ascontiguousarray(q, dtype=np.float64)
    cdef double[:, :, :, ::1] RiBt_ = np.ascontiguousarray(RiBt, dtype=np.float64)
    cdef double[:, :, :, ::1] RiPt_ = np.ascontiguousarray(RiPt, dtype=np.float64)
    cdef double[:, :, ::1] Rir_ = np.ascontiguousarray(Rir, dtype=np.float64)
    cdef double[:, :, ::1] dq_ = np.ascontiguousarray(dq, dtype=np.float64)
    cdef double[:, :, ::1] Ridr_ = np.ascontiguousarray(Ridr, dtype=np.float64)
    cdef double[:, ::1] dqs_ = np.ascontiguousarray(dqs, dtype=np.float64)
    cdef double[::1] dur = np.ascontiguousarray(step_dur, dtype=np.float64)
    cdef double[::1] ind_ = np.ascontiguousarray(ind, dtype=np.float64)
    cdef int M = A_.shape[0]
    cdef int nx = A_.shape[2]
    cdef int nu = R_.shape[2]
    cdef int nn = nx * nx

    S_arr = np.empty((M + 1, nx, nx))
    sv_arr = np.empty((M + 1, nx))
    dS_arr = np.empty((M + 1, nx, nx))
    dsv_arr = np.empty((M + 1, nx))
    dsc_arr = np.empty(M + 1)
    S_arr[M] = Qf
    sv_arr[M] = qvf
    dS_arr[M] = 0.0
    dsv_arr[M] = dsv_T
    dsc_arr[M] = dsc_T
    cdef double[:, :, ::1] S = S_arr
    cdef double[:, ::1] sv = sv_arr
    cdef double[:, :, ::1] dS = dS_arr
    cdef double[:, ::1] dsv = dsv_arr
    cdef double[::1] dsc = dsc_arr

    # stage derivatives, already scaled: G0 = d W, G1 = d w, G2 = e W + d dW, ...
    cdef double[:, ::1] G0 = np.empty((4, nn))
    cdef double[:, ::1] G1 = np.empty((4, nx))
    cdef double[:, ::1] G2 = np.empty((4, nn))
    cdef double[:, ::1] G3 = np.empty((4, nx))
    cdef double[::1] G4 = np.empty(4)
    cdef double[::1] Ys = np.empty(nn)
    cdef double[::1] Yv = np.empty(nx)
    cdef double[::1] YdS = np.empty(nn)
    cdef double[::1] Ydv = np.empty(nx)
    cdef double[::1] W = np.empty(nn)
    cdef double[::1] w = np.empty(nx)
    cdef double[::1] dW = np.empty(nn)
    cdef double[::1] dw = np.empty(nx)
    cdef double[::1] L = np.empty(nu * nx)
    cdef double[::1] l = np.empty(nu)
    cdef double[::1] RL = np.empty(nu * nx)
    cdef double[::1] Rl = np.empty(nu)
    cdef double[::1] dL = np.empty(nu * nx)
    cdef double[::1] dl = np.empty(nu)
    cdef double[::1] T = np.empty(nn)
    cdef double[::1] tmp = np.empty(nn)
    cdef double ws, dws, d, e, fr, c6
    cdef double a2 = 0.5 * alpha * (2.0 - alpha)
    cdef int k, st, s, n, i
    cdef int sidx[4]
    cdef double frac[4]
    sidx[0] = 2; sidx[1] = 1; sidx[2] = 1; sidx[3] = 0
    frac[0] = 0.0; frac[1] = 0.5; frac[2] = 0.5; frac[3] = 1.0

    with nogil:
        for k in range(M - 1, -1, -1):
            d = dur[k]
            e = ind_[k]
            for st in range(4):
                s = sidx[st]
                fr = frac[st] * h
                for n in range(nn):
                    Ys[n] = (&S[k + 1, 0, 0])[n]
                    YdS[n] = (&dS[k + 1, 0, 0])[n]
                    if st > 0:
                        Ys[n] += fr * G0[st - 1, n]
                        YdS[n] += fr * G2[st - 1, n]
                for n in range(nx):
                    Yv[n] = sv[k + 1, n]
                    Ydv[n] = dsv[k + 1, n]
                    if st > 0:
                        Yv[n] += fr * G1[st - 1, n]
                        Ydv[n] += fr * G3[st - 1, n]
                sens_rhs(
                    nx, nu, a2,
                    blk4(A_, k, s), blk4(Q_, k, s), blk4(R_, k, s), blk3(qv_, k, s), q_[k, s],
                    blk4(RiBt_, k, s), blk4(RiPt_, k, s), blk3(Rir_, k, s),
                    blk3(dq_, k, s), blk3(Ridr_, k, s), dqs_[k, s],
                    &Ys[0], &Yv[0], &YdS[0], &Ydv[0],
                    &W[0], &w[0], &ws, &dW[0], &dw[0], &dws,
                    &L[0], &l[0], &RL[0], &Rl[0], &dL[0], &dl[0], &T[0],
                )
                for n in range(nn):
                    G0[st, n] = d * W[n]
                    G2[st, n] = e * W[n] + d * dW[n]
                for n in range(nx):
                    G1[st, n] = d * w[n]
                    G3[st, n] = e * w[n] + d * dw[n]
                G4[st] = e * ws + d * dws
            c6 = h / 6.0
            for n in range(nn):
                tmp[n] = (&S[k + 1, 0, 0])[n] + c6 * (G0[0, n] + 2.0 * G0[1, n] + 2.0 * G0[2, n] + G0[3, n])
            for i in range(nx):
                for n in range(nx):
                    S[k, i, n] = 0.5 * (tmp[i * nx + n] + tmp[n * nx + i])
            for n in range(nn):
                tmp[n] = (&dS[k + 1, 0, 0])[n] + c6 * (G2[0, n] + 2.0 * G2[1, n] + 2.0 * G2[2, n] + G2[3, n])
            for i in range(nx):
                for n in range(nx):
                    dS[k, i, n] = 0.5 * (tmp[i * nx + n] + tmp[n * nx + i])
            for n in range(nx):
                sv[k, n] = sv[k + 1, n] + c6 * (G1[0, n] + 2.0 * G1[1, n] + 2.0 * G1[2, n] + G1[3, n])
                dsv[k, n] = dsv[k + 1, n] + c6 * (G3[0, n] + 2.0 * G3[1, n] + 2.0 * G3[2, n] + G3[3, n])
            dsc[k] = dsc[k + 1] + c6 * (G4[0] + 2.0 * G4[1] + 2.0 * G4[2] + G4[3])
            if not (all_finite(&dS[k, 0, 0], nn) and all_finite(&dsv[k, 0], nx) and isfinite(dsc[k])):
                with gil:
                    return S_arr, sv_arr, dS_arr, dsv_arr, dsc_arr, k
    return S_arr, sv_arr, dS_arr, dsv_arr, dsc_arr, -1
