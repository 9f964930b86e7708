# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled MP_G flooding round.

The pairwise factor exp(Re{w conj(c_a) c_b}) separates into
exp(alpha_a * re_b) * exp(beta_a * im_b), so one edge needs
|C| * (#distinct real parts + #distinct imaginary parts) exponentials
instead of |C|^2. Edges whose exponent range could overflow fall back to
log-sum-exp.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, fabs, sqrt

cnp.import_array()

cdef enum:
    QMAX = 64


def _levels(values):
    lev, idx = np.unique(np.round(values, 12), return_inverse=True)
    return np.ascontiguousarray(lev, dtype=np.float64), np.ascontiguousarray(idx, dtype=np.intp)


def accumulate(double[:, ::1] log_f, cnp.intp_t[::1] ei, cnp.intp_t[::1] ej,
               double[:, ::1] msg_i, double[:, ::1] msg_j, double[:, ::1] out):
    cdef Py_ssize_t n = log_f.shape[0], Q = log_f.shape[1], E = ei.shape[0]
    cdef Py_ssize_t v, a, e, i, j
    with nogil:
        for v in range(n):
            for a in range(Q):
                out[v, a] = log_f[v, a]
        for e in range(E):
            i = ei[e]
            j = ej[e]
            for a in range(Q):
                out[i, a] += msg_i[e, a]
                out[j, a] += msg_j[e, a]
    return np.asarray(out)


def flood(cnp.intp_t[::1] ei, cnp.intp_t[::1] ej, w_in, points_in,
          double[:, ::1] log_v, double[:, ::1] msg_i, double[:, ::1] msg_j,
          double damping=0.0, counter=None):
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] w = np.ascontiguousarray(w_in, dtype=np.complex128)
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] pts = np.ascontiguousarray(points_in, dtype=np.complex128)
    cdef Py_ssize_t Q = pts.shape[0], E = ei.shape[0]
    if Q > QMAX:
        raise ValueError("constellation too large for the compiled kernel")
    rl, ri = _levels(pts.real)
    il, ii = _levels(pts.imag)
    cdef double[::1] rlev = rl, ilev = il
    cdef cnp.intp_t[::1] ridx = ri, iidx = ii
    cdef Py_ssize_t nr = rl.shape[0], ni = il.shape[0]
    cdef double[::1] cre = np.ascontiguousarray(pts.real), cim = np.ascontiguousarray(pts.imag)
    cdef double cmax2 = float(np.max(np.abs(pts)) ** 2)

    cdef double mui[QMAX]
    cdef double muj[QMAX]
    cdef double pi_[QMAX]
    cdef double pj[QMAX]
    cdef double ti[QMAX]
    cdef double tj[QMAX]
    cdef double er[QMAX * QMAX]
    cdef double eim[QMAX * QMAX]
    cdef double Lab[QMAX * QMAX]
    cdef double wr, wi, alpha, beta, mx, s, v, delta = 0.0, d1 = 1.0 - damping
    cdef Py_ssize_t e, a, b, r, i, j

    with nogil:
        for e in range(E):
            i = ei[e]
            j = ej[e]
            wr = w[e].real
            wi = w[e].imag
            mx = -1e300
            for a in range(Q):
                mui[a] = log_v[i, a] - msg_i[e, a]
                if mui[a] > mx:
                    mx = mui[a]
            for a in range(Q):
                mui[a] -= mx
            mx = -1e300
            for a in range(Q):
                muj[a] = log_v[j, a] - msg_j[e, a]
                if muj[a] > mx:
                    mx = muj[a]
            for a in range(Q):
                muj[a] -= mx

            if sqrt(wr * wr + wi * wi) * cmax2 < 500.0:
                # linear domain with separable exponentials
                for a in range(Q):
                    alpha = wr * cre[a] + wi * cim[a]
                    beta = -(wi * cre[a] - wr * cim[a])
                    for r in range(nr):
                        er[a * nr + r] = exp(alpha * rlev[r])
                    for r in range(ni):
                        eim[a * ni + r] = exp(beta * ilev[r])
                for a in range(Q):
                    pi_[a] = exp(mui[a])
                    pj[a] = exp(muj[a])
                    tj[a] = 0.0
                for a in range(Q):
                    s = 0.0
                    for b in range(Q):
                        v = er[a * nr + ridx[b]] * eim[a * ni + iidx[b]]
                        s += v * pj[b]
                        tj[b] += v * pi_[a]
                    ti[a] = log(s)
                for b in range(Q):
                    tj[b] = log(tj[b])
            else:
                for a in range(Q):
                    alpha = wr * cre[a] + wi * cim[a]
                    beta = -(wi * cre[a] - wr * cim[a])
                    for b in range(Q):
                        Lab[a * Q + b] = alpha * cre[b] + beta * cim[b]
                for a in range(Q):
                    mx = -1e300
                    for b in range(Q):
                        v = Lab[a * Q + b] + muj[b]
                        if v > mx:
                            mx = v
                    s = 0.0
                    for b in range(Q):
                        s += exp(Lab[a * Q + b] + muj[b] - mx)
                    ti[a] = mx + log(s)
                for b in range(Q):
                    mx = -1e300
                    for a in range(Q):
                        v = Lab[a * Q + b] + mui[a]
                        if v > mx:
                            mx = v
                    s = 0.0
                    for a in range(Q):
                        s += exp(Lab[a * Q + b] + mui[a] - mx)
                    tj[b] = mx + log(s)

            mx = -1e300
            for a in range(Q):
                if ti[a] > mx:
                    mx = ti[a]
            for a in range(Q):
                v = d1 * (ti[a] - mx) + damping * msg_i[e, a]
                if fabs(v - msg_i[e, a]) > delta:
                    delta = fabs(v - msg_i[e, a])
                msg_i[e, a] = v
            mx = -1e300
            for b in range(Q):
                if tj[b] > mx:
                    mx = tj[b]
            for b in range(Q):
                v = d1 * (tj[b] - mx) + damping * msg_j[e, b]
                if fabs(v - msg_j[e, b]) > delta:
                    delta = fabs(v - msg_j[e, b])
                msg_j[e, b] = v
    if counter is not None:
        counter["terms"] = counter.get("terms", 0) + 2 * E * Q * Q
        counter["entries"] = counter.get("entries", 0) + 2 * E * Q
        counter["factors"] = counter.get("factors", 0) + E
    return delta
