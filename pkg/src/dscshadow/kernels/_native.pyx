# Compiled versions of the hot kernels: 2-D cross-correlation and the
# four-direction recurrent scan. Contracts match kernels._numpy exactly.
import numpy as np

cimport numpy as cnp

BACKEND = "native"


def conv2d_forward(cnp.ndarray x, cnp.ndarray k, int padding):
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cdef double[:, :, :, ::1] xv = np.ascontiguousarray(x)
    cdef double[:, :, :, ::1] kv = np.ascontiguousarray(k)
    cdef Py_ssize_t B = xv.shape[0], Ci = xv.shape[1], Hp = xv.shape[2], Wp = xv.shape[3]
    cdef Py_ssize_t Co = kv.shape[0], kh = kv.shape[2], kw = kv.shape[3]
    cdef Py_ssize_t Ho = Hp - kh + 1, Wo = Wp - kw + 1
    out = np.zeros((B, Co, Ho, Wo))
    cdef double[:, :, :, ::1] yv = out
    cdef Py_ssize_t b, co, ci, u, v, oh, ow
    cdef double kval
    # kernel-stationary: both the x reads and the y accumulation stream
    # contiguous rows
    for b in range(B):
        for co in range(Co):
            for ci in range(Ci):
                for u in range(kh):
                    for v in range(kw):
                        kval = kv[co, ci, u, v]
                        for oh in range(Ho):
                            for ow in range(Wo):
                                yv[b, co, oh, ow] += kval * xv[b, ci, oh + u, ow + v]
    return out


def conv2d_backward(cnp.ndarray x, cnp.ndarray k, cnp.ndarray gy, int padding):
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    cdef double[:, :, :, ::1] xv = np.ascontiguousarray(x)
    cdef double[:, :, :, ::1] kv = np.ascontiguousarray(k)
    cdef double[:, :, :, ::1] gv = np.ascontiguousarray(gy)
    cdef Py_ssize_t B = xv.shape[0], Ci = xv.shape[1], Hp = xv.shape[2], Wp = xv.shape[3]
    cdef Py_ssize_t Co = kv.shape[0], kh = kv.shape[2], kw = kv.shape[3]
    cdef Py_ssize_t Ho = Hp - kh + 1, Wo = Wp - kw + 1
    gk = np.zeros((Co, Ci, kh, kw))
    gxp = np.zeros((B, Ci, Hp, Wp))
    cdef double[:, :, :, ::1] gkv = gk
    cdef double[:, :, :, ::1] gxv = gxp
    cdef Py_ssize_t b, co, ci, u, v, oh, ow
    cdef double kval, acc
    for b in range(B):
        for co in range(Co):
            for ci in range(Ci):
                for u in range(kh):
                    for v in range(kw):
                        kval = kv[co, ci, u, v]
                        acc = 0.0
                        for oh in range(Ho):
                            for ow in range(Wo):
                                acc += xv[b, ci, oh + u, ow + v] * gv[b, co, oh, ow]
                                gxv[b, ci, oh + u, ow + v] += kval * gv[b, co, oh, ow]
                        gkv[co, ci, u, v] += acc
    if padding:
        gx = gxp[:, :, padding:Hp - padding, padding:Wp - padding]
        return np.ascontiguousarray(gx), gk
    return gxp, gk


def scan_forward(cnp.ndarray x, cnp.ndarray alpha):
    cdef double[:, :, :, ::1] xv = np.ascontiguousarray(x)
    cdef double[:, ::1] av = np.ascontiguousarray(alpha)
    cdef Py_ssize_t B = xv.shape[0], C = xv.shape[1], H = xv.shape[2], W = xv.shape[3]
    out = np.empty((B, C, H, W))
    cdef double[:, :, :, ::1] hv = out
    cdef Py_ssize_t b, i, j, c, d
    cdef double acc
    for b in range(B):
        for i in range(H):
            for c in range(C):
                acc = xv[b, c, i, 0]
                hv[b, c, i, 0] = acc if acc > 0.0 else 0.0
            for j in range(1, W):
                for c in range(C):
                    acc = xv[b, c, i, j]
                    for d in range(C):
                        acc += av[c, d] * hv[b, d, i, j - 1]
                    hv[b, c, i, j] = acc if acc > 0.0 else 0.0
    return out


def scan_backward(cnp.ndarray x, cnp.ndarray hout, cnp.ndarray alpha, cnp.ndarray gh):
    cdef double[:, :, :, ::1] hv = np.ascontiguousarray(hout)
    cdef double[:, ::1] av = np.ascontiguousarray(alpha)
    cdef double[:, :, :, ::1] gv = np.ascontiguousarray(gh)
    cdef Py_ssize_t B = hv.shape[0], C = hv.shape[1], H = hv.shape[2], W = hv.shape[3]
    gx = np.empty((B, C, H, W))
    galpha = np.zeros((C, C))
    carry_arr = np.zeros(C)
    gz_arr = np.zeros(C)
    cdef double[:, :, :, ::1] gxv = gx
    cdef double[:, ::1] gav = galpha
    cdef double[::1] carry = carry_arr
    cdef double[::1] gz = gz_arr
    cdef Py_ssize_t b, i, j, c, d
    cdef double acc
    for b in range(B):
        for i in range(H):
            for c in range(C):
                carry[c] = 0.0
            for j in range(W - 1, -1, -1):
                for c in range(C):
                    if hv[b, c, i, j] > 0.0:
                        gz[c] = gv[b, c, i, j] + carry[c]
                    else:
                        gz[c] = 0.0
                    gxv[b, c, i, j] = gz[c]
                if j > 0:
                    for c in range(C):
                        for d in range(C):
                            gav[c, d] += gz[c] * hv[b, d, i, j - 1]
                for d in range(C):
                    acc = 0.0
                    for c in range(C):
                        acc += gz[c] * av[c, d]
                    carry[d] = acc
    return gx, galpha
