# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_kernels_py``."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline double _clip(double x, double lo, double hi) nogil:
    return lo if x < lo else (hi if x > hi else x)


cdef void _probs_row(const double[:] base, const long[:] cat, const double[:] price,
                     const long[:] order, double gamma, double beta, double alpha,
                     double lo, double hi, double[:] out) nogil:
    cdef Py_ssize_t k = order.shape[0]
    cdef Py_ssize_t t, s
    cdef double decay = 1.0, fat, drop, prob
    cdef long ct
    for t in range(k):
        ct = cat[order[t]]
        fat = 0.0
        for s in range(t):
            if cat[order[s]] == ct:
                fat += 1.0
        if t > 0:
            fat /= t
            drop = price[order[t - 1]] - price[order[t]]
            if drop < 0.0:
                drop = 0.0
        else:
            drop = 0.0
        prob = base[order[t]] * decay * (1.0 - beta * fat) * (1.0 + alpha * drop)
        out[t] = _clip(prob, lo, hi)
        decay *= gamma


def list_probs(base, category, price, orders, double gamma, double beta, double alpha,
               double lo, double hi):
    cdef const double[:, :] b = np.ascontiguousarray(base, dtype=np.float64)
    cdef const long[:, :] c = np.ascontiguousarray(category, dtype=np.int64)
    cdef const double[:, :] p = np.ascontiguousarray(price, dtype=np.float64)
    cdef const long[:, :] o = np.ascontiguousarray(orders, dtype=np.int64)
    out_arr = np.empty((o.shape[0], o.shape[1]), dtype=np.float64)
    cdef double[:, :] out = out_arr
    cdef Py_ssize_t r
    with nogil:
        for r in range(o.shape[0]):
            _probs_row(b[r], c[r], p[r], o[r], gamma, beta, alpha, lo, hi, out[r])
    return out_arr


def perm_values(base, category, price, perms, double gamma, double beta, double alpha,
                double lo, double hi):
    cdef const double[:] b = np.ascontiguousarray(base, dtype=np.float64)
    cdef const long[:] c = np.ascontiguousarray(category, dtype=np.int64)
    cdef const double[:] p = np.ascontiguousarray(price, dtype=np.float64)
    cdef const long[:, :] o = np.ascontiguousarray(perms, dtype=np.int64)
    cdef Py_ssize_t P = o.shape[0], k = o.shape[1], i, t
    out_arr = np.empty(P, dtype=np.float64)
    cdef double[:] out = out_arr
    cdef double[:] buf = np.empty(max(k, 1), dtype=np.float64)
    cdef double total
    with nogil:
        for i in range(P):
            _probs_row(b, c, p, o[i], gamma, beta, alpha, lo, hi, buf)
            total = 0.0
            for t in range(k):
                total += buf[t]
            out[i] = total
    return out_arr


def auc(scores, labels):
    cdef const double[:] s_all = np.ascontiguousarray(scores, dtype=np.float64)
    cdef const long[:] y = np.ascontiguousarray(labels, dtype=np.int64)
    cdef const long[:] order = np.argsort(scores, kind="mergesort").astype(np.int64)
    cdef Py_ssize_t n = s_all.shape[0], i = 0, j
    cdef double neg_below = 0.0, pos_total = 0.0, neg_total = 0.0, acc = 0.0
    cdef double grp_pos, grp_neg
    with nogil:
        while i < n:
            j = i
            grp_pos = 0.0
            grp_neg = 0.0
            while j < n and s_all[order[j]] == s_all[order[i]]:
                if y[order[j]] == 1:
                    grp_pos += 1.0
                else:
                    grp_neg += 1.0
                j += 1
            acc += grp_pos * (neg_below + 0.5 * grp_neg)
            neg_below += grp_neg
            pos_total += grp_pos
            i = j
        neg_total = neg_below
    return acc / (pos_total * neg_total)
