# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled BPR SGD epoch. Mirrors ``_bpr_fallback.sgd_epoch`` operation for operation."""
cimport numpy as cnp
from libc.math cimport exp, log1p

cnp.import_array()


def sgd_epoch(double[:, ::1] U, double[:, ::1] V, double[::1] b,
              const cnp.int64_t[::1] users, const cnp.int64_t[::1] pos,
              const cnp.int64_t[::1] neg, double lr, double reg):
    cdef Py_ssize_t n = users.shape[0]
    cdef Py_ssize_t d = U.shape[1]
    cdef Py_ssize_t s, f, u, i, j
    cdef double x, e, g, uf, vif, vjf
    cdef double loss = 0.0
    with nogil:
        for s in range(n):
            u = users[s]
            i = pos[s]
            j = neg[s]
            x = 0.0
            for f in range(d):
                x = x + U[u, f] * (V[i, f] - V[j, f])
            x = x + (b[i] - b[j])
            # -log(sigmoid(x)) and sigmoid(-x), both overflow-safe
            if x >= 0:
                e = exp(-x)
                loss += log1p(e)
                g = e / (1.0 + e)
            else:
                e = exp(x)
                loss += log1p(e) - x
                g = 1.0 / (1.0 + e)
            for f in range(d):
                uf = U[u, f]
                vif = V[i, f]
                vjf = V[j, f]
                U[u, f] = uf + lr * (g * (vif - vjf) - reg * uf)
                V[i, f] = vif + lr * (g * uf - reg * vif)
                V[j, f] = vjf + lr * (-g * uf - reg * vjf)
            b[i] = b[i] + lr * (g - reg * b[i])
            b[j] = b[j] + lr * (-g - reg * b[j])
    return loss
