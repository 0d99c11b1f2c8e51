# cython: language_level=3
"""Compiled hot loops: reverse GAE sweep, single-vector MLP forward, diagonal Gaussian log-density."""

import numpy as np

from libc.math cimport tanh, exp, log, M_PI

cdef double LOG_2PI = log(2.0 * M_PI)


def gae(rewards, values, dones, double bootstrap_value, double gamma, double lam):
    cdef double[::1] r = np.ascontiguousarray(rewards, dtype=np.float64)
    cdef double[::1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef double[::1] d = np.ascontiguousarray(dones, dtype=np.float64)
    cdef Py_ssize_t n = r.shape[0]
    adv_arr = np.empty(n, dtype=np.float64)
    ret_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] adv = adv_arr
    cdef double[::1] ret = ret_arr
    cdef double last = 0.0
    cdef double next_value = bootstrap_value
    cdef double nonterminal, delta
    cdef Py_ssize_t t
    for t in range(n - 1, -1, -1):
        nonterminal = 1.0 - d[t]
        delta = r[t] + gamma * next_value * nonterminal - v[t]
        last = delta + gamma * lam * nonterminal * last
        adv[t] = last
        ret[t] = last + v[t]
        next_value = v[t]
    return adv_arr, ret_arr


cdef _affine(double[:, ::1] w, double[::1] b, double[::1] x, double[::1] out, bint squash):
    cdef Py_ssize_t i, j
    cdef Py_ssize_t rows = w.shape[0]
    cdef Py_ssize_t cols = w.shape[1]
    cdef double acc
    for i in range(rows):
        acc = 0.0
        for j in range(cols):
            acc += w[i, j] * x[j]
        acc += b[i]
        out[i] = tanh(acc) if squash else acc


def mlp_forward_vec(weights, biases, x):
    cdef Py_ssize_t n_layers = len(weights)
    cdef Py_ssize_t k
    h = np.ascontiguousarray(x, dtype=np.float64)
    for k in range(n_layers):
        w = weights[k]
        out = np.empty(w.shape[0], dtype=np.float64)
        _affine(w, biases[k], h, out, k < n_layers - 1)
        h = out
    return h


def gaussian_log_prob(x, mean, log_std):
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[::1] mv = np.ascontiguousarray(mean, dtype=np.float64)
    cdef double[::1] lv = np.ascontiguousarray(log_std, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0]
    cdef Py_ssize_t i
    cdef double z, total = 0.0
    for i in range(n):
        z = (xv[i] - mv[i]) * exp(-lv[i])
        total += -0.5 * z * z - lv[i]
    return total - 0.5 * LOG_2PI * n
