"""Cython implementations of the hot numeric kernels.

Same contract as iava._kernels_py; that module is the reference the
parity tests compare against.
"""

import numpy as np

from libc.math cimport exp, log, sqrt

BACKEND = "c"


def stats(double[::1] att1):
    """Mean and population standard deviation (divisor = length)."""
    cdef Py_ssize_t n = att1.shape[0]
    cdef Py_ssize_t k
    cdef double total = 0.0
    for k in range(n):
        total += att1[k]
    cdef double mu = total / n
    cdef double acc = 0.0
    cdef double dev
    for k in range(n):
        dev = att1[k] - mu
        acc += dev * dev
    return mu, sqrt(acc / n)


def delta(double[::1] att1, double[::1] att2):
    cdef Py_ssize_t n = att1.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    cdef Py_ssize_t k
    for k in range(n):
        ov[k] = att2[k] - att1[k]
    return out


def select(double[::1] att1, double[::1] att2, Py_ssize_t i, double lam):
    """Indices passing the three-condition irrelevance rule, ascending."""
    cdef Py_ssize_t n = att1.shape[0]
    d = np.empty(n, dtype=np.float64)
    cdef double[::1] dv = d
    cdef Py_ssize_t k
    for k in range(n):
        dv[k] = att2[k] - att1[k]
    cdef double threshold = np.sort(d, kind="stable")[i]
    cdef double mu, sigma
    mu, sigma = stats(att1)
    cdef double bound = mu + lam * sigma
    picked = np.empty(n, dtype=np.int64)
    cdef long long[::1] pv = picked
    cdef Py_ssize_t m = 0
    for k in range(n):
        if dv[k] < 0.0 and dv[k] < threshold and att1[k] > bound:
            pv[m] = k
            m += 1
    return picked[:m].copy()


def log_softmax(double[::1] logits):
    cdef Py_ssize_t n = logits.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    cdef double peak = logits[0]
    cdef Py_ssize_t k
    for k in range(1, n):
        if logits[k] > peak:
            peak = logits[k]
    cdef double total = 0.0
    for k in range(n):
        total += exp(logits[k] - peak)
    cdef double norm = log(total)
    for k in range(n):
        ov[k] = logits[k] - peak - norm
    return out


def contrastive(double[::1] base, double[::1] negative, double alpha):
    """softmax((1 + alpha) * log_softmax(base) - alpha * log_softmax(negative))."""
    cdef Py_ssize_t n = base.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] ov = out
    cdef Py_ssize_t k
    cdef double peak_b = base[0]
    cdef double peak_n = negative[0]
    for k in range(1, n):
        if base[k] > peak_b:
            peak_b = base[k]
        if negative[k] > peak_n:
            peak_n = negative[k]
    cdef double sum_b = 0.0
    cdef double sum_n = 0.0
    for k in range(n):
        sum_b += exp(base[k] - peak_b)
        sum_n += exp(negative[k] - peak_n)
    cdef double norm_b = log(sum_b)
    cdef double norm_n = log(sum_n)
    for k in range(n):
        ov[k] = (1.0 + alpha) * (base[k] - peak_b - norm_b) \
            - alpha * (negative[k] - peak_n - norm_n)
    cdef double peak_c = ov[0]
    for k in range(1, n):
        if ov[k] > peak_c:
            peak_c = ov[k]
    cdef double total = 0.0
    for k in range(n):
        ov[k] = exp(ov[k] - peak_c)
        total += ov[k]
    for k in range(n):
        ov[k] /= total
    return out
