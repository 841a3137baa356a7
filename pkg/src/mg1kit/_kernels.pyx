# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels (GTH, matrix Horner, Ramaswami convolution, queue
simulation).  Semantics match ``_kernels_py`` exactly."""
import numpy as np
cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from libc.math cimport log1p, pow
from numpy.random cimport bitgen_t

cnp.import_array()


def gth(P):
    cdef double[:, ::1] a = np.array(P, dtype=np.float64, order="C", copy=True)
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t i, j, k
    cdef double s, t
    x_arr = np.zeros(n)
    cdef double[::1] x = x_arr
    with nogil:
        for k in range(n - 1, 0, -1):
            s = 0.0
            for j in range(k):
                s += a[k, j]
            if s <= 0.0:
                with gil:
                    return np.zeros(n), k
            for i in range(k):
                a[i, k] /= s
            for i in range(k):
                t = a[i, k]
                if t != 0.0:
                    for j in range(k):
                        a[i, j] += t * a[k, j]
        x[0] = 1.0
        for k in range(1, n):
            s = 0.0
            for i in range(k):
                s += x[i] * a[i, k]
            x[k] = s
        s = 0.0
        for k in range(n):
            s += x[k]
        for k in range(n):
            x[k] /= s
    return x_arr, -1


def horner_right(coeffs, X):
    cdef double[:, :, ::1] c = np.ascontiguousarray(coeffs, dtype=np.float64)
    cdef double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t K = c.shape[0], m = c.shape[1]
    cdef Py_ssize_t i, j, l, p
    acc_arr = np.array(c[K - 1], copy=True)
    tmp_arr = np.empty((m, m))
    cdef double[:, ::1] acc = acc_arr
    cdef double[:, ::1] tmp = tmp_arr
    cdef double s
    with nogil:
        for p in range(K - 2, -1, -1):
            for i in range(m):
                for j in range(m):
                    s = c[p, i, j]
                    for l in range(m):
                        s += acc[i, l] * x[l, j]
                    tmp[i, j] = s
            acc[:, :] = tmp
    return acc_arr


def ramaswami(c, R):
    cdef double[:, ::1] cc = np.ascontiguousarray(c, dtype=np.float64)
    cdef double[:, :, ::1] r = np.ascontiguousarray(R, dtype=np.float64)
    cdef Py_ssize_t K = cc.shape[0] - 1, m = cc.shape[1], D = r.shape[0] - 1
    cdef Py_ssize_t k, l, i, j, lo
    pi_arr = np.zeros((K + 1, m))
    cdef double[:, ::1] pi = pi_arr
    cdef double v
    with nogil:
        for k in range(1, K + 1):
            for j in range(m):
                pi[k, j] = cc[k, j]
            lo = k - D
            if lo < 1:
                lo = 1
            for l in range(lo, k):
                for i in range(m):
                    v = pi[l, i]
                    if v != 0.0:
                        for j in range(m):
                            pi[k, j] += v * r[k - l, i, j]
    return pi_arr


cdef inline double _exp_draw(bitgen_t *rng, double rate) noexcept nogil:
    return -log1p(-rng.next_double(rng.state)) / rate


cdef double _service(bitgen_t *rng, int kind, double[::1] params,
                     double[:, ::1] ph_cum, double[::1] ph_rates) noexcept nogil:
    cdef Py_ssize_t m, i, j
    cdef double u, total
    if kind == 0:
        return _exp_draw(rng, params[0])
    if kind == 1:
        return params[0]
    if kind == 2:
        u = rng.next_double(rng.state)
        return params[1] * (pow(1.0 - u, -1.0 / params[0]) - 1.0)
    m = ph_rates.shape[0]
    u = rng.next_double(rng.state)
    i = 0
    while i < m - 1 and u >= ph_cum[0, i]:
        i += 1
    total = 0.0
    while True:
        total += _exp_draw(rng, ph_rates[i])
        u = rng.next_double(rng.state)
        j = 0
        while j < m and u >= ph_cum[i + 1, j]:
            j += 1
        if j == m:
            return total
        i = j


def simulate_queue(bitgen, map_cum, map_rates, map_arrival, Py_ssize_t phase0,
                   Py_ssize_t capacity, long long n_arrivals, Py_ssize_t n_batches,
                   int kind, params, ph_cum, ph_rates):
    cdef const char *name = "BitGenerator"
    capsule = bitgen.capsule
    if not PyCapsule_IsValid(capsule, name):
        raise ValueError("invalid bit generator")
    cdef bitgen_t *rng = <bitgen_t *> PyCapsule_GetPointer(capsule, name)
    cdef double[:, ::1] mc = np.ascontiguousarray(map_cum, dtype=np.float64)
    cdef double[::1] mr = np.ascontiguousarray(map_rates, dtype=np.float64)
    cdef cnp.uint8_t[::1] marr = np.ascontiguousarray(map_arrival, dtype=np.uint8)
    cdef double[::1] prm = np.ascontiguousarray(params, dtype=np.float64)
    cdef double[:, ::1] phc = np.ascontiguousarray(ph_cum, dtype=np.float64)
    cdef double[::1] phr = np.ascontiguousarray(ph_rates, dtype=np.float64)
    arr_a = np.zeros(n_batches, dtype=np.int64)
    arr_l = np.zeros(n_batches, dtype=np.int64)
    cdef cnp.int64_t[::1] arrivals = arr_a
    cdef cnp.int64_t[::1] losses = arr_l
    deps_arr = np.zeros(capacity)
    cdef double[::1] deps = deps_arr
    cdef Py_ssize_t m2 = mc.shape[1], m = m2 // 2
    cdef Py_ssize_t head = 0, count = 0, phase = phase0, j, b
    cdef long long seen = 0, batch_size = n_arrivals // n_batches
    cdef double t = 0.0, last_dep = 0.0, u, s, start
    with bitgen.lock, nogil:
        while seen < n_arrivals:
            t += _exp_draw(rng, mr[phase])
            u = rng.next_double(rng.state)
            j = 0
            while j < m2 - 1 and u >= mc[phase, j]:
                j += 1
            if marr[j]:
                while count > 0 and deps[head] <= t:
                    head = (head + 1) % capacity
                    count -= 1
                b = seen // batch_size
                if b > n_batches - 1:
                    b = n_batches - 1
                arrivals[b] += 1
                if count == capacity:
                    losses[b] += 1
                else:
                    s = _service(rng, kind, prm, phc, phr)
                    start = t if t > last_dep else last_dep
                    last_dep = start + s
                    deps[(head + count) % capacity] = last_dep
                    count += 1
                seen += 1
            phase = j % m
    return arr_a, arr_l
