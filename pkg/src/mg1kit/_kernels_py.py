"""Pure-Python/numpy versions of the hot kernels.

Every function here has the same signature and semantics as its compiled
counterpart in ``_kernels.pyx``; the simulation consumes uniforms in the same
order so both backends produce identical sample paths for a given bit
generator state.
"""
import math

import numpy as np


def gth(P):
    """Stationary vector of an irreducible row-stochastic matrix by GTH.

    Returns ``(x, bad)`` where ``bad`` is the index of the first zero pivot
    (``-1`` on success).  ``P`` is not modified.
    """
    a = np.array(P, dtype=float, copy=True)
    n = a.shape[0]
    for k in range(n - 1, 0, -1):
        s = a[k, :k].sum()
        if s <= 0.0:
            return np.zeros(n), k
        a[:k, k] /= s
        a[:k, :k] += np.outer(a[:k, k], a[k, :k])
    x = np.zeros(n)
    x[0] = 1.0
    for k in range(1, n):
        x[k] = x[:k] @ a[:k, k]
    return x / x.sum(), -1


def horner_right(coeffs, X):
    """Evaluate sum_j coeffs[j] @ X**j by right-Horner."""
    coeffs = np.asarray(coeffs, dtype=float)
    acc = coeffs[-1].copy()
    for j in range(coeffs.shape[0] - 2, -1, -1):
        acc = acc @ X + coeffs[j]
    return acc


def ramaswami(c, R):
    """Ramaswami convolution.

    ``c[k]`` (k = 1..K, row 0 ignored) holds pi(0) R0(k); ``R[d]`` (d = 1..D,
    row 0 ignored) holds R(d).  Returns ``pi`` with ``pi[k] = c[k] +
    sum_{l=max(1,k-D)}^{k-1} pi[l] R[k-l]`` and ``pi[0] = 0``.
    """
    c = np.asarray(c, dtype=float)
    R = np.asarray(R, dtype=float)
    K = c.shape[0] - 1
    D = R.shape[0] - 1
    pi = np.zeros_like(c)
    for k in range(1, K + 1):
        lo = max(1, k - D)
        acc = c[k].copy()
        if lo < k:
            # pi[l] @ R[k-l] for l = lo..k-1
            acc += np.einsum("li,lij->j", pi[lo:k], R[k - lo:0:-1])
        pi[k] = acc
    return pi


class _Uniforms:
    """Buffered draws of next_double from a numpy bit generator."""

    def __init__(self, bitgen, chunk=1 << 16):
        self._gen = np.random.Generator(bitgen)
        self._chunk = chunk
        self._buf = self._gen.random(chunk)
        self._pos = 0

    def next(self):
        if self._pos == self._chunk:
            self._buf = self._gen.random(self._chunk)
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return float(u)


def _sample_service(kind, params, ph_cum, ph_rates, U):
    if kind == 0:
        return -math.log1p(-U.next()) / params[0]
    if kind == 1:
        return params[0]
    if kind == 2:
        shape, scale = params[0], params[1]
        return scale * ((1.0 - U.next()) ** (-1.0 / shape) - 1.0)
    # phase-type: ph_cum[0] is the initial distribution, rows 1.. are the
    # cumulative jump tables over (phases..., absorb)
    m = ph_rates.shape[0]
    u = U.next()
    i = 0
    while i < m - 1 and u >= ph_cum[0, i]:
        i += 1
    total = 0.0
    while True:
        total += -math.log1p(-U.next()) / ph_rates[i]
        u = U.next()
        j = 0
        while j < m and u >= ph_cum[i + 1, j]:
            j += 1
        if j == m:
            return total
        i = j


def simulate_queue(bitgen, map_cum, map_rates, map_arrival, phase0, capacity,
                   n_arrivals, n_batches, kind, params, ph_cum, ph_rates):
    """Simulate a MAP/G/1/capacity FCFS queue from empty.

    ``map_cum[i]`` is the cumulative distribution of the 2m possible
    transitions out of phase i (first m: hidden moves, last m: arrivals);
    ``map_arrival`` flags which of the 2m slots carry an arrival.
    Returns per-batch (arrival count, loss count) arrays.
    """
    U = _Uniforms(bitgen)
    m2 = map_cum.shape[1]
    m = m2 // 2
    deps = np.zeros(capacity)
    head = 0
    count = 0
    last_dep = 0.0
    t = 0.0
    phase = phase0
    batch_size = n_arrivals // n_batches
    arrivals = np.zeros(n_batches, dtype=np.int64)
    losses = np.zeros(n_batches, dtype=np.int64)
    seen = 0
    while seen < n_arrivals:
        t += -math.log1p(-U.next()) / map_rates[phase]
        u = U.next()
        row = map_cum[phase]
        j = 0
        while j < m2 - 1 and u >= row[j]:
            j += 1
        if map_arrival[j]:
            while count > 0 and deps[head] <= t:
                head = (head + 1) % capacity
                count -= 1
            b = min(seen // batch_size, n_batches - 1)
            arrivals[b] += 1
            if count == capacity:
                losses[b] += 1
            else:
                s = _sample_service(kind, params, ph_cum, ph_rates, U)
                start = t if t > last_dep else last_dep
                last_dep = start + s
                deps[(head + count) % capacity] = last_dep
                count += 1
            seen += 1
        phase = j % m
    return arrivals, losses
