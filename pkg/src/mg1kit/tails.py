"""Scalar weight families with exact tail and partial-moment sums.

A weight family ``w(k)`` describes the matrix blocks of an analytic tail,
``A(k) = w(k) C`` beyond a finite head.  Every family exposes

* ``w(k)``                the weight itself,
* ``moment_sf(k, p)``     ``sum_{j > k} j**p w(j)`` for ``p`` in {0, 1, 2},

from which tails, double tails and moment sums of the blocks follow.  The
sums are evaluated in closed form (Hurwitz zeta, geometric series,
incomplete gamma) or by a single Gauss-Kronrod quadrature per index, never by
long partial summation.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy import integrate, special, stats

from .errors import DivergenceError


def _as_int_array(k):
    return np.asarray(k, dtype=np.int64)


class TailWeights:
    """Base class for weight families."""

    kind = "abstract"

    def w(self, k):
        raise NotImplementedError

    def moment_sf(self, k, p=0):
        raise NotImplementedError

    def moment_finite(self, p):
        """Whether ``sum_j j**p w(j)`` converges."""
        return True

    def sf(self, k):
        return self.moment_sf(k, 0)

    def double_sf(self, n):
        """``sum_{j > n+1} (j - n - 1) w(j)``, the sum of ``sf(m)`` over ``m > n``."""
        if not self.moment_finite(1):
            raise DivergenceError(f"{self.kind} weights have an infinite mean")
        n1 = np.asarray(n) + 1
        return self.moment_sf(n1, 1) - n1 * self.moment_sf(n1, 0)

    def to_dict(self) -> dict:
        raise NotImplementedError

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.to_dict().items() if k != "kind")
        return f"{type(self).__name__}({args})"


class PowerLawWeights(TailWeights):
    """``w(k) = k**(-beta)`` for ``k >= start`` (``start >= 1``), zero below."""

    kind = "power"

    def __init__(self, beta: float, start: int = 1):
        if beta <= 1.0:
            raise ValueError("power-law weights need beta > 1 to be summable")
        if start < 1:
            raise ValueError("power-law weights start at k >= 1")
        self.beta = float(beta)
        self.start = int(start)

    def w(self, k):
        k = _as_int_array(k)
        kf = np.maximum(k, 1).astype(float)
        return np.where(k >= self.start, kf ** (-self.beta), 0.0)

    def moment_finite(self, p):
        return self.beta - p > 1.0

    def moment_sf(self, k, p=0):
        if not self.moment_finite(p):
            raise DivergenceError(
                f"sum of j^{p} j^-{self.beta} diverges (needs beta > {p + 1})")
        a = np.maximum(_as_int_array(k) + 1, self.start).astype(float)
        return special.zeta(self.beta - p, a)

    def to_dict(self):
        return {"kind": self.kind, "beta": self.beta, "start": self.start}


class GeometricWeights(TailWeights):
    """``w(k) = r**k`` for ``k >= start``, zero below."""

    kind = "geometric"

    def __init__(self, r: float, start: int = 0):
        if not 0.0 < r < 1.0:
            raise ValueError("geometric ratio must lie in (0, 1)")
        self.r = float(r)
        self.start = int(start)

    def w(self, k):
        k = _as_int_array(k)
        return np.where(k >= self.start, self.r ** k.astype(float), 0.0)

    def moment_sf(self, k, p=0):
        r = self.r
        a = np.maximum(_as_int_array(k) + 1, self.start).astype(float)
        ra = r ** a
        q = 1.0 - r
        if p == 0:
            return ra / q
        if p == 1:
            return ra * (a / q + r / q**2)
        if p == 2:
            return ra * (a * a / q + 2.0 * a * r / q**2 + r * (1.0 + r) / q**3)
        raise ValueError("p must be 0, 1 or 2")

    def to_dict(self):
        return {"kind": self.kind, "r": self.r, "start": self.start}


class ShiftedWeights(TailWeights):
    """``w(k) = base.w(k + shift)``."""

    kind = "shifted"

    def __init__(self, base: TailWeights, shift: int):
        self.base = base
        self.shift = int(shift)

    def w(self, k):
        return self.base.w(_as_int_array(k) + self.shift)

    def moment_finite(self, p):
        return self.base.moment_finite(p)

    def moment_sf(self, k, p=0):
        s = self.shift
        i = _as_int_array(k) + s
        m0 = self.base.moment_sf(i, 0)
        if p == 0:
            return m0
        m1 = self.base.moment_sf(i, 1)
        if p == 1:
            return m1 - s * m0
        if p == 2:
            return self.base.moment_sf(i, 2) - 2 * s * m1 + s * s * m0
        raise ValueError("p must be 0, 1 or 2")

    def to_dict(self):
        return {"kind": self.kind, "shift": self.shift, "base": self.base.to_dict()}


class PoissonWeights(TailWeights):
    """Poisson probabilities ``exp(-mu) mu**k / k!``."""

    kind = "poisson"

    def __init__(self, mu: float):
        if mu <= 0:
            raise ValueError("mu must be positive")
        self.mu = float(mu)

    def w(self, k):
        return stats.poisson.pmf(_as_int_array(k), self.mu)

    def _ge(self, a):
        # P(N >= a)
        a = _as_int_array(a)
        return np.where(a <= 0, 1.0, special.gammainc(np.maximum(a, 1), self.mu))

    def moment_sf(self, k, p=0):
        k = _as_int_array(k)
        mu = self.mu
        if p == 0:
            return self._ge(k + 1)
        if p == 1:
            return mu * self._ge(k)
        if p == 2:
            return mu * mu * self._ge(k - 1) + mu * self._ge(k)
        raise ValueError("p must be 0, 1 or 2")

    def to_dict(self):
        return {"kind": self.kind, "mu": self.mu}


def gamma_expectation(h, a: int, rel: float = 1e-13) -> float:
    """``E[h(Y)]`` for ``Y ~ Gamma(a, 1)`` with integer ``a >= 1``.

    The integration range covers the mode plus at least 20 standard
    deviations on either side; the excluded gamma mass is below 1e-17.
    """
    sd = math.sqrt(a)
    lo = max(0.0, a - 1 - 20.0 * sd - 20.0)
    hi = a + 20.0 * sd + 45.0
    mode = max(a - 1.0, 0.0)
    logc = -special.gammaln(a)

    def integrand(y):
        if y <= 0.0:
            return h(0.0) if a == 1 else 0.0
        return h(y) * math.exp((a - 1) * math.log(y) - y + logc)

    pts = sorted({p for p in (mode - 3 * sd, mode, mode + 3 * sd) if lo < p < hi})
    val, _ = integrate.quad(integrand, lo, hi, points=pts or None, limit=500,
                            epsabs=0.0, epsrel=rel)
    return val


class MixedPoissonWeights(TailWeights):
    """Number of Poisson(rate) events during a random service time ``S``.

    ``service`` must provide ``pdf(x)``, ``sf(x)``, ``partial_moment(x, p)``
    (``E[S**p; S > x]``) and ``moment_finite(p)``.  Values are cached per
    index since each costs one quadrature.
    """

    kind = "mixed_poisson"

    def __init__(self, rate: float, service):
        self.rate = float(rate)
        self.service = service
        self._w = lru_cache(maxsize=None)(self._w_scalar)
        self._ge = lru_cache(maxsize=None)(self._ge_scalar)
        self._pm = lru_cache(maxsize=None)(self._pm_scalar)

    def moment_finite(self, p):
        return self.service.moment_finite(p)

    def _w_scalar(self, n: int) -> float:
        if n < 0:
            return 0.0
        lam, svc = self.rate, self.service
        return gamma_expectation(lambda y: float(svc.pdf(y / lam)), n + 1) / lam

    def _ge_scalar(self, a: int) -> float:
        # P(N >= a) = P(Gamma_a < rate * S)
        if a <= 0:
            return 1.0
        lam, svc = self.rate, self.service
        return gamma_expectation(lambda y: float(svc.sf(y / lam)), a)

    def _pm_scalar(self, a: int, p: int) -> float:
        # E[S**p; rate * S > Gamma_a]
        svc = self.service
        if a <= 0:
            return float(svc.partial_moment(0.0, p))
        lam = self.rate
        return gamma_expectation(lambda y: float(svc.partial_moment(y / lam, p)), a)

    def w(self, k):
        k = _as_int_array(k)
        return np.vectorize(lambda n: self._w(int(n)), otypes=[float])(k)

    def moment_sf(self, k, p=0):
        if not self.moment_finite(p):
            raise DivergenceError(f"service moment of order {p} is infinite")
        k = _as_int_array(k)
        lam = self.rate

        def one(n):
            n = int(n)
            if p == 0:
                return self._ge(n + 1)
            if p == 1:
                return lam * self._pm(n, 1)
            if p == 2:
                return lam * lam * self._pm(n - 1, 2) + lam * self._pm(n, 1)
            raise ValueError("p must be 0, 1 or 2")

        return np.vectorize(one, otypes=[float])(k)

    def to_dict(self):
        return {"kind": self.kind, "rate": self.rate, "service": self.service.to_dict()}


def weights_from_dict(d: dict) -> TailWeights:
    kind = d["kind"]
    if kind == "power":
        return PowerLawWeights(d["beta"], d.get("start", 1))
    if kind == "geometric":
        return GeometricWeights(d["r"], d.get("start", 0))
    if kind == "shifted":
        return ShiftedWeights(weights_from_dict(d["base"]), d["shift"])
    if kind == "poisson":
        return PoissonWeights(d["mu"])
    if kind == "mixed_poisson":
        from .mapg1 import service_from_dict

        return MixedPoissonWeights(d["rate"], service_from_dict(d["service"]))
    raise ValueError(f"unknown weight family {kind!r}")
