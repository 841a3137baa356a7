"""Embedded M/G/1-type chains of MAP/G/1 queues and their loss probabilities."""
from __future__ import annotations

import math
import warnings

import numpy as np
from scipy import linalg

from . import kernels
from .chain import AnalyticTail, ChainSpec, build_finite, drift_parameters
from .errors import InapplicableError, ValidationError
from .tails import (GeometricWeights, MixedPoissonWeights, PoissonWeights, ShiftedWeights,
                    TailWeights)


# ---------------------------------------------------------------------- arrivals
class MapSpec:
    """Markovian arrival process with hidden-transition generator ``lambda0``
    and arrival-transition matrix ``lambda1``."""

    def __init__(self, lambda0, lambda1):
        L0 = np.array(lambda0, dtype=float)
        L1 = np.array(lambda1, dtype=float)
        if L0.ndim != 2 or L0.shape[0] != L0.shape[1] or L1.shape != L0.shape:
            raise ValidationError("lambda0 and lambda1 must be square matrices of equal size")
        m = L0.shape[0]
        off = L0 - np.diag(np.diag(L0))
        if (np.diag(L0) >= 0).any() or (off < 0).any() or (L1 < 0).any():
            raise ValidationError("lambda0 needs a negative diagonal and nonnegative "
                                  "off-diagonal, lambda1 must be nonnegative")
        r = float(np.abs((L0 + L1).sum(axis=1)).max())
        if r > 1e-12:
            raise ValidationError(f"generator rows of lambda0 + lambda1 sum to {r:.3g}, not 0",
                                  residual=r)
        gen = L0 + L1
        theta = float(np.max(-np.diag(gen))) if m > 1 else 1.0
        P = np.eye(m) + gen / max(theta, 1e-300)
        from .chain import is_irreducible

        if m > 1 and not is_irreducible(gen - np.diag(np.diag(gen))):
            raise ValidationError("lambda0 + lambda1 is reducible")
        varpi, _ = kernels.gth(P) if m > 1 else (np.ones(1), -1)
        lam = float(varpi @ L1 @ np.ones(m))
        if lam <= 0:
            raise ValidationError("mean arrival rate must be positive")
        for a in (L0, L1, varpi):
            a.setflags(write=False)
        self.lambda0, self.lambda1, self.m, self.varpi, self.lam = L0, L1, m, varpi, lam

    @classmethod
    def poisson(cls, lam: float) -> "MapSpec":
        return cls([[-lam]], [[lam]])

    @property
    def neg_inv_l0(self) -> np.ndarray:
        return np.linalg.inv(-self.lambda0)

    def to_dict(self):
        return {"lambda0": self.lambda0.tolist(), "lambda1": self.lambda1.tolist()}

    def __repr__(self):
        return f"MapSpec(m={self.m}, lam={self.lam:.6g})"


# ---------------------------------------------------------------------- services
class ServiceDist:
    kind = "abstract"
    subexponential_equilibrium = False
    sqrt_long_tailed = False

    @property
    def mean(self) -> float:
        raise NotImplementedError

    def sf(self, x):
        raise NotImplementedError

    def pdf(self, x):
        raise NotImplementedError

    def partial_moment(self, x, p):
        """``E[S**p; S > x]``."""
        raise NotImplementedError

    def moment_finite(self, p) -> bool:
        return True

    def equilibrium_tail(self, x):
        raise NotImplementedError

    def count_weights(self, rate: float):
        """``(weights, scale)`` with ``P(#Poisson(rate) events in S = n) = scale * w(n)``."""
        return MixedPoissonWeights(rate, self), 1.0

    def sampler(self):
        """``(kind code, params, ph_cum, ph_rates)`` for the simulation kernel."""
        raise NotImplementedError

    def to_dict(self):
        raise NotImplementedError


class Exponential(ServiceDist):
    kind = "exponential"

    def __init__(self, mu: float):
        if mu <= 0:
            raise ValidationError("exponential rate must be positive")
        self.mu = float(mu)

    @property
    def mean(self):
        return 1.0 / self.mu

    def sf(self, x):
        return np.exp(-self.mu * np.asarray(x, dtype=float))

    def pdf(self, x):
        return self.mu * self.sf(x)

    def partial_moment(self, x, p):
        x = np.asarray(x, dtype=float)
        mu = self.mu
        s = np.exp(-mu * x)
        if p == 0:
            return s
        if p == 1:
            return s * (x + 1 / mu)
        return s * (x * x + 2 * x / mu + 2 / mu**2)

    def equilibrium_tail(self, x):
        return self.sf(x)

    def count_weights(self, rate):
        r = rate / (rate + self.mu)
        return GeometricWeights(r), 1.0 - r

    def sampler(self):
        return 0, np.array([self.mu]), np.zeros((1, 1)), np.zeros(1)

    def to_dict(self):
        return {"kind": self.kind, "mu": self.mu}


class Deterministic(ServiceDist):
    kind = "deterministic"

    def __init__(self, b: float):
        if b <= 0:
            raise ValidationError("deterministic service time must be positive")
        self.b = float(b)

    @property
    def mean(self):
        return self.b

    def sf(self, x):
        return np.where(np.asarray(x) < self.b, 1.0, 0.0)

    def pdf(self, x):
        raise InapplicableError("deterministic service has no density")

    def partial_moment(self, x, p):
        return np.where(np.asarray(x) < self.b, self.b ** p, 0.0)

    def equilibrium_tail(self, x):
        return np.clip(1.0 - np.asarray(x, dtype=float) / self.b, 0.0, 1.0)

    def count_weights(self, rate):
        return PoissonWeights(rate * self.b), 1.0

    def sampler(self):
        return 1, np.array([self.b]), np.zeros((1, 1)), np.zeros(1)

    def to_dict(self):
        return {"kind": self.kind, "b": self.b}


class Pareto(ServiceDist):
    """Pareto (Lomax) service: ``P(S > x) = (1 + x/scale)**(-shape)``."""

    kind = "pareto"
    sqrt_long_tailed = True

    def __init__(self, shape: float, scale: float):
        if shape <= 1 or scale <= 0:
            raise ValidationError("Pareto service needs shape > 1 and scale > 0")
        self.shape = float(shape)
        self.scale = float(scale)

    @property
    def subexponential_equilibrium(self):
        return self.shape > 2

    @property
    def mean(self):
        return self.scale / (self.shape - 1)

    def moment_finite(self, p):
        return self.shape > p

    def _t(self, x):
        return 1.0 + np.asarray(x, dtype=float) / self.scale

    def sf(self, x):
        return self._t(x) ** (-self.shape)

    def pdf(self, x):
        return self.shape / self.scale * self._t(x) ** (-self.shape - 1)

    def partial_moment(self, x, p):
        a, s = self.shape, self.scale
        x = np.asarray(x, dtype=float)
        t = self._t(x)
        if p == 0:
            return t ** (-a)
        if p == 1:
            return x * t ** (-a) + s * t ** (1 - a) / (a - 1)
        if not self.moment_finite(2):
            return np.inf
        return x * x * t ** (-a) + 2 * s * s * (t ** (2 - a) / (a - 2) - t ** (1 - a) / (a - 1))

    def equilibrium_tail(self, x):
        return self._t(x) ** (1.0 - self.shape)

    def sampler(self):
        return 2, np.array([self.shape, self.scale]), np.zeros((1, 1)), np.zeros(1)

    def to_dict(self):
        return {"kind": self.kind, "shape": self.shape, "scale": self.scale}


class PhaseType(ServiceDist):
    """Phase-type service with initial vector ``alpha`` and subgenerator ``T``."""

    kind = "phase_type"

    def __init__(self, alpha, T):
        self.alpha = np.asarray(alpha, dtype=float)
        self.T = np.asarray(T, dtype=float)
        if abs(self.alpha.sum() - 1.0) > 1e-12 or (self.alpha < 0).any():
            raise ValidationError("phase-type initial vector must be a probability vector")
        self.t = -self.T.sum(axis=1)
        if (self.t < -1e-12).any():
            raise ValidationError("phase-type subgenerator rows must sum to <= 0")
        self._U = np.linalg.inv(-self.T)

    @property
    def mean(self):
        return float(self.alpha @ self._U @ np.ones(len(self.alpha)))

    def _vec(self, x):
        return self.alpha @ linalg.expm(self.T * float(x))

    def sf(self, x):
        return float(self._vec(x).sum())

    def pdf(self, x):
        return float(self._vec(x) @ self.t)

    def partial_moment(self, x, p):
        v = self._vec(x)
        e = np.ones(len(self.alpha))
        x = float(x)
        if p == 0:
            return float(v @ e)
        if p == 1:
            return float(x * (v @ e) + v @ self._U @ e)
        return float(x * x * (v @ e) + 2 * v @ (x * self._U + self._U @ self._U) @ e)

    def equilibrium_tail(self, x):
        return float(self._vec(x) @ self._U @ np.ones(len(self.alpha))) / self.mean

    def sampler(self):
        m = len(self.alpha)
        rates = -np.diag(self.T)
        cum = np.zeros((m + 1, m + 1))
        cum[0, :m] = np.cumsum(self.alpha)
        cum[0, m] = 1.0
        for i in range(m):
            row = np.append(self.T[i] / rates[i], self.t[i] / rates[i])
            row[i] = 0.0
            cum[i + 1] = np.cumsum(row)
            cum[i + 1, -1] = 1.0
        return 3, np.zeros(1), cum, rates

    def to_dict(self):
        return {"kind": self.kind, "alpha": self.alpha.tolist(), "T": self.T.tolist()}


def service_from_dict(d: dict) -> ServiceDist:
    kind = d["kind"].lower()
    if kind == "exponential":
        return Exponential(d["mu"])
    if kind == "deterministic":
        return Deterministic(d["b"])
    if kind == "pareto":
        if "scale" in d:
            return Pareto(d["shape"], d["scale"])
        return Pareto(d["shape"], d["mean"] * (d["shape"] - 1.0))
    if kind in ("phase_type", "phasetype", "ph"):
        return PhaseType(d["alpha"], d["T"])
    raise ValidationError(f"unknown service kind {kind!r}")


def equilibrium_tail(svc: ServiceDist, x) -> float:
    """``P(S_e > x)`` for the stationary-excess (integrated tail) law of ``S``."""
    if np.any(np.asarray(x) < 0):
        raise ValueError("x must be nonnegative")
    return svc.equilibrium_tail(x)


# ---------------------------------------------------------------------- embedding
def _uniformized_blocks(mp: MapSpec, svc: ServiceDist, tol: float, j_cap: int):
    """``A(k)``, ``k = -1 .. J-1``, by uniformization with rate ``theta``."""
    L0, L1 = mp.lambda0, mp.lambda1
    m = mp.m
    theta = float(np.max(-np.diag(L0)))
    K0 = np.eye(m) + L0 / theta
    K1 = L1 / theta
    wts, scale = svc.count_weights(theta)
    J = 1
    while J < j_cap and scale * float(wts.sf(J)) >= tol:
        J = min(2 * J, j_cap)
    lo, hi = J // 2, J
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if scale * float(wts.sf(mid)) >= tol:
            lo = mid
        else:
            hi = mid
    J = hi
    missed = scale * float(wts.sf(J))
    if missed >= tol:
        warnings.warn(f"uniformization truncated at {J} terms with mass {missed:.3g} "
                      "lumped into the last block", RuntimeWarning)
    a = scale * wts.w(np.arange(J + 1))
    V = np.zeros((J + 1, m, m))
    V[0] = np.eye(m)
    acc = np.zeros((J + 1, m, m))
    for j in range(J + 1):
        acc[: j + 1] += a[j] * V[: j + 1]
        if j == J:
            break
        new = np.zeros_like(V)
        new[: j + 2] = V[: j + 2] @ K0
        new[1: j + 2] += V[: j + 1] @ K1
        V = new
    # acc[n] = A(n - 1), n = 0..J
    blocks = acc
    missing = 1.0 - blocks.sum(axis=(0, 2))
    blocks[-1] += np.diag(np.clip(missing, 0.0, None))
    return blocks, theta, J


def embed_chain(mp: MapSpec, svc: ServiceDist, k_max: int | None = None,
                tol: float = 1e-14, j_cap: int = 4000) -> ChainSpec:
    """Embedded chain at departures of the MAP/G/1 queue.

    ``A(k)`` is the probability matrix of ``k + 1`` arrivals during a
    service; ``B(k) = (-lambda0)^-1 lambda1 A(k-1)`` for ``k >= 0`` and
    ``B(-1) = A(-1)``.  Single-phase (Poisson) arrivals give an analytic tail
    continuing the exact arrival-count law; multi-phase arrivals are built by
    uniformization and truncated where the Poisson mass beyond is below
    ``tol`` (the remainder is lumped into the last block).
    """
    rho = mp.lam * svc.mean
    if rho >= 1:
        raise ValidationError(f"traffic intensity rho = {rho:.6g} must be below 1")
    M = mp.neg_inv_l0 @ mp.lambda1
    if mp.m == 1:
        q, scale = svc.count_weights(mp.lam)
        q0, q1 = scale * float(q.w(0)), scale * float(q.w(1))
        prof = np.array([[scale]])
        tail = AnalyticTail(ShiftedWeights(q, 1), prof, q, prof.copy())
        ch = ChainSpec(a_head=[[[q0]], [[q1]]], b_minus1=[[q0]], b0=[[q0]],
                       tail=tail, name="MAP/G/1")
    else:
        blocks, theta, J = _uniformized_blocks(mp, svc, tol, j_cap)
        if k_max is not None and k_max + 2 < len(blocks):
            extra = blocks[k_max + 2:].sum(axis=0)
            blocks = blocks[: k_max + 2].copy()
            blocks[-1] += extra
        b_head = np.einsum("ij,kjl->kil", M, blocks[:-1]) if len(blocks) > 1 else None
        b_head = np.concatenate([b_head, [M @ blocks[-1]]]) if b_head is not None else [M @ blocks[-1]]
        ch = ChainSpec(a_head=blocks, b_minus1=blocks[0], b0=M @ blocks[0],
                       b_head=b_head[1:], name="MAP/G/1")
    ch.origin = {"map": mp, "service": svc, "rho": rho}
    return ch


def sigma_identity(mp: MapSpec, svc: ServiceDist, chain: ChainSpec) -> dict:
    """Compare ``varpi_A beta_A`` with ``rho - 1`` and ``varpi_A`` with the MAP's ``varpi``."""
    varpi_a, _, sigma = drift_parameters(chain)
    rho = mp.lam * svc.mean
    return {"sigma": sigma, "rho_minus_1": rho - 1.0, "residual": abs(sigma - (rho - 1.0)),
            "varpi_residual": float(np.abs(varpi_a - mp.varpi).max())}


# ---------------------------------------------------------------------- loss
def loss_from_pi0(mp: MapSpec, svc: ServiceDist, pi0: np.ndarray) -> float:
    x = float(pi0 @ mp.neg_inv_l0 @ np.ones(mp.m))
    b1 = svc.mean
    rho = mp.lam * b1
    return 1.0 - b1 / (rho * (x + b1))


def loss_exact(mp: MapSpec, svc: ServiceDist, N: int, chain: ChainSpec | None = None) -> float:
    """Loss probability of the MAP/G/1/N+1 queue from the finite embedded chain."""
    from .stationary import solve_finite

    if N < 1:
        raise ValidationError("N must be at least 1")
    if chain is None:
        chain = embed_chain(mp, svc)
    pi = solve_finite(build_finite(chain, N))
    return float(min(max(loss_from_pi0(mp, svc, pi.v0), 0.0), 1.0))


def loss_asymptotic(mp: MapSpec, svc: ServiceDist, N: float) -> float:
    """``rho q / (1 + rho q)`` with ``q = P(S_e > N / lambda)``.

    Only valid for services whose stationary-excess law is subexponential.
    """
    if not svc.subexponential_equilibrium:
        raise InapplicableError(
            f"asymptotic loss formula needs a subexponential equilibrium service law; "
            f"{svc.kind} service does not have one")
    rho = mp.lam * svc.mean
    q = float(svc.equilibrium_tail(N / mp.lam))
    return rho * q / (1.0 + rho * q)


def lambda_identity(mp: MapSpec, svc: ServiceDist, chain: ChainSpec | None = None,
                    sol=None) -> float:
    """``|1/lambda - pi(0)(-lambda0)^-1 e - beta_1|`` for the infinite chain."""
    from .matan import solve
    from .stationary import boundary_pi0

    if chain is None:
        chain = embed_chain(mp, svc)
    if sol is None:
        sol = solve(chain, kmax=4)
    _, pi0 = boundary_pi0(chain, sol)
    val = float(pi0 @ mp.neg_inv_l0 @ np.ones(mp.m))
    return abs(1.0 / mp.lam - val - svc.mean)


def mm1k_loss(lam: float, mu: float, N: int) -> float:
    """Closed-form loss of M/M/1 with capacity ``N + 1``."""
    rho = lam / mu
    if math.isclose(rho, 1.0):
        return 1.0 / (N + 2)
    return (1 - rho) * rho ** (N + 1) / (1 - rho ** (N + 2))
