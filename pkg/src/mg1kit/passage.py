"""Poisson-equation vector, drift functions and mean first-passage times to level 0."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .chain import ChainSpec, assemble_finite, build_finite, drift_parameters, level_offsets
from .errors import InconsistencyError, ValidationError
from .matan import MatanSolution


# ------------------------------------------------------------------ Poisson vector a
def solve_a(spec: ChainSpec):
    """Solution ``a`` of ``(I - A) x = -sigma e + beta_A`` with ``a > 0``.

    ``a = (I - A + e varpi)^-1 beta_A + c e`` with
    ``c = max(0, -min entry of the first term) + 1``.

    Returns
    -------
    a : ndarray
    c : float
    residual : float
        ``||(I - A) a - (-sigma e + beta_A)||_inf``.
    """
    varpi, beta, sigma = drift_parameters(spec)
    A = spec.a_sum
    m = spec.m1
    M = np.eye(m) - A + np.outer(np.ones(m), varpi)
    try:
        first = np.linalg.solve(M, beta)
    except np.linalg.LinAlgError as exc:
        raise InconsistencyError("I - A + e varpi is singular") from exc
    c = max(0.0, -float(first.min())) + 1.0
    a = first + c
    res = float(np.abs((np.eye(m) - A) @ a - (-sigma + beta)).max())
    return a, c, res


@dataclass
class DriftBundle:
    """Drift-function ingredients: ``a``, ``c`` and the constants found by scans."""

    a: np.ndarray
    c: float
    sigma: float
    poisson_residual: float
    b: float | None = None
    K: int | None = None
    b_prime: float | None = None
    K_prime: int | None = None

    def v(self, k: int) -> np.ndarray:
        if k == 0:
            return None
        return (k * k + 2.0 * k * self.a) / (-self.sigma)

    def f(self, k: int, m0: int | None = None):
        if k == 0:
            return np.ones(m0 if m0 is not None else 1)
        return np.full(self.a.shape, k + 1.0)

    def vprime(self, k: int) -> np.ndarray:
        return (k + self.a) / abs(self.sigma)


def drift_bundle(spec: ChainSpec) -> DriftBundle:
    a, c, res = solve_a(spec)
    _, _, sigma = drift_parameters(spec)
    return DriftBundle(a=a, c=c, sigma=sigma, poisson_residual=res)


def _v_vector(bundle, spec, n_levels, kind):
    """Flattened ``v`` or ``v'`` on levels ``0..n_levels``."""
    parts = [np.zeros(spec.m0)]
    for k in range(1, n_levels + 1):
        parts.append(bundle.v(k) if kind == "v" else bundle.vprime(k))
    return np.concatenate(parts)


@dataclass
class DriftReport:
    kind: str
    levels: np.ndarray
    margins: list
    b: float
    K: int
    holds: bool
    slope: float | None = None
    identity_residual: float | None = None
    finite: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["level", "phase", "margin"])
        for k, mg in zip(self.levels, self.margins):
            for i, x in enumerate(mg):
                w.writerow([int(k), i, repr(float(x))])
        return buf.getvalue()


def _pv_infinite(spec: ChainSpec, bundle: DriftBundle, level_cap: int):
    """``(P v)(k)`` for ``k = 0..level_cap`` from block moments."""
    s = -bundle.sigma
    a = bundle.a
    e1 = np.ones(spec.m1)
    M1 = spec.moment_a(1)
    M2 = spec.moment_a(2)
    A = spec.a_sum
    out = [(spec.moment_b(2) @ e1 + 2.0 * spec.moment_b(1) @ a) / s]
    for k in range(1, level_cap + 1):
        # sum_{l >= -1} A(l) ((k+l)^2 e + 2 (k+l) a); the l = -1 term at k = 1 is 0
        val = (k * k * (A @ e1) + 2 * k * (M1 @ e1) + M2 @ e1
               + 2 * k * (A @ a) + 2 * (M1 @ a)) / s
        out.append(val)
    return out


def drift_check_v(spec: ChainSpec, bundle: DriftBundle | None = None,
                  level_cap: int = 50) -> DriftReport:
    """Find ``b`` and ``K`` with ``P v <= v - f + b 1_{levels <= K}``.

    Margins ``(P v - v + f)(k)`` are evaluated exactly for
    ``k <= level_cap``; beyond, they fall by exactly 1 per level, so the
    inequality for all ``k > K`` follows once the margin at ``K + 1`` is
    negative.
    """
    if bundle is None:
        bundle = drift_bundle(spec)
    pv = _pv_infinite(spec, bundle, level_cap)
    margins = [pv[0] - 0.0 + np.ones(spec.m0)]
    for k in range(1, level_cap + 1):
        margins.append(pv[k] - bundle.v(k) + (k + 1.0))
    mx = np.array([float(m.max()) for m in margins])
    nonneg = np.flatnonzero(mx >= 0.0)
    K = max(1, int(nonneg.max()) if nonneg.size else 1)
    if K >= level_cap:
        raise ValidationError(f"drift margin still nonnegative at level {level_cap}; "
                              "check the drift sign and second moments")
    b = max(0.0, float(mx[: K + 1].max()))
    slope = float((margins[level_cap] - margins[level_cap - 1]).max()) if level_cap >= 3 else None
    bundle.b, bundle.K = b, K
    return DriftReport("v", np.arange(level_cap + 1), margins, b, K,
                       holds=bool(mx[K + 1:].max() < 0), slope=slope)


def drift_check_v_finite(spec: ChainSpec, bundle: DriftBundle, N: int, eps: float) -> dict:
    """Check ``P^(N) v <= v - (1 - eps) f + b 1_{levels <= K}`` on the LastColumn chain."""
    if bundle.b is None:
        drift_check_v(spec, bundle)
    P = assemble_finite(build_finite(spec, N))
    v = _v_vector(bundle, spec, N, "v")
    f = np.concatenate([np.ones(spec.m0)] + [np.full(spec.m1, k + 1.0) for k in range(1, N + 1)])
    off = level_offsets(spec.m0, spec.m1, N)
    bvec = np.zeros_like(v)
    bvec[: off[bundle.K + 1]] = bundle.b
    slack = v - (1 - eps) * f + bvec - P @ v
    scale = np.maximum(1.0, np.abs(v))
    return {"N": N, "eps": eps, "holds": bool((slack >= -1e-9 * scale).all()),
            "min_slack": float(slack.min())}


def drift_check_vprime(spec: ChainSpec, bundle: DriftBundle | None = None,
                       n_grid=(10, 20, 50, 100), eps: float = 0.05,
                       level_cap: int = 20) -> DriftReport:
    """Drift of ``v'(k) = (k e + a)/|sigma|``.

    Infinite chain: ``P v' <= v' - e + b' 1_{levels <= K'}``, where the margin
    ``P v' - v' + e`` vanishes identically for ``k >= 2``; the residual of that
    identity is reported.  Finite chains: ``P^(N) v' <= v' - (1 - eps) e +
    b' 1_{levels <= K'}`` is checked for each ``N`` in ``n_grid``; ``N_eps``
    is the first grid point from which it holds throughout.
    """
    if bundle is None:
        bundle = drift_bundle(spec)
    s = abs(bundle.sigma)
    a = bundle.a
    e1 = np.ones(spec.m1)
    margins = [(spec.moment_b(1) @ e1 + spec.tail_b(0) @ a) / s + np.ones(spec.m0)]
    A0 = spec.tail_a(-1)              # sum_{l >= 0} A(l)
    M1_0 = spec.moment_a(1) + spec.a(-1)   # sum_{l >= 0} l A(l)
    pv1 = (A0 @ e1 + M1_0 @ e1 + A0 @ a) / s
    margins.append(pv1 - bundle.vprime(1) + 1.0)
    M1 = spec.moment_a(1)
    A = spec.a_sum
    ident = 0.0
    for k in range(2, level_cap + 1):
        pv = (k * (A @ e1) + M1 @ e1 + A @ a) / s
        mg = pv - bundle.vprime(k) + 1.0
        ident = max(ident, float(np.abs(mg).max()))
        margins.append(mg)
    mx = np.array([float(m.max()) for m in margins])
    K = 1
    b = max(0.0, float(mx[:2].max()))
    bundle.b_prime, bundle.K_prime = b, K
    finite = {}
    ok = []
    for N in n_grid:
        P = assemble_finite(build_finite(spec, N))
        v = _v_vector(bundle, spec, N, "vprime")
        off = level_offsets(spec.m0, spec.m1, N)
        bvec = np.zeros_like(v)
        bvec[: off[K + 1]] = b
        slack = v - (1 - eps) + bvec - P @ v
        holds = bool((slack >= -1e-9 * np.maximum(1.0, np.abs(v))).all())
        finite[int(N)] = {"holds": holds, "min_slack": float(slack.min())}
        ok.append(holds)
    n_eps = None
    for i in range(len(ok)):
        if all(ok[i:]):
            n_eps = int(list(n_grid)[i])
            break
    finite["N_eps"] = n_eps
    finite["eps"] = eps
    return DriftReport("vprime", np.arange(level_cap + 1), margins, b, K,
                       holds=bool(mx[K + 1:].max() <= 1e-12), identity_residual=ident,
                       finite=finite)


# ------------------------------------------------------------------ passage times
@dataclass
class PassageVectors:
    """Mean first-passage times ``u(k)`` to level 0, ``k = 0..kmax``."""

    u0: np.ndarray
    body: np.ndarray
    resolvent: np.ndarray
    sigma: float

    def __getitem__(self, k: int) -> np.ndarray:
        return self.u0 if k == 0 else self.body[k - 1]

    def at(self, k: int, G: np.ndarray) -> np.ndarray:
        """``u(k)`` for any ``k >= 1`` (not limited to the stored range)."""
        Gk = np.linalg.matrix_power(G, k)
        e = np.ones(G.shape[0])
        return (np.eye(G.shape[0]) - Gk) @ self.resolvent @ e + k / (-self.sigma) * e


def resolvent(spec: ChainSpec, sol: MatanSolution, sigma: float | None = None) -> np.ndarray:
    """``(I - A - beta_A g)^-1``."""
    beta = spec.beta_a
    M = np.eye(spec.m1) - spec.a_sum - np.outer(beta, sol.g_vec)
    try:
        return np.linalg.inv(M)
    except np.linalg.LinAlgError as exc:
        raise InconsistencyError("I - A - beta_A g is singular") from exc


def u_zero(spec: ChainSpec, sol: MatanSolution) -> np.ndarray:
    """``u(0) = e + sum_m B(m)(I - G^m) Y e + sum_m m B(m) e / (-sigma)``."""
    _, _, sigma = drift_parameters(spec)
    Y = resolvent(spec, sol)
    e1 = np.ones(spec.m1)
    term = (spec.tail_b(0) - sol.s0[1] @ sol.g_matrix) @ Y @ e1
    mean_b = spec.double_tail_b(-1, strict=False) @ e1
    return np.ones(spec.m0) + term + mean_b / (-sigma)


def u_vectors(spec: ChainSpec, sol: MatanSolution, kmax: int) -> PassageVectors:
    """``u(k) = (I - G^k) Y e + k/(-sigma) e`` for ``k = 1..kmax`` and ``u(0)``."""
    _, _, sigma = drift_parameters(spec)
    if sigma >= 0:
        raise ValidationError("mean passage times are finite only for negative drift")
    Y = resolvent(spec, sol)
    G = sol.g_matrix
    m = spec.m1
    e1 = np.ones(m)
    Ye = Y @ e1
    body = np.empty((kmax, m))
    Gk = np.eye(m)
    for k in range(1, kmax + 1):
        Gk = Gk @ G
        body[k - 1] = Ye - Gk @ Ye + k / (-sigma)
    return PassageVectors(u_zero(spec, sol), body, Y, sigma)


def pi_u_diagnostic(pi, u: PassageVectors, kmax: int, tol: float = 1e-10, window: int = 10):
    """Partial sums ``s(n) = sum_{k <= n} pi(k) u(k)``.

    ``cauchy`` is true when the last ``window`` increments all fall below
    ``tol``.  Because summable power tails pass that test only at huge
    levels, the log-log slope of the terms over the last half of the range
    is reported too; ``converges`` is true if the Cauchy test passes or the
    terms decay faster than ``k^-1.05``.
    """
    terms = np.empty(kmax + 1)
    terms[0] = float(pi[0] @ u[0])
    for k in range(1, kmax + 1):
        terms[k] = float(pi[k] @ u[k])
    partial = np.cumsum(terms)
    cauchy = bool((terms[-window:] < tol).all())
    ks = np.arange(kmax // 2, kmax + 1)
    pos = terms[ks] > 0
    slope = None
    if pos.sum() >= 5:
        slope = float(np.polyfit(np.log(ks[pos]), np.log(terms[ks][pos]), 1)[0])
    converges = cauchy or (slope is not None and slope < -1.05)
    return {"partial_sums": partial, "terms": terms, "cauchy": cauchy,
            "tail_slope": slope, "converges": converges}
