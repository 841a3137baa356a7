"""G-matrix, Phi(0), R-matrices and the F+ occupation blocks."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csgraph

from . import kernels
from .chain import ChainSpec, validate
from .errors import ConvergenceError, InconsistencyError, ValidationError

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 200_000


@dataclass
class MatanSolution:
    """G, g, Phi(0) and the R-families of an infinite-level chain.

    ``s[k]`` holds ``S(k) = sum_{m >= k} A(m) G^(m-k)`` for ``k = 0 .. kmax+1``
    and ``s0[k]`` the analogue with ``B`` (``s0[0]`` unused); then
    ``Phi(0) = S(0)``, ``R(k) = S(k) (I - Phi(0))^-1`` and
    ``R0(k) = S0(k) (I - Phi(0))^-1``.
    """

    spec: ChainSpec
    g_matrix: np.ndarray
    g_vec: np.ndarray
    phi0: np.ndarray
    inv_phi0: np.ndarray
    s: np.ndarray
    s0: np.ndarray
    iterations: int
    residual: float
    kmax: int
    monotone: bool = True
    notes: list = field(default_factory=list)

    @property
    def r(self) -> np.ndarray:
        """``r[k] = R(k)`` for ``k = 1 .. kmax`` (``r[0]`` is zero)."""
        out = self.s[: self.kmax + 1] @ self.inv_phi0
        out[0] = 0.0
        return out

    @property
    def r0(self) -> np.ndarray:
        out = self.s0[: self.kmax + 1] @ self.inv_phi0
        out[0] = 0.0
        return out

    def g_power(self, n: int) -> np.ndarray:
        return np.linalg.matrix_power(self.g_matrix, n)

    def extend(self, kmax: int) -> "MatanSolution":
        """Solution with R-families up to ``kmax`` (reusing G)."""
        if kmax <= self.kmax:
            return self
        return r_matrices(self.spec, self, kmax)


def _fixed_point_map(spec: ChainSpec, K: int, coeffs, G):
    out = kernels.horner_right(coeffs, G)
    if spec.tail is not None and K > spec.ka:
        rem = float(spec.tail.weights_a.sf(K))
        if rem:
            out = out + rem * spec.tail.profile_a @ np.linalg.matrix_power(G, K + 1)
    return out


def fixed_point_residual(spec: ChainSpec, G, tol: float = DEFAULT_TOL) -> float:
    K = spec.tail_cutoff(tol / 10) if spec.tail is not None else spec.ka
    coeffs = spec.a_blocks(-1, K)
    return float(np.abs(G - _fixed_point_map(spec, K, coeffs, G)).max())


def solve_g(spec: ChainSpec, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
            check_drift: bool = True):
    """Minimal nonnegative solution of ``G = sum_m A(m) G^(m+1)``.

    Natural iteration from ``G_0 = O``.  Analytic tails are cut at the
    smallest ``K`` with tail mass below ``tol/10`` and the remainder
    ``sum_{m > K} A(m) G^(m+1)`` is replaced by ``tail_a(K) G^(K+1)``.
    Iteration stops once the update and the row-sum defect of ``G`` are both
    below ``tol``.

    Returns
    -------
    G : ndarray
    info : dict
        ``iterations``, ``residual`` (fixed-point residual), ``monotone``.
    """
    if check_drift:
        rep = validate(spec)
        if rep.sigma >= 0:
            raise ValidationError(f"negative drift required, sigma = {rep.sigma:.6g}")
    m = spec.m1
    if m == 1 and spec.tail is not None and check_drift:
        # a scalar G of a positive recurrent chain is stochastic, hence 1;
        # skips evaluating a possibly very long power-law head
        res = abs(1.0 - float(spec.a_sum[0, 0]))
        return np.ones((1, 1)), {"iterations": 0, "residual": res, "monotone": True,
                                 "cutoff": 0}
    K = spec.tail_cutoff(tol / 10) if spec.tail is not None else spec.ka
    coeffs = spec.a_blocks(-1, K)
    G = np.zeros((m, m))
    monotone = True
    step = np.inf
    for it in range(1, max_iter + 1):
        Gn = _fixed_point_map(spec, K, coeffs, G)
        diff = Gn - G
        if diff.min() < -1e-14:
            monotone = False
        step = float(np.abs(diff).max())
        G = Gn
        defect = float(np.abs(1.0 - G.sum(axis=1)).max())
        if step < tol and defect < tol:
            # G is stochastic here, so the row defect bounds the remaining
            # error; keep going while it still shrinks (cheap, same rate)
            extra = 0
            while defect > 4e-16 and extra < it:
                Gn = _fixed_point_map(spec, K, coeffs, G)
                dn = float(np.abs(1.0 - Gn.sum(axis=1)).max())
                if dn >= defect:
                    break
                if (Gn - G).min() < -1e-14:
                    monotone = False
                G, defect = Gn, dn
                extra += 1
            it += extra
            break
    else:
        raise ConvergenceError(f"G iteration did not converge in {max_iter} steps "
                               f"(last update {step:.3g})", residual=step, iterations=max_iter)
    res = float(np.abs(G - _fixed_point_map(spec, K, coeffs, G)).max())
    return G, {"iterations": it, "residual": res, "monotone": monotone, "cutoff": K}


def closed_classes(M: np.ndarray):
    """Closed communicating classes of the nonzero pattern of ``M``."""
    adj = np.asarray(M) > 0
    n, labels = csgraph.connected_components(adj, directed=True, connection="strong")
    out = []
    for c in range(n):
        idx = np.flatnonzero(labels == c)
        rest = np.flatnonzero(labels != c)
        if not adj[np.ix_(idx, rest)].any():
            out.append(idx)
    return out


def stationary_of_g(G: np.ndarray) -> np.ndarray:
    """Stationary vector of a stochastic matrix with one closed class (GTH)."""
    classes = closed_classes(G)
    if len(classes) != 1:
        raise InconsistencyError(
            f"matrix has {len(classes)} closed classes: {[c.tolist() for c in classes]}")
    idx = classes[0]
    sub = G[np.ix_(idx, idx)]
    x, bad = kernels.gth(sub)
    if bad >= 0:
        raise InconsistencyError("GTH elimination hit a zero pivot")
    g = np.zeros(G.shape[0])
    g[idx] = x
    return g


def _tail_start(weights, profile, G, k_start: int, cap: int = 100_000):
    """``profile * sum_{j >= 0} w(k_start + j) G^j``.

    Summed term by term until ``G^j`` settles (then the remaining weight mass
    multiplies the limit) or the remaining mass is negligible.
    """
    m = G.shape[0]
    acc = np.zeros((m, m))
    P = np.eye(m)
    chunk = 64
    j = 0
    while j < cap:
        ws = weights.w(np.arange(k_start + j, k_start + j + chunk))
        for w in ws:
            acc += w * P
            Pn = P @ G
            j += 1
            if np.abs(Pn - P).max() < 1e-16:
                rem = float(weights.sf(k_start + j - 1))
                return profile @ (acc + rem * Pn)
            P = Pn
        if float(weights.sf(k_start + j - 1)) < 1e-18:
            return profile @ acc
    rem = float(weights.sf(k_start + j - 1))
    return profile @ (acc + rem * P)


def _backward_s(blocks, start_block, G, k_first: int):
    """Run ``S(k) = block(k) + S(k+1) G`` downward.

    ``blocks[i]`` is the block at index ``k_first + i``; ``start_block`` is
    ``S`` at ``k_first + len(blocks)``.  Returns the stacked ``S`` values for
    ``k_first .. k_first + len(blocks)``.
    """
    n = len(blocks)
    out = np.empty((n + 1,) + start_block.shape)
    out[n] = start_block
    for i in range(n - 1, -1, -1):
        out[i] = blocks[i] + out[i + 1] @ G
    return out


def r_matrices(spec: ChainSpec, base, kmax: int) -> MatanSolution:
    """Phi(0), S(k), S0(k) and hence R(k), R0(k) for ``k <= kmax``.

    ``base`` is either a G matrix or a :class:`MatanSolution` whose G is
    reused.
    """
    if isinstance(base, MatanSolution):
        G, g = base.g_matrix, base.g_vec
        iters, res, mono = base.iterations, base.residual, base.monotone
    else:
        G = np.asarray(base)
        g = stationary_of_g(G)
        iters, res, mono = 0, fixed_point_residual(spec, G), True
    kmax = max(int(kmax), 1)
    m0, m1 = spec.m0, spec.m1
    top = kmax + 1
    ka_start = max(top + 1, spec.ka + 1)
    kb_start = max(top + 1, spec.kb + 1)
    if spec.tail is None:
        start = np.zeros((m1, m1))
        start0 = np.zeros((m0, m1))
    else:
        t = spec.tail
        start = _tail_start(t.weights_a, t.profile_a, G, ka_start)
        start0 = _tail_start(t.weights_b, t.profile_b, G, kb_start)
    # fill the gap between top and the tail start with explicit blocks
    if ka_start > top + 1:
        gap = spec.a_blocks(top + 1, ka_start - 1)
        start = _backward_s(gap, start, G, top + 1)[0]
    if kb_start > top + 1:
        gap = spec.b_blocks(top + 1, kb_start - 1)
        start0 = _backward_s(gap, start0, G, top + 1)[0]
    s = _backward_s(spec.a_blocks(0, top), start, G, 0)[: top + 1]
    s0 = np.zeros((top + 1, m0, m1))
    s0[1:] = _backward_s(spec.b_blocks(1, top), start0, G, 1)[: top]
    phi0 = s[0].copy()
    I = np.eye(m1)
    cond = np.linalg.cond(I - phi0)
    notes = []
    if cond > 1e12:
        warnings.warn(f"I - Phi(0) is ill-conditioned (cond = {cond:.3g})", RuntimeWarning)
        notes.append(f"cond(I - Phi(0)) = {cond:.3g}")
    if max(abs(np.linalg.eigvals(phi0))) >= 1.0:
        raise InconsistencyError("spectral radius of Phi(0) is not below 1")
    inv = np.linalg.inv(I - phi0)
    return MatanSolution(spec=spec, g_matrix=G, g_vec=g, phi0=phi0, inv_phi0=inv, s=s, s0=s0,
                         iterations=iters, residual=res, kmax=kmax, monotone=mono, notes=notes)


def phi0(spec: ChainSpec, G) -> np.ndarray:
    """``Phi(0) = sum_{m >= 0} A(m) G^m``."""
    return r_matrices(spec, G, 1).phi0


def solve(spec: ChainSpec, kmax: int = 64, tol: float = DEFAULT_TOL,
          max_iter: int = DEFAULT_MAX_ITER) -> MatanSolution:
    """G, g, Phi(0) and R-families up to ``kmax`` in one call."""
    G, info = solve_g(spec, tol=tol, max_iter=max_iter)
    g = stationary_of_g(G)
    sol = r_matrices(spec, G, kmax)
    sol.g_vec = g
    sol.iterations, sol.residual, sol.monotone = info["iterations"], info["residual"], info["monotone"]
    return sol


@dataclass
class FPlusWindow:
    """``blocks[k, l] = F+(k; l)`` for ``1 <= k, l <= W`` (index 0 unused)."""

    W: int
    blocks: np.ndarray
    closed_form_error: float

    def __call__(self, k: int, l: int) -> np.ndarray:
        return self.blocks[k, l]


def f_plus_window(sol: MatanSolution, W: int) -> FPlusWindow:
    """Occupation blocks of the chain killed on reaching level 0.

    Uses ``F+(1;1) = (I - Phi(0))^-1`` and, for ``k >= 2``,
    ``F+(k;l) = G F+(k-1;l)`` (``l < k``), ``F+(k;k) = F+(1;1) + G F+(k-1;k)``;
    for ``l > k``, ``F+(k;l) = sum_{n<l} F+(k;n) R(l-n)``.
    """
    if W < 1:
        raise ValueError("window must be at least 1")
    sol = sol.extend(W)
    R = sol.r
    G = sol.g_matrix
    m = G.shape[0]
    F = np.zeros((W + 1, W + 1, m, m))
    for k in range(1, W + 1):
        for l in range(1, k + 1):
            if k == 1:
                F[1, 1] = sol.inv_phi0
            elif l < k:
                F[k, l] = G @ F[k - 1, l]
            else:
                F[k, k] = sol.inv_phi0 + G @ F[k - 1, k]
        for l in range(k + 1, W + 1):
            # sum_{n=1}^{l-1} F(k;n) R(l-n)
            F[k, l] = np.einsum("nij,njk->ik", F[k, 1:l], R[l - 1:0:-1])
    Gp = np.eye(m)
    err = 0.0
    for k in range(1, W + 1):
        err = max(err, float(np.abs(F[k, 1] - Gp @ sol.inv_phi0).max()))
        Gp = Gp @ G
    if err > 1e-10:
        raise InconsistencyError(f"F+(k;1) disagrees with G^(k-1)(I-Phi(0))^-1 by {err:.3g}")
    return FPlusWindow(W, F, err)
