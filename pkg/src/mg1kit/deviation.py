"""Fundamental deviation matrix H on a finite window and the difference formula.

``H`` solves the Poisson equation ``(I - P) H = I - e pi``.  Its blocks are

    H(0; l)  from the censored level-0 system,
    H(k; l) = [l > 0] F+(k; l) + G^(k-1) (I - Phi(0))^-1 B(-1) H(0; l) - u(k) pi(l),

and admit the split ``H(k; l) = -(k / -sigma) e pi(l) + E(k; l)`` with
bounded ``E``.  Blocks at any level can be produced from these closed
forms, so sums that reach beyond the requested window use exact blocks,
never extrapolated ones.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .chain import ChainSpec, FiniteChainSpec, assemble_finite, assemble_p_window, build_finite
from .errors import InconsistencyError, WindowError
from .matan import MatanSolution, f_plus_window, solve
from .passage import resolvent, u_vectors
from .stationary import LevelVector, censored_p0, solve_finite, solve_infinite

# cap on the number of explicit blocks used for analytic-tail sums
MAX_TAIL_TERMS = 5000


def _jump_cutoff(spec: ChainSpec, which: str, tol: float) -> int:
    if spec.tail is None:
        return spec.ka if which == "A" else spec.kb
    return min(spec.tail_cutoff(tol, which), MAX_TAIL_TERMS)


@dataclass
class DeviationWindow:
    """Blocks of ``H`` and ``E`` for levels ``0..K`` and columns ``0..L``.

    ``h_blocks[k][l]`` is ``H(k; l)``; ``e_blocks[k][l]`` is ``E(k; l)`` for
    ``k >= max(l, 1)`` and ``None`` otherwise.  :meth:`h` and :meth:`e`
    evaluate the same closed forms at any level.
    """

    spec: ChainSpec
    sol: MatanSolution
    pi: LevelVector
    K: int
    L: int
    censored: tuple
    h_boundary: list
    f_plus: object
    sigma: float
    certificate: float
    h_blocks: list = field(default_factory=list, repr=False)
    e_blocks: list = field(default_factory=list, repr=False)
    c_e: np.ndarray | None = None
    decomposition_error: float = 0.0

    def __post_init__(self):
        G = self.sol.g_matrix
        self._gp = [np.eye(G.shape[0])]
        self._C = self.sol.inv_phi0 @ self.spec.b_minus1
        self._Ye = resolvent(self.spec, self.sol) @ np.ones(self.spec.m1)
        self._cache_h = {}

    # -------------------------------------------------------------- pieces
    def gpow(self, n: int) -> np.ndarray:
        G = self.sol.g_matrix
        while len(self._gp) <= n:
            self._gp.append(self._gp[-1] @ G)
        return self._gp[n]

    def _fplus(self, k: int, l: int) -> np.ndarray:
        if k <= self.f_plus.W:
            return self.f_plus(k, l)
        # k > W >= l
        return self.gpow(k - l) @ self.f_plus(l, l)

    def u(self, k: int) -> np.ndarray:
        e = np.ones(self.spec.m1)
        return self._Ye - self.gpow(k) @ self._Ye + k / (-self.sigma) * e

    def h(self, k: int, l: int) -> np.ndarray:
        """``H(k; l)`` at any level ``k``."""
        if k == 0:
            return self.h_boundary[l]
        key = (k, l)
        out = self._cache_h.get(key)
        if out is None:
            out = self.gpow(k - 1) @ self._C @ self.h_boundary[l] - np.outer(self.u(k), self.pi[l])
            if l > 0:
                out = out + self._fplus(k, l)
            self._cache_h[key] = out
        return out

    def e(self, k: int, l: int) -> np.ndarray:
        """``E(k; l)`` for ``k >= max(l, 1)``."""
        if k < max(l, 1):
            raise ValueError(f"E(k; l) needs k >= max(l, 1), got k={k}, l={l}")
        out = self.gpow(k - 1) @ self._C @ self.h_boundary[l]
        out = out - np.outer(self._Ye - self.gpow(k) @ self._Ye, self.pi[l])
        if l > 0:
            out = out + self.gpow(k - l) @ self.f_plus(l, l)
        return out

    def e_limit(self, l: int) -> np.ndarray:
        """``lim_k E(k; l)``, using ``G^k -> e g``."""
        m = self.spec.m1
        eg = np.outer(np.ones(m), self.sol.g_vec)
        out = eg @ self._C @ self.h_boundary[l] - np.outer(self._Ye - eg @ self._Ye, self.pi[l])
        if l > 0:
            out = out + eg @ self.f_plus(l, l)
        return out


def h_boundary(spec: ChainSpec, sol: MatanSolution, u, pi, l: int, fp=None, censored=None):
    """``H(0; l)`` from ``(I - P0~) X = RHS(l)``.

    The singular system is solved through ``(I - P0~ + e pi0~) X = RHS``,
    which picks the solution with ``pi0~ X = 0``.  Returns ``(X, certificate)``
    where the certificate ``|pi0~ RHS|`` must vanish for solvability.
    """
    P0, pit = censored if censored is not None else censored_p0(spec, sol)
    m0 = spec.m0
    if l == 0:
        rhs = np.eye(m0) - np.outer(u[0], pi[0])
    else:
        if fp is None:
            fp = f_plus_window(sol, l)
        sol = sol.extend(l + 1)
        rhs = -np.outer(u[0], pi[l])
        for m in range(1, l + 1):
            rhs = rhs + spec.b(m) @ fp(m, l)
        rhs = rhs + sol.s0[l + 1] @ sol.g_matrix @ fp(l, l)
    cert = float(np.abs(pit @ rhs).max())
    if cert > 1e-9:
        raise InconsistencyError(f"boundary system for H(0;{l}) is not solvable "
                                 f"(|pi0~ RHS| = {cert:.3g}); pi or u is inaccurate")
    M = np.eye(m0) - P0 + np.outer(np.ones(m0), pit)
    return np.linalg.solve(M, rhs), cert


def h_block(win: DeviationWindow, k: int, l: int) -> np.ndarray:
    return win.h(k, l)


def e_block(win: DeviationWindow, k: int, l: int) -> np.ndarray:
    """``E(k; l)``; checks ``H(k; l) = -(k / -sigma) e pi(l) + E(k; l)`` to 1e-10."""
    E = win.e(k, l)
    lhs = win.h(k, l) + k / (-win.sigma) * np.outer(np.ones(win.spec.m1), win.pi[l])
    err = float(np.abs(lhs - E).max())
    if err > 1e-10 * max(1.0, float(np.abs(E).max())):
        raise InconsistencyError(f"H/E decomposition off by {err:.3g} at k={k}, l={l}")
    return E


def build_window(spec: ChainSpec, K: int, L: int, sol: MatanSolution | None = None,
                 pi: LevelVector | None = None) -> DeviationWindow:
    """Assemble ``H(k; l)`` and ``E(k; l)`` for ``k <= K``, ``l <= L``."""
    if K < 1 or L < 0:
        raise WindowError("window needs K >= 1 and L >= 0", required=max(1, L + 1))
    if sol is None:
        sol = solve(spec, kmax=max(K, L) + 2)
    sol = sol.extend(max(K, L) + 2)
    if pi is None:
        pi = solve_infinite(spec, sol, min_level=L + 1)
    u = u_vectors(spec, sol, max(L, 1))
    fp = f_plus_window(sol, max(L, 1))
    cens = censored_p0(spec, sol)
    hb, certs = [], []
    for l in range(L + 1):
        x, c = h_boundary(spec, sol, u, pi, l, fp=fp, censored=cens)
        hb.append(x)
        certs.append(c)
    win = DeviationWindow(spec=spec, sol=sol, pi=pi, K=K, L=L, censored=cens, h_boundary=hb,
                          f_plus=fp, sigma=u.sigma, certificate=max(certs))
    win.h_blocks = [[win.h(k, l) for l in range(L + 1)] for k in range(K + 1)]
    win.e_blocks = [[win.e(k, l) if k >= max(l, 1) else None for l in range(L + 1)]
                    for k in range(K + 1)]
    err = 0.0
    ce = np.zeros(L + 1)
    ones = np.ones(spec.m1)
    for k in range(1, K + 1):
        for l in range(min(k, L) + 1):
            E = win.e_blocks[k][l]
            lhs = win.h_blocks[k][l] + k / (-win.sigma) * np.outer(ones, pi[l])
            err = max(err, float(np.abs(lhs - E).max()))
            ce[l] = max(ce[l], float(np.abs(E).max()))
    win.c_e = ce
    win.decomposition_error = err
    return win


# ---------------------------------------------------------------------- Poisson equation
def poisson_residual(spec: ChainSpec, K: int, L: int, win: DeviationWindow | None = None,
                     tail_tol: float = 1e-17) -> dict:
    """Max residual of ``(I - P) H = I - e pi`` on rows ``k <= K``, columns ``l <= L``.

    Rows must cover the diagonal ``k = l`` for every column, so ``K > L``.
    Finite-support sums are exact; analytic-tail sums stop where the block
    mass falls below ``tail_tol`` and the neglected part is bounded in
    ``tail_bound``.
    """
    if K <= L:
        raise WindowError(f"window K={K} too small for L={L}; need K >= {L + 1}",
                          required=L + 1)
    if win is None:
        win = build_window(spec, K, L)
    ja = _jump_cutoff(spec, "A", tail_tol)
    jb = _jump_cutoff(spec, "B", tail_tol)
    m0, m1 = spec.m0, spec.m1
    A = spec.a_blocks(-1, ja)
    B = spec.b_blocks(1, jb) if jb >= 1 else np.zeros((0, m0, m1))
    worst = 0.0
    for l in range(L + 1):
        ml = m0 if l == 0 else m1
        pil = win.pi[l]
        # level 0
        r = win.h(0, l) - spec.b0 @ win.h(0, l)
        for j in range(1, jb + 1):
            r = r - B[j - 1] @ win.h(j, l)
        r = r - ((np.eye(m0) if l == 0 else 0.0) - np.outer(np.ones(m0), pil))
        worst = max(worst, float(np.abs(r).max()))
        for k in range(1, K + 1):
            r = win.h(k, l).copy()
            r -= (spec.b_minus1 if k == 1 else A[0]) @ win.h(k - 1, l)
            for j in range(0, ja + 1):
                r -= A[j + 1] @ win.h(k + j, l)
            if k == l:
                r -= np.eye(ml)
            r += np.outer(np.ones(m1), pil)
            worst = max(worst, float(np.abs(r).max()))
    bound = 0.0
    if spec.tail is not None:
        hmax = max(float(np.abs(win.h(K + ja, l)).max()) for l in range(L + 1))
        mass = max(float(spec.tail_a(ja).sum(1).max()), float(spec.tail_b(jb).sum(1).max()))
        bound = mass * 2 * hmax
    return {"residual": worst, "tail_bound": bound, "K": K, "L": L, "jumps": (ja, jb)}


# ---------------------------------------------------------------------- D = (I - e pi) H
def deviation_d_window(win: DeviationWindow) -> dict:
    """``D(k; l) = H(k; l) - e pi H(.; l)`` for the window of ``win``.

    ``pi H(.; l)`` sums exact blocks up to the truncation level of ``pi``;
    beyond it each ``H(n; l)`` is replaced by ``-(n / -sigma) e pi(l) + E(n_top; l)``
    with the geometric/power tail of ``pi`` supplying ``sum_{n > top} n pi(n) e``
    only as a bound.
    """
    pi, spec = win.pi, win.spec
    top = pi.truncation
    piH = []
    bound = 0.0
    mass = pi.tail_mass(top)
    for l in range(win.L + 1):
        acc = pi[0] @ win.h(0, l)
        for k in range(1, top + 1):
            acc = acc + pi[k] @ win.h(k, l)
        if mass > 0:
            tv = pi.tail_vector(top)
            acc = acc + tv @ win.e(top, l) - mass * (top + 1) / (-win.sigma) * pi[l]
            spread = float(np.abs(win.e_limit(l) - win.e(top, l)).max())
            bound = max(bound, mass * spread)
        piH.append(acc)
    D = [[win.h(k, l) - np.outer(np.ones(spec.m0 if k == 0 else spec.m1), piH[l])
          for l in range(win.L + 1)] for k in range(win.K + 1)]
    return {"D": D, "piH": piH, "tail_mass": mass, "tail_bound": bound}


# ---------------------------------------------------------------------- difference formula
def _pn_minus_p_rhs(spec, fspec, piN, win, cols, tail_tol):
    """``pi^(N) (P^(N) - P) H`` for columns ``cols``; returns (rhs list, neglected mass)."""
    N = fspec.n
    m0, m1 = spec.m0, spec.m1
    PN = assemble_finite(fspec)
    PW = assemble_p_window(spec, N).matrix
    diff = PN - PW
    ja = _jump_cutoff(spec, "A", tail_tol)
    jb = _jump_cutoff(spec, "B", tail_tol)
    xN = piN.flat()
    row_w = xN @ diff                           # weights on columns of levels 0..N
    off = np.concatenate([[0], m0 + m1 * np.arange(N + 1)])
    out = []
    for l in cols:
        acc = row_w[:m0] @ win.h(0, l)
        for j in range(1, N + 1):
            acc = acc + row_w[off[j]:off[j + 1]] @ win.h(j, l)
        # transitions from levels <= N to levels > N
        for n in range(N + 1, N + max(ja, jb) + 1):
            blk = np.zeros(m1)
            if n <= jb:
                blk = blk + piN[0] @ spec.b(n)
            for i in range(max(1, n - ja), N + 1):
                blk = blk + piN[i] @ spec.a(n - i)
            acc = acc - blk @ win.h(n, l)
        out.append(acc)
    neglected = 0.0
    if spec.tail is not None:
        neglected = max(float(spec.tail_a(ja).sum(1).max()), float(spec.tail_b(jb).sum(1).max()))
    return out, neglected


def difference_formula_check(spec: ChainSpec, N: int, L: int, fspec: FiniteChainSpec | None = None,
                             sol: MatanSolution | None = None, pi: LevelVector | None = None,
                             tail_tol: float = 1e-16) -> dict:
    """Check ``pi^(N) - pi = pi^(N) (P^(N) - P) H`` on columns ``l <= L``."""
    if fspec is None:
        fspec = build_finite(spec, N)
    piN = solve_finite(fspec)
    if sol is None:
        sol = solve(spec, kmax=max(N, L) + 2)
    if pi is None:
        pi = solve_infinite(spec, sol, min_level=max(N, L) + 1)
    win = build_window(spec, max(N, L) + 1, L, sol=sol, pi=pi)
    rhs, neglected = _pn_minus_p_rhs(spec, fspec, piN, win, range(L + 1), tail_tol)
    hmax = max(float(np.abs(win.h(N + 1, l)).max()) for l in range(L + 1))
    bound = neglected * 2 * hmax * (N + 1)
    if bound > 1e-9:
        raise WindowError(f"neglected tail contributes up to {bound:.3g}; "
                          f"increase the truncation", required=None)
    err = 0.0
    per_level = []
    for l in range(L + 1):
        lhs = piN[l] - pi[l]
        e = float(np.abs(lhs - rhs[l]).max())
        per_level.append(e)
        err = max(err, e)
    # structural zero: P^(N) - P vanishes on columns of levels < N
    PN = assemble_finite(fspec)
    PW = assemble_p_window(spec, N).matrix
    off_n = spec.m0 + spec.m1 * (N - 1)
    structural = float(np.abs((PN - PW)[:, :off_n]).max()) if fspec.scheme == "LastColumn" else None
    return {"N": N, "L": L, "max_error": err, "per_level": per_level, "tail_bound": bound,
            "structural_zero": structural}


def difference_decomposition(spec: ChainSpec, N: int, k: int, fspec: FiniteChainSpec | None = None,
                             sol: MatanSolution | None = None, pi: LevelVector | None = None,
                             tail_tol: float = 1e-16) -> dict:
    """Split ``pi^(N)(k) - pi(k)`` into the main term and the remainder ``phi^(N)(k)``.

    main = (1/-sigma) [pi^(N)(0) ooB(N-1) e + sum_l pi^(N)(l) ooA(N-l-1) e] pi(k);
    ``phi`` is built from its four terms with ``E(n; k)`` blocks.
    """
    if not 0 <= k < N:
        raise ValueError(f"level k={k} must lie in [0, N-1]")
    if fspec is None:
        fspec = build_finite(spec, N)
    piN = solve_finite(fspec)
    if sol is None:
        sol = solve(spec, kmax=N + 2)
    if pi is None:
        pi = solve_infinite(spec, sol, min_level=N + 1)
    win = build_window(spec, N, k, sol=sol, pi=pi)
    m1 = spec.m1
    e1 = np.ones(m1)
    coef = piN[0] @ spec.double_tail_b(N - 1, strict=False) @ e1
    for l in range(1, N + 1):
        coef += piN[l] @ spec.double_tail_a(N - l - 1, strict=False) @ e1
    main = coef / (-win.sigma) * pi[k]

    ja = _jump_cutoff(spec, "A", tail_tol)
    jb = _jump_cutoff(spec, "B", tail_tol)
    EN = win.e(N, k)
    terms = np.zeros((4, EN.shape[1]))
    terms[0] = piN[0] @ (fspec.aug_b - spec.tail_b(N - 1)) @ EN
    for l in range(1, N + 1):
        terms[1] += piN[l] @ (fspec.aug_a[N - l] - spec.tail_a(N - l - 1)) @ EN
    for n in range(N + 1, N + max(ja, jb) + 1):
        dE = EN - win.e(n, k)
        if n <= jb:
            terms[2] += piN[0] @ spec.b(n) @ dE
        for l in range(max(1, n - ja), N + 1):
            terms[3] += piN[l] @ spec.a(n - l) @ dE
    phi = terms.sum(axis=0)
    lhs = piN[k] - pi[k]
    err = float(np.abs(main + phi - lhs).max())
    if err > 1e-9:
        raise InconsistencyError(f"decomposition misses pi^(N)(k) - pi(k) by {err:.3g}")
    return {"N": N, "k": k, "main": main, "phi": phi, "terms": terms, "error": err,
            "difference": lhs}
