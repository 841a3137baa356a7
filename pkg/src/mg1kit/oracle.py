"""Brute-force reference computations used to cross-check the solvers.

Nothing here calls into the G-matrix solver or the production stationary
routines; the only shared pieces are the chain's block accessors and the
simulation kernel.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.sparse import csgraph

from . import kernels
from .chain import ChainSpec, level_offsets
from .errors import ConvergenceError, InconsistencyError, ValidationError


# ---------------------------------------------------------------------- stationary vectors
def gth(P) -> np.ndarray:
    """Stationary vector by Grassmann-Taksar-Heyman elimination (plain numpy)."""
    P = np.array(P, dtype=float)
    n = P.shape[0]
    if P.shape != (n, n):
        raise ValidationError("P must be square")
    ncomp, labels = csgraph.connected_components(P > 0, directed=True, connection="strong")
    if ncomp > 1:
        # closed classes are components with no edges leaving them
        closed = [c for c in range(ncomp)
                  if not (P[np.ix_(labels == c, labels != c)] > 0).any()]
        if len(closed) > 1:
            raise InconsistencyError(f"{len(closed)} closed classes; stationary vector not unique")
    A = P.copy()
    for k in range(n - 1, 0, -1):
        s = A[k, :k].sum()
        if s <= 0:
            raise InconsistencyError("GTH pivot vanished; chain is reducible")
        A[:k, k] /= s
        A[:k, :k] += np.outer(A[:k, k], A[k, :k])
    x = np.zeros(n)
    x[0] = 1.0
    for k in range(1, n):
        x[k] = x[:k] @ A[:k, k]
    return x / x.sum()


def lu_stationary(P) -> np.ndarray:
    """Stationary vector from ``x (I - P) = 0`` with one equation replaced by ``x e = 1``."""
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    M = (np.eye(n) - P).T
    M[-1] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    return np.linalg.solve(M, rhs)


def truncated_chain(spec: ChainSpec, T: int) -> np.ndarray:
    """Transition matrix on levels ``0..T`` with overflow lumped into level ``T``."""
    m0, m1 = spec.m0, spec.m1
    off = level_offsets(m0, m1, T)
    P = np.zeros((off[-1], off[-1]))
    P[:m0, :m0] = spec.b0
    for j in range(1, T):
        P[:m0, off[j]:off[j + 1]] = spec.b(j)
    P[:m0, off[T]:] = spec.tail_b(T - 1)
    for k in range(1, T + 1):
        r = slice(off[k], off[k + 1])
        if k == 1:
            P[r, :m0] = spec.b_minus1
        else:
            P[r, off[k - 1]:off[k]] = spec.a(-1)
        for lvl in range(k, T):
            P[r, off[lvl]:off[lvl + 1]] = spec.a(lvl - k)
        P[r, off[T]:] += spec.tail_a(T - k - 1)
    return P


# ---------------------------------------------------------------------- passage times
def first_passage_solve(spec: ChainSpec, trunc_level: int, targets=None,
                        leak_tol: float = 1e-10) -> dict:
    """Mean hitting times of level 0 on the chain truncated at ``trunc_level``.

    Solves ``u = e + Q u`` on levels ``1..T`` (``Q`` kills the chain on
    entering level 0) and sets ``u(0) = e + sum_m B(m) u(m)``.  The leak is
    the probability of reaching level ``T`` before level 0 from the highest
    target level; it must stay below ``leak_tol``.
    """
    T = int(trunc_level)
    targets = list(range(0, 11)) if targets is None else list(targets)
    kmax = max(targets)
    if T <= kmax + 1:
        raise ValidationError("truncation level must exceed the target levels")
    m0, m1 = spec.m0, spec.m1
    P = truncated_chain(spec, T)
    Q = P[m0:, m0:]
    n = Q.shape[0]
    u_body = np.linalg.solve(np.eye(n) - Q, np.ones(n)).reshape(T, m1)
    # probability of hitting level T before 0
    Qh = Q.copy()
    top = slice((T - 1) * m1, T * m1)
    Qh[top, :] = 0.0
    rhs = np.zeros(n)
    rhs[top] = 1.0
    hit = np.linalg.solve(np.eye(n) - Qh, rhs).reshape(T, m1)
    leak = float(hit[max(kmax, 1) - 1].max())
    if leak > leak_tol:
        raise ConvergenceError(f"truncation leak {leak:.3g} exceeds {leak_tol:.1g}; "
                               f"raise the truncation level", residual=leak)
    u0 = 1.0 + P[:m0, m0:] @ u_body.ravel()
    out = {0: u0}
    for k in targets:
        if k >= 1:
            out[k] = u_body[k - 1]
    return {"u": out, "leak": leak, "T": T}


# ---------------------------------------------------------------------- deviation matrix
def h_definitional(spec: ChainSpec, trunc_level: int, ref_state=(0, 0), window: int = 6) -> dict:
    """``H(s; t) = E_s[visits to t before T_ref] - pi(t) E_s[T_ref]`` on a truncated chain.

    Returns the window of ``H``, the matching window of ``D = (I - e pi) H``
    and ``pi`` of the truncated chain; all indexed by flattened states of
    levels ``0..window``.
    """
    T = int(trunc_level)
    P = truncated_chain(spec, T)
    n = P.shape[0]
    off = level_offsets(spec.m0, spec.m1, T)
    ref = int(off[ref_state[0]] + ref_state[1])
    pi = gth(P)
    Q = P.copy()
    Q[:, ref] = 0.0
    Z = np.linalg.inv(np.eye(n) - Q)
    t_ref = Z.sum(axis=1)
    H = Z - np.outer(t_ref, pi)
    D = H - np.outer(np.ones(n), pi @ H)
    w = int(off[window + 1])
    poisson = (np.eye(n) - P) @ H - (np.eye(n) - np.outer(np.ones(n), pi))
    interior = int(off[max(T - 2 * window, window + 1)])
    return {"H": H[:w, :w], "D": D[:w, :w], "pi": pi, "offsets": off[: window + 2],
            "poisson_residual": float(np.abs(poisson[:interior]).max())}


def power_partial_sums(P, pi, n_max: int, cesaro: bool = False, osc_tol: float = 1e-6):
    """``sum_{n=0}^{n_max} (P^n - e pi)`` by binary doubling.

    A chain whose powers have not settled near ``e pi`` by ``n_max`` is
    treated as periodic and rejected unless ``cesaro=True``, which returns
    the Cesaro mean of the partial sums instead (direct summation).
    """
    P = np.asarray(P, dtype=float)
    pi = np.asarray(pi, dtype=float)
    n = P.shape[0]
    E = np.outer(np.ones(n), pi)
    if cesaro:
        out = np.zeros((n, n))
        Pj = np.eye(n)
        for j in range(n_max + 1):
            out += (1.0 - j / (n_max + 1.0)) * (Pj - E)
            Pj = Pj @ P
        return out
    count = n_max + 1
    # S(a) = sum_{j<a} P^j ; S(a + b) = S(a) + P^a S(b)
    S_res, P_res = np.zeros((n, n)), np.eye(n)
    S_pow, P_pow = np.eye(n), P.copy()       # block length 1
    while count:
        if count & 1:
            S_res = S_res + P_res @ S_pow
            P_res = P_res @ P_pow
        S_pow = S_pow + P_pow @ S_pow
        P_pow = P_pow @ P_pow
        count >>= 1
    gap = float(np.abs(P_res - E).max())
    if gap > osc_tol:
        raise ConvergenceError(f"P^n is still {gap:.3g} from e pi at n={n_max + 1}; the chain "
                               f"may be periodic, use cesaro=True", residual=gap)
    return S_res - (n_max + 1) * E


# ---------------------------------------------------------------------- Monte Carlo
def _map_tables(mp):
    L0, L1 = mp.lambda0, mp.lambda1
    m = mp.m
    rates = -np.diag(L0).copy()
    cum = np.zeros((m, 2 * m))
    for i in range(m):
        row = np.concatenate([L0[i], L1[i]]) / rates[i]
        row[i] = 0.0
        cum[i] = np.cumsum(row)
        cum[i, -1] = 1.0
    arrival = np.concatenate([np.zeros(m, dtype=np.int64), np.ones(m, dtype=np.int64)])
    return cum, rates, arrival


def mc_queue(mp, svc, N: int, arrivals: int = 10**7, seed: int = 42, streams: int = 8,
             batches_per_stream: int = 25, workers: int | None = None) -> dict:
    """Loss fraction of the MAP/G/1/N+1 queue by simulation.

    Each stream gets its own Philox generator spawned from ``seed`` and
    starts empty; its first batch is discarded as warm-up.  The standard
    error comes from batch means; the binomial value is reported too.
    """
    if arrivals < 10**5:
        raise ValidationError("use at least 1e5 arrivals")
    if mp.lam <= 0:
        raise ValidationError("arrival rate must be positive")
    cum, rates, arr = _map_tables(mp)
    kind, params, ph_cum, ph_rates = svc.sampler()
    # counted arrivals per stream, plus one warm-up batch of the same size
    batch = -(-arrivals // (streams * batches_per_stream))
    children = np.random.SeedSequence(seed).spawn(streams)

    def run(i):
        bg = np.random.Philox(children[i])
        phase0 = int(np.searchsorted(np.cumsum(mp.varpi), np.random.Generator(
            np.random.Philox(children[i].spawn(1)[0])).random()))
        phase0 = min(phase0, mp.m - 1)
        a, l = kernels.simulate_queue(bg, cum, rates, arr, phase0, N + 1,
                                      batch * (batches_per_stream + 1), batches_per_stream + 1, kind, params, ph_cum, ph_rates)
        return np.asarray(a)[1:], np.asarray(l)[1:]

    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            res = list(ex.map(run, range(streams)))
    else:
        res = [run(i) for i in range(streams)]
    a = np.concatenate([r[0] for r in res]).astype(float)
    lo = np.concatenate([r[1] for r in res]).astype(float)
    p = lo.sum() / a.sum()
    ratios = lo / a
    se = float(ratios.std(ddof=1) / np.sqrt(len(ratios)))
    return {"loss": float(p), "se": se, "se_binomial": float(np.sqrt(p * (1 - p) / a.sum())),
            "arrivals": int(a.sum()), "batches": len(ratios), "seed": seed}


def mc_occupation(spec: ChainSpec, k_list, n_paths: int = 20000, seed: int = 7,
                  start_level: int = 1, phase: int = 0, tail_tol: float = 1e-15,
                  max_steps: int = 100000) -> dict:
    """Occupation estimate of ``R(k)`` row sums.

    Starting from ``(start_level, phase)``, counts visits to level
    ``start_level + k`` that happen before the chain first drops below
    ``start_level + k`` (after time 0).  Returns means and standard errors.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    m = spec.m1
    J = spec.tail_cutoff(tail_tol) if spec.tail is not None else spec.ka
    blocks = spec.a_blocks(-1, J)                       # jumps -1..J
    flat = blocks.transpose(1, 0, 2).reshape(m, -1)     # row i: (jump, phase)
    cum = np.cumsum(flat, axis=1)
    cum /= cum[:, -1:]
    k_list = list(k_list)
    targets = np.array([start_level + k for k in k_list])
    counts = np.zeros((n_paths, len(k_list)))
    for p in range(n_paths):
        lvl, ph = start_level, phase
        low = np.inf
        for _ in range(max_steps):
            idx = int(np.searchsorted(cum[ph], rng.random(), side="right"))
            jump, ph = divmod(min(idx, flat.shape[1] - 1), m)
            lvl += jump - 1
            low = min(low, lvl)
            if lvl <= start_level:
                break
            hit = (targets == lvl) & (low >= targets)
            counts[p, hit] += 1
    mean = counts.mean(axis=0)
    se = counts.std(axis=0, ddof=1) / np.sqrt(n_paths)
    return {"k": k_list, "mean": mean, "se": se}
