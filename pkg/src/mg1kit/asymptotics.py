"""Subexponential tail models and the finite-level convergence diagnostics."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .chain import ChainSpec, build_finite, drift_parameters
from .errors import InapplicableError, ValidationError
from .matan import solve
from .stationary import LevelVector, solve_finite, solve_infinite


# ---------------------------------------------------------------------- tail models
@dataclass
class TailModel:
    """Tail ``Fbar(k) = P(X > k)`` of a distribution on the nonnegative integers.

    ``check`` validates positivity and monotonicity on ``0..n_check``.
    """

    sf_func: Callable
    name: str = "F"
    n_check: int = 4096
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        k = np.arange(self.n_check + 1)
        v = np.asarray(self.sf_func(k), dtype=float)
        if not (v > 0).all():
            raise ValidationError(f"tail {self.name} must stay positive "
                                  f"(first zero at k={int(np.argmin(v > 0))})")
        if (np.diff(v) > 1e-15 * v[:-1]).any() or v[0] > 1.0 + 1e-15:
            raise ValidationError(f"tail {self.name} must be nonincreasing and at most 1")

    def sf(self, k):
        return np.asarray(self.sf_func(np.asarray(k)), dtype=float)

    def pmf(self, n: int) -> np.ndarray:
        """``P(X = k)`` for ``k = 0..n``."""
        s = np.concatenate([[1.0], self.sf(np.arange(n + 1))])
        return -np.diff(s)

    @property
    def summable(self) -> bool:
        """Numerical test of ``sum_k Fbar(k) < inf`` via the tail's log-log slope."""
        k = np.array([2.0 ** 12, 2.0 ** 14])
        s = self.sf(k.astype(int))
        slope = np.log(s[1] / s[0]) / np.log(k[1] / k[0])
        return bool(slope < -1.0)

    def long_tail_evidence(self, delta: float = 0.01, n_max: int = 4000) -> dict:
        """Smallest ``k0`` with ``Fbar(k+1)/Fbar(k) >= 1 - delta`` on ``[k0, n_max]``."""
        k = np.arange(n_max + 1)
        r = self.sf(k + 1) / self.sf(k)
        bad = np.nonzero(r < 1 - delta)[0]
        k0 = 0 if len(bad) == 0 else int(bad[-1] + 1)
        return {"k0": k0 if k0 <= n_max else None, "delta": delta,
                "ratio_at_end": float(r[-1])}

    @classmethod
    def power(cls, alpha: float) -> "TailModel":
        """``Fbar(k) = (1 + k)**(-alpha)``."""
        return cls(lambda k: (1.0 + np.asarray(k, dtype=float)) ** (-alpha),
                   name=f"power({alpha:g})", params={"kind": "power", "alpha": alpha})

    @classmethod
    def geometric(cls, r: float) -> "TailModel":
        return cls(lambda k: r ** (np.asarray(k, dtype=float) + 1.0), name=f"geometric({r:g})",
                   n_check=min(4096, int(600 / max(-np.log(r), 1e-3))),
                   params={"kind": "geometric", "r": r})

    @classmethod
    def chain_double_tail(cls, spec: ChainSpec) -> "TailModel":
        """``Fbar(N) = ooA(N) e / ooA(0) e`` (summed over phases)."""
        a0 = float(spec.double_tail_a(0, strict=False).sum())
        if a0 <= 0:
            raise ValidationError("chain has no upward tail beyond level 1")

        def f(k):
            k = np.asarray(k)
            out = np.array([float(spec.double_tail_a(int(j), strict=False).sum()) / a0
                            if j >= 0 else 1.0 for j in k.ravel()])
            return out.reshape(k.shape)

        return cls(f, name="chain-double-tail", n_check=256, params={"kind": "chain"})

    @classmethod
    def equilibrium_service(cls, mp, svc) -> "TailModel":
        """``Fbar(k) = P(S_e > k / lambda)`` for a MAP/G/1 queue."""
        lam = mp.lam
        return cls(lambda k: np.asarray(svc.equilibrium_tail(np.asarray(k, dtype=float) / lam)),
                   name=f"equilibrium({svc.kind})", params={"kind": "equilibrium"})

    @classmethod
    def from_dict(cls, d: dict) -> "TailModel":
        kind = d.get("kind", "power")
        if kind == "power":
            return cls.power(float(d["alpha"]))
        if kind == "geometric":
            return cls.geometric(float(d["r"]))
        raise ValidationError(f"unknown tail model {kind!r}")


def subexponential_evidence(F: TailModel, n_max: int) -> np.ndarray:
    """``r(k) = (1 - F*2(k)) / (1 - F(k))`` for ``k = 0..n_max``.

    Uses ``P(X + Y > k) = Fbar(k) + sum_{l <= k} p(l) Fbar(k - l)``, which
    avoids forming ``1 - F*2`` by subtraction.
    """
    p = F.pmf(n_max)
    s = F.sf(np.arange(n_max + 1))
    conv = np.convolve(p, s)[: n_max + 1]
    return (s + conv) / s


# ---------------------------------------------------------------------- constants
@dataclass
class AsymptoticConstants:
    c_a: np.ndarray
    c_b: np.ndarray
    grid: np.ndarray
    ratios_a: np.ndarray
    ratios_b: np.ndarray
    violated: bool
    note: str = ""

    @property
    def nonzero(self) -> bool:
        return bool(np.any(self.c_a > 0) or np.any(self.c_b > 0))

    def tail_limit(self, spec: ChainSpec, pi: LevelVector) -> np.ndarray:
        """``(pi(0) c_B + pibar(0) c_A) / (-sigma) * varpi``."""
        varpi, _, sigma = drift_parameters(spec)
        coef = float(pi[0] @ self.c_b + pi.tail_vector(0) @ self.c_a)
        return coef / (-sigma) * varpi


def _plateau(r: np.ndarray) -> np.ndarray:
    """Aitken extrapolation of the last three grid ratios, per phase."""
    if len(r) < 3:
        return r[-1]
    r1, r2, r3 = r[-3], r[-2], r[-1]
    den = (r3 - r2) - (r2 - r1)
    out = r3.copy()
    ok = np.abs(den) > 1e-14 * np.maximum(np.abs(r3), 1e-300)
    est = r3 - (r3 - r2) ** 2 / np.where(ok, den, 1.0)
    # accept only estimates on the side the sequence is moving towards
    good = ok & (np.sign(est - r3) == np.sign(r3 - r2)) & (est > 0)
    out[good] = est[good]
    return out


def fit_constants(spec: ChainSpec, F: TailModel, N_grid: Sequence[int]) -> AsymptoticConstants:
    """Ratios ``ooA(N) e / Fbar(N)`` and ``ooB(N) e / Fbar(N)`` on the grid and
    their plateau estimates ``c_A``, ``c_B``."""
    grid = np.asarray(sorted(int(n) for n in N_grid))
    if len(grid) == 0:
        raise ValidationError("empty N grid")
    ra, rb = [], []
    for N in grid:
        f = float(F.sf(N))
        ra.append(spec.double_tail_a(int(N), strict=False).sum(axis=1) / f)
        rb.append(spec.double_tail_b(int(N), strict=False).sum(axis=1) / f)
    ra, rb = np.array(ra), np.array(rb)
    notes = []
    violated = False
    consts = []
    for name, r in (("A", ra), ("B", rb)):
        scale = max(float(np.abs(r).max()), 1e-300)
        if float(np.abs(r[-1]).max()) <= 1e-12 * scale or not np.any(r):
            consts.append(np.zeros(r.shape[1]))
            notes.append(f"c_{name} = 0 (tail lighter than F)")
            continue
        growth = r[-1] / np.where(r[-2] > 0, r[-2], np.inf) if len(r) > 1 else np.ones(r.shape[1])
        if len(r) > 2 and (np.diff(r, axis=0)[-2:] > 0).all() and (growth > 1.2).any():
            violated = True
            notes.append(f"ratios for {name} keep growing; tail heavier than F")
        consts.append(np.maximum(_plateau(r), 0.0))
    c_a, c_b = consts
    if not (np.any(c_a > 0) or np.any(c_b > 0)):
        violated = True
        notes.append("c_A and c_B both vanish")
    return AsymptoticConstants(c_a, c_b, grid, ra, rb, violated, "; ".join(notes))


# ---------------------------------------------------------------------- diagnostics
def trend_decreasing(values: Sequence[float], tolerate: int = 1) -> bool:
    """True if the last half of ``values`` decreases with at most ``tolerate`` rises."""
    v = np.asarray(values, dtype=float)
    tail = v[(len(v) - 1) // 2:]
    rises = int((np.diff(tail) > 0).sum())
    return rises <= tolerate


def tail_ratio(spec: ChainSpec, pi: LevelVector, F: TailModel, N_grid: Sequence[int],
                   constants: AsymptoticConstants | None = None) -> dict:
    """``pibar(N) / Fbar(N)`` against the predicted limit vector."""
    grid = np.asarray(sorted(int(n) for n in N_grid))
    if constants is None:
        constants = fit_constants(spec, F, grid)
    if not constants.nonzero:
        raise InapplicableError("tail constants vanish; the heavy-tail limit does not apply")
    if grid[-1] > pi.truncation:
        raise ValidationError(f"pi is truncated at level {pi.truncation} < {grid[-1]}")
    pred = constants.tail_limit(spec, pi)
    ratios = np.array([pi.tail_vector(int(N)) / float(F.sf(N)) for N in grid])
    rel = np.abs(ratios.sum(axis=1) / pred.sum() - 1.0)
    last5 = rel[-5:]
    return {"grid": grid, "ratios": ratios, "predicted": pred, "rel_error": rel,
            "monotone_last5": bool((np.diff(last5) <= 0).all())}


def last_level_ratio(spec: ChainSpec, F: TailModel, N_grid: Sequence[int],
                  scheme: str = "LastColumn") -> dict:
    """``pi^(N)(N) e / Fbar(N)``; expected to vanish as ``N`` grows.

    ``N = 1`` is computed but left out of the trend test.
    """
    grid = np.asarray(sorted(int(n) for n in N_grid))
    vals = np.array([solve_finite(build_finite(spec, int(N), scheme))[int(N)].sum()
                     / float(F.sf(N)) for N in grid])
    trend = vals[grid > 1]
    return {"grid": grid, "ratios": vals,
            "decreasing": bool(len(trend) < 2 or trend_decreasing(trend, tolerate=0))}


@dataclass
class StudyResult:
    rows: list
    summary: dict

    def to_csv(self) -> str:
        lines = ["N,k,phase,r_N,pibar_N,Fbar_N"]
        for r in self.rows:
            lines.append(",".join(repr(x) if isinstance(x, float) else str(x) for x in r))
        return "\n".join(lines) + "\n"


def convergence_study(spec: ChainSpec, F: TailModel | None, k_list: Sequence[int],
                      N_grid: Sequence[int], pi: LevelVector | None = None, sol=None,
                      workers: int | None = None, threshold: float = 0.35) -> StudyResult:
    """Table of ``r_N(k) = (pi^(N)(k) - pi(k)) / (pibar(N) e * pi(k))``.

    Pass rule per ``k``: ``max_phase |r_N(k) - 1|`` decreases over the last
    half of the grid (one rise tolerated) and is below ``threshold`` at the
    largest ``N``.  Phases with ``pi(k)`` below 1e-13 are skipped.
    """
    grid = sorted(int(n) for n in N_grid)
    if not grid:
        raise ValidationError("empty N grid")
    if sol is None:
        sol = solve(spec, kmax=8)
    if pi is None:
        pi = solve_infinite(spec, sol, min_level=max(grid) + 1)
    status = "ok"
    notes = []
    if F is not None:
        try:
            cons = fit_constants(spec, F, grid)
            if cons.violated or not cons.nonzero:
                status = "assumption-violated"
                notes.append(cons.note)
        except (ValidationError, ArithmeticError) as exc:
            status = "assumption-violated"
            notes.append(str(exc))
    else:
        status = "assumption-unchecked"

    def one(N):
        piN = solve_finite(build_finite(spec, N))
        return N, piN

    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = dict(ex.map(one, grid))
    else:
        results = dict(map(one, grid))
    rows = []
    dev = {k: [] for k in k_list}
    for N in grid:
        piN = results[N]
        tm = pi.tail_mass(N)
        fb = float(F.sf(N)) if F is not None else float("nan")
        for k in k_list:
            pk = pi[k]
            worst = 0.0
            for i, p in enumerate(pk):
                if p < 1e-13:
                    notes.append(f"k={k} phase {i} skipped: pi below 1e-13")
                    continue
                r = float((piN[k][i] - p) / (tm * p))
                rows.append((N, k, i, r, tm, fb))
                worst = max(worst, abs(r - 1.0))
            dev[k].append(worst)
    per_k = {}
    for k in k_list:
        d = dev[k]
        per_k[int(k)] = {"deviation": d, "decreasing": trend_decreasing(d, 1),
                         "final": d[-1], "pass": bool(trend_decreasing(d, 1) and d[-1] < threshold)}
    summary = {"status": status, "notes": sorted(set(notes)), "grid": grid,
               "k_list": [int(k) for k in k_list], "per_k": per_k,
               "pass": all(v["pass"] for v in per_k.values())}
    return StudyResult(rows, summary)
