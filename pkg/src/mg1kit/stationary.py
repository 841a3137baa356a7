"""Stationary distributions of infinite- and finite-level chains."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .chain import ChainSpec, FiniteChainSpec, assemble_finite, level_offsets
from .errors import ConvergenceError, InconsistencyError
from .matan import MatanSolution, closed_classes


@dataclass
class LevelVector:
    """Row vector indexed by (level, phase).

    ``levels[0]`` has length ``m0``; ``levels[k]`` (``k >= 1``) length ``m1``,
    stored as rows of ``body`` (shape ``(K, m1)`` for levels ``1..K``).
    ``tail0`` is the vector ``sum_{l >= 1} v(l)`` when known exactly (infinite
    chains); for finite-level vectors ``finite_n`` is the maximum level.
    """

    v0: np.ndarray
    body: np.ndarray
    tail0: np.ndarray | None = None
    finite_n: int | None = None
    tail_bound: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def truncation(self) -> int:
        return self.body.shape[0]

    def __getitem__(self, k: int) -> np.ndarray:
        if k == 0:
            return self.v0
        if k <= self.truncation:
            return self.body[k - 1]
        if self.finite_n is not None:
            return np.zeros(self.body.shape[1])
        raise IndexError(f"level {k} beyond computed truncation {self.truncation}")

    def level_masses(self) -> np.ndarray:
        return np.concatenate([[self.v0.sum()], self.body.sum(axis=1)])

    def tail_vector(self, n: int) -> np.ndarray:
        """``sum_{l > n} v(l)`` for ``n >= 0``."""
        m1 = self.body.shape[1]
        if self.finite_n is not None:
            if n >= self.finite_n:
                return np.zeros(m1)
            return self.body[n:].sum(axis=0)
        if self.tail0 is None:
            raise ValueError("tail vector unavailable without tail0")
        if n > self.truncation:
            raise IndexError(f"level {n} beyond computed truncation {self.truncation}")
        return self.tail0 - self.body[:n].sum(axis=0)

    def tail_mass(self, n: int) -> float:
        """``sum_{l > n} v(l) e``, computed as ``1 - sum_{l <= n} v(l) e``."""
        if self.finite_n is not None and n >= self.finite_n:
            return 0.0
        if n > self.truncation:
            raise IndexError(f"level {n} beyond computed truncation {self.truncation}")
        if self.tail0 is not None:
            return float(self.tail0.sum() - self.body[:n].sum())
        return float(1.0 - self.v0.sum() - self.body[:n].sum())

    def flat(self) -> np.ndarray:
        return np.concatenate([self.v0, self.body.ravel()])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["level", "phase", "value"])
        for i, x in enumerate(self.v0):
            w.writerow([0, i, repr(float(x))])
        for k, row in enumerate(self.body, start=1):
            for i, x in enumerate(row):
                w.writerow([k, i, repr(float(x))])
        return buf.getvalue()


def tail_mass(v: LevelVector, n: int):
    """Return ``(tail mass, tail vector)`` beyond level ``n``."""
    return v.tail_mass(n), v.tail_vector(n)


# ------------------------------------------------------------------ boundary
def censored_p0(spec: ChainSpec, sol: MatanSolution):
    """Level-0 censored matrix ``B(0) + R0(1) B(-1)`` and its stationary vector."""
    P0 = spec.b0 + sol.s0[1] @ sol.inv_phi0 @ spec.b_minus1
    r = float(np.abs(P0.sum(axis=1) - 1.0).max())
    if r > 1e-9:
        raise InconsistencyError(f"censored level-0 matrix is not stochastic (residual {r:.3g})")
    classes = closed_classes(P0)
    if len(classes) != 1:
        raise InconsistencyError(f"censored level-0 matrix has {len(classes)} closed classes")
    idx = classes[0]
    x, bad = kernels.gth(P0[np.ix_(idx, idx)])
    pit = np.zeros(spec.m0)
    pit[idx] = x
    return P0, pit


def boundary_pi0(spec: ChainSpec, sol: MatanSolution, u0: np.ndarray | None = None):
    """``(pi_tilde_0, pi(0))``.

    ``pi(0)`` is normalized by the mean return time to level 0:
    ``pi(0) e = 1 / (pi_tilde_0 u(0))``.
    """
    from .passage import u_zero

    _, pit = censored_p0(spec, sol)
    if u0 is None:
        u0 = u_zero(spec, sol)
    pi0 = pit / float(pit @ u0)
    return pit, pi0


def sum_s(spec: ChainSpec, sol: MatanSolution):
    """``X = sum_{k >= 1} S(k)`` and ``X0 = sum_{k >= 1} S0(k)``.

    From ``S(k) - S(k+1) G = A(k)`` and ``sum_k S(k) e = sum_m m A(m) e``,
    ``X (I - G + e g) = tail_a(0) - S(1) G + (sum_m m A(m) e) g``.
    """
    G, g = sol.g_matrix, sol.g_vec
    m1 = spec.m1
    Z = np.eye(m1) - G + np.outer(np.ones(m1), g)
    Zi = np.linalg.inv(Z)
    mean_a = spec.double_tail_a(-1, strict=False).sum(axis=1)
    mean_b = spec.double_tail_b(-1, strict=False).sum(axis=1)
    X = (spec.tail_a(0) - sol.s[1] @ G + np.outer(mean_a, g)) @ Zi
    X0 = (spec.tail_b(0) - sol.s0[1] @ G + np.outer(mean_b, g)) @ Zi
    return X, X0


def solve_infinite(spec: ChainSpec, sol: MatanSolution, mass_tol: float | None = None,
                   max_level: int = 200_000, min_level: int = 0) -> LevelVector:
    """Stationary distribution via the boundary vector and Ramaswami's recursion.

    Levels are generated until the exact remaining mass drops below
    ``mass_tol`` (default 1e-12 for finite support, 1e-10 otherwise) and at
    least ``min_level`` levels exist.  The remaining mass is exact: the total
    ``sum_{l >= 1} pi(l) = pi(0) Rhat0 (I - Rhat)^-1`` comes from the summed
    R-families, so tail masses are ``1 - sum_{l <= n} pi(l) e`` up to
    roundoff.
    """
    if mass_tol is None:
        mass_tol = 1e-12 if spec.finite_support else 1e-10
    pit, pi0 = boundary_pi0(spec, sol)
    X, X0 = sum_s(spec, sol)
    Rhat = X @ sol.inv_phi0
    Rhat0 = X0 @ sol.inv_phi0
    tail0 = pi0 @ Rhat0 @ np.linalg.inv(np.eye(spec.m1) - Rhat)
    total = pi0.sum() + tail0.sum()
    if abs(total - 1.0) > 1e-8:
        raise InconsistencyError(f"boundary normalization inconsistent: total mass {total:.12g}")
    K = max(64, min_level)
    while True:
        sol = sol.extend(K)
        c = np.zeros((K + 1, spec.m1))
        c[1:] = pi0 @ sol.r0[1:K + 1]
        if spec.finite_support:
            D = min(K, spec.ka)
        else:
            D = K
        pi = kernels.ramaswami(c, sol.r[: D + 1])
        body = pi[1:]
        rem = float(tail0.sum() - body.sum())
        if (rem < mass_tol and K >= min_level) or K >= max_level:
            break
        if not np.isfinite(rem) or rem > 1.0:
            raise ConvergenceError("Ramaswami recursion is not shrinking the tail mass")
        K = min(2 * K, max_level)
    note = "" if rem < mass_tol else f"tail mass {rem:.3g} above tolerance at level {K}"
    # the two normalizations agree to ~1e-12; dividing by their total keeps
    # pi(0) e + sum_l pi(l) e equal to 1 to roundoff
    return LevelVector(v0=pi0 / total, body=body / total, tail0=tail0 / total,
                       tail_bound=max(rem, 0.0) / total,
                       meta={"pi_tilde_0": pit, "note": note, "total": total})


# ------------------------------------------------------------------ finite
def stationary_gth(P: np.ndarray) -> np.ndarray:
    """Stationary vector of a stochastic matrix with a single closed class."""
    classes = closed_classes(P)
    if len(classes) != 1:
        raise InconsistencyError(
            f"transition matrix has {len(classes)} closed classes: "
            f"{[c.tolist() for c in classes]}")
    idx = classes[0]
    x, bad = kernels.gth(P[np.ix_(idx, idx)])
    if bad >= 0:
        raise InconsistencyError("GTH elimination hit a zero pivot")
    out = np.zeros(P.shape[0])
    out[idx] = x
    return out


def solve_finite(fspec: FiniteChainSpec, P: np.ndarray | None = None) -> LevelVector:
    """Stationary vector of the finite-level chain by GTH elimination."""
    if P is None:
        P = assemble_finite(fspec)
    x = stationary_gth(P)
    m0, m1 = fspec.base.m0, fspec.base.m1
    return LevelVector(v0=x[:m0], body=x[m0:].reshape(fspec.n, m1), finite_n=fspec.n,
                       meta={"residual": float(np.abs(x @ P - x).max())})


def stationarity_residual(spec: ChainSpec, pi: LevelVector, levels: int) -> float:
    """``max |pi P - pi|`` over columns at levels ``<= levels``.

    Needs ``pi`` on levels up to ``levels + 1`` (only one level down).
    """
    from .chain import assemble_p_window

    top = min(pi.truncation, levels + 1)
    win = assemble_p_window(spec, top)
    x = np.concatenate([pi.v0, pi.body[:top].ravel()])
    off = level_offsets(spec.m0, spec.m1, top)
    cols = off[levels + 1]
    return float(np.abs((x @ win.matrix)[:cols] - x[:cols]).max())
