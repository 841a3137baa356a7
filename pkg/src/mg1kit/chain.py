"""M/G/1-type chain definitions, validation, tails and finite truncations.

Block conventions
-----------------
Level 0 has ``m0`` phases, levels ``k >= 1`` have ``m1`` phases.  From a
level ``k >= 1`` the chain moves to level ``k + j`` with block ``A(j)``,
``j >= -1``; from level 0 it moves to level ``j >= 0`` with ``B(j)``; and
``B(-1)`` (``m1 x m0``) leads from level 1 to level 0.

A :class:`ChainSpec` stores an explicit head ``A(-1), ..., A(KA)`` and
``B(1), ..., B(KB)``; beyond the head the blocks are either zero
(finite support) or ``w(k) C`` for a :class:`~mg1kit.tails.TailWeights`
family ``w`` and a fixed matrix profile ``C`` (analytic tail).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csgraph

from . import kernels
from .errors import DivergenceError, ValidationError
from .tails import TailWeights

BUILD_TOL = 1e-12
INPUT_TOL = 1e-9


def _frozen(x, ndim):
    a = np.array(x, dtype=float)
    if a.ndim != ndim:
        raise ValidationError(f"expected a {ndim}-d array, got shape {a.shape}")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class AnalyticTail:
    """``A(k) = weights_a.w(k) profile_a`` for ``k > KA`` and likewise for B."""

    weights_a: TailWeights
    profile_a: np.ndarray
    weights_b: TailWeights
    profile_b: np.ndarray


class ChainSpec:
    """Infinite-level M/G/1-type chain.

    Parameters
    ----------
    a_head : array_like, shape (KA + 2, m1, m1)
        ``a_head[k + 1] = A(k)`` for ``k = -1, ..., KA``.
    b_minus1 : array_like, shape (m1, m0)
    b0 : array_like, shape (m0, m0)
    b_head : array_like, shape (KB, m0, m1)
        ``b_head[k - 1] = B(k)`` for ``k = 1, ..., KB``; may be empty.
    tail : AnalyticTail, optional
        Continuation beyond the head.  ``None`` means finite support.
    name : str
    """

    def __init__(self, a_head, b_minus1, b0, b_head=None, tail: AnalyticTail | None = None,
                 name: str = "chain"):
        self.a_head = _frozen(a_head, 3)
        m1 = self.a_head.shape[1]
        self.b_minus1 = _frozen(b_minus1, 2)
        self.b0 = _frozen(b0, 2)
        m0 = self.b0.shape[0]
        if b_head is None or len(b_head) == 0:
            b_head = np.zeros((0, m0, m1))
        self.b_head = _frozen(b_head, 3)
        self.m0, self.m1 = m0, m1
        self.tail = tail
        self.name = name
        self._check_shapes()
        if tail is not None:
            object.__setattr__(tail, "profile_a", _frozen(tail.profile_a, 2))
            object.__setattr__(tail, "profile_b", _frozen(tail.profile_b, 2))
        # suffix sums of the heads: sa[i] = sum_{j >= i-1} A(j)
        self._a_suffix = np.cumsum(self.a_head[::-1], axis=0)[::-1]
        self._b_suffix = (np.cumsum(self.b_head[::-1], axis=0)[::-1]
                          if self.kb > 0 else np.zeros((0, m0, m1)))

    def _check_shapes(self):
        m0, m1 = self.m0, self.m1
        if self.a_head.shape[0] < 2 or self.a_head.shape[1:] != (m1, m1):
            raise ValidationError("a_head must hold at least A(-1), A(0) as m1 x m1 blocks")
        if self.b_minus1.shape != (m1, m0):
            raise ValidationError(f"B(-1) must be {m1}x{m0}, got {self.b_minus1.shape}")
        if self.b0.shape != (m0, m0):
            raise ValidationError(f"B(0) must be {m0}x{m0}")
        if self.b_head.shape[1:] != (m0, m1):
            raise ValidationError(f"B(k), k>=1, must be {m0}x{m1}")
        if self.tail is not None:
            if np.shape(self.tail.profile_a) != (m1, m1):
                raise ValidationError("analytic tail profile for A must be m1 x m1")
            if np.shape(self.tail.profile_b) != (m0, m1):
                raise ValidationError("analytic tail profile for B must be m0 x m1")

    # ------------------------------------------------------------------ blocks
    @property
    def ka(self) -> int:
        """Last explicit A index."""
        return self.a_head.shape[0] - 2

    @property
    def kb(self) -> int:
        """Last explicit B index (0 if only B(0))."""
        return self.b_head.shape[0]

    @property
    def finite_support(self) -> bool:
        return self.tail is None

    @property
    def max_jump(self) -> int:
        """Largest upward jump with nonzero probability (``None`` if unbounded)."""
        if self.tail is not None:
            return None
        return max(self.ka, self.kb)

    def a(self, k: int) -> np.ndarray:
        if k < -1:
            return np.zeros((self.m1, self.m1))
        if k <= self.ka:
            return self.a_head[k + 1]
        if self.tail is None:
            return np.zeros((self.m1, self.m1))
        return float(self.tail.weights_a.w(k)) * self.tail.profile_a

    def b(self, k: int) -> np.ndarray:
        if k == -1:
            return self.b_minus1
        if k == 0:
            return self.b0
        if k < -1:
            raise ValueError("B(k) is defined for k >= -1")
        if k <= self.kb:
            return self.b_head[k - 1]
        if self.tail is None:
            return np.zeros((self.m0, self.m1))
        return float(self.tail.weights_b.w(k)) * self.tail.profile_b

    def a_blocks(self, k_lo: int, k_hi: int) -> np.ndarray:
        """Stack of ``A(k)`` for ``k_lo <= k <= k_hi``."""
        ks = np.arange(k_lo, k_hi + 1)
        out = np.zeros((len(ks), self.m1, self.m1))
        inside = (ks >= -1) & (ks <= self.ka)
        out[inside] = self.a_head[ks[inside] + 1]
        beyond = ks > self.ka
        if self.tail is not None and beyond.any():
            w = self.tail.weights_a.w(ks[beyond])
            out[beyond] = w[:, None, None] * self.tail.profile_a
        return out

    def b_blocks(self, k_lo: int, k_hi: int) -> np.ndarray:
        """Stack of ``B(k)`` for ``1 <= k_lo <= k <= k_hi``."""
        if k_lo < 1:
            raise ValueError("b_blocks covers k >= 1 only")
        ks = np.arange(k_lo, k_hi + 1)
        out = np.zeros((len(ks), self.m0, self.m1))
        inside = ks <= self.kb
        out[inside] = self.b_head[ks[inside] - 1]
        beyond = ~inside
        if self.tail is not None and beyond.any():
            w = self.tail.weights_b.w(ks[beyond])
            out[beyond] = w[:, None, None] * self.tail.profile_b
        return out

    # ------------------------------------------------------------------ tails
    def tail_a(self, k: int) -> np.ndarray:
        """``sum_{l > k} A(l)`` for ``k >= -2``."""
        if k < -2:
            raise ValueError("tail_a is defined for k >= -2")
        out = np.zeros((self.m1, self.m1))
        if k + 1 <= self.ka:
            out += self._a_suffix[k + 2]
        if self.tail is not None:
            out += float(self.tail.weights_a.sf(max(k, self.ka))) * self.tail.profile_a
        return out

    def tail_b(self, k: int) -> np.ndarray:
        """``sum_{l > k} B(l)`` for ``k >= 0`` (blocks ``B(l)``, ``l >= 1``)."""
        if k < 0:
            raise ValueError("tail_b is defined for k >= 0")
        out = np.zeros((self.m0, self.m1))
        if k + 1 <= self.kb:
            out += self._b_suffix[k]
        if self.tail is not None:
            out += float(self.tail.weights_b.sf(max(k, self.kb))) * self.tail.profile_b
        return out

    def _weighted_a(self, shift: int, p: int, k: int):
        """``sum_{l > k} (l - shift)**p A(l)`` for p in {0, 1}."""
        out = np.zeros((self.m1, self.m1))
        lo = max(k + 1, -1)
        if lo <= self.ka:
            ls = np.arange(lo, self.ka + 1)
            wts = (ls - shift).astype(float) ** p
            out += np.tensordot(wts, self.a_head[ls + 1], axes=1)
        if self.tail is not None:
            wa = self.tail.weights_a
            j = max(k, self.ka)
            s = wa.moment_sf(j, 0) if p == 0 else wa.moment_sf(j, 1) - shift * wa.moment_sf(j, 0)
            out += float(s) * self.tail.profile_a
        return out

    def double_tail_a(self, n: int, strict: bool = True) -> np.ndarray:
        """``sum_{m > n} tail_a(m) = sum_{j > n+1} (j - n - 1) A(j)`` for ``n >= -1``.

        With ``strict=True`` an analytic tail without a finite second moment
        raises :class:`DivergenceError` (the quantity is only used under
        that moment condition); ``strict=False`` returns the sum whenever
        the first moment is finite.
        """
        if n < -1:
            raise ValueError("double_tail_a is defined for n >= -1")
        self._check_moment("A", 2 if strict else 1)
        return self._weighted_a(n + 1, 1, n + 1)

    def double_tail_b(self, n: int, strict: bool = True) -> np.ndarray:
        """Mirror of :meth:`double_tail_a` for the boundary blocks ``B(j)``, ``j >= 1``."""
        if n < -1:
            raise ValueError("double_tail_b is defined for n >= -1")
        self._check_moment("B", 2 if strict else 1)
        out = np.zeros((self.m0, self.m1))
        lo = max(n + 2, 1)
        if lo <= self.kb:
            ls = np.arange(lo, self.kb + 1)
            out += np.tensordot((ls - n - 1).astype(float), self.b_head[ls - 1], axes=1)
        if self.tail is not None:
            wb = self.tail.weights_b
            j = max(n + 1, self.kb)
            s = wb.moment_sf(j, 1) - (n + 1) * wb.moment_sf(j, 0)
            out += float(s) * self.tail.profile_b
        return out

    def _check_moment(self, which, p):
        if self.tail is None:
            return
        wts = self.tail.weights_a if which == "A" else self.tail.weights_b
        prof = self.tail.profile_a if which == "A" else self.tail.profile_b
        if not np.any(prof) or wts.moment_finite(p):
            return
        raise DivergenceError(f"{which}-blocks have an infinite moment of order {p}")

    def moment_a(self, p: int) -> np.ndarray:
        """``sum_{k >= -1} k**p A(k)`` for p in {0, 1, 2}."""
        ks = np.arange(-1, self.ka + 1).astype(float)
        out = np.tensordot(ks ** p, self.a_head, axes=1)
        if self.tail is not None and np.any(self.tail.profile_a):
            self._check_moment("A", p)
            out = out + float(self.tail.weights_a.moment_sf(self.ka, p)) * self.tail.profile_a
        return out

    def moment_b(self, p: int) -> np.ndarray:
        """``sum_{k >= 1} k**p B(k)`` for p in {0, 1, 2}."""
        out = np.zeros((self.m0, self.m1))
        if self.kb:
            ks = np.arange(1, self.kb + 1).astype(float)
            out += np.tensordot(ks ** p, self.b_head, axes=1)
        if self.tail is not None and np.any(self.tail.profile_b):
            self._check_moment("B", p)
            out = out + float(self.tail.weights_b.moment_sf(self.kb, p)) * self.tail.profile_b
        return out

    def tail_cutoff(self, tol: float, which: str = "A", start: int | None = None) -> int:
        """Smallest ``K`` with ``||tail(K) e||_inf < tol`` (``K`` >= head end)."""
        head = self.ka if which == "A" else self.kb
        if self.tail is None:
            return head
        wts = self.tail.weights_a if which == "A" else self.tail.weights_b
        prof = self.tail.profile_a if which == "A" else self.tail.profile_b
        scale = np.abs(prof).sum(axis=1).max()
        if scale == 0.0:
            return head
        k = max(head, start or head, 1)
        while float(wts.sf(k)) * scale >= tol:
            k *= 2
        lo, hi = k // 2, k
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if float(wts.sf(mid)) * scale >= tol:
                lo = mid
            else:
                hi = mid
        return max(hi, head)

    # ------------------------------------------------------------------ misc
    @property
    def a_sum(self) -> np.ndarray:
        """``A = sum_k A(k)``."""
        return self.tail_a(-2)

    @property
    def beta_a(self) -> np.ndarray:
        """Mean level increment vector ``sum_k k A(k) e``."""
        return self.moment_a(1).sum(axis=1)

    def __repr__(self):
        form = "finite" if self.tail is None else "analytic"
        return f"ChainSpec(name={self.name!r}, m0={self.m0}, m1={self.m1}, tail={form})"


@dataclass(frozen=True)
class FiniteChainSpec:
    """Finite-level truncation with augmented last-column blocks.

    ``aug_a[k]`` is ``A^(N)(k)``, the block from level ``N - k`` into level
    ``N`` (``k = 0 .. N-1``); ``aug_b`` is ``B^(N)(N)`` from level 0 into
    level ``N``.
    """

    base: ChainSpec
    n: int
    aug_a: np.ndarray
    aug_b: np.ndarray
    scheme: str = "LastColumn"

    def assemble(self) -> np.ndarray:
        return assemble_finite(self)

    @property
    def size(self) -> int:
        return self.base.m0 + self.n * self.base.m1


def level_offsets(m0: int, m1: int, n_levels: int) -> np.ndarray:
    """Start index of each level ``0 .. n_levels`` in a flattened state vector."""
    return np.concatenate([[0], m0 + m1 * np.arange(n_levels + 1)])[: n_levels + 2]


def build_finite(spec: ChainSpec, n: int, scheme: str = "LastColumn",
                 aug_a=None, aug_b=None) -> FiniteChainSpec:
    """Finite-level chain with maximum level ``n``.

    ``scheme="LastColumn"`` lumps all mass beyond level ``n`` into the last
    column block.  ``scheme="Custom"`` takes ``aug_a`` (``n`` blocks) and
    ``aug_b`` and checks their row sums.
    """
    if n < 1:
        raise ValidationError("maximum level N must be at least 1")
    if scheme == "LastColumn":
        aug_a = np.stack([spec.tail_a(k - 1) for k in range(n)])
        aug_b = spec.tail_b(n - 1)
    elif scheme == "Custom":
        if aug_a is None or aug_b is None:
            raise ValidationError("Custom augmentation needs aug_a and aug_b")
        aug_a = np.asarray(aug_a, dtype=float)
        aug_b = np.asarray(aug_b, dtype=float)
        if aug_a.shape != (n, spec.m1, spec.m1) or aug_b.shape != (spec.m0, spec.m1):
            raise ValidationError("Custom augmentation blocks have wrong shapes")
        if (aug_a < 0).any() or (aug_b < 0).any():
            raise ValidationError("augmentation blocks must be nonnegative")
        for k in range(n):
            r = np.abs(aug_a[k].sum(1) - spec.tail_a(k - 1).sum(1)).max()
            if r > INPUT_TOL:
                raise ValidationError(f"A^(N)({k}) row sums off by {r:.3g}", residual=r)
        r = np.abs(aug_b.sum(1) - spec.tail_b(n - 1).sum(1)).max()
        if r > INPUT_TOL:
            raise ValidationError(f"B^(N)(N) row sums off by {r:.3g}", residual=r)
    else:
        raise ValidationError(f"unknown augmentation scheme {scheme!r}")
    aug_a.setflags(write=False)
    aug_b.setflags(write=False)
    return FiniteChainSpec(spec, n, aug_a, aug_b, scheme)


def assemble_finite(fspec: FiniteChainSpec) -> np.ndarray:
    """Dense transition matrix of the finite-level chain."""
    spec, n = fspec.base, fspec.n
    m0, m1 = spec.m0, spec.m1
    off = level_offsets(m0, m1, n)
    P = np.zeros((off[-1], off[-1]))
    P[:m0, :m0] = spec.b0
    if n > 1:
        bb = spec.b_blocks(1, n - 1)
        P[:m0, m0:off[n]] = np.concatenate(list(bb), axis=1)
    P[:m0, off[n]:] = fspec.aug_b
    P[m0:m0 + m1, :m0] = spec.b_minus1
    blocks = spec.a_blocks(-1, n - 1)
    for k in range(1, n + 1):
        r = slice(off[k], off[k + 1])
        lo = max(k - 1, 1)
        for lvl in range(lo, n):
            P[r, off[lvl]:off[lvl + 1]] = blocks[lvl - k + 1]
        P[r, off[n]:] = fspec.aug_a[n - k]
    return P


@dataclass
class PWindow:
    """Top-left block of ``P`` covering levels ``0 .. levels``."""

    matrix: np.ndarray
    deficiency: np.ndarray
    levels: int
    offsets: np.ndarray = field(repr=False)


def assemble_p_window(spec: ChainSpec, levels: int) -> PWindow:
    """Explicit window of the infinite transition matrix.

    ``deficiency[s]`` is the probability of leaving the window in one step
    from state ``s``.
    """
    if levels < 0:
        raise ValueError("levels must be >= 0")
    m0, m1 = spec.m0, spec.m1
    off = level_offsets(m0, m1, levels)
    P = np.zeros((off[-1], off[-1]))
    P[:m0, :m0] = spec.b0
    if levels >= 1:
        P[:m0, m0:] = np.concatenate(list(spec.b_blocks(1, levels)), axis=1)
        P[m0:m0 + m1, :m0] = spec.b_minus1
        blocks = spec.a_blocks(-1, levels - 1)
        for k in range(1, levels + 1):
            r = slice(off[k], off[k + 1])
            for lvl in range(max(k - 1, 1), levels + 1):
                P[r, off[lvl]:off[lvl + 1]] = blocks[lvl - k + 1]
    deficiency = np.clip(1.0 - P.sum(axis=1), 0.0, None)
    deficiency[deficiency < 1e-15] = 0.0
    return PWindow(P, deficiency, levels, off)


# ---------------------------------------------------------------------- validation
@dataclass
class ValidationReport:
    name: str
    valid: bool
    a_rowsum_residual: float
    b_rowsum_residual: float
    boundary_residual: float
    sigma: float
    sigma_check: float
    varpi: np.ndarray
    beta_a: np.ndarray
    a_irreducible: bool
    p_window_irreducible: bool
    p_window_levels: int
    b_mean_finite: bool
    second_moments_finite: bool
    errors: list = field(default_factory=list)
    caveats: list = field(default_factory=list)

    @property
    def flags(self) -> dict:
        """Ergodicity conditions: P irreducible (window-limited), A irreducible,
        finite boundary mean jump, negative drift."""
        return {
            "p_irreducible_window": self.p_window_irreducible,
            "a_irreducible": self.a_irreducible,
            "b_first_moment_finite": self.b_mean_finite,
            "negative_drift": self.sigma < 0,
        }

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "valid": self.valid,
            "a_rowsum_residual": self.a_rowsum_residual,
            "b_rowsum_residual": self.b_rowsum_residual,
            "boundary_residual": self.boundary_residual,
            "sigma": self.sigma,
            "sigma_check": self.sigma_check,
            "varpi": self.varpi.tolist(),
            "beta_a": self.beta_a.tolist(),
            "flags": self.flags,
            "second_moments_finite": self.second_moments_finite,
            "p_window_levels": self.p_window_levels,
            "errors": list(self.errors),
            "caveats": list(self.caveats),
        }


def is_irreducible(M: np.ndarray) -> bool:
    n, _ = csgraph.connected_components(np.asarray(M) > 0, directed=True, connection="strong")
    return n == 1


def validate(spec: ChainSpec, window: int = 20, raise_on_error: bool = True) -> ValidationReport:
    """Check stochasticity, irreducibility and the drift of ``spec``.

    Raises :class:`ValidationError` (unless ``raise_on_error`` is false) when
    a row sum is off by more than 1e-9, a block is negative, or ``A`` is
    reducible.
    """
    errors = []
    caveats = [f"irreducibility of P certified on levels 0..{window} only"]
    neg = [b for b in (spec.a_head, spec.b_minus1, spec.b0, spec.b_head) if (np.asarray(b) < 0).any()]
    if spec.tail is not None:
        neg += [p for p in (spec.tail.profile_a, spec.tail.profile_b) if (p < 0).any()]
    if neg:
        errors.append("negative block entries")
    A = spec.a_sum
    ra = float(np.abs(A.sum(1) - 1.0).max())
    b_total = spec.b0.sum(1) + spec.moment_b(0).sum(1)
    rb = float(np.abs(b_total - 1.0).max())
    rbd = float(np.abs(spec.b_minus1.sum(1) - spec.a(-1).sum(1)).max())
    for label, r in (("sum_k A(k) e", ra), ("sum_k B(k) e", rb), ("B(-1)e - A(-1)e", rbd)):
        if r > INPUT_TOL:
            errors.append(f"row-sum residual of {label} is {r:.3g}")
    a_irr = is_irreducible(A)
    if not a_irr:
        errors.append("A = sum_k A(k) is reducible")
    varpi, bad = kernels.gth(A) if a_irr else (np.full(spec.m1, np.nan), 0)
    beta = spec.beta_a
    sigma = float(varpi @ beta)
    # independent recomputation: dense solve for varpi, direct k-weighted sum
    m = spec.m1
    M = np.vstack([(np.eye(m) - A).T[:-1], np.ones(m)])
    rhs = np.zeros(m)
    rhs[-1] = 1.0
    try:
        varpi2 = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError:
        varpi2 = np.full(m, np.nan)
    beta2 = (spec.moment_a(1) @ np.ones(m))
    sigma_check = float(varpi2 @ beta2)
    win = assemble_p_window(spec, window)
    Pw = win.matrix.copy()
    # close the window by routing the deficiency back to level 0 phase 0; this
    # preserves reachability among window states without adding spurious paths
    Pw[:, 0] += win.deficiency
    p_irr = is_irreducible(Pw)
    try:
        b_mean = bool(np.isfinite(spec.moment_b(1)).all())
    except DivergenceError:
        b_mean = False
    try:
        spec.moment_a(2)
        spec.moment_b(2)
        second = True
    except DivergenceError:
        second = False
    if sigma >= 0:
        caveats.append(f"sigma = {sigma:.6g} >= 0: the chain is not positive recurrent")
    rep = ValidationReport(
        name=spec.name, valid=not errors, a_rowsum_residual=ra, b_rowsum_residual=rb,
        boundary_residual=rbd, sigma=sigma, sigma_check=sigma_check, varpi=varpi,
        beta_a=beta, a_irreducible=a_irr, p_window_irreducible=p_irr,
        p_window_levels=window, b_mean_finite=b_mean, second_moments_finite=second,
        errors=errors, caveats=caveats)
    if errors and raise_on_error:
        worst = max(ra, rb, rbd)
        raise ValidationError("; ".join(errors), residual=worst)
    return rep


# module-level aliases mirroring the methods
def tail_a(spec: ChainSpec, k: int) -> np.ndarray:
    return spec.tail_a(k)


def tail_b(spec: ChainSpec, k: int) -> np.ndarray:
    return spec.tail_b(k)


def double_tail_a(spec: ChainSpec, n: int, strict: bool = True) -> np.ndarray:
    return spec.double_tail_a(n, strict=strict)


def double_tail_b(spec: ChainSpec, n: int, strict: bool = True) -> np.ndarray:
    return spec.double_tail_b(n, strict=strict)


def drift_parameters(spec: ChainSpec):
    """``(varpi, beta_A, sigma)``: stationary vector of ``A``, mean increments, drift."""
    varpi, bad = kernels.gth(spec.a_sum)
    if bad >= 0:
        raise ValidationError("A = sum_k A(k) is reducible")
    beta = spec.beta_a
    return varpi, beta, float(varpi @ beta)
