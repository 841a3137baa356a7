"""Reference chains used by the examples, tests and CLI."""
from __future__ import annotations

import numpy as np
from scipy import special

from .chain import AnalyticTail, ChainSpec
from .tails import PowerLawWeights


def sc1() -> ChainSpec:
    """Scalar chain with jumps -1, 0, +1 and probabilities 0.5, 0.3, 0.2."""
    return ChainSpec(a_head=[[[0.5]], [[0.3]], [[0.2]]], b_minus1=[[0.5]], b0=[[0.8]],
                     b_head=[[[0.2]]], name="SC1")


def hc1(beta: float = 4.5, a_minus1: float = 0.6, a_zero: float = 0.1) -> ChainSpec:
    """Scalar chain with power-law upward jumps.

    ``A(-1) = a_minus1``, ``A(0) = a_zero``, ``A(k) = Z k**-beta`` for
    ``k >= 1`` with ``Z`` normalizing the row; ``B(-1) = A(-1)``,
    ``B(k) = A(k)`` for ``k >= 1`` and ``B(0)`` fills the row.
    """
    up = 1.0 - a_minus1 - a_zero
    Z = up / special.zeta(beta, 1)
    prof = np.array([[Z]])
    tail = AnalyticTail(PowerLawWeights(beta), prof, PowerLawWeights(beta), prof.copy())
    return ChainSpec(a_head=[[[a_minus1]], [[a_zero]]], b_minus1=[[a_minus1]],
                     b0=[[1.0 - up]], tail=tail, name=f"HC1(beta={beta:g})")


def mm1(lam: float = 1.0, mu: float = 2.0) -> ChainSpec:
    """Embedded M/M/1 chain at departures."""
    from .mapg1 import Exponential, MapSpec, embed_chain

    ch = embed_chain(MapSpec.poisson(lam), Exponential(mu))
    ch.name = "MM1"
    return ch


def mp2_map():
    """Two-phase MMPP: rates 0.5 and 1.5, switching 0.2 (1->2) and 0.3 (2->1)."""
    from .mapg1 import MapSpec

    L1 = np.diag([0.5, 1.5])
    L0 = np.array([[-0.7, 0.2], [0.3, -1.8]])
    return MapSpec(L0, L1)


def mp2(tol: float = 1e-14) -> ChainSpec:
    """MP2 arrivals with exponential(4) service."""
    from .mapg1 import Exponential, embed_chain

    ch = embed_chain(mp2_map(), Exponential(4.0), tol=tol)
    ch.name = "MP2"
    return ch


def m_pareto(alpha: float = 3.5, lam: float = 0.5, mean: float = 1.0):
    """Poisson arrivals with Pareto (Lomax) service of the given mean."""
    from .mapg1 import MapSpec, Pareto

    return MapSpec.poisson(lam), Pareto(alpha, mean * (alpha - 1.0))


PRESETS = {"SC1": sc1, "HC1": hc1, "MM1": mm1, "MP2": mp2}


def get(name: str) -> ChainSpec:
    try:
        return PRESETS[name.upper()]()
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
