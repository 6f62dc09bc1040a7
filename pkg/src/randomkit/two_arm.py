"""Conditional assignment probabilities for the 1:1 two-arm designs.

Arm 0 is the experimental arm E, arm 1 the control arm C, and
``D = N_E - N_C`` the signed imbalance.  Each rule returns
``(phi_E, 1 - phi_E)``.  As in :mod:`randomkit.general`, these functions are
the bit-level reference for the compiled kernel.
"""

from __future__ import annotations

import math

from .core import ProbabilityVector, ProcedureConfig, ProcedureState

__all__ = [
    "bsd_prob",
    "bcdwit_prob",
    "eud_prob",
    "ebcd_prob",
    "abcd_prob",
    "gbcd_prob",
    "bbcd_prob",
]


def _imbalance(state: ProcedureState) -> int:
    return state.counts[0] - state.counts[1]


def _check_mti(kind: str, d: int, b: int) -> None:
    if abs(d) > b:
        raise ValueError(f"{kind}: |D| = {abs(d)} violates the tolerance {b}")


def bsd_prob(state: ProcedureState, cfg: ProcedureConfig) -> ProbabilityVector:
    """Big stick design: fair coin inside the corridor |D| < b, forced
    correction at the boundary."""
    b = int(cfg.params["b"])
    d = _imbalance(state)
    _check_mti("BSD", d, b)
    if d == b:
        phi = 0.0
    elif d == -b:
        phi = 1.0
    else:
        phi = 0.5
    return ProbabilityVector((phi, 1.0 - phi))


def bcdwit_prob(state: ProcedureState, cfg: ProcedureConfig) -> ProbabilityVector:
    """Biased coin with imbalance tolerance: Efron's coin inside the corridor,
    forced correction at |D| = b."""
    p = float(cfg.params["p"])
    b = int(cfg.params["b"])
    d = _imbalance(state)
    _check_mti("BCDWIT", d, b)
    if d == 0:
        phi = 0.5
    elif d == b:
        phi = 0.0
    elif d == -b:
        phi = 1.0
    elif d < 0:
        phi = p
    else:
        phi = 1.0 - p
    return ProbabilityVector((phi, 1.0 - phi))


def eud_prob(state: ProcedureState, cfg: ProcedureConfig) -> ProbabilityVector:
    """Ehrenfest urn design: phi_E = (b - D) / (2b), a linear pull toward
    balance that pins the boundary states."""
    b = int(cfg.params["b"])
    d = _imbalance(state)
    _check_mti("EUD", d, b)
    phi = (b - d) / (2 * b)
    return ProbabilityVector((phi, 1.0 - phi))


def ebcd_prob(state: ProcedureState, cfg: ProcedureConfig) -> ProbabilityVector:
    """Efron's biased coin: p toward the under-represented arm, fair at D=0."""
    p = float(cfg.params["p"])
    d = _imbalance(state)
    if d == 0:
        phi = 0.5
    elif d < 0:
        phi = p
    else:
        phi = 1.0 - p
    return ProbabilityVector((phi, 1.0 - phi))


def abcd_prob(state: ProcedureState, cfg: ProcedureConfig) -> ProbabilityVector:
    """Adjustable biased coin: correction strength grows with |D| as |D|^a,
    symmetric in the sign of the imbalance."""
    a = float(cfg.params["a"])
    d = _imbalance(state)
    if d == 0:
        phi = 0.5
    elif d > 0:
        phi = 1.0 / (1.0 + math.pow(float(d), a))
    else:
        t = math.pow(float(-d), a)
        phi = t / (1.0 + t)
    return ProbabilityVector((phi, 1.0 - phi))


def gbcd_prob(state: ProcedureState, cfg: ProcedureConfig) -> ProbabilityVector:
    """Smith's generalized biased coin: phi_E = N_C^gamma / (N_E^gamma + N_C^gamma)
    for j > 0; a fair coin for the first subject."""
    gamma = float(cfg.params["gamma"])
    if state.j == 0:
        return ProbabilityVector((0.5, 0.5))
    pe = math.pow(float(state.counts[0]), gamma)
    pc = math.pow(float(state.counts[1]), gamma)
    phi = pc / (pe + pc)
    return ProbabilityVector((phi, 1.0 - phi))


def bbcd_prob(state: ProcedureState, cfg: ProcedureConfig) -> ProbabilityVector:
    """Bayesian biased coin: fair for the first subject, deterministically
    opposite for the second, then

        phi_E = (1 + N_C/(j N_E))^(1/gamma)
                / ((1 + N_C/(j N_E))^(1/gamma) + (1 + N_E/(j N_C))^(1/gamma)).

    Both counts are positive from j = 2 on, so the ratios are well defined.
    """
    gamma = float(cfg.params["gamma"])
    j = state.j
    if j == 0:
        return ProbabilityVector((0.5, 0.5))
    if j == 1:
        phi = 0.0 if state.counts[0] == 1 else 1.0
        return ProbabilityVector((phi, 1.0 - phi))
    invg = 1.0 / gamma
    jd = float(j)
    ne = float(state.counts[0])
    nc = float(state.counts[1])
    xe = 1.0 + nc / (jd * ne)
    xc = 1.0 + ne / (jd * nc)
    pe = math.pow(xe, invg)
    pc = math.pow(xc, invg)
    phi = pe / (pe + pc)
    return ProbabilityVector((phi, 1.0 - phi))
