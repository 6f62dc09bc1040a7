"""Conditional assignment probabilities for the multi-arm procedures.

Every rule maps a :class:`~randomkit.core.ProcedureState` to a
:class:`~randomkit.core.ProbabilityVector` of length K.  The arithmetic in
this module is the reference implementation: the compiled engine kernel
mirrors each expression operation-for-operation so that recorded probability
rows match these functions bit-for-bit.
"""

from __future__ import annotations

import math

from .core import (
    Kind,
    ProbabilityVector,
    ProcedureConfig,
    ProcedureState,
)

__all__ = [
    "crd_prob",
    "rand_prob",
    "tmd_prob",
    "pbd_prob",
    "bud_prob",
    "mwud_prob",
    "dlud_prob",
    "dbcd_prob",
    "maxent_prob",
    "hypothetical_imbalance",
]

#: Residual probability mass at which the DLUD immigration series stops.
DLUD_SERIES_TOL = 1e-12

#: Bisection settings for the MaxEnt tilt parameter.
MAXENT_TOL = 1e-12
MAXENT_MAX_ITER = 200


def crd_prob(state: ProcedureState, cfg: ProcedureConfig) -> ProbabilityVector:
    """Completely randomized design: phi = rho at every state."""
    return ProbabilityVector(cfg.target.rho)


def rand_prob(state: ProcedureState, cfg: ProcedureConfig) -> ProbabilityVector:
    """Random allocation rule: sampling without replacement from the final
    sample sizes, phi_k = (n_k - N_k) / (n - j)."""
    caps = cfg.caps()
    n = cfg.n
    j = state.j
    if j >= n:  # type: ignore[operator]
        raise ValueError(f"RAND: no subjects left to assign at j={j}, n={n}")
    for k, (nk, ck) in enumerate(zip(state.counts, caps)):
        if nk > ck:
            raise ValueError(f"RAND: arm {k + 1} count {nk} exceeds its cap {ck}")
    rem = n - j  # type: ignore[operator]
    return ProbabilityVector((c - nk) / rem for nk, c in zip(state.counts, caps))


def tmd_prob(state: ProcedureState, cfg: ProcedureConfig) -> ProbabilityVector:
    """Truncated multinomial: target probabilities with filled arms zeroed and
    their mass redistributed proportionally over the unfilled arms.  While no
    arm is filled the renormalization is the identity, so rho is returned
    verbatim (keeping the first-patient probabilities exact)."""
    caps = cfg.caps()
    if state.j >= cfg.n:  # type: ignore[operator]
        raise ValueError(f"TMD: no subjects left to assign at j={state.j}, n={cfg.n}")
    rho = cfg.target.rho
    s = 0.0
    any_filled = False
    for k in range(cfg.k):
        if state.counts[k] > caps[k]:
            raise ValueError(f"TMD: arm {k + 1} count exceeds its cap {caps[k]}")
        if state.counts[k] < caps[k]:
            s += rho[k]
        else:
            any_filled = True
    if not any_filled:
        return ProbabilityVector(rho)
    return ProbabilityVector(
        (rho[k] / s if state.counts[k] < caps[k] else 0.0) for k in range(cfg.k)
    )


def pbd_prob(state: ProcedureState, cfg: ProcedureConfig) -> ProbabilityVector:
    """Permuted block design with blocks of ``b * sum(w)`` slots, ``b * w_k``
    per arm: phi is proportional to the open slots in the current block."""
    w = cfg.target.integer_w()
    b = int(cfg.params["b"])
    bw = [b * wk for wk in w]
    block = b * sum(w)
    m = state.j // block  # completed blocks
    used = state.j - m * block
    rem = block - used
    return ProbabilityVector(
        (bw[k] - (state.counts[k] - m * bw[k])) / rem for k in range(cfg.k)
    )


def bud_prob(state: ProcedureState, cfg: ProcedureConfig) -> ProbabilityVector:
    """Block urn design: with k_j = min_k floor(N_k / w_k) completed minimal
    balanced sets, phi_k = (w_k (lambda + k_j) - N_k) / (W (lambda + k_j) - j)."""
    w = cfg.target.integer_w()
    lam = int(cfg.params["lambda"])
    kj = min(nk // wk for nk, wk in zip(state.counts, w))
    den = sum(w) * (lam + kj) - state.j
    return ProbabilityVector(
        (w[k] * (lam + kj) - state.counts[k]) / den for k in range(cfg.k)
    )


def mwud_prob(state: ProcedureState, cfg: ProcedureConfig) -> ProbabilityVector:
    """Mass-weighted urn design: mass alpha*rho_k - N_k + j*rho_k per arm,
    clipped at zero and normalized (the pre-clip total is always alpha > 0).
    The first subject is assigned at exactly rho, the normalized initial
    masses."""
    rho = cfg.target.rho
    if state.j == 0:
        return ProbabilityVector(rho)
    alpha = float(cfg.params["alpha"])
    jd = float(state.j)
    masses = []
    s = 0.0
    for k in range(cfg.k):
        m = alpha * rho[k] - state.counts[k] + jd * rho[k]
        if m < 0.0:
            m = 0.0
        masses.append(m)
        s += m
    return ProbabilityVector(m / s for m in masses)


def dlud_prob(state: ProcedureState, cfg: ProcedureConfig) -> ProbabilityVector:
    """Drop-the-loser urn: effective next-assignment probabilities.

    The urn holds ``urn[k]`` treatment balls per arm plus one immigration
    token.  A uniform draw either assigns an arm (ball removed) or hits the
    token, which adds ``a * w_k`` balls of every type and the draw repeats.
    The series over token repetitions is summed until the residual mass drops
    below ``DLUD_SERIES_TOL`` and then normalized.  The untouched initial urn
    is proportional to the target, so the first subject is assigned at
    exactly rho.
    """
    if state.urn is None:
        raise ValueError("DLUD: state has no urn")
    if state.j == 0:
        return ProbabilityVector(cfg.target.rho)
    a = int(cfg.params["a"])
    w = cfg.target.integer_w()
    k_arms = cfg.k
    balls = list(state.urn)
    acc = [0.0] * k_arms
    reach = 1.0
    while reach >= DLUD_SERIES_TOL:
        total = 1 + sum(balls)
        td = float(total)
        for k in range(k_arms):
            acc[k] += reach * (balls[k] / td)
        reach = reach / td
        for k in range(k_arms):
            balls[k] += a * w[k]
    s = 0.0
    for k in range(k_arms):
        s += acc[k]
    return ProbabilityVector(acc[k] / s for k in range(k_arms))


def dbcd_prob(state: ProcedureState, cfg: ProcedureConfig) -> ProbabilityVector:
    """Doubly adaptive biased coin: phi_k proportional to
    rho_k * (rho_k / (N_k / j))^gamma, falling back to rho before every arm
    has been tried (j = 0 or some N_k = 0)."""
    rho = cfg.target.rho
    gamma = float(cfg.params["gamma"])
    if state.j == 0 or 0 in state.counts:
        return ProbabilityVector(rho)
    jd = float(state.j)
    terms = []
    s = 0.0
    for k in range(cfg.k):
        t = rho[k] * math.pow(rho[k] / (state.counts[k] / jd), gamma)
        terms.append(t)
        s += t
    return ProbabilityVector(t / s for t in terms)


def hypothetical_imbalance(state: ProcedureState, cfg: ProcedureConfig) -> tuple[float, ...]:
    """B_k: the Euclidean distance of the counts from perfect allocation after
    step j+1 if arm k received the next subject."""
    rho = cfg.target.rho
    jp1 = float(state.j + 1)
    out = []
    for k in range(cfg.k):
        s = 0.0
        for i in range(cfg.k):
            t = (state.counts[i] + (1.0 if i == k else 0.0)) - jp1 * rho[i]
            s += t * t
        out.append(math.sqrt(s))
    return tuple(out)


def maxent_prob(state: ProcedureState, cfg: ProcedureConfig) -> ProbabilityVector:
    """Maximum-entropy constrained balance.

    phi_k = rho_k mu^{B_k} / sum_l rho_l mu^{B_l} where mu in (0, 1] solves

        sum_k phi_k(mu) B_k = eta * min_l B_l + (1 - eta) * sum_k rho_k B_k

    by bisection (interval tolerance ``MAXENT_TOL``, at most
    ``MAXENT_MAX_ITER`` halvings).  The first subject is always assigned at
    the target probabilities.
    """
    rho = cfg.target.rho
    if state.j == 0:
        return ProbabilityVector(rho)
    eta = float(cfg.params["eta"])
    b = hypothetical_imbalance(state, cfg)
    bmin = b[0]
    for k in range(1, cfg.k):
        if b[k] < bmin:
            bmin = b[k]
    dot = 0.0
    for k in range(cfg.k):
        dot += rho[k] * b[k]
    rhs = eta * bmin + (1.0 - eta) * dot

    def tilt(mu: float) -> tuple[list[float], float, float]:
        # exponents shifted by bmin so mu**0 = 1 anchors the largest term
        terms = []
        den = 0.0
        num = 0.0
        for k in range(cfg.k):
            t = rho[k] * math.pow(mu, b[k] - bmin)
            terms.append(t)
            den += t
            num += t * b[k]
        return terms, den, num

    _, den1, num1 = tilt(1.0)
    if num1 / den1 - rhs <= 0.0:
        mu = 1.0
    else:
        lo = 0.0
        hi = 1.0
        it = 0
        while hi - lo > MAXENT_TOL and it < MAXENT_MAX_ITER:
            mid = 0.5 * (lo + hi)
            _, den, num = tilt(mid)
            if num / den - rhs > 0.0:
                hi = mid
            else:
                lo = mid
            it += 1
        mu = 0.5 * (lo + hi)
    terms, den, _ = tilt(mu)
    return ProbabilityVector(t / den for t in terms)
