"""Conditional probability rules, checked against hand-evaluated values and
independent reference computations (rational urn recursion, scipy root
finding, physical draw-loop simulation)."""

import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from scipy.optimize import brentq

from randomkit import (
    Kind,
    ProcedureConfig,
    ProcedureState,
    conditional_probs,
    exact_distribution,
    initial_state,
    normalize_target,
)
from randomkit.general import hypothetical_imbalance

W11 = normalize_target((1, 1))
W21 = normalize_target((2, 1))
W4321 = normalize_target((4, 3, 2, 1))


def cfg(kind, w=W11, n=None, **params):
    return ProcedureConfig(kind, w, params, n=n)


def two_arm_phi(kind, d, j=None, **params):
    """phi for a two-arm state with imbalance d (arm 1 minus arm 2)."""
    if j is None:
        j = abs(d) + 2 * (d % 2 == 0)  # any consistent parity works
    ne = (j + d) // 2
    assert (j + d) % 2 == 0 and 0 <= ne <= j, "inconsistent (j, d)"
    c = cfg(kind, n=max(j + 1, 8), **params)
    return conditional_probs(ProcedureState(j, (ne, j - ne)), c)


# ---------------------------------------------------------------------------
# first-patient rule: every procedure starts at rho

ALL_KINDS_STD = [
    (Kind.CRD, {}, W4321),
    (Kind.RAND, {}, W4321),
    (Kind.TMD, {}, W4321),
    (Kind.PBD, {"b": 2}, W4321),
    (Kind.BUD, {"lambda": 2}, W4321),
    (Kind.MWUD, {"alpha": 2}, W4321),
    (Kind.DLUD, {"a": 2}, W4321),
    (Kind.DBCD, {"gamma": 2}, W4321),
    (Kind.MAXENT, {"eta": 0.5}, W4321),
    (Kind.BSD, {"b": 3}, W11),
    (Kind.BCDWIT, {"p": 2 / 3, "b": 3}, W11),
    (Kind.EUD, {"b": 2}, W11),
    (Kind.EBCD, {"p": 2 / 3}, W11),
    (Kind.ABCD, {"a": 2}, W11),
    (Kind.GBCD, {"gamma": 2}, W11),
    (Kind.BBCD, {"gamma": 1}, W11),
]


@pytest.mark.parametrize("kind,params,w", ALL_KINDS_STD)
def test_first_patient_gets_target_probabilities(kind, params, w):
    c = ProcedureConfig(kind, w, params, n=10)
    phi = conditional_probs(initial_state(c), c)
    assert tuple(phi) == w.rho


# ---------------------------------------------------------------------------
# general-K rules

def test_crd_is_constant():
    c = cfg(Kind.CRD, w=W4321)
    for counts in [(0, 0, 0, 0), (5, 0, 2, 1), (1, 1, 1, 1)]:
        phi = conditional_probs(ProcedureState(sum(counts), counts), c)
        assert tuple(phi) == (0.4, 0.3, 0.2, 0.1)


def test_crd_irrational_target():
    r2 = math.sqrt(2.0)
    w = normalize_target((r2, 1, 1))
    c = cfg(Kind.CRD, w=w)
    assert tuple(conditional_probs(ProcedureState(3, (1, 1, 1)), c)) == w.rho


def test_rand_counts_remaining_slots():
    c = cfg(Kind.RAND, w=W4321, n=10)
    phi = conditional_probs(ProcedureState(4, (4, 0, 0, 0)), c)
    assert phi == pytest.approx((0.0, 0.5, 1 / 3, 1 / 6), abs=1e-15)
    c2 = cfg(Kind.RAND, n=8)
    assert tuple(conditional_probs(ProcedureState(4, (4, 0)), c2)) == (0.0, 1.0)


def test_tmd_renormalizes_over_unfilled_arms():
    c = cfg(Kind.TMD, w=W4321, n=10)
    phi = conditional_probs(ProcedureState(5, (4, 1, 0, 0)), c)
    # arm 1 filled; (0.3, 0.2, 0.1) renormalized
    assert phi == pytest.approx((0.0, 0.5, 1 / 3, 1 / 6), abs=1e-15)
    c2 = cfg(Kind.TMD, n=8)
    assert tuple(conditional_probs(ProcedureState(6, (4, 2)), c2)) == (0.0, 1.0)


def test_pbd_forces_block_balance():
    c = cfg(Kind.PBD, w=W4321, b=1)
    phi = conditional_probs(ProcedureState(9, (4, 3, 2, 0)), c)
    assert tuple(phi) == (0.0, 0.0, 0.0, 1.0)
    # a completed block resets the rule to rho
    phi = conditional_probs(ProcedureState(10, (4, 3, 2, 1)), c)
    assert tuple(phi) == (0.4, 0.3, 0.2, 0.1)
    c2 = cfg(Kind.PBD, b=2)
    assert tuple(conditional_probs(ProcedureState(2, (2, 0)), c2)) == (0.0, 1.0)


def test_bud_urn_probabilities():
    c = cfg(Kind.BUD, **{"lambda": 2})
    phi = conditional_probs(ProcedureState(1, (1, 0)), c)
    assert phi == pytest.approx((1 / 3, 2 / 3), abs=1e-15)
    c1 = cfg(Kind.BUD, **{"lambda": 1})
    assert tuple(conditional_probs(ProcedureState(1, (1, 0)), c1)) == (0.0, 1.0)


@pytest.mark.parametrize("w,nsteps", [(W11, 4), (W4321, 20)])
def test_bud_lambda1_equals_pbd_b1_on_reachable_states(w, nsteps):
    bud = ProcedureConfig(Kind.BUD, w, {"lambda": 1}, n=nsteps)
    pbd = ProcedureConfig(Kind.PBD, w, {"b": 1}, n=nsteps)
    states = [(0, (0,) * w.k)]
    for j, table in enumerate(exact_distribution(bud, n=nsteps).tables, start=1):
        states.extend((j, counts) for counts in table)
    assert len(states) > nsteps
    for j, counts in states:
        st = ProcedureState(j, counts)
        assert tuple(conditional_probs(st, bud)) == tuple(conditional_probs(st, pbd))


def test_mwud_clips_negative_mass():
    c = cfg(Kind.MWUD, alpha=2)
    assert tuple(conditional_probs(ProcedureState(2, (2, 0)), c)) == (0.0, 1.0)
    c4 = cfg(Kind.MWUD, w=W4321, alpha=2)
    phi = conditional_probs(ProcedureState(1, (1, 0, 0, 0)), c4)
    # masses (0.2, 0.9, 0.6, 0.3) after clipping
    assert phi == pytest.approx((0.1, 0.45, 0.3, 0.15), abs=1e-15)


def test_dbcd_hand_value_and_identities():
    c = cfg(Kind.DBCD, gamma=2)
    phi = conditional_probs(ProcedureState(4, (3, 1)), c)
    assert phi == pytest.approx((0.1, 0.9), abs=1e-15)
    # gamma = 0 reduces to CRD wherever all counts are positive
    c0 = cfg(Kind.DBCD, w=W4321, gamma=0)
    for counts in [(1, 1, 1, 1), (5, 1, 2, 2), (2, 3, 1, 4)]:
        phi = conditional_probs(ProcedureState(sum(counts), counts), c0)
        assert phi == pytest.approx(W4321.rho, abs=1e-15)
    # exact proportions are a fixed point for any gamma
    cg = cfg(Kind.DBCD, w=W4321, gamma=5)
    phi = conditional_probs(ProcedureState(10, (4, 3, 2, 1)), cg)
    assert phi == pytest.approx(W4321.rho, abs=1e-12)
    # start-up: any zero count falls back to rho
    phi = conditional_probs(ProcedureState(3, (2, 1, 0, 0)), cg)
    assert tuple(phi) == W4321.rho


# ---------------------------------------------------------------------------
# MaxEnt: independent root find

def _maxent_reference(counts, j, rho, eta):
    """Solve the tilted-allocation equation with an independent bracketing
    root finder, at much tighter tolerance than the library's bisection."""
    k_arms = len(rho)
    b = []
    for k in range(k_arms):
        nxt = list(counts)
        nxt[k] += 1
        b.append(math.sqrt(sum((nxt[i] - (j + 1) * rho[i]) ** 2 for i in range(k_arms))))
    target = eta * min(b) + (1 - eta) * sum(r * x for r, x in zip(rho, b))

    def gap(mu):
        wgt = [r * mu ** x for r, x in zip(rho, b)]
        return sum(w * x for w, x in zip(wgt, b)) / sum(wgt) - target

    if abs(gap(1.0)) < 1e-15:
        mu = 1.0
    else:
        mu = brentq(gap, 1e-300, 1.0, xtol=1e-15)
    wgt = [r * mu ** x for r, x in zip(rho, b)]
    tot = sum(wgt)
    return tuple(w / tot for w in wgt)


def test_maxent_matches_independent_solver():
    cases = [
        (W11, 0.5, (1, 0)),
        (W11, 0.9, (3, 1)),
        (W11, 0.25, (2, 4)),
        (W4321, 0.5, (1, 0, 0, 0)),
        (W4321, 0.7, (2, 2, 1, 0)),
        (W4321, 0.5, (4, 3, 2, 1)),
    ]
    for w, eta, counts in cases:
        c = cfg(Kind.MAXENT, w=w, eta=eta)
        got = conditional_probs(ProcedureState(sum(counts), counts), c)
        want = _maxent_reference(counts, sum(counts), w.rho, eta)
        assert got == pytest.approx(want, abs=1e-9), (eta, counts)


def test_maxent_known_value():
    # 1:1, eta = 1/2, N = (1, 0): the constraint solves to phi = (1/4, 3/4)
    c = cfg(Kind.MAXENT, eta=0.5)
    phi = conditional_probs(ProcedureState(1, (1, 0)), c)
    assert phi == pytest.approx((0.25, 0.75), abs=1e-11)


def test_maxent_eta0_is_crd():
    c = cfg(Kind.MAXENT, w=W4321, eta=0.0)
    for counts in itertools.product(range(3), repeat=4):
        phi = conditional_probs(ProcedureState(sum(counts), counts), c)
        assert phi == pytest.approx(W4321.rho, abs=1e-12)


def test_maxent_eta1_forces_most_lagging_arm():
    c = cfg(Kind.MAXENT, w=W11, eta=1.0)
    phi = conditional_probs(ProcedureState(2, (2, 0)), c)
    assert phi == pytest.approx((0.0, 1.0), abs=1e-9)


def test_hypothetical_imbalance_prefers_lagging_arm():
    c = cfg(Kind.MAXENT, w=W4321, eta=0.5)
    b = hypothetical_imbalance(ProcedureState(6, (4, 2, 0, 0)), c)
    assert all(x >= 0 for x in b)
    assert min(range(4), key=lambda k: b[k]) in (2, 3)  # underrepresented arms


# ---------------------------------------------------------------------------
# DLUD: independent rational recursion and the physical draw loop

def _dlud_reference(urn, w, a):
    """Effective assignment probabilities by exact rational summation over
    the number of immigration events."""
    probs = [Fraction(0)] * len(urn)
    mass = Fraction(1)
    urn = list(urn)
    while mass > Fraction(1, 10 ** 18):
        total = sum(urn) + 1
        for k, u in enumerate(urn):
            probs[k] += mass * Fraction(u, total)
        mass *= Fraction(1, total)
        urn = [u + a * wk for u, wk in zip(urn, w)]
    return tuple(float(p) for p in probs)


def _dlud_phi(urn, w, a):
    c = ProcedureConfig(Kind.DLUD, w, {"a": a}, n=20)
    wint = tuple(int(x) for x in w.w)
    # j = 0 marks the untouched initial urn; any modified urn implies j >= 1
    j = 0 if tuple(urn) == wint else max(1, sum(wint) - sum(urn))
    counts = (j,) + (0,) * (w.k - 1)
    return conditional_probs(ProcedureState(j, counts, urn=tuple(urn)), c)


@pytest.mark.parametrize(
    "w,a,urn",
    [
        (W11, 2, (1, 1)),
        (W21, 1, (0, 0)),
        (W21, 1, (2, 1)),
        (W4321, 2, (4, 3, 2, 1)),
        (W4321, 2, (3, 3, 2, 1)),
        (W4321, 1, (0, 3, 0, 1)),
        (W11, 3, (0, 2)),
    ],
)
def test_dlud_matches_rational_reference(w, a, urn):
    got = _dlud_phi(urn, w, a)
    want = _dlud_reference(urn, tuple(int(x) for x in w.w), a)
    assert got == pytest.approx(want, abs=1e-12)


def test_dlud_proportional_urn_gives_rho():
    # an urn proportional to w stays proportional through immigration, so the
    # effective probabilities are exactly rho
    phi = _dlud_phi((4, 3, 2, 1), W4321, 2)
    assert phi == pytest.approx(W4321.rho, abs=1e-12)
    assert tuple(_dlud_phi((0, 0), W21, 1)) == pytest.approx((2 / 3, 1 / 3), abs=1e-12)


def test_dlud_against_physical_draw_loop():
    """Simulate the urn process itself: draw uniformly over treatment balls
    plus the immigration token; the token adds a*w balls of every type and
    the draw repeats.  10^6 independent draws per state, 4 MC standard
    errors."""
    rng = np.random.default_rng(90210)
    ndraws = 1_000_000
    for w, a, urn0 in [(W4321, 2, (4, 3, 2, 1)), (W21, 1, (1, 0)), (W11, 2, (0, 3))]:
        k_arms = w.k
        wint = np.array([int(x) for x in w.w])
        hits = np.zeros(k_arms)
        pending = ndraws
        urn = np.array(urn0, dtype=float)
        while pending:
            total = urn.sum() + 1.0
            pvec = np.append(urn, 1.0) / total
            drawn = rng.multinomial(pending, pvec)
            hits += drawn[:k_arms]
            pending = int(drawn[k_arms])
            urn = urn + a * wint
        freq = hits / ndraws
        want = np.asarray(_dlud_phi(urn0, w, a))
        se = np.sqrt(np.maximum(want * (1 - want), 1e-12) / ndraws)
        assert np.all(np.abs(freq - want) <= 4 * se), (urn0, freq, want)


# ---------------------------------------------------------------------------
# two-arm rules

def test_bsd_holds_the_line():
    assert tuple(two_arm_phi(Kind.BSD, 0, b=3)) == (0.5, 0.5)
    assert tuple(two_arm_phi(Kind.BSD, 3, j=3, b=3)) == (0.0, 1.0)
    assert tuple(two_arm_phi(Kind.BSD, -3, j=3, b=3)) == (1.0, 0.0)
    assert tuple(two_arm_phi(Kind.BSD, 2, j=4, b=3)) == (0.5, 0.5)


def test_bcdwit_biased_coin_inside_tolerance():
    p = 2 / 3
    assert two_arm_phi(Kind.BCDWIT, -1, j=1, p=p, b=3) == pytest.approx((p, 1 - p), abs=1e-15)
    assert tuple(two_arm_phi(Kind.BCDWIT, 0, j=2, p=p, b=3)) == (0.5, 0.5)
    assert tuple(two_arm_phi(Kind.BCDWIT, 3, j=3, p=p, b=3)) == (0.0, 1.0)
    assert tuple(two_arm_phi(Kind.BCDWIT, -3, j=3, p=p, b=3)) == (1.0, 0.0)
    assert two_arm_phi(Kind.BCDWIT, 2, j=4, p=p, b=3) == pytest.approx((1 - p, p), abs=1e-15)


def test_eud_linear_in_imbalance():
    assert tuple(two_arm_phi(Kind.EUD, 0, b=2)) == (0.5, 0.5)
    assert tuple(two_arm_phi(Kind.EUD, 2, j=2, b=2)) == (0.0, 1.0)
    assert two_arm_phi(Kind.EUD, 1, j=1, b=2) == pytest.approx((0.25, 0.75), abs=1e-15)
    assert two_arm_phi(Kind.EUD, -1, j=1, b=2) == pytest.approx((0.75, 0.25), abs=1e-15)


def test_ebcd_fixed_bias():
    p = 2 / 3
    assert tuple(two_arm_phi(Kind.EBCD, 0, p=p)) == (0.5, 0.5)
    assert two_arm_phi(Kind.EBCD, -1, j=1, p=p) == pytest.approx((p, 1 - p), abs=1e-15)
    assert two_arm_phi(Kind.EBCD, 3, j=5, p=p) == pytest.approx((1 - p, p), abs=1e-15)


def test_abcd_polynomial_bias():
    assert tuple(two_arm_phi(Kind.ABCD, 0, a=2)) == (0.5, 0.5)
    assert two_arm_phi(Kind.ABCD, 2, j=2, a=2) == pytest.approx((0.2, 0.8), abs=1e-15)
    assert two_arm_phi(Kind.ABCD, -2, j=2, a=2) == pytest.approx((0.8, 0.2), abs=1e-15)
    # |D| = 1 maps to a fair coin for every exponent
    for a in (0.5, 1, 2, 5):
        assert two_arm_phi(Kind.ABCD, 1, j=1, a=a) == pytest.approx((0.5, 0.5), abs=1e-15)
        assert two_arm_phi(Kind.ABCD, -1, j=1, a=a) == pytest.approx((0.5, 0.5), abs=1e-15)
    assert two_arm_phi(Kind.ABCD, 3, j=3, a=1) == pytest.approx((0.25, 0.75), abs=1e-15)


def test_gbcd_count_ratio_form():
    phi = two_arm_phi(Kind.GBCD, 2, j=4, gamma=2)  # N = (3, 1)
    assert phi == pytest.approx((0.1, 0.9), abs=1e-15)
    for counts in [(3, 0), (0, 3), (2, 2), (5, 1)]:
        c = cfg(Kind.GBCD, gamma=0)
        phi = conditional_probs(ProcedureState(sum(counts), counts), c)
        assert tuple(phi) == (0.5, 0.5)


def test_gbcd_symmetry_on_smith_grid():
    # f(x) + f(-x) = 1 for x = D/j over a grid of imbalance fractions
    c = cfg(Kind.GBCD, gamma=2)
    j = 20
    for d in range(-j, j + 1, 2):
        ne = (j + d) // 2
        fp = conditional_probs(ProcedureState(j, (ne, j - ne)), c)[0]
        fm = conditional_probs(ProcedureState(j, (j - ne, ne)), c)[0]
        assert fp + fm == pytest.approx(1.0, abs=1e-15)


def test_bbcd_second_patient_is_deterministic_opposite():
    c = cfg(Kind.BBCD, gamma=1)
    assert tuple(conditional_probs(ProcedureState(1, (1, 0)), c)) == (0.0, 1.0)
    assert tuple(conditional_probs(ProcedureState(1, (0, 1)), c)) == (1.0, 0.0)


def test_bbcd_balanced_state_is_fair():
    for gamma in (0.05, 0.5, 1, 5):
        c = cfg(Kind.BBCD, gamma=gamma)
        assert tuple(conditional_probs(ProcedureState(2, (1, 1)), c)) == (0.5, 0.5)


def test_bbcd_hand_value():
    c = cfg(Kind.BBCD, gamma=1)
    phi = conditional_probs(ProcedureState(4, (3, 1)), c)
    assert phi == pytest.approx((13 / 34, 21 / 34), abs=1e-12)


@pytest.mark.parametrize(
    "kind,params,drange",
    [
        (Kind.EBCD, {"p": 2 / 3}, range(-6, 7)),
        (Kind.ABCD, {"a": 2}, range(-6, 7)),
        (Kind.BSD, {"b": 3}, range(-3, 4)),
    ],
)
def test_biased_coin_class_symmetry(kind, params, drange):
    """F(x) + F(-x) = 1 across the reachable imbalance range."""
    for d in drange:
        j = 6 + (d % 2)
        ne = (j + d) // 2
        c = cfg(kind, n=12, **params)
        fp = conditional_probs(ProcedureState(j, (ne, j - ne)), c)[0]
        fm = conditional_probs(ProcedureState(j, (j - ne, ne)), c)[0]
        assert fp + fm == pytest.approx(1.0, abs=1e-15), d
