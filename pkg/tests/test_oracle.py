"""Exact-distribution oracle: state tables, path enumeration, frozen
hand-derived series, and the Monte-Carlo-vs-exact comparison gate.

The biased-coin series below were derived by hand from the transition tree
(three subjects, two arms, bias 2/3 toward the lagging arm) and are frozen as
rationals; they pin the dynamic program independently of the code under test.
"""

import math

import numpy as np
import pytest

from randomkit.config import parse_proc, parse_weights
from randomkit.core import ProcedureConfig
from randomkit.engine import simulate
from randomkit.metrics import calc_brt, calc_expected_abs_imb, calc_fi, fi_max
from randomkit.oracle import (
    MAX_DP_STATES,
    MAX_PATHS,
    CompareReport,
    OracleLimitError,
    compare,
    enumerate_paths,
    exact_distribution,
    exact_metrics,
    exact_metrics_by_paths,
)

W11 = parse_weights([1, 1])
W4321 = parse_weights([4, 3, 2, 1])


# ---------------------------------------------------------------------------
# state tables and paths on trivially enumerable cases

def test_crd_two_step_tables():
    ed = exact_distribution(parse_proc("CRD", W11), n=2)
    assert ed.n == 2 and len(ed.tables) == 2
    assert ed.tables[0] == {(1, 0): 0.5, (0, 1): 0.5}
    assert ed.tables[1] == {(2, 0): 0.25, (1, 1): 0.5, (0, 2): 0.25}


def test_crd_paths_are_uniform():
    paths = enumerate_paths(parse_proc("CRD", W11), n=2)
    assert sorted(p for p, _ in paths) == [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert all(pr == 0.25 for _, pr in paths)


def test_crd_running_maximum_by_paths():
    out = exact_metrics_by_paths(parse_proc("CRD", W11), n=2)
    assert out["expected_max_abs_imb"] == pytest.approx([1.0, 1.5], abs=1e-15)


def test_tables_are_probability_laws():
    for cfg in [parse_proc("BUD:lambda=2", W4321), parse_proc("MaxEnt:eta=0.5", W11)]:
        ed = exact_distribution(cfg, n=6)
        for j, table in enumerate(ed.tables):
            assert sum(table.values()) == pytest.approx(1.0, abs=1e-12)
            for counts, p in table.items():
                assert p > 0.0
                assert min(counts) >= 0 and sum(counts) == j + 1


def test_paths_sum_to_one_and_respect_caps():
    cfg = parse_proc("TMD", W11, n=4)
    paths = enumerate_paths(cfg)
    assert sum(p for _, p in paths) == pytest.approx(1.0, abs=1e-12)
    for seq, _ in paths:
        assert len(seq) == 4
        assert seq.count(0) == 2 and seq.count(1) == 2  # caps (2, 2)


def test_rand_tmd_pbd_end_at_their_caps():
    for cfg, final in [
        (parse_proc("RAND", W11, n=8), (4, 4)),
        (parse_proc("TMD", W4321, n=10), (4, 3, 2, 1)),
        (parse_proc("PBD:b=1", W4321), (4, 3, 2, 1)),
    ]:
        ed = exact_distribution(cfg, n=10 if cfg.n is None else cfg.n)
        assert set(ed.tables[-1]) == {final}
        assert ed.tables[-1][final] == pytest.approx(1.0, abs=1e-12)


def test_bsd_states_stay_within_tolerance():
    ed = exact_distribution(parse_proc("BSD:b=3", W11), n=12)
    for table in ed.tables:
        for (ne, nc) in table:
            assert abs(ne - nc) <= 3


# ---------------------------------------------------------------------------
# frozen hand-derived series: biased coin with p = 2/3, three subjects

def test_biased_coin_exact_series_match_hand_derivation():
    ed = exact_distribution(parse_proc("EBCD:p=2/3", W11), n=3)
    s = ed.series
    assert s["expected_abs_imb"] == pytest.approx([1, 2 / 3, 11 / 9], abs=1e-15)
    assert s["variance_of_imb"] == pytest.approx([1, 4 / 3, 17 / 9], abs=1e-15)
    assert s["cummean_loss"] == pytest.approx([1, 5 / 6, 62 / 81], abs=1e-15)
    assert s["cummean_epcg_c"] == pytest.approx([1 / 2, 7 / 12, 31 / 54], abs=1e-15)
    assert s["cummean_epcg_mp"] == pytest.approx([1 / 2, 7 / 12, 31 / 54], abs=1e-15)
    assert np.all(s["cummean_pda"] == 0.0)
    assert s["fi"] == pytest.approx([0, 1 / 6, 4 / 27], abs=1e-15)
    assert s["arp_pi"] == pytest.approx(np.full((3, 2), 0.5), abs=1e-15)
    want_g = np.sqrt(np.array([1, 5 / 6, 62 / 81]) ** 2 + np.array([0, 1 / 6, 4 / 27]) ** 2)
    assert s["brt"] == pytest.approx(want_g, abs=1e-15)


def test_forced_block_design_exact_series():
    s = exact_metrics(parse_proc("PBD:b=1", W11), n=6)
    steps = np.arange(1, 7)
    assert np.array_equal(s["expected_abs_imb"], np.tile([1.0, 0.0], 3))
    assert s["fi"] == pytest.approx(np.cumsum([0, 1] * 3) / steps, abs=1e-15)
    assert s["cummean_pda"] == pytest.approx(np.cumsum([0, 1] * 3) / steps, abs=1e-15)
    assert s["cummean_epcg_c"] == pytest.approx(np.cumsum([0.5, 1] * 3) / steps, abs=1e-15)
    assert s["arp_pi"] == pytest.approx(np.full((6, 2), 0.5), abs=1e-15)


def test_rand_arp_is_balanced_at_every_step():
    s = exact_metrics(parse_proc("RAND", W11, n=8))
    assert s["arp_pi"] == pytest.approx(np.full((8, 2), 0.5), abs=1e-14)


# ---------------------------------------------------------------------------
# the two exact routes agree

@pytest.mark.parametrize(
    "cfg",
    [
        parse_proc("CRD", W4321),
        parse_proc("RAND", W4321, n=6),
        parse_proc("TMD", W4321, n=6),
        parse_proc("PBD:b=2", W11),
        parse_proc("BUD:lambda=2", W4321),
        parse_proc("MWUD:alpha=2", W4321),
        parse_proc("DBCD:gamma=2", W4321),
        parse_proc("MaxEnt:eta=0.5", W4321),
        parse_proc("EBCD:p=2/3", W11),
        parse_proc("BBCD:gamma=1", W11),
    ],
    ids=lambda c: c.kind.value,
)
def test_dynamic_program_agrees_with_path_walk(cfg):
    dp = exact_metrics(cfg, n=6)
    pw = exact_metrics_by_paths(cfg, n=6)
    for key, arr in dp.items():
        assert np.allclose(arr, pw[key], atol=1e-10, rtol=0.0), key


def test_dlud_needs_the_path_walk():
    cfg = parse_proc("DLUD:a=2", W4321)
    with pytest.raises(OracleLimitError, match="path"):
        exact_distribution(cfg, n=4)
    out = exact_metrics_by_paths(cfg, n=4)
    assert out["arp_pi"].shape == (4, 4)
    assert tuple(out["arp_pi"][0]) == W4321.rho


def test_exact_metrics_is_the_series_of_exact_distribution():
    cfg = parse_proc("BSD:b=3", W11)
    a = exact_metrics(cfg, n=5)
    b = exact_distribution(cfg, n=5).series
    assert set(a) == set(b)
    for key in a:
        assert np.array_equal(a[key], b[key])


def test_fi_normalization_rescales_by_fi_max():
    cfg = parse_proc("MaxEnt:eta=1", W4321)
    raw = exact_metrics(cfg, n=6)["fi"]
    norm = exact_metrics(cfg, n=6, fi_normalized=True)["fi"]
    assert norm == pytest.approx(raw / fi_max(W4321.rho), rel=1e-12)
    assert raw.max() > 0.0


def test_multiarm_brt_recombines_capped_loss_and_normalized_fi():
    cfg = parse_proc("DBCD:gamma=2", W4321)
    s = exact_metrics(cfg, n=8)
    fi_norm = exact_metrics(cfg, n=8, fi_normalized=True)["fi"]
    want = np.sqrt(np.minimum(s["cummean_loss"], 1.0) ** 2 + fi_norm**2)
    assert s["brt"] == pytest.approx(want, rel=1e-12)


# ---------------------------------------------------------------------------
# limits and argument validation

def test_state_and_path_limits_raise():
    cfg = parse_proc("CRD", W4321)
    with pytest.raises(OracleLimitError, match="state space"):
        exact_distribution(cfg, n=3, max_states=3)
    with pytest.raises(OracleLimitError, match="path count"):
        exact_metrics_by_paths(cfg, n=3, max_paths=10)
    with pytest.raises(OracleLimitError, match="path count"):
        enumerate_paths(cfg, n=3, max_paths=10)
    assert MAX_DP_STATES >= 10_000 and MAX_PATHS >= 10_000


def test_horizon_is_required_when_config_has_none():
    with pytest.raises(ValueError, match="horizon"):
        exact_metrics(parse_proc("CRD", W11))


# ---------------------------------------------------------------------------
# compare(): the simulated-vs-exact gate

def test_compare_passes_on_matching_series():
    cfg = parse_proc("EBCD:p=2/3", W11)
    (sr,) = simulate(cfg, n=10, nsim=20_000, seed=2718)
    exact = exact_metrics(cfg, n=10)
    rep = compare(calc_expected_abs_imb(sr), exact["expected_abs_imb"])
    assert isinstance(rep, CompareReport)
    assert rep.ok
    assert rep.max_abs_z < 4.0
    assert "ok" in str(rep)


def test_compare_flags_an_injected_fault():
    cfg = parse_proc("EBCD:p=2/3", W11)
    (sr,) = simulate(cfg, n=10, nsim=20_000, seed=2718)
    exact = exact_metrics(cfg, n=10)["expected_abs_imb"].copy()
    exact[2] += 0.1
    rep = compare(calc_expected_abs_imb(sr), exact)
    assert not rep.ok
    assert rep.worst_step == 3
    assert rep.diff_at_worst == pytest.approx(0.1, abs=5e-3)
    assert rep.max_abs_diff == pytest.approx(0.1, abs=5e-3)
    assert "FAIL" in str(rep)


def test_compare_tolerates_deterministic_steps_with_zero_se():
    # a forced design yields identical replicates: se == 0, and the absolute
    # floor (not the z-test) must govern
    cfg = parse_proc("PBD:b=1", W11)
    (sr,) = simulate(cfg, n=6, nsim=500, seed=31)
    rep = compare(calc_expected_abs_imb(sr), exact_metrics(cfg, n=6)["expected_abs_imb"])
    assert rep.ok
    assert rep.max_abs_z == 0.0


def test_compare_rejects_bad_input():
    cfg = parse_proc("CRD", W11)
    (sr,) = simulate(cfg, n=4, nsim=100, seed=1)
    ms = calc_expected_abs_imb(sr)
    with pytest.raises(ValueError, match="shape"):
        compare(ms, np.zeros(7))
    (g,) = calc_brt(simulate(cfg, n=4, nsim=100, seed=1), "minmax")
    with pytest.raises(ValueError, match="standard errors"):
        compare(g, np.zeros(4))
