"""Operating characteristics estimated from simulated allocation paths.

Balance metrics
---------------
For two arms at 1:1 the imbalance is the signed difference
``D(j) = N_E(j) - N_C(j)``; in general it is the Euclidean distance
``d(j) = sqrt(sum_k (N_k(j) - j rho_k)^2)`` of the counts from perfect
allocation.  The cumulative-average loss divides the expected squared
imbalance at step i by i before averaging, so it is O(1) in j.

Randomness metrics
------------------
Guessing strategies receive the realized assignments: the *convergence*
guesser (``"C"``) picks the most under-represented arm (all tied arms share
the guess, contributing 1/|tie| when one of them was assigned) and the
*maximum-probability* guesser (``"MP"``) picks the arms with the largest
recorded conditional probability.  A step counts as deterministic for the
proportion-of-deterministic-assignments metric when its largest probability
reaches ``1 - 1e-12``.  The forcing index is the classical
``(2/j) sum E|phi_i - 1/2|`` for two arms at 1:1; for unequal or multi-arm
targets it is the cumulative mean Euclidean distance of ``phi_i`` from
``rho``, optionally divided by its theoretical maximum so that complete
randomization scores 0 and a deterministic rule scores 1.

The scalar helpers (``fi_step_scalar`` etc.) are shared with the
exact-distribution oracle so that Monte Carlo estimates and exact values use
identical tie handling and thresholds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .core import DETERMINISTIC_THRESHOLD
from .engine import SimulationResult

__all__ = [
    "MetricSeries",
    "FinalImbalance",
    "ArpResult",
    "calc_final_imb",
    "calc_expected_abs_imb",
    "calc_variance_of_imb",
    "calc_expected_max_abs_imb",
    "calc_cummean_loss",
    "calc_cummean_epcg",
    "calc_cummean_pda",
    "calc_fi",
    "calc_brt",
    "eval_arp",
    "fi_max",
    "fi_step_scalar",
    "pda_indicator",
    "guess_set_convergence",
    "guess_set_mp",
]


@dataclass(frozen=True)
class MetricSeries:
    """One metric for one procedure: a per-step estimate with its Monte Carlo
    standard error (``se`` is None when the value is exact by construction)."""

    metric: str
    label: str
    step: np.ndarray
    estimate: np.ndarray
    se: Optional[np.ndarray]


@dataclass(frozen=True)
class FinalImbalance:
    """Replicate-level final imbalance values (signed D for two arms at 1:1)."""

    label: str
    values: np.ndarray


@dataclass(frozen=True)
class ArpResult:
    """Unconditional assignment probabilities pi_jk = E[phi_jk] per step and
    arm, with arms flagged where |pi - rho| exceeds three standard errors."""

    label: str
    rho: tuple[float, ...]
    step: np.ndarray
    pi: np.ndarray       # (n, K)
    se: np.ndarray       # (n, K)
    flagged: np.ndarray  # (n, K) bool


# ---------------------------------------------------------------------------
# scalar helpers shared with the oracle

def fi_max(rho: Sequence[float]) -> float:
    """Largest possible per-step distance of phi from rho: forcing the arm
    that maximizes sqrt((1-rho_k)^2 + sum_{l != k} rho_l^2)."""
    best = 0.0
    for k in range(len(rho)):
        s = 0.0
        for l in range(len(rho)):
            t = (1.0 - rho[l]) if l == k else rho[l]
            s += t * t
        best = max(best, math.sqrt(s))
    return best


def fi_step_scalar(
    phi: Sequence[float], rho: Sequence[float], two_arm_equal: bool, normalized: bool
) -> float:
    """Per-step forcing-index contribution for one probability row."""
    if two_arm_equal and normalized:
        return 2.0 * abs(phi[0] - 0.5)
    s = 0.0
    for k in range(len(rho)):
        t = phi[k] - rho[k]
        s += t * t
    dist = math.sqrt(s)
    if normalized:
        return dist / fi_max(rho)
    return dist


def pda_indicator(phi: Sequence[float]) -> float:
    """1 when the row forces an arm (largest probability >= 1 - 1e-12)."""
    return 1.0 if max(phi) >= DETERMINISTIC_THRESHOLD else 0.0


def guess_set_convergence(
    counts: Sequence[int], j: int, rho: Sequence[float]
) -> tuple[int, ...]:
    """Arms guessed by the convergence / minimum-imbalance strategy before
    step j+1: the arms minimizing N_k - j*rho_k (all of them on ties)."""
    delta = [counts[k] - j * rho[k] for k in range(len(rho))]
    dmin = min(delta)
    return tuple(k for k, v in enumerate(delta) if v == dmin)


def guess_set_mp(phi: Sequence[float]) -> tuple[int, ...]:
    """Arms guessed by the maximum-probability strategy: argmax of the row
    (all of them on ties)."""
    pmax = max(phi)
    return tuple(k for k, v in enumerate(phi) if v == pmax)


# ---------------------------------------------------------------------------
# array plumbing

def _col_mean(x: np.ndarray) -> np.ndarray:
    """Column mean accumulated in extended precision.

    Reductions along the slow axis sum sequentially, which costs ~nsim*eps of
    absolute accuracy; for steps where a procedure is deterministic the Monte
    Carlo mean must instead agree with exact values to ~1e-12, so accumulate
    in long double and round once at the end.
    """
    return x.mean(axis=0, dtype=np.longdouble).astype(np.float64)


def _mean_se(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Column means with their standard errors over replicates (axis 0)."""
    nsim = x.shape[0]
    mean = _col_mean(x)
    if nsim < 2:
        return mean, np.zeros_like(mean)
    centered = x - mean[None, :]
    var = (centered * centered).sum(axis=0, dtype=np.longdouble) / (nsim - 1)
    se = np.sqrt(var.astype(np.float64)) / math.sqrt(nsim)
    return mean, se


def _cum_counts(sr: SimulationResult) -> np.ndarray:
    """Cumulative per-arm counts, shape (nsim, n, K)."""
    onehot = sr.assignments[:, :, None] == np.arange(sr.k, dtype=sr.assignments.dtype)
    return onehot.cumsum(axis=1, dtype=np.int64)


def _signed_d(sr: SimulationResult) -> np.ndarray:
    cum = _cum_counts(sr)
    return (cum[:, :, 0] - cum[:, :, 1]).astype(np.float64)


def _distance_sq(sr: SimulationResult) -> np.ndarray:
    """Squared Euclidean distance of counts from perfect allocation,
    accumulated arm by arm so it matches the scalar loop bit-for-bit."""
    cum = _cum_counts(sr)
    rho = sr.cfg.target.rho
    steps = np.arange(1, sr.n + 1, dtype=np.float64)
    acc = np.zeros((sr.nsim, sr.n))
    for k in range(sr.k):
        t = cum[:, :, k] - steps[None, :] * rho[k]
        acc += t * t
    return acc


def _imb_sq(sr: SimulationResult) -> np.ndarray:
    """Squared imbalance per step: D^2 for two arms at 1:1, d^2 otherwise."""
    if sr.cfg.target.two_arm_equal:
        d = _signed_d(sr)
        return d * d
    return _distance_sq(sr)


def _abs_imb(sr: SimulationResult) -> np.ndarray:
    if sr.cfg.target.two_arm_equal:
        return np.abs(_signed_d(sr))
    return np.sqrt(_distance_sq(sr))


def _steps(sr: SimulationResult) -> np.ndarray:
    return np.arange(1, sr.n + 1)


def _cummean(x: np.ndarray) -> np.ndarray:
    """Row-wise cumulative mean over steps."""
    denom = np.arange(1, x.shape[1] + 1, dtype=np.float64)
    return x.cumsum(axis=1) / denom[None, :]


# ---------------------------------------------------------------------------
# balance metrics

def calc_final_imb(sr: SimulationResult) -> FinalImbalance:
    """Final imbalance of every replicate: signed D(n) for two arms at 1:1,
    the distance d(n) otherwise."""
    if sr.cfg.target.two_arm_equal:
        values = _signed_d(sr)[:, -1]
    else:
        values = np.sqrt(_distance_sq(sr)[:, -1])
    return FinalImbalance(label=sr.label, values=values)


def calc_expected_abs_imb(sr: SimulationResult) -> MetricSeries:
    """E|D(j)| (or E d(j)) per step."""
    mean, se = _mean_se(_abs_imb(sr))
    return MetricSeries("expected_abs_imb", sr.label, _steps(sr), mean, se)


def calc_variance_of_imb(sr: SimulationResult) -> MetricSeries:
    """Var D(j) for two arms at 1:1 (sample variance, with the standard error
    of the variance from the fourth central moment); mean squared distance
    E d(j)^2 otherwise."""
    if not sr.cfg.target.two_arm_equal:
        mean, se = _mean_se(_distance_sq(sr))
        return MetricSeries("variance_of_imb", sr.label, _steps(sr), mean, se)
    d = _signed_d(sr)
    nsim = sr.nsim
    mean = _col_mean(d)
    centered = d - mean[None, :]
    if nsim < 2:
        return MetricSeries(
            "variance_of_imb", sr.label, _steps(sr), np.zeros(sr.n), np.zeros(sr.n)
        )
    sq = centered * centered
    s2 = (sq.sum(axis=0, dtype=np.longdouble) / (nsim - 1)).astype(np.float64)
    m4 = _col_mean(sq * sq)
    # Var(s^2) = mu4/N - sigma^4 (N-3)/(N(N-1)) exactly, and mu4 >= sigma^4,
    # so the numerator is at least 2 sigma^4/(N-1).  Clamp the plug-in to that
    # bound: for two-point imbalance distributions (D = +-c) the leading term
    # m4 - s^4 vanishes identically and the raw plug-in collapses well below
    # the true sampling error of s^2.
    s4 = s2 * s2
    numer = np.maximum(m4 - s4 * (nsim - 3) / (nsim - 1), 2.0 * s4 / (nsim - 1))
    se = np.sqrt(numer / nsim)
    return MetricSeries("variance_of_imb", sr.label, _steps(sr), s2, se)


def calc_expected_max_abs_imb(sr: SimulationResult) -> MetricSeries:
    """Expected running maximum of the absolute imbalance."""
    running = np.maximum.accumulate(_abs_imb(sr), axis=1)
    mean, se = _mean_se(running)
    return MetricSeries("expected_max_abs_imb", sr.label, _steps(sr), mean, se)


def calc_cummean_loss(sr: SimulationResult) -> MetricSeries:
    """L(j) = (1/j) sum_{i<=j} E[imb(i)^2] / i."""
    denom = np.arange(1, sr.n + 1, dtype=np.float64)
    per_rep = _cummean(_imb_sq(sr) / denom[None, :])
    mean, se = _mean_se(per_rep)
    return MetricSeries("cummean_loss", sr.label, _steps(sr), mean, se)


# ---------------------------------------------------------------------------
# randomness / predictability metrics

def _prev_counts(sr: SimulationResult) -> np.ndarray:
    """Counts before each step: zeros at step 1, shape (nsim, n, K)."""
    cum = _cum_counts(sr)
    prev = np.empty_like(cum)
    prev[:, 0, :] = 0
    prev[:, 1:, :] = cum[:, :-1, :]
    return prev


def _epcg_contrib(sr: SimulationResult, gs: str) -> np.ndarray:
    if gs == "C":
        prev = _prev_counts(sr).astype(np.float64)
        steps_prev = np.arange(0, sr.n, dtype=np.float64)
        rho = np.asarray(sr.cfg.target.rho)
        score = prev - steps_prev[None, :, None] * rho[None, None, :]
        best = score.min(axis=2, keepdims=True)
    elif gs == "MP":
        score = sr.probs
        best = score.max(axis=2, keepdims=True)
    else:
        raise ValueError(f"unknown guessing strategy {gs!r} (use 'C' or 'MP')")
    in_set = score == best
    set_size = in_set.sum(axis=2)
    hit = np.take_along_axis(
        in_set, sr.assignments[:, :, None].astype(np.int64), axis=2
    )[:, :, 0]
    return np.where(hit, 1.0 / set_size, 0.0)


def calc_cummean_epcg(sr: SimulationResult, gs: str) -> MetricSeries:
    """Cumulative expected proportion of correct guesses under strategy
    ``gs`` ('C' convergence / minimum imbalance, 'MP' maximum probability).
    Tied guesses contribute their expected value 1/|tie set|."""
    per_rep = _cummean(_epcg_contrib(sr, gs))
    mean, se = _mean_se(per_rep)
    return MetricSeries(f"cummean_epcg_{gs.lower()}", sr.label, _steps(sr), mean, se)


def calc_cummean_pda(sr: SimulationResult) -> MetricSeries:
    """Cumulative expected proportion of deterministic assignments."""
    forced = (sr.probs.max(axis=2) >= DETERMINISTIC_THRESHOLD).astype(np.float64)
    per_rep = _cummean(forced)
    mean, se = _mean_se(per_rep)
    return MetricSeries("cummean_pda", sr.label, _steps(sr), mean, se)


def _fi_per_step(sr: SimulationResult, normalized: bool) -> np.ndarray:
    rho = sr.cfg.target.rho
    if sr.cfg.target.two_arm_equal and normalized:
        return 2.0 * np.abs(sr.probs[:, :, 0] - 0.5)
    acc = np.zeros((sr.nsim, sr.n))
    for k in range(sr.k):
        t = sr.probs[:, :, k] - rho[k]
        acc += t * t
    dist = np.sqrt(acc)
    if normalized:
        return dist / fi_max(rho)
    return dist


def calc_fi(sr: SimulationResult, normalized: Optional[bool] = None) -> MetricSeries:
    """Forcing index FI(j): cumulative mean distance of the conditional
    probabilities from the target.

    By default two arms at 1:1 use the classical 0-1 scale
    ``(2/j) sum E|phi_i - 1/2|`` and other targets report the raw Euclidean
    distance; pass ``normalized`` explicitly to override.  Note the 0-1 scale
    assigns a permuted block design with block size 2 a forcing index of 1/2,
    not 1: only its every second step is deterministic.
    """
    if normalized is None:
        normalized = sr.cfg.target.two_arm_equal
    per_rep = _cummean(_fi_per_step(sr, normalized))
    mean, se = _mean_se(per_rep)
    return MetricSeries("fi", sr.label, _steps(sr), mean, se)


def calc_brt(
    srs: Union[SimulationResult, Sequence[SimulationResult]],
    normalization: str = "absolute",
) -> list[MetricSeries]:
    """Balance/randomness trade-off G(j) per procedure.

    ``normalization="absolute"`` (default): for two arms at 1:1,
    ``G = sqrt(L^2 + FI^2)`` with the 0-1 forcing index; otherwise
    ``G = sqrt(min(L, 1)^2 + (FI / FI_max)^2)``.  Standard errors come from
    the delta method with the replicate-level covariance of (L, FI).

    ``normalization="minmax"``: both coordinates are rescaled to [0, 1] per
    step across the supplied procedure set before combining (ranking view for
    heatmaps; no standard errors).
    """
    if isinstance(srs, SimulationResult):
        srs = [srs]
    if normalization not in ("absolute", "minmax"):
        raise ValueError(f"unknown normalization {normalization!r}")
    denom = None
    per_rep_l = []
    per_rep_f = []
    for sr in srs:
        steps = np.arange(1, sr.n + 1, dtype=np.float64)
        per_rep_l.append(_cummean(_imb_sq(sr) / steps[None, :]))
        per_rep_f.append(_cummean(_fi_per_step(sr, normalized=True)))
    if normalization == "minmax":
        l_est = np.stack([_col_mean(x) for x in per_rep_l])
        f_est = np.stack([_col_mean(x) for x in per_rep_f])

        def rescale(m: np.ndarray) -> np.ndarray:
            lo = m.min(axis=0, keepdims=True)
            span = m.max(axis=0, keepdims=True) - lo
            out = np.zeros_like(m)
            np.divide(m - lo, span, out=out, where=span > 0)
            return out

        g = np.sqrt(rescale(l_est) ** 2 + rescale(f_est) ** 2)
        return [
            MetricSeries("brt", sr.label, _steps(sr), g[i], None)
            for i, sr in enumerate(srs)
        ]
    out = []
    for sr, lrep, frep in zip(srs, per_rep_l, per_rep_f):
        nsim = sr.nsim
        l_mean = _col_mean(lrep)
        f_mean = _col_mean(frep)
        if sr.cfg.target.two_arm_equal:
            ub = l_mean
            dub = np.ones_like(l_mean)
        else:
            ub = np.minimum(l_mean, 1.0)
            dub = (l_mean < 1.0).astype(np.float64)
        g = np.sqrt(ub * ub + f_mean * f_mean)
        if nsim < 2:
            se = np.zeros_like(g)
        else:
            lc = lrep - l_mean
            fc = frep - f_mean
            var_l = ((lc * lc).sum(axis=0, dtype=np.longdouble) / (nsim - 1)).astype(
                np.float64
            ) / nsim
            var_f = ((fc * fc).sum(axis=0, dtype=np.longdouble) / (nsim - 1)).astype(
                np.float64
            ) / nsim
            cov = ((lc * fc).sum(axis=0, dtype=np.longdouble) / (nsim - 1)).astype(
                np.float64
            ) / nsim
            with np.errstate(invalid="ignore", divide="ignore"):
                dl = np.where(g > 0, ub * dub / g, 0.0)
                df = np.where(g > 0, f_mean / g, 0.0)
            var_g = dl * dl * var_l + df * df * var_f + 2.0 * dl * df * cov
            se = np.sqrt(np.maximum(var_g, 0.0))
        out.append(MetricSeries("brt", sr.label, _steps(sr), g, se))
    return out


def eval_arp(sr: SimulationResult) -> ArpResult:
    """Estimate the unconditional assignment probabilities pi_jk as the mean
    recorded phi_jk, flagging arms where |pi - rho| > max(3 se, 1e-12).

    The absolute floor keeps steps where phi is the same in every replicate
    (se then measures only accumulated rounding, not sampling error) from
    being flagged over a last-ulp difference.
    """
    pi, se = _mean_se(sr.probs.reshape(sr.nsim, -1))
    pi = pi.reshape(sr.n, sr.k)
    se = se.reshape(sr.n, sr.k)
    rho = np.asarray(sr.cfg.target.rho)
    diff = np.abs(pi - rho[None, :])
    flagged = diff > np.maximum(3.0 * se, 1e-12)
    return ArpResult(
        label=sr.label, rho=sr.cfg.target.rho, step=_steps(sr), pi=pi, se=se,
        flagged=flagged,
    )
