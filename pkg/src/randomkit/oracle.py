"""Exact operating characteristics for small trials, used to validate the
Monte Carlo estimators.

Two independent routes are provided:

* :func:`exact_distribution` runs a forward dynamic program over the
  distribution of the count vector, returning the per-step state tables and
  the exact metric series (:func:`exact_metrics` is the series-only
  shorthand).  It applies to every procedure whose conditional probabilities
  depend on the history only through ``(j, counts)`` — all of them except
  the drop-the-loser urn, whose urn contents are path dependent.  Work grows
  with the number of reachable count vectors (``C(j + K - 1, K - 1)`` at
  step j before pruning), so it is intended for small n / few arms and
  guarded by a state-count limit.

* :func:`enumerate_paths` lists every positive-probability assignment
  sequence with its exact probability, and :func:`exact_metrics_by_paths`
  folds the same tree into metric series without materializing it —
  tracking the urn for the drop-the-loser rule and the running maximum
  imbalance, which is not a function of the current counts.  Cost is
  O(K^n); guarded by a leaf limit.

Both routes reuse the scalar helpers from :mod:`randomkit.metrics` so that
tie sets, the deterministic-assignment threshold, and the forcing-index
scale are identical to the estimators under test.  :func:`compare` then
checks a simulated series against the exact values on the z-scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Kind, ProcedureConfig, ProcedureState, advance_state, initial_state
from .metrics import (
    MetricSeries,
    fi_step_scalar,
    guess_set_convergence,
    guess_set_mp,
    pda_indicator,
)
from .rules import conditional_probs

__all__ = [
    "OracleLimitError",
    "CompareReport",
    "ExactDistribution",
    "exact_distribution",
    "exact_metrics",
    "exact_metrics_by_paths",
    "enumerate_paths",
    "compare",
    "MAX_DP_STATES",
    "MAX_PATHS",
]

MAX_DP_STATES = 200_000
MAX_PATHS = 2_000_000


class OracleLimitError(RuntimeError):
    """The requested exact computation exceeds the configured size limits."""


def _imb_scalars(
    counts: tuple[int, ...], j: int, rho: tuple[float, ...], two_arm_equal: bool
) -> tuple[float, float, float]:
    """(|imb|, imb^2, signed D) after j assignments; D is 0 unless two-arm 1:1."""
    if two_arm_equal:
        d = float(counts[0] - counts[1])
        return abs(d), d * d, d
    jd = float(j)
    s = 0.0
    for k in range(len(rho)):
        t = counts[k] - jd * rho[k]
        s += t * t
    return math.sqrt(s), s, 0.0


class _Accumulator:
    """Collects per-step expectations shared by the DP and the path walk."""

    def __init__(self, cfg: ProcedureConfig, n: int, fi_normalized: bool):
        self.cfg = cfg
        self.n = n
        self.rho = cfg.target.rho
        self.two_eq = cfg.target.two_arm_equal
        self.fi_normalized = fi_normalized
        k = cfg.target.k
        self.e_abs = np.zeros(n)
        self.e_sq = np.zeros(n)
        self.e_d = np.zeros(n)
        self.epcg_c = np.zeros(n)
        self.epcg_mp = np.zeros(n)
        self.pda = np.zeros(n)
        self.fi = np.zeros(n)
        self.fi_norm = np.zeros(n)
        self.pi = np.zeros((n, k))

    def pre_step(
        self, j: int, p: float, counts: tuple[int, ...], phi: tuple[float, ...]
    ) -> None:
        """Contributions that depend on the state *before* assignment j+1,
        weighted by the probability p of reaching it."""
        sc = guess_set_convergence(counts, j, self.rho)
        self.epcg_c[j] += p * sum(phi[k] for k in sc) / len(sc)
        sm = guess_set_mp(phi)
        self.epcg_mp[j] += p * sum(phi[k] for k in sm) / len(sm)
        self.pda[j] += p * pda_indicator(phi)
        self.fi[j] += p * fi_step_scalar(phi, self.rho, self.two_eq, self.fi_normalized)
        self.fi_norm[j] += p * fi_step_scalar(phi, self.rho, self.two_eq, True)
        for k in range(len(phi)):
            self.pi[j, k] += p * phi[k]

    def post_step(self, j: int, p: float, counts: tuple[int, ...]) -> None:
        """Contributions of the state reached *after* assignment j+1."""
        a, sq, d = _imb_scalars(counts, j + 1, self.rho, self.two_eq)
        self.e_abs[j] += p * a
        self.e_sq[j] += p * sq
        self.e_d[j] += p * d

    def finish(self) -> dict[str, np.ndarray]:
        steps = np.arange(1, self.n + 1, dtype=np.float64)

        def cummean(x: np.ndarray) -> np.ndarray:
            return x.cumsum() / steps

        if self.two_eq:
            variance = self.e_sq - self.e_d * self.e_d
        else:
            variance = self.e_sq
        loss = cummean(self.e_sq / steps)
        fi = cummean(self.fi)
        fi_norm = cummean(self.fi_norm)
        ub = loss if self.two_eq else np.minimum(loss, 1.0)
        brt = np.sqrt(ub * ub + fi_norm * fi_norm)
        return {
            "expected_abs_imb": self.e_abs,
            "variance_of_imb": variance,
            "cummean_loss": loss,
            "cummean_epcg_c": cummean(self.epcg_c),
            "cummean_epcg_mp": cummean(self.epcg_mp),
            "cummean_pda": cummean(self.pda),
            "fi": fi,
            "brt": brt,
            "arp_pi": self.pi,
        }


def _resolve(cfg: ProcedureConfig, n: Optional[int], fi_normalized: Optional[bool]):
    if n is None:
        n = cfg.n
    if n is None:
        raise ValueError("n is required when the configuration has no horizon")
    if fi_normalized is None:
        fi_normalized = cfg.target.two_arm_equal
    return n, fi_normalized


@dataclass(frozen=True)
class ExactDistribution:
    """The exact law of the count vector, step by step, plus metric series.

    ``tables[j]`` maps each count vector reachable after ``j + 1``
    assignments to its probability (each table sums to 1 within 1e-10);
    ``series`` holds arrays keyed like ``MetricSeries.metric`` plus
    ``arp_pi`` of shape (n, K).
    """

    cfg: ProcedureConfig
    n: int
    tables: tuple[dict[tuple[int, ...], float], ...]
    series: dict[str, np.ndarray]


def exact_distribution(
    cfg: ProcedureConfig,
    n: Optional[int] = None,
    fi_normalized: Optional[bool] = None,
    max_states: int = MAX_DP_STATES,
) -> ExactDistribution:
    """Forward dynamic program over the distribution of count vectors.

    The running-maximum imbalance is not included in the series; it needs
    the path walk.  Raises :class:`OracleLimitError` for the drop-the-loser
    urn (path-dependent urn state) or when the state space exceeds
    ``max_states``.
    """
    n, fi_normalized = _resolve(cfg, n, fi_normalized)
    if cfg.kind is Kind.DLUD:
        raise OracleLimitError(
            "drop-the-loser urn state is path dependent; use exact_metrics_by_paths"
        )
    acc = _Accumulator(cfg, n, fi_normalized)
    k_arms = cfg.target.k
    states: dict[tuple[int, ...], float] = {(0,) * k_arms: 1.0}
    tables = []
    for j in range(n):
        new: dict[tuple[int, ...], float] = {}
        for counts, p in states.items():
            phi = conditional_probs(ProcedureState(j, counts), cfg)
            acc.pre_step(j, p, counts, phi)
            for k in range(k_arms):
                f = phi[k]
                if f > 0.0:
                    nxt = counts[:k] + (counts[k] + 1,) + counts[k + 1 :]
                    new[nxt] = new.get(nxt, 0.0) + p * f
        if len(new) > max_states:
            raise OracleLimitError(
                f"state space exceeds {max_states} at step {j + 1}"
            )
        for counts, p in new.items():
            acc.post_step(j, p, counts)
        states = new
        tables.append(dict(new))
    return ExactDistribution(cfg=cfg, n=n, tables=tuple(tables), series=acc.finish())


def exact_metrics(
    cfg: ProcedureConfig,
    n: Optional[int] = None,
    fi_normalized: Optional[bool] = None,
    max_states: int = MAX_DP_STATES,
) -> dict[str, np.ndarray]:
    """Exact metric series by dynamic programming (``exact_distribution``
    without the state tables)."""
    return exact_distribution(cfg, n, fi_normalized, max_states).series


def exact_metrics_by_paths(
    cfg: ProcedureConfig,
    n: Optional[int] = None,
    fi_normalized: Optional[bool] = None,
    max_paths: int = MAX_PATHS,
) -> dict[str, np.ndarray]:
    """Exact per-step metric values by enumerating every assignment path.

    Handles every procedure (the drop-the-loser urn is walked explicitly)
    and additionally returns ``expected_max_abs_imb``.  Cost grows as K^n;
    raises :class:`OracleLimitError` beyond ``max_paths`` leaves.
    """
    n, fi_normalized = _resolve(cfg, n, fi_normalized)
    acc = _Accumulator(cfg, n, fi_normalized)
    e_maxabs = np.zeros(n)
    rho = cfg.target.rho
    two_eq = cfg.target.two_arm_equal
    k_arms = cfg.target.k
    leaves = 0

    def walk(state: ProcedureState, p: float, runmax: float) -> None:
        nonlocal leaves
        j = state.j
        if j == n:
            leaves += 1
            if leaves > max_paths:
                raise OracleLimitError(f"path count exceeds {max_paths}")
            return
        phi = conditional_probs(state, cfg)
        acc.pre_step(j, p, state.counts, phi)
        for k in range(k_arms):
            f = phi[k]
            if f <= 0.0:
                continue
            child = advance_state(state, k, cfg)
            pc = p * f
            a, _, _ = _imb_scalars(child.counts, j + 1, rho, two_eq)
            rm = a if a > runmax else runmax
            acc.post_step(j, pc, child.counts)
            e_maxabs[j] += pc * rm
            walk(child, pc, rm)

    walk(initial_state(cfg), 1.0, 0.0)
    out = acc.finish()
    out["expected_max_abs_imb"] = e_maxabs
    return out


def enumerate_paths(
    cfg: ProcedureConfig,
    n: Optional[int] = None,
    max_paths: int = MAX_PATHS,
) -> list[tuple[tuple[int, ...], float]]:
    """Every positive-probability assignment sequence with its probability.

    Arms are 0-based indices, matching ``TrialPath.assignments``.  The
    probabilities sum to 1 within 1e-10.  Cost is O(K^n); raises
    :class:`OracleLimitError` beyond ``max_paths`` sequences.
    """
    n, _ = _resolve(cfg, n, None)
    k_arms = cfg.target.k
    out: list[tuple[tuple[int, ...], float]] = []
    prefix: list[int] = []

    def walk(state: ProcedureState, p: float) -> None:
        if state.j == n:
            if len(out) >= max_paths:
                raise OracleLimitError(f"path count exceeds {max_paths}")
            out.append((tuple(prefix), p))
            return
        phi = conditional_probs(state, cfg)
        for k in range(k_arms):
            f = phi[k]
            if f <= 0.0:
                continue
            prefix.append(k)
            walk(advance_state(state, k, cfg), p * f)
            prefix.pop()

    walk(initial_state(cfg), 1.0)
    return out


@dataclass(frozen=True)
class CompareReport:
    """Outcome of checking a simulated series against exact values."""

    metric: str
    label: str
    ok: bool
    max_abs_z: float
    worst_step: int
    diff_at_worst: float
    max_abs_diff: float

    def __str__(self) -> str:
        status = "ok" if self.ok else "FAIL"
        return (
            f"{self.metric}[{self.label}]: {status} "
            f"max|z|={self.max_abs_z:.3f} at step {self.worst_step} "
            f"(diff there {self.diff_at_worst:.3e}, max|diff| {self.max_abs_diff:.3e})"
        )


def compare(
    series: MetricSeries,
    exact: np.ndarray,
    z_max: float = 4.0,
    exact_tol: float = 1e-12,
) -> CompareReport:
    """Check a Monte Carlo series against exact values.

    A step passes when ``|estimate - exact| <= max(z_max * se, exact_tol)``.
    The absolute floor matters at steps where the procedure is deterministic:
    there the replicate values are constant, the reported standard error
    reflects nothing but accumulated rounding (so a pure z-test would demand
    sub-ulp agreement), and the honest requirement is agreement to within the
    estimator's own accumulation accuracy.  Wherever the standard error is
    real the z criterion governs.
    """
    est = np.asarray(series.estimate, dtype=np.float64)
    ex = np.asarray(exact, dtype=np.float64)
    if est.shape != ex.shape:
        raise ValueError(f"shape mismatch: {est.shape} vs {ex.shape}")
    if series.se is None:
        raise ValueError("series has no standard errors to compare against")
    se = np.asarray(series.se, dtype=np.float64)
    diff = np.abs(est - ex)
    passed = diff <= np.maximum(z_max * se, exact_tol)
    with np.errstate(invalid="ignore", divide="ignore"):
        z = np.where(diff <= exact_tol, 0.0, np.where(se > 0.0, diff / se, np.inf))
        # rank failing steps above passing ones; z/(1+z) keeps passes in [0, 1)
        rank = np.where(passed, np.where(np.isfinite(z), z / (1.0 + z), 1.0), 1.0 + z)
    worst = int(np.argmax(rank))
    return CompareReport(
        metric=series.metric,
        label=series.label,
        ok=bool(passed.all()),
        max_abs_z=float(z[worst]),
        worst_step=int(series.step[worst]),
        diff_at_worst=float(diff[worst]),
        max_abs_diff=float(diff.max()),
    )
