"""Core domain types for randomization procedures.

A *procedure* assigns each incoming subject to one of ``K >= 2`` treatment
arms so that the realized sample sizes track a fixed allocation ratio
``w_1 : w_2 : ... : w_K``.  Everything downstream (the simulation engine, the
operating-characteristic metrics, the exact-distribution oracle) works with
the small value types defined here:

* :class:`AllocationTarget` -- the target ratio and its normalization ``rho``.
* :class:`ProcedureConfig`  -- a procedure kind plus its parameters.
* :class:`ProcedureState`   -- the information a rule needs to produce the
  next conditional assignment probabilities (step, counts, urn for DLUD).
* :class:`ProbabilityVector` -- a validated vector of arm probabilities.
* :class:`TrialPath`        -- one realized allocation sequence.

Arm indices are 0-based throughout the in-memory API; all user-facing output
(tables, CSV) is 1-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Mapping, NamedTuple, Optional, Sequence

#: Tolerance on |sum(phi) - 1| accepted from a probability rule.  Larger
#: deviations indicate a bug in the rule and raise instead of renormalizing.
PROB_TOL = 1e-12

#: A conditional probability at or above this value counts as a forced
#: (deterministic) assignment for the predictability metrics.
DETERMINISTIC_THRESHOLD = 1.0 - 1e-12


class Kind(str, Enum):
    """Supported randomization procedures."""

    CRD = "CRD"          # completely randomized design
    RAND = "RAND"        # random allocation rule (fixed final counts)
    TMD = "TMD"          # truncated multinomial (TBD at K=2)
    PBD = "PBD"          # permuted block design
    BUD = "BUD"          # block urn design
    MWUD = "MWUD"        # mass-weighted urn design
    DLUD = "DLUD"        # drop-the-loser urn design
    DBCD = "DBCD"        # doubly adaptive biased coin design
    MAXENT = "MAXENT"    # maximum-entropy constrained balance
    BSD = "BSD"          # big stick design
    BCDWIT = "BCDWIT"    # biased coin design with imbalance tolerance
    EUD = "EUD"          # Ehrenfest urn design
    EBCD = "EBCD"        # Efron's biased coin design
    ABCD = "ABCD"        # adjustable biased coin design
    GBCD = "GBCD"        # generalized biased coin design
    BBCD = "BBCD"        # Bayesian biased coin design


#: Stable integer codes (declaration order) shared with the compiled kernel.
KIND_CODES = {kind: code for code, kind in enumerate(Kind)}

#: Kinds defined only for two arms with a 1:1 target.
TWO_ARM_KINDS = frozenset(
    {Kind.BSD, Kind.BCDWIT, Kind.EUD, Kind.EBCD, Kind.ABCD, Kind.GBCD, Kind.BBCD}
)

#: Kinds that enforce exact final sample sizes and therefore need ``n``.
STRICT_CAP_KINDS = frozenset({Kind.RAND, Kind.TMD})

#: Kinds whose weights are ball/slot counts and must be positive integers.
INTEGER_WEIGHT_KINDS = frozenset({Kind.PBD, Kind.BUD, Kind.DLUD})


class ConfigError(ValueError):
    """Raised for invalid targets, parameters, or run configurations."""


@dataclass(frozen=True)
class AllocationTarget:
    """A fixed allocation ratio ``w`` and its normalization ``rho = w / sum(w)``.

    ``rho`` is computed once here and reused verbatim by every rule so that
    all components see bit-identical target probabilities.
    """

    w: tuple[float, ...]
    rho: tuple[float, ...]

    @property
    def k(self) -> int:
        return len(self.w)

    @property
    def two_arm_equal(self) -> bool:
        return self.k == 2 and self.rho[0] == 0.5 and self.rho[1] == 0.5

    def integer_w(self) -> tuple[int, ...]:
        """Weights as positive integers; raises if any weight is fractional."""
        out = []
        for x in self.w:
            if x != int(x):
                raise ConfigError(f"weights must be positive integers, got {self.w}")
            out.append(int(x))
        return tuple(out)


def normalize_target(w: Sequence[float]) -> AllocationTarget:
    """Validate a weight vector and compute target probabilities.

    Weights must be finite, strictly positive, and at least two.  ``rho`` is
    invariant (up to rounding) under scaling of ``w`` by a positive constant.
    """
    ws = tuple(float(x) for x in w)
    if len(ws) < 2:
        raise ConfigError(f"need at least two arms, got {len(ws)}")
    for x in ws:
        if not math.isfinite(x) or x <= 0.0:
            raise ConfigError(f"weights must be finite and positive, got {ws}")
    total = 0.0
    for x in ws:
        total += x
    rho = tuple(x / total for x in ws)
    return AllocationTarget(w=ws, rho=rho)


@lru_cache(maxsize=None)
def allocation_caps(rho: tuple[float, ...], n: int) -> tuple[int, ...]:
    """Integer final sample sizes summing to ``n`` for cap-enforcing rules.

    Each arm gets ``floor(n * rho_k)``; the remaining subjects go to the arms
    with the largest fractional parts, ties resolved toward the lower index.
    """
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    raw = [n * r for r in rho]
    caps = [int(math.floor(x)) for x in raw]
    rem = n - sum(caps)
    order = sorted(range(len(rho)), key=lambda k: (-(raw[k] - caps[k]), k))
    for k in order[:rem]:
        caps[k] += 1
    return tuple(caps)


_PARAM_DOMAINS = {
    # kind -> ordered (name, description) parameter spec
    Kind.CRD: (),
    Kind.RAND: (),
    Kind.TMD: (),
    Kind.PBD: (("b", "block factor"),),
    Kind.BUD: (("lambda", "urn replenishment factor"),),
    Kind.MWUD: (("alpha", "imbalance control"),),
    Kind.DLUD: (("a", "immigration factor"),),
    Kind.DBCD: (("gamma", "allocation pressure"),),
    Kind.MAXENT: (("eta", "balance/randomness trade-off"),),
    Kind.BSD: (("b", "imbalance tolerance"),),
    Kind.BCDWIT: (("p", "coin bias"), ("b", "imbalance tolerance")),
    Kind.EUD: (("b", "imbalance tolerance"),),
    Kind.EBCD: (("p", "coin bias"),),
    Kind.ABCD: (("a", "imbalance exponent"),),
    Kind.GBCD: (("gamma", "allocation pressure"),),
    Kind.BBCD: (("gamma", "flattening exponent"),),
}


def _check_int(kind: Kind, name: str, v: float, minimum: int) -> None:
    if v != int(v) or int(v) < minimum:
        raise ConfigError(f"{kind.value}: {name} must be an integer >= {minimum}, got {v}")


@dataclass(frozen=True)
class ProcedureConfig:
    """One procedure: kind, allocation target, parameters, and (if the rule
    enforces exact final counts) the planned sample size ``n``."""

    kind: Kind
    target: AllocationTarget
    params: Mapping[str, float] = field(default_factory=dict)
    n: Optional[int] = None

    def __post_init__(self) -> None:
        kind = self.kind
        expected = {name for name, _ in _PARAM_DOMAINS[kind]}
        got = set(self.params)
        if got != expected:
            raise ConfigError(
                f"{kind.value}: expected parameters {sorted(expected)}, got {sorted(got)}"
            )
        if kind in TWO_ARM_KINDS:
            if not self.target.two_arm_equal:
                raise ConfigError(f"{kind.value} is defined for two arms with a 1:1 target")
        if kind in INTEGER_WEIGHT_KINDS:
            self.target.integer_w()
        if kind in STRICT_CAP_KINDS:
            if self.n is None:
                raise ConfigError(f"{kind.value} requires the planned sample size n")
            if self.n < 1:
                raise ConfigError(f"{kind.value}: n must be >= 1, got {self.n}")
        p = self.params
        if kind is Kind.PBD:
            _check_int(kind, "b", p["b"], 1)
        elif kind is Kind.BUD:
            _check_int(kind, "lambda", p["lambda"], 1)
        elif kind is Kind.MWUD:
            if not p["alpha"] > 0:
                raise ConfigError(f"MWUD: alpha must be > 0, got {p['alpha']}")
        elif kind is Kind.DLUD:
            _check_int(kind, "a", p["a"], 1)
        elif kind is Kind.DBCD:
            if not p["gamma"] >= 0:
                raise ConfigError(f"DBCD: gamma must be >= 0, got {p['gamma']}")
        elif kind is Kind.MAXENT:
            if not 0.0 <= p["eta"] <= 1.0:
                raise ConfigError(f"MAXENT: eta must be in [0, 1], got {p['eta']}")
        elif kind in (Kind.BSD, Kind.EUD):
            _check_int(kind, "b", p["b"], 1)
        elif kind is Kind.BCDWIT:
            _check_int(kind, "b", p["b"], 1)
            if not 0.5 < p["p"] <= 1.0:
                raise ConfigError(f"BCDWIT: p must be in (0.5, 1], got {p['p']}")
        elif kind is Kind.EBCD:
            if not 0.5 < p["p"] <= 1.0:
                raise ConfigError(f"EBCD: p must be in (0.5, 1], got {p['p']}")
        elif kind is Kind.ABCD:
            if not p["a"] >= 0:
                raise ConfigError(f"ABCD: a must be >= 0, got {p['a']}")
        elif kind is Kind.GBCD:
            if not p["gamma"] >= 0:
                raise ConfigError(f"GBCD: gamma must be >= 0, got {p['gamma']}")
        elif kind is Kind.BBCD:
            if not p["gamma"] > 0:
                raise ConfigError(f"BBCD: gamma must be > 0, got {p['gamma']}")

    @property
    def k(self) -> int:
        return self.target.k

    def caps(self) -> tuple[int, ...]:
        """Final sample sizes enforced by RAND/TMD."""
        if self.n is None:
            raise ConfigError(f"{self.kind.value}: caps need the planned sample size n")
        return allocation_caps(self.target.rho, self.n)


class ProcedureState(NamedTuple):
    """Minimal state a rule needs: subjects assigned so far, per-arm counts,
    and -- for DLUD only -- the current urn composition (treatment balls; the
    single immigration token is implicit)."""

    j: int
    counts: tuple[int, ...]
    urn: Optional[tuple[int, ...]] = None


class ProbabilityVector(tuple):
    """Arm assignment probabilities: entries in [0, 1], summing to 1 within
    ``PROB_TOL``.  Rules never renormalize silently -- a larger deviation is a
    bug and raises."""

    def __new__(cls, values: Iterable[float]) -> "ProbabilityVector":
        vals = tuple(float(v) for v in values)
        total = 0.0
        for v in vals:
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"probability {v!r} outside [0, 1] in {vals}")
            total += v
        if abs(total - 1.0) > PROB_TOL:
            raise ValueError(f"probabilities sum to {total!r}, not 1 within {PROB_TOL}")
        return super().__new__(cls, vals)


@dataclass(frozen=True)
class TrialPath:
    """One realized allocation sequence.

    ``assignments[j]`` is the 0-based arm of subject ``j+1``; ``probs[j]`` is
    the conditional probability row that assignment was drawn from, so the
    realized arm always has strictly positive probability in its row.
    """

    assignments: tuple[int, ...]
    probs: tuple[tuple[float, ...], ...]

    def arm_numbers(self) -> tuple[int, ...]:
        """1-based arm labels for display."""
        return tuple(a + 1 for a in self.assignments)


def initial_state(cfg: ProcedureConfig) -> ProcedureState:
    """State before the first subject: zero counts (and the starting urn of
    ``w_k`` treatment balls per arm for DLUD)."""
    zeros = (0,) * cfg.k
    urn = cfg.target.integer_w() if cfg.kind is Kind.DLUD else None
    return ProcedureState(j=0, counts=zeros, urn=urn)


def advance_state(state: ProcedureState, arm: int, cfg: ProcedureConfig) -> ProcedureState:
    """Apply one assignment (0-based ``arm``) to ``state``.

    For DLUD the drawn ball is removed from the urn; if the assigned arm has
    no ball left, the immigration token must have fired first, adding
    ``a * w_k`` balls of every type (repeated until the arm has a ball).
    RAND/TMD refuse to advance beyond their planned sample size.
    """
    if not 0 <= arm < cfg.k:
        raise ValueError(f"arm index {arm} out of range for {cfg.k} arms")
    if cfg.kind in STRICT_CAP_KINDS and state.j >= cfg.n:  # type: ignore[operator]
        raise ValueError(f"{cfg.kind.value}: all {cfg.n} subjects already assigned")
    counts = list(state.counts)
    counts[arm] += 1
    urn = None
    if cfg.kind is Kind.DLUD:
        assert state.urn is not None
        a = int(cfg.params["a"])
        w = cfg.target.integer_w()
        balls = list(state.urn)
        while balls[arm] == 0:
            for k in range(cfg.k):
                balls[k] += a * w[k]
        balls[arm] -= 1
        urn = tuple(balls)
    return ProcedureState(j=state.j + 1, counts=tuple(counts), urn=urn)


def _fmt_param(v: float) -> str:
    """Short canonical number: integers bare, short decimals as written,
    repeating decimals as small fractions (2/3 rather than 0.6666...)."""
    if v == int(v):
        return str(int(v))
    for nd in range(1, 7):
        if round(v, nd) == v:
            return f"{v:.{nd}f}"
    frac = Fraction(v).limit_denominator(64)
    if abs(float(frac) - v) < 1e-12:
        return f"{frac.numerator}/{frac.denominator}"
    return repr(v)


_LABEL_NAMES = {Kind.MAXENT: "MaxEnt"}


def label(cfg: ProcedureConfig) -> str:
    """Canonical human-readable name, e.g. ``PBD(2)``, ``EBCD(2/3)``,
    ``MaxEnt(0.5)``.  A two-arm 1:1 truncated multinomial is the classical
    truncated binomial design and is labelled ``TBD``."""
    if cfg.kind is Kind.TMD and cfg.target.two_arm_equal:
        return "TBD"
    name = _LABEL_NAMES.get(cfg.kind, cfg.kind.value)
    order = [pname for pname, _ in _PARAM_DOMAINS[cfg.kind]]
    if not order:
        return name
    args = ",".join(_fmt_param(float(cfg.params[p])) for p in order)
    return f"{name}({args})"
