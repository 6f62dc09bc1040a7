"""Run configuration: the JSON file format and the procedure mini-language.

A run configuration describes a complete comparison: the procedures, the
horizon ``n``, the replicate count ``nsim``, the seed, and which metrics to
report.  Example::

    {
      "n": 40,
      "nsim": 10000,
      "seed": 314159,
      "w": [1, 1],
      "metrics": ["expected_abs_imb", "fi", "brt"],
      "output_dir": "out",
      "procedures": [
        "CRD",
        "PBD:b=2",
        {"kind": "BCDWIT", "params": {"p": "2/3", "b": 3}},
        {"kind": "DBCD", "params": {"gamma": 2}}
      ]
    }

Procedures are written either in the compact form ``KIND:p1=v1,p2=v2`` or as
an object with ``kind``/``params`` (and an optional per-procedure ``w``,
though every procedure in one run must resolve to the same allocation
target so that the comparison is like for like).  Parameter values may be
integers, decimals, or fractions like ``"2/3"`` (exactly ``2.0/3.0`` in
double precision).  ``TBD`` is accepted as an alias for the truncated
multinomial design, which it equals at two arms 1:1.

Validation failures raise :class:`ConfigError` whose message starts with the
JSON path of the offending field (``procedures[2].params.b: ...``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Optional, Sequence, Union

from .core import (
    AllocationTarget,
    ConfigError,
    Kind,
    ProcedureConfig,
    normalize_target,
)

__all__ = [
    "METRIC_IDS",
    "BRT_NORMALIZATIONS",
    "RunConfig",
    "parse_proc",
    "parse_run_config",
    "load_run_config",
    "parse_weights",
]

#: Metric identifiers accepted in configurations and emitted in output files.
METRIC_IDS = (
    "final_imb",
    "expected_abs_imb",
    "variance_of_imb",
    "expected_max_abs_imb",
    "cummean_loss",
    "cummean_epcg_c",
    "cummean_epcg_mp",
    "cummean_pda",
    "fi",
    "brt",
    "arp",
)

BRT_NORMALIZATIONS = ("absolute", "minmax")

_KIND_ALIASES = {kind.value.upper(): kind for kind in Kind}
_KIND_ALIASES["TBD"] = Kind.TMD

DEFAULT_NSIM = 10_000


@dataclass(frozen=True)
class RunConfig:
    """A validated run: procedures plus simulation and reporting settings."""

    procedures: tuple[ProcedureConfig, ...]
    n: int
    nsim: int = DEFAULT_NSIM
    seed: Optional[int] = None
    threads: Optional[int] = None
    metrics: tuple[str, ...] = field(default=METRIC_IDS)
    brt_normalization: str = "absolute"
    output_dir: Optional[str] = None
    emit_plots: bool = False


def _err(path: str, message: str) -> ConfigError:
    return ConfigError(f"{path}: {message}")


def _parse_number(text: str, path: str) -> Union[int, float]:
    """Parse an integer, decimal, or fraction written as a string."""
    s = text.strip()
    try:
        return int(s)
    except ValueError:
        pass
    try:
        if "/" in s:
            frac = Fraction(s)
            return frac.numerator / frac.denominator
        return float(s)
    except (ValueError, ZeroDivisionError):
        raise _err(path, f"cannot parse number {text!r}") from None


def _coerce_param(value: Any, path: str) -> Union[int, float]:
    if isinstance(value, bool):
        raise _err(path, "parameter values must be numbers")
    if isinstance(value, (int, float)):
        return value
    if isinstance(value, str):
        return _parse_number(value, path)
    raise _err(path, f"parameter values must be numbers, got {type(value).__name__}")


def _lookup_kind(name: str, path: str) -> Kind:
    kind = _KIND_ALIASES.get(name.strip().upper())
    if kind is None:
        valid = ", ".join(sorted(_KIND_ALIASES))
        raise _err(path, f"unknown procedure kind {name!r} (one of: {valid})")
    return kind


def parse_weights(values: Sequence[Any], path: str = "w") -> AllocationTarget:
    """Validate an allocation-ratio vector (e.g. ``[4, 3, 2, 1]``)."""
    if not isinstance(values, (list, tuple)):
        raise _err(path, "must be an array of positive numbers")
    parsed = []
    for i, v in enumerate(values):
        parsed.append(_coerce_param(v, f"{path}[{i}]"))
    try:
        return normalize_target(parsed)
    except ConfigError as exc:
        raise _err(path, str(exc)) from None


def parse_proc(
    spec: Union[str, dict],
    w: Optional[AllocationTarget] = None,
    n: Optional[int] = None,
    path: str = "proc",
) -> ProcedureConfig:
    """Build a procedure from its compact string or object form.

    ``w`` supplies the allocation target when the spec itself has none
    (defaults to two arms 1:1).  ``n`` is attached as the planned horizon,
    which designs that exhaust a fixed allocation require.
    """
    if isinstance(spec, str):
        head, _, tail = spec.partition(":")
        if not head.strip():
            raise _err(path, "empty procedure kind")
        kind = _lookup_kind(head, path)
        params: dict[str, Union[int, float]] = {}
        if tail.strip():
            for item in tail.split(","):
                name, eq, value = item.partition("=")
                name = name.strip()
                if not eq or not name or not value.strip():
                    raise _err(
                        path, f"malformed parameter {item!r} (expected name=value)"
                    )
                if name in params:
                    raise _err(path, f"duplicate parameter {name!r}")
                params[name] = _parse_number(value, f"{path}.{name}")
        target = w
    elif isinstance(spec, dict):
        unknown = set(spec) - {"kind", "proc", "params", "w"}
        if unknown:
            raise _err(path, f"unknown fields: {sorted(unknown)}")
        if "proc" in spec:
            if "kind" in spec or "params" in spec:
                raise _err(path, "'proc' cannot be combined with 'kind'/'params'")
            inner_w = parse_weights(spec["w"], f"{path}.w") if "w" in spec else w
            return parse_proc(spec["proc"], inner_w, n, path=f"{path}.proc")
        if "kind" not in spec or not isinstance(spec["kind"], str):
            raise _err(path, "missing procedure kind")
        kind = _lookup_kind(spec["kind"], f"{path}.kind")
        raw = spec.get("params", {})
        if not isinstance(raw, dict):
            raise _err(f"{path}.params", "must be an object of name: value pairs")
        params = {
            str(name): _coerce_param(value, f"{path}.params.{name}")
            for name, value in raw.items()
        }
        target = parse_weights(spec["w"], f"{path}.w") if "w" in spec else w
    else:
        raise _err(path, "must be a string or an object")
    if target is None:
        target = normalize_target((1, 1))
    try:
        return ProcedureConfig(kind, target, params, n=n)
    except ConfigError as exc:
        raise _err(path, str(exc)) from None


def _require_int(value: Any, path: str, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise _err(path, f"must be an integer >= {minimum}")
    if value < minimum:
        raise _err(path, f"must be >= {minimum}, got {value}")
    return value


def parse_run_config(doc: Any, path: str = "") -> RunConfig:
    """Validate a decoded JSON document into a :class:`RunConfig`."""
    root = path or "config"
    if not isinstance(doc, dict):
        raise _err(root, "top level must be a JSON object")
    known = {
        "n", "nsim", "seed", "threads", "w", "metrics", "procedures",
        "brt_normalization", "output_dir", "emit_plots",
    }
    unknown = set(doc) - known
    if unknown:
        raise _err(root, f"unknown fields: {sorted(unknown)}")

    def p(name: str) -> str:
        return f"{path}.{name}" if path else name

    if "n" not in doc:
        raise _err(p("n"), "required field is missing")
    n = _require_int(doc["n"], p("n"), 1)
    nsim = _require_int(doc.get("nsim", DEFAULT_NSIM), p("nsim"), 1)
    seed = None
    if doc.get("seed") is not None:
        seed = _require_int(doc["seed"], p("seed"), 0)
    threads = None
    if doc.get("threads") is not None:
        threads = _require_int(doc["threads"], p("threads"), 1)

    default_w = None
    if "w" in doc:
        default_w = parse_weights(doc["w"], p("w"))

    if "procedures" not in doc:
        raise _err(p("procedures"), "required field is missing")
    procs_doc = doc["procedures"]
    if not isinstance(procs_doc, list) or not procs_doc:
        raise _err(p("procedures"), "must be a non-empty array")
    procedures = tuple(
        parse_proc(entry, default_w, n, path=f"{p('procedures')}[{i}]")
        for i, entry in enumerate(procs_doc)
    )
    first = procedures[0].target.rho
    for i, proc in enumerate(procedures[1:], start=1):
        if proc.target.rho != first:
            raise _err(
                f"{p('procedures')}[{i}].w",
                "all procedures in one run must share the same allocation "
                f"target (got {proc.target.rho} vs {first})",
            )

    if "metrics" in doc:
        metrics_doc = doc["metrics"]
        if not isinstance(metrics_doc, list):
            raise _err(p("metrics"), "must be an array of metric names")
        if not metrics_doc:
            raise _err(p("metrics"), f"must not be empty (available: {', '.join(METRIC_IDS)})")
        seen = []
        for i, m in enumerate(metrics_doc):
            if m not in METRIC_IDS:
                raise _err(
                    f"{p('metrics')}[{i}]",
                    f"unknown metric {m!r} (available: {', '.join(METRIC_IDS)})",
                )
            if m not in seen:
                seen.append(m)
        metrics = tuple(seen)
    else:
        metrics = METRIC_IDS

    brt_norm = doc.get("brt_normalization", "absolute")
    if brt_norm not in BRT_NORMALIZATIONS:
        raise _err(
            p("brt_normalization"),
            f"must be one of {BRT_NORMALIZATIONS}, got {brt_norm!r}",
        )

    output_dir = doc.get("output_dir")
    if output_dir is not None and (not isinstance(output_dir, str) or not output_dir):
        raise _err(p("output_dir"), "must be a non-empty string")
    emit_plots = doc.get("emit_plots", False)
    if not isinstance(emit_plots, bool):
        raise _err(p("emit_plots"), "must be true or false")

    return RunConfig(
        procedures=procedures,
        n=n,
        nsim=nsim,
        seed=seed,
        threads=threads,
        metrics=metrics,
        brt_normalization=brt_norm,
        output_dir=output_dir,
        emit_plots=emit_plots,
    )


def load_run_config(file_path: str) -> RunConfig:
    """Read and validate a JSON run configuration from disk."""
    try:
        with open(file_path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{file_path}: invalid JSON: {exc}") from None
    return parse_run_config(doc)
