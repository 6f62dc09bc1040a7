"""Monte Carlo simulation engine.

Runs a set of procedure configurations for ``nsim`` replicates of ``n``
subjects each, recording every assignment together with the conditional
probability row it was drawn from.

Reproducibility contract
------------------------
Replicate ``r`` of the config at position ``c`` consumes the counter-based
random stream ``child_stream(seed, c, r)``: a Philox bit generator whose
128-bit key is derived once per config via
``SeedSequence(entropy=seed, spawn_key=(c,))`` and whose 256-bit counter
starts at ``r * 2**192``, giving every replicate a disjoint block of at least
2**192 variates.  Both the SeedSequence hash and the Philox algorithm are
frozen by NumPy's stream-compatibility policy, and each assignment consumes
exactly one uniform variate, so identical inputs give identical outputs
regardless of worker count or scheduling.  Exact streams are still an
implementation detail: statistical checks should use distributional
tolerances, not frozen stream values.

The per-replicate allocation loop runs in a compiled kernel when the
extension built at install time (``RANDOMKIT_BACKEND=python`` forces the
pure-Python fallback, ``=compiled`` requires the extension).  Both kernels
produce bit-identical results; ``benchmarks/bench_backends.py`` compares
their speed.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence, Union

import numpy as np

from . import _engine_py
from .core import (
    ConfigError,
    Kind,
    ProcedureConfig,
    ProcedureState,
    STRICT_CAP_KINDS,
    TrialPath,
    label,
    normalize_target,
)

try:  # compiled kernel is optional
    from . import _engine_cy as _compiled
except ImportError:  # pragma: no cover - depends on install environment
    _compiled = None

DEFAULT_SEED = 314159

#: Largest number of arms the engine accepts (compiled-kernel scratch bound).
MAX_ARMS = 32

#: Refuse allocations whose probability tensor would exceed this many
#: float64 elements (8 GB); split the run or reduce nsim instead.
MAX_TENSOR_ELEMENTS = 1_000_000_000


def backend_name() -> str:
    """Name of the kernel ``simulate`` will use: 'compiled' or 'python'."""
    return "compiled" if _active_backend() is not _engine_py else "python"


def _active_backend():
    choice = os.environ.get("RANDOMKIT_BACKEND", "auto").lower()
    if choice == "python":
        return _engine_py
    if choice == "compiled":
        if _compiled is None:
            raise RuntimeError(
                "RANDOMKIT_BACKEND=compiled but the compiled kernel is not installed"
            )
        return _compiled
    if choice != "auto":
        raise RuntimeError(f"RANDOMKIT_BACKEND must be auto, compiled or python, not {choice!r}")
    return _compiled if _compiled is not None else _engine_py


@lru_cache(maxsize=None)
def _config_key(seed: int, cfg_index: int) -> int:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(cfg_index,))
    k0, k1 = ss.generate_state(2, np.uint64)
    return int(k0) | (int(k1) << 64)


def child_stream(seed: int, cfg_index: int, replicate: int) -> np.random.Generator:
    """Independent random stream for one replicate of one config.

    See the module docstring for the exact key/counter derivation; the
    mapping ``(seed, cfg_index, replicate) -> stream`` is deterministic and
    collision-free by construction.
    """
    if cfg_index < 0 or replicate < 0:
        raise ValueError("cfg_index and replicate must be non-negative")
    bg = np.random.Philox(key=_config_key(seed, cfg_index), counter=replicate << 192)
    return np.random.Generator(bg)


def draw_arm(phi: Sequence[float], rng: np.random.Generator) -> int:
    """Draw a 0-based arm index from probability row ``phi`` by inverse CDF,
    consuming exactly one uniform variate from ``rng``."""
    return _engine_py.pick_arm(phi, rng.random())


@dataclass(frozen=True)
class SimulationResult:
    """All replicates of one procedure configuration.

    ``assignments[r, j]`` is the 0-based arm of subject ``j+1`` in replicate
    ``r``; ``probs[r, j]`` the conditional probability row it was drawn from.
    """

    cfg: ProcedureConfig
    label: str
    n: int
    nsim: int
    seed: int
    cfg_index: int
    assignments: np.ndarray  # (nsim, n) uint8
    probs: np.ndarray        # (nsim, n, K) float64

    @property
    def k(self) -> int:
        return self.cfg.k

    def path(self, r: int) -> TrialPath:
        """Replicate ``r`` as a :class:`TrialPath`."""
        return TrialPath(
            assignments=tuple(int(a) for a in self.assignments[r]),
            probs=tuple(tuple(float(x) for x in row) for row in self.probs[r]),
        )

    def save(self, path: str) -> None:
        """Dump to ``.npz`` (compact) or ``.json`` (1-based assignments)."""
        meta = {
            "kind": self.cfg.kind.value,
            "w": list(self.cfg.target.w),
            "params": dict(self.cfg.params),
            "cfg_n": self.cfg.n,
            "label": self.label,
            "n": self.n,
            "nsim": self.nsim,
            "seed": self.seed,
            "cfg_index": self.cfg_index,
        }
        if path.endswith(".json"):
            doc = dict(meta)
            doc["assignments"] = (self.assignments.astype(np.int64) + 1).tolist()
            doc["probs"] = self.probs.tolist()
            with open(path, "w", encoding="utf-8") as fh:
                json.dump(doc, fh)
        elif path.endswith(".npz"):
            np.savez_compressed(
                path,
                meta=np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8),
                assignments=self.assignments,
                probs=self.probs,
            )
        else:
            raise ValueError(f"unsupported dump format for {path!r} (use .npz or .json)")

    @staticmethod
    def load(path: str) -> "SimulationResult":
        if path.endswith(".json"):
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
            assignments = np.asarray(doc["assignments"], dtype=np.int64) - 1
            probs = np.asarray(doc["probs"], dtype=np.float64)
            meta = doc
        elif path.endswith(".npz"):
            with np.load(path) as data:
                meta = json.loads(bytes(data["meta"]).decode("utf-8"))
                assignments = data["assignments"]
                probs = data["probs"]
        else:
            raise ValueError(f"unsupported dump format for {path!r} (use .npz or .json)")
        cfg = ProcedureConfig(
            kind=Kind(meta["kind"]),
            target=normalize_target(meta["w"]),
            params=meta["params"],
            n=meta["cfg_n"],
        )
        return SimulationResult(
            cfg=cfg,
            label=meta["label"],
            n=int(meta["n"]),
            nsim=int(meta["nsim"]),
            seed=int(meta["seed"]),
            cfg_index=int(meta["cfg_index"]),
            assignments=np.ascontiguousarray(assignments, dtype=np.uint8),
            probs=np.ascontiguousarray(probs, dtype=np.float64),
        )


def resolve_threads(threads: Optional[int]) -> int:
    """Explicit argument, else the RANDOMKIT_THREADS environment variable,
    else 1."""
    if threads is None:
        env = os.environ.get("RANDOMKIT_THREADS")
        if env:
            try:
                threads = int(env)
            except ValueError:
                raise ConfigError(f"RANDOMKIT_THREADS must be an integer, got {env!r}")
        else:
            threads = 1
    if threads < 1:
        raise ConfigError(f"thread count must be >= 1, got {threads}")
    return threads


def simulate(
    cfgs: Union[ProcedureConfig, Sequence[ProcedureConfig]],
    n: int,
    nsim: int,
    seed: int = DEFAULT_SEED,
    threads: Optional[int] = None,
) -> list[SimulationResult]:
    """Simulate every config for ``nsim`` replicates of ``n`` subjects.

    Streams are keyed by config *position*, so a config keeps its replicate
    streams only while its index in ``cfgs`` is unchanged.  Worker threads
    split replicates into contiguous chunks writing disjoint rows; the output
    is identical for any thread count.
    """
    if isinstance(cfgs, ProcedureConfig):
        cfgs = [cfgs]
    cfgs = list(cfgs)
    if not cfgs:
        raise ConfigError("no procedures to simulate")
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    if nsim < 1:
        raise ConfigError(f"nsim must be >= 1, got {nsim}")
    for cfg in cfgs:
        if cfg.k > MAX_ARMS:
            raise ConfigError(f"at most {MAX_ARMS} arms supported, got {cfg.k}")
        if cfg.kind in STRICT_CAP_KINDS and n > cfg.n:  # type: ignore[operator]
            raise ConfigError(
                f"{cfg.kind.value} plans {cfg.n} subjects; cannot simulate {n}"
            )
        if nsim * n * cfg.k > MAX_TENSOR_ELEMENTS:
            raise ConfigError(
                f"nsim*n*K = {nsim * n * cfg.k} exceeds {MAX_TENSOR_ELEMENTS} "
                "float64 elements; reduce nsim or split the run into batches"
            )
    threads = resolve_threads(threads)
    backend = _active_backend()

    results = []
    for c, cfg in enumerate(cfgs):
        uniforms = np.empty((nsim, n), dtype=np.float64)
        for r in range(nsim):
            uniforms[r] = child_stream(seed, c, r).random(n)
        assignments = np.zeros((nsim, n), dtype=np.uint8)
        probs = np.empty((nsim, n, cfg.k), dtype=np.float64)
        nwork = min(threads, nsim)
        if nwork == 1:
            backend.run_paths(cfg, uniforms, assignments, probs, 0, nsim)
        else:
            bounds = np.linspace(0, nsim, nwork + 1, dtype=int)
            with ThreadPoolExecutor(max_workers=nwork) as pool:
                futures = [
                    pool.submit(backend.run_paths, cfg, uniforms, assignments, probs,
                                int(lo), int(hi))
                    for lo, hi in zip(bounds[:-1], bounds[1:])
                    if hi > lo
                ]
                for fut in futures:
                    fut.result()
        results.append(
            SimulationResult(
                cfg=cfg,
                label=label(cfg),
                n=n,
                nsim=nsim,
                seed=seed,
                cfg_index=c,
                assignments=assignments,
                probs=probs,
            )
        )
    return results


def replay_states(sr: SimulationResult, r: int) -> list[ProcedureState]:
    """The state sequence (before each assignment) of replicate ``r``,
    reconstructed from the recorded assignments."""
    from .core import advance_state, initial_state

    state = initial_state(sr.cfg)
    out = [state]
    for j in range(sr.n - 1):
        state = advance_state(state, int(sr.assignments[r, j]), sr.cfg)
        out.append(state)
    return out
