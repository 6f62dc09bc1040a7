"""Pure-Python allocation kernel.

Replays each replicate step by step through the reference probability rules
in :mod:`randomkit.general` / :mod:`randomkit.two_arm`.  The compiled kernel
in ``_engine_cy`` produces bit-identical output; this module is the fallback
when no C compiler was available at install time.
"""

from __future__ import annotations

from .core import ProcedureConfig, advance_state, initial_state
from .rules import conditional_probs


def pick_arm(phi, u: float) -> int:
    """Inverse-CDF draw: the first arm whose cumulative probability exceeds
    ``u``, skipping zero-probability arms; the final boundary is treated as 1
    so a fall-through lands on the last positive-probability arm."""
    acc = 0.0
    last = -1
    for k, p in enumerate(phi):
        if p > 0.0:
            last = k
            acc += p
            if u < acc:
                return k
    if last < 0:
        raise ValueError("no arm has positive probability")
    return last


def run_paths(cfg: ProcedureConfig, uniforms, out_assign, out_probs, r0: int, r1: int) -> None:
    """Fill rows [r0, r1) of the assignment/probability tensors, consuming one
    uniform variate per subject from ``uniforms``."""
    n = uniforms.shape[1]
    for r in range(r0, r1):
        state = initial_state(cfg)
        row_u = uniforms[r]
        for j in range(n):
            phi = conditional_probs(state, cfg)
            out_probs[r, j] = phi
            arm = pick_arm(phi, row_u[j])
            out_assign[r, j] = arm
            state = advance_state(state, arm, cfg)
