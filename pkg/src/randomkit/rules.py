"""Dispatch from a procedure kind to its probability rule."""

from __future__ import annotations

from . import general, two_arm
from .core import Kind, ProbabilityVector, ProcedureConfig, ProcedureState

RULES = {
    Kind.CRD: general.crd_prob,
    Kind.RAND: general.rand_prob,
    Kind.TMD: general.tmd_prob,
    Kind.PBD: general.pbd_prob,
    Kind.BUD: general.bud_prob,
    Kind.MWUD: general.mwud_prob,
    Kind.DLUD: general.dlud_prob,
    Kind.DBCD: general.dbcd_prob,
    Kind.MAXENT: general.maxent_prob,
    Kind.BSD: two_arm.bsd_prob,
    Kind.BCDWIT: two_arm.bcdwit_prob,
    Kind.EUD: two_arm.eud_prob,
    Kind.EBCD: two_arm.ebcd_prob,
    Kind.ABCD: two_arm.abcd_prob,
    Kind.GBCD: two_arm.gbcd_prob,
    Kind.BBCD: two_arm.bbcd_prob,
}


def conditional_probs(state: ProcedureState, cfg: ProcedureConfig) -> ProbabilityVector:
    """Evaluate the probability rule of ``cfg`` at ``state``."""
    return RULES[cfg.kind](state, cfg)
