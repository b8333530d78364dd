"""Beta-Bernoulli Thompson sampling over a fixed arm set.

Arms hold success/failure counts under a Beta(1, 1) prior. Until every arm
has ``warmup_pulls`` recorded pulls, selection is deterministic: the least
pulled arm wins, ties broken by arm id, which walks the id-sorted arm list
round-robin when rewards arrive between selections. After warm-up each
selection draws one sample per arm from a generator derived from
``(rng_seed, draws)``; the draw counter advances by one per Thompson
selection, so a given state always reproduces the same selection sequence.

State lives in ``graph.BanditSlot`` so the engine can snapshot and roll it
back alongside the other mutable slots. The functions here never mutate a
slot except through ``record_draw``/``update_arm``.
"""

from __future__ import annotations

import numpy as np

from .errors import NotFoundError, ValidationError
from .graph import BanditSlot


def new_slot(
    context_id: str,
    arm_ids: list[str],
    warmup_pulls: int = 20,
    rng_seed: int = 0,
) -> BanditSlot:
    if not arm_ids:
        raise ValidationError("bandit needs at least one arm")
    if len(set(arm_ids)) != len(arm_ids):
        raise ValidationError("duplicate arm ids")
    if warmup_pulls < 0:
        raise ValidationError("warmup_pulls must be >= 0")
    return BanditSlot(
        context_id=context_id,
        arm_ids=list(arm_ids),
        successes={a: 0 for a in arm_ids},
        failures={a: 0 for a in arm_ids},
        warmup_pulls=warmup_pulls,
        rng_seed=rng_seed,
    )


def select_arm(slot: BanditSlot) -> tuple[str, bool]:
    """Return (arm_id, thompson) without touching the slot.

    ``thompson`` is False for warm-up picks, which consume no randomness.
    After a Thompson pick the caller must advance ``slot.draws`` (the engine
    does this through a logged graph op) before selecting again, or it will
    see the same sample.
    """
    if not slot.arm_ids:
        raise ValidationError("bandit has no arms")
    cold = [a for a in sorted(slot.arm_ids) if slot.pulls(a) < slot.warmup_pulls]
    if cold:
        return min(cold, key=lambda a: (slot.pulls(a), a)), False
    rng = np.random.default_rng([slot.rng_seed & 0xFFFFFFFF, slot.draws])
    ordered = sorted(slot.arm_ids)
    samples = [
        rng.beta(1 + slot.successes[a], 1 + slot.failures[a]) for a in ordered
    ]
    best = min(range(len(ordered)), key=lambda i: (-samples[i], ordered[i]))
    return ordered[best], True


def update_arm(slot: BanditSlot, arm_id: str, reward: int) -> None:
    if arm_id not in slot.arm_ids:
        raise NotFoundError(f"unknown arm {arm_id!r}")
    if reward not in (0, 1):
        raise ValidationError(f"reward must be 0 or 1, got {reward!r}")
    if reward == 1:
        slot.successes[arm_id] += 1
    else:
        slot.failures[arm_id] += 1


def posterior_mean(slot: BanditSlot, arm_id: str) -> float:
    if arm_id not in slot.arm_ids:
        raise NotFoundError(f"unknown arm {arm_id!r}")
    s, f = slot.successes[arm_id], slot.failures[arm_id]
    return (1 + s) / (2 + s + f)


def exploit_arm(slot: BanditSlot) -> str:
    """Deterministic frozen-mode pick: highest posterior mean, ties by id."""
    return min(sorted(slot.arm_ids), key=lambda a: (-posterior_mean(slot, a), a))


class ThompsonBandit:
    """Standalone wrapper that owns its slot and draw counter."""

    def __init__(
        self,
        arm_ids: list[str],
        warmup_pulls: int = 20,
        rng_seed: int = 0,
        context_id: str = "bandit",
    ):
        self.slot = new_slot(context_id, arm_ids, warmup_pulls, rng_seed)

    def select(self) -> str:
        arm, thompson = select_arm(self.slot)
        if thompson:
            self.slot.draws += 1
        return arm

    def update(self, arm_id: str, reward: int) -> None:
        update_arm(self.slot, arm_id, reward)

    def pulls(self, arm_id: str) -> int:
        return self.slot.pulls(arm_id)
