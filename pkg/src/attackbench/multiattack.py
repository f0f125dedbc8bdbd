"""Sequential attack composition: first success wins.

Each sub-attack sees only the examples no earlier sub-attack fooled,
always starting from the original inputs. An example's output freezes
at the first sub-attack that fools it; examples never fooled return the
last executed sub-attack's candidate. Mixed-norm plans are allowed, so
ball guarantees hold per example for the attack that produced it.
"""

from dataclasses import dataclass

import numpy as np

from . import ops
from .attacks import ATTACK_NAMES, AttackConfig, AttackOutcome, run_attack
from .model import Model


@dataclass(frozen=True)
class MultiAttackPlan:
    """An ordered, non-empty list of (attack name, config) pairs.

    All sub-attacks must share mode and return_type; tpgd is excluded
    because its success criterion is label-free.
    """

    attacks: tuple[tuple[str, AttackConfig], ...]

    def __post_init__(self):
        plan = tuple(self.attacks)
        if not plan:
            raise ValueError("multi-attack plan must contain at least one attack")
        for name, cfg in plan:
            if name not in ATTACK_NAMES:
                raise ValueError(f"unknown attack {name!r} in plan")
            if name == "tpgd":
                raise ValueError("tpgd cannot join a multi-attack plan (label-free success)")
            cfg.validate(name)
        modes = {cfg.mode for _, cfg in plan}
        if len(modes) > 1:
            raise ValueError(f"sub-attacks must share one mode, got {sorted(modes)}")
        returns = {cfg.return_type for _, cfg in plan}
        if len(returns) > 1:
            raise ValueError(f"sub-attacks must share one return_type, got {sorted(returns)}")
        object.__setattr__(self, "attacks", plan)

    @property
    def mode(self) -> str:
        return self.attacks[0][1].mode

    @property
    def return_type(self) -> str:
        return self.attacks[0][1].return_type


def multi_attack(plan: MultiAttackPlan, model: Model, batch: ops.ExampleBatch,
                 labels: ops.LabelBatch, *, targets: ops.LabelBatch | None = None,
                 example_ids=None) -> AttackOutcome:
    """Run the plan, keeping the first successful example per input."""
    n = batch.n
    ids = np.arange(n) if example_ids is None else np.asarray(example_ids, dtype=np.int64)
    if ids.shape != (n,):
        raise ValueError(f"example_ids shape {ids.shape} does not match batch size {n}")

    adv = batch.data.copy()
    success = np.zeros(n, dtype=bool)
    producers = [""] * n
    active = np.arange(n)
    queries = 0

    for name, cfg in plan.attacks:
        sub_batch = ops.ExampleBatch(batch.data[active])
        sub_labels = ops.LabelBatch(labels.labels[active])
        sub_targets = None if targets is None else ops.LabelBatch(targets.labels[active])
        out = run_attack(name, model, sub_batch, sub_labels, cfg,
                         targets=sub_targets, example_ids=ids[active])
        queries += out.queries
        adv[active] = out.adversarial.data
        for idx in active:
            producers[idx] = name
        fooled = active[out.success]
        success[fooled] = True
        active = active[~out.success]
        if active.size == 0:
            break

    delta = adv.astype(np.float64) - batch.data.astype(np.float64)
    return AttackOutcome(
        adversarial=ops.ExampleBatch(adv),
        success=success,
        linf_norms=np.abs(delta).max(axis=1),
        l2_norms=ops.l2_norms(delta),
        queries=queries,
        producers=tuple(producers),
    )
