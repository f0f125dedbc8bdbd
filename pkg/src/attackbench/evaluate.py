"""Robust-accuracy measurement of a model under generated examples."""

from dataclasses import dataclass

import numpy as np

from .model import Model, predict
from .ops import ExampleBatch, LabelBatch, l2_norms


@dataclass(frozen=True)
class RobustnessReport:
    """Accuracy and perturbation statistics for one evaluation.

    robust_accuracy follows the conditional convention: one minus the
    attack's success rate on the originally-correct subset.
    attack_success_rate counts successes over all examples. Fields that
    need the original inputs (clean accuracy, robust accuracy, norms)
    are None when only adversarial examples are available.
    """

    clean_accuracy: float | None
    adversarial_accuracy: float
    robust_accuracy: float | None
    attack_success_rate: float
    mean_linf: float | None
    max_linf: float | None
    mean_l2: float | None
    max_l2: float | None
    total_queries: int
    wall_time_s: float
    config: dict

    def to_dict(self) -> dict:
        return {
            "clean_accuracy": self.clean_accuracy,
            "adversarial_accuracy": self.adversarial_accuracy,
            "robust_accuracy": self.robust_accuracy,
            "attack_success_rate": self.attack_success_rate,
            "mean_linf": self.mean_linf,
            "max_linf": self.max_linf,
            "mean_l2": self.mean_l2,
            "max_l2": self.max_l2,
            "total_queries": self.total_queries,
            "wall_time_s": self.wall_time_s,
            "config": self.config,
        }


def evaluate(model: Model, adversarial: ExampleBatch, labels: LabelBatch,
             originals: ExampleBatch | None = None, *, queries: int = 0,
             wall_time_s: float = 0.0, config: dict | None = None) -> RobustnessReport:
    """Measure accuracy under the given adversarial batch.

    Success means the adversarial prediction differs from the true
    label. When `originals` is provided, clean accuracy, the
    conditional robust accuracy, and perturbation norms are filled in.
    """
    if labels.n != adversarial.n:
        raise ValueError(f"got {labels.n} labels for {adversarial.n} examples")
    y = labels.labels
    adv_preds = predict(model, adversarial)
    adv_correct = adv_preds == y
    success = ~adv_correct
    adversarial_accuracy = float(np.mean(adv_correct))
    attack_success_rate = float(np.mean(success))

    clean_accuracy = robust_accuracy = None
    mean_linf = max_linf = mean_l2 = max_l2 = None
    if originals is not None:
        if originals.n != adversarial.n or originals.d != adversarial.d:
            raise ValueError("originals shape does not match adversarial batch")
        clean_correct = predict(model, originals) == y
        clean_accuracy = float(np.mean(clean_correct))
        n_correct = int(clean_correct.sum())
        if n_correct > 0:
            fooled_on_correct = int(np.sum(success & clean_correct))
            robust_accuracy = 1.0 - fooled_on_correct / n_correct
        else:
            robust_accuracy = 0.0
        delta = adversarial.data.astype(np.float64) - originals.data.astype(np.float64)
        linf = np.abs(delta).max(axis=1)
        l2 = l2_norms(delta)
        mean_linf = float(linf.mean())
        max_linf = float(linf.max())
        mean_l2 = float(l2.mean())
        max_l2 = float(l2.max())

    return RobustnessReport(
        clean_accuracy=clean_accuracy,
        adversarial_accuracy=adversarial_accuracy,
        robust_accuracy=robust_accuracy,
        attack_success_rate=attack_success_rate,
        mean_linf=mean_linf,
        max_linf=max_linf,
        mean_l2=mean_l2,
        max_l2=max_l2,
        total_queries=queries,
        wall_time_s=wall_time_s,
        config=config or {},
    )
