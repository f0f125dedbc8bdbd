"""The ten gradient-based attacks behind one configuration contract.

Every attack takes (model, batch, labels, config) and returns an
AttackOutcome whose adversarial batch lies in [0, 1]^D and inside the
attack's eps-ball around the input (the unbounded-L2 cw excepted).
Randomness is drawn per example from streams keyed by
(config.seed, example id), so outputs do not depend on how a dataset is
chunked into batches; pass `example_ids` to keep dataset positions when
attacking a slice.

Modes: `targeted` flips gradient ascent on the true label into descent
on the caller-supplied target; `least_likely` targets the class with
the smallest clean logit. `queries` counts model forward passes,
including the final success check and, in least-likely mode, the one
clean pass that picks targets.
"""

from dataclasses import dataclass

import numpy as np

from . import ops
from ._rng import L2_INIT, NORMAL_INIT, UNIFORM_INIT, per_example_normal, per_example_uniform, stream
from .model import (
    CrossEntropyLoss,
    CWObjective,
    KLVsReference,
    Model,
    _backprop_input,
    _trace,
    _unwrap,
    forward,
    input_gradient,
    predict,
)

MODES = ("default", "targeted", "least_likely")
RETURN_TYPES = ("float", "int")
ATTACK_NAMES = ("fgsm", "bim", "cw", "rfgsm", "pgd", "pgdl2", "eotpgd", "tpgd", "ffgsm", "mifgsm")


@dataclass(frozen=True)
class AttackConfig:
    """Attack hyperparameters plus mode, return type, and seed.

    Fields mirror the usual symbols: eps is the max perturbation, alpha
    the step size, c/kappa/lr the cw trade-off, confidence, and Adam
    rate, decay the momentum factor, sampling the number of gradient
    samples averaged per step.
    """

    eps: float = 8 / 255
    alpha: float = 2 / 255
    steps: int = 1
    c: float = 1.0
    kappa: float = 0.0
    lr: float = 0.01
    decay: float = 1.0
    sampling: int = 10
    random_start: bool = True
    mode: str = "default"
    return_type: str = "float"
    seed: int = 0

    def validate(self, attack: str | None = None) -> None:
        if self.eps < 0:
            raise ValueError(f"eps must be >= 0, got {self.eps}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.c < 0:
            raise ValueError(f"c must be >= 0, got {self.c}")
        if self.kappa < 0:
            raise ValueError(f"kappa must be >= 0, got {self.kappa}")
        if self.lr <= 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if self.decay < 0:
            raise ValueError(f"decay must be >= 0, got {self.decay}")
        if self.sampling < 1:
            raise ValueError(f"sampling must be >= 1, got {self.sampling}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.return_type not in RETURN_TYPES:
            raise ValueError(f"return_type must be one of {RETURN_TYPES}, got {self.return_type!r}")
        if attack == "rfgsm" and self.alpha > self.eps:
            raise ValueError(f"rfgsm requires alpha <= eps, got alpha={self.alpha} eps={self.eps}")
        if attack == "tpgd" and self.mode != "default":
            raise ValueError("tpgd has no label in its loss; only default mode is supported")

    def to_dict(self) -> dict:
        return {
            "eps": self.eps, "alpha": self.alpha, "steps": self.steps, "c": self.c,
            "kappa": self.kappa, "lr": self.lr, "decay": self.decay,
            "sampling": self.sampling, "random_start": self.random_start,
            "mode": self.mode, "return_type": self.return_type, "seed": self.seed,
        }


#: Per-attack defaults; values follow the usual published settings.
ATTACK_DEFAULTS: dict[str, AttackConfig] = {
    "fgsm": AttackConfig(eps=8 / 255, steps=1, random_start=False),
    "bim": AttackConfig(eps=4 / 255, alpha=1 / 255, steps=4, random_start=False),
    "cw": AttackConfig(c=1.0, kappa=0.0, steps=100, lr=0.01, random_start=False),
    "rfgsm": AttackConfig(eps=8 / 255, alpha=4 / 255, steps=2, random_start=False),
    "pgd": AttackConfig(eps=8 / 255, alpha=4 / 255, steps=2, random_start=True),
    "pgdl2": AttackConfig(eps=1.0, alpha=0.2, steps=2, random_start=True),
    "eotpgd": AttackConfig(eps=8 / 255, alpha=4 / 255, steps=2, sampling=10, random_start=True),
    "tpgd": AttackConfig(eps=8 / 255, alpha=2 / 255, steps=7, random_start=False),
    "ffgsm": AttackConfig(eps=8 / 255, alpha=10 / 255, steps=1, random_start=True),
    "mifgsm": AttackConfig(eps=8 / 255, alpha=(8 / 255) / 5, steps=5, decay=1.0,
                           random_start=False),
}


def default_config(attack: str) -> AttackConfig:
    """The per-attack default AttackConfig."""
    if attack not in ATTACK_DEFAULTS:
        raise ValueError(f"unknown attack {attack!r}; known: {', '.join(ATTACK_NAMES)}")
    return ATTACK_DEFAULTS[attack]


@dataclass(frozen=True)
class AttackOutcome:
    """Adversarial batch plus per-example flags, norms, and query count.

    Norms are measured against the original batch; `queries` counts
    model forward passes. `producers` names the attack that produced
    each example (informative for multi-attack compositions).
    """

    adversarial: ops.ExampleBatch
    success: np.ndarray
    linf_norms: np.ndarray
    l2_norms: np.ndarray
    queries: int
    producers: tuple[str, ...]


def resolve_targets(model: Model, batch: ops.ExampleBatch, labels: ops.LabelBatch,
                    mode: str, targets: ops.LabelBatch | None = None) -> ops.LabelBatch:
    """Labels the loss should use for the given mode.

    default: the true labels. targeted: the caller-supplied targets
    (each must differ from the true label). least_likely: per example,
    the class with the smallest clean logit (one forward pass; ties go
    to the lowest index).
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if mode == "default":
        return labels
    if mode == "targeted":
        if targets is None:
            raise ValueError("targeted mode needs explicit target labels")
        if targets.n != labels.n:
            raise ValueError(f"got {targets.n} targets for {labels.n} examples")
        if targets.labels.max() >= model.num_classes:
            raise ValueError(f"target label out of range for {model.num_classes} classes")
        if np.any(targets.labels == labels.labels):
            raise ValueError("target labels must differ from true labels")
        return targets
    logits = forward(model, batch)
    return ops.LabelBatch(np.argmin(logits, axis=1))


def finalize_return(batch: ops.ExampleBatch, return_type: str) -> np.ndarray:
    """Output payload per return type: float32 as-is, or rounded bytes.

    Integer conversion is round(x * 255) with halves away from zero, so
    b / 255 lands within 1/510 of the float value.
    """
    if return_type == "float":
        return batch.data
    if return_type == "int":
        scaled = batch.data.astype(np.float64) * 255.0
        return np.floor(scaled + 0.5).astype(np.uint8)
    raise ValueError(f"return_type must be one of {RETURN_TYPES}, got {return_type!r}")


def _setup(model: Model, batch: ops.ExampleBatch, labels: ops.LabelBatch,
           cfg: AttackConfig, attack: str, targets, example_ids):
    """Validate inputs and resolve mode into (loss labels, direction)."""
    cfg.validate(attack)
    if labels.n != batch.n:
        raise ValueError(f"got {labels.n} labels for {batch.n} examples")
    if labels.labels.size and labels.labels.max() >= model.num_classes:
        raise ValueError(f"label out of range for {model.num_classes} classes")
    ids = np.arange(batch.n) if example_ids is None else np.asarray(example_ids, dtype=np.int64)
    if ids.shape != (batch.n,):
        raise ValueError(f"example_ids shape {ids.shape} does not match batch size {batch.n}")
    queries = 0
    if cfg.mode == "default":
        loss_labels, direction, tgt = labels.labels, 1.0, None
    else:
        resolved = resolve_targets(model, batch, labels, cfg.mode, targets)
        if cfg.mode == "least_likely":
            queries += 1
        loss_labels, direction, tgt = resolved.labels, -1.0, resolved.labels
    return batch.data, labels.labels, ids, loss_labels, tgt, direction, queries


def _finish(model: Model, name: str, x: np.ndarray, adv: np.ndarray, y: np.ndarray,
            tgt, mode: str, queries: int) -> AttackOutcome:
    """Success check (one forward pass) plus norm bookkeeping.

    Targeted mode succeeds by reaching the target; default and
    least-likely succeed by leaving the true label.
    """
    preds = predict(model, adv)
    queries += 1
    success = (preds == tgt) if mode == "targeted" else (preds != y)
    delta = adv.astype(np.float64) - x.astype(np.float64)
    return AttackOutcome(
        adversarial=ops.ExampleBatch(adv),
        success=success,
        linf_norms=np.abs(delta).max(axis=1),
        l2_norms=ops.l2_norms(delta),
        queries=queries,
        producers=(name,) * x.shape[0],
    )


def _ce_grad(model: Model, adv: np.ndarray, loss_labels: np.ndarray) -> np.ndarray:
    return input_gradient(model, adv, CrossEntropyLoss(loss_labels))


def _linf_step(adv: np.ndarray, g: np.ndarray, x: np.ndarray, step: float,
               eps: float) -> np.ndarray:
    return ops.clip_linf(adv + np.float32(step) * ops.sign(g), x, eps)


def fgsm(model: Model, batch: ops.ExampleBatch, labels: ops.LabelBatch,
         cfg: AttackConfig = ATTACK_DEFAULTS["fgsm"], *, targets=None,
         example_ids=None) -> AttackOutcome:
    """One signed-gradient step of size eps, clamped to the valid box."""
    x, y, _, loss_labels, tgt, direction, queries = _setup(
        model, batch, labels, cfg, "fgsm", targets, example_ids)
    g = _ce_grad(model, x, loss_labels)
    queries += 1
    adv = _linf_step(x, g, x, direction * cfg.eps, cfg.eps)
    return _finish(model, "fgsm", x, adv, y, tgt, cfg.mode, queries)


def bim(model: Model, batch: ops.ExampleBatch, labels: ops.LabelBatch,
        cfg: AttackConfig = ATTACK_DEFAULTS["bim"], *, targets=None,
        example_ids=None) -> AttackOutcome:
    """Iterative signed-gradient steps of size alpha, eps-ball clipped."""
    x, y, _, loss_labels, tgt, direction, queries = _setup(
        model, batch, labels, cfg, "bim", targets, example_ids)
    adv = x.copy()
    for _ in range(cfg.steps):
        g = _ce_grad(model, adv, loss_labels)
        queries += 1
        adv = _linf_step(adv, g, x, direction * cfg.alpha, cfg.eps)
    return _finish(model, "bim", x, adv, y, tgt, cfg.mode, queries)


def rfgsm(model: Model, batch: ops.ExampleBatch, labels: ops.LabelBatch,
          cfg: AttackConfig = ATTACK_DEFAULTS["rfgsm"], *, targets=None,
          example_ids=None) -> AttackOutcome:
    """Random sign init of size alpha, then (eps - alpha) signed steps."""
    x, y, ids, loss_labels, tgt, direction, queries = _setup(
        model, batch, labels, cfg, "rfgsm", targets, example_ids)
    noise = per_example_normal(cfg.seed, NORMAL_INIT, ids, batch.d)
    adv = ops.clamp01(x + np.float32(cfg.alpha) * ops.sign(noise))
    for _ in range(cfg.steps):
        g = _ce_grad(model, adv, loss_labels)
        queries += 1
        adv = _linf_step(adv, g, x, direction * (cfg.eps - cfg.alpha), cfg.eps)
    return _finish(model, "rfgsm", x, adv, y, tgt, cfg.mode, queries)


def _uniform_start(x: np.ndarray, ids: np.ndarray, cfg: AttackConfig) -> np.ndarray:
    u = per_example_uniform(cfg.seed, UNIFORM_INIT, ids, x.shape[1], -cfg.eps, cfg.eps)
    return ops.clamp01(x + u)


def pgd_linf(model: Model, batch: ops.ExampleBatch, labels: ops.LabelBatch,
             cfg: AttackConfig = ATTACK_DEFAULTS["pgd"], *, targets=None,
             example_ids=None) -> AttackOutcome:
    """BIM recurrence with an optional uniform random start in the ball."""
    x, y, ids, loss_labels, tgt, direction, queries = _setup(
        model, batch, labels, cfg, "pgd", targets, example_ids)
    adv = _uniform_start(x, ids, cfg) if cfg.random_start else x.copy()
    for _ in range(cfg.steps):
        g = _ce_grad(model, adv, loss_labels)
        queries += 1
        adv = _linf_step(adv, g, x, direction * cfg.alpha, cfg.eps)
    return _finish(model, "pgd", x, adv, y, tgt, cfg.mode, queries)


def pgd_l2(model: Model, batch: ops.ExampleBatch, labels: ops.LabelBatch,
           cfg: AttackConfig = ATTACK_DEFAULTS["pgdl2"], *, targets=None,
           example_ids=None) -> AttackOutcome:
    """Normalized-gradient ascent with L2-ball projection and box clamp."""
    x, y, ids, loss_labels, tgt, direction, queries = _setup(
        model, batch, labels, cfg, "pgdl2", targets, example_ids)
    d = batch.d
    if cfg.random_start:
        delta = np.empty_like(x)
        for row, ex in enumerate(ids):
            g = stream(cfg.seed, int(ex), L2_INIT)
            vec = g.standard_normal(d)
            radius = cfg.eps * g.uniform() ** (1.0 / d)
            delta[row] = (radius * vec / max(np.linalg.norm(vec), ops.EPS_FLOOR)).astype(np.float32)
        adv = ops.clamp01(x + ops.project_l2(delta, cfg.eps))
    else:
        adv = x.copy()
    alpha = np.float32(direction * cfg.alpha)
    for _ in range(cfg.steps):
        g = _ce_grad(model, adv, loss_labels)
        queries += 1
        norms = np.maximum(ops.l2_norms(g), ops.EPS_FLOOR)
        g_hat = (g / norms[:, None].astype(np.float32))
        adv = ops.clamp01(x + ops.project_l2((adv + alpha * g_hat) - x, cfg.eps))
    return _finish(model, "pgdl2", x, adv, y, tgt, cfg.mode, queries)


def eot_mean_gradient(model: Model, adv: np.ndarray, loss_labels: np.ndarray,
                      sampling: int) -> np.ndarray:
    """Mean of `sampling` stochastic gradients, accumulated in float64.

    With a deterministic model all samples coincide and the mean is
    bitwise equal to a single gradient.
    """
    acc = np.zeros(adv.shape, dtype=np.float64)
    for _ in range(sampling):
        acc += input_gradient(model, adv, CrossEntropyLoss(loss_labels))
    return (acc / sampling).astype(np.float32)


def eotpgd(model: Model, batch: ops.ExampleBatch, labels: ops.LabelBatch,
           cfg: AttackConfig = ATTACK_DEFAULTS["eotpgd"], *, targets=None,
           example_ids=None) -> AttackOutcome:
    """PGD with each gradient replaced by a `sampling`-sample average.

    Intended for randomized models whose forward passes are stochastic;
    on a deterministic model it reduces to pgd_linf.
    """
    x, y, ids, loss_labels, tgt, direction, queries = _setup(
        model, batch, labels, cfg, "eotpgd", targets, example_ids)
    adv = _uniform_start(x, ids, cfg) if cfg.random_start else x.copy()
    for _ in range(cfg.steps):
        g = eot_mean_gradient(model, adv, loss_labels, cfg.sampling)
        queries += cfg.sampling
        adv = _linf_step(adv, g, x, direction * cfg.alpha, cfg.eps)
    return _finish(model, "eotpgd", x, adv, y, tgt, cfg.mode, queries)


def tpgd(model: Model, batch: ops.ExampleBatch,
         cfg: AttackConfig = ATTACK_DEFAULTS["tpgd"], *,
         example_ids=None) -> AttackOutcome:
    """PGD on the KL divergence from the clean prediction; label-free.

    The clean logits are computed once and held constant. Success means
    the prediction drifted from the clean prediction.
    """
    cfg.validate("tpgd")
    x = batch.data
    ids = np.arange(batch.n) if example_ids is None else np.asarray(example_ids, dtype=np.int64)
    if ids.shape != (batch.n,):
        raise ValueError(f"example_ids shape {ids.shape} does not match batch size {batch.n}")
    clean_logits = forward(model, x)
    queries = 1
    clean_preds = np.argmax(clean_logits, axis=1).astype(np.int64)
    loss = KLVsReference(clean_logits)
    noise = per_example_normal(cfg.seed, NORMAL_INIT, ids, batch.d)
    adv = ops.clamp01(x + np.float32(0.001) * noise)
    for _ in range(cfg.steps):
        g = input_gradient(model, adv, loss)
        queries += 1
        adv = _linf_step(adv, g, x, cfg.alpha, cfg.eps)
    return _finish(model, "tpgd", x, adv, clean_preds, None, "default", queries)


def ffgsm(model: Model, batch: ops.ExampleBatch, labels: ops.LabelBatch,
          cfg: AttackConfig = ATTACK_DEFAULTS["ffgsm"], *, targets=None,
          example_ids=None) -> AttackOutcome:
    """Uniform random start, then a single signed step of size alpha.

    alpha may exceed eps; the final ball clip keeps the output feasible.
    random_start=False skips the noise (useful for step-size analysis).
    """
    x, y, ids, loss_labels, tgt, direction, queries = _setup(
        model, batch, labels, cfg, "ffgsm", targets, example_ids)
    start = _uniform_start(x, ids, cfg) if cfg.random_start else x.copy()
    g = _ce_grad(model, start, loss_labels)
    queries += 1
    adv = _linf_step(start, g, x, direction * cfg.alpha, cfg.eps)
    return _finish(model, "ffgsm", x, adv, y, tgt, cfg.mode, queries)


def mifgsm(model: Model, batch: ops.ExampleBatch, labels: ops.LabelBatch,
           cfg: AttackConfig = ATTACK_DEFAULTS["mifgsm"], *, targets=None,
           example_ids=None) -> AttackOutcome:
    """Momentum-accumulated L1-normalized gradients, signed steps."""
    x, y, _, loss_labels, tgt, direction, queries = _setup(
        model, batch, labels, cfg, "mifgsm", targets, example_ids)
    adv = x.copy()
    momentum = np.zeros_like(x)
    decay = np.float32(cfg.decay)
    for _ in range(cfg.steps):
        g = _ce_grad(model, adv, loss_labels)
        queries += 1
        momentum = decay * momentum + ops.l1_normalize(g)
        adv = _linf_step(adv, momentum, x, direction * cfg.alpha, cfg.eps)
    return _finish(model, "mifgsm", x, adv, y, tgt, cfg.mode, queries)


def cw(model: Model, batch: ops.ExampleBatch, labels: ops.LabelBatch,
       cfg: AttackConfig = ATTACK_DEFAULTS["cw"], *, targets=None,
       example_ids=None) -> AttackOutcome:
    """Adam optimization in tanh space of L2 distance plus margin term.

    Tracks, per example, the successful candidate (margin >= kappa) with
    the smallest L2 distance; examples never successful come back
    unmodified. eps is ignored: the attack is unbounded in L2. Success
    flags use the margin criterion, so with kappa > 0 every reported
    success carries at least that confidence margin.
    """
    x, y, _, loss_labels, _, _, queries = _setup(
        model, batch, labels, cfg, "cw", targets, example_ids)
    objective = CWObjective(loss_labels, kappa=cfg.kappa, targeted=cfg.mode != "default")
    tau = np.float32(1e-6)
    w = np.arctanh((2.0 * x - 1.0) * (1.0 - 2.0 * tau)).astype(np.float32)
    state = ops.AdamState.zeros_like(w)
    c32 = np.float32(cfg.c)

    best = x.copy()
    best_dist = np.full(batch.n, np.inf)
    for step in range(cfg.steps):
        tanh_w = np.tanh(w)
        x_t = (0.5 * (tanh_w + 1.0)).astype(np.float32)
        pres, activations = _cw_trace(model, x_t)
        logits = activations[-1]
        queries += 1
        margins = objective.margins(logits)
        ok = margins >= cfg.kappa
        if step == 0:
            # w0 is the tanh encoding of x itself: a success here means
            # the unperturbed input already clears the margin
            candidate, dist = x, np.zeros(batch.n)
        else:
            candidate = x_t
            dist = ops.l2_norms(x_t.astype(np.float64) - x.astype(np.float64))
        improve = ok & (dist < best_dist)
        best[improve] = candidate[improve]
        best_dist[improve] = dist[improve]

        _, dlogits = objective.value_and_dlogits(logits)
        g_x = 2.0 * (x_t - x) + c32 * _cw_backprop(model, pres, dlogits)
        g_w = (g_x * (0.5 * (1.0 - tanh_w * tanh_w))).astype(np.float32)
        state, w = ops.adam_step(state, g_w, w, cfg.lr)

    final_logits = forward(model, best)
    queries += 1
    success = objective.margins(final_logits) >= cfg.kappa
    delta = best.astype(np.float64) - x.astype(np.float64)
    return AttackOutcome(
        adversarial=ops.ExampleBatch(best),
        success=success,
        linf_norms=np.abs(delta).max(axis=1),
        l2_norms=ops.l2_norms(delta),
        queries=queries,
        producers=("cw",) * batch.n,
    )


def _cw_trace(model: Model, x_t: np.ndarray):
    """One noisy forward keeping the trace, so value and gradient share it."""
    net, wrapper = _unwrap(model)
    noise = wrapper._next_noise(x_t.shape[0], x_t.dtype) if wrapper is not None else None
    pres, activations = _trace(net, x_t, noise)
    if not np.isfinite(activations[-1]).all():
        raise ValueError("forward produced non-finite logits")
    return pres, activations


def _cw_backprop(model: Model, pres, dlogits: np.ndarray) -> np.ndarray:
    net, _ = _unwrap(model)
    return _backprop_input(net, pres, dlogits)


ATTACKS = {
    "fgsm": fgsm,
    "bim": bim,
    "cw": cw,
    "rfgsm": rfgsm,
    "pgd": pgd_linf,
    "pgdl2": pgd_l2,
    "eotpgd": eotpgd,
    "tpgd": tpgd,
    "ffgsm": ffgsm,
    "mifgsm": mifgsm,
}


def run_attack(name: str, model: Model, batch: ops.ExampleBatch,
               labels: ops.LabelBatch | None, cfg: AttackConfig | None = None, *,
               targets=None, example_ids=None) -> AttackOutcome:
    """Dispatch by attack name; tpgd ignores labels."""
    if name not in ATTACKS:
        raise ValueError(f"unknown attack {name!r}; known: {', '.join(ATTACK_NAMES)}")
    if cfg is None:
        cfg = default_config(name)
    if name == "tpgd":
        return tpgd(model, batch, cfg, example_ids=example_ids)
    if labels is None:
        raise ValueError(f"attack {name!r} requires labels")
    return ATTACKS[name](model, batch, labels, cfg, targets=targets, example_ids=example_ids)
