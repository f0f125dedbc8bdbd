"""Deterministic numeric primitives shared by the attacks and the model.

Arrays are float32 throughout the attack pipeline; reductions (loss
sums, norms) accumulate in float64. All functions are pure and keep the
dtype of their inputs, so the same code can be run on float64 twins for
oracle checks.
"""

from dataclasses import dataclass

import numpy as np

#: Floor applied to denominators (L1/L2 normalization) and log arguments
#: so degenerate inputs stay finite without disturbing conditioned ones.
EPS_FLOOR = 1e-12


def _as_2d(x: np.ndarray, name: str) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 2:
        raise ValueError(f"{name} must be 2-D (batch, features), got shape {x.shape}")
    return x


@dataclass(frozen=True)
class ExampleBatch:
    """A batch of N examples with D features each, values in [0, 1].

    The wrapped array is float32 and read-only; dimensions are fixed at
    creation.
    """

    data: np.ndarray

    def __post_init__(self):
        # owned copy: freezing a caller's array would be a surprise
        data = np.array(_as_2d(self.data, "examples"), dtype=np.float32, order="C")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError(f"examples need n >= 1 and d >= 1, got shape {data.shape}")
        if not np.isfinite(data).all():
            raise ValueError("examples contain non-finite values")
        if data.min() < 0.0 or data.max() > 1.0:
            raise ValueError("examples must lie in [0, 1]")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class LabelBatch:
    """Per-example class indices; range-checked against a model's C at use."""

    labels: np.ndarray

    def __post_init__(self):
        labels = np.array(self.labels, dtype=np.int64, order="C")
        if labels.ndim != 1:
            raise ValueError(f"labels must be 1-D, got shape {labels.shape}")
        if labels.size and labels.min() < 0:
            raise ValueError("labels must be non-negative")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.labels.shape[0]


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max-subtraction for overflow safety."""
    z = _as_2d(logits, "logits")
    if not np.isfinite(z).all():
        raise ValueError("softmax: logits contain non-finite values")
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-example cross-entropy losses and the gradient w.r.t. logits.

    loss_i = -log softmax(z_i)[y_i]; gradient row i = softmax(z_i) - onehot(y_i).
    """
    z = _as_2d(logits, "logits")
    y = np.asarray(labels, dtype=np.int64).ravel()
    n, c = z.shape
    if y.shape[0] != n:
        raise ValueError(f"got {y.shape[0]} labels for {n} logit rows")
    if y.size and (y.min() < 0 or y.max() >= c):
        raise ValueError(f"label out of range for {c} classes")
    p = softmax(z)
    # log-softmax computed directly from shifted logits; more accurate
    # than log(p) when one class dominates
    shifted = z - z.max(axis=1, keepdims=True)
    log_z = np.log(np.sum(np.exp(shifted), axis=1, dtype=np.float64))
    losses = log_z - shifted[np.arange(n), y].astype(np.float64)
    grad = p.copy()
    grad[np.arange(n), y] -= 1.0
    return losses, grad.astype(z.dtype)


def kl_divergence(ref_logits: np.ndarray, logits: np.ndarray) -> tuple[float, np.ndarray]:
    """KL(softmax(ref) || softmax(logits)) summed over the batch.

    The reference distribution is treated as a constant: no gradient
    flows to ref_logits. Returns (scalar loss, gradient w.r.t. logits).
    """
    zp = _as_2d(ref_logits, "ref_logits")
    zq = _as_2d(logits, "logits")
    if zp.shape != zq.shape:
        raise ValueError(f"shape mismatch: ref {zp.shape} vs logits {zq.shape}")
    p = softmax(zp)
    q = softmax(zq)
    logs = np.log(np.maximum(p, EPS_FLOOR)) - np.log(np.maximum(q, EPS_FLOOR))
    loss = float(np.sum(p.astype(np.float64) * logs.astype(np.float64)))
    # d/dz_j of -sum_c p_c log q_c  =  q_j - p_j   (sum_c p_c = 1)
    grad = (q - p).astype(zq.dtype)
    return loss, grad


def sign(g: np.ndarray) -> np.ndarray:
    """Elementwise sign with sign(0) = 0."""
    g = np.asarray(g)
    return np.sign(g)


def clamp01(x: np.ndarray) -> np.ndarray:
    """Clamp into the valid-input box [0, 1]."""
    x = np.asarray(x)
    return np.clip(x, 0.0, 1.0).astype(x.dtype)


def clip_linf(x_adv: np.ndarray, x_orig: np.ndarray, eps: float) -> np.ndarray:
    """Clip into the L-inf eps-ball around x_orig, then into [0, 1].

    Attacks must end inside both sets, so the two clips are fused here.
    Ball bounds are computed in float64 and rounded toward x_orig, so
    the result satisfies ||out - x_orig||_inf <= eps exactly even in
    float32, where naive x +- eps arithmetic can overshoot by an ulp.
    """
    x_adv = np.asarray(x_adv)
    x_orig = np.asarray(x_orig)
    if x_adv.shape != x_orig.shape:
        raise ValueError(f"shape mismatch: {x_adv.shape} vs {x_orig.shape}")
    if eps < 0:
        raise ValueError(f"eps must be >= 0, got {eps}")
    dtype = x_adv.dtype
    x64 = x_orig.astype(np.float64)
    lo64 = x64 - eps
    hi64 = x64 + eps
    lo = lo64.astype(dtype)
    hi = hi64.astype(dtype)
    if dtype != np.float64:
        inward = np.array(np.inf, dtype=dtype)
        lo = np.where(lo < lo64, np.nextafter(lo, inward), lo)
        hi = np.where(hi > hi64, np.nextafter(hi, -inward), hi)
    clipped = np.minimum(np.maximum(x_adv, lo), hi)
    return clamp01(clipped)


def project_l2(delta: np.ndarray, eps: float) -> np.ndarray:
    """Scale each row of delta into the L2 ball of radius eps.

    Rows already inside the ball are returned unchanged (bitwise).
    Shrink factors are deflated by one part in 1e7 so float32 rounding
    of the scaled components cannot push the norm back above eps.
    """
    delta = _as_2d(delta, "delta")
    if eps < 0:
        raise ValueError(f"eps must be >= 0, got {eps}")
    norms = np.sqrt(np.sum(delta.astype(np.float64) ** 2, axis=1))
    out = delta.copy()
    shrink = norms > eps
    factors = (eps / np.maximum(norms[shrink], EPS_FLOOR)) * (1.0 - 1e-7)
    out[shrink] = (delta[shrink] * factors[:, None]).astype(delta.dtype)
    return out


def l2_norms(delta: np.ndarray) -> np.ndarray:
    """Per-row Euclidean norms with float64 accumulation."""
    delta = _as_2d(delta, "delta")
    return np.sqrt(np.sum(delta.astype(np.float64) ** 2, axis=1))


def l1_normalize(g: np.ndarray) -> np.ndarray:
    """Divide each row by its L1 norm (floored; zero rows stay zero)."""
    g = _as_2d(g, "gradient")
    norms = np.sum(np.abs(g.astype(np.float64)), axis=1)
    return (g / np.maximum(norms, EPS_FLOOR)[:, None]).astype(g.dtype)


@dataclass
class AdamState:
    """First/second moment state for one optimized variable.

    Owned by a single optimization loop; t increments by exactly one per
    step.
    """

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8

    @classmethod
    def zeros_like(cls, var: np.ndarray, beta1: float = 0.9, beta2: float = 0.999,
                   eps_hat: float = 1e-8) -> "AdamState":
        return cls(m=np.zeros_like(var), v=np.zeros_like(var), t=0,
                   beta1=beta1, beta2=beta2, eps_hat=eps_hat)


def adam_step(state: AdamState, grad: np.ndarray, var: np.ndarray,
              lr: float) -> tuple[AdamState, np.ndarray]:
    """One bias-corrected Adam update; returns the new (state, var)."""
    grad = np.asarray(grad)
    if grad.shape != var.shape or state.m.shape != var.shape:
        raise ValueError("adam_step: inconsistent shapes")
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_var = (var - lr * m_hat / (np.sqrt(v_hat) + state.eps_hat)).astype(var.dtype)
    new_state = AdamState(m=m.astype(var.dtype), v=v.astype(var.dtype), t=t,
                          beta1=state.beta1, beta2=state.beta2, eps_hat=state.eps_hat)
    return new_state, new_var


def finite_difference_gradient(f_eval, x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Central-difference gradient of a scalar function, coordinate by coordinate.

    Test oracle: independent of any analytic gradient path. Works on a
    float64 copy of x for stability.
    """
    if h <= 0:
        raise ValueError(f"h must be > 0, got {h}")
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        f_plus = float(f_eval(x))
        flat[i] = orig - h
        f_minus = float(f_eval(x))
        flat[i] = orig
        gflat[i] = (f_plus - f_minus) / (2.0 * h)
    return grad
