"""Dense feed-forward classifiers with analytic input gradients.

The model family is fixed (affine layers + relu/identity, optional
input normalization), which lets gradients be implemented by hand
instead of via an autodiff framework. Forward math runs in the dtype of
the incoming batch, so float64 twins of the float32 pipeline are
available for finite-difference oracles.
"""

import io
import struct
from dataclasses import dataclass, replace

import numpy as np

from . import ops
from ._rng import MODEL_NOISE, stream
from .errors import FileFormatError

CHECKPOINT_MAGIC = b"TAKM"
CHECKPOINT_VERSION = 1
_ACT_CODES = {"identity": 0, "relu": 1}
_ACT_NAMES = {v: k for k, v in _ACT_CODES.items()}


@dataclass(frozen=True)
class Layer:
    """One affine layer: weight (out, in), bias (out,), activation name."""

    weight: np.ndarray
    bias: np.ndarray
    activation: str = "identity"

    def __post_init__(self):
        w = np.array(self.weight, dtype=np.float32, order="C")
        b = np.array(self.bias, dtype=np.float32, order="C")
        if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
            raise ValueError(f"inconsistent layer shapes: weight {w.shape}, bias {b.shape}")
        if self.activation not in _ACT_CODES:
            raise ValueError(f"unknown activation {self.activation!r}")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)


@dataclass(frozen=True)
class DenseNetwork:
    """Classifier f: stacked affine+activation layers ending in raw logits.

    Inputs are expected in [0, 1]; if `normalization` is set, (x - mean) / std
    is applied inside the model, so attacks keep operating in input space.
    """

    layers: tuple[Layer, ...]
    normalization: tuple[np.ndarray, np.ndarray] | None = None

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ValueError("network needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if nxt.weight.shape[1] != prev.weight.shape[0]:
                raise ValueError(
                    f"layer dimension mismatch: {prev.weight.shape[0]} -> {nxt.weight.shape[1]}"
                )
        if layers[-1].activation != "identity":
            raise ValueError("final layer must have identity activation (raw logits)")
        if layers[-1].weight.shape[0] < 2:
            raise ValueError("network must output at least 2 classes")
        norm = self.normalization
        if norm is not None:
            mean = np.array(norm[0], dtype=np.float32, order="C")
            std = np.array(norm[1], dtype=np.float32, order="C")
            if mean.shape != (layers[0].weight.shape[1],) or std.shape != mean.shape:
                raise ValueError("normalization vectors must match input_dim")
            if (std <= 0).any():
                raise ValueError("normalization std entries must be > 0")
            mean.setflags(write=False)
            std.setflags(write=False)
            norm = (mean, std)
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "normalization", norm)

    @property
    def input_dim(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def num_classes(self) -> int:
        return self.layers[-1].weight.shape[0]


@dataclass
class RandomizedModel:
    """Wrapper that adds Gaussian noise to every hidden pre-activation.

    Each forward call draws from a fresh stream keyed by
    (rng_seed, call counter), so runs are reproducible but consecutive
    calls see independent noise. With noise_sigma == 0 the wrapper is
    bitwise identical to the base network. The call counter makes usage
    order-sensitive: give each thread its own wrapper via `with_seed`.
    """

    base: DenseNetwork
    noise_sigma: float = 0.0
    rng_seed: int = 0
    calls: int = 0

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")

    @property
    def input_dim(self) -> int:
        return self.base.input_dim

    @property
    def num_classes(self) -> int:
        return self.base.num_classes

    def with_seed(self, rng_seed: int) -> "RandomizedModel":
        return RandomizedModel(self.base, self.noise_sigma, rng_seed)

    def _next_noise(self, n: int, dtype) -> list[np.ndarray] | None:
        if self.noise_sigma == 0.0:
            self.calls += 1
            return None
        g = stream(self.rng_seed, self.calls, MODEL_NOISE)
        self.calls += 1
        hidden = self.base.layers[:-1]
        return [
            (self.noise_sigma * g.standard_normal((n, lay.weight.shape[0]))).astype(dtype)
            for lay in hidden
        ]


Model = DenseNetwork | RandomizedModel


def _unwrap(model: Model) -> tuple[DenseNetwork, RandomizedModel | None]:
    if isinstance(model, RandomizedModel):
        return model.base, model
    return model, None


def _trace(net: DenseNetwork, x: np.ndarray, noise: list[np.ndarray] | None):
    """Forward pass keeping pre-activations and activations for backprop."""
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise ValueError(f"batch shape {x.shape} does not match input_dim {net.input_dim}")
    dtype = x.dtype
    a = x
    if net.normalization is not None:
        mean, std = net.normalization
        a = (a - mean.astype(dtype)) / std.astype(dtype)
    activations = [a]
    pres = []
    last = len(net.layers) - 1
    for k, lay in enumerate(net.layers):
        pre = a @ lay.weight.astype(dtype, copy=False).T + lay.bias.astype(dtype, copy=False)
        if noise is not None and k < last:
            pre = pre + noise[k]
        pres.append(pre)
        a = np.maximum(pre, 0) if lay.activation == "relu" else pre
        activations.append(a)
    return pres, activations


def forward(model: Model, batch) -> np.ndarray:
    """Logits of shape (N, C); raises on non-finite output."""
    net, wrapper = _unwrap(model)
    x = batch.data if isinstance(batch, ops.ExampleBatch) else np.asarray(batch)
    noise = wrapper._next_noise(x.shape[0], x.dtype) if wrapper is not None else None
    _, activations = _trace(net, x, noise)
    logits = activations[-1]
    if not np.isfinite(logits).all():
        raise ValueError("forward produced non-finite logits")
    return logits


def predict(model: Model, batch) -> np.ndarray:
    """Per-example argmax of one forward pass; ties go to the lowest index."""
    return np.argmax(forward(model, batch), axis=1).astype(np.int64)


@dataclass(frozen=True)
class CrossEntropyLoss:
    """Sum of per-example cross-entropy against fixed labels."""

    labels: np.ndarray

    def value_and_dlogits(self, logits: np.ndarray) -> tuple[float, np.ndarray]:
        losses, grad = ops.cross_entropy(logits, self.labels)
        return float(np.sum(losses, dtype=np.float64)), grad


@dataclass(frozen=True)
class KLVsReference:
    """KL(softmax(ref) || softmax(logits)); ref is constant."""

    ref_logits: np.ndarray

    def value_and_dlogits(self, logits: np.ndarray) -> tuple[float, np.ndarray]:
        return ops.kl_divergence(self.ref_logits, logits)


@dataclass(frozen=True)
class CWObjective:
    """Margin objective max(f_y - max_{i != y} f_i, -kappa), summed.

    With targeted=True the labels are target classes and the margin
    flips: max(max_{i != y'} f_i - f_{y'}, -kappa). The max over other
    classes breaks ties at the lowest index; examples on the -kappa
    branch contribute zero gradient.
    """

    labels: np.ndarray
    kappa: float = 0.0
    targeted: bool = False

    def margins(self, logits: np.ndarray) -> np.ndarray:
        """Adversarial margin per example; success means margin >= kappa.

        Untargeted: max_{i != y} f_i - f_y. Targeted: f_y' - max_{i != y'} f_i.
        """
        z = np.asarray(logits, dtype=np.float64)
        n = z.shape[0]
        y = np.asarray(self.labels, dtype=np.int64)
        own = z[np.arange(n), y]
        masked = z.copy()
        masked[np.arange(n), y] = -np.inf
        other = masked.max(axis=1)
        return (other - own) if not self.targeted else (own - other)

    def value_and_dlogits(self, logits: np.ndarray) -> tuple[float, np.ndarray]:
        z = np.asarray(logits)
        n, c = z.shape
        y = np.asarray(self.labels, dtype=np.int64)
        if y.size and (y.min() < 0 or y.max() >= c):
            raise ValueError(f"label out of range for {c} classes")
        rows = np.arange(n)
        masked = z.copy()
        masked[rows, y] = -np.inf
        j_star = np.argmax(masked, axis=1)
        own = z[rows, y]
        other = masked[rows, j_star]
        raw = (own - other) if not self.targeted else (other - own)
        active = raw > -self.kappa
        value = float(np.sum(np.where(active, raw, -self.kappa), dtype=np.float64))
        grad = np.zeros_like(z)
        sgn = 1.0 if not self.targeted else -1.0
        grad[rows[active], y[active]] = sgn
        grad[rows[active], j_star[active]] = -sgn
        return value, grad


LossSpec = CrossEntropyLoss | KLVsReference | CWObjective


def _backprop_input(net: DenseNetwork, pres, dlogits: np.ndarray) -> np.ndarray:
    g = dlogits
    for k in range(len(net.layers) - 1, -1, -1):
        lay = net.layers[k]
        if lay.activation == "relu":
            g = g * (pres[k] > 0)
        g = g @ lay.weight.astype(g.dtype, copy=False)
    if net.normalization is not None:
        g = g / net.normalization[1].astype(g.dtype)
    return g


def input_gradient(model: Model, batch, loss: LossSpec) -> np.ndarray:
    """Exact reverse-mode gradient of `loss` w.r.t. the input batch.

    Counts as one forward pass; a RandomizedModel draws one fresh noise
    realization that both the value and the gradient see.
    """
    net, wrapper = _unwrap(model)
    x = batch.data if isinstance(batch, ops.ExampleBatch) else np.asarray(batch)
    noise = wrapper._next_noise(x.shape[0], x.dtype) if wrapper is not None else None
    pres, activations = _trace(net, x, noise)
    logits = activations[-1]
    if not np.isfinite(logits).all():
        raise ValueError("forward produced non-finite logits")
    _, dlogits = loss.value_and_dlogits(logits)
    # relu masks derive from the traced pre-activations, noise included
    return _backprop_input(net, pres, dlogits)


def loss_value(model: Model, batch, loss: LossSpec) -> float:
    """Scalar loss of one forward pass (finite-difference oracle hook)."""
    logits = forward(model, batch)
    value, _ = loss.value_and_dlogits(logits)
    return value


def init_network(sizes: list[int], seed: int, hidden_activation: str = "relu",
                 normalization=None) -> DenseNetwork:
    """Build a network with uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) init.

    sizes = [input_dim, hidden..., num_classes].
    """
    if len(sizes) < 2:
        raise ValueError("sizes must list at least input_dim and num_classes")
    g = stream(seed, 0, 0)
    layers = []
    for k, (fan_in, fan_out) in enumerate(zip(sizes, sizes[1:])):
        bound = 1.0 / np.sqrt(fan_in)
        w = g.uniform(-bound, bound, size=(fan_out, fan_in)).astype(np.float32)
        b = g.uniform(-bound, bound, size=fan_out).astype(np.float32)
        act = "identity" if k == len(sizes) - 2 else hidden_activation
        layers.append(Layer(w, b, act))
    return DenseNetwork(tuple(layers), normalization)


def _backprop_params(net: DenseNetwork, x: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy gradients for every weight and bias."""
    pres, activations = _trace(net, x, None)
    _, dlogits = ops.cross_entropy(activations[-1], labels)
    g = dlogits / np.float32(x.shape[0])
    grads = []
    for k in range(len(net.layers) - 1, -1, -1):
        lay = net.layers[k]
        if lay.activation == "relu":
            g = g * (pres[k] > 0)
        grads.append((g.T @ activations[k], g.sum(axis=0)))
        g = g @ lay.weight
    grads.reverse()
    return grads


def train_sgd(net: DenseNetwork, data: ops.ExampleBatch, labels: ops.LabelBatch,
              epochs: int, lr: float, batch_size: int, seed: int
              ) -> tuple[DenseNetwork, float]:
    """Plain mini-batch SGD on cross-entropy; shuffle order fixed by seed.

    Returns the trained network and its final training accuracy.
    """
    if epochs < 1:
        raise ValueError(f"epochs must be >= 1, got {epochs}")
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    x = data.data
    y = labels.labels
    if x.shape[0] == 0 or y.shape[0] != x.shape[0]:
        raise ValueError("training data and labels must be non-empty and aligned")
    if y.max() >= net.num_classes:
        raise ValueError(f"label out of range for {net.num_classes} classes")
    current = net
    lr32 = np.float32(lr)
    shuffler = stream(seed, 1, 0)
    for _ in range(epochs):
        order = shuffler.permutation(x.shape[0])
        for start in range(0, x.shape[0], batch_size):
            idx = order[start:start + batch_size]
            grads = _backprop_params(current, x[idx], y[idx])
            new_layers = tuple(
                replace(lay, weight=lay.weight - lr32 * dw, bias=lay.bias - lr32 * db)
                for lay, (dw, db) in zip(current.layers, grads)
            )
            current = DenseNetwork(new_layers, current.normalization)
    accuracy = float(np.mean(predict(current, x) == y))
    return current, accuracy


def _fd_safe_input(net: DenseNetwork, g: np.random.Generator, margin: float,
                   max_draws: int = 64) -> np.ndarray | None:
    """Draw an input whose pre-activations and logit gaps clear `margin`.

    Central differences are invalid within h of a relu kink or an
    argmax switch, so gradcheck samples away from them.
    """
    d = net.input_dim
    for _ in range(max_draws):
        x = g.uniform(0.05, 0.95, size=(1, d))
        pres, activations = _trace(net, x, None)
        if any(np.abs(p).min() < margin for p in pres[:-1]):
            continue
        logits = np.sort(activations[-1][0])
        # margin-loss kinks sit at ties among the top logits; a saturated
        # softmax (huge gap) kills the gradient scale and inflates the
        # truncation error of the difference quotient
        top = logits[-min(3, logits.size):]
        if np.diff(top).min() < margin or logits[-1] - logits[-2] > 8.0:
            continue
        return x.astype(np.float32)
    return None


def _relative_error(analytic: np.ndarray, fd: np.ndarray) -> float:
    scale = max(float(np.abs(analytic).max()), 1e-8)
    return float(np.abs(analytic.astype(np.float64) - fd).max() / scale)


def finite_difference_check(net: DenseNetwork, trials: int = 20, seed: int = 0,
                            h: float = 1e-4) -> float:
    """Worst relative error of analytic input gradients vs central differences.

    Checks the cross-entropy, KL, and margin losses on random interior
    inputs. Both sides run on a float64 twin of the forward math, so
    the comparison verifies the gradient formulas rather than float32
    quantization (which caps out near 1e-7 of the loss scale).
    """
    worst = 0.0
    g = stream(seed, 2, 0)
    c = net.num_classes
    for _ in range(trials):
        x = _fd_safe_input(net, g, margin=max(0.02, 20.0 * h))
        if x is None:
            continue
        x64 = x.astype(np.float64)
        y = np.array([int(g.integers(0, c))])
        # tilt the reference so KL is differentiated away from its minimum,
        # where the vanishing gradient would inflate relative FD error
        ref = forward(net, g.uniform(0.05, 0.95, size=x.shape).astype(np.float32))
        ref = ref + np.linspace(0.0, 1.0, c, dtype=np.float32)
        losses = [
            CrossEntropyLoss(y),
            KLVsReference(ref),
            CWObjective(y, kappa=0.0),
        ]
        for loss in losses:
            analytic = input_gradient(net, x64, loss)
            fd = ops.finite_difference_gradient(
                lambda xx: loss_value(net, xx, loss), x64, h=h)
            worst = max(worst, _relative_error(analytic, fd))
    return worst


def _read_exact(f, n: int) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise FileFormatError("unexpected end of file")
    return buf


def save_checkpoint(net: DenseNetwork, path) -> None:
    """Write the binary checkpoint format (little-endian, magic TAKM)."""
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<I", CHECKPOINT_VERSION))
    if net.normalization is not None:
        mean, std = net.normalization
        buf.write(struct.pack("<BI", 1, mean.shape[0]))
        buf.write(mean.astype("<f4").tobytes())
        buf.write(std.astype("<f4").tobytes())
    else:
        buf.write(struct.pack("<B", 0))
    buf.write(struct.pack("<I", len(net.layers)))
    for lay in net.layers:
        out_dim, in_dim = lay.weight.shape
        buf.write(struct.pack("<IIB", out_dim, in_dim, _ACT_CODES[lay.activation]))
        buf.write(np.ascontiguousarray(lay.weight, dtype="<f4").tobytes())
        buf.write(np.ascontiguousarray(lay.bias, dtype="<f4").tobytes())
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_checkpoint(path) -> DenseNetwork:
    """Read a checkpoint; round-trips save_checkpoint bitwise."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise FileFormatError("not a checkpoint (bad magic)")
        (version,) = struct.unpack("<I", _read_exact(f, 4))
        if version != CHECKPOINT_VERSION:
            raise FileFormatError(f"unsupported checkpoint version {version}")
        (flag,) = struct.unpack("<B", _read_exact(f, 1))
        normalization = None
        if flag == 1:
            (d,) = struct.unpack("<I", _read_exact(f, 4))
            mean = np.frombuffer(_read_exact(f, 4 * d), dtype="<f4").copy()
            std = np.frombuffer(_read_exact(f, 4 * d), dtype="<f4").copy()
            normalization = (mean, std)
        elif flag != 0:
            raise FileFormatError(f"bad normalization flag {flag}")
        (n_layers,) = struct.unpack("<I", _read_exact(f, 4))
        if n_layers == 0:
            raise FileFormatError("checkpoint declares zero layers")
        layers = []
        for _ in range(n_layers):
            out_dim, in_dim, act = struct.unpack("<IIB", _read_exact(f, 9))
            if act not in _ACT_NAMES:
                raise FileFormatError(f"bad activation code {act}")
            w = np.frombuffer(_read_exact(f, 4 * out_dim * in_dim), dtype="<f4")
            b = np.frombuffer(_read_exact(f, 4 * out_dim), dtype="<f4")
            layers.append(Layer(w.reshape(out_dim, in_dim).copy(), b.copy(), _ACT_NAMES[act]))
        trailing = f.read(1)
        if trailing:
            raise FileFormatError("trailing bytes after checkpoint payload")
    try:
        return DenseNetwork(tuple(layers), normalization)
    except ValueError as exc:
        raise FileFormatError(f"inconsistent checkpoint dimensions: {exc}") from exc
