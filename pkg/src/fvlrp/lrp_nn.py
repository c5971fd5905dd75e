"""Small dense ReLU network with layer-wise relevance propagation.

The network consumes a block-mean-downscaled grayscale image (flattened
row-major) and emits one linear score per class; training minimizes the
sum of per-class hinge losses (multi-label, not softmax-competitive).

Two relevance rules are provided, both operating on the cached forward
pass with z_ij = w_ij x_i and z_j = sum_i z_ij + b_j:

* epsilon rule: R_i = sum_j z_ij / (z_j + eps*sign(z_j)) R_j, with
  sign(0) = +1. At eps = 0 an exactly-zero z_j is refused.
* alpha-beta rule: R_i = sum_j (alpha z_ij+/z_j+ - beta z_ij-/z_j-) R_j
  where +/- are the summed positive/negative parts (bias included);
  a term with an empty part (z_j+ = 0 or z_j- = 0) is defined as 0.

Biases contribute to the denominators but receive no outgoing
relevance; each propagation records the per-layer share routed to bias
terms (and, for the epsilon rule, to the stabilizer), so the layer sums
obey  sum_i R_i = sum_j R_j - bias_share - stabilizer_share  exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimError, TrainError, ValidationError, ZeroDenominatorError
from .imaging import Heatmap, Image

ACTIVATIONS = ("relu", "identity")


@dataclass(frozen=True)
class DenseLayer:
    weights: np.ndarray   # (fan_in, fan_out)
    biases: np.ndarray    # (fan_out,)
    activation: str

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.biases, dtype=np.float64)
        if w.ndim != 2 or b.shape != (w.shape[1],):
            raise DimError(f"layer shapes {w.shape} / {b.shape} inconsistent")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValidationError("non-finite layer parameters")
        if self.activation not in ACTIVATIONS:
            raise ValidationError(f"unknown activation {self.activation!r}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "biases", b)


@dataclass(frozen=True)
class NeuralNet:
    """Dense feedforward net; the last layer is the per-class linear output."""

    classes: tuple[str, ...]
    layers: tuple[DenseLayer, ...]
    input_size: tuple[int, int]    # (width, height) of the consumed image

    def __post_init__(self):
        if not self.layers:
            raise ValidationError("network needs at least one layer")
        w, h = self.input_size
        expect = w * h
        for i, layer in enumerate(self.layers):
            if layer.weights.shape[0] != expect:
                raise DimError(f"layer {i} expects {layer.weights.shape[0]} inputs, got {expect}")
            expect = layer.weights.shape[1]
        if expect != len(self.classes):
            raise DimError(f"output width {expect} vs {len(self.classes)} classes")

    @property
    def input_dim(self) -> int:
        return self.input_size[0] * self.input_size[1]

    def class_index(self, name: str) -> int:
        try:
            return self.classes.index(name)
        except ValueError:
            raise KeyError(f"unknown class {name!r}") from None


def downscale(image: Image, size: tuple[int, int]) -> np.ndarray:
    """Block-mean downscale of the grayscale image to (width, height)."""
    gray = image.gray()
    w, h = size
    sh, sw = image.height // h, image.width // w
    if sh * h != image.height or sw * w != image.width:
        raise DimError(f"image {image.width}x{image.height} not divisible by {w}x{h}")
    return gray.reshape(h, sh, w, sw).mean(axis=(1, 3))


def image_to_input(image: Image, size: tuple[int, int]) -> np.ndarray:
    return downscale(image, size).reshape(-1)


def forward(net: NeuralNet, x: np.ndarray) -> list[np.ndarray]:
    """All activation vectors, input first, output scores last."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (net.input_dim,):
        raise DimError(f"input shape {x.shape} vs expected ({net.input_dim},)")
    acts = [x]
    for layer in net.layers:
        z = acts[-1] @ layer.weights + layer.biases
        acts.append(np.maximum(z, 0.0) if layer.activation == "relu" else z)
    return acts


def nn_scores(net: NeuralNet, x: np.ndarray) -> np.ndarray:
    return forward(net, x)[-1]


def nn_score(net: NeuralNet, x: np.ndarray, class_name: str) -> float:
    return float(nn_scores(net, x)[net.class_index(class_name)])


def _init_layers(sizes: list[int], rng: np.random.Generator) -> list[DenseLayer]:
    layers = []
    for i in range(len(sizes) - 1):
        fan_in, fan_out = sizes[i], sizes[i + 1]
        last = i == len(sizes) - 2
        scale = np.sqrt((1.0 if last else 2.0) / fan_in)
        w = rng.standard_normal((fan_in, fan_out)) * scale
        layers.append(DenseLayer(w, np.zeros(fan_out), "identity" if last else "relu"))
    return layers


def _hinge_loss(nets_out: np.ndarray, y: np.ndarray) -> float:
    return float(np.maximum(0.0, 1.0 - y * nets_out).sum(axis=1).mean())


def _batch_forward(layers: list[DenseLayer], x: np.ndarray) -> list[np.ndarray]:
    acts = [x]
    for layer in layers:
        z = acts[-1] @ layer.weights + layer.biases
        acts.append(np.maximum(z, 0.0) if layer.activation == "relu" else z)
    return acts


def nn_train(inputs, labels: dict, hidden: tuple[int, ...] = (64, 32),
             input_size: tuple[int, int] = (32, 32), seed: int = 0,
             epochs: int = 60, lr: float = 0.01, batch_size: int = 16) -> NeuralNet:
    """Mini-batch subgradient descent on the summed per-class hinge loss.

    `inputs` is (n, input_dim) of flattened downscaled images; `labels`
    maps class name -> +/-1 per example. The parameters kept are those
    of the epoch with the lowest full-training loss, so the final loss
    never exceeds the initial one.
    """
    x = np.asarray(inputs, dtype=np.float64)
    classes = tuple(labels)
    if not classes:
        raise TrainError("no classes to train")
    n = x.shape[0]
    if x.ndim != 2 or x.shape[1] != input_size[0] * input_size[1]:
        raise DimError(f"inputs {x.shape} vs input size {input_size}")
    y = np.stack([np.asarray(labels[c], dtype=np.float64) for c in classes], axis=1)
    if y.shape != (n, len(classes)):
        raise DimError("labels do not align with inputs")
    for j, name in enumerate(classes):
        if not (np.any(y[:, j] > 0) and np.any(y[:, j] < 0)):
            raise TrainError(f"class {name!r} needs both positive and negative examples")

    rng = np.random.default_rng(seed)
    sizes = [x.shape[1], *hidden, len(classes)]
    layers = _init_layers(sizes, rng)

    def full_loss(ls):
        return _hinge_loss(_batch_forward(ls, x)[-1], y)

    best_loss = full_loss(layers)
    best_layers = [DenseLayer(l.weights.copy(), l.biases.copy(), l.activation)
                   for l in layers]
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            xb, yb = x[idx], y[idx]
            acts = _batch_forward(layers, xb)
            # d(loss)/d(score): -y where the margin is violated.
            grad = np.where(yb * acts[-1] < 1.0, -yb, 0.0) / xb.shape[0]
            for li in range(len(layers) - 1, -1, -1):
                layer = layers[li]
                gw = acts[li].T @ grad
                gb = grad.sum(axis=0)
                if li > 0:
                    grad = (grad @ layer.weights.T) * (acts[li] > 0.0)
                layers[li] = DenseLayer(layer.weights - lr * gw,
                                        layer.biases - lr * gb, layer.activation)
        loss = full_loss(layers)
        if loss < best_loss:
            best_loss = loss
            best_layers = [DenseLayer(l.weights.copy(), l.biases.copy(), l.activation)
                           for l in layers]
    return NeuralNet(classes, tuple(best_layers), input_size)


@dataclass(frozen=True)
class LayerRelevance:
    """Relevance per activation layer: index 0 = input pixels, -1 = output."""

    relevances: tuple[np.ndarray, ...]
    bias_shares: tuple[float, ...]          # one per weight layer
    stabilizer_shares: tuple[float, ...]    # one per weight layer (0 for alpha-beta)
    rule: str
    class_name: str
    score: float

    @property
    def input_relevance(self) -> np.ndarray:
        return self.relevances[0]

    @property
    def top_relevance(self) -> np.ndarray:
        return self.relevances[-1]

    def layer_deficit(self, k: int) -> float:
        """sum_j R at layer k+1 minus sum_i R at layer k (= shares routed away)."""
        return float(self.relevances[k + 1].sum() - self.relevances[k].sum())


def _top_relevance(net: NeuralNet, acts: list[np.ndarray], class_name: str
                   ) -> tuple[np.ndarray, float]:
    k = net.class_index(class_name)
    top = np.zeros(len(net.classes))
    f = float(acts[-1][k])
    top[k] = f
    return top, f


def lrp_epsilon(net: NeuralNet, x: np.ndarray, class_name: str,
                epsilon: float = 0.0) -> LayerRelevance:
    """Backward pass with the stabilized proportional rule."""
    if epsilon < 0.0:
        raise ValidationError("epsilon must be >= 0")
    acts = forward(net, x)
    top, f = _top_relevance(net, acts, class_name)
    rel = [top]
    bias_shares: list[float] = []
    stab_shares: list[float] = []
    for li in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[li]
        xin = acts[li]
        z = xin @ layer.weights + layer.biases
        if epsilon == 0.0 and np.any(z == 0.0):
            raise ZeroDenominatorError(
                f"layer {li}: z_j = 0 with epsilon = 0; use epsilon > 0")
        stab = np.where(z >= 0.0, epsilon, -epsilon)
        factor = rel[0] / (z + stab)
        rel.insert(0, (xin[:, None] * layer.weights) @ factor)
        bias_shares.insert(0, float(np.dot(layer.biases, factor)))
        stab_shares.insert(0, float(np.dot(stab, factor)))
    return LayerRelevance(tuple(rel), tuple(bias_shares), tuple(stab_shares),
                          "epsilon", class_name, f)


def lrp_alphabeta(net: NeuralNet, x: np.ndarray, class_name: str,
                  alpha: float = 2.0, beta: float = 1.0,
                  enforce_sum: bool = True) -> LayerRelevance:
    """Backward pass splitting positive and negative contributions."""
    if enforce_sum and abs(alpha - beta - 1.0) > 1e-12:
        raise ValidationError(f"alpha - beta must be 1, got {alpha} - {beta}")
    acts = forward(net, x)
    top, f = _top_relevance(net, acts, class_name)
    rel = [top]
    bias_shares: list[float] = []
    for li in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[li]
        xin = acts[li]
        zij = xin[:, None] * layer.weights
        zpos = np.maximum(zij, 0.0)
        zneg = np.minimum(zij, 0.0)
        bpos = np.maximum(layer.biases, 0.0)
        bneg = np.minimum(layer.biases, 0.0)
        zjp = zpos.sum(axis=0) + bpos
        zjn = zneg.sum(axis=0) + bneg
        # A term with an empty part contributes 0 (guarded division).
        fpos = np.divide(rel[0], zjp, out=np.zeros_like(zjp), where=zjp != 0.0)
        fneg = np.divide(rel[0], zjn, out=np.zeros_like(zjn), where=zjn != 0.0)
        rel.insert(0, zpos @ (alpha * fpos) + zneg @ (-beta * fneg))
        bias_shares.insert(0, float(np.dot(bpos, alpha * fpos) - np.dot(bneg, beta * fneg)))
    zeros = tuple(0.0 for _ in bias_shares)
    return LayerRelevance(tuple(rel), tuple(bias_shares), zeros,
                          "alphabeta", class_name, f)


def nn_heatmap(layer_rel: LayerRelevance, dims: tuple[int, int],
               source_dims: tuple[int, int] | None = None) -> Heatmap:
    """Reshape input relevance to the image grid; optionally upsample.

    `dims` is the (width, height) the net consumed. When `source_dims`
    is given, relevance is replicated over the corresponding pixel block
    and divided by its area, so the total is preserved.
    """
    w, h = dims
    rel = layer_rel.input_relevance
    if rel.shape != (w * h,):
        raise DimError(f"input relevance {rel.shape} vs grid {w}x{h}")
    grid = rel.reshape(h, w)
    if source_dims is None or source_dims == dims:
        return Heatmap(grid)
    sw, sh = source_dims
    fx, fy = sw // w, sh // h
    if fx * w != sw or fy * h != sh:
        raise DimError(f"source {sw}x{sh} not an integer multiple of {w}x{h}")
    up = np.kron(grid, np.ones((fy, fx))) / (fx * fy)
    return Heatmap(up)
