"""Small feed-forward and convolutional networks with hand-written gradients.

A network is described by a plain ``spec`` dict::

    {"input_shape": [1, 297, 257],
     "layers": [{"type": "conv2d", "filters": 16, "kernel": [5, 5], "stride": 2},
                {"type": "activation", "fn": "relu"},
                {"type": "maxpool", "pool": [3, 3]},
                {"type": "flatten"},
                {"type": "dense", "units": 1}]}

The last layer must be ``dense`` with one unit; its output is a logit and
the network probability is its sigmoid.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


class ShapeError(ValueError):
    pass


class DivergenceError(RuntimeError):
    pass


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def bce_with_logits(z, y):
    """Mean binary cross-entropy and its gradient w.r.t. the logits."""
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    loss = np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))
    return float(loss.mean()), (sigmoid(z) - y) / z.size


# ---------------------------------------------------------------------------
# layers

class Layer:
    params: dict

    def __init__(self):
        self.params = {}
        self.grads = {}

    def output_shape(self, shape):
        return shape

    def init(self, shape, rng):
        pass

    def forward(self, x, train=False, rng=None):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError


class Dense(Layer):
    def __init__(self, units):
        super().__init__()
        self.units = units

    def output_shape(self, shape):
        if len(shape) != 1:
            raise ShapeError(f"dense layer needs a flat input, got {shape}")
        return (self.units,)

    def init(self, shape, rng):
        fan_in = shape[0]
        self.params = {"W": rng.normal(0.0, math.sqrt(2.0 / fan_in), (fan_in, self.units)),
                       "b": np.zeros(self.units)}

    def forward(self, x, train=False, rng=None):
        self.x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dout):
        self.grads = {"W": self.x.T @ dout, "b": dout.sum(axis=0)}
        return dout @ self.params["W"].T


class Conv2D(Layer):
    """Valid-padding convolution (cross-correlation) over (C, H, W) inputs."""

    def __init__(self, filters, kernel, stride=1):
        super().__init__()
        self.filters = filters
        self.kh, self.kw = kernel
        self.stride = stride

    def output_shape(self, shape):
        if len(shape) != 3:
            raise ShapeError(f"conv2d needs (C, H, W) input, got {shape}")
        c, h, w = shape
        if h < self.kh or w < self.kw:
            raise ShapeError(f"kernel {self.kh}x{self.kw} larger than input {h}x{w}")
        s = self.stride
        return (self.filters, (h - self.kh) // s + 1, (w - self.kw) // s + 1)

    def init(self, shape, rng):
        c = shape[0]
        fan_in = c * self.kh * self.kw
        self.params = {"W": rng.normal(0.0, math.sqrt(2.0 / fan_in),
                                       (self.filters, c, self.kh, self.kw)),
                       "b": np.zeros(self.filters)}

    def forward(self, x, train=False, rng=None):
        b, c, h, w = x.shape
        s = self.stride
        ho, wo = (h - self.kh) // s + 1, (w - self.kw) // s + 1
        win = np.lib.stride_tricks.sliding_window_view(x, (self.kh, self.kw), axis=(2, 3))
        win = win[:, :, ::s, ::s][:, :, :ho, :wo]
        cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(b * ho * wo, -1)
        self.cols, self.in_shape, self.out_hw = cols, x.shape, (ho, wo)
        out = cols @ self.params["W"].reshape(self.filters, -1).T + self.params["b"]
        return out.reshape(b, ho, wo, self.filters).transpose(0, 3, 1, 2)

    def backward(self, dout):
        b, c, h, w = self.in_shape
        ho, wo = self.out_hw
        s = self.stride
        dmat = dout.transpose(0, 2, 3, 1).reshape(-1, self.filters)
        wmat = self.params["W"].reshape(self.filters, -1)
        self.grads = {"W": (dmat.T @ self.cols).reshape(self.params["W"].shape),
                      "b": dmat.sum(axis=0)}
        dcols = (dmat @ wmat).reshape(b, ho, wo, c, self.kh, self.kw)
        dx = np.zeros(self.in_shape)
        for i in range(self.kh):
            for j in range(self.kw):
                dx[:, :, i:i + s * (ho - 1) + 1:s, j:j + s * (wo - 1) + 1:s] += \
                    dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        return dx


class MaxPool2D(Layer):
    """Non-overlapping max pooling; ties go to the first index in the window."""

    def __init__(self, pool):
        super().__init__()
        self.ph, self.pw = pool

    def output_shape(self, shape):
        if len(shape) != 3:
            raise ShapeError(f"maxpool needs (C, H, W) input, got {shape}")
        c, h, w = shape
        if h < self.ph or w < self.pw:
            raise ShapeError(f"pool {self.ph}x{self.pw} larger than input {h}x{w}")
        return (c, h // self.ph, w // self.pw)

    def forward(self, x, train=False, rng=None):
        b, c, h, w = x.shape
        ho, wo = h // self.ph, w // self.pw
        blocks = x[:, :, :ho * self.ph, :wo * self.pw].reshape(b, c, ho, self.ph, wo, self.pw)
        blocks = blocks.transpose(0, 1, 2, 4, 3, 5).reshape(b, c, ho, wo, self.ph * self.pw)
        self.arg = np.argmax(blocks, axis=-1)
        self.in_shape = x.shape
        return np.take_along_axis(blocks, self.arg[..., None], axis=-1)[..., 0]

    def backward(self, dout):
        b, c, h, w = self.in_shape
        ho, wo = dout.shape[2:]
        grad = np.zeros((b, c, ho, wo, self.ph * self.pw))
        np.put_along_axis(grad, self.arg[..., None], dout[..., None], axis=-1)
        grad = grad.reshape(b, c, ho, wo, self.ph, self.pw).transpose(0, 1, 2, 4, 3, 5)
        dx = np.zeros(self.in_shape)
        dx[:, :, :ho * self.ph, :wo * self.pw] = grad.reshape(b, c, ho * self.ph, wo * self.pw)
        return dx


class Activation(Layer):
    def __init__(self, fn):
        super().__init__()
        if fn not in ("relu", "sigmoid"):
            raise ValueError(f"unknown activation {fn!r}")
        self.fn = fn

    def forward(self, x, train=False, rng=None):
        if self.fn == "relu":
            self.mask = x > 0
            return np.where(self.mask, x, 0.0)
        self.out = sigmoid(x)
        return self.out

    def backward(self, dout):
        if self.fn == "relu":
            return np.where(self.mask, dout, 0.0)
        return dout * self.out * (1.0 - self.out)


class Flatten(Layer):
    def output_shape(self, shape):
        return (int(np.prod(shape)),)

    def forward(self, x, train=False, rng=None):
        self.in_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self.in_shape)


class Dropout(Layer):
    def __init__(self, p):
        super().__init__()
        if not 0 <= p < 1:
            raise ValueError("dropout rate must be in [0, 1)")
        self.p = p

    def forward(self, x, train=False, rng=None):
        if not train or self.p == 0:
            self.mask = None
            return x
        self.mask = (rng.random(x.shape) >= self.p) / (1.0 - self.p)
        return x * self.mask

    def backward(self, dout):
        return dout if self.mask is None else dout * self.mask


def build_layer(cfg: dict) -> Layer:
    kind = cfg["type"]
    if kind == "dense":
        return Dense(int(cfg["units"]))
    if kind == "conv2d":
        return Conv2D(int(cfg["filters"]), tuple(cfg["kernel"]), int(cfg.get("stride", 1)))
    if kind == "maxpool":
        return MaxPool2D(tuple(cfg["pool"]))
    if kind == "activation":
        return Activation(cfg["fn"])
    if kind == "flatten":
        return Flatten()
    if kind == "dropout":
        return Dropout(float(cfg["p"]))
    raise ValueError(f"unknown layer type {kind!r}")


# ---------------------------------------------------------------------------
# network

@dataclass(eq=False)
class Network:
    spec: dict
    layers: list
    seed: int = 0
    log: list = field(default_factory=list)

    @property
    def input_shape(self):
        return tuple(self.spec["input_shape"])

    def logits(self, x, train=False, rng=None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[1:] != self.input_shape:
            raise ShapeError(f"input shape {x.shape[1:]} != network input {self.input_shape}")
        for layer in self.layers:
            x = layer.forward(x, train, rng)
        return x[:, 0]

    def backward(self, dlogits):
        d = np.asarray(dlogits, dtype=float)[:, None]
        for layer in reversed(self.layers):
            d = layer.backward(d)
        return d

    def parameters(self):
        """(layer index, name, array) triples in a fixed order."""
        return [(i, name, layer.params[name]) for i, layer in enumerate(self.layers)
                for name in sorted(layer.params)]

    def n_parameters(self) -> int:
        return sum(p.size for _, _, p in self.parameters())

    def to_dict(self):
        return {"spec": self.spec, "seed": self.seed,
                "params": [[i, name, p.tolist()] for i, name, p in self.parameters()]}

    @classmethod
    def from_dict(cls, d):
        net = build_network(d["spec"], d.get("seed", 0))
        for i, name, values in d["params"]:
            net.layers[i].params[name] = np.array(values, dtype=float)
        return net

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)


def build_network(spec: dict, seed: int = 0) -> Network:
    layers = [build_layer(c) for c in spec["layers"]]
    if not layers or not isinstance(layers[-1], Dense) or layers[-1].units != 1:
        raise ShapeError("the final layer must be dense with a single unit")
    rng = np.random.default_rng(seed)
    shape = tuple(spec["input_shape"])
    for layer in layers:
        layer.init(shape, rng)
        shape = layer.output_shape(shape)
    return Network(spec, layers, seed)


def network_forward(net: Network, x) -> np.ndarray:
    """Inference-mode probabilities for a batch (dropout inactive)."""
    return sigmoid(net.logits(x))


def loss_and_gradients(net: Network, x, y, train=False, rng=None):
    z = net.logits(x, train, rng)
    loss, dz = bce_with_logits(z, y)
    net.backward(dz)
    grads = [net.layers[i].grads[name] for i, name, _ in net.parameters()]
    return loss, grads


def gradient_check(net: Network, x, y, eps: float = 1e-5, max_params: int | None = None,
                   seed: int = 0) -> float:
    """Max relative error between analytic and central-difference gradients.

    With ``max_params`` only that many randomly chosen scalars are checked.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _, grads = loss_and_gradients(net, x, y)
    params = net.parameters()
    index = [(k, j) for k, (_, _, p) in enumerate(params) for j in range(p.size)]
    if max_params is not None and len(index) > max_params:
        rng = np.random.default_rng(seed)
        index = [index[i] for i in sorted(rng.choice(len(index), max_params, replace=False))]
    worst = 0.0
    for k, j in index:
        p = params[k][2].reshape(-1)
        old = p[j]
        p[j] = old + eps
        up, _ = bce_with_logits(net.logits(x), y)
        p[j] = old - eps
        down, _ = bce_with_logits(net.logits(x), y)
        p[j] = old
        numeric = (up - down) / (2 * eps)
        analytic = grads[k].reshape(-1)[j]
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-12)
        worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# training

@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 30
    patience: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1:
            raise ValueError("learning rate and batch size must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


class Adam:
    def __init__(self, params, cfg: TrainConfig):
        self.cfg = cfg
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        c = self.cfg
        self.t += 1
        corr1 = 1.0 - c.beta1 ** self.t
        corr2 = 1.0 - c.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g * g
            p -= c.learning_rate * (m / corr1) / (np.sqrt(v / corr2) + c.epsilon)


class Sgd:
    def __init__(self, params, cfg: TrainConfig):
        self.cfg = cfg

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.cfg.learning_rate * g


def _snapshot(net):
    return [p.copy() for _, _, p in net.parameters()]


def _restore(net, values):
    for (_, _, p), v in zip(net.parameters(), values):
        p[...] = v


def network_train(spec: dict, x, y, config: TrainConfig = TrainConfig(),
                  dev_eer=None) -> Network:
    """Minimise binary cross-entropy with minibatch backprop.

    ``dev_eer`` is an optional callable ``net -> EER``; when given, training
    stops after ``patience`` epochs without improvement and the parameters
    of the best epoch are restored.  The per-epoch log is kept on ``net.log``
    as (epoch, train loss, dev EER) tuples.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(np.unique(y)) != 2:
        raise ValueError("training data must contain both classes")
    net = build_network(spec, config.seed)
    rng = np.random.default_rng(config.seed + 1)
    params = [p for _, _, p in net.parameters()]
    opt = Adam(params, config) if config.optimizer == "adam" else Sgd(params, config)

    best, best_eer, stale = None, np.inf, 0
    n = x.shape[0]
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        losses = []
        for lo in range(0, n, config.batch_size):
            idx = order[lo:lo + config.batch_size]
            loss, grads = loss_and_gradients(net, x[idx], y[idx], train=True, rng=rng)
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}, batch {lo // config.batch_size}")
            opt.step(params, grads)
            losses.append(loss * idx.size)
        train_loss = float(np.sum(losses) / n)
        eer = float(dev_eer(net)) if dev_eer is not None else float("nan")
        net.log.append((epoch, train_loss, eer))
        log.info("epoch %d loss %.5f dev EER %.4f", epoch, train_loss, eer)
        if dev_eer is None:
            continue
        if eer < best_eer:
            best, best_eer, stale = _snapshot(net), eer, 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    if best is not None:
        _restore(net, best)
    return net


def write_training_log(net: Network, path) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,train_loss,dev_eer\n")
        for epoch, loss, eer in net.log:
            fh.write(f"{epoch},{loss!r},{eer!r}\n")


# ---------------------------------------------------------------------------
# utterance scoring

def frame_log_odds(net: Network, frames) -> np.ndarray:
    """Per-frame logit log(p / (1 - p)), computed without forming p."""
    return net.logits(frames)


def score_utterance(net: Network, kind: str, features) -> float:
    """CNN: probability of one fixed-size input.  DNN: mean frame log-odds.

    DNN frames are put in a canonical row order and summed exactly, so the
    score does not depend on frame order at all.
    """
    features = np.asarray(features, dtype=float)
    if kind == "cnn":
        if features.shape != net.input_shape:
            raise ShapeError(f"CNN input {features.shape} != {net.input_shape}")
        return float(network_forward(net, features[None])[0])
    if kind == "dnn":
        if features.ndim != 2 or features.shape[0] == 0:
            raise ValueError("DNN scoring needs at least one frame")
        ordered = features[np.lexsort(features.T[::-1])]
        odds = frame_log_odds(net, ordered)
        return math.fsum(odds.tolist()) / len(odds)
    raise ValueError(f"unknown network kind {kind!r}")


# ---------------------------------------------------------------------------
# default architectures (stand-ins; layer sizes are desk-scale choices)

def _dense_head(units, dropout):
    head = [{"type": "flatten"}, {"type": "dense", "units": units},
            {"type": "activation", "fn": "relu"}]
    if dropout:
        head.append({"type": "dropout", "p": dropout})
    return head + [{"type": "dense", "units": 1}]


def _conv(filters, k, stride=1):
    return [{"type": "conv2d", "filters": filters, "kernel": [k, k], "stride": stride},
            {"type": "activation", "fn": "relu"}]


def cnn1_spec(input_shape=(1, 390, 865), width=1.0, dropout=0.3) -> dict:
    """Nine convolutions, pooling every two or three, dense(64) head."""
    f = lambda n: max(1, int(round(n * width)))
    layers = (_conv(f(8), 5, 2) + [{"type": "maxpool", "pool": [2, 3]}]
              + _conv(f(8), 3) + _conv(f(16), 3) + [{"type": "maxpool", "pool": [2, 2]}]
              + _conv(f(16), 3) + _conv(f(16), 3) + [{"type": "maxpool", "pool": [2, 2]}]
              + _conv(f(32), 3) + _conv(f(32), 3) + [{"type": "maxpool", "pool": [2, 2]}]
              + _conv(f(32), 3) + _conv(f(32), 3, 1)
              + _dense_head(f(64), dropout))
    return {"input_shape": list(input_shape), "layers": layers}


def cnn2_spec(input_shape=(1, 297, 257), width=1.0, dropout=0.3) -> dict:
    """conv(16)-pool-conv(32)-pool-dense(64): four hidden layers."""
    f = lambda n: max(1, int(round(n * width)))
    layers = (_conv(f(16), 5, 2) + [{"type": "maxpool", "pool": [3, 3]}]
              + _conv(f(32), 3) + [{"type": "maxpool", "pool": [3, 3]}]
              + _dense_head(f(64), dropout))
    return {"input_shape": list(input_shape), "layers": layers}


def dnn_spec(input_dims=60, hidden=(128, 128, 64), dropout=0.3) -> dict:
    layers = []
    for units in hidden:
        layers += [{"type": "dense", "units": units}, {"type": "activation", "fn": "relu"}]
        if dropout:
            layers.append({"type": "dropout", "p": dropout})
    layers.append({"type": "dense", "units": 1})
    return {"input_shape": [input_dims], "layers": layers}
