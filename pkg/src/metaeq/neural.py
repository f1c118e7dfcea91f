"""Small numpy networks with hand-written backward passes.

Parameters live in one flat float64 vector so that optimizers and the
meta-learner can treat every architecture the same way. Each model exposes
``forward(params, inputs)`` returning class probabilities and
``loss_and_grad(params, inputs, labels)`` returning the summed cross entropy
and its gradient with respect to the flat vector.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

LOG_FLOOR = np.log(1e-30)


class ArchitectureMismatch(ValueError):
    pass


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def log_softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _check_labels(labels, n_classes, n):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (n,):
        raise ValueError(f"expected {n} labels, got shape {labels.shape}")
    if n == 0:
        raise ValueError("empty batch")
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError(f"labels must lie in [0, {n_classes})")
    return labels


def _ce_from_logits(z, labels):
    """Summed floored cross entropy and its gradient w.r.t. the logits."""
    logp = log_softmax(z)
    rows = np.arange(z.shape[0])
    picked = logp[rows, labels]
    live = picked > LOG_FLOOR
    loss = -np.sum(np.maximum(picked, LOG_FLOOR))
    dz = np.exp(logp)
    dz[rows, labels] -= 1.0
    dz[~live] = 0.0
    return float(loss), dz


class Model:
    arch = ""
    n_classes = 16

    def __init__(self):
        self._offsets = {}
        total = 0
        for name, shape in self.shapes:
            size = int(np.prod(shape))
            self._offsets[name] = (total, total + size, shape)
            total += size
        self.num_params = total

    @property
    def dims(self) -> tuple:
        raise NotImplementedError

    def unflatten(self, params) -> dict:
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (self.num_params,):
            raise ArchitectureMismatch(
                f"{self.arch} expects {self.num_params} parameters, got {params.shape}")
        return {name: params[a:b].reshape(shape) for name, (a, b, shape) in self._offsets.items()}

    def flatten(self, parts: dict) -> np.ndarray:
        out = np.empty(self.num_params)
        for name, (a, b, _) in self._offsets.items():
            out[a:b] = np.asarray(parts[name]).ravel()
        return out

    def init(self, rng) -> np.ndarray:
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) per tensor."""
        rng = np.random.default_rng(rng)
        parts = {}
        for name, (_, _, shape) in self._offsets.items():
            bound = 1.0 / np.sqrt(self._fan_in(name))
            parts[name] = rng.uniform(-bound, bound, size=shape)
        return self.flatten(parts)

    def loss(self, params, inputs, labels) -> float:
        return self.loss_and_grad(params, inputs, labels)[0]


class MLP(Model):
    """1 -> 100 (sigmoid) -> 50 (ReLU) -> 16 (softmax) classifier over trellis states."""

    arch = "mlp"

    def __init__(self, hidden=(100, 50), n_classes=16):
        self.hidden = tuple(hidden)
        self.n_classes = n_classes
        h1, h2 = self.hidden
        self.shapes = [("w1", (1, h1)), ("b1", (h1,)), ("w2", (h1, h2)), ("b2", (h2,)),
                       ("w3", (h2, n_classes)), ("b3", (n_classes,))]
        super().__init__()

    @property
    def dims(self):
        return (1,) + self.hidden + (self.n_classes,)

    def _fan_in(self, name):
        return {"1": 1, "2": self.hidden[0], "3": self.hidden[1]}[name[-1]]

    def _forward(self, p, x):
        a1 = sigmoid(x @ p["w1"] + p["b1"])
        z2 = a1 @ p["w2"] + p["b2"]
        a2 = np.maximum(z2, 0.0)
        z3 = a2 @ p["w3"] + p["b3"]
        return a1, z2, a2, z3

    def forward(self, params, inputs) -> np.ndarray:
        x = np.asarray(inputs, dtype=np.float64).reshape(-1, 1)
        if not np.all(np.isfinite(x)):
            raise ValueError("non-finite input")
        z3 = self._forward(self.unflatten(params), x)[-1]
        return np.exp(log_softmax(z3))

    def loss_and_grad(self, params, inputs, labels):
        p = self.unflatten(params)
        x = np.asarray(inputs, dtype=np.float64).reshape(-1, 1)
        labels = _check_labels(labels, self.n_classes, x.shape[0])
        a1, z2, a2, z3 = self._forward(p, x)
        loss, dz3 = _ce_from_logits(z3, labels)
        g = {"w3": a2.T @ dz3, "b3": dz3.sum(0)}
        dz2 = (dz3 @ p["w3"].T) * (z2 > 0)
        g["w2"] = a1.T @ dz2
        g["b2"] = dz2.sum(0)
        dz1 = (dz2 @ p["w2"].T) * a1 * (1.0 - a1)
        g["w1"] = x.T @ dz1
        g["b1"] = dz1.sum(0)
        return loss, self.flatten(g)


def sliding_windows(samples, window: int) -> np.ndarray:
    """(B, window) matrix; row i is [y_{i-window+1}, ..., y_i] with zeros before the block."""
    y = np.asarray(samples, dtype=np.float64)
    padded = np.concatenate([np.zeros(window - 1), y])
    idx = np.arange(y.size)[:, None] + np.arange(window)[None, :]
    return padded[idx]


class LSTM(Model):
    """Two stacked LSTM layers over a window of scalar samples, dense softmax head.

    Gate order inside each 4H block is input, forget, candidate, output.
    """

    arch = "lstm"

    def __init__(self, window=4, hidden=64, n_classes=16):
        self.window = window
        self.hidden = hidden
        self.n_classes = n_classes
        H = hidden
        self.shapes = [("wx1", (1, 4 * H)), ("wh1", (H, 4 * H)), ("b1", (4 * H,)),
                       ("wx2", (H, 4 * H)), ("wh2", (H, 4 * H)), ("b2", (4 * H,)),
                       ("wo", (H, n_classes)), ("bo", (n_classes,))]
        super().__init__()

    @property
    def dims(self):
        return (self.window, self.hidden, self.hidden, self.n_classes)

    def _fan_in(self, name):
        return self.hidden

    def _windows(self, inputs):
        x = np.asarray(inputs, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.shape[1] != self.window:
            raise ValueError(f"window length {x.shape[1]} != {self.window}")
        if not np.all(np.isfinite(x)):
            raise ValueError("non-finite input")
        return x

    def _layer(self, xs, wx, wh, b):
        """Run one layer over a list of (N, D) inputs; return outputs and cache."""
        H = self.hidden
        n = xs[0].shape[0]
        h = np.zeros((n, H))
        c = np.zeros((n, H))
        hs, cache = [], []
        for x in xs:
            a = x @ wx + h @ wh + b
            i = sigmoid(a[:, :H])
            f = sigmoid(a[:, H:2 * H])
            g = np.tanh(a[:, 2 * H:3 * H])
            o = sigmoid(a[:, 3 * H:])
            c_prev, h_prev = c, h
            c = f * c_prev + i * g
            tc = np.tanh(c)
            h = o * tc
            hs.append(h)
            cache.append((x, h_prev, c_prev, i, f, g, o, tc))
        return hs, cache

    def _layer_backward(self, dhs, cache, wx, wh):
        H = self.hidden
        dwx = np.zeros_like(wx)
        dwh = np.zeros_like(wh)
        db = np.zeros(4 * H)
        dxs = [None] * len(cache)
        dh_next = np.zeros_like(dhs[0])
        dc_next = np.zeros_like(dhs[0])
        for t in range(len(cache) - 1, -1, -1):
            x, h_prev, c_prev, i, f, g, o, tc = cache[t]
            dh = dhs[t] + dh_next
            do = dh * tc
            dc = dh * o * (1.0 - tc * tc) + dc_next
            di = dc * g
            df = dc * c_prev
            dg = dc * i
            da = np.concatenate([di * i * (1 - i), df * f * (1 - f),
                                 dg * (1 - g * g), do * o * (1 - o)], axis=1)
            dwx += x.T @ da
            dwh += h_prev.T @ da
            db += da.sum(0)
            dxs[t] = da @ wx.T
            dh_next = da @ wh.T
            dc_next = dc * f
        return dxs, dwx, dwh, db

    def _forward(self, p, x):
        xs = [x[:, t:t + 1] for t in range(self.window)]
        h1, c1 = self._layer(xs, p["wx1"], p["wh1"], p["b1"])
        h2, c2 = self._layer(h1, p["wx2"], p["wh2"], p["b2"])
        z = h2[-1] @ p["wo"] + p["bo"]
        return z, (h1, c1, h2, c2)

    def forward(self, params, inputs) -> np.ndarray:
        z, _ = self._forward(self.unflatten(params), self._windows(inputs))
        return np.exp(log_softmax(z))

    def gate_activations(self, params, inputs):
        """Gate values of both layers, for inspection."""
        _, (_, c1, _, c2) = self._forward(self.unflatten(params), self._windows(inputs))
        return [step[3:7] for step in c1 + c2]

    def loss_and_grad(self, params, inputs, labels):
        p = self.unflatten(params)
        x = self._windows(inputs)
        labels = _check_labels(labels, self.n_classes, x.shape[0])
        z, (h1, c1, h2, c2) = self._forward(p, x)
        loss, dz = _ce_from_logits(z, labels)
        g = {"wo": h2[-1].T @ dz, "bo": dz.sum(0)}
        dh2 = [np.zeros_like(h) for h in h2]
        dh2[-1] = dz @ p["wo"].T
        dh1, g["wx2"], g["wh2"], g["b2"] = self._layer_backward(dh2, c2, p["wx2"], p["wh2"])
        _, g["wx1"], g["wh1"], g["b1"] = self._layer_backward(dh1, c1, p["wx1"], p["wh1"])
        return loss, self.flatten(g)


def make_model(arch: str, **kwargs) -> Model:
    if arch == "mlp":
        return MLP(**kwargs)
    if arch == "lstm":
        return LSTM(**kwargs)
    raise ValueError(f"unknown architecture {arch!r}")


def sgd_step(params, grad, lr: float) -> np.ndarray:
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if params.shape != grad.shape:
        raise ValueError(f"shape mismatch: {params.shape} vs {grad.shape}")
    return params - lr * grad


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(params, state: AdamState, grad, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update; returns (new_params, new_state)."""
    grad = np.asarray(grad, dtype=np.float64)
    t = state.t + 1
    m = beta1 * state.m + (1 - beta1) * grad
    v = beta2 * state.v + (1 - beta2) * grad * grad
    m_hat = m / (1 - beta1 ** t)
    v_hat = v / (1 - beta2 ** t)
    new = np.asarray(params, dtype=np.float64) - lr * m_hat / (np.sqrt(v_hat) + eps)
    return new, AdamState(m, v, t)


def train(model: Model, params, inputs, labels, lr, iters, optimizer="adam"):
    """Full-batch minimisation of the summed cross entropy."""
    params = np.array(params, dtype=np.float64)
    state = AdamState.zeros(params.size)
    for _ in range(iters):
        loss, grad = model.loss_and_grad(params, inputs, labels)
        if not np.isfinite(loss):
            raise FloatingPointError("non-finite training loss")
        if optimizer == "adam":
            params, state = adam_step(params, state, grad, lr)
        elif optimizer == "sgd":
            params = sgd_step(params, grad, lr)
        else:
            raise ValueError(f"unknown optimizer {optimizer!r}")
    return params


def save_params(model: Model, params, path) -> None:
    """Text header line followed by little-endian float64 values."""
    params = np.asarray(params, dtype=np.float64)
    model.unflatten(params)
    header = f"arch={model.arch} dims={','.join(map(str, model.dims))} count={params.size}\n"
    Path(path).write_bytes(header.encode("ascii") + params.astype("<f8").tobytes())


def read_params_header(path) -> dict:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise ArchitectureMismatch(f"{path}: missing header")
    try:
        fields = dict(tok.split("=", 1) for tok in raw[:nl].decode("ascii").split())
        info = {"arch": fields["arch"],
                "dims": tuple(int(d) for d in fields["dims"].split(",")),
                "count": int(fields["count"])}
    except (ValueError, KeyError, UnicodeDecodeError) as exc:
        raise ArchitectureMismatch(f"{path}: corrupted header ({exc})") from None
    info["payload"] = raw[nl + 1:]
    return info


def load_params(model: Model, path) -> np.ndarray:
    info = read_params_header(path)
    if info["arch"] != model.arch or info["dims"] != tuple(model.dims):
        raise ArchitectureMismatch(
            f"{path}: file holds {info['arch']} {info['dims']}, expected {model.arch} {model.dims}")
    if info["count"] != model.num_params or len(info["payload"]) != 8 * info["count"]:
        raise ArchitectureMismatch(f"{path}: parameter count does not match")
    return np.frombuffer(info["payload"], dtype="<f8").astype(np.float64)
