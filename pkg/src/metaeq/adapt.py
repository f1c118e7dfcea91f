"""Decision-directed online training and online meta-learning of the initialization.

The receiver keeps two weight vectors: ``phi`` drives detection and
``theta`` is the starting point every retraining begins from. Labels come
from pilots or from data blocks that the RS decoder accepted, re-encoded and
re-modulated. Once every ``K`` blocks ``theta`` takes first-order MAML steps
over (support, query) pairs of neighbouring buffered blocks.
"""

from collections import deque
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import gf
from .channel import bpsk_hard_demod, bpsk_modulate
from .neural import LSTM, Model, sgd_step, sliding_windows, train
from .trellis import LIKELIHOOD_FLOOR, LikelihoodProvider, state_labels, viterbi_detect


@dataclass(frozen=True)
class BufferEntry:
    block_index: int
    symbols: np.ndarray
    observations: np.ndarray


class AdaptationBuffer:
    """FIFO of labelled blocks with strictly increasing block indices."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("buffer capacity must be at least 1")
        self.capacity = capacity
        self._entries = deque(maxlen=capacity)

    def insert(self, entry: BufferEntry) -> "AdaptationBuffer":
        if self._entries and entry.block_index <= self._entries[-1].block_index:
            raise ValueError(
                f"block {entry.block_index} inserted after block {self._entries[-1].block_index}")
        self._entries.append(entry)
        return self

    def __len__(self):
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    def __getitem__(self, k):
        return self._entries[k]

    @property
    def indices(self) -> list:
        return [e.block_index for e in self._entries]

    def latest(self) -> Optional[BufferEntry]:
        return self._entries[-1] if self._entries else None


def buffer_insert(buffer: AdaptationBuffer, entry: BufferEntry) -> AdaptationBuffer:
    return buffer.insert(entry)


def select_meta_pair(buffer: AdaptationBuffer, rng, window: int = 1):
    """Uniformly pick a query block whose buffered predecessor is at most ``window`` blocks back.

    Returns ``(support, query)`` or ``None`` when the buffer has no such pair.
    """
    eligible = [k for k in range(1, len(buffer))
                if buffer[k].block_index - buffer[k - 1].block_index <= window]
    if not eligible:
        return None
    k = eligible[int(rng.integers(len(eligible)))]
    return buffer[k - 1], buffer[k]


class Equalizer:
    """Ties a model to the way its training data and detections are formed."""

    def __init__(self, model: Model, memory: int, start: str = "guard"):
        self.model = model
        self.memory = memory
        self.start = start

    def inputs(self, observations):
        return np.asarray(observations, dtype=np.float64)

    def labels(self, symbols):
        return state_labels(symbols, self.memory)

    def loss_and_grad(self, params, entry: BufferEntry):
        return self.model.loss_and_grad(params, self.inputs(entry.observations),
                                        self.labels(entry.symbols))

    def loss(self, params, entry: BufferEntry) -> float:
        return self.loss_and_grad(params, entry)[0]

    def detect(self, params, observations) -> np.ndarray:
        raise NotImplementedError


class NetworkProvider(LikelihoodProvider):
    """Classifier posteriors used as scaled likelihoods in the trellis."""

    def __init__(self, model: Model, params, memory: int):
        self.model = model
        self.params = params
        self.memory = memory

    def likelihoods(self, samples) -> np.ndarray:
        return np.maximum(self.model.forward(self.params, samples), LIKELIHOOD_FLOOR)


class ViterbiNetEqualizer(Equalizer):
    def detect(self, params, observations) -> np.ndarray:
        provider = NetworkProvider(self.model, params, self.memory)
        return viterbi_detect(observations, provider, start=self.start)


class WindowEqualizer(Equalizer):
    """Black-box sliding-window classifier; decides each symbol on its own.

    The classifier sees ``[y_{t-L+1}, ..., y_t]`` and predicts the state at
    time t. Symbol i is read from the window ending at ``min(i+L-1, B-1)``,
    the latest window that still contains it, by marginalising the state
    posterior onto that symbol's bit.
    """

    def inputs(self, observations):
        return sliding_windows(observations, self.model.window)

    def detect(self, params, observations) -> np.ndarray:
        probs = self.model.forward(params, self.inputs(observations))
        n = probs.shape[0]
        L = self.memory
        states = np.arange(probs.shape[1])
        i = np.arange(n)
        t = np.minimum(i + L - 1, n - 1)
        position = L - 1 - (t - i)
        bit_set = (states[None, :] >> position[:, None]) & 1
        p_minus = np.sum(probs[t] * bit_set, axis=1)
        return np.where(p_minus > 0.5, -1.0, 1.0)


def make_equalizer(model: Model, memory: int, start: str = "guard") -> Equalizer:
    if isinstance(model, LSTM):
        return WindowEqualizer(model, memory, start)
    return ViterbiNetEqualizer(model, memory, start)


@dataclass
class MetaState:
    theta: np.ndarray
    phi: np.ndarray
    eta: float = 5e-3
    kappa: float = 1e-3
    inner_eta: float = 1e-4
    K: int = 5
    W: int = 1
    online_iters: int = 200
    meta_iters: int = 200
    optimizer: str = "adam"

    def __post_init__(self):
        if not self.eta > 0 or not self.inner_eta > 0 or not self.kappa >= 0:
            raise ValueError("need eta > 0, inner_eta > 0 and kappa >= 0")
        if self.K < 1 or self.W < 1:
            raise ValueError("need K >= 1 and W >= 1")
        self.theta = np.array(self.theta, dtype=np.float64)
        self.phi = np.array(self.phi, dtype=np.float64)
        if self.theta.shape != self.phi.shape:
            raise ValueError("theta and phi must have the same shape")


def _fit(eq: Equalizer, start_params, entry: BufferEntry, lr, iters, optimizer):
    return train(eq.model, start_params, eq.inputs(entry.observations),
                 eq.labels(entry.symbols), lr, iters, optimizer)


def online_update(state: MetaState, entry: BufferEntry, eq: Equalizer) -> np.ndarray:
    """Retrain on ``entry`` starting from ``theta`` (not from the current ``phi``)."""
    return _fit(eq, state.theta, entry, state.eta, state.online_iters, state.optimizer)


def plain_online_update(phi_prev, entry: BufferEntry, eq: Equalizer, eta: float,
                        iters: int, optimizer: str = "adam") -> np.ndarray:
    """Retrain on ``entry`` starting from the previous weights."""
    return _fit(eq, phi_prev, entry, eta, iters, optimizer)


def meta_update(theta, buffer: AdaptationBuffer, eq: Equalizer, rng, eta: float,
                kappa: float, iters: int, window: int = 1) -> np.ndarray:
    """First-order MAML on the initialization.

    Each iteration adapts ``theta`` with one gradient step on the support
    block, then moves ``theta`` against the query-block gradient taken at the
    adapted point. Iterations without an eligible pair are skipped.
    """
    theta = np.array(theta, dtype=np.float64)
    if kappa == 0:
        return theta
    for _ in range(iters):
        pair = select_meta_pair(buffer, rng, window)
        if pair is None:
            continue
        support, query = pair
        _, g_support = eq.loss_and_grad(theta, support)
        adapted = sgd_step(theta, g_support, eta)
        loss, g_query = eq.loss_and_grad(adapted, query)
        if not np.isfinite(loss):
            raise FloatingPointError("non-finite meta loss")
        theta = sgd_step(theta, g_query, kappa)
    return theta


@dataclass
class BlockResult:
    block_index: int
    detected: np.ndarray
    decode: Optional[gf.DecodeOutcome]
    trained: bool
    meta_updated: bool


def decode_symbols(detected) -> gf.DecodeOutcome:
    bits = bpsk_hard_demod(detected)
    return gf.rs_decode(gf.pack_bits(bits))


def reencode(message: bytes) -> np.ndarray:
    return bpsk_modulate(gf.unpack_bits(gf.rs_encode(message)))


class Receiver:
    """One adaptive receiver processing a stream of blocks in order.

    ``training`` is one of ``joint`` (weights frozen), ``online`` (retrain
    from the previous weights) or ``meta`` (retrain from the meta-learned
    initialization, which is itself updated every K blocks).

    ``gate`` optionally replaces the decoder success flag when deciding
    whether to retrain on a data block; the harness uses it for the
    diagnostic threshold mode. The receiver never sees transmitted data.
    """

    def __init__(self, eq: Equalizer, state: MetaState, training: str = "meta",
                 buffer_size: int = 15, rng=None,
                 gate: Optional[Callable[[int, np.ndarray, gf.DecodeOutcome], bool]] = None):
        if training not in ("joint", "online", "meta"):
            raise ValueError(f"unknown training method {training!r}")
        self.eq = eq
        self.state = state
        self.training = training
        self.buffer = AdaptationBuffer(buffer_size)
        self.rng = np.random.default_rng(rng)
        self.gate = gate
        self.meta_calls = 0

    def detect(self, observations) -> np.ndarray:
        return self.eq.detect(self.state.phi, observations)

    def process_block(self, block_index: int, observations, pilot_symbols=None) -> BlockResult:
        y = np.asarray(observations, dtype=np.float64)
        detected = self.detect(y)
        decode = None
        entry = None
        if pilot_symbols is not None:
            entry = BufferEntry(block_index, np.asarray(pilot_symbols, dtype=np.float64), y)
        else:
            decode = decode_symbols(detected)
            accept = decode.success if self.gate is None else self.gate(block_index, detected, decode)
            if accept and decode.success:
                entry = BufferEntry(block_index, reencode(decode.message), y)
        if entry is not None:
            self.buffer.insert(entry)

        meta_updated = False
        s = self.state
        if self.training == "meta" and (block_index + 1) % s.K == 0:
            s.theta = meta_update(s.theta, self.buffer, self.eq, self.rng, s.inner_eta, s.kappa,
                                  s.meta_iters, s.W)
            self.meta_calls += 1
            meta_updated = True

        trained = False
        if entry is not None and self.training != "joint":
            if self.training == "meta":
                s.phi = online_update(s, entry, self.eq)
            else:
                s.phi = plain_online_update(s.phi, entry, self.eq, s.eta, s.online_iters,
                                            s.optimizer)
            trained = True
        return BlockResult(block_index, detected, decode, trained, meta_updated)
