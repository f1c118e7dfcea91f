"""Viterbi sequence detection over the 2^L-state BPSK trellis.

A state holds the last L symbols ``[s_{i-L+1}, ..., s_i]``. Bit k of the
state index is 1 iff the symbol at relative position k (0 = oldest) is -1.
Before the first symbol of a block the channel sees a zero guard; paths start
in state 0 and the bits of not-yet-transmitted positions stay 0.

Likelihood providers return values proportional to P(y | state). Only the
argmin over paths matters, so any per-time positive scaling is harmless.
"""

import itertools

import numpy as np

LIKELIHOOD_FLOOR = 1e-30


class DetectionError(ValueError):
    pass


def num_states(memory: int) -> int:
    return 1 << memory


def state_symbols(memory: int) -> np.ndarray:
    """(2^L, L) matrix of the BPSK symbols in each state, oldest first."""
    idx = np.arange(num_states(memory))[:, None]
    bits = (idx >> np.arange(memory)[None, :]) & 1
    return 1.0 - 2.0 * bits


def encode_state(symbols) -> int:
    """Index of a state given its symbols, oldest first."""
    return int(sum(1 << k for k, s in enumerate(symbols) if s < 0))


def decode_state(index: int, memory: int) -> np.ndarray:
    return state_symbols(memory)[index]


def predecessors(state: int, memory: int) -> tuple:
    """The two states that shift into ``state``, lowest index first."""
    base = (state << 1) & (num_states(memory) - 1)
    return base, base | 1


def state_labels(symbols, memory: int) -> np.ndarray:
    """Trellis state index at every time of a block (guard positions count as +1)."""
    bits = (np.asarray(symbols) < 0).astype(np.int64)
    labels = np.zeros(bits.size, dtype=np.int64)
    for k in range(memory):
        # position k of state i holds symbol i - (L - 1 - k)
        lag = memory - 1 - k
        labels[lag:] |= bits[: bits.size - lag] << k
    return labels


class LikelihoodProvider:
    """Per-state likelihood estimates for a received sample.

    Subclasses implement :meth:`likelihoods`; :meth:`evaluate` is the
    single-sample view.
    """

    memory: int

    def likelihoods(self, samples) -> np.ndarray:
        """(len(samples), 2^L) array of positive values."""
        raise NotImplementedError

    def evaluate(self, y: float) -> np.ndarray:
        return self.likelihoods(np.array([y], dtype=np.float64))[0]


class GaussianProvider(LikelihoodProvider):
    """Exact likelihood N(y; h^T s, sigma^2) under full channel knowledge.

    With ``guard=True`` block-level evaluation zeroes the symbols that precede
    the block, matching what the channel actually produced there.
    """

    def __init__(self, taps, noise_variance: float, guard: bool = True):
        if not noise_variance > 0:
            raise ValueError("noise variance must be positive")
        self.taps = np.asarray(taps, dtype=np.float64)
        self.memory = self.taps.size
        self.noise_variance = float(noise_variance)
        self.guard = guard
        # newest symbol (position L-1) meets h_0
        self.means = state_symbols(self.memory) @ self.taps[::-1]

    def _density(self, y, means):
        var = self.noise_variance
        dens = np.exp(-((y - means) ** 2) / (2 * var)) / np.sqrt(2 * np.pi * var)
        # far-off states underflow to zero; keep them at the floor instead
        return np.maximum(dens, LIKELIHOOD_FLOOR)

    def evaluate(self, y: float) -> np.ndarray:
        return self._density(float(y), self.means)

    def likelihoods(self, samples) -> np.ndarray:
        y = np.asarray(samples, dtype=np.float64)
        means = np.broadcast_to(self.means, (y.size, self.means.size)).copy()
        if self.guard:
            sym = state_symbols(self.memory)
            for i in range(min(y.size, self.memory - 1)):
                # positions 0 .. L-2-i are still inside the guard at time i
                live = sym.copy()
                live[:, : self.memory - 1 - i] = 0.0
                means[i] = live @ self.taps[::-1]
        return self._density(y[:, None], means)


class UniformProvider(LikelihoodProvider):
    """Uninformative likelihoods; the detector then has nothing to go on."""

    def __init__(self, memory: int):
        self.memory = memory

    def likelihoods(self, samples) -> np.ndarray:
        return np.ones((np.size(samples), num_states(self.memory)))


class TableProvider(LikelihoodProvider):
    """Wraps a precomputed likelihood matrix (used in tests)."""

    def __init__(self, table):
        self.table = np.asarray(table, dtype=np.float64)
        self.memory = int(np.log2(self.table.shape[1]))

    def likelihoods(self, samples) -> np.ndarray:
        if np.size(samples) != self.table.shape[0]:
            raise ValueError("table length does not match the block")
        return self.table


def _neg_log_likelihoods(samples, provider) -> np.ndarray:
    y = np.asarray(getattr(samples, "samples", samples), dtype=np.float64)
    if y.ndim != 1 or y.size == 0:
        raise DetectionError("need a non-empty 1-D block of samples")
    lik = np.asarray(provider.likelihoods(y), dtype=np.float64)
    if lik.shape != (y.size, num_states(provider.memory)):
        raise DetectionError(f"provider returned shape {lik.shape}")
    if not np.all(np.isfinite(lik)) or np.any(lik <= 0):
        raise DetectionError("likelihoods must be positive and finite")
    return -np.log(np.maximum(lik, LIKELIHOOD_FLOOR))


def viterbi_detect(samples, provider: LikelihoodProvider, start: str = "guard") -> np.ndarray:
    """Most likely BPSK sequence for one block.

    ``start="guard"`` pins the initial state to 0; ``start="uniform"`` lets
    every state start at zero cost. Ties go to the lower predecessor index.
    Returns the detected symbols in {+1, -1}.
    """
    cost = _neg_log_likelihoods(samples, provider)
    n, n_states = cost.shape
    memory = provider.memory
    states = np.arange(n_states)
    pred_lo = (states << 1) & (n_states - 1)
    pred_hi = pred_lo | 1

    if start == "guard":
        path = np.full(n_states, np.inf)
        path[0] = 0.0
    elif start == "uniform":
        path = np.zeros(n_states)
    else:
        raise ValueError(f"unknown start mode {start!r}")

    back = np.empty((n, n_states), dtype=np.int64)
    for i in range(n):
        lo = path[pred_lo]
        hi = path[pred_hi]
        take_hi = hi < lo
        back[i] = np.where(take_hi, pred_hi, pred_lo)
        path = np.where(take_hi, hi, lo) + cost[i]

    state = int(np.argmin(path))
    newest = np.empty(n, dtype=np.int64)
    for i in range(n - 1, -1, -1):
        newest[i] = (state >> (memory - 1)) & 1
        state = back[i, state]
    return 1.0 - 2.0 * newest


def brute_force_ml(samples, provider: LikelihoodProvider, start: str = "guard",
                   max_length: int = 16) -> np.ndarray:
    """Exhaustive search over all 2^B sequences; the reference for Viterbi.

    Ties resolve to the first sequence in enumeration order, which is
    lexicographic in the state encoding (bit 0 = +1 before bit 1 = -1).
    """
    cost = _neg_log_likelihoods(samples, provider)
    n, n_states = cost.shape
    if n > max_length:
        raise DetectionError(f"block length {n} exceeds brute-force limit {max_length}")
    memory = provider.memory
    best, best_cost = None, np.inf
    starts = [0] if start == "guard" else range(n_states)
    for init in starts:
        for bits in itertools.product((0, 1), repeat=n):
            state = init
            total = 0.0
            for i, b in enumerate(bits):
                state = (state >> 1) | (b << (memory - 1))
                total += cost[i, state]
            if total < best_cost:
                best, best_cost = bits, total
    return 1.0 - 2.0 * np.asarray(best, dtype=np.float64)


def ber(truth, estimate) -> float:
    """Fraction of positions where the two symbol blocks differ."""
    a = np.asarray(getattr(truth, "symbols", truth))
    b = np.asarray(getattr(estimate, "symbols", estimate))
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return float(np.mean(a != b))
