"""Block-fading finite-memory linear Gaussian channel with BPSK signalling."""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_PERIODS = (51.0, 39.0, 33.0, 21.0)

# Two named synthetic parameter sets: one drives the offline pilot set, the
# other the evaluation stream. The test set has a stronger mean tap profile and
# slower periods, so a frozen pre-trained detector is mismatched throughout
# while an adaptive one can follow the drift.
PRESETS = {
    "train": dict(periods=DEFAULT_PERIODS, decay=0.2, dc=0.8, amplitude=0.2),
    "test": dict(periods=(101.0, 79.0, 61.0, 53.0), decay=0.2, dc=1.2, amplitude=0.2),
    "static": dict(periods=DEFAULT_PERIODS, decay=0.2, dc=0.8, amplitude=0.0),
}


class TapFileError(ValueError):
    pass


@dataclass(frozen=True)
class TapSchedule:
    """Per-block channel taps, shape (num_blocks, memory)."""

    taps: np.ndarray
    source: str = "synthetic"

    def __post_init__(self):
        taps = np.array(self.taps, dtype=np.float64)
        if taps.ndim != 2 or taps.shape[0] == 0 or taps.shape[1] == 0:
            raise ValueError(f"tap matrix must be 2-D and non-empty, got shape {taps.shape}")
        if not np.all(np.isfinite(taps)):
            raise ValueError("taps must be finite")
        taps.setflags(write=False)
        object.__setattr__(self, "taps", taps)

    @property
    def num_blocks(self) -> int:
        return self.taps.shape[0]

    @property
    def memory(self) -> int:
        return self.taps.shape[1]

    def __getitem__(self, j):
        return self.taps[j]

    def __len__(self):
        return self.num_blocks


@dataclass
class SymbolBlock:
    symbols: np.ndarray
    block_index: int
    is_pilot: bool = False


@dataclass
class ObservationBlock:
    samples: np.ndarray
    block_index: int
    snr_db: float = field(default=float("nan"))


def synthetic_taps(num_blocks, memory=4, periods=DEFAULT_PERIODS, decay=0.2,
                   dc=0.8, amplitude=0.2, start=0) -> TapSchedule:
    """Oscillating taps ``exp(-decay*l) * (dc + amplitude*cos(2*pi*j/periods[l]))``.

    ``l`` is the delay (0 for the strongest tap); ``j`` runs from ``start``.
    """
    periods = np.asarray(periods, dtype=np.float64)
    if periods.shape != (memory,):
        raise ValueError(f"need {memory} periods, got {periods.size}")
    if np.any(periods <= 0):
        raise ValueError("periods must be positive")
    j = np.arange(start, start + num_blocks, dtype=np.float64)[:, None]
    delay = np.arange(memory, dtype=np.float64)[None, :]
    taps = np.exp(-decay * delay) * (dc + amplitude * np.cos(2 * np.pi * j / periods[None, :]))
    return TapSchedule(taps, source="synthetic")


def preset_taps(name: str, num_blocks: int, memory: int = 4) -> TapSchedule:
    try:
        params = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown channel preset {name!r}; choose from {sorted(PRESETS)}") from None
    if memory != len(params["periods"]):
        raise ValueError(f"preset {name!r} is defined for memory {len(params['periods'])}")
    return synthetic_taps(num_blocks, memory, **params)


def load_taps(path) -> TapSchedule:
    """Read a comma-separated tap file, one block per line, '#' comments allowed."""
    rows = []
    width = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            try:
                row = [float(tok) for tok in text.split(",")]
            except ValueError as exc:
                raise TapFileError(f"{path}:{lineno}: {exc}") from None
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise TapFileError(f"{path}:{lineno}: expected {width} columns, got {len(row)}")
            if not all(np.isfinite(row)):
                raise TapFileError(f"{path}:{lineno}: non-finite tap")
            rows.append(row)
    if not rows:
        raise TapFileError(f"{path}: no tap rows")
    return TapSchedule(np.array(rows), source="file")


def save_taps(schedule: TapSchedule, path) -> None:
    lines = [",".join(repr(float(v)) for v in row) for row in schedule.taps]
    Path(path).write_text("\n".join(lines) + "\n")


def bpsk_modulate(bits) -> np.ndarray:
    """Bit 0 -> +1, bit 1 -> -1."""
    return 1.0 - 2.0 * np.asarray(bits, dtype=np.float64)


def bpsk_hard_demod(symbols) -> np.ndarray:
    return (np.asarray(symbols) < 0).astype(np.int8)


def snr_to_variance(snr_db: float) -> float:
    return 10.0 ** (-snr_db / 10.0)


def convolve_block(symbols, taps) -> np.ndarray:
    """Noiseless channel output with an all-zero guard before the block."""
    s = np.asarray(symbols, dtype=np.float64)
    h = np.asarray(taps, dtype=np.float64)
    return np.convolve(s, h)[: s.size]


def apply_channel(symbols, taps, noise_variance: float, rng=None) -> np.ndarray:
    """``y_i = sum_l h_l s_{i-l} + w_i`` with ``s_i = 0`` before the block.

    ``rng`` is a ``numpy.random.Generator`` or a seed for one.
    """
    if noise_variance < 0:
        raise ValueError("noise variance must be non-negative")
    s = getattr(symbols, "symbols", symbols)
    y = convolve_block(s, taps)
    if noise_variance > 0:
        rng = np.random.default_rng(rng)
        y = y + np.sqrt(noise_variance) * rng.standard_normal(y.size)
    return y
