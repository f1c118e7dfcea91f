"""End-to-end simulation: offline pre-training, the block stream, metrics, sweeps."""

import csv
import dataclasses
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import gf
from .adapt import (AdaptationBuffer, BufferEntry, MetaState, Receiver, decode_symbols,
                    make_equalizer, meta_update)
from .channel import (TapSchedule, apply_channel, bpsk_modulate, load_taps, preset_taps,
                      snr_to_variance)
from .neural import LSTM, MLP, Model, train
from .trellis import GaussianProvider, ber, viterbi_detect

log = logging.getLogger(__name__)

EQUALIZERS = ("viterbinet", "lstm", "full-csi")
TRAINING_METHODS = ("joint", "online", "meta")

# stream tags for seed derivation
NOISE, MESSAGE, PILOT, INIT, META, PRETRAIN_NOISE, PRETRAIN_PILOT, PRETRAIN_META = range(8)


class ConfigError(ValueError):
    pass


class BudgetExceeded(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    blocks: int = 300
    frame: int = 25
    block_length: int = 136
    memory: int = 4
    meta_period: int = 5
    snr_db: list = field(default_factory=lambda: [12.0])
    seed: int = 0
    equalizer: str = "viterbinet"
    training: str = "meta"
    channel: str = "test"
    taps_file: Optional[str] = None
    train_channel: str = "train"
    train_taps_file: Optional[str] = None
    buffer_size: int = 15
    window: int = 1
    eta: float = 5e-3
    kappa: float = 1e-3
    inner_eta: float = 1e-4
    online_iters: int = 200
    meta_iters: int = 200
    online_optimizer: str = "adam"
    pretrain_blocks: int = 50
    pretrain_iters: int = 300
    pretrain_lr: float = 5e-3
    pretrain_meta_iters: int = 1000
    pretrain_kappa: float = 1e-3
    lstm_hidden: int = 64
    pilot_seed: int = 1234
    start: str = "guard"
    gate: str = "decoder"
    epsilon: float = 0.02
    record_wall_time: bool = False
    max_seconds: Optional[float] = None

    def __post_init__(self):
        if isinstance(self.snr_db, (int, float)):
            self.snr_db = [float(self.snr_db)]
        self.snr_db = [float(s) for s in self.snr_db]
        self.validate()

    def validate(self):
        if self.block_length != 8 * gf.RS_N:
            raise ConfigError(f"block_length must be {8 * gf.RS_N} (one RS codeword)")
        if not 1 <= self.frame <= self.blocks:
            raise ConfigError("need 1 <= frame <= blocks")
        if not 1 <= self.meta_period <= self.frame:
            raise ConfigError("need 1 <= meta_period <= frame")
        if self.equalizer not in EQUALIZERS:
            raise ConfigError(f"equalizer must be one of {EQUALIZERS}")
        if self.training not in TRAINING_METHODS:
            raise ConfigError(f"training must be one of {TRAINING_METHODS}")
        if self.gate not in ("decoder", "genie"):
            raise ConfigError("gate must be 'decoder' or 'genie'")
        if self.start not in ("guard", "uniform"):
            raise ConfigError("start must be 'guard' or 'uniform'")
        if not self.snr_db:
            raise ConfigError("need at least one SNR point")
        if self.pretrain_blocks < 1:
            raise ConfigError("pretrain_blocks must be at least 1")
        if self.eta <= 0 or self.inner_eta <= 0 or self.kappa < 0:
            raise ConfigError("need eta > 0, inner_eta > 0 and kappa >= 0")

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    @property
    def snr(self) -> float:
        return self.snr_db[0]


def _convert(name, raw: str):
    f = {f.name: f for f in dataclasses.fields(ExperimentConfig)}[name]
    default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
    text = raw.strip()
    try:
        if name == "snr_db":
            return [float(tok) for tok in text.split(",") if tok.strip()]
        if text.lower() in ("none", "") and default is None:
            return None
        if isinstance(default, bool):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float) or name == "max_seconds":
            return float(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {exc}") from None


def parse_config(text: str, overrides=()) -> ExperimentConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment. Unknown keys are errors."""
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    values = {}
    lines = [(n, l) for n, l in enumerate(text.splitlines(), start=1)]
    lines += [(f"override {k}", f"{k} = {v}") for k, v in overrides]
    for lineno, line in lines:
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _convert(key, raw)
    try:
        return ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path, overrides=()) -> ExperimentConfig:
    return parse_config(Path(path).read_text(), overrides)


def format_config(cfg: ExperimentConfig) -> str:
    out = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if f.name == "snr_db":
            v = ",".join(repr(s) for s in v)
        out.append(f"{f.name} = {v}")
    return "\n".join(out) + "\n"


def stream(seed: int, tag: int, index: int = 0) -> np.random.Generator:
    """Independent generator for one (seed, purpose, block) cell."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, tag, index]))


def build_model(cfg: ExperimentConfig) -> Model:
    if cfg.equalizer == "lstm":
        return LSTM(window=cfg.memory, hidden=cfg.lstm_hidden, n_classes=1 << cfg.memory)
    return MLP(n_classes=1 << cfg.memory)


def test_schedule(cfg: ExperimentConfig) -> TapSchedule:
    if cfg.taps_file:
        sched = load_taps(cfg.taps_file)
    else:
        sched = preset_taps(cfg.channel, cfg.blocks, cfg.memory)
    if sched.memory != cfg.memory or sched.num_blocks < cfg.blocks:
        raise ConfigError(f"tap schedule {sched.taps.shape} does not cover "
                          f"{cfg.blocks} blocks of memory {cfg.memory}")
    return sched


def train_schedule(cfg: ExperimentConfig, num_blocks: int) -> TapSchedule:
    if cfg.train_taps_file:
        sched = load_taps(cfg.train_taps_file)
        if sched.num_blocks < num_blocks:
            raise ConfigError("training tap file is too short")
        return sched
    return preset_taps(cfg.train_channel, num_blocks, cfg.memory)


def random_symbols(rng, n) -> np.ndarray:
    return bpsk_modulate(rng.integers(0, 2, n))


def pilot_blocks(cfg: ExperimentConfig, count: int, first: int = 0) -> list:
    """Offline pilot set: ``count`` blocks over the training channel, as buffer entries."""
    sched = train_schedule(cfg, first + count)
    var = snr_to_variance(cfg.snr)
    out = []
    for j in range(first, first + count):
        s = random_symbols(stream(cfg.pilot_seed, PRETRAIN_PILOT, j), cfg.block_length)
        y = apply_channel(s, sched[j], var, stream(cfg.seed, PRETRAIN_NOISE, j))
        out.append(BufferEntry(j, s, y))
    return out


def initial_params(cfg: ExperimentConfig, model: Model) -> np.ndarray:
    return model.init(stream(cfg.seed, INIT))


def _pooled(eq, entries):
    inputs = np.concatenate([eq.inputs(e.observations) for e in entries])
    labels = np.concatenate([eq.labels(e.symbols) for e in entries])
    return inputs, labels


def pretrain_joint(cfg: ExperimentConfig, model: Optional[Model] = None) -> np.ndarray:
    """Train one detector on the pooled offline pilot set."""
    model = model or build_model(cfg)
    eq = make_equalizer(model, cfg.memory, cfg.start)
    inputs, labels = _pooled(eq, pilot_blocks(cfg, cfg.pretrain_blocks))
    return train(model, initial_params(cfg, model), inputs, labels, cfg.pretrain_lr,
                 cfg.pretrain_iters)


def pretrain_meta(cfg: ExperimentConfig, model: Optional[Model] = None) -> np.ndarray:
    """Meta-train the initialization over consecutive pairs of the offline pilot set."""
    if cfg.pretrain_blocks < 2:
        raise ConfigError("meta pre-training needs at least two pilot blocks")
    model = model or build_model(cfg)
    eq = make_equalizer(model, cfg.memory, cfg.start)
    buffer = AdaptationBuffer(cfg.pretrain_blocks)
    for entry in pilot_blocks(cfg, cfg.pretrain_blocks):
        buffer.insert(entry)
    return meta_update(initial_params(cfg, model), buffer, eq, stream(cfg.seed, PRETRAIN_META),
                       cfg.inner_eta, cfg.pretrain_kappa, cfg.pretrain_meta_iters, window=1)


_PRETRAIN_CACHE = {}


def pretrained(cfg: ExperimentConfig, model: Model, kind: str) -> np.ndarray:
    keys = ("seed", "snr_db", "memory", "equalizer", "lstm_hidden", "train_channel",
            "train_taps_file", "pretrain_blocks", "pretrain_iters", "pretrain_lr",
            "pretrain_meta_iters", "pretrain_kappa", "inner_eta", "pilot_seed", "start")
    key = (kind, cfg.snr) + tuple(str(getattr(cfg, k)) for k in keys)
    if key not in _PRETRAIN_CACHE:
        fn = pretrain_meta if kind == "meta" else pretrain_joint
        _PRETRAIN_CACHE[key] = fn(cfg, model)
    return _PRETRAIN_CACHE[key].copy()


@dataclass
class MetricRecord:
    block_index: int
    is_pilot: bool
    coded_ber: float
    decode_success: bool
    cumulative_mean_ber: float
    wall_time: float = 0.0


class GroundTruth:
    """Transmitted symbols of every block.

    The adaptive receiver may only ask for pilot blocks; any other request
    trips the wire. Metrics read through :meth:`for_metrics`.
    """

    def __init__(self, pilot_indices):
        self._symbols = {}
        self._pilots = set(pilot_indices)
        self.tripped = False

    def store(self, j, symbols):
        self._symbols[j] = symbols

    def pilot_symbols(self, j):
        if j not in self._pilots:
            self.tripped = True
            raise PermissionError(f"block {j} is a data block")
        return self._symbols[j]

    def for_metrics(self, j):
        return self._symbols[j]


def is_pilot(cfg: ExperimentConfig, j: int) -> bool:
    return j % cfg.frame == 0


def transmit(cfg: ExperimentConfig, j: int) -> np.ndarray:
    """Symbols of block j: seeded pilots or a random RS-coded message."""
    if is_pilot(cfg, j):
        return random_symbols(stream(cfg.pilot_seed, PILOT, j), cfg.block_length)
    bits = stream(cfg.seed, MESSAGE, j).integers(0, 2, gf.MESSAGE_BITS)
    codeword = gf.rs_encode(gf.pack_bits(bits))
    return bpsk_modulate(gf.unpack_bits(codeword))


def make_receiver(cfg: ExperimentConfig, truth: Optional[GroundTruth] = None,
                  model: Optional[Model] = None, weights=None) -> Receiver:
    model = model or build_model(cfg)
    eq = make_equalizer(model, cfg.memory, cfg.start)
    if weights is None:
        weights = pretrained(cfg, model, "meta" if cfg.training == "meta" else "joint")
    state = MetaState(theta=weights, phi=weights, eta=cfg.eta, kappa=cfg.kappa,
                      inner_eta=cfg.inner_eta,
                      K=cfg.meta_period, W=cfg.window, online_iters=cfg.online_iters,
                      meta_iters=cfg.meta_iters, optimizer=cfg.online_optimizer)
    if cfg.gate == "genie" and truth is None:
        raise ConfigError("genie gate needs ground truth")

    def genie(j, detected, decode):
        return ber(truth.for_metrics(j), detected) <= cfg.epsilon

    return Receiver(eq, state, cfg.training, cfg.buffer_size, stream(cfg.seed, META),
                    genie if cfg.gate == "genie" else None)


def run_online(cfg: ExperimentConfig, weights=None, receiver_hook=None) -> list:
    """Stream ``cfg.blocks`` blocks through one receiver; one record per block.

    ``receiver_hook`` is called with the receiver before the first block
    (tests use it to observe the adaptive path).
    """
    sched = test_schedule(cfg)
    var = snr_to_variance(cfg.snr)
    truth = GroundTruth(j for j in range(cfg.blocks) if is_pilot(cfg, j))
    receiver = None
    if cfg.equalizer != "full-csi":
        receiver = make_receiver(cfg, truth, weights=weights)
        if receiver_hook is not None:
            receiver_hook(receiver)

    records = []
    errors_sum = 0.0
    data_blocks = 0
    t0 = time.perf_counter()
    for j in range(cfg.blocks):
        tic = time.perf_counter()
        s = transmit(cfg, j)
        truth.store(j, s)
        y = apply_channel(s, sched[j], var, stream(cfg.seed, NOISE, j))
        pilot = is_pilot(cfg, j)
        if receiver is None:
            detected = viterbi_detect(y, GaussianProvider(sched[j], var), start=cfg.start)
            success = True if pilot else decode_symbols(detected).success
        else:
            res = receiver.process_block(j, y, truth.pilot_symbols(j) if pilot else None)
            detected = res.detected
            success = True if pilot else res.decode.success
        block_ber = ber(truth.for_metrics(j), detected)
        if not pilot:
            errors_sum += block_ber
            data_blocks += 1
        wall = (time.perf_counter() - tic) if cfg.record_wall_time else 0.0
        records.append(MetricRecord(j, pilot, block_ber, success,
                                    errors_sum / data_blocks if data_blocks else 0.0, wall))
        if cfg.max_seconds is not None and time.perf_counter() - t0 > cfg.max_seconds:
            raise BudgetExceeded(f"stopped after block {j}: exceeded {cfg.max_seconds} s")
        log.debug("block %d pilot=%s ber=%.4f", j, pilot, block_ber)
    return records


def mean_data_ber(records) -> float:
    vals = [r.coded_ber for r in records if not r.is_pilot]
    return float(np.mean(vals)) if vals else 0.0


def snr_gain(snrs, ber_ref, ber_new) -> float:
    """Largest SNR saving of ``ber_new`` over ``ber_ref`` on a shared grid.

    For each grid point x the reference BER is located on the new curve by
    linear interpolation of log-BER between adjacent grid points; the gain
    there is x minus that SNR. Returns -inf when no point can be matched.
    """
    x = np.asarray(snrs, dtype=np.float64)
    order = np.argsort(x)
    x = x[order]
    ref = np.log(np.maximum(np.asarray(ber_ref, dtype=np.float64)[order], 1e-12))
    new = np.log(np.maximum(np.asarray(ber_new, dtype=np.float64)[order], 1e-12))
    best = -np.inf
    for target, at in zip(ref, x):
        for a in range(len(x) - 1):
            lo, hi = new[a], new[a + 1]
            if min(lo, hi) <= target <= max(lo, hi):
                frac = 0.0 if hi == lo else (target - lo) / (hi - lo)
                best = max(best, at - (x[a] + frac * (x[a + 1] - x[a])))
    return float(best)


def method_label(cfg: ExperimentConfig) -> str:
    return "none" if cfg.equalizer == "full-csi" else cfg.training


@dataclass
class SweepRow:
    snr_db: float
    equalizer: str
    training: str
    mean_coded_ber: float
    blocks: int
    seed: int


def ber_sweep(cfg: ExperimentConfig, methods=None) -> list:
    """Run every (SNR, method) cell; rows sorted by SNR then method.

    ``methods`` is a list of (equalizer, training) pairs, defaulting to the
    one in ``cfg``. All methods at one SNR share the channel, noise and
    message streams; only their own training randomness differs.
    """
    methods = methods or [(cfg.equalizer, cfg.training)]
    rows = []
    for snr in cfg.snr_db:
        for equalizer, training in methods:
            cell = cfg.replace(snr_db=[snr], equalizer=equalizer, training=training)
            records = run_online(cell)
            rows.append(SweepRow(snr, equalizer, method_label(cell), mean_data_ber(records),
                                 cfg.blocks, cfg.seed))
    rows.sort(key=lambda r: (r.snr_db, r.equalizer, r.training))
    return rows


METRICS_HEADER = "block,is_pilot,coded_ber,decode_success,cum_mean_ber,wall_ms"
SWEEP_HEADER = "snr_db,equalizer,training,mean_coded_ber,blocks,seed"


def _g(x: float) -> str:
    return f"{x:.6g}"


def format_metrics(records) -> str:
    lines = [METRICS_HEADER]
    for r in records:
        lines.append(f"{r.block_index},{int(r.is_pilot)},{_g(r.coded_ber)},"
                     f"{int(r.decode_success)},{_g(r.cumulative_mean_ber)},{_g(1e3 * r.wall_time)}")
    return "\n".join(lines) + "\n"


def format_sweep(rows) -> str:
    lines = [SWEEP_HEADER]
    for r in rows:
        lines.append(f"{_g(r.snr_db)},{r.equalizer},{r.training},{_g(r.mean_coded_ber)},"
                     f"{r.blocks},{r.seed}")
    return "\n".join(lines) + "\n"


def read_metrics(path) -> list:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [MetricRecord(int(r["block"]), r["is_pilot"] == "1", float(r["coded_ber"]),
                             r["decode_success"] == "1", float(r["cum_mean_ber"]),
                             float(r["wall_ms"]) / 1e3) for r in reader]


def read_sweep(path) -> list:
    with open(path, newline="") as fh:
        return [SweepRow(float(r["snr_db"]), r["equalizer"], r["training"],
                         float(r["mean_coded_ber"]), int(r["blocks"]), int(r["seed"]))
                for r in csv.DictReader(fh)]
