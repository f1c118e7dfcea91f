"""Viterbi equalization with learned likelihoods, adapted online from decoded data."""

from .adapt import (AdaptationBuffer, BufferEntry, MetaState, Receiver, make_equalizer,
                    meta_update, online_update, plain_online_update, select_meta_pair)
from .channel import (TapSchedule, apply_channel, bpsk_modulate, load_taps, preset_taps,
                      save_taps, synthetic_taps)
from .gf import rs_decode, rs_encode
from .harness import ExperimentConfig, ber_sweep, run_online
from .neural import LSTM, MLP
from .trellis import GaussianProvider, brute_force_ml, viterbi_detect

__version__ = "0.1.0"

__all__ = [
    "AdaptationBuffer", "BufferEntry", "MetaState", "Receiver", "make_equalizer", "meta_update",
    "online_update", "plain_online_update", "select_meta_pair", "TapSchedule", "apply_channel",
    "bpsk_modulate", "load_taps", "preset_taps", "save_taps", "synthetic_taps", "rs_decode",
    "rs_encode", "ExperimentConfig", "ber_sweep", "run_online", "LSTM", "MLP",
    "GaussianProvider", "brute_force_ml", "viterbi_detect",
]
