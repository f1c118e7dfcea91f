import numpy as np
import pytest

from metaeq import harness as hx
from metaeq.adapt import decode_symbols
from metaeq.channel import save_taps, synthetic_taps

FAST = dict(blocks=20, frame=10, pretrain_blocks=6, pretrain_iters=30, pretrain_meta_iters=20,
            online_iters=5, meta_iters=5)


def fast(**kw):
    return hx.ExperimentConfig(**{**FAST, **kw})


def test_config_parse_and_format_roundtrip():
    cfg = hx.parse_config("blocks = 40  # short\n\nsnr_db = 8, 10\ntraining = online\n",
                          overrides=[("seed", "3")])
    assert cfg.blocks == 40 and cfg.snr_db == [8.0, 10.0] and cfg.seed == 3
    assert hx.parse_config(hx.format_config(cfg)) == cfg


@pytest.mark.parametrize("text", ["bogus = 1", "blocks", "blocks = many", "equalizer = cnn",
                                  "block_length = 100", "frame = 400", "record_wall_time = maybe"])
def test_config_rejects_bad_input(text):
    with pytest.raises(hx.ConfigError):
        hx.parse_config(text)


def test_streams_are_independent_and_reproducible():
    a = hx.stream(1, hx.NOISE, 5).standard_normal(4)
    np.testing.assert_array_equal(a, hx.stream(1, hx.NOISE, 5).standard_normal(4))
    assert not np.array_equal(a, hx.stream(1, hx.NOISE, 6).standard_normal(4))
    assert not np.array_equal(a, hx.stream(1, hx.MESSAGE, 5).standard_normal(4))
    hx.stream(-1, hx.NOISE)  # negative seeds are folded, not rejected


def test_frame_layout_and_transmit():
    cfg = fast()
    assert [j for j in range(20) if hx.is_pilot(cfg, j)] == [0, 10]
    s = hx.transmit(cfg, 3)
    assert s.shape == (136,)
    assert decode_symbols(s).success


def _check_metrics(records, cfg):
    assert [r.block_index for r in records] == list(range(cfg.blocks))
    data = [r.coded_ber for r in records if not r.is_pilot]
    assert records[-1].cumulative_mean_ber == pytest.approx(np.mean(data), abs=1e-12)
    assert all(r.decode_success for r in records if r.is_pilot)


@pytest.mark.parametrize("equalizer,training", [("viterbinet", "meta"), ("viterbinet", "online"),
                                                ("viterbinet", "joint"), ("full-csi", "joint")])
def test_run_online_metrics_are_consistent(equalizer, training):
    cfg = fast(equalizer=equalizer, training=training)
    _check_metrics(hx.run_online(cfg), cfg)


def test_lstm_run():
    cfg = fast(equalizer="lstm", training="online", lstm_hidden=8, blocks=12)
    _check_metrics(hx.run_online(cfg), cfg)


def test_receiver_never_reads_data_block_truth():
    seen = {}
    orig = hx.GroundTruth.pilot_symbols

    def spy(self, j):
        seen["truth"] = self
        return orig(self, j)

    hx.GroundTruth.pilot_symbols = spy
    try:
        hx.run_online(fast(training="meta"))
    finally:
        hx.GroundTruth.pilot_symbols = orig
    assert seen["truth"].tripped is False


def test_tripwire_fires_on_data_request():
    truth = hx.GroundTruth([0])
    truth.store(0, np.ones(3))
    truth.store(1, np.ones(3))
    truth.pilot_symbols(0)
    with pytest.raises(PermissionError):
        truth.pilot_symbols(1)
    assert truth.tripped


def test_runs_are_deterministic():
    cfg = fast(training="meta", seed=7)
    a = hx.format_metrics(hx.run_online(cfg))
    hx._PRETRAIN_CACHE.clear()
    assert hx.format_metrics(hx.run_online(cfg)) == a


def test_genie_gate_runs():
    cfg = fast(training="online", gate="genie", epsilon=0.0)
    _check_metrics(hx.run_online(cfg), cfg)


def test_budget_guard():
    with pytest.raises(hx.BudgetExceeded):
        hx.run_online(fast(equalizer="full-csi", max_seconds=0.0))


def test_tap_file_source(tmp_path):
    path = tmp_path / "taps.csv"
    save_taps(synthetic_taps(20, amplitude=0.0), path)
    cfg = fast(equalizer="full-csi", taps_file=str(path))
    _check_metrics(hx.run_online(cfg), cfg)
    save_taps(synthetic_taps(5), path)
    with pytest.raises(hx.ConfigError):
        hx.run_online(cfg)


def test_metrics_csv_format(tmp_path):
    recs = [hx.MetricRecord(0, True, 0.0, True, 0.0), hx.MetricRecord(1, False, 1 / 3, False, 1 / 3)]
    text = hx.format_metrics(recs)
    assert text.splitlines() == ["block,is_pilot,coded_ber,decode_success,cum_mean_ber,wall_ms",
                                 "0,1,0,1,0,0", "1,0,0.333333,0,0.333333,0"]
    path = tmp_path / "m.csv"
    path.write_text(text)
    back = hx.read_metrics(path)
    assert back[1].coded_ber == pytest.approx(1 / 3, rel=1e-5)


def test_sweep_rows_sorted_and_csv(tmp_path):
    cfg = fast(snr_db=[12.0, 8.0], blocks=12)
    rows = hx.ber_sweep(cfg, [("full-csi", "joint"), ("viterbinet", "joint")])
    assert [(r.snr_db, r.equalizer) for r in rows] == [
        (8.0, "full-csi"), (8.0, "viterbinet"), (12.0, "full-csi"), (12.0, "viterbinet")]
    assert rows[0].training == "none"
    path = tmp_path / "s.csv"
    path.write_text(hx.format_sweep(rows))
    assert path.read_text().splitlines()[0] == "snr_db,equalizer,training,mean_coded_ber,blocks,seed"
    assert len(hx.read_sweep(path)) == 4


def test_single_point_sweep_matches_run():
    cfg = fast(equalizer="full-csi")
    (row,) = hx.ber_sweep(cfg)
    assert row.mean_coded_ber == hx.mean_data_ber(hx.run_online(cfg))


def test_snr_gain():
    snr = [8, 10, 12, 14]
    ref = [1e-1, 1e-2, 1e-3, 1e-4]
    # the new curve is the reference shifted 1 dB left
    new = [10 ** -1.5, 10 ** -2.5, 10 ** -3.5, 10 ** -4.5]
    assert hx.snr_gain(snr, ref, new) == pytest.approx(1.0)
    assert hx.snr_gain(snr, new, ref) == pytest.approx(-1.0)
    assert hx.snr_gain(snr, ref, ref) == pytest.approx(0.0)
