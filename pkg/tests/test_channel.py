import numpy as np
import pytest

from metaeq import channel as ch


def test_first_block_taps_follow_decay_profile():
    sched = ch.synthetic_taps(3)
    expected = [1.0, 0.818731, 0.670320, 0.548812]
    np.testing.assert_allclose(sched[0], expected, atol=1e-6)


def test_static_preset_never_moves():
    sched = ch.preset_taps("static", 50)
    assert np.ptp(sched.taps, axis=0).max() == 0.0


def test_taps_periodic_in_block_index():
    sched = ch.synthetic_taps(60, periods=(10, 20, 30, 60))
    np.testing.assert_allclose(sched[10, 0], sched[0, 0])
    np.testing.assert_allclose(sched[30, 2], sched[0, 2])


def test_schedule_is_read_only():
    sched = ch.synthetic_taps(4)
    with pytest.raises(ValueError):
        sched.taps[0, 0] = 5.0


def test_presets_differ():
    a = ch.preset_taps("train", 100).taps
    b = ch.preset_taps("test", 100).taps
    assert np.abs(a - b).max() > 0.1


def test_unknown_preset():
    with pytest.raises(ValueError, match="unknown channel preset"):
        ch.preset_taps("nope", 3)


def test_tap_file_roundtrip(tmp_path):
    sched = ch.synthetic_taps(7)
    path = tmp_path / "t.csv"
    ch.save_taps(sched, path)
    back = ch.load_taps(path)
    np.testing.assert_array_equal(back.taps, sched.taps)


def test_tap_file_errors_carry_line_number(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("# header\n1,2,3,4\n1,2,3\n")
    with pytest.raises(ch.TapFileError, match=":3:"):
        ch.load_taps(path)
    path.write_text("1,2,x,4\n")
    with pytest.raises(ch.TapFileError, match=":1:"):
        ch.load_taps(path)
    path.write_text("# nothing\n")
    with pytest.raises(ch.TapFileError):
        ch.load_taps(path)


def test_bpsk_mapping():
    np.testing.assert_array_equal(ch.bpsk_modulate([0, 1, 1, 0]), [1, -1, -1, 1])
    np.testing.assert_array_equal(ch.bpsk_hard_demod([0.3, -2.0, 1.0]), [0, 1, 0])


def test_snr_to_variance():
    assert ch.snr_to_variance(0.0) == 1.0
    assert ch.snr_to_variance(12.0) == pytest.approx(0.0630957, rel=1e-6)


def test_convolution_with_zero_guard():
    # hand-computed: y0 = 1, y1 = 1 + 1, y2 = -1 + 1
    y = ch.convolve_block([1, 1, -1], [1, 1, 0, 0])
    np.testing.assert_allclose(y, [1, 2, 0])


def test_noise_statistics_and_seeding():
    s = np.ones(200_000)
    y = ch.apply_channel(s, [1.0, 0, 0, 0], 0.25, rng=5)
    noise = y - 1.0
    assert abs(noise.mean()) < 0.005
    assert noise.var() == pytest.approx(0.25, rel=0.02)
    np.testing.assert_array_equal(y, ch.apply_channel(s, [1.0, 0, 0, 0], 0.25, rng=5))


def test_noiseless_channel_is_deterministic():
    s = ch.bpsk_modulate([0, 1, 0, 1, 1])
    np.testing.assert_array_equal(ch.apply_channel(s, [1, .5, 0, 0], 0.0),
                                  ch.convolve_block(s, [1, .5, 0, 0]))
    with pytest.raises(ValueError):
        ch.apply_channel(s, [1, 0, 0, 0], -1.0)
