import subprocess
import sys

import numpy as np
import pytest

from metaeq import cli
from metaeq.harness import METRICS_HEADER, SWEEP_HEADER

FAST = ["--set", "blocks=12", "--set", "frame=6", "--set", "pretrain_blocks=4",
        "--set", "pretrain_iters=20", "--set", "pretrain_meta_iters=10",
        "--set", "online_iters=3", "--set", "meta_iters=3"]


def test_taps_command(tmp_path):
    out = tmp_path / "taps.csv"
    assert cli.main(["taps", "--synthetic", "--blocks", "300", "--out", str(out)]) == 0
    rows = out.read_text().splitlines()
    assert len(rows) == 300 and all(len(r.split(",")) == 4 for r in rows)


def test_taps_plot(tmp_path):
    png = tmp_path / "taps.png"
    assert cli.main(["taps", "--preset", "test", "--blocks", "50", "--out",
                     str(tmp_path / "t.csv"), "--plot", str(png)]) == 0
    assert png.read_bytes()[:4] == b"\x89PNG"


def test_run_command_writes_one_row_per_block(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("blocks = 12\nframe = 6\ntraining = meta\n")
    out = tmp_path / "metrics.csv"
    png = tmp_path / "ber.png"
    rc = cli.main(["run", "--config", str(cfg), "--out", str(out), "--plot", str(png)] + FAST)
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0] == METRICS_HEADER and len(lines) == 13
    assert png.exists()


def test_pretrain_then_run_with_weights(tmp_path):
    w = tmp_path / "w.bin"
    assert cli.main(["pretrain", "--kind", "meta", "--out", str(w)] + FAST) == 0
    out = tmp_path / "m.csv"
    assert cli.main(["run", "--weights", str(w), "--out", str(out)] + FAST) == 0
    assert len(out.read_text().splitlines()) == 13


def test_corrupt_weights_is_runtime_failure(tmp_path):
    w = tmp_path / "w.bin"
    w.write_bytes(b"arch=mlp dims=1,2 count=3\n")
    out = tmp_path / "m.csv"
    assert cli.main(["run", "--weights", str(w), "--out", str(out)] + FAST) == 2
    assert not out.exists()


def test_sweep_command(tmp_path):
    out = tmp_path / "s.csv"
    rc = cli.main(["sweep", "--snr", "8,12", "--methods", "full-csi,viterbinet:joint",
                   "--out", str(out), "--plot", str(tmp_path / "s.png")] + FAST)
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0] == SWEEP_HEADER and len(lines) == 5


@pytest.mark.parametrize("argv", [
    ["run", "--bogus", "--out", "X"],
    ["run", "--set", "nope=1", "--out", "X"],
    ["run", "--set", "blocks", "--out", "X"],
    ["sweep", "--methods", "cnn:meta", "--out", "X"],
    ["taps", "--out", "X"],
])
def test_usage_errors_exit_1_without_output(tmp_path, argv, capsys):
    out = tmp_path / "out.csv"
    argv = [str(out) if a == "X" else a for a in argv]
    with pytest.raises(SystemExit) as exc:
        sys.exit(cli.main(argv))
    assert exc.value.code == 1
    assert not out.exists()
    assert list(tmp_path.iterdir()) == []


def test_budget_exceeded_exit_2_without_output(tmp_path):
    out = tmp_path / "m.csv"
    assert cli.main(["run", "--set", "equalizer=full-csi", "--max-seconds", "0",
                     "--out", str(out)] + FAST) == 2
    assert list(tmp_path.iterdir()) == []


def test_missing_output_dir_is_usage_error(tmp_path):
    assert cli.main(["taps", "--synthetic", "--out", str(tmp_path / "no" / "t.csv")]) == 1


def test_run_is_byte_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        subprocess.run([sys.executable, "-m", "metaeq", "run", "--seed", "5", "--out", str(path)]
                       + FAST, check=True)
    assert a.read_bytes() == b.read_bytes()
    assert np.isfinite(float(a.read_text().splitlines()[-1].split(",")[4]))
