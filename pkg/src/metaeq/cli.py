"""Command line front end.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
Output files are written atomically, so a failed command leaves none behind.
"""

import argparse
import logging
import os
import sys
import tempfile
from pathlib import Path

from .channel import PRESETS, TapFileError, preset_taps, save_taps
from .harness import (EQUALIZERS, TRAINING_METHODS, BudgetExceeded, ConfigError,
                      ExperimentConfig, ber_sweep, build_model, format_metrics, format_sweep,
                      load_config, parse_config, pretrain_joint, pretrain_meta, run_online)
from .neural import ArchitectureMismatch, load_params, save_params
from .trellis import DetectionError

log = logging.getLogger("metaeq")

USAGE, RUNTIME = 1, 2


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE, f"{self.prog}: error: {message}\n")


def atomic_write(path, data):
    """Write via a temp file in the target directory, then rename into place."""
    path = Path(path)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _atomic_via(path, writer):
    """Same as atomic_write for helpers that insist on writing a path themselves."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _override(text):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    key, value = text.split("=", 1)
    return key.strip(), value.strip()


def _config(args) -> ExperimentConfig:
    overrides = list(args.set or [])
    if getattr(args, "seed", None) is not None:
        overrides.append(("seed", str(args.seed)))
    if getattr(args, "snr", None) is not None:
        overrides.append(("snr_db", args.snr))
    if getattr(args, "max_seconds", None) is not None:
        overrides.append(("max_seconds", str(args.max_seconds)))
    if args.config:
        return load_config(args.config, overrides)
    return parse_config("", overrides)


def _check_out(path):
    parent = Path(path).resolve().parent
    if not parent.is_dir():
        raise UsageError(f"output directory {parent} does not exist")


def cmd_taps(args):
    _check_out(args.out)
    name = "train" if args.synthetic else args.preset
    sched = preset_taps(name, args.blocks, args.memory)
    _atomic_via(args.out, lambda p: save_taps(sched, p))
    if args.plot:
        from .plotting import plot_taps
        _plot_png(args.plot, lambda p: plot_taps(sched, p))
    log.info("wrote %d blocks of %d taps to %s", sched.num_blocks, sched.memory, args.out)


def cmd_pretrain(args):
    cfg = _config(args)
    _check_out(args.out)
    model = build_model(cfg)
    params = pretrain_meta(cfg, model) if args.kind == "meta" else pretrain_joint(cfg, model)
    _atomic_via(args.out, lambda p: save_params(model, params, p))
    log.info("wrote %d %s parameters to %s", params.size, model.arch, args.out)


def _plot_png(path, draw):
    # matplotlib picks the format from the suffix, so render under a .png temp name
    _atomic_via(path, lambda p: draw(p + ".png") or os.replace(p + ".png", p))


def cmd_run(args):
    cfg = _config(args)
    _check_out(args.out)
    weights = None
    if args.weights:
        weights = load_params(build_model(cfg), args.weights)
    records = run_online(cfg, weights=weights)
    atomic_write(args.out, format_metrics(records))
    if args.plot:
        from .plotting import plot_ber_vs_block
        label = f"{cfg.equalizer}/{cfg.training}"
        _plot_png(args.plot, lambda p: plot_ber_vs_block({label: records}, p,
                                                         title=f"{cfg.snr:g} dB"))
    log.info("wrote %d rows to %s", len(records), args.out)


def _methods(text):
    out = []
    for tok in text.split(","):
        eq, _, tr = tok.strip().partition(":")
        tr = tr or "joint"
        if eq not in EQUALIZERS or tr not in TRAINING_METHODS:
            raise argparse.ArgumentTypeError(f"bad method {tok!r}; use equalizer:training")
        out.append((eq, tr))
    return out


def cmd_sweep(args):
    cfg = _config(args)
    _check_out(args.out)
    rows = ber_sweep(cfg, args.methods)
    atomic_write(args.out, format_sweep(rows))
    if args.plot:
        from .plotting import plot_ber_vs_snr
        _plot_png(args.plot, lambda p: plot_ber_vs_snr(rows, p))
    log.info("wrote %d rows to %s", len(rows), args.out)


def build_parser() -> argparse.ArgumentParser:
    p = Parser(prog="metaeq", description="Meta-learned ViterbiNet equalizer simulations.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=Parser)

    t = sub.add_parser("taps", help="write a synthetic tap schedule")
    src = t.add_mutually_exclusive_group(required=True)
    src.add_argument("--synthetic", action="store_true", help="default synthetic formula")
    src.add_argument("--preset", choices=sorted(PRESETS))
    t.add_argument("--blocks", type=int, default=300)
    t.add_argument("--memory", type=int, default=4)
    t.add_argument("--out", required=True)
    t.add_argument("--plot", help="also render the tap trajectories to this PNG")
    t.set_defaults(func=cmd_taps)

    def common(sp):
        sp.add_argument("--config", help="key = value config file")
        sp.add_argument("--set", type=_override, action="append", metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--snr", help="SNR in dB, comma-separated for sweeps")
        sp.add_argument("--out", required=True)

    pt = sub.add_parser("pretrain", help="offline pre-training, writes a weight file")
    common(pt)
    pt.add_argument("--kind", choices=("joint", "meta"), default="joint")
    pt.set_defaults(func=cmd_pretrain)

    r = sub.add_parser("run", help="stream blocks through one receiver, write metrics CSV")
    common(r)
    r.add_argument("--weights", help="start from this weight file instead of pre-training")
    r.add_argument("--max-seconds", type=float)
    r.add_argument("--plot", help="also render BER vs block to this PNG")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="mean coded BER over an SNR grid and several methods")
    common(s)
    s.add_argument("--methods", type=_methods, help="e.g. viterbinet:meta,viterbinet:online")
    s.add_argument("--max-seconds", type=float)
    s.add_argument("--plot", help="also render BER vs SNR to this PNG")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"metaeq: error: {exc}", file=sys.stderr)
        return USAGE
    except (BudgetExceeded, DetectionError, ArchitectureMismatch, TapFileError,
            FloatingPointError, OSError, ValueError) as exc:
        print(f"metaeq: failed: {exc}", file=sys.stderr)
        return RUNTIME
    return 0


if __name__ == "__main__":
    sys.exit(main())
