"""Command-line entry point: ``pulsebench <subcommand> [options]``.

Exit codes: 0 success, 1 user error (bad config, missing or malformed
input), 2 internal error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .errors import PulseBenchError
from .pipeline import (STAGES, RunConfig, StageFailed, config_from_dict, load_config, run, set_key, tomllib)

log = logging.getLogger("pulsebench")

EXIT_OK, EXIT_USER, EXIT_INTERNAL = 0, 1, 2


def _parse_value(text: str):
    """TOML literal if it parses as one, else the raw string."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="TOML run config")
    p.add_argument("--seed", type=int, help="global seed (overrides config)")
    p.add_argument("--workers", type=int, help="worker processes (overrides config)")
    p.add_argument("--out", type=Path, help="output directory (overrides config)")
    p.add_argument("--set", action="append", default=[], metavar="BLOCK.KEY=VALUE",
                   help="override one config value; VALUE is a TOML literal")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pulsebench", description="Pulsative-signal imputation benchmark")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run every stage listed in the config")
    _common(p)

    p = sub.add_parser("synth", help="generate synthetic train/test signals")
    _common(p)
    p.add_argument("--n-train", type=int)
    p.add_argument("--n-test", type=int)

    p = sub.add_parser("curate", help="screen signals for quality")
    _common(p)
    p.add_argument("--kind", choices=("ecg", "ppg"))
    p.add_argument("--input", help="signals .npy to screen")

    p = sub.add_parser("ablate", help="normalize signals and assign missingness masks")
    _common(p)
    p.add_argument("--signals", help="signals .npy (one waveform per row)")
    p.add_argument("--masks", help="mask CSV in the challenge layout")
    p.add_argument("--kind", choices=("extended", "transient"))
    p.add_argument("--p", type=float, help="missing fraction")

    p = sub.add_parser("train", help="train the attention imputer")
    _common(p)
    p.add_argument("--signals", help="training signals .npy")
    p.add_argument("--steps", type=int)

    p = sub.add_parser("impute", help="fill the ablated samples")
    _common(p)
    p.add_argument("--method", action="append", help="imputation method (repeatable)")
    p.add_argument("--checkpoint", help="model checkpoint for --method bdc")

    p = sub.add_parser("detect", help="detect heartbeat peaks in every row of a .npy file")
    p.add_argument("input", type=Path)
    p.add_argument("--task", choices=("ecg_beats", "ppg_beats"), default="ecg_beats")
    p.add_argument("--output", type=Path, required=True, help="JSON file {row id: [peak indices]}")
    p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("evaluate", help="score imputations with bootstrap CIs")
    _common(p)
    p.add_argument("--task", choices=("ecg_beats", "ppg_beats", "mse_only"))

    p = sub.add_parser("report", help="tabulate evaluation reports")
    _common(p)
    p.add_argument("reports", nargs="*", help="evaluation JSON files (default: the run's own)")

    p = sub.add_parser("inspect-attn", help="export one query's attention weights")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--input", type=Path, required=True, help=".npy of model inputs")
    p.add_argument("--row", type=int, default=0)
    p.add_argument("--query", type=int, required=True)
    p.add_argument("--layer", type=int, default=0)
    p.add_argument("--output", type=Path, required=True)
    p.add_argument("-v", "--verbose", action="store_true")
    return ap


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else config_from_dict({})
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.workers is not None:
        cfg = replace(cfg, workers=args.workers)
    if args.out is not None:
        cfg = replace(cfg, output_dir=args.out)
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise PulseBenchError(f"--set expects BLOCK.KEY=VALUE, got {item!r}")
        v = _parse_value(value)
        cfg = set_key(cfg, key.strip(), tuple(v) if isinstance(v, list) else v)
    return cfg


_STAGE_FLAGS = {
    "synth": {"n_train": "synth.n_train", "n_test": "synth.n_test"},
    "curate": {"kind": "curate.kind", "input": "curate.input"},
    "ablate": {"signals": "ablate.signals", "masks": "ablate.masks", "kind": "ablate.kind", "p": "ablate.p"},
    "train": {"signals": "train.signals", "steps": "train.steps"},
    "impute": {"checkpoint": "impute.checkpoint"},
    "evaluate": {"task": "evaluate.task"},
}


def _run_single(args) -> int:
    cfg = _config(args)
    for attr, key in _STAGE_FLAGS.get(args.command, {}).items():
        v = getattr(args, attr, None)
        if v is not None:
            cfg = set_key(cfg, key, v)
    if args.command == "impute" and args.method:
        cfg = set_key(cfg, "impute.methods", tuple(args.method))
    if args.command == "report" and args.reports:
        cfg = set_key(cfg, "report.reports", tuple(str(Path(r).resolve()) for r in args.reports))
    cfg = replace(cfg, stages=(args.command,), sweep=None)
    outputs = run(cfg)
    for p in outputs[args.command]:
        print(p)
    if args.command == "report":
        print((cfg.stage_dir("report") / "table.txt").read_text(encoding="utf-8"), end="")
    return EXIT_OK


def _run_all(args) -> int:
    cfg = _config(args)
    results = run(cfg)
    for stage, paths in results.items():
        log.info("%s: %d files", stage, len(paths))
    report_txt = cfg.stage_dir("report") / "table.txt"
    if "report" in cfg.stages and report_txt.exists():
        print(report_txt.read_text(encoding="utf-8"), end="")
    return EXIT_OK


def _detect(args) -> int:
    from .heartbeat_eval import DETECTORS
    from .signal_store import read_npy_matrix, waveforms_from_matrix, write_json

    ws = waveforms_from_matrix(read_npy_matrix(args.input))
    detector = DETECTORS[args.task]
    write_json(args.output, {w.id: detector(w) for w in ws})
    print(args.output)
    return EXIT_OK


def _inspect(args) -> int:
    import torch

    from .bdc import export_attention, load_checkpoint, model_forward
    from .errors import ConfigError
    from .signal_store import read_npy_matrix

    cfg, params, _ = load_checkpoint(args.checkpoint)
    mat = read_npy_matrix(args.input)
    if not 0 <= args.row < mat.shape[0]:
        raise ConfigError(f"row {args.row} out of range for {mat.shape[0]} rows")
    if not 0 <= args.layer < cfg.n_encoder_layers:
        raise ConfigError(f"layer {args.layer} out of range")
    if not 0 <= args.query < mat.shape[1]:
        raise ConfigError(f"query {args.query} out of range")
    dtype = next(iter(params.values())).dtype
    with torch.no_grad():
        _, attn = model_forward(cfg, params, torch.tensor(mat[args.row], dtype=dtype), return_attention=True)
    export_attention(attn[args.layer], args.query, args.output)
    print(args.output)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            return _run_all(args)
        if args.command == "detect":
            return _detect(args)
        if args.command == "inspect-attn":
            return _inspect(args)
        if args.command in STAGES:
            return _run_single(args)
        raise PulseBenchError(f"unknown command {args.command}")
    except StageFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        user = isinstance(exc.cause, (PulseBenchError, FileNotFoundError))
        return EXIT_USER if user else EXIT_INTERNAL
    except (PulseBenchError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
