"""Config-driven benchmark runs.

A run is a TOML file naming an ordered subset of the stages::

    synth -> curate -> ablate -> train -> impute -> evaluate -> report

Each stage reads and writes files under ``<output_dir>/<stage>/`` and leaves
a ``manifest.json`` there with the SHA-256 of every input and output, the
seed, the stage parameters and library versions. Input files that no
earlier stage in the same run produces must already exist; that is checked
before anything executes.

Stage files::

    synth/train.npy, synth/test.npy, synth/peaks_test.json
    curate/accepted.npy, curate/screen.csv
    ablate/truth.npy, ablate/masks.csv, ablate/normalization.csv
    train/model.ckpt, train/loss.csv
    impute/<method>.npy
    evaluate/<method>.json, evaluate/<method>_per_waveform.csv
    report/table.csv, report/table.txt, report/summary.json

``truth.npy`` and ``masks.csv`` follow the public challenge layout (one
100 Hz waveform per row, one run-length mask row per waveform), so
``ablate.signals``/``ablate.masks`` may point at the challenge files directly.
"""
from __future__ import annotations

import hashlib
import logging
import math
import platform
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .errors import ConfigError, PulseBenchError
from .heartbeat_eval import DETECTORS, TASKS, EvalReport, evaluate_pipeline
from .imputers import IMPUTERS, ImputerOutput, fft_impute
from .missingness import MissingnessSpec, make_mask, sample_extracted
from .rng import derive_seed
from .signal_store import (AblationCase, MissingnessMask, Waveform, apply_mask, normalize, read_csv,
                           read_json, read_mask_csv, read_npy_matrix, waveforms_from_matrix, write_csv,
                           write_json, write_mask_csv, write_npy)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
STAGES = ("synth", "curate", "ablate", "train", "impute", "evaluate", "report")


# ---------------------------------------------------------------------------
# Config


@dataclass(frozen=True)
class SynthStage:
    n_train: int = 200
    n_test: int = 50
    duration_s: float = 10.0
    bpm_range: tuple[float, float] = (50.0, 100.0)
    hrv_jitter_frac: float = 0.0
    noise_sd: float = 0.0
    morphologies: tuple[str, ...] = ("gauss_spike", "raised_cosine")


@dataclass(frozen=True)
class CurateStage:
    kind: str = "ecg"
    input: str | None = None


@dataclass(frozen=True)
class AblateStage:
    signals: str | None = None
    masks: str | None = None  # challenge mask CSV
    pairing: str = "row"  # with ``masks``: "row" pairs row i with mask i, "sample" draws from the file
    kind: str = "extended"
    p: float = 0.3
    block_ms: float = 50.0
    normalize: str = "minmax"
    fill_nan: bool = False
    limit: int | None = None


@dataclass(frozen=True)
class TrainStage:
    signals: str | None = None
    steps: int = 2000
    batch_size: int = 2
    lr: float = 1e-3
    mask_kind: str = "extended"
    mask_p: float = 0.3
    normalize: str = "minmax"
    checkpoint_every: int = 500
    model: dict = field(default_factory=lambda: {"d": 16, "d_x": 16})


@dataclass(frozen=True)
class ImputeStage:
    methods: tuple[str, ...] = ("mean", "linear", "fft", "bdc")
    checkpoint: str | None = None
    fft_k: int = 32
    fft_iters: int = 100


@dataclass(frozen=True)
class EvaluateStage:
    task: str = "ecg_beats"
    n_boot: int = 1000
    level: float = 0.95
    tol_ms: float = 50.0


@dataclass(frozen=True)
class ReportStage:
    reports: tuple[str, ...] = ()


@dataclass(frozen=True)
class SweepBlock:
    key: str = ""
    values: tuple = ()


@dataclass(frozen=True)
class RunConfig:
    stages: tuple[str, ...]
    output_dir: Path
    seed: int = 0
    workers: int = 1
    synth: SynthStage = SynthStage()
    curate: CurateStage = CurateStage()
    ablate: AblateStage = AblateStage()
    train: TrainStage = TrainStage()
    impute: ImputeStage = ImputeStage()
    evaluate: EvaluateStage = EvaluateStage()
    report: ReportStage = ReportStage()
    sweep: SweepBlock | None = None
    base_dir: Path = Path(".")

    def stage_dir(self, stage: str) -> Path:
        return self.output_dir / stage

    def resolve(self, p: str | Path) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p


_BLOCKS = {"synth": SynthStage, "curate": CurateStage, "ablate": AblateStage, "train": TrainStage,
           "impute": ImputeStage, "evaluate": EvaluateStage, "report": ReportStage, "sweep": SweepBlock}


def _block(cls, raw: dict, where: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"[{where}] must be a table")
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"[{where}] unknown keys: {sorted(unknown)}")
    vals = {k: tuple(v) if isinstance(v, list) else v for k, v in raw.items()}
    try:
        return cls(**vals)
    except TypeError as exc:
        raise ConfigError(f"[{where}] {exc}") from None


def config_from_dict(raw: dict, base_dir: Path = Path(".")) -> RunConfig:
    raw = dict(raw)
    version = raw.pop("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version}; expected {SCHEMA_VERSION}")
    stages = tuple(raw.pop("stages", STAGES))
    out = raw.pop("output_dir", "runs/default")
    kw: dict[str, Any] = {"seed": int(raw.pop("seed", 0)), "workers": int(raw.pop("workers", 1))}
    for name, cls in _BLOCKS.items():
        if name in raw:
            kw[name] = _block(cls, raw.pop(name), name)
    if raw:
        raise ConfigError(f"unknown top-level keys: {sorted(raw)}")
    base_dir = Path(base_dir)
    out = Path(out)
    cfg = RunConfig(stages=stages, output_dir=out if out.is_absolute() else base_dir / out,
                    base_dir=base_dir, **kw)
    _check_stage_order(cfg.stages)
    if cfg.workers < 1:
        raise ConfigError("workers must be at least 1")
    return cfg


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(raw, base_dir=path.parent)


def _check_stage_order(stages) -> None:
    unknown = [s for s in stages if s not in STAGES]
    if unknown:
        raise ConfigError(f"unknown stages {unknown}; choose from {STAGES}")
    order = [STAGES.index(s) for s in stages]
    if order != sorted(order) or len(set(order)) != len(order):
        raise ConfigError(f"stages must be unique and follow the order {STAGES}")


def set_key(cfg: RunConfig, dotted: str, value) -> RunConfig:
    """Copy of ``cfg`` with ``block.field`` (or a top-level field) replaced."""
    parts = dotted.split(".")
    if len(parts) == 1:
        return replace(cfg, **{parts[0]: value})
    if len(parts) != 2 or parts[0] not in _BLOCKS:
        raise ConfigError(f"cannot set {dotted!r}")
    block = getattr(cfg, parts[0])
    if parts[1] not in {f.name for f in fields(block)}:
        raise ConfigError(f"[{parts[0]}] has no key {parts[1]!r}")
    return replace(cfg, **{parts[0]: replace(block, **{parts[1]: value})})


# ---------------------------------------------------------------------------
# Paths between stages


def _inputs(cfg: RunConfig, stage: str) -> dict[str, Path]:
    d = cfg.stage_dir
    if stage == "synth":
        return {}
    if stage == "curate":
        return {"signals": cfg.resolve(cfg.curate.input) if cfg.curate.input else d("synth") / "test.npy"}
    if stage == "ablate":
        if cfg.ablate.signals:
            sig = cfg.resolve(cfg.ablate.signals)
        elif "curate" in cfg.stages:
            sig = d("curate") / "accepted.npy"
        else:
            sig = d("synth") / "test.npy"
        out = {"signals": sig}
        if cfg.ablate.masks:
            out["masks"] = cfg.resolve(cfg.ablate.masks)
        return out
    if stage == "train":
        return {"signals": cfg.resolve(cfg.train.signals) if cfg.train.signals else d("synth") / "train.npy"}
    if stage == "impute":
        out = {"truth": d("ablate") / "truth.npy", "masks": d("ablate") / "masks.csv"}
        if "bdc" in cfg.impute.methods:
            out["checkpoint"] = cfg.resolve(cfg.impute.checkpoint) if cfg.impute.checkpoint else d("train") / "model.ckpt"
        return out
    if stage == "evaluate":
        out = {"truth": d("ablate") / "truth.npy", "masks": d("ablate") / "masks.csv"}
        out.update({f"imputed:{m}": d("impute") / f"{m}.npy" for m in cfg.impute.methods})
        return out
    if stage == "report":
        if cfg.report.reports:
            return {f"report{i}": cfg.resolve(p) for i, p in enumerate(cfg.report.reports)}
        return {f"report:{m}": d("evaluate") / f"{m}.json" for m in cfg.impute.methods}
    raise ConfigError(f"unknown stage {stage!r}")


def _outputs_of(cfg: RunConfig, stage: str) -> set[Path]:
    d = cfg.stage_dir(stage)
    names = {
        "synth": ["train.npy", "test.npy", "peaks_test.json"],
        "curate": ["accepted.npy", "screen.csv"],
        "ablate": ["truth.npy", "masks.csv", "normalization.csv"],
        "train": ["model.ckpt", "loss.csv"],
        "impute": [f"{m}.npy" for m in cfg.impute.methods],
        "evaluate": [f"{m}{suffix}" for m in cfg.impute.methods for suffix in (".json", "_per_waveform.csv")],
        "report": ["table.csv", "table.txt", "summary.json"],
    }[stage]
    return {d / n for n in names}


def validate(cfg: RunConfig) -> None:
    """Check stage order, method names and that every external input exists."""
    _check_stage_order(cfg.stages)
    for m in cfg.impute.methods:
        if m not in IMPUTERS and m != "bdc":
            raise ConfigError(f"unknown imputation method {m!r}")
    if cfg.evaluate.task not in TASKS:
        raise ConfigError(f"evaluate.task must be one of {TASKS}")
    if cfg.curate.kind not in ("ecg", "ppg"):
        raise ConfigError("curate.kind must be 'ecg' or 'ppg'")
    if cfg.ablate.pairing not in ("row", "sample"):
        raise ConfigError("ablate.pairing must be 'row' or 'sample'")
    produced: set[Path] = set()
    missing = []
    for stage in cfg.stages:
        for name, path in _inputs(cfg, stage).items():
            if path not in produced and not path.exists():
                missing.append(f"{stage}.{name}: {path}")
        produced |= _outputs_of(cfg, stage)
    if missing:
        raise ConfigError("missing input files:\n  " + "\n  ".join(missing))


# ---------------------------------------------------------------------------
# Manifests


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def library_versions() -> dict[str, str]:
    import scipy
    import torch

    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
            "torch": torch.__version__, "pulsebench": __version__}


def _rel(cfg: RunConfig, p: Path) -> str:
    try:
        return str(p.relative_to(cfg.output_dir))
    except ValueError:
        return str(p)


def _manifest(cfg: RunConfig, stage: str, inputs: dict[str, Path], outputs: list[Path],
              status: str, error: str | None = None) -> Path:
    block = getattr(cfg, stage)
    doc = {
        "stage": stage,
        "status": status,
        "seed": cfg.seed,
        "workers": cfg.workers,
        "schema_version": SCHEMA_VERSION,
        "params": asdict(block),
        "inputs": {k: {"path": _rel(cfg, p), "sha256": sha256_file(p) if p.exists() else None}
                   for k, p in inputs.items()},
        "outputs": {_rel(cfg, p): sha256_file(p) for p in outputs if p.exists()},
        "versions": library_versions(),
    }
    if error:
        doc["error"] = error
    path = cfg.stage_dir(stage) / "manifest.json"
    write_json(path, doc)
    return path


# ---------------------------------------------------------------------------
# Stages


def _read_waveforms(path: Path, prefix: str = "w", fill_nan: bool = False) -> list[Waveform]:
    return waveforms_from_matrix(read_npy_matrix(path), prefix=prefix, fill_nan=fill_nan)


def _stack(ws: list[np.ndarray]) -> np.ndarray:
    lengths = {len(w) for w in ws}
    if len(lengths) != 1:
        raise ConfigError(f"rows must share one length, got {sorted(lengths)}")
    return np.stack(ws)


def run_synth(cfg: RunConfig) -> list[Path]:
    from .synthgen import synth_corpus

    s = cfg.synth
    out = cfg.stage_dir("synth")
    kw = dict(duration_s=s.duration_s, bpm_range=tuple(s.bpm_range), hrv_jitter_frac=s.hrv_jitter_frac,
              morphologies=tuple(s.morphologies), noise_sd=s.noise_sd)
    train = synth_corpus(s.n_train, derive_seed(cfg.seed, "synth", "train"), **kw)
    test = synth_corpus(s.n_test, derive_seed(cfg.seed, "synth", "test"), **kw)
    paths = [out / "train.npy", out / "test.npy", out / "peaks_test.json"]
    if train:
        write_npy(paths[0], _stack([w.samples for w, _ in train]))
    else:
        write_npy(paths[0], np.zeros((0, int(round(s.duration_s * 100)))))
    write_npy(paths[1], _stack([w.samples for w, _ in test]))
    write_json(paths[2], {f"w{i}": p for i, (_, p) in enumerate(test)})
    return paths


def run_curate(cfg: RunConfig) -> list[Path]:
    from .curation import curate

    src = _inputs(cfg, "curate")["signals"]
    ws = _read_waveforms(src)
    rows = curate(ws, cfg.curate.kind, workers=cfg.workers)
    out = cfg.stage_dir("curate")
    keep = [w.samples for w, r in zip(ws, rows) if r["verdict"] == "accepted"]
    width = len(ws[0]) if ws else 0
    write_npy(out / "accepted.npy", np.stack(keep) if keep else np.zeros((0, width)))
    write_csv(out / "screen.csv", ["row", "id", "verdict", "reason"],
              [(i, r["id"], r["verdict"], r.get("reason", "")) for i, r in enumerate(rows)])
    log.info("curate: %d of %d accepted", len(keep), len(ws))
    return [out / "accepted.npy", out / "screen.csv"]


def _masks_for(cfg: RunConfig, ws: list[Waveform], library: list[MissingnessMask] | None) -> list[MissingnessMask]:
    a = cfg.ablate
    if library is not None:
        if a.pairing == "row":
            if len(library) < len(ws):
                raise ConfigError(f"{len(library)} mask rows for {len(ws)} signals")
            return list(library[: len(ws)])
        return [sample_extracted(library, len(w), derive_seed(cfg.seed, "ablate", i)) for i, w in enumerate(ws)]
    spec = MissingnessSpec(a.kind, p=a.p, block_ms=a.block_ms)
    return [make_mask(spec, len(w), seed=derive_seed(cfg.seed, "ablate", i)) for i, w in enumerate(ws)]


def run_ablate(cfg: RunConfig) -> list[Path]:
    a = cfg.ablate
    ins = _inputs(cfg, "ablate")
    ws = _read_waveforms(ins["signals"], fill_nan=a.fill_nan)
    if a.limit is not None:
        ws = ws[: a.limit]
    if not ws:
        raise ConfigError("no signals to ablate")
    library = read_mask_csv(ins["masks"]) if "masks" in ins else None
    masks = _masks_for(cfg, ws, library)
    truth, records = [], []
    for w in ws:
        nw, rec = normalize(w, a.normalize)
        truth.append(nw.samples)
        records.append(rec)
    for i, (t, m) in enumerate(zip(truth, masks)):
        if len(m) != t.size:
            raise ConfigError(f"mask {i} has length {len(m)}, signal has {t.size}")
    out = cfg.stage_dir("ablate")
    paths = [out / "truth.npy", out / "masks.csv", out / "normalization.csv"]
    write_npy(paths[0], _stack(truth))
    write_mask_csv(paths[1], masks)
    write_csv(paths[2], ["row", "method", "offset", "scale"],
              [(i, r.method, r.offset, r.scale) for i, r in enumerate(records)])
    return paths


def load_cases(truth_path: Path, masks_path: Path, skip_vacuous: bool = True) -> list[AblationCase]:
    """Rebuild ablation cases from a truth matrix and a row-paired mask CSV."""
    from .errors import VacuousCaseError

    ws = _read_waveforms(truth_path)
    masks = read_mask_csv(masks_path)
    if len(masks) != len(ws):
        raise ConfigError(f"{len(masks)} masks for {len(ws)} waveforms")
    cases = []
    for w, m in zip(ws, masks):
        try:
            cases.append(apply_mask(w, m))
        except VacuousCaseError:
            if not skip_vacuous:
                raise
            log.warning("skipping %s: mask leaves it fully observed", w.id)
    return cases


def run_train(cfg: RunConfig) -> list[Path]:
    from .bdc import AttentionStackConfig, OptimizerConfig, save_checkpoint, train

    t = cfg.train
    ws = _read_waveforms(_inputs(cfg, "train")["signals"], prefix="t")
    if not ws:
        raise ConfigError("no training signals")
    spec = MissingnessSpec(t.mask_kind, p=t.mask_p)
    cases = []
    for i, w in enumerate(ws):
        nw, _ = normalize(w, t.normalize)
        cases.append(apply_mask(nw, make_mask(spec, len(nw), seed=derive_seed(cfg.seed, "train-mask", i))))
    model_cfg = AttentionStackConfig.from_dict(dict(t.model))
    out = cfg.stage_dir("train")
    res = train(model_cfg, cases, OptimizerConfig(lr=t.lr, batch_size=t.batch_size), steps=t.steps,
                seed=derive_seed(cfg.seed, "train"), mask_spec=spec, checkpoint_dir=out / "checkpoints",
                checkpoint_every=t.checkpoint_every)
    save_checkpoint(out / "model.ckpt", model_cfg, res.params, meta={"steps": t.steps, "seed": cfg.seed})
    write_csv(out / "loss.csv", ["step", "loss"], [(i + 1, v) for i, v in enumerate(res.loss_trace)])
    return [out / "model.ckpt", out / "loss.csv", *res.checkpoints]


class _FFT:
    def __init__(self, k: int, iters: int):
        self.k, self.iters = k, iters
        self.__name__ = "fft"

    def __call__(self, case: AblationCase) -> ImputerOutput:
        return fft_impute(case, k_harmonics=self.k, n_iters=self.iters)


def make_imputer(cfg: RunConfig, method: str, checkpoint: Path | None = None):
    if method == "fft":
        return _FFT(cfg.impute.fft_k, cfg.impute.fft_iters)
    if method == "bdc":
        from .bdc import TransformerImputer, load_checkpoint

        mcfg, params, _ = load_checkpoint(checkpoint)
        return TransformerImputer(mcfg, params, name="bdc")
    try:
        return IMPUTERS[method]
    except KeyError:
        raise ConfigError(f"unknown imputation method {method!r}") from None


def run_impute(cfg: RunConfig) -> list[Path]:
    ins = _inputs(cfg, "impute")
    cases = load_cases(ins["truth"], ins["masks"], skip_vacuous=False)
    out = cfg.stage_dir("impute")
    paths = []
    for m in cfg.impute.methods:
        imp = make_imputer(cfg, m, ins.get("checkpoint"))
        rows = [np.asarray(imp(c).samples, dtype=np.float64) for c in cases]
        path = out / f"{m}.npy"
        write_npy(path, np.stack(rows))
        paths.append(path)
    return paths


class Precomputed:
    """Imputer that looks up stored outputs by waveform id."""

    def __init__(self, by_id: dict[str, np.ndarray], name: str):
        self.by_id = by_id
        self.__name__ = name

    def __call__(self, case: AblationCase) -> np.ndarray:
        return self.by_id[case.ground_truth.id]


def run_evaluate(cfg: RunConfig) -> list[Path]:
    e = cfg.evaluate
    ins = _inputs(cfg, "evaluate")
    cases = load_cases(ins["truth"], ins["masks"], skip_vacuous=False)
    out = cfg.stage_dir("evaluate")
    paths = []
    for m in cfg.impute.methods:
        mat = read_npy_matrix(ins[f"imputed:{m}"])
        if mat.shape[0] != len(cases):
            raise ConfigError(f"{m}: {mat.shape[0]} imputed rows for {len(cases)} cases")
        imp = Precomputed({c.ground_truth.id: row for c, row in zip(cases, mat)}, m)
        rep = evaluate_pipeline(cases, imp, e.task, method=m, n_boot=e.n_boot, level=e.level,
                                seed=derive_seed(cfg.seed, "evaluate"), tol_ms=e.tol_ms, workers=cfg.workers)
        path = out / f"{m}.json"
        write_json(path, rep.to_dict())
        cols = ["id", "mse_missing"] + (["tp", "fp", "fn"] if e.task != "mse_only" else [])
        write_csv(out / f"{m}_per_waveform.csv", cols, [[r[c] for c in cols] for r in rep.per_waveform])
        paths += [path, out / f"{m}_per_waveform.csv"]
    return paths


# ---------------------------------------------------------------------------
# Report


METRIC_COLUMNS = (("mse", "MSE", 4), ("f1", "F1", 2), ("precision", "Prec", 2), ("sensitivity", "Sens", 2))


def _strip0(text: str) -> str:
    if text.startswith("0."):
        return text[1:]
    if text.startswith("-0."):
        return "-" + text[2:]
    return text


def format_ci(point: float, half: float, decimals: int = 2) -> str:
    """Table cell ``.64 ± .003``: point at ``decimals`` places, half-width at one more."""
    if point is None or half is None or math.isnan(point):
        return "NaN"
    p = _strip0(f"{point:.{decimals}f}")
    if math.isnan(half):
        return p
    return f"{p} ± {_strip0(f'{half:.{decimals + 1}f}')}"


def report(reports: list[EvalReport]) -> tuple[list[str], list[list], str]:
    """Comparison table: header, numeric rows for CSV, and aligned text.

    Raises
    ------
    ConfigError
        If no reports are given or they mix tasks.
    """
    if not reports:
        raise ConfigError("report needs at least one evaluation report")
    tasks = {r.task for r in reports}
    if len(tasks) != 1:
        raise ConfigError(f"cannot tabulate reports from different tasks: {sorted(tasks)}")
    cols = [c for c in METRIC_COLUMNS if c[0] in reports[0].aggregate]
    header = ["method"] + [f"{label}{suffix}" for _, label, _ in cols for suffix in ("", "_lo", "_hi")]
    rows, text_rows = [], []
    for r in reports:
        row: list = [r.method]
        cells = [r.method]
        for key, _, dec in cols:
            pt, lo, hi = r.aggregate.get(key, (math.nan, math.nan, math.nan))
            row += [pt, lo, hi]
            cells.append(format_ci(pt, (hi - lo) / 2, dec))
        rows.append(row)
        text_rows.append(cells)
    titles = ["Method"] + [label for _, label, _ in cols]
    widths = [max(len(titles[j]), *(len(t[j]) for t in text_rows)) for j in range(len(titles))]
    line = lambda cells: "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
    text = "\n".join([f"task: {next(iter(tasks))}", line(titles), line(["-" * w for w in widths])]
                     + [line(t) for t in text_rows]) + "\n"
    return header, rows, text


def run_report(cfg: RunConfig) -> list[Path]:
    ins = _inputs(cfg, "report")
    reps = [EvalReport.from_dict(read_json(p)) for p in ins.values()]
    header, rows, text = report(reps)
    out = cfg.stage_dir("report")
    write_csv(out / "table.csv", header, rows)
    (out / "table.txt").write_text(text, encoding="utf-8")
    summary = {r.method: {"task": r.task, "counts": r.counts,
                          "aggregate": {k: list(v) for k, v in r.aggregate.items()}} for r in reps}
    write_json(out / "summary.json", summary)
    return [out / "table.csv", out / "table.txt", out / "summary.json"]


RUNNERS = {"synth": run_synth, "curate": run_curate, "ablate": run_ablate, "train": run_train,
           "impute": run_impute, "evaluate": run_evaluate, "report": run_report}


# ---------------------------------------------------------------------------
# Driver


class StageFailed(PulseBenchError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


def run_stage(cfg: RunConfig, stage: str) -> list[Path]:
    """Run one stage and write its manifest, also on failure."""
    out = cfg.stage_dir(stage)
    out.mkdir(parents=True, exist_ok=True)
    inputs = _inputs(cfg, stage)
    log.info("stage %s -> %s", stage, out)
    try:
        outputs = RUNNERS[stage](cfg)
    except Exception as exc:
        _manifest(cfg, stage, inputs, sorted(p for p in out.glob("*") if p.is_file()), "failed", f"{type(exc).__name__}: {exc}")
        raise StageFailed(stage, exc) from exc
    _manifest(cfg, stage, inputs, outputs, "ok")
    return outputs


def run(cfg: RunConfig) -> dict[str, list[Path]]:
    """Validate, then run every configured stage (once per sweep value)."""
    if cfg.sweep is not None and cfg.sweep.key:
        results = {}
        for v in cfg.sweep.values:
            sub = replace(set_key(cfg, cfg.sweep.key, v), sweep=None,
                          output_dir=cfg.output_dir / f"{cfg.sweep.key}={v}")
            results.update({f"{cfg.sweep.key}={v}/{k}": p for k, p in run(sub).items()})
        return results
    validate(cfg)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    return {stage: run_stage(cfg, stage) for stage in cfg.stages}


def run_file(path: str | Path, overrides: dict | None = None) -> dict[str, list[Path]]:
    cfg = load_config(path)
    for k, v in (overrides or {}).items():
        cfg = set_key(cfg, k, v)
    return run(cfg)
