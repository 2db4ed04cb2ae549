"""End-to-end orchestration: configuration, the stage cascade, and datasets.

A case runs through a fixed stage order — decode, resize, grayscale,
sharpen, denoise, equalize, complement, dehaze, complement2, segment,
extract — with every image intermediate captured.  Texture and geometry
are measured on the denoised intermediate using the segmentation mask:
the later enhancement stages exist to drive the contour, and the
equalize step by design compresses the foreground's own intensity
spread, which would flatten any texture statistic computed after it.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import classify, denoise, enhance, features, raster, segment
from .classify import LabeledDataset, ModelSpec
from .enhance import DehazeParams
from .errors import BiliscopeError, ConfigError, CorpusQualityError, StageError
from .evaluate import EvalReport, cross_validate
from .features import (FEATURE_NAMES, REDUCED_NAMES, FeatureVector, ScalerState,
                       apply_scaler, fit_scaler, reduce_features)
from .phantom import CorpusEntry, load_manifest
from .segment import ChanVeseParams, SeedSpec

__all__ = [
    "STAGES",
    "IMAGE_STAGES",
    "FEATURE_CSV_HEADER",
    "PipelineConfig",
    "parse_config",
    "load_config",
    "CaseResult",
    "TrainedBundle",
    "run_case",
    "DatasetBuild",
    "build_dataset",
    "dataset_from_csv",
    "read_feature_csv",
    "evaluate_all",
    "build_bundle",
]

STAGES = ("decode", "resize", "grayscale", "sharpen", "denoise", "equalize",
          "complement", "dehaze", "complement2", "segment", "extract")
IMAGE_STAGES = STAGES[1:9]

FEATURE_CSV_HEADER = "id,label," + ",".join(FEATURE_NAMES) + ",degenerate"

_FEATURE_MODES = ("reduced4", "full10")


@dataclass(frozen=True)
class PipelineConfig:
    image_size: int = 512
    sharpen_amount: float = 1.0
    denoiser_weights: str = ""        # empty -> Gaussian fallback
    denoiser_sigma: float = 1.8
    dehaze_patch_radius: int = 7
    dehaze_omega: float = 0.95
    dehaze_t_floor: float = 0.1
    dehaze_airlight_fraction: float = 0.001
    seed_row: int = -1                # -1 -> image center
    seed_col: int = -1
    seed_half_size: int = 2           # small box stays inside even thin ducts
    chanvese_mu: float = 0.2 * 255.0 ** 2
    # Equalized images spread the background over most of the intensity
    # range; a positive area penalty keeps its upper tail out of the mask.
    chanvese_nu: float = 7200.0
    chanvese_lambda1: float = 1.0
    chanvese_lambda2: float = 1.0
    chanvese_epsilon: float = 1.0
    chanvese_dt: float = 0.5
    chanvese_iterations: int = 625
    chanvese_snapshot_every: int = 0
    glcm_levels: int = 4
    axis_norm: float = 512.0
    feature_mode: str = "reduced4"
    models: tuple[str, ...] = classify.KINDS
    cv_folds: int = 10
    scale_per_fold: bool = False
    degenerate_limit: float = 0.2
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.image_size < 32:
            raise ConfigError("image_size must be >= 32")
        if self.feature_mode not in _FEATURE_MODES:
            raise ConfigError(f"feature_mode must be one of {_FEATURE_MODES}")
        bad = [m for m in self.models if m not in classify.KINDS]
        if bad:
            raise ConfigError(f"unknown model kinds {bad}")
        if self.cv_folds < 2:
            raise ConfigError("cv_folds must be >= 2")
        if not 0.0 <= self.degenerate_limit <= 1.0:
            raise ConfigError("degenerate_limit must be in [0, 1]")

    def dehaze_params(self) -> DehazeParams:
        return DehazeParams(patch_radius=self.dehaze_patch_radius,
                            omega=self.dehaze_omega,
                            t_floor=self.dehaze_t_floor,
                            airlight_fraction=self.dehaze_airlight_fraction)

    def chanvese_params(self, iterations: int | None = None,
                        snapshot_every: int | None = None) -> ChanVeseParams:
        return ChanVeseParams(
            mu=self.chanvese_mu, nu=self.chanvese_nu,
            lambda1=self.chanvese_lambda1, lambda2=self.chanvese_lambda2,
            epsilon=self.chanvese_epsilon, dt=self.chanvese_dt,
            iterations=self.chanvese_iterations if iterations is None else iterations,
            snapshot_every=(self.chanvese_snapshot_every
                            if snapshot_every is None else snapshot_every),
        )

    def seed_for(self, height: int, width: int) -> SeedSpec:
        if self.seed_row >= 0 and self.seed_col >= 0:
            seed = SeedSpec(center_row=self.seed_row, center_col=self.seed_col,
                            half_size=self.seed_half_size)
            seed.check_inside(height, width)
            return seed
        return segment.default_seed(width, height, self.seed_half_size)

    def feature_names(self) -> tuple[str, ...]:
        return REDUCED_NAMES if self.feature_mode == "reduced4" else FEATURE_NAMES

    def project(self, v: FeatureVector) -> np.ndarray:
        return reduce_features(v) if self.feature_mode == "reduced4" else v.as_array()

    def model_specs(self) -> list[ModelSpec]:
        return [ModelSpec(kind=k, rng_seed=self.rng_seed) for k in self.models]


# ---------------------------------------------------------------------------
# Configuration file: line-oriented `key = value`
# ---------------------------------------------------------------------------

_CONFIG_FIELDS = {f.name: f for f in dataclasses.fields(PipelineConfig)}


def _convert(name: str, text: str):
    kind = _CONFIG_FIELDS[name].type
    try:
        if kind == "bool":
            lowered = text.lower()
            if lowered in ("true", "yes", "1", "on"):
                return True
            if lowered in ("false", "no", "0", "off"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "str":
            return text
        if kind.startswith("tuple"):
            return tuple(part.strip() for part in text.split(",") if part.strip())
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {exc}") from exc
    raise ConfigError(f"unhandled config field type for {name}")


def parse_config(text: str) -> PipelineConfig:
    """Parse `key = value` lines; blank lines and #-comments are skipped."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, eq, value = line.partition("=")
        if not eq:
            raise ConfigError(f"line {lineno}: expected `key = value`")
        key = key.strip()
        if key not in _CONFIG_FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _convert(key, value.strip())
    return PipelineConfig(**values)


def load_config(path: str | Path) -> PipelineConfig:
    return parse_config(Path(path).read_text())


# ---------------------------------------------------------------------------
# Single-case execution
# ---------------------------------------------------------------------------

@dataclass
class TrainedBundle:
    """Models plus the scaler they were trained behind."""
    models: dict[str, classify.Model]
    scaler: ScalerState
    feature_mode: str


@dataclass
class CaseResult:
    case_id: str
    stage_trace: tuple[str, ...] = ()
    intermediates: dict[str, np.ndarray] = field(default_factory=dict)
    mask: np.ndarray | None = None
    snapshots: list[np.ndarray] = field(default_factory=list)
    features: FeatureVector | None = None
    scores: dict[str, float] = field(default_factory=dict)
    labels: dict[str, str] = field(default_factory=dict)
    degenerate: tuple[str, ...] = ()
    failed_stage: str | None = None
    error: str | None = None


_NET_CACHE: dict[str, denoise.ResidualNet] = {}


def _load_net(path: str) -> denoise.ResidualNet:
    key = str(Path(path).resolve())
    if key not in _NET_CACHE:
        try:
            blob = Path(path).read_bytes()
        except OSError as exc:
            raise ConfigError(f"cannot read denoiser weights: {exc}") from exc
        _NET_CACHE[key] = denoise.load_weights(blob)
    return _NET_CACHE[key]


def _decode(image) -> np.ndarray:
    if isinstance(image, (bytes, bytearray, memoryview)):
        return raster.load_netpbm(bytes(image))
    arr = np.asarray(image)
    if arr.dtype != np.uint8 or arr.ndim not in (2, 3):
        raise BiliscopeError("expected uint8 grayscale or RGB image")
    if arr.ndim == 3 and arr.shape[2] != 3:
        raise BiliscopeError("expected 3 channels for a color image")
    return arr


def run_case(cfg: PipelineConfig, image, case_id: str = "case",
             bundle: TrainedBundle | None = None,
             seed: SeedSpec | None = None,
             iterations: int | None = None,
             snapshot_every: int | None = None,
             progress: Callable[[int, int], None] | None = None) -> CaseResult:
    """Run one image through the full cascade; errors stop at their stage."""
    result = CaseResult(case_id=case_id)
    trace: list[str] = []

    def stage(name: str, fn):
        try:
            out = fn()
        except BiliscopeError as exc:
            raise StageError(name, str(exc)) from exc
        trace.append(name)
        return out

    try:
        img = stage("decode", lambda: _decode(image))
        img = stage("resize", lambda: raster.resize(img, cfg.image_size, cfg.image_size))
        result.intermediates["resize"] = img
        img = stage("grayscale",
                    lambda i=img: raster.to_grayscale(i) if i.ndim == 3 else i.copy())
        result.intermediates["grayscale"] = img
        img = stage("sharpen", lambda i=img: raster.sharpen(i, cfg.sharpen_amount))
        result.intermediates["sharpen"] = img

        def do_denoise(i=img):
            if cfg.denoiser_weights:
                return denoise.infer(_load_net(cfg.denoiser_weights), i)
            return denoise.gaussian_fallback(i, cfg.denoiser_sigma)

        img = stage("denoise", do_denoise)
        result.intermediates["denoise"] = img
        denoised = img

        img = stage("equalize", lambda i=img: enhance.histogram_equalize(i))
        result.intermediates["equalize"] = img
        img = stage("complement", lambda i=img: raster.complement(i))
        result.intermediates["complement"] = img
        img = stage("dehaze", lambda i=img: enhance.dehaze(i, cfg.dehaze_params()))
        result.intermediates["dehaze"] = img
        img = stage("complement2", lambda i=img: raster.complement(i))
        result.intermediates["complement2"] = img

        params = cfg.chanvese_params(iterations, snapshot_every)
        height, width = img.shape

        def do_segment(i=img):
            the_seed = seed if seed is not None else cfg.seed_for(height, width)
            the_seed.check_inside(height, width)
            return segment.run(i, the_seed, params, progress=progress)

        result.mask, result.snapshots = stage("segment", do_segment)

        def do_extract():
            blobs = features.connected_components(result.mask)
            duct = features.bile_duct_of(blobs)
            return features.extract(denoised, result.mask, duct,
                                    glcm_levels=cfg.glcm_levels,
                                    axis_norm=cfg.axis_norm)

        result.features = stage("extract", do_extract)
        if result.features.texture_degenerate:
            result.degenerate = ("texture",)
    except StageError as exc:
        result.failed_stage = exc.stage
        result.error = str(exc)
        result.degenerate = (exc.stage,)
        result.stage_trace = tuple(trace)
        return result

    if bundle is not None and result.features is not None:
        vec = (reduce_features(result.features)
               if bundle.feature_mode == "reduced4"
               else result.features.as_array())
        scaled = apply_scaler(bundle.scaler, vec[None, :])
        for kind, model in bundle.models.items():
            score = float(classify.predict_scores(model, scaled)[0])
            result.scores[kind] = score
            result.labels[kind] = (classify.LABEL_DILATED if score >= 0.5
                                   else classify.LABEL_NORMAL)

    result.stage_trace = tuple(trace)
    return result


# ---------------------------------------------------------------------------
# Corpus dataset assembly
# ---------------------------------------------------------------------------

@dataclass
class DatasetBuild:
    dataset: LabeledDataset      # scaled rows, training-eligible cases only
    raw_rows: np.ndarray         # unscaled rows matching dataset order
    scaler: ScalerState
    ids: list[str]
    csv_text: str
    n_total: int
    n_excluded: int


def _csv_row(case_id: str, label: str, fv: FeatureVector | None,
             excluded: bool) -> str:
    if fv is None:
        numbers = [0.0] * len(FEATURE_NAMES)
    else:
        numbers = list(fv.as_array())
    cells = [case_id, label] + [f"{x:.6f}" for x in numbers] + [str(int(excluded))]
    return ",".join(cells)


def build_dataset(cfg: PipelineConfig, manifest, csv_path: str | Path | None = None,
                  case_hook: Callable[[CaseResult], None] | None = None) -> DatasetBuild:
    """Run every corpus image, write the feature CSV, assemble scaled rows.

    Cases whose segmentation or extraction failed are written to the CSV
    zero-filled with the degenerate flag set and excluded from training;
    more than `degenerate_limit` of them aborts the build.
    """
    entries: list[CorpusEntry] = (manifest if isinstance(manifest, list)
                                  else load_manifest(manifest))
    lines = [FEATURE_CSV_HEADER]
    kept_vectors: list[FeatureVector] = []
    kept_labels: list[int] = []
    kept_ids: list[str] = []
    n_excluded = 0
    for entry in entries:
        img = raster.read_image(entry.image_path)
        case = run_case(cfg, img, case_id=entry.id)
        if case_hook is not None:
            case_hook(case)
        excluded = case.features is None
        lines.append(_csv_row(entry.id, entry.label, case.features, excluded))
        if excluded:
            n_excluded += 1
            continue
        kept_vectors.append(case.features)
        kept_labels.append(1 if entry.label == classify.LABEL_DILATED else 0)
        kept_ids.append(entry.id)

    n_total = len(entries)
    if n_total == 0:
        raise CorpusQualityError("empty manifest")
    if n_excluded > cfg.degenerate_limit * n_total:
        raise CorpusQualityError(
            f"{n_excluded}/{n_total} cases degenerate "
            f"(limit {cfg.degenerate_limit:.0%})")

    csv_text = "\n".join(lines) + "\n"
    if csv_path is not None:
        Path(csv_path).write_text(csv_text)

    raw = np.array([cfg.project(v) for v in kept_vectors], dtype=np.float64)
    scaler = fit_scaler(raw)
    dataset = LabeledDataset(rows=apply_scaler(scaler, raw),
                             labels=np.array(kept_labels),
                             feature_names=cfg.feature_names())
    return DatasetBuild(dataset=dataset, raw_rows=raw, scaler=scaler,
                        ids=kept_ids, csv_text=csv_text,
                        n_total=n_total, n_excluded=n_excluded)


def read_feature_csv(path: str | Path):
    """Read a feature CSV back: (ids, labels, raw rows, excluded flags)."""
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != FEATURE_CSV_HEADER:
        raise ConfigError("unrecognized feature CSV header")
    ids, labels, rows, excluded = [], [], [], []
    for ln in lines[1:]:
        cells = ln.split(",")
        if len(cells) != len(FEATURE_NAMES) + 3:
            raise ConfigError(f"bad feature CSV row: {ln!r}")
        ids.append(cells[0])
        labels.append(cells[1])
        rows.append([float(x) for x in cells[2:-1]])
        excluded.append(cells[-1].strip() == "1")
    return ids, labels, np.array(rows, dtype=np.float64), np.array(excluded)


def dataset_from_csv(cfg: PipelineConfig, path: str | Path) -> DatasetBuild:
    """Rebuild the training dataset from a stored feature CSV."""
    ids, labels, rows, excluded = read_feature_csv(path)
    keep = ~excluded
    kept_rows = rows[keep]
    if cfg.feature_mode == "reduced4":
        index = [FEATURE_NAMES.index(name) for name in REDUCED_NAMES]
        kept_rows = kept_rows[:, index]
    y = np.array([1 if lbl == classify.LABEL_DILATED else 0
                  for lbl, k in zip(labels, keep) if k])
    scaler = fit_scaler(kept_rows)
    dataset = LabeledDataset(rows=apply_scaler(scaler, kept_rows), labels=y,
                             feature_names=cfg.feature_names())
    return DatasetBuild(dataset=dataset, raw_rows=kept_rows, scaler=scaler,
                        ids=[i for i, k in zip(ids, keep) if k],
                        csv_text=Path(path).read_text(),
                        n_total=len(ids), n_excluded=int(excluded.sum()))


# ---------------------------------------------------------------------------
# Evaluation over all configured models
# ---------------------------------------------------------------------------

def _per_fold_scaling(train_rows: np.ndarray):
    state = fit_scaler(train_rows)
    return lambda rows: apply_scaler(state, rows)


def evaluate_all(cfg: PipelineConfig, build: DatasetBuild) -> list[EvalReport]:
    reports = []
    for spec in cfg.model_specs():
        if cfg.scale_per_fold:
            data = LabeledDataset(rows=build.raw_rows,
                                  labels=build.dataset.labels,
                                  feature_names=build.dataset.feature_names)
            report = cross_validate(spec, data, cfg.cv_folds, cfg.rng_seed,
                                    fold_preprocess=_per_fold_scaling)
        else:
            report = cross_validate(spec, build.dataset, cfg.cv_folds, cfg.rng_seed)
        reports.append(report)
    return reports


def build_bundle(cfg: PipelineConfig, build: DatasetBuild) -> TrainedBundle:
    """Train every configured model on the full dataset for interactive scoring."""
    models = {spec.kind: classify.train(spec, build.dataset)
              for spec in cfg.model_specs()}
    return TrainedBundle(models=models, scaler=build.scaler,
                         feature_mode=cfg.feature_mode)
