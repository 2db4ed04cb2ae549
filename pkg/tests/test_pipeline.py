"""Pipeline orchestration: config, per-case cascade, dataset builds, bundles."""

import numpy as np
import pytest

from biliscope import classify, raster
from biliscope.errors import ConfigError, CorpusQualityError, SeedError
from biliscope.features import FEATURE_NAMES, REDUCED_NAMES
from biliscope.phantom import PhantomSpec, generate, generate_corpus, load_manifest, save_corpus
from biliscope.pipeline import (
    FEATURE_CSV_HEADER,
    PipelineConfig,
    build_bundle,
    build_dataset,
    evaluate_all,
    parse_config,
    run_case,
)
from biliscope.segment import SeedSpec

STAGES = ("decode", "resize", "grayscale", "sharpen", "denoise", "equalize",
          "complement", "dehaze", "complement2", "segment", "extract")


def _cfg(**kw):
    kw.setdefault("image_size", 256)
    kw.setdefault("axis_norm", 256.0)
    return PipelineConfig(**kw)


def _phantom(width=24, seed=3):
    return generate(PhantomSpec(size=256, duct_width_px=width, noise_sigma=10.0,
                                haze_strength=0.3, rng_seed=seed))


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def test_config_validation():
    with pytest.raises(ConfigError):
        PipelineConfig(image_size=16)
    with pytest.raises(ConfigError):
        PipelineConfig(feature_mode="full")
    with pytest.raises(ConfigError):
        PipelineConfig(models=("knn", "boost"))
    with pytest.raises(ConfigError):
        PipelineConfig(cv_folds=1)
    with pytest.raises(ConfigError):
        PipelineConfig(degenerate_limit=1.5)


def test_parse_config_lines_and_comments():
    cfg = parse_config(
        """
        # geometry
        image_size = 256
        axis_norm = 256.0
        feature_mode = full10
        models = knn, dt
        scale_per_fold = true
        """
    )
    assert cfg.image_size == 256
    assert cfg.feature_mode == "full10"
    assert cfg.models == ("knn", "dt")
    assert cfg.scale_per_fold is True


def test_parse_config_rejects_unknown_and_malformed():
    with pytest.raises(ConfigError):
        parse_config("mystery = 3")
    with pytest.raises(ConfigError):
        parse_config("image_size 256")
    with pytest.raises(ConfigError):
        parse_config("image_size = soon")


def test_feature_mode_drives_projection_and_names():
    full = _cfg(feature_mode="full10")
    red = _cfg(feature_mode="reduced4")
    assert full.feature_names() == FEATURE_NAMES
    assert red.feature_names() == REDUCED_NAMES
    sample = _phantom()
    case = run_case(full, sample.image)
    assert full.project(case.features).shape == (10,)
    assert red.project(case.features).shape == (4,)
    assert red.project(case.features)[0] == case.features.mja


def test_seed_for_default_center_and_override():
    cfg = _cfg()
    seed = cfg.seed_for(256, 256)
    assert (seed.center_row, seed.center_col) == (128, 128)
    assert seed.half_size == cfg.seed_half_size
    over = _cfg(seed_row=40, seed_col=50).seed_for(256, 256)
    assert (over.center_row, over.center_col) == (40, 50)
    with pytest.raises(SeedError):
        _cfg(seed_row=255, seed_col=255).seed_for(256, 256)


# ---------------------------------------------------------------------------
# Single-case cascade
# ---------------------------------------------------------------------------

def test_run_case_full_trace_and_outputs():
    cfg = _cfg()
    case = run_case(cfg, _phantom().image, case_id="c1")
    assert case.case_id == "c1"
    assert case.stage_trace == STAGES
    assert set(case.intermediates) == set(STAGES[1:-2])
    assert case.mask is not None and set(np.unique(case.mask)) <= {0, 1}
    assert case.features is not None and not case.degenerate
    assert case.failed_stage is None and case.error is None
    assert case.scores == {} and case.labels == {}      # no bundle attached


def test_run_case_accepts_pgm_bytes():
    cfg = _cfg()
    sample = _phantom(seed=4)
    from_bytes = run_case(cfg, raster.save_pgm(sample.image))
    from_array = run_case(cfg, sample.image)
    assert np.array_equal(from_bytes.mask, from_array.mask)


def test_run_case_resizes_foreign_sizes():
    cfg = _cfg()
    small = generate(PhantomSpec(size=128, duct_width_px=12, rng_seed=1))
    case = run_case(cfg, small.image)
    assert case.intermediates["resize"].shape == (256, 256)
    assert case.mask.shape == (256, 256)


def test_run_case_snapshot_and_progress_overrides():
    cfg = _cfg()
    ticks = []
    case = run_case(cfg, _phantom().image, iterations=50, snapshot_every=25,
                    progress=lambda it, total: ticks.append((it, total)))
    assert len(case.snapshots) == 2
    assert ticks[0] == (1, 50) and ticks[-1] == (50, 50)
    assert np.array_equal(case.snapshots[-1], case.mask)


def test_run_case_seed_override_changes_start():
    cfg = _cfg()
    sample = _phantom(seed=6)
    default = run_case(cfg, sample.image)
    moved = run_case(cfg, sample.image, seed=SeedSpec(150, 128, 2))
    assert default.features is not None and moved.features is not None


def test_run_case_failure_is_attributed_to_a_stage():
    cfg = _cfg()
    case = run_case(cfg, np.full((256, 256), 128, dtype=np.uint8))
    assert case.failed_stage == "extract"
    assert "extract" in case.degenerate
    assert case.features is None
    assert "extract" in case.error


def test_run_case_bad_bytes_fail_at_decode():
    case = run_case(_cfg(), b"not an image")
    assert case.failed_stage == "decode"
    assert case.stage_trace == ()


def test_run_case_scores_with_bundle():
    cfg = _cfg()
    entries = _tiny_entries(cfg)
    build = build_dataset(cfg, entries)
    bundle = build_bundle(cfg, build)
    case = run_case(cfg, _phantom(width=28, seed=9).image, bundle=bundle)
    assert set(case.scores) == set(cfg.models)
    assert all(0.0 <= s <= 1.0 for s in case.scores.values())
    assert set(case.labels.values()) <= {"dilated", "normal"}


# ---------------------------------------------------------------------------
# Dataset builds
# ---------------------------------------------------------------------------

_ENTRY_CACHE = {}


def _tiny_entries(cfg, tmp_dir=None):
    """Small saved corpus shared across tests (6 cases at 256 px)."""
    key = "default"
    if key not in _ENTRY_CACHE:
        import tempfile
        base = PhantomSpec(size=256, duct_width_px=8, noise_sigma=10.0,
                           haze_strength=0.3)
        out = tempfile.mkdtemp(prefix="biliscope-test-corpus-")
        manifest = save_corpus(generate_corpus(3, base, rng_seed=21), out)
        _ENTRY_CACHE[key] = load_manifest(manifest)
    return _ENTRY_CACHE[key]


def test_build_dataset_csv_and_rows(tmp_path):
    cfg = _cfg()
    entries = _tiny_entries(cfg)
    csv_path = tmp_path / "features.csv"
    build = build_dataset(cfg, entries, csv_path=csv_path)
    lines = csv_path.read_text().splitlines()
    assert lines[0] == FEATURE_CSV_HEADER
    assert len(lines) == 1 + len(entries)
    assert build.n_total == 6
    kept = build.n_total - build.n_excluded
    assert build.dataset.rows.shape == (kept, 4)
    assert build.raw_rows.shape == (kept, 4)
    assert len(build.ids) == kept
    assert build.dataset.feature_names == REDUCED_NAMES
    assert build.dataset.rows.min() >= 0.0 and build.dataset.rows.max() <= 1.0


def test_build_dataset_quality_gate():
    cfg = _cfg(degenerate_limit=0.0)
    entries = _tiny_entries(cfg)
    flat = np.full((256, 256), 100, dtype=np.uint8)

    class FakeEntry:
        def __init__(self, entry, path):
            self.id = entry.id
            self.label = entry.label
            self.image_path = path

    import tempfile
    from pathlib import Path
    bad_path = Path(tempfile.mkdtemp()) / "flat.pgm"
    raster.write_pgm(bad_path, flat)
    bad = [FakeEntry(entries[0], bad_path)]
    with pytest.raises(CorpusQualityError):
        build_dataset(cfg, bad)


def test_build_bundle_and_evaluate_all():
    cfg = _cfg(cv_folds=3)             # six cases cannot fill ten folds
    entries = _tiny_entries(cfg)
    build = build_dataset(cfg, entries)
    bundle = build_bundle(cfg, build)
    assert set(bundle.models) == set(cfg.models)
    assert bundle.feature_mode == cfg.feature_mode
    reports = evaluate_all(cfg, build)
    assert [r.kind for r in reports] == list(cfg.models)
    for r in reports:
        c = r.counts
        assert c.tp + c.tn + c.fp + c.fn == build.n_total - build.n_excluded


def test_build_dataset_empty_manifest_rejected():
    with pytest.raises(CorpusQualityError):
        build_dataset(_cfg(), [])
