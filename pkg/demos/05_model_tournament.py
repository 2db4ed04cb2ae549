"""
Six classifiers, cross-validated
================================

Build a small labeled corpus, extract features, and run all six
from-scratch models through stratified cross-validation. Prints the
usual screening table: sensitivity, specificity, precision, F1,
accuracy, and AUC per model.
"""

import tempfile
import time

from biliscope.phantom import PhantomSpec, generate_corpus, save_corpus
from biliscope.pipeline import PipelineConfig, build_dataset, evaluate_all

# eight phantoms per class is small but enough for a stable 4-fold split
base = PhantomSpec(duct_width_px=8, size=256, noise_sigma=10.0,
                   haze_strength=0.3)
samples = generate_corpus(8, base, rng_seed=23)
print(f"corpus: {len(samples)} phantoms, widths "
      f"{sorted(s.duct_width_px for s in samples)}")

with tempfile.TemporaryDirectory() as tmp:
    manifest = save_corpus(samples, tmp)

    cfg = PipelineConfig(image_size=256, axis_norm=256.0, cv_folds=4)
    t0 = time.time()
    build = build_dataset(cfg, manifest)
    print(f"extracted {len(build.ids)} usable feature rows "
          f"({build.n_excluded} degenerate) in {time.time() - t0:.0f} s")

    reports = evaluate_all(cfg, build)

print(f"\n{'model':<6} {'sens':>6} {'spec':>6} {'prec':>6} "
      f"{'f1':>6} {'acc':>6} {'auc':>6}")
for r in reports:
    m = r.metrics
    print(f"{r.kind:<6} {m.sensitivity:>6.3f} {m.specificity:>6.3f} "
          f"{m.precision:>6.3f} {m.f1:>6.3f} {m.accuracy:>6.3f} {r.auc:>6.3f}")

best = max(reports, key=lambda r: (r.auc, r.metrics.accuracy))
print(f"\nbest by AUC: {best.kind} "
      f"(auc {best.auc:.3f}, accuracy {best.metrics.accuracy:.3f})")
