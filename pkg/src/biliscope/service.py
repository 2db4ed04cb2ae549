"""HTTP facade over the pipeline for interactive review.

Endpoints (JSON over HTTP; binary payloads are netpbm):

* ``POST /images`` — store an uploaded P5/P6 image, returning a fresh id.
* ``POST /jobs`` — start an asynchronous pipeline run over a stored image,
  optionally overriding the seed box, iteration count, or feature mode.
* ``GET /jobs/{id}`` / ``.../snapshots/{k}`` / ``.../result`` — poll state,
  fetch intermediate contour masks, fetch the finished case as JSON.
* ``POST /reviews`` / ``GET /reviews`` — append-only clinician decisions.

Storage is a flat directory: uploaded images are content-addressed files
listed in ``images.log``, reviews append to ``reviews.log``, and finished
jobs persist under ``jobs/`` so completed results survive a restart.  Jobs
still executing when the server stops are reported ``failed`` afterwards.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from . import classify, raster
from .errors import BiliscopeError
from .features import FEATURE_NAMES, REDUCED_NAMES
from .pipeline import (CaseResult, PipelineConfig, TrainedBundle,
                       build_bundle, build_dataset, run_case)
from .segment import SeedSpec

__all__ = ["JobRecord", "ServiceState", "create_app", "serve",
           "SNAPSHOT_EVERY", "SEED_CLEARANCE_PX"]

SNAPSHOT_EVERY = 25
# The contour stencil needs a neighbourhood, so a seed box that kisses the
# border is rejected rather than silently clamped.
SEED_CLEARANCE_PX = 2

_VALID_REVIEW_LABELS = (classify.LABEL_DILATED, classify.LABEL_NORMAL, None)


# ---------------------------------------------------------------------------
# Job table
# ---------------------------------------------------------------------------

@dataclasses.dataclass
class JobRecord:
    id: str
    image_id: str
    state: str = "queued"            # queued -> running -> done | failed
    completed: int = 0
    total: int = 0
    seed: SeedSpec | None = None
    iterations: int | None = None
    feature_mode: str | None = None
    snapshots: list[np.ndarray] = dataclasses.field(default_factory=list)
    result: CaseResult | None = None
    error: str | None = None

    def status_json(self) -> dict:
        return {
            "job_id": self.id,
            "image_id": self.image_id,
            "state": self.state,
            "progress": {"completed": self.completed, "total": self.total},
            "snapshot_count": len(self.snapshots),
            "seed": _seed_json(self.seed),
            "error": self.error,
        }


def _seed_json(seed: SeedSpec | None) -> dict | None:
    if seed is None:
        return None
    r0, r1, c0, c1 = seed.bounds()
    return {"row": seed.center_row, "col": seed.center_col,
            "half_size": seed.half_size,
            "rows": [r0, r1], "cols": [c0, c1]}


def _features_json(result: CaseResult) -> dict | None:
    if result.features is None:
        return None
    values = result.features.as_array()
    out = {name: float(v) for name, v in zip(FEATURE_NAMES, values)}
    out["texture_degenerate"] = bool(result.features.texture_degenerate)
    return out


def _majority_label(labels: dict[str, str]) -> str | None:
    if not labels:
        return None
    dil = sum(1 for v in labels.values() if v == classify.LABEL_DILATED)
    return (classify.LABEL_DILATED if dil * 2 >= len(labels)
            else classify.LABEL_NORMAL)


def _result_json(job: JobRecord, scaler_context: dict | None) -> dict:
    result = job.result
    return {
        "job_id": job.id,
        "image_id": job.image_id,
        "case_id": result.case_id,
        "stage_trace": list(result.stage_trace),
        "degenerate": list(result.degenerate),
        "failed_stage": result.failed_stage,
        "error": result.error,
        "seed": _seed_json(job.seed),
        "snapshot_count": len(job.snapshots),
        "features": _features_json(result),
        "scores": {k: float(v) for k, v in result.scores.items()},
        "labels": dict(result.labels),
        "prediction": _majority_label(result.labels),
        "scaler_context": scaler_context,
    }


# ---------------------------------------------------------------------------
# Service state and storage
# ---------------------------------------------------------------------------

class ServiceState:
    """Storage directory plus the synchronized job/image/review tables."""

    def __init__(self, cfg: PipelineConfig, storage_dir: str | Path,
                 bundle: TrainedBundle | None = None, worker_count: int = 2):
        self.cfg = cfg
        self.bundle = bundle
        self.storage = Path(storage_dir)
        (self.storage / "images").mkdir(parents=True, exist_ok=True)
        (self.storage / "jobs").mkdir(parents=True, exist_ok=True)
        self.lock = threading.Lock()
        self.images: dict[str, Path] = {}
        self.jobs: dict[str, JobRecord] = {}
        self.executor = ThreadPoolExecutor(max_workers=worker_count)
        self._restore()

    # -- persistence -------------------------------------------------------

    @property
    def _images_log(self) -> Path:
        return self.storage / "images.log"

    @property
    def _reviews_log(self) -> Path:
        return self.storage / "reviews.log"

    @property
    def _jobs_log(self) -> Path:
        return self.storage / "jobs.log"

    def _restore(self) -> None:
        if self._images_log.exists():
            for line in self._images_log.read_text().splitlines():
                if not line.strip():
                    continue
                entry = json.loads(line)
                path = self.storage / "images" / entry["file"]
                if path.exists():
                    self.images[entry["image_id"]] = path
        last_state: dict[str, str] = {}
        if self._jobs_log.exists():
            for line in self._jobs_log.read_text().splitlines():
                if line.strip():
                    entry = json.loads(line)
                    last_state[entry["job_id"]] = entry["state"]
        for job_id, state in last_state.items():
            if state in ("done", "failed"):
                job = self._load_finished(job_id)
                if job is not None:
                    self.jobs[job_id] = job
                    continue
            self.jobs[job_id] = JobRecord(
                id=job_id, image_id="", state="failed",
                error="server restarted while the job was in flight")

    def _job_dir(self, job_id: str) -> Path:
        return self.storage / "jobs" / job_id

    def _persist_finished(self, job: JobRecord) -> None:
        jdir = self._job_dir(job.id)
        jdir.mkdir(parents=True, exist_ok=True)
        payload = job.status_json()
        if job.state == "done":
            payload["result"] = _result_json(job, self._scaler_context())
        (jdir / "job.json").write_text(json.dumps(payload))
        for k, snap in enumerate(job.snapshots):
            (jdir / f"snap{k:04d}.pgm").write_bytes(
                raster.save_pgm(snap * 255))
        if job.state == "done" and job.result.mask is not None:
            (jdir / "mask.pgm").write_bytes(
                raster.save_pgm(job.result.mask * 255))

    def _load_finished(self, job_id: str) -> JobRecord | None:
        jdir = self._job_dir(job_id)
        meta = jdir / "job.json"
        if not meta.exists():
            return None
        payload = json.loads(meta.read_text())
        job = JobRecord(id=job_id, image_id=payload.get("image_id", ""),
                        state=payload["state"],
                        completed=payload["progress"]["completed"],
                        total=payload["progress"]["total"],
                        error=payload.get("error"))
        seed = payload.get("seed")
        if seed:
            job.seed = SeedSpec(seed["row"], seed["col"], seed["half_size"])
        for snap_path in sorted(jdir.glob("snap*.pgm")):
            img = raster.load_netpbm(snap_path.read_bytes())
            job.snapshots.append((img > 0).astype(np.uint8))
        job._frozen_json = payload.get("result")  # type: ignore[attr-defined]
        return job

    # -- images ------------------------------------------------------------

    def add_image(self, body: bytes) -> str:
        digest = hashlib.sha256(body).hexdigest()[:16]
        fname = f"{digest}.pnm"
        path = self.storage / "images" / fname
        if not path.exists():
            path.write_bytes(body)
        with self.lock:
            image_id = f"img-{len(self.images) + 1:06d}-{uuid.uuid4().hex[:8]}"
            self.images[image_id] = path
            with self._images_log.open("a") as fh:
                fh.write(json.dumps({"image_id": image_id, "file": fname}) + "\n")
        return image_id

    # -- jobs --------------------------------------------------------------

    def _log_job(self, job_id: str, state: str) -> None:
        with self._jobs_log.open("a") as fh:
            fh.write(json.dumps({"job_id": job_id, "state": state}) + "\n")

    def submit_job(self, image_id: str, seed: SeedSpec | None,
                   iterations: int | None, feature_mode: str | None) -> JobRecord:
        job = JobRecord(id=f"job-{uuid.uuid4().hex[:12]}", image_id=image_id,
                        seed=seed, iterations=iterations,
                        feature_mode=feature_mode,
                        total=iterations or self.cfg.chanvese_iterations)
        with self.lock:
            self.jobs[job.id] = job
            self._log_job(job.id, "queued")
        self.executor.submit(self._run_job, job)
        return job

    def _run_job(self, job: JobRecord) -> None:
        with self.lock:
            job.state = "running"
            self._log_job(job.id, "running")
        try:
            body = self.images[job.image_id].read_bytes()

            def on_progress(done: int, total: int) -> None:
                job.completed, job.total = done, total

            cfg = self.cfg
            bundle = self.bundle
            if (job.feature_mode is not None
                    and job.feature_mode != cfg.feature_mode):
                cfg = dataclasses.replace(cfg, feature_mode=job.feature_mode)
                if bundle is not None and bundle.feature_mode != job.feature_mode:
                    bundle = None    # models trained for another projection
            result = run_case(cfg, body, case_id=job.image_id, bundle=bundle,
                              seed=job.seed, iterations=job.iterations,
                              snapshot_every=SNAPSHOT_EVERY,
                              progress=on_progress)
            job.snapshots = result.snapshots
            job.result = result
            if job.seed is None:
                job.seed = cfg.seed_for(cfg.image_size, cfg.image_size)
            with self.lock:
                if result.failed_stage is not None:
                    job.state = "failed"
                    job.error = f"stage {result.failed_stage}: {result.error}"
                    self._log_job(job.id, "failed")
                else:
                    job.state = "done"
                    self._log_job(job.id, "done")
                self._persist_finished(job)
        except Exception as exc:    # pragma: no cover - defensive
            with self.lock:
                job.state = "failed"
                job.error = str(exc)
                self._log_job(job.id, "failed")

    def _scaler_context(self) -> dict | None:
        if self.bundle is None:
            return None
        names = (REDUCED_NAMES if self.bundle.feature_mode == "reduced4"
                 else FEATURE_NAMES)
        return {"names": list(names),
                "mins": [float(x) for x in self.bundle.scaler.mins],
                "maxs": [float(x) for x in self.bundle.scaler.maxs]}

    # -- reviews -----------------------------------------------------------

    def add_review(self, image_id: str, clinician_label) -> dict:
        predicted, scores = None, {}
        with self.lock:
            for job in self.jobs.values():
                if job.image_id == image_id and job.state == "done":
                    predicted = _majority_label(job.result.labels)
                    scores = {k: float(v) for k, v in job.result.scores.items()}
        record = {
            "image_id": image_id,
            "predicted_label": predicted,
            "scores": scores,
            "clinician_label": clinician_label,
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()),
        }
        with self.lock:
            with self._reviews_log.open("a") as fh:
                fh.write(json.dumps(record) + "\n")
        return record

    def list_reviews(self) -> list[dict]:
        records: list[dict] = []
        if self._reviews_log.exists():
            for line in self._reviews_log.read_text().splitlines():
                if line.strip():
                    records.append(json.loads(line))
        latest: dict[str, int] = {}
        for idx, rec in enumerate(records):
            latest[rec["image_id"]] = idx
        for idx, rec in enumerate(records):
            rec["current"] = latest[rec["image_id"]] == idx
        return records


# ---------------------------------------------------------------------------
# HTTP app
# ---------------------------------------------------------------------------

def _error(status: int, detail: str) -> JSONResponse:
    return JSONResponse({"detail": detail}, status_code=status)


def _parse_seed(payload: dict, size: int):
    """Seed override from a job request; (seed, error_response)."""
    raw = payload.get("seed")
    if raw is None:
        return None, None
    try:
        seed = SeedSpec(int(raw["row"]), int(raw["col"]),
                        int(raw.get("half_size", 10)))
    except (KeyError, TypeError, ValueError):
        return None, _error(422, "seed must provide integer row/col")
    if seed.half_size < 0:
        return None, _error(422, "seed half_size must be >= 0")
    r0, r1, c0, c1 = seed.bounds()
    m = SEED_CLEARANCE_PX
    if r0 < m or c0 < m or r1 >= size - m or c1 >= size - m:
        return None, _error(
            422, f"seed rows [{r0},{r1}] cols [{c0},{c1}] must stay {m} px "
                 f"inside the {size}x{size} processing frame")
    return seed, None


def create_app(cfg: PipelineConfig, storage_dir: str | Path,
               bundle: TrainedBundle | None = None,
               worker_count: int = 2,
               ui_dir: str | Path | None = None) -> FastAPI:
    state = ServiceState(cfg, storage_dir, bundle, worker_count)
    app = FastAPI(title="biliscope review service")
    app.state.service = state

    @app.post("/images")
    async def post_image(request: Request):
        body = await request.body()
        try:
            raster.load_netpbm(body)
        except BiliscopeError as exc:
            return _error(400, f"not a decodable netpbm image: {exc}")
        image_id = state.add_image(body)
        return JSONResponse({"image_id": image_id}, status_code=201)

    @app.get("/images")
    def list_images():
        with state.lock:
            return {"images": sorted(state.images)}

    @app.get("/images/{image_id}")
    def get_image(image_id: str):
        path = state.images.get(image_id)
        if path is None:
            return _error(404, f"unknown image {image_id}")
        body = path.read_bytes()
        media = "image/x-portable-graymap" if body[:2] == b"P5" \
            else "image/x-portable-pixmap"
        return Response(content=body, media_type=media)

    @app.post("/jobs", status_code=202)
    async def post_job(request: Request):
        try:
            payload = await request.json()
        except Exception:
            return _error(422, "body must be JSON")
        image_id = payload.get("image_id")
        if image_id not in state.images:
            return _error(404, f"unknown image {image_id}")
        seed, err = _parse_seed(payload, cfg.image_size)
        if err is not None:
            return err
        iterations = payload.get("iterations")
        if iterations is not None:
            iterations = int(iterations)
            if iterations < 1:
                return _error(422, "iterations must be >= 1")
        feature_mode = payload.get("feature_mode")
        if feature_mode is not None and feature_mode not in ("reduced4", "full10"):
            return _error(422, "feature_mode must be reduced4 or full10")
        job = state.submit_job(image_id, seed, iterations, feature_mode)
        return JSONResponse({"job_id": job.id}, status_code=202)

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str):
        job = state.jobs.get(job_id)
        if job is None:
            return _error(404, f"unknown job {job_id}")
        return job.status_json()

    @app.get("/jobs/{job_id}/snapshots/{k}")
    def get_snapshot(job_id: str, k: int):
        job = state.jobs.get(job_id)
        if job is None:
            return _error(404, f"unknown job {job_id}")
        if k < 0 or k >= len(job.snapshots):
            return _error(404, f"snapshot {k} not available "
                               f"({len(job.snapshots)} captured)")
        body = raster.save_pgm(job.snapshots[k] * 255)
        return Response(content=body, media_type="image/x-portable-graymap")

    @app.get("/jobs/{job_id}/result")
    def get_result(job_id: str):
        job = state.jobs.get(job_id)
        if job is None:
            return _error(404, f"unknown job {job_id}")
        if job.state == "failed":
            return _error(409, job.error or "job failed")
        if job.state != "done":
            return _error(409, f"job is {job.state}")
        frozen = getattr(job, "_frozen_json", None)
        if frozen is not None:
            return frozen
        return _result_json(job, state._scaler_context())

    @app.get("/jobs/{job_id}/mask")
    def get_mask(job_id: str):
        job = state.jobs.get(job_id)
        if job is None:
            return _error(404, f"unknown job {job_id}")
        if job.state != "done" or job.result is None or job.result.mask is None:
            return _error(409, f"job is {job.state}")
        body = raster.save_pgm(job.result.mask * 255)
        return Response(content=body, media_type="image/x-portable-graymap")

    @app.post("/reviews")
    async def post_review(request: Request):
        try:
            payload = await request.json()
        except Exception:
            return _error(422, "body must be JSON")
        image_id = payload.get("image_id")
        if image_id not in state.images:
            return _error(404, f"unknown image {image_id}")
        label = payload.get("clinician_label")
        if label not in _VALID_REVIEW_LABELS:
            return _error(422, "clinician_label must be dilated, normal, or null")
        record = state.add_review(image_id, label)
        record = dict(record)
        record["current"] = True
        return JSONResponse(record, status_code=201)

    @app.get("/reviews")
    def get_reviews():
        return {"reviews": state.list_reviews()}

    ui_path = Path(ui_dir) if ui_dir is not None else _default_ui_dir()
    if ui_path is not None and ui_path.is_dir():
        app.mount("/ui", StaticFiles(directory=ui_path, html=True), name="ui")

    return app


def _default_ui_dir() -> Path | None:
    candidate = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    return candidate if candidate.is_dir() else None


def serve(cfg: PipelineConfig, host: str = "127.0.0.1", port: int = 8000,
          storage_dir: str | Path = "biliscope-data",
          manifest: str | Path | None = None,
          worker_count: int = 2) -> None:
    """Train startup models from `manifest` (when given) and serve forever."""
    import uvicorn

    bundle = None
    if manifest:
        build = build_dataset(cfg, manifest)
        bundle = build_bundle(cfg, build)
    app = create_app(cfg, storage_dir, bundle, worker_count)
    uvicorn.run(app, host=host, port=port, log_level="info")
