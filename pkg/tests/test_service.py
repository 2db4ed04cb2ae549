"""HTTP review service: uploads, job lifecycle, reviews, restart recovery."""
import json
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

pytest.importorskip("fastapi")
from fastapi.testclient import TestClient

from biliscope import raster
from biliscope.features import FEATURE_NAMES
from biliscope.phantom import PhantomSpec, generate
from biliscope.pipeline import PipelineConfig
from biliscope.service import SNAPSHOT_EVERY, create_app


def _cfg() -> PipelineConfig:
    return PipelineConfig(image_size=256, axis_norm=256.0)


def _phantom_bytes(width: int = 24, seed: int = 5) -> bytes:
    sample = generate(PhantomSpec(duct_width_px=width, size=256,
                                  noise_sigma=10.0, haze_strength=0.3,
                                  rng_seed=seed))
    return raster.save_pgm(sample.image)


def _upload(client: TestClient, body: bytes) -> str:
    resp = client.post("/images", content=body)
    assert resp.status_code == 201
    return resp.json()["image_id"]


def _wait(client: TestClient, job_id: str, timeout: float = 120.0) -> dict:
    deadline = time.time() + timeout
    while time.time() < deadline:
        status = client.get(f"/jobs/{job_id}").json()
        if status["state"] in ("done", "failed"):
            return status
        time.sleep(0.05)
    raise AssertionError(f"job {job_id} still {status['state']} after {timeout}s")


_CTX: dict = {}


def _ctx() -> dict:
    """Shared app with one uploaded phantom and one finished 200-step job."""
    if not _CTX:
        storage = Path(tempfile.mkdtemp(prefix="svc-"))
        app = create_app(_cfg(), storage_dir=storage, worker_count=2)
        client = TestClient(app)
        body = _phantom_bytes()
        image_id = _upload(client, body)
        resp = client.post("/jobs", json={"image_id": image_id,
                                          "iterations": 200})
        assert resp.status_code == 202
        job_id = resp.json()["job_id"]
        status = _wait(client, job_id)
        assert status["state"] == "done", status
        _CTX.update(storage=storage, app=app, client=client, body=body,
                    image_id=image_id, job_id=job_id,
                    result=client.get(f"/jobs/{job_id}/result").json())
    return _CTX


# ---------------------------------------------------------------------------
# images
# ---------------------------------------------------------------------------

def test_upload_returns_distinct_ids_for_identical_bytes():
    ctx = _ctx()
    client, body = ctx["client"], ctx["body"]
    id_a = _upload(client, body)
    id_b = _upload(client, body)
    assert id_a != id_b
    listed = client.get("/images").json()["images"]
    assert id_a in listed and id_b in listed and ctx["image_id"] in listed
    assert listed == sorted(listed)


def test_upload_rejects_undecodable_bytes():
    client = _ctx()["client"]
    resp = client.post("/images", content=b"definitely not a raster")
    assert resp.status_code == 400
    assert "netpbm" in resp.json()["detail"]


def test_image_bytes_served_back_verbatim():
    ctx = _ctx()
    resp = ctx["client"].get(f"/images/{ctx['image_id']}")
    assert resp.status_code == 200
    assert resp.headers["content-type"].startswith("image/x-portable-graymap")
    assert resp.content == ctx["body"]


def test_unknown_image_fetch_404():
    client = _ctx()["client"]
    assert client.get("/images/img-nope").status_code == 404


# ---------------------------------------------------------------------------
# job submission validation
# ---------------------------------------------------------------------------

def test_job_rejects_unknown_image():
    client = _ctx()["client"]
    resp = client.post("/jobs", json={"image_id": "img-nope"})
    assert resp.status_code == 404


def test_job_rejects_malformed_seed():
    ctx = _ctx()
    client, image_id = ctx["client"], ctx["image_id"]
    resp = client.post("/jobs", json={"image_id": image_id,
                                      "seed": {"row": 100}})
    assert resp.status_code == 422
    resp = client.post("/jobs", json={"image_id": image_id,
                                      "seed": {"row": 100, "col": 100,
                                               "half_size": -1}})
    assert resp.status_code == 422


def test_job_rejects_seed_touching_frame_margin():
    ctx = _ctx()
    client, image_id = ctx["client"], ctx["image_id"]
    # the service insists the seed box stay a couple of pixels inside the frame
    resp = client.post("/jobs", json={"image_id": image_id,
                                      "seed": {"row": 1, "col": 128,
                                               "half_size": 2}})
    assert resp.status_code == 422
    assert "inside" in resp.json()["detail"]
    resp = client.post("/jobs", json={"image_id": image_id,
                                      "seed": {"row": 128, "col": 255,
                                               "half_size": 2}})
    assert resp.status_code == 422


def test_job_rejects_bad_iterations_and_feature_mode():
    ctx = _ctx()
    client, image_id = ctx["client"], ctx["image_id"]
    resp = client.post("/jobs", json={"image_id": image_id, "iterations": 0})
    assert resp.status_code == 422
    resp = client.post("/jobs", json={"image_id": image_id,
                                      "feature_mode": "full"})
    assert resp.status_code == 422


def test_job_rejects_non_json_body():
    client = _ctx()["client"]
    resp = client.post("/jobs", content=b"\x00\x01binary")
    assert resp.status_code == 422


# ---------------------------------------------------------------------------
# job lifecycle
# ---------------------------------------------------------------------------

def test_finished_job_status_fields():
    ctx = _ctx()
    status = ctx["client"].get(f"/jobs/{ctx['job_id']}").json()
    assert status["state"] == "done"
    assert status["image_id"] == ctx["image_id"]
    assert status["progress"] == {"completed": 200, "total": 200}
    assert status["snapshot_count"] == 200 // SNAPSHOT_EVERY
    assert status["seed"]["row"] == 128 and status["seed"]["col"] == 128
    assert status["error"] is None


def test_unknown_job_404():
    client = _ctx()["client"]
    assert client.get("/jobs/job-nope").status_code == 404
    assert client.get("/jobs/job-nope/result").status_code == 404
    assert client.get("/jobs/job-nope/mask").status_code == 404
    assert client.get("/jobs/job-nope/snapshots/0").status_code == 404


def test_result_before_completion_conflicts(tmp_path):
    app = create_app(_cfg(), storage_dir=tmp_path / "svc", worker_count=2)
    client = TestClient(app)
    image_id = _upload(client, _phantom_bytes())
    resp = client.post("/jobs", json={"image_id": image_id,
                                      "iterations": 1200})
    job_id = resp.json()["job_id"]
    early = client.get(f"/jobs/{job_id}/result")
    assert early.status_code == 409
    assert "job is" in early.json()["detail"]
    assert _wait(client, job_id)["state"] == "done"
    assert client.get(f"/jobs/{job_id}/result").status_code == 200


def test_snapshots_served_and_bounded():
    ctx = _ctx()
    client, job_id = ctx["client"], ctx["job_id"]
    count = client.get(f"/jobs/{job_id}").json()["snapshot_count"]
    assert count == 8
    for k in range(count):
        resp = client.get(f"/jobs/{job_id}/snapshots/{k}")
        assert resp.status_code == 200
        frame = raster.load_netpbm(resp.content)
        assert frame.shape == (256, 256)
        assert set(np.unique(frame)) <= {0, 255}
    assert client.get(f"/jobs/{job_id}/snapshots/{count}").status_code == 404
    assert client.get(f"/jobs/{job_id}/snapshots/-1").status_code == 404


def test_result_payload_and_immutability():
    ctx = _ctx()
    first = ctx["client"].get(f"/jobs/{ctx['job_id']}/result").json()
    second = ctx["client"].get(f"/jobs/{ctx['job_id']}/result").json()
    assert first == second == ctx["result"]
    assert first["failed_stage"] is None and first["degenerate"] == []
    assert first["stage_trace"][0] == "decode"
    assert first["stage_trace"][-1] == "extract"
    feats = first["features"]
    assert set(FEATURE_NAMES) <= set(feats)
    assert feats["texture_degenerate"] is False
    # no models were loaded, so scoring fields stay empty
    assert first["scores"] == {} and first["labels"] == {}
    assert first["prediction"] is None and first["scaler_context"] is None


def test_mask_endpoint_serves_binary_frame():
    ctx = _ctx()
    resp = ctx["client"].get(f"/jobs/{ctx['job_id']}/mask")
    assert resp.status_code == 200
    mask = raster.load_netpbm(resp.content)
    assert mask.shape == (256, 256)
    assert set(np.unique(mask)) == {0, 255}
    assert int((mask > 0).sum()) > 1000


def test_failed_job_reports_stage_and_conflicts():
    ctx = _ctx()
    client = ctx["client"]
    flat = raster.save_pgm(np.full((256, 256), 120, dtype=np.uint8))
    image_id = _upload(client, flat)
    resp = client.post("/jobs", json={"image_id": image_id})
    job_id = resp.json()["job_id"]
    status = _wait(client, job_id)
    assert status["state"] == "failed"
    assert "extract" in status["error"]
    result = client.get(f"/jobs/{job_id}/result")
    assert result.status_code == 409
    assert "extract" in result.json()["detail"]
    assert client.get(f"/jobs/{job_id}/mask").status_code == 409


# ---------------------------------------------------------------------------
# reviews
# ---------------------------------------------------------------------------

def test_review_rejects_unknown_image_and_bad_label():
    ctx = _ctx()
    client = ctx["client"]
    resp = client.post("/reviews", json={"image_id": "img-nope",
                                         "clinician_label": "dilated"})
    assert resp.status_code == 404
    resp = client.post("/reviews", json={"image_id": ctx["image_id"],
                                         "clinician_label": "maybe"})
    assert resp.status_code == 422


def test_reviews_append_only_with_current_flag():
    ctx = _ctx()
    client, image_id = ctx["client"], ctx["image_id"]
    first = client.post("/reviews", json={"image_id": image_id,
                                          "clinician_label": "dilated"})
    assert first.status_code == 201
    rec = first.json()
    assert rec["clinician_label"] == "dilated" and rec["current"] is True
    assert rec["scores"] == {}
    second = client.post("/reviews", json={"image_id": image_id,
                                           "clinician_label": "normal"})
    assert second.status_code == 201
    third = client.post("/reviews", json={"image_id": image_id,
                                          "clinician_label": None})
    assert third.status_code == 201
    mine = [r for r in client.get("/reviews").json()["reviews"]
            if r["image_id"] == image_id]
    assert [r["clinician_label"] for r in mine] == ["dilated", "normal", None]
    assert [r["current"] for r in mine] == [False, False, True]


# ---------------------------------------------------------------------------
# restart recovery (runs last: it reopens the shared storage directory)
# ---------------------------------------------------------------------------

def test_restart_restores_images_jobs_and_reviews():
    ctx = _ctx()
    old_reviews = ctx["client"].get("/reviews").json()
    old_images = ctx["client"].get("/images").json()
    snap0 = raster.load_netpbm(
        ctx["client"].get(f"/jobs/{ctx['job_id']}/snapshots/0").content)
    # forge a job that the log says was still running when the server died
    with (ctx["storage"] / "jobs.log").open("a") as fh:
        fh.write(json.dumps({"job_id": "job-forged", "state": "running"}) + "\n")

    app2 = create_app(_cfg(), storage_dir=ctx["storage"], worker_count=2)
    client2 = TestClient(app2)

    assert client2.get("/images").json() == old_images
    assert client2.get(f"/images/{ctx['image_id']}").content == ctx["body"]

    status = client2.get(f"/jobs/{ctx['job_id']}").json()
    assert status["state"] == "done"
    assert status["snapshot_count"] == 8
    assert client2.get(f"/jobs/{ctx['job_id']}/result").json() == ctx["result"]
    snap0_again = raster.load_netpbm(
        client2.get(f"/jobs/{ctx['job_id']}/snapshots/0").content)
    assert np.array_equal(snap0, snap0_again)

    forged = client2.get("/jobs/job-forged").json()
    assert forged["state"] == "failed"
    assert "restarted" in forged["error"]
    assert client2.get("/jobs/job-forged/result").status_code == 409

    assert client2.get("/reviews").json() == old_reviews
