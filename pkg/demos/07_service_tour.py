"""
Review service tour
===================

Exercise the HTTP review service end to end without leaving the
process: upload a phantom, run a segmentation job, watch its snapshot
count grow, fetch the result, and file a clinician review.
"""

import json
import tempfile
import time

from fastapi.testclient import TestClient

from biliscope.phantom import PhantomSpec, generate
from biliscope.pipeline import PipelineConfig
from biliscope.raster import save_pgm
from biliscope.service import create_app

storage = tempfile.mkdtemp(prefix="biliscope-tour-")
cfg = PipelineConfig(image_size=256, axis_norm=256.0)
client = TestClient(create_app(cfg, storage_dir=storage, worker_count=2))

# -- upload ----------------------------------------------------------------
sample = generate(PhantomSpec(duct_width_px=24, size=256, noise_sigma=10.0,
                              haze_strength=0.3, rng_seed=31))
resp = client.post("/images", content=save_pgm(sample.image))
image_id = resp.json()["image_id"]
print(f"POST /images -> {resp.status_code}, image_id {image_id}")

# a seed that hugs the frame border is refused up front
bad = client.post("/jobs", json={"image_id": image_id,
                                 "seed": {"row": 1, "col": 128}})
print(f"POST /jobs (seed on the border) -> {bad.status_code}: "
      f"{bad.json()['detail']}")

# -- run a job -------------------------------------------------------------
resp = client.post("/jobs", json={"image_id": image_id, "iterations": 400})
job_id = resp.json()["job_id"]
print(f"POST /jobs -> {resp.status_code}, job_id {job_id}")

while True:
    status = client.get(f"/jobs/{job_id}").json()
    print(f"  {status['state']:<8} {status['progress']['completed']:>4}"
          f"/{status['progress']['total']} steps, "
          f"{status['snapshot_count']} snapshots")
    if status["state"] in ("done", "failed"):
        break
    time.sleep(0.3)

result = client.get(f"/jobs/{job_id}/result").json()
print(f"\nresult for {result['case_id']}:")
print(f"  stage trace: {' -> '.join(result['stage_trace'])}")
print(f"  major axis {result['features']['mja']:.4f}, "
      f"aspect ratio {result['features']['ar']:.4f}")

mask = client.get(f"/jobs/{job_id}/mask")
print(f"GET /jobs/{job_id}/mask -> {mask.status_code}, "
      f"{len(mask.content)} bytes of PGM")

# -- file a review ---------------------------------------------------------
review = client.post("/reviews", json={"image_id": image_id,
                                       "clinician_label": "dilated"})
print(f"\nPOST /reviews -> {review.status_code}")
print(json.dumps(review.json(), indent=2))

listing = client.get("/reviews").json()["reviews"]
print(f"GET /reviews -> {len(listing)} record(s), "
      f"latest is current: {listing[-1]['current']}")
print(f"\nservice storage kept at {storage}")
