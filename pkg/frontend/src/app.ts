/**
 * Page controller for the clinician review UI. Talks to the screening
 * service exclusively over its HTTP API: upload scans, place a seed,
 * run segmentation jobs, replay contour snapshots, inspect features and
 * model scores, and file the final clinician call.
 */

import { ApiClient, ApiError, CaseResult, JobStatus } from "./api.js";
import { decodeResponse, Raster } from "./pgm.js";
import {
  clampSeed, defaultSeed, MASK_TINT, pointerToPixel, rasterToRgba,
  Seed, seedBounds, tintMask,
} from "./overlay.js";

const api = new ApiClient("..");   // the UI is mounted at /ui, one level down

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

interface ViewState {
  imageId: string | null;
  base: Raster | null;
  seed: Seed | null;
  seedPlaced: boolean;          // operator moved it; otherwise server default
  mask: Raster | null;
  jobId: string | null;
  result: CaseResult | null;
  snapshotCount: number;
  snapshots: Map<number, Raster>;
  dragging: boolean;
}

const state: ViewState = {
  imageId: null, base: null, seed: null, seedPlaced: false, mask: null,
  jobId: null, result: null, snapshotCount: 0, snapshots: new Map(),
  dragging: false,
};

// ---------------------------------------------------------------------------
// status line
// ---------------------------------------------------------------------------

function note(text: string, isError = false): void {
  const line = $("status-line");
  line.textContent = text;
  line.classList.toggle("error", isError);
}

function reportError(err: unknown): void {
  if (err instanceof ApiError) note(`service: ${err.message}`, true);
  else note(String(err), true);
}

// ---------------------------------------------------------------------------
// canvas drawing
// ---------------------------------------------------------------------------

function draw(overlayMask: Raster | null = state.mask): void {
  const canvas = $("viewer") as unknown as HTMLCanvasElement;
  if (!state.base) return;
  canvas.width = state.base.width;
  canvas.height = state.base.height;
  const ctx = canvas.getContext("2d");
  if (!ctx) return;

  let rgba = rasterToRgba(state.base);
  if (overlayMask) rgba = tintMask(rgba, overlayMask, MASK_TINT);
  const pixels = new Uint8ClampedArray(rgba.data.length);
  pixels.set(rgba.data);
  ctx.putImageData(new ImageData(pixels, rgba.width, rgba.height), 0, 0);

  if (state.seed) {
    const b = seedBounds(state.seed);
    ctx.strokeStyle = "#ffd24a";
    ctx.lineWidth = 1;
    ctx.strokeRect(b.c0 - 0.5, b.r0 - 0.5, b.c1 - b.c0 + 1, b.r1 - b.r0 + 1);
  }
}

// ---------------------------------------------------------------------------
// image list and upload
// ---------------------------------------------------------------------------

async function refreshImages(): Promise<void> {
  try {
    const ids = await api.listImages();
    const list = $("image-list");
    list.replaceChildren();
    for (const id of ids) {
      const item = document.createElement("li");
      item.textContent = id;
      item.classList.toggle("selected", id === state.imageId);
      item.addEventListener("click", () => void selectImage(id));
      list.appendChild(item);
    }
    $("image-count").textContent = `${ids.length} scan(s)`;
  } catch (err) {
    reportError(err);
  }
}

async function selectImage(imageId: string): Promise<void> {
  try {
    const resp = await api.fetchImage(imageId);
    state.base = await decodeResponse(resp);
    state.imageId = imageId;
    state.seed = defaultSeed(state.base.width, 2);
    state.seedPlaced = false;
    state.mask = null;
    state.jobId = null;
    state.result = null;
    state.snapshots.clear();
    state.snapshotCount = 0;
    ($("snapshot-slider") as unknown as HTMLInputElement).disabled = true;
    $("result-panel").hidden = true;
    note(`loaded ${imageId} (${state.base.width}x${state.base.height})`);
    draw();
    await Promise.all([refreshImages(), refreshReviews()]);
  } catch (err) {
    reportError(err);
  }
}

async function uploadFile(file: File): Promise<void> {
  try {
    const body = new Uint8Array(await file.arrayBuffer());
    const imageId = await api.uploadImage(body);
    note(`uploaded ${file.name} as ${imageId}`);
    await selectImage(imageId);
  } catch (err) {
    reportError(err);
  }
}

// ---------------------------------------------------------------------------
// seed placement
// ---------------------------------------------------------------------------

function moveSeed(clientX: number, clientY: number): void {
  if (!state.base || !state.seed) return;
  const canvas = $("viewer") as unknown as HTMLCanvasElement;
  const rect = canvas.getBoundingClientRect();
  const { row, col } = pointerToPixel(clientX, clientY, rect,
                                      state.base.width, state.base.height);
  state.seed = clampSeed({ ...state.seed, row, col }, state.base.width);
  state.seedPlaced = true;
  $("seed-readout").textContent =
    `seed (${state.seed.row}, ${state.seed.col}) ±${state.seed.halfSize}`;
  draw();
}

function wireSeedDrag(): void {
  const canvas = $("viewer");
  canvas.addEventListener("pointerdown", (ev) => {
    state.dragging = true;
    canvas.setPointerCapture(ev.pointerId);
    moveSeed(ev.clientX, ev.clientY);
  });
  canvas.addEventListener("pointermove", (ev) => {
    if (state.dragging) moveSeed(ev.clientX, ev.clientY);
  });
  canvas.addEventListener("pointerup", () => { state.dragging = false; });
  $("reset-seed").addEventListener("click", () => {
    if (!state.base) return;
    state.seed = defaultSeed(state.base.width, 2);
    state.seedPlaced = false;
    $("seed-readout").textContent = "seed: server default (center)";
    draw();
  });
}

// ---------------------------------------------------------------------------
// jobs
// ---------------------------------------------------------------------------

function jobRequest(): Parameters<ApiClient["submitJob"]>[0] {
  if (!state.imageId) throw new Error("no scan selected");
  const req: Parameters<ApiClient["submitJob"]>[0] = { image_id: state.imageId };
  if (state.seedPlaced && state.seed) {
    req.seed = { row: state.seed.row, col: state.seed.col,
                 half_size: state.seed.halfSize };
  }
  const iterations = ($("iterations") as unknown as HTMLInputElement).value;
  if (iterations) req.iterations = parseInt(iterations, 10);
  const mode = ($("feature-mode") as unknown as HTMLSelectElement).value;
  if (mode === "reduced4" || mode === "full10") req.feature_mode = mode;
  return req;
}

function showProgress(status: JobStatus): void {
  const bar = $("progress-bar") as unknown as HTMLProgressElement;
  bar.max = status.progress.total || 1;
  bar.value = status.progress.completed;
  note(`${status.state}: ${status.progress.completed}/${status.progress.total} ` +
       `steps, ${status.snapshot_count} snapshots`);
}

async function runJob(): Promise<void> {
  const button = $("run-job") as unknown as HTMLButtonElement;
  try {
    button.disabled = true;
    const jobId = await api.submitJob(jobRequest());
    state.jobId = jobId;
    const status = await api.pollJob(jobId, showProgress);
    if (status.state === "failed") {
      note(`job failed — ${status.error ?? "unknown error"}`, true);
      return;
    }
    state.snapshotCount = status.snapshot_count;
    state.mask = await decodeResponse(await api.fetchMask(jobId));
    state.result = await api.jobResult(jobId);
    renderResult(state.result);
    const slider = $("snapshot-slider") as unknown as HTMLInputElement;
    slider.disabled = state.snapshotCount === 0;
    slider.max = String(state.snapshotCount);
    slider.value = String(state.snapshotCount);
    note(`job ${jobId} done — contour overlaid (drag the slider to replay)`);
    draw();
  } catch (err) {
    reportError(err);
  } finally {
    button.disabled = false;
  }
}

async function showSnapshot(index: number): Promise<void> {
  if (!state.jobId) return;
  if (index >= state.snapshotCount) {   // slider parked at the end: final mask
    draw(state.mask);
    return;
  }
  try {
    let frame = state.snapshots.get(index);
    if (!frame) {
      frame = await decodeResponse(await api.fetchSnapshot(state.jobId, index));
      state.snapshots.set(index, frame);
    }
    draw(frame);
  } catch (err) {
    reportError(err);
  }
}

// ---------------------------------------------------------------------------
// result panel
// ---------------------------------------------------------------------------

function renderResult(result: CaseResult): void {
  $("result-panel").hidden = false;
  $("stage-trace").textContent = result.stage_trace.join(" → ");

  const table = $("feature-table");
  table.replaceChildren();
  if (result.features) {
    for (const [name, value] of Object.entries(result.features)) {
      if (typeof value !== "number") continue;
      const row = document.createElement("tr");
      const k = document.createElement("td");
      const v = document.createElement("td");
      k.textContent = name;
      v.textContent = value.toFixed(6);
      row.append(k, v);
      table.appendChild(row);
    }
  }

  const scores = $("score-list");
  scores.replaceChildren();
  const entries = Object.entries(result.scores);
  if (entries.length === 0) {
    const li = document.createElement("li");
    li.textContent = "no models loaded on the server";
    scores.appendChild(li);
  }
  for (const [kind, score] of entries) {
    const li = document.createElement("li");
    li.textContent =
      `${kind}: ${score.toFixed(3)} → ${result.labels[kind] ?? "?"}`;
    scores.appendChild(li);
  }
  $("prediction").textContent = result.prediction
    ? `model consensus: ${result.prediction}`
    : "model consensus: n/a";
}

// ---------------------------------------------------------------------------
// reviews
// ---------------------------------------------------------------------------

async function fileReview(label: string | null): Promise<void> {
  if (!state.imageId) {
    note("select a scan before filing a review", true);
    return;
  }
  try {
    await api.postReview(state.imageId, label);
    note(`review filed: ${label ?? "unsure"}`);
    await refreshReviews();
  } catch (err) {
    reportError(err);
  }
}

async function refreshReviews(): Promise<void> {
  try {
    const reviews = await api.listReviews();
    const mine = reviews.filter((r) => r.image_id === state.imageId);
    const list = $("review-list");
    list.replaceChildren();
    for (const rec of mine.reverse()) {
      const li = document.createElement("li");
      li.textContent = `${rec.timestamp} — ${rec.clinician_label ?? "unsure"}` +
        (rec.predicted_label ? ` (model said ${rec.predicted_label})` : "");
      li.classList.toggle("superseded", !rec.current);
      list.appendChild(li);
    }
    $("review-count").textContent = mine.length
      ? `${mine.length} review(s) for this scan`
      : "no reviews for this scan yet";
  } catch (err) {
    reportError(err);
  }
}

// ---------------------------------------------------------------------------
// wiring
// ---------------------------------------------------------------------------

function wire(): void {
  const fileInput = $("file-input") as unknown as HTMLInputElement;
  fileInput.addEventListener("change", () => {
    const file = fileInput.files?.[0];
    if (file) void uploadFile(file);
    fileInput.value = "";
  });
  $("refresh-images").addEventListener("click", () => void refreshImages());
  $("run-job").addEventListener("click", () => void runJob());
  const slider = $("snapshot-slider") as unknown as HTMLInputElement;
  slider.addEventListener("input", () => void showSnapshot(parseInt(slider.value, 10)));
  $("review-dilated").addEventListener("click", () => void fileReview("dilated"));
  $("review-normal").addEventListener("click", () => void fileReview("normal"));
  $("review-unsure").addEventListener("click", () => void fileReview(null));
  wireSeedDrag();
  void refreshImages();
  note("upload a P5/P6 scan or pick one from the list");
}

document.addEventListener("DOMContentLoaded", wire);
