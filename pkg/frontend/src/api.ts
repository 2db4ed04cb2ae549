/**
 * Thin fetch client for the screening service. Every method maps to one
 * endpoint; errors carry the server's `detail` string when present.
 */

export interface SeedJson {
  row: number;
  col: number;
  half_size: number;
  rows: [number, number];
  cols: [number, number];
}

export interface JobStatus {
  job_id: string;
  image_id: string;
  state: "queued" | "running" | "done" | "failed";
  progress: { completed: number; total: number };
  snapshot_count: number;
  seed: SeedJson | null;
  error: string | null;
}

export interface CaseResult {
  job_id: string;
  image_id: string;
  case_id: string;
  stage_trace: string[];
  degenerate: string[];
  failed_stage: string | null;
  error: string | null;
  seed: SeedJson | null;
  snapshot_count: number;
  features: Record<string, number | boolean> | null;
  scores: Record<string, number>;
  labels: Record<string, string>;
  prediction: string | null;
  scaler_context: { names: string[]; mins: number[]; maxs: number[] } | null;
}

export interface ReviewRecord {
  image_id: string;
  predicted_label: string | null;
  scores: Record<string, number>;
  clinician_label: string | null;
  timestamp: string;
  current?: boolean;
}

export interface JobRequest {
  image_id: string;
  seed?: { row: number; col: number; half_size: number };
  iterations?: number;
  feature_mode?: "reduced4" | "full10";
}

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(detail);
  }
}

async function raise(resp: Response): Promise<never> {
  let detail = `${resp.status} ${resp.statusText}`;
  try {
    const body = await resp.json();
    if (body && typeof body.detail === "string") detail = body.detail;
  } catch {
    // non-JSON error body; keep the status line
  }
  throw new ApiError(resp.status, detail);
}

async function json<T>(resp: Response): Promise<T> {
  if (!resp.ok) await raise(resp);
  return (await resp.json()) as T;
}

export class ApiClient {
  constructor(private base: string = "") {}

  private url(path: string): string {
    return this.base + path;
  }

  async uploadImage(body: Uint8Array | ArrayBuffer): Promise<string> {
    const bytes = body instanceof ArrayBuffer ? new Uint8Array(body) : body;
    const copy = new Uint8Array(bytes.length);
    copy.set(bytes);
    const resp = await fetch(this.url("/images"), {
      method: "POST",
      headers: { "content-type": "application/octet-stream" },
      body: copy.buffer,
    });
    const payload = await json<{ image_id: string }>(resp);
    return payload.image_id;
  }

  async listImages(): Promise<string[]> {
    const resp = await fetch(this.url("/images"));
    return (await json<{ images: string[] }>(resp)).images;
  }

  async fetchImage(imageId: string): Promise<Response> {
    const resp = await fetch(this.url(`/images/${imageId}`));
    if (!resp.ok) await raise(resp);
    return resp;
  }

  async submitJob(request: JobRequest): Promise<string> {
    const resp = await fetch(this.url("/jobs"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(request),
    });
    return (await json<{ job_id: string }>(resp)).job_id;
  }

  async jobStatus(jobId: string): Promise<JobStatus> {
    return json<JobStatus>(await fetch(this.url(`/jobs/${jobId}`)));
  }

  /**
   * Poll until the job reaches a terminal state. `onProgress` fires for
   * every observed status, including the terminal one. Resolves for both
   * "done" and "failed" so callers can show the failure stage in place.
   */
  pollJob(
    jobId: string,
    onProgress?: (status: JobStatus) => void,
    intervalMs = 400,
  ): Promise<JobStatus> {
    return new Promise((resolve, reject) => {
      const tick = async () => {
        let status: JobStatus;
        try {
          status = await this.jobStatus(jobId);
        } catch (err) {
          clearInterval(timer);
          reject(err);
          return;
        }
        if (onProgress) onProgress(status);
        if (status.state === "done" || status.state === "failed") {
          clearInterval(timer);
          resolve(status);
        }
      };
      const timer = setInterval(tick, intervalMs);
      void tick();
    });
  }

  async jobResult(jobId: string): Promise<CaseResult> {
    return json<CaseResult>(await fetch(this.url(`/jobs/${jobId}/result`)));
  }

  async fetchSnapshot(jobId: string, index: number): Promise<Response> {
    const resp = await fetch(this.url(`/jobs/${jobId}/snapshots/${index}`));
    if (!resp.ok) await raise(resp);
    return resp;
  }

  async fetchMask(jobId: string): Promise<Response> {
    const resp = await fetch(this.url(`/jobs/${jobId}/mask`));
    if (!resp.ok) await raise(resp);
    return resp;
  }

  async postReview(imageId: string, label: string | null): Promise<ReviewRecord> {
    const resp = await fetch(this.url("/reviews"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ image_id: imageId, clinician_label: label }),
    });
    return json<ReviewRecord>(resp);
  }

  async listReviews(): Promise<ReviewRecord[]> {
    const resp = await fetch(this.url("/reviews"));
    return (await json<{ reviews: ReviewRecord[] }>(resp)).reviews;
  }
}
