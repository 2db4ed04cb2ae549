import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiClient, ApiError, JobStatus } from "../src/api.js";

type Handler = (url: string, init?: RequestInit) => Response;

function stubFetch(handler: Handler): void {
  vi.stubGlobal("fetch", vi.fn(async (url: string, init?: RequestInit) =>
    handler(url, init)));
}

const jsonResponse = (body: unknown, status = 200): Response =>
  new Response(JSON.stringify(body), {
    status, headers: { "content-type": "application/json" },
  });

const status = (state: JobStatus["state"], completed: number): JobStatus => ({
  job_id: "job-1", image_id: "img-1", state,
  progress: { completed, total: 625 }, snapshot_count: 0,
  seed: null, error: state === "failed" ? "stage extract: no region" : null,
});

afterEach(() => vi.unstubAllGlobals());

describe("ApiClient", () => {
  it("uploads bytes and returns the new image id", async () => {
    stubFetch((url, init) => {
      expect(url).toBe("/images");
      expect(init?.method).toBe("POST");
      return jsonResponse({ image_id: "img-42" }, 201);
    });
    const api = new ApiClient();
    expect(await api.uploadImage(new Uint8Array([1, 2]))).toBe("img-42");
  });

  it("prefixes every path with the configured base", async () => {
    const seen: string[] = [];
    stubFetch((url) => {
      seen.push(url);
      return jsonResponse({ images: [] });
    });
    await new ApiClient("..").listImages();
    expect(seen).toEqual(["../images"]);
  });

  it("surfaces the server's detail string on errors", async () => {
    stubFetch(() => jsonResponse({ detail: "unknown image img-x" }, 404));
    const api = new ApiClient();
    const err = await api.submitJob({ image_id: "img-x" }).catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(404);
    expect(err.message).toBe("unknown image img-x");
  });

  it("falls back to the status line for non-JSON error bodies", async () => {
    stubFetch(() => new Response("<html>boom</html>",
                                 { status: 500, statusText: "Server Error" }));
    const err = await new ApiClient().listImages().catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.message).toContain("500");
  });

  it("polls a job to completion and reports every status", async () => {
    const states = [status("queued", 0), status("running", 300),
                    status("done", 625)];
    let call = 0;
    stubFetch(() => jsonResponse(states[Math.min(call++, states.length - 1)]));

    const api = new ApiClient();
    const seen: string[] = [];
    const final = await api.pollJob("job-1", (s) => seen.push(s.state), 1);
    expect(final.state).toBe("done");
    expect(seen).toEqual(["queued", "running", "done"]);
  });

  it("resolves failed jobs instead of rejecting", async () => {
    stubFetch(() => jsonResponse(status("failed", 10)));
    const final = await new ApiClient().pollJob("job-1", undefined, 1);
    expect(final.state).toBe("failed");
    expect(final.error).toContain("extract");
  });

  it("rejects polling when the status endpoint errors", async () => {
    stubFetch(() => jsonResponse({ detail: "unknown job job-9" }, 404));
    const err = await new ApiClient().pollJob("job-9", undefined, 1)
      .catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.status).toBe(404);
  });

  it("files reviews with a null label for unsure calls", async () => {
    stubFetch((url, init) => {
      expect(url).toBe("/reviews");
      expect(JSON.parse(String(init?.body))).toEqual(
        { image_id: "img-1", clinician_label: null });
      return jsonResponse({ image_id: "img-1", predicted_label: null,
                            scores: {}, clinician_label: null,
                            timestamp: "t", current: true }, 201);
    });
    const record = await new ApiClient().postReview("img-1", null);
    expect(record.current).toBe(true);
  });
});
