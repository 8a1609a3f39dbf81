import {
  FrameBundle,
  RefitResult,
  SessionBox,
  SessionDoc,
  TimingEvent,
  Vec3,
  validateBundle,
} from "./model";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/** Error carrying the backend's structured detail, so callers can show the
 * per-field diagnostics from a rejected save instead of a bare status code. */
export class ApiError extends Error {
  status: number;
  diagnostics: string[];

  constructor(status: number, detail: string, diagnostics: string[] = []) {
    super(detail);
    this.status = status;
    this.diagnostics = diagnostics;
  }
}

async function raiseFor(resp: Response): Promise<void> {
  if (resp.ok) return;
  let detail = `HTTP ${resp.status}`;
  let diagnostics: string[] = [];
  try {
    const body = await resp.json();
    if (typeof body?.detail === "string") detail = body.detail;
    if (Array.isArray(body?.diagnostics)) diagnostics = body.diagnostics;
  } catch {
    // non-JSON error body, keep the status line
  }
  throw new ApiError(resp.status, detail, diagnostics);
}

export class ApiClient {
  private base: string;
  private fetchFn: FetchLike;

  constructor(base = "", fetchFn?: FetchLike) {
    this.base = base.replace(/\/$/, "");
    this.fetchFn = fetchFn ?? ((url, init) => fetch(url, init));
  }

  private async getJson(path: string): Promise<any> {
    const resp = await this.fetchFn(this.base + path);
    await raiseFor(resp);
    return resp.json();
  }

  async listFrames(): Promise<string[]> {
    const doc = await this.getJson("/api/frames");
    return doc.frames;
  }

  async getBundle(frameId: string): Promise<FrameBundle> {
    return validateBundle(await this.getJson(`/api/frames/${frameId}`));
  }

  /** Fetch the frame's point cloud: a packed stream of little-endian float32
   * (x, y, z) triples. Decoded explicitly via DataView so the result does not
   * depend on the host's native byte order. */
  async getPoints(frameId: string): Promise<Float32Array> {
    const resp = await this.fetchFn(this.base + `/api/frames/${frameId}/points`);
    await raiseFor(resp);
    const buf = await resp.arrayBuffer();
    const view = new DataView(buf);
    const count = Math.floor(buf.byteLength / 4);
    const out = new Float32Array(count);
    for (let i = 0; i < count; i++) {
      out[i] = view.getFloat32(i * 4, true);
    }
    return out;
  }

  imageUrl(bundle: FrameBundle): string | null {
    return bundle.image_ref ? this.base + bundle.image_ref : null;
  }

  async putAnnotations(frameId: string, boxes: SessionBox[]): Promise<SessionDoc> {
    const resp = await this.fetchFn(this.base + `/api/frames/${frameId}/annotations`, {
      method: "PUT",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ boxes }),
    });
    await raiseFor(resp);
    return resp.json();
  }

  async refit(frameId: string, seed: { position: Vec3; scale: Vec3; yaw: number }): Promise<RefitResult> {
    const resp = await this.fetchFn(this.base + `/api/frames/${frameId}/refit`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(seed),
    });
    await raiseFor(resp);
    return resp.json();
  }

  async postEvent(frameId: string, event: TimingEvent): Promise<void> {
    const resp = await this.fetchFn(this.base + `/api/frames/${frameId}/events`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(event),
    });
    await raiseFor(resp);
  }

  async getMetrics(frameId: string, gt = "expert"): Promise<any> {
    return this.getJson(`/api/frames/${frameId}/metrics?gt=${gt}`);
  }
}
