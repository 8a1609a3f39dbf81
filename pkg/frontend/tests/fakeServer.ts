import { FetchLike } from "../src/api";
import { FrameBundle, RefitResult, SessionBox, SessionDoc, TimingEvent } from "../src/model";

const EVENT_KINDS = new Set(["box_opened", "box_confirmed", "box_edited", "box_created", "box_deleted"]);
const BOX_STATUSES = new Set(["pre_annotated", "confirmed", "edited", "created"]);

function json(doc: unknown, status = 200): Response {
  return new Response(JSON.stringify(doc), {
    status,
    headers: { "content-type": "application/json" },
  });
}

function isVec(v: unknown, n: number): v is number[] {
  return Array.isArray(v) && v.length === n && v.every((x) => typeof x === "number" && isFinite(x));
}

/** In-memory stand-in for the annotation backend, speaking the same routes,
 * document shapes, and rejection rules, wired in through the injectable
 * fetch. Counters expose exactly how many writes the UI issued. */
export class FakeServer {
  private baseBundles = new Map<string, FrameBundle>();
  private points = new Map<string, number[][]>();
  sessions = new Map<string, SessionDoc>();
  events = new Map<string, TimingEvent[]>();
  putCount = 0;
  refitCount = 0;
  refitResponse: RefitResult | null = null;

  fetch: FetchLike = async (url, init) => this.route(url, init);

  addFrame(bundle: FrameBundle, points: number[][]): void {
    this.baseBundles.set(bundle.frame_id, bundle);
    this.points.set(bundle.frame_id, points);
  }

  eventsFor(frameId: string): TimingEvent[] {
    return this.events.get(frameId) ?? [];
  }

  /** Current bundle: base frame with any saved session overlaid, the same
   * read-your-writes view the real service serves after a PUT. */
  bundleFor(frameId: string): FrameBundle {
    const base = this.baseBundles.get(frameId)!;
    const session = this.sessions.get(frameId);
    if (!session) return structuredClone(base);
    const byId = new Map(base.boxes.map((b) => [b.id, b]));
    const doc = structuredClone(base);
    doc.boxes = session.boxes.map((b) => ({
      id: b.id,
      class: b.class,
      status: b.status,
      position: [...b.position] as [number, number, number],
      scale: [...b.scale] as [number, number, number],
      yaw: b.yaw,
      score: byId.get(b.id)?.score ?? null,
      rect: byId.get(b.id)?.rect ?? null,
    }));
    return doc;
  }

  private route(url: string, init?: RequestInit): Response {
    const method = (init?.method ?? "GET").toUpperCase();
    const path = new URL(url, "http://fake.test").pathname;

    if (path === "/api/frames" && method === "GET") {
      return json({ frames: [...this.baseBundles.keys()].sort() });
    }
    const m = path.match(/^\/api\/frames\/([^/]+)(\/[a-z]+)?$/);
    if (!m) return json({ detail: "Not Found" }, 404);
    const frameId = m[1];
    const sub = m[2] ?? "";
    if (!this.baseBundles.has(frameId)) {
      return json({ detail: `unknown frame ${frameId}` }, 404);
    }

    if (sub === "" && method === "GET") return json(this.bundleFor(frameId));
    if (sub === "/points" && method === "GET") return this.servePoints(frameId);
    if (sub === "/annotations" && method === "PUT") return this.putAnnotations(frameId, init);
    if (sub === "/events" && method === "POST") return this.postEvent(frameId, init);
    if (sub === "/refit" && method === "POST") return this.refit(init);
    return json({ detail: "Not Found" }, 404);
  }

  private servePoints(frameId: string): Response {
    const flat = this.points.get(frameId)!.flat();
    const buf = new ArrayBuffer(flat.length * 4);
    const view = new DataView(buf);
    // written explicitly little-endian, like the backend's packed stream
    flat.forEach((v, i) => view.setFloat32(i * 4, v, true));
    return new Response(buf, {
      status: 200,
      headers: { "content-type": "application/octet-stream" },
    });
  }

  private putAnnotations(frameId: string, init?: RequestInit): Response {
    const payload = JSON.parse(String(init?.body ?? "null"));
    const diagnostics: string[] = [];
    if (!payload || !Array.isArray(payload.boxes)) {
      return json({ detail: "invalid annotation payload", diagnostics: ["boxes must be a list"] }, 400);
    }
    const seen = new Set<string>();
    payload.boxes.forEach((b: any, i: number) => {
      if (typeof b?.id !== "string" || !b.id) diagnostics.push(`boxes[${i}]: id must be a string`);
      else if (seen.has(b.id)) diagnostics.push(`boxes[${i}]: duplicate id ${b.id}`);
      else seen.add(b.id);
      if (!isVec(b?.position, 3)) diagnostics.push(`boxes[${i}]: position must be 3 finite numbers`);
      if (!isVec(b?.scale, 3) || b.scale.some((s: number) => s <= 0)) {
        diagnostics.push(`boxes[${i}]: scale must be 3 positive numbers`);
      }
      if (typeof b?.yaw !== "number" || !isFinite(b.yaw)) diagnostics.push(`boxes[${i}]: yaw must be finite`);
      if (!BOX_STATUSES.has(b?.status)) diagnostics.push(`boxes[${i}]: unknown status ${b?.status}`);
    });
    if (diagnostics.length) {
      return json({ detail: "invalid annotation payload", diagnostics }, 400);
    }
    this.putCount += 1;
    const doc: SessionDoc = {
      palf_session: 1,
      frame_id: frameId,
      boxes: payload.boxes.map((b: SessionBox) => ({
        id: b.id,
        class: b.class,
        status: b.status,
        position: [...b.position],
        scale: [...b.scale],
        yaw: b.yaw,
      })),
      timing_events: this.eventsFor(frameId),
    };
    this.sessions.set(frameId, doc);
    return json(doc);
  }

  private postEvent(frameId: string, init?: RequestInit): Response {
    const ev = JSON.parse(String(init?.body ?? "null"));
    if (!ev || !EVENT_KINDS.has(ev.kind)) {
      return json({ detail: `unknown event kind ${ev?.kind}` }, 400);
    }
    if (typeof ev.box_id !== "string" || typeof ev.timestamp !== "number") {
      return json({ detail: "event needs box_id and timestamp" }, 400);
    }
    const list = this.events.get(frameId) ?? [];
    const last = [...list].reverse().find((e) => e.box_id === ev.box_id);
    if (last && ev.timestamp <= last.timestamp) {
      return json({ detail: `timestamps must increase for ${ev.box_id}` }, 400);
    }
    list.push({ kind: ev.kind, box_id: ev.box_id, timestamp: ev.timestamp });
    this.events.set(frameId, list);
    return json({ ok: true, event_count: list.length });
  }

  private refit(init?: RequestInit): Response {
    const seed = JSON.parse(String(init?.body ?? "null"));
    if (!isVec(seed?.position, 3) || !isVec(seed?.scale, 3) || typeof seed?.yaw !== "number") {
      return json({ detail: "invalid refit seed" }, 400);
    }
    this.refitCount += 1;
    if (this.refitResponse) return json(this.refitResponse);
    return json({ box: seed, degenerate: true });
  }
}
