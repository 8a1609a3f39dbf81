import { ApiClient } from "./api";
import { FrameBundle, SessionBox, Vec3 } from "./model";

export class InvalidBoxError extends Error {}

interface Draft extends SessionBox {
  baseline: { position: Vec3; scale: Vec3; yaw: number };
}

function geometryChanged(d: Draft): boolean {
  const b = d.baseline;
  return (
    d.yaw !== b.yaw ||
    d.position.some((v, i) => v !== b.position[i]) ||
    d.scale.some((v, i) => v !== b.scale[i])
  );
}

/** Why a draft cannot be saved, or null if it can. Extents must stay positive
 * and finite; this runs before any network call so a bad drag never reaches
 * the backend. */
export function extentProblem(scale: Vec3): string | null {
  const names = ["length", "width", "height"];
  for (let i = 0; i < 3; i++) {
    if (!isFinite(scale[i])) return `${names[i]} is not a number`;
    if (scale[i] <= 0) return `${names[i]} must be positive, got ${scale[i]}`;
  }
  return null;
}

/** Review workflow state for one frame: selection, per-box edit drafts, and
 * the save protocol. Every save issues exactly one PUT of the full box list
 * and exactly one timing event (box_edited when geometry moved, box_confirmed
 * when the reviewer accepted the box unchanged), paired with the box_opened
 * sent when the box was selected. */
export class EditorController {
  readonly frameId: string;
  bundle: FrameBundle;
  private api: ApiClient;
  private drafts = new Map<string, Draft>();
  private order: string[] = [];
  private opened = new Set<string>();
  private now: () => number;
  private lastTs = 0;
  private createdCount = 0;
  selected: string | null = null;

  constructor(bundle: FrameBundle, api: ApiClient, now?: () => number) {
    this.frameId = bundle.frame_id;
    this.bundle = bundle;
    this.api = api;
    this.now = now ?? (() => Date.now() / 1000);
    this.seedDrafts(bundle);
  }

  private seedDrafts(bundle: FrameBundle): void {
    this.drafts.clear();
    this.order = [];
    for (const box of bundle.boxes) {
      this.drafts.set(box.id, {
        id: box.id,
        class: box.class,
        status: box.status,
        position: [...box.position] as Vec3,
        scale: [...box.scale] as Vec3,
        yaw: box.yaw,
        baseline: {
          position: [...box.position] as Vec3,
          scale: [...box.scale] as Vec3,
          yaw: box.yaw,
        },
      });
      this.order.push(box.id);
    }
  }

  private stamp(): number {
    // timestamps must strictly increase per box on the backend
    const t = Math.max(this.now(), this.lastTs + 1e-4);
    this.lastTs = t;
    return t;
  }

  draftOf(boxId: string): SessionBox {
    const d = this.drafts.get(boxId);
    if (!d) throw new InvalidBoxError(`no box ${boxId}`);
    return d;
  }

  boxIds(): string[] {
    return [...this.order];
  }

  /** Select a box for review. Posts the box_opened timing event once per
   * open/save cycle; re-clicking the same box does not double-count. */
  async select(boxId: string): Promise<void> {
    this.draftOf(boxId);
    this.selected = boxId;
    if (!this.opened.has(boxId)) {
      this.opened.add(boxId);
      await this.api.postEvent(this.frameId, {
        kind: "box_opened",
        box_id: boxId,
        timestamp: this.stamp(),
      });
    }
  }

  /** Apply an edit to the only editable fields: center, extents, yaw. */
  updateDraft(boxId: string, patch: Partial<{ position: Vec3; scale: Vec3; yaw: number }>): void {
    const d = this.drafts.get(boxId);
    if (!d) throw new InvalidBoxError(`no box ${boxId}`);
    if (patch.position) d.position = [...patch.position] as Vec3;
    if (patch.scale) d.scale = [...patch.scale] as Vec3;
    if (patch.yaw !== undefined) d.yaw = patch.yaw;
  }

  /** Create a fresh box for an object the pre-annotation missed. The orange
   * highlights are guidance only; the reviewer places the box by hand. */
  addBox(position: Vec3, scale: Vec3 = [4, 1.8, 1.6], yaw = 0, classLabel = "Car"): string {
    this.createdCount += 1;
    const id = `manual_${String(this.createdCount).padStart(4, "0")}`;
    this.drafts.set(id, {
      id,
      class: classLabel,
      status: "created",
      position: [...position] as Vec3,
      scale: [...scale] as Vec3,
      yaw,
      // baseline NaN yaw so a save always counts as an edit
      baseline: { position: [...position] as Vec3, scale: [...scale] as Vec3, yaw: NaN },
    });
    this.order.push(id);
    return id;
  }

  async deleteBox(boxId: string): Promise<void> {
    this.draftOf(boxId);
    this.drafts.delete(boxId);
    this.order = this.order.filter((id) => id !== boxId);
    if (this.selected === boxId) this.selected = null;
    this.opened.delete(boxId);
    await this.api.postEvent(this.frameId, {
      kind: "box_deleted",
      box_id: boxId,
      timestamp: this.stamp(),
    });
  }

  /** Ask the backend to refit the selected box from its current draft pose.
   * The response replaces the draft in place; a degenerate fit echoes the
   * seed back, which leaves the draft unchanged. */
  async refit(boxId: string): Promise<boolean> {
    const d = this.drafts.get(boxId);
    if (!d) throw new InvalidBoxError(`no box ${boxId}`);
    const result = await this.api.refit(this.frameId, {
      position: d.position,
      scale: d.scale,
      yaw: d.yaw,
    });
    d.position = [...result.box.position] as Vec3;
    d.scale = [...result.box.scale] as Vec3;
    d.yaw = result.box.yaw;
    return result.degenerate;
  }

  /** Save the reviewed box. Validates extents client-side, PUTs the whole
   * annotation set once, posts the single closing timing event, then
   * re-fetches the bundle so colors reflect the new fusion result. */
  async save(boxId: string): Promise<FrameBundle> {
    const d = this.drafts.get(boxId);
    if (!d) throw new InvalidBoxError(`no box ${boxId}`);
    const problem = extentProblem(d.scale);
    if (problem) throw new InvalidBoxError(problem);

    const edited = geometryChanged(d);
    d.status = edited ? (d.status === "created" ? "created" : "edited") : "confirmed";

    const boxes: SessionBox[] = this.order.map((id) => {
      const draft = this.drafts.get(id)!;
      return {
        id: draft.id,
        class: draft.class,
        status: draft.status,
        position: draft.position,
        scale: draft.scale,
        yaw: draft.yaw,
      };
    });
    await this.api.putAnnotations(this.frameId, boxes);
    await this.api.postEvent(this.frameId, {
      kind: edited ? "box_edited" : "box_confirmed",
      box_id: boxId,
      timestamp: this.stamp(),
    });
    this.opened.delete(boxId);

    const fresh = await this.api.getBundle(this.frameId);
    this.bundle = fresh;
    const keepSelected = this.selected;
    this.seedDrafts(fresh);
    this.selected = keepSelected && this.drafts.has(keepSelected) ? keepSelected : null;
    return fresh;
  }
}
