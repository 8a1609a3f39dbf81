// Types mirroring the JSON documents served by the annotation backend.
// Field names match the wire format exactly, including snake_case.

export type Rect = [number, number, number, number];
export type Vec3 = [number, number, number];

export type BoxStatus = "pre_annotated" | "confirmed" | "edited" | "created";

export interface BoxRecord {
  id: string;
  class: string;
  status: BoxStatus;
  position: Vec3;
  scale: Vec3; // l, w, h
  yaw: number;
  score?: number | null;
  rect: Rect | null; // projected image rect, null when out of view
}

export interface ConfirmedPair {
  box3d_id: number;
  box2d_id: number;
  iou2d: number;
}

export interface WrongEntry {
  box3d_id: number;
  reason: "low_iou" | "unmatched_3d";
  iou2d?: number | null;
}

export interface MissedEntry {
  box2d_id: number;
  rect: Rect;
}

export interface FusionReport {
  palf_fusion: number;
  confirmed: ConfirmedPair[];
  wrong: WrongEntry[];
  missed: MissedEntry[];
  out_of_view: number[];
  highlighted_wrong_points: number[];
  highlighted_missed_points: number[];
  missed_image_regions: Rect[];
  class_mismatches: [number, number][];
}

export interface FrameBundle {
  frame_id: string;
  point_count: number;
  image_size: [number, number];
  boxes: BoxRecord[];
  fusion: FusionReport;
  image_ref: string | null;
  warnings: string[];
}

export interface SessionBox {
  id: string;
  class: string;
  status: BoxStatus;
  position: Vec3;
  scale: Vec3;
  yaw: number;
}

export interface SessionDoc {
  palf_session: number;
  frame_id: string;
  boxes: SessionBox[];
  timing_events: TimingEvent[];
}

export type EventKind =
  | "box_opened"
  | "box_confirmed"
  | "box_edited"
  | "box_created"
  | "box_deleted";

export interface TimingEvent {
  kind: EventKind;
  box_id: string;
  timestamp: number;
}

export interface RefitResult {
  box: { position: Vec3; scale: Vec3; yaw: number };
  degenerate: boolean;
}

export class MalformedBundleError extends Error {}

function isNumArray(v: unknown, n: number): boolean {
  return Array.isArray(v) && v.length === n && v.every((x) => typeof x === "number" && isFinite(x));
}

/** Check the parts of a bundle the UI depends on. Throws MalformedBundleError
 * with a human-readable reason so the shell can show a fallback message
 * instead of a half-drawn scene. */
export function validateBundle(doc: any): FrameBundle {
  if (typeof doc !== "object" || doc === null) {
    throw new MalformedBundleError("bundle is not an object");
  }
  if (typeof doc.frame_id !== "string") {
    throw new MalformedBundleError("bundle missing frame_id");
  }
  if (!Array.isArray(doc.boxes)) {
    throw new MalformedBundleError("bundle missing boxes list");
  }
  doc.boxes.forEach((b: any, i: number) => {
    if (typeof b?.id !== "string") {
      throw new MalformedBundleError(`boxes[${i}] missing id`);
    }
    if (!isNumArray(b.position, 3) || !isNumArray(b.scale, 3) || typeof b.yaw !== "number") {
      throw new MalformedBundleError(`boxes[${i}] has malformed geometry`);
    }
    if (b.rect !== null && !isNumArray(b.rect, 4)) {
      throw new MalformedBundleError(`boxes[${i}] has malformed rect`);
    }
  });
  const fusion = doc.fusion;
  if (typeof fusion !== "object" || fusion === null) {
    throw new MalformedBundleError("bundle missing fusion report");
  }
  for (const key of [
    "confirmed",
    "wrong",
    "missed",
    "out_of_view",
    "highlighted_wrong_points",
    "highlighted_missed_points",
    "missed_image_regions",
  ]) {
    if (!Array.isArray(fusion[key])) {
      throw new MalformedBundleError(`fusion report missing ${key}`);
    }
  }
  if (!isNumArray(doc.image_size, 2)) {
    throw new MalformedBundleError("bundle missing image_size");
  }
  return doc as FrameBundle;
}
