import { FrameBundle, Rect } from "./model";
import { BoxRole, classifyBoxes, MISSED_COLOR, ROLE_COLORS } from "./scene";

export interface OverlayRect {
  rect: Rect;
  kind: "box" | "missed";
  color: string;
  label: string;
}

function cssColor(color: number): string {
  return "#" + color.toString(16).padStart(6, "0");
}

/** Overlay model for the camera image: every in-view 3D box drawn in its
 * review color, plus an outline for each missed image region. Pure data so
 * the canvas drawing stays a dumb loop. */
export function buildImageOverlay(bundle: FrameBundle): OverlayRect[] {
  const overlays: OverlayRect[] = [];
  const roles: BoxRole[] = classifyBoxes(bundle);
  bundle.boxes.forEach((box, i) => {
    if (!box.rect) return;
    overlays.push({
      rect: box.rect,
      kind: "box",
      color: cssColor(ROLE_COLORS[roles[i]]),
      label: box.id,
    });
  });
  bundle.fusion.missed_image_regions.forEach((rect, i) => {
    overlays.push({
      rect,
      kind: "missed",
      color: cssColor(MISSED_COLOR),
      label: `missed_${i}`,
    });
  });
  return overlays;
}

/** Draw overlays onto the image panel canvas, scaled from image pixel space
 * to the canvas size. */
export function drawOverlays(
  ctx: CanvasRenderingContext2D,
  overlays: OverlayRect[],
  imageSize: [number, number],
  canvasSize: [number, number]
): void {
  const sx = canvasSize[0] / imageSize[0];
  const sy = canvasSize[1] / imageSize[1];
  for (const o of overlays) {
    const [x0, y0, x1, y1] = o.rect;
    ctx.strokeStyle = o.color;
    ctx.lineWidth = o.kind === "missed" ? 2.5 : 1.5;
    if (o.kind === "missed") ctx.setLineDash([6, 4]);
    else ctx.setLineDash([]);
    ctx.strokeRect(x0 * sx, y0 * sy, (x1 - x0) * sx, (y1 - y0) * sy);
  }
  ctx.setLineDash([]);
}
