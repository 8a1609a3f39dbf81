import { describe, expect, it } from "vitest";
import { buildImageOverlay } from "../src/imagePanel";
import { richBundle } from "./fixtures";

describe("image overlay model", () => {
  it("draws every in-view box in its review color and skips out-of-view boxes", () => {
    const overlays = buildImageOverlay(richBundle());
    const boxes = overlays.filter((o) => o.kind === "box");
    expect(boxes.map((o) => o.label)).toEqual(["box_0000", "box_0001"]); // box_0002 has no rect
    expect(boxes[0].color).toBe("#2ecc40"); // confirmed
    expect(boxes[1].color).toBe("#e74c3c"); // flagged wrong
  });

  it("outlines each missed image region", () => {
    const bundle = richBundle();
    bundle.fusion.missed_image_regions.push([10, 20, 60, 80]);
    const overlays = buildImageOverlay(bundle);
    const missed = overlays.filter((o) => o.kind === "missed");
    expect(missed.length).toBe(2);
    expect(missed[1].rect).toEqual([10, 20, 60, 80]);
    expect(missed.every((o) => o.color === "#f39c12")).toBe(true);
  });
});
