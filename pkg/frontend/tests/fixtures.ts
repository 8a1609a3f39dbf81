import { FrameBundle } from "../src/model";

// Hand-built frame shaped exactly like the backend's bundle document.
// Box 0 was confirmed by the image check, box 1 flagged wrong (low overlap
// with its detection), and one 2D detection went unmatched, so the report
// carries a missed region plus its back-projected point highlights.

export function mixedVerdictBundle(): FrameBundle {
  return {
    frame_id: "000000",
    point_count: 8,
    image_size: [1242, 375],
    boxes: [
      {
        id: "box_0000",
        class: "Car",
        status: "pre_annotated",
        position: [12.0, 1.5, -0.8],
        scale: [4.2, 1.9, 1.6],
        yaw: 0.1,
        score: 0.9,
        rect: [600.0, 180.0, 760.0, 260.0],
      },
      {
        id: "box_0001",
        class: "Car",
        status: "pre_annotated",
        position: [18.0, -4.0, -0.7],
        scale: [3.9, 1.8, 1.5],
        yaw: -0.4,
        score: 0.7,
        rect: [850.0, 190.0, 960.0, 250.0],
      },
    ],
    fusion: {
      palf_fusion: 1,
      confirmed: [{ box3d_id: 0, box2d_id: 0, iou2d: 0.92 }],
      wrong: [{ box3d_id: 1, reason: "low_iou", iou2d: 0.21 }],
      missed: [{ box2d_id: 2, rect: [300.0, 120.0, 420.0, 220.0] }],
      out_of_view: [],
      highlighted_wrong_points: [3, 4],
      highlighted_missed_points: [5, 6],
      missed_image_regions: [[300.0, 120.0, 420.0, 220.0]],
      class_mismatches: [],
    },
    image_ref: "/api/frames/000000/image",
    warnings: [],
  };
}

/** mixedVerdictBundle plus a third box behind the camera (no rect, out of view). */
export function richBundle(): FrameBundle {
  const bundle = mixedVerdictBundle();
  bundle.boxes.push({
    id: "box_0002",
    class: "Pedestrian",
    status: "pre_annotated",
    position: [-10.0, 2.0, -0.9],
    scale: [0.8, 0.7, 1.7],
    yaw: 1.2,
    score: 0.6,
    rect: null,
  });
  bundle.fusion.out_of_view = [2];
  return bundle;
}

export function fixturePoints(): number[][] {
  const pts: number[][] = [];
  for (let i = 0; i < 8; i++) {
    pts.push([10 + i * 0.5, -2 + i, 0.25 * i - 1]);
  }
  return pts;
}
