import * as THREE from "three";
import { FrameBundle, Rect, Vec3 } from "./model";

// Review palette. Green marks the machine's pre-annotation (confirmed or not
// yet checked), red a box the image check flagged as wrong, orange things the
// image sees but the 3D annotations miss, gray boxes outside the camera view.
export type BoxRole = "confirmed" | "pre_annotated" | "wrong" | "out_of_view";

export const ROLE_COLORS: Record<BoxRole, number> = {
  confirmed: 0x2ecc40,
  pre_annotated: 0x2ecc40,
  wrong: 0xe74c3c,
  out_of_view: 0x95a5a6,
};

export const MISSED_COLOR = 0xf39c12;
export const BASE_POINT_COLOR = 0xb0b8c0;
export const SELECTED_COLOR = 0xffff66;

/** Role of each 3D box, by index, derived only from the fusion report. */
export function classifyBoxes(bundle: FrameBundle): BoxRole[] {
  const roles: BoxRole[] = bundle.boxes.map(() => "pre_annotated");
  const fusion = bundle.fusion;
  for (const pair of fusion.confirmed) roles[pair.box3d_id] = "confirmed";
  for (const entry of fusion.wrong) roles[entry.box3d_id] = "wrong";
  for (const idx of fusion.out_of_view) roles[idx] = "out_of_view";
  return roles;
}

function unpack(color: number): [number, number, number] {
  return [((color >> 16) & 0xff) / 255, ((color >> 8) & 0xff) / 255, (color & 0xff) / 255];
}

/** Per-point RGB triples: gray base, orange for points in missed image
 * regions, red for points inside boxes flagged wrong. Red wins where the two
 * index lists overlap, matching the severity order of the review. */
export function pointColors(bundle: FrameBundle, pointCount: number): Float32Array {
  const colors = new Float32Array(pointCount * 3);
  const base = unpack(BASE_POINT_COLOR);
  for (let i = 0; i < pointCount; i++) {
    colors.set(base, i * 3);
  }
  const paint = (indices: number[], rgb: [number, number, number]) => {
    for (const idx of indices) {
      if (idx >= 0 && idx < pointCount) colors.set(rgb, idx * 3);
    }
  };
  paint(bundle.fusion.highlighted_missed_points, unpack(MISSED_COLOR));
  paint(bundle.fusion.highlighted_wrong_points, unpack(ROLE_COLORS.wrong));
  return colors;
}

export interface SceneState {
  root: THREE.Group;
  pointCloud: THREE.Points;
  boxObjects: Map<string, THREE.LineSegments>;
  roles: BoxRole[];
  selected: string | null;
}

function makeBoxObject(id: string, index: number, role: BoxRole): THREE.LineSegments {
  const edges = new THREE.EdgesGeometry(new THREE.BoxGeometry(1, 1, 1));
  const material = new THREE.LineBasicMaterial({ color: ROLE_COLORS[role] });
  const obj = new THREE.LineSegments(edges, material);
  obj.userData = { kind: "box", boxId: id, boxIndex: index, role, color: ROLE_COLORS[role] };
  return obj;
}

export function applyBoxTransform(obj: THREE.Object3D, position: Vec3, scale: Vec3, yaw: number): void {
  obj.position.set(position[0], position[1], position[2]);
  obj.scale.set(scale[0], scale[1], scale[2]);
  obj.rotation.set(0, 0, yaw);
}

/** Build the renderable graph for one frame. Pure three.js object
 * construction, no WebGL context needed, so it is testable headless.
 * points is the packed (x, y, z) stream from the points endpoint. */
export function buildScene(bundle: FrameBundle, points: Float32Array): SceneState {
  const root = new THREE.Group();
  const pointCount = Math.floor(points.length / 3);

  const geometry = new THREE.BufferGeometry();
  geometry.setAttribute("position", new THREE.Float32BufferAttribute(points.slice(0, pointCount * 3), 3));
  geometry.setAttribute("color", new THREE.Float32BufferAttribute(pointColors(bundle, pointCount), 3));
  const pointCloud = new THREE.Points(
    geometry,
    new THREE.PointsMaterial({ size: 0.07, vertexColors: true })
  );
  pointCloud.userData = { kind: "points" };
  root.add(pointCloud);

  const roles = classifyBoxes(bundle);
  const boxObjects = new Map<string, THREE.LineSegments>();
  bundle.boxes.forEach((box, i) => {
    const obj = makeBoxObject(box.id, i, roles[i]);
    applyBoxTransform(obj, box.position, box.scale, box.yaw);
    root.add(obj);
    boxObjects.set(box.id, obj);
  });

  // Missed detections have no 3D box to draw. Each gets a marker object
  // carrying its image rect; the orange point tint above shows where the
  // evidence lives in the cloud.
  bundle.fusion.missed.forEach((entry) => {
    const marker = new THREE.Group();
    marker.userData = {
      kind: "missed_region",
      box2dId: entry.box2d_id,
      rect: entry.rect as Rect,
      color: MISSED_COLOR,
    };
    root.add(marker);
  });

  return { root, pointCloud, boxObjects, roles, selected: null };
}

/** Register a freshly created (not yet saved) box in the scene so the
 * reviewer can see it while placing it. Drawn green like any other
 * pre-annotation; fusion has no verdict on it yet. */
export function addDraftBox(state: SceneState, id: string, position: Vec3, scale: Vec3, yaw: number): THREE.LineSegments {
  const obj = makeBoxObject(id, state.boxObjects.size, "pre_annotated");
  applyBoxTransform(obj, position, scale, yaw);
  state.root.add(obj);
  state.boxObjects.set(id, obj);
  return obj;
}

export function setSelected(state: SceneState, boxId: string | null): void {
  for (const [id, obj] of state.boxObjects) {
    const mat = obj.material as THREE.LineBasicMaterial;
    mat.color.setHex(id === boxId ? SELECTED_COLOR : obj.userData.color);
  }
  state.selected = boxId;
}

export function countByRole(state: SceneState): Record<string, number> {
  const counts: Record<string, number> = {};
  state.root.children.forEach((child) => {
    const kind = child.userData?.kind;
    if (kind === "box") {
      counts[child.userData.role] = (counts[child.userData.role] ?? 0) + 1;
    } else if (kind === "missed_region") {
      counts.missed = (counts.missed ?? 0) + 1;
    }
  });
  return counts;
}
