import "./style.css";
import { ApiClient, ApiError } from "./api";
import { EditorController, InvalidBoxError } from "./editor";
import { buildImageOverlay, drawOverlays } from "./imagePanel";
import { FrameBundle, MalformedBundleError, Vec3 } from "./model";
import { addDraftBox, applyBoxTransform, buildScene, SceneState, setSelected } from "./scene";
import { Viewer3D } from "./viewer3d";

const $ = (id: string) => document.getElementById(id)!;

const api = new ApiClient("");
const viewer = new Viewer3D($("viewport"));

let editor: EditorController | null = null;
let scene: SceneState | null = null;
let points: Float32Array = new Float32Array(0);

const fields: [string, (v: number, d: { position: Vec3; scale: Vec3; yaw: number }) => void][] = [
  ["in-x", (v, d) => (d.position[0] = v)],
  ["in-y", (v, d) => (d.position[1] = v)],
  ["in-z", (v, d) => (d.position[2] = v)],
  ["in-l", (v, d) => (d.scale[0] = v)],
  ["in-w", (v, d) => (d.scale[1] = v)],
  ["in-h", (v, d) => (d.scale[2] = v)],
  ["in-yaw", (v, d) => (d.yaw = v)],
];

function showFallback(message: string) {
  $("viewport").innerHTML = "";
  const div = document.createElement("div");
  div.id = "fallback";
  div.textContent = `Cannot render this frame: ${message}`;
  $("viewport").appendChild(div);
}

function fillForm(boxId: string | null) {
  const inputs = fields.map(([id]) => $(id) as HTMLInputElement);
  if (!editor || !boxId) {
    inputs.forEach((i) => (i.value = ""));
    $("status-line").textContent = "nothing selected";
    return;
  }
  const d = editor.draftOf(boxId);
  const values = [...d.position, ...d.scale, d.yaw];
  inputs.forEach((input, i) => (input.value = String(Number(values[i].toFixed(4)))));
  $("status-line").textContent = `${boxId} (${d.class}, ${d.status})`;
}

function refreshOverlay(bundle: FrameBundle) {
  const img = $("camera-image") as HTMLImageElement;
  const canvas = $("overlay") as HTMLCanvasElement;
  const url = api.imageUrl(bundle);
  if (!url) {
    img.removeAttribute("src");
    canvas.getContext("2d")?.clearRect(0, 0, canvas.width, canvas.height);
    return;
  }
  img.src = url;
  const draw = () => {
    canvas.width = img.clientWidth || bundle.image_size[0];
    canvas.height = img.clientHeight || bundle.image_size[1];
    const ctx = canvas.getContext("2d");
    if (!ctx) return;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    drawOverlays(ctx, buildImageOverlay(bundle), bundle.image_size, [canvas.width, canvas.height]);
  };
  if (img.complete) draw();
  else img.onload = draw;
}

function refreshFusionSummary(bundle: FrameBundle) {
  const f = bundle.fusion;
  $("fusion-summary").innerHTML = [
    `confirmed: ${f.confirmed.length}`,
    `flagged wrong: ${f.wrong.length}`,
    `missed in image: ${f.missed.length}`,
    `out of view: ${f.out_of_view.length}`,
  ].join("<br>");
  $("warnings").textContent = bundle.warnings.join(" | ");
}

function rebuildScene(bundle: FrameBundle) {
  scene = buildScene(bundle, points);
  viewer.setState(scene);
  if (editor?.selected) setSelected(scene, editor.selected);
  refreshOverlay(bundle);
  refreshFusionSummary(bundle);
}

async function refreshMetrics(frameId: string) {
  try {
    const doc = await api.getMetrics(frameId);
    const pct = (v: number) => `${(v * 100).toFixed(1)}%`;
    $("metrics").textContent =
      `vs expert: precision ${pct(doc.precision)} recall ${pct(doc.recall)}`;
  } catch {
    $("metrics").textContent = "";
  }
}

async function selectBox(boxId: string) {
  if (!editor || !scene) return;
  await editor.select(boxId);
  setSelected(scene, boxId);
  fillForm(boxId);
  viewer.focusOn(editor.draftOf(boxId).position);
  $("save-error").textContent = "";
}

async function loadFrame(frameId: string) {
  $("save-error").textContent = "";
  fillForm(null);
  try {
    const bundle = await api.getBundle(frameId);
    points = await api.getPoints(frameId);
    editor = new EditorController(bundle, api);
    rebuildScene(bundle);
    refreshMetrics(frameId);
  } catch (err) {
    editor = null;
    if (err instanceof MalformedBundleError) showFallback(err.message);
    else if (err instanceof ApiError) showFallback(err.message);
    else showFallback(String(err));
  }
}

viewer.onPick = (boxId) => void selectBox(boxId);

for (const [id, apply] of fields) {
  $(id).addEventListener("input", () => {
    if (!editor?.selected || !scene) return;
    const v = Number(($(id) as HTMLInputElement).value);
    if (!isFinite(v)) return;
    const d = editor.draftOf(editor.selected);
    const next = {
      position: [...d.position] as Vec3,
      scale: [...d.scale] as Vec3,
      yaw: d.yaw,
    };
    apply(v, next);
    editor.updateDraft(editor.selected, next);
    const obj = scene.boxObjects.get(editor.selected);
    if (obj) applyBoxTransform(obj, next.position, next.scale, next.yaw);
  });
}

$("btn-save").addEventListener("click", async () => {
  if (!editor?.selected) return;
  const boxId = editor.selected;
  try {
    const fresh = await editor.save(boxId);
    rebuildScene(fresh);
    fillForm(editor.selected);
    refreshMetrics(fresh.frame_id);
    $("save-error").textContent = "";
  } catch (err) {
    if (err instanceof InvalidBoxError || err instanceof ApiError) {
      $("save-error").textContent =
        err instanceof ApiError && err.diagnostics.length
          ? `${err.message}: ${err.diagnostics.join("; ")}`
          : err.message;
    } else {
      $("save-error").textContent = String(err);
    }
  }
});

$("btn-refit").addEventListener("click", async () => {
  if (!editor?.selected || !scene) return;
  try {
    const degenerate = await editor.refit(editor.selected);
    const d = editor.draftOf(editor.selected);
    const obj = scene.boxObjects.get(editor.selected);
    if (obj) applyBoxTransform(obj, d.position, d.scale, d.yaw);
    fillForm(editor.selected);
    $("save-error").textContent = degenerate ? "refit degenerate: too few points, seed kept" : "";
  } catch (err) {
    $("save-error").textContent = err instanceof ApiError ? err.message : String(err);
  }
});

$("btn-add").addEventListener("click", () => {
  if (!editor || !scene) return;
  // drop the new box at the centroid of the orange (missed) highlights when
  // present; those points are guidance for where an object was overlooked
  const missed = editor.bundle.fusion.highlighted_missed_points;
  let at: Vec3 = [15, 0, 0];
  if (missed.length > 0) {
    let sx = 0, sy = 0, sz = 0, n = 0;
    for (const idx of missed) {
      if (idx * 3 + 2 < points.length) {
        sx += points[idx * 3];
        sy += points[idx * 3 + 1];
        sz += points[idx * 3 + 2];
        n += 1;
      }
    }
    if (n > 0) at = [sx / n, sy / n, sz / n];
  }
  const id = editor.addBox(at);
  const d = editor.draftOf(id);
  addDraftBox(scene, id, d.position, d.scale, d.yaw);
  void selectBox(id);
});

$("btn-delete").addEventListener("click", async () => {
  if (!editor?.selected || !scene) return;
  const boxId = editor.selected;
  await editor.deleteBox(boxId);
  const obj = scene.boxObjects.get(boxId);
  if (obj) {
    scene.root.remove(obj);
    scene.boxObjects.delete(boxId);
  }
  fillForm(null);
});

$("frame-select").addEventListener("change", () => {
  const id = ($("frame-select") as HTMLSelectElement).value;
  location.hash = id;
  void loadFrame(id);
});

async function boot() {
  try {
    const frames = await api.listFrames();
    const sel = $("frame-select") as HTMLSelectElement;
    sel.innerHTML = "";
    for (const f of frames) {
      const opt = document.createElement("option");
      opt.value = f;
      opt.textContent = f;
      sel.appendChild(opt);
    }
    const wanted = location.hash.slice(1);
    const frameId = frames.includes(wanted) ? wanted : frames[0];
    if (!frameId) {
      showFallback("dataset has no frames");
      return;
    }
    sel.value = frameId;
    await loadFrame(frameId);
  } catch (err) {
    showFallback(err instanceof ApiError ? err.message : String(err));
  }
}

void boot();
