import * as THREE from "three";
import { OrbitControls } from "three/examples/jsm/controls/OrbitControls.js";
import { SceneState } from "./scene";

// WebGL shell around the scene graph: one orbiting main view plus fixed
// top / side / front sub-views rendered into the same canvas with scissors.
// Everything in here touches the DOM or the GPU and stays out of unit tests.

const SUBVIEW_FRACTION = 0.22;

export class Viewer3D {
  private renderer: THREE.WebGLRenderer;
  private scene = new THREE.Scene();
  private mainCamera: THREE.PerspectiveCamera;
  private controls: OrbitControls;
  private topCamera: THREE.OrthographicCamera;
  private sideCamera: THREE.OrthographicCamera;
  private frontCamera: THREE.OrthographicCamera;
  private container: HTMLElement;
  private state: SceneState | null = null;
  private focus = new THREE.Vector3(15, 0, 0);
  onPick: ((boxId: string) => void) | null = null;

  constructor(container: HTMLElement) {
    this.container = container;
    this.renderer = new THREE.WebGLRenderer({ antialias: true });
    this.renderer.setPixelRatio(window.devicePixelRatio);
    container.appendChild(this.renderer.domElement);

    this.scene.background = new THREE.Color(0x14161a);
    this.scene.add(new THREE.AxesHelper(2));
    const grid = new THREE.GridHelper(120, 60, 0x2a2e35, 0x22262c);
    grid.rotation.x = Math.PI / 2; // lidar frame is z-up
    this.scene.add(grid);

    this.mainCamera = new THREE.PerspectiveCamera(55, 1, 0.1, 500);
    this.mainCamera.up.set(0, 0, 1);
    this.mainCamera.position.set(-12, -12, 10);

    this.controls = new OrbitControls(this.mainCamera, this.renderer.domElement);
    this.controls.target.copy(this.focus);

    const makeOrtho = () => {
      const cam = new THREE.OrthographicCamera(-8, 8, 8, -8, 0.1, 500);
      cam.up.set(0, 0, 1);
      return cam;
    };
    this.topCamera = makeOrtho();
    this.sideCamera = makeOrtho();
    this.frontCamera = makeOrtho();

    this.renderer.domElement.addEventListener("click", (ev) => this.pick(ev));
    window.addEventListener("resize", () => this.resize());
    this.resize();
    this.renderer.setAnimationLoop(() => this.render());
  }

  setState(state: SceneState): void {
    if (this.state) this.scene.remove(this.state.root);
    this.state = state;
    this.scene.add(state.root);
  }

  /** Aim the sub-views (and the orbit target) at a box center. */
  focusOn(position: [number, number, number]): void {
    this.focus.set(position[0], position[1], position[2]);
    this.controls.target.copy(this.focus);
  }

  private pick(ev: MouseEvent): void {
    if (!this.state || !this.onPick) return;
    const rect = this.renderer.domElement.getBoundingClientRect();
    const px = ev.clientX - rect.left;
    const py = ev.clientY - rect.top;
    if (py > rect.height * (1 - SUBVIEW_FRACTION)) return; // sub-view strip
    // pick the box whose projected center is nearest the click
    let best: string | null = null;
    let bestDist = 40; // px
    const v = new THREE.Vector3();
    for (const [id, obj] of this.state.boxObjects) {
      v.copy(obj.position).project(this.mainCamera);
      if (v.z > 1) continue;
      const sx = ((v.x + 1) / 2) * rect.width;
      const sy = ((1 - v.y) / 2) * rect.height * (1 - SUBVIEW_FRACTION);
      const d = Math.hypot(sx - px, sy - py);
      if (d < bestDist) {
        bestDist = d;
        best = id;
      }
    }
    if (best) this.onPick(best);
  }

  private resize(): void {
    const w = this.container.clientWidth || 800;
    const h = this.container.clientHeight || 600;
    this.renderer.setSize(w, h);
    this.mainCamera.aspect = w / (h * (1 - SUBVIEW_FRACTION));
    this.mainCamera.updateProjectionMatrix();
  }

  private renderView(cam: THREE.Camera, x: number, y: number, w: number, h: number): void {
    this.renderer.setViewport(x, y, w, h);
    this.renderer.setScissor(x, y, w, h);
    this.renderer.setScissorTest(true);
    this.renderer.render(this.scene, cam);
  }

  private render(): void {
    const size = new THREE.Vector2();
    this.renderer.getSize(size);
    const stripH = Math.floor(size.y * SUBVIEW_FRACTION);
    const mainH = size.y - stripH;

    this.controls.update();

    const f = this.focus;
    const up = (cam: THREE.OrthographicCamera, dx: number, dy: number, dz: number, upv: [number, number, number]) => {
      cam.position.set(f.x + dx, f.y + dy, f.z + dz);
      cam.up.set(...upv);
      cam.lookAt(f);
    };
    up(this.topCamera, 0, 0, 30, [1, 0, 0]);
    up(this.sideCamera, 0, -30, 0, [0, 0, 1]);
    up(this.frontCamera, 30, 0, 0, [0, 0, 1]);

    this.renderView(this.mainCamera, 0, stripH, size.x, mainH);
    const third = Math.floor(size.x / 3);
    this.renderView(this.topCamera, 0, 0, third, stripH);
    this.renderView(this.sideCamera, third, 0, third, stripH);
    this.renderView(this.frontCamera, 2 * third, 0, size.x - 2 * third, stripH);
  }
}
