// three.js viewer: shaded mesh with per-vertex heatmap colors, gate markers,
// picking and marker dragging. All decision logic (snapping, colors, bounds)
// lives in the pure modules; this file only adapts it to WebGL and events.

import * as THREE from "three";
import { OrbitControls } from "three/addons/controls/OrbitControls.js";

import { fitBoundingBox } from "./camera.js";
import { vertexColors } from "./colormap.js";
import { MeshData, snapToFaceCorner, vertexPosition } from "./mesh.js";

export interface PickResult {
  faceIndex: number;
  point: [number, number, number];
}

export interface ViewerCallbacks {
  onPlaceGate(nodeId: number): void;
  onMoveGate(index: number, nodeId: number): void;
}

const BASE_COLOR = 0x8a97a8;
const MARKER_COLOR = 0xff5533;
const MARKER_DRAG_COLOR = 0xffaa00;

export class Viewer {
  private renderer: THREE.WebGLRenderer;
  private scene = new THREE.Scene();
  private camera: THREE.PerspectiveCamera;
  private controls: OrbitControls;
  private raycaster = new THREE.Raycaster();
  private meshObject: THREE.Mesh | null = null;
  private meshData: MeshData | null = null;
  private markers: THREE.Mesh[] = [];
  private markerRadius = 1;
  private dragging: number | null = null;

  constructor(private canvas: HTMLCanvasElement, private callbacks: ViewerCallbacks) {
    this.renderer = new THREE.WebGLRenderer({ canvas, antialias: true });
    this.camera = new THREE.PerspectiveCamera(45, 1, 0.1, 1e6);
    this.scene.background = new THREE.Color(0x181c22);
    this.scene.add(new THREE.AmbientLight(0xffffff, 0.55));
    const key = new THREE.DirectionalLight(0xffffff, 1.1);
    key.position.set(1, 2, 3);
    this.scene.add(key);
    const fill = new THREE.DirectionalLight(0xffffff, 0.4);
    fill.position.set(-2, -1, -1);
    this.scene.add(fill);
    this.controls = new OrbitControls(this.camera, canvas);
    canvas.addEventListener("pointerdown", (e) => this.onPointerDown(e));
    canvas.addEventListener("pointermove", (e) => this.onPointerMove(e));
    canvas.addEventListener("pointerup", (e) => this.onPointerUp(e));
    window.addEventListener("resize", () => this.resize());
    this.resize();
    this.renderer.setAnimationLoop(() => {
      this.controls.update();
      this.renderer.render(this.scene, this.camera);
    });
  }

  resize(): void {
    const w = this.canvas.clientWidth || 800;
    const h = this.canvas.clientHeight || 600;
    this.renderer.setSize(w, h, false);
    this.camera.aspect = w / h;
    this.camera.updateProjectionMatrix();
  }

  setMesh(data: MeshData, bboxMin: number[], bboxMax: number[]): void {
    if (this.meshObject) {
      this.scene.remove(this.meshObject);
      this.meshObject.geometry.dispose();
      (this.meshObject.material as THREE.Material).dispose();
    }
    this.clearMarkers();
    this.meshData = data;
    const geometry = new THREE.BufferGeometry();
    geometry.setAttribute("position", new THREE.BufferAttribute(data.vertices, 3));
    geometry.setIndex(new THREE.BufferAttribute(data.faces, 1));
    geometry.computeVertexNormals();
    const material = new THREE.MeshStandardMaterial({
      color: BASE_COLOR,
      roughness: 0.75,
      metalness: 0.05,
      side: THREE.DoubleSide,
    });
    this.meshObject = new THREE.Mesh(geometry, material);
    this.scene.add(this.meshObject);
    const fit = fitBoundingBox(bboxMin, bboxMax, this.camera.fov);
    this.markerRadius = fit.radius / 60 || 1;
    this.camera.position.set(fit.center[0], fit.center[1] - fit.distance * 0.25,
                             fit.center[2] + fit.distance);
    this.camera.near = fit.distance / 1000;
    this.camera.far = fit.distance * 20;
    this.camera.updateProjectionMatrix();
    this.controls.target.set(...fit.center);
    this.controls.update();
  }

  /** Color vertices by field values; null restores the plain material. */
  setFieldColors(values: number[] | null, min = 0, max = 1): void {
    if (!this.meshObject) return;
    const material = this.meshObject.material as THREE.MeshStandardMaterial;
    const geometry = this.meshObject.geometry;
    if (values === null) {
      material.vertexColors = false;
      material.color.setHex(BASE_COLOR);
      geometry.deleteAttribute("color");
    } else {
      geometry.setAttribute("color", new THREE.BufferAttribute(
        vertexColors(values, min, max), 3));
      material.vertexColors = true;
      material.color.setHex(0xffffff);
    }
    material.needsUpdate = true;
  }

  syncMarkers(gates: { nodeId: number }[]): void {
    if (!this.meshData) return;
    while (this.markers.length > gates.length) {
      const m = this.markers.pop()!;
      this.scene.remove(m);
      m.geometry.dispose();
    }
    while (this.markers.length < gates.length) {
      const geometry = new THREE.SphereGeometry(this.markerRadius, 16, 12);
      const material = new THREE.MeshBasicMaterial({ color: MARKER_COLOR });
      const marker = new THREE.Mesh(geometry, material);
      this.scene.add(marker);
      this.markers.push(marker);
    }
    gates.forEach((g, i) => {
      const p = vertexPosition(this.meshData!, g.nodeId);
      this.markers[i].position.set(p[0], p[1], p[2]);
    });
  }

  private clearMarkers(): void {
    for (const m of this.markers) {
      this.scene.remove(m);
      m.geometry.dispose();
    }
    this.markers = [];
  }

  private pointerRay(event: PointerEvent): THREE.Raycaster {
    const rect = this.canvas.getBoundingClientRect();
    const ndc = new THREE.Vector2(
      ((event.clientX - rect.left) / rect.width) * 2 - 1,
      -((event.clientY - rect.top) / rect.height) * 2 + 1,
    );
    this.raycaster.setFromCamera(ndc, this.camera);
    return this.raycaster;
  }

  pickSurface(event: PointerEvent): PickResult | null {
    if (!this.meshObject) return null;
    const hits = this.pointerRay(event).intersectObject(this.meshObject);
    if (!hits.length || hits[0].faceIndex === undefined || hits[0].faceIndex === null) {
      return null;
    }
    const p = hits[0].point;
    return { faceIndex: hits[0].faceIndex, point: [p.x, p.y, p.z] };
  }

  private pickMarker(event: PointerEvent): number | null {
    const hits = this.pointerRay(event).intersectObjects(this.markers);
    if (!hits.length) return null;
    return this.markers.indexOf(hits[0].object as THREE.Mesh);
  }

  private onPointerDown(event: PointerEvent): void {
    if (event.button !== 0) return;
    const markerIndex = this.pickMarker(event);
    if (markerIndex !== null) {
      this.dragging = markerIndex;
      (this.markers[markerIndex].material as THREE.MeshBasicMaterial)
        .color.setHex(MARKER_DRAG_COLOR);
      this.controls.enabled = false;
      return;
    }
    if (!event.shiftKey) return; // plain click orbits; shift-click places
    const hit = this.pickSurface(event);
    if (!hit || !this.meshData) return; // pick miss is a no-op
    this.callbacks.onPlaceGate(snapToFaceCorner(this.meshData, hit.faceIndex, hit.point));
  }

  private onPointerMove(event: PointerEvent): void {
    if (this.dragging === null) return;
    const hit = this.pickSurface(event);
    if (hit) {
      this.markers[this.dragging].position.set(...hit.point);
    }
  }

  private onPointerUp(event: PointerEvent): void {
    if (this.dragging === null) return;
    const index = this.dragging;
    this.dragging = null;
    this.controls.enabled = true;
    (this.markers[index].material as THREE.MeshBasicMaterial).color.setHex(MARKER_COLOR);
    const hit = this.pickSurface(event);
    if (hit && this.meshData) {
      // drop re-snaps to the nearest corner of the face under the cursor
      this.callbacks.onMoveGate(index, snapToFaceCorner(this.meshData, hit.faceIndex, hit.point));
    }
  }
}
