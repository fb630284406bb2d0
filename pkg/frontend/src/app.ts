/**
 * Flow authoring UI.
 *
 * One page: pick an object in a view, describe a motion with drags or an
 * angle, apply it to see per-view flow and warp previews, then export the
 * flow set. Every action is recorded as a gesture step so a session can be
 * replayed headlessly.
 */

import { ApiClient, ApiError, type MotionResponse, type SessionInfo, type SceneSummary } from "./api.js";
import { derivedRows } from "./format.js";
import { GestureRecorder, type GestureStep } from "./gesture.js";
import {
  rotationSpec,
  scalingSpec,
  stretchingSpec,
  translationSpec,
  validateSpec,
  type DragTuple,
  type MotionMode,
  type MotionSpec,
  type StretchLine,
} from "./motion.js";

function resolveApiBase(): string {
  const override = new URLSearchParams(window.location.search).get("api");
  return override ?? window.location.origin;
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

interface AppState {
  scene: SceneSummary | null;
  viewId: string | null;
  session: SessionInfo | null;
  drags: DragTuple[];
  stretchLine: StretchLine | null;
  lastMotion: MotionResponse | null;
}

const api = new ApiClient(resolveApiBase());
const recorder = new GestureRecorder();
const state: AppState = {
  scene: null,
  viewId: null,
  session: null,
  drags: [],
  stretchLine: null,
  lastMotion: null,
};

const stage = el<HTMLCanvasElement>("stage");
const ctx = stage.getContext("2d")!;
const baseImage = new Image();
const footprintImage = new Image();

function setStatus(text: string, isError = false): void {
  const node = el<HTMLElement>("status");
  node.textContent = text;
  node.className = isError ? "error" : "";
}

function record(step: GestureStep): void {
  recorder.record(step);
  el<HTMLTextAreaElement>("script-out").value = recorder.toJson();
}

// ---- rendering ----------------------------------------------------------

function redraw(): void {
  ctx.clearRect(0, 0, stage.width, stage.height);
  if (baseImage.src) ctx.drawImage(baseImage, 0, 0);
  if (state.session && footprintImage.src) {
    ctx.save();
    ctx.globalAlpha = 0.35;
    ctx.drawImage(footprintImage, 0, 0);
    ctx.restore();
  }
  ctx.lineWidth = 2;
  ctx.strokeStyle = "#ff9f1c";
  ctx.fillStyle = "#ff9f1c";
  for (const [x, y, dx, dy] of state.drags) {
    ctx.beginPath();
    ctx.arc(x, y, 3, 0, Math.PI * 2);
    ctx.fill();
    ctx.beginPath();
    ctx.moveTo(x, y);
    ctx.lineTo(x + dx, y + dy);
    ctx.stroke();
  }
  if (state.stretchLine) {
    const [[x1, y1], [x2, y2]] = state.stretchLine;
    ctx.strokeStyle = "#2ec4b6";
    ctx.setLineDash([6, 4]);
    ctx.beginPath();
    ctx.moveTo(x1, y1);
    ctx.lineTo(x2, y2);
    ctx.stroke();
    ctx.setLineDash([]);
  }
  el<HTMLElement>("drag-count").textContent =
    `${state.drags.length} drag(s)` + (state.stretchLine ? ", line set" : "");
}

function renderDerived(motion: MotionResponse | null): void {
  const table = el<HTMLTableElement>("derived");
  table.innerHTML = "";
  if (!motion) return;
  for (const row of derivedRows(motion.derived)) {
    const tr = table.insertRow();
    tr.insertCell().textContent = row.key;
    tr.insertCell().textContent = row.text;
  }
}

function renderPreviews(motion: MotionResponse | null): void {
  const grid = el<HTMLElement>("previews");
  grid.innerHTML = "";
  if (!motion) return;
  for (const [vid, preview] of Object.entries(motion.previews)) {
    for (const [title, uri] of [
      [`${vid} flow`, preview.flow],
      [`${vid} warped`, preview.warped],
    ] as const) {
      const cell = document.createElement("figure");
      const img = document.createElement("img");
      img.src = uri;
      const caption = document.createElement("figcaption");
      caption.textContent = title;
      cell.append(img, caption);
      grid.appendChild(cell);
    }
  }
}

function renderThumbs(scene: SceneSummary): void {
  const strip = el<HTMLElement>("thumbs");
  strip.innerHTML = "";
  for (const view of scene.views) {
    const img = document.createElement("img");
    img.src = view.thumbnail;
    img.title = view.view_id;
    img.className = view.view_id === state.viewId ? "active" : "";
    img.addEventListener("click", () => void selectView(view.view_id));
    strip.appendChild(img);
  }
}

// ---- scene and session --------------------------------------------------

async function selectView(viewId: string): Promise<void> {
  const image = await api.viewImage(viewId);
  state.viewId = viewId;
  state.session = null;
  state.drags = [];
  state.stretchLine = null;
  footprintImage.removeAttribute("src");
  baseImage.onload = () => {
    stage.width = baseImage.naturalWidth;
    stage.height = baseImage.naturalHeight;
    redraw();
  };
  baseImage.src = image.image;
  if (state.scene) renderThumbs(state.scene);
  renderDerived(null);
  renderPreviews(null);
  setStatus(`view ${viewId}: click the object to select it`);
}

async function pickAt(x: number, y: number): Promise<void> {
  if (!state.viewId) return;
  const picked = await api.pick(state.viewId, Math.round(x), Math.round(y));
  if (picked.label === null) {
    setStatus("nothing there, click on a labeled surface");
    return;
  }
  const session = await api.openSession(state.viewId, picked.label);
  state.session = session;
  state.drags = [];
  state.stretchLine = null;
  record({ kind: "select", view: session.view, label: session.label });
  footprintImage.onload = redraw;
  footprintImage.src = session.footprint;
  setStatus(`label ${session.label} selected in ${session.view}`);
}

// ---- motion assembly ----------------------------------------------------

function currentMode(): MotionMode {
  return el<HTMLSelectElement>("mode").value as MotionMode;
}

function brushRadius(): number | undefined {
  const raw = el<HTMLInputElement>("brush").value.trim();
  if (raw === "" || raw === "0") return undefined;
  return Number(raw);
}

function buildSpec(): { spec: MotionSpec; step: GestureStep } | string {
  if (!state.session) return "select an object first";
  const view = state.session.view;
  const mode = currentMode();
  const brush = brushRadius();

  if (mode === "rotation") {
    const angle = Number(el<HTMLInputElement>("angle").value);
    return {
      spec: rotationSpec(view, angle),
      step: { kind: "rotate", angle_deg: angle },
    };
  }
  if (mode === "translation") {
    return {
      spec: translationSpec(view, state.drags, brush),
      step: { kind: "translate", drags: [...state.drags], brush_radius: brush },
    };
  }
  if (mode === "scaling") {
    const scaleMode = el<HTMLSelectElement>("scale-mode").value as "shrink" | "enlarge";
    const anchor = el<HTMLSelectElement>("scale-anchor").value as "origin" | "centroid";
    return {
      spec: scalingSpec(view, state.drags, scaleMode, anchor, brush),
      step: {
        kind: "scale",
        drags: [...state.drags],
        scale_mode: scaleMode,
        scale_anchor: anchor,
        brush_radius: brush,
      },
    };
  }
  if (!state.stretchLine) return "shift+drag to set the stretch line";
  const clamp = el<HTMLInputElement>("clamp").checked;
  return {
    spec: stretchingSpec(view, state.drags, state.stretchLine, clamp, brush),
    step: {
      kind: "stretch",
      drags: [...state.drags],
      stretch_line: state.stretchLine,
      clamp_stretch: clamp,
      brush_radius: brush,
    },
  };
}

async function applyMotion(): Promise<void> {
  const built = buildSpec();
  if (typeof built === "string") {
    setStatus(built, true);
    return;
  }
  const problems = validateSpec(built.spec);
  if (problems.length > 0) {
    setStatus(problems.join("; "), true);
    return;
  }
  setStatus("estimating flows...");
  const motion = await api.applyMotion(
    state.session!.session_id,
    JSON.parse(JSON.stringify(built.spec)),
  );
  state.lastMotion = motion;
  record(built.step);
  renderDerived(motion);
  renderPreviews(motion);
  setStatus(`revision ${motion.revision} applied`);
}

async function doExport(): Promise<void> {
  if (!state.session) {
    setStatus("nothing to export", true);
    return;
  }
  const name = el<HTMLInputElement>("export-name").value.trim() || undefined;
  const result = await api.exportFlows(state.session.session_id, name);
  record({ kind: "export", name });
  setStatus(`wrote ${result.files.length} files to ${result.out_dir}`);
}

// ---- canvas input -------------------------------------------------------

function canvasPoint(event: MouseEvent): [number, number] {
  const rect = stage.getBoundingClientRect();
  const x = ((event.clientX - rect.left) / rect.width) * stage.width;
  const y = ((event.clientY - rect.top) / rect.height) * stage.height;
  return [x, y];
}

let downAt: [number, number] | null = null;
let downShift = false;

stage.addEventListener("mousedown", (event) => {
  downAt = canvasPoint(event);
  downShift = event.shiftKey;
});

stage.addEventListener("mouseup", (event) => {
  if (!downAt) return;
  const [x0, y0] = downAt;
  const [x1, y1] = canvasPoint(event);
  downAt = null;
  const moved = Math.hypot(x1 - x0, y1 - y0) > 3;
  if (!moved) {
    void pickAt(x1, y1).catch(showError);
    return;
  }
  if (downShift) {
    state.stretchLine = [
      [x0, y0],
      [x1, y1],
    ];
  } else {
    state.drags.push([x0, y0, x1 - x0, y1 - y0]);
  }
  redraw();
});

function showError(err: unknown): void {
  if (err instanceof ApiError) {
    setStatus(err.message, true);
  } else {
    setStatus(String(err), true);
  }
}

// ---- wiring -------------------------------------------------------------

function syncModeInputs(): void {
  const mode = currentMode();
  el<HTMLElement>("row-angle").hidden = mode !== "rotation";
  el<HTMLElement>("row-scale").hidden = mode !== "scaling";
  el<HTMLElement>("row-stretch").hidden = mode !== "stretching";
  el<HTMLElement>("row-brush").hidden = mode === "rotation";
}

el<HTMLSelectElement>("mode").addEventListener("change", syncModeInputs);
el<HTMLButtonElement>("apply").addEventListener("click", () => void applyMotion().catch(showError));
el<HTMLButtonElement>("export").addEventListener("click", () => void doExport().catch(showError));
el<HTMLButtonElement>("clear-drags").addEventListener("click", () => {
  state.drags = [];
  state.stretchLine = null;
  redraw();
});

async function boot(): Promise<void> {
  const scene = await api.scene();
  state.scene = scene;
  el<HTMLElement>("scene-name").textContent = scene.name;
  renderThumbs(scene);
  syncModeInputs();
  if (scene.views.length > 0) await selectView(scene.views[0]!.view_id);
}

void boot().catch(showError);
