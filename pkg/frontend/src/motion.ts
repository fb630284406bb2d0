/**
 * Motion spec construction. These mirror the JSON documents the backend
 * accepts; the backend stays the authority on validation, the checks here
 * only catch obvious mistakes before a request goes out.
 */

import type { JsonValue } from "./api.js";

export type MotionMode = "translation" | "scaling" | "rotation" | "stretching";

/** One drag gesture in reference-view pixels: start x, start y, dx, dy. */
export type DragTuple = [number, number, number, number];

/** Two endpoints of the stretch line in reference-view pixels. */
export type StretchLine = [[number, number], [number, number]];

export interface TranslationSpec {
  mode: "translation";
  reference_view: string;
  drag: DragTuple[];
  brush_radius?: number;
}

export interface ScalingSpec {
  mode: "scaling";
  reference_view: string;
  drag: DragTuple[];
  scale_mode: "shrink" | "enlarge";
  scale_anchor?: "origin" | "centroid";
  brush_radius?: number;
}

export interface RotationSpec {
  mode: "rotation";
  reference_view: string;
  angle_deg: number;
}

export interface StretchingSpec {
  mode: "stretching";
  reference_view: string;
  drag: DragTuple[];
  stretch_line: StretchLine;
  clamp_stretch?: boolean;
  brush_radius?: number;
}

export type MotionSpec = TranslationSpec | ScalingSpec | RotationSpec | StretchingSpec;

export function translationSpec(
  view: string,
  drags: DragTuple[],
  brushRadius?: number,
): TranslationSpec {
  const spec: TranslationSpec = { mode: "translation", reference_view: view, drag: drags };
  if (brushRadius !== undefined) spec.brush_radius = brushRadius;
  return spec;
}

export function rotationSpec(view: string, angleDeg: number): RotationSpec {
  return { mode: "rotation", reference_view: view, angle_deg: angleDeg };
}

export function scalingSpec(
  view: string,
  drags: DragTuple[],
  scaleMode: "shrink" | "enlarge",
  anchor?: "origin" | "centroid",
  brushRadius?: number,
): ScalingSpec {
  const spec: ScalingSpec = {
    mode: "scaling",
    reference_view: view,
    drag: drags,
    scale_mode: scaleMode,
  };
  if (anchor !== undefined) spec.scale_anchor = anchor;
  if (brushRadius !== undefined) spec.brush_radius = brushRadius;
  return spec;
}

export function stretchingSpec(
  view: string,
  drags: DragTuple[],
  line: StretchLine,
  clamp?: boolean,
  brushRadius?: number,
): StretchingSpec {
  const spec: StretchingSpec = {
    mode: "stretching",
    reference_view: view,
    drag: drags,
    stretch_line: line,
  };
  if (clamp !== undefined) spec.clamp_stretch = clamp;
  if (brushRadius !== undefined) spec.brush_radius = brushRadius;
  return spec;
}

/** Client-side sanity checks. Returns a list of problems, empty when fine. */
export function validateSpec(spec: MotionSpec): string[] {
  const problems: string[] = [];
  if (!spec.reference_view) problems.push("no reference view selected");

  if (spec.mode === "rotation") {
    if (!Number.isFinite(spec.angle_deg)) {
      problems.push("angle is not a number");
    } else if (spec.angle_deg <= -360 || spec.angle_deg >= 360) {
      problems.push("angle must stay inside (-360, 360) degrees");
    }
    return problems;
  }

  if (spec.drag.length === 0) problems.push("drag at least once on the object");
  for (const d of spec.drag) {
    if (d.length !== 4 || d.some((v) => !Number.isFinite(v))) {
      problems.push("malformed drag entry");
      break;
    }
  }
  if (spec.brush_radius !== undefined && spec.brush_radius <= 0) {
    problems.push("brush radius must be positive");
  }

  if (spec.mode === "stretching") {
    const [a, b] = spec.stretch_line;
    if (a[0] === b[0] && a[1] === b[1]) {
      problems.push("stretch line endpoints coincide");
    }
  }
  return problems;
}

/** The motion document as the plain JSON object the endpoint expects. */
export function specToJson(spec: MotionSpec): Record<string, JsonValue> {
  return JSON.parse(JSON.stringify(spec)) as Record<string, JsonValue>;
}
