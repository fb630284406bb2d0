/**
 * Gesture recording and replay.
 *
 * Every user action that changes authoring state is recorded as one step.
 * A recorded script can be replayed headlessly against the API, which is
 * how the export contract is tested: replaying a script must leave the
 * same bytes on disk as the command-line path for the equivalent motion.
 */

import type {
  AuthoringApi,
  ExportResponse,
  JsonValue,
  MotionResponse,
  SessionInfo,
} from "./api.js";
import { derivedRows, type DerivedRow } from "./format.js";
import {
  rotationSpec,
  scalingSpec,
  specToJson,
  stretchingSpec,
  translationSpec,
  type DragTuple,
  type MotionSpec,
  type StretchLine,
} from "./motion.js";

export type GestureStep =
  | { kind: "select"; view: string; label: number }
  | { kind: "translate"; drags: DragTuple[]; brush_radius?: number }
  | { kind: "rotate"; angle_deg: number }
  | {
      kind: "scale";
      drags: DragTuple[];
      scale_mode: "shrink" | "enlarge";
      scale_anchor?: "origin" | "centroid";
      brush_radius?: number;
    }
  | {
      kind: "stretch";
      drags: DragTuple[];
      stretch_line: StretchLine;
      clamp_stretch?: boolean;
      brush_radius?: number;
    }
  | { kind: "export"; name?: string };

export interface GestureScript {
  steps: GestureStep[];
}

export class GestureRecorder {
  private steps: GestureStep[] = [];

  record(step: GestureStep): void {
    this.steps.push(step);
  }

  clear(): void {
    this.steps = [];
  }

  get length(): number {
    return this.steps.length;
  }

  toScript(): GestureScript {
    return { steps: [...this.steps] };
  }

  toJson(): string {
    return JSON.stringify(this.toScript(), null, 2);
  }
}

export function parseScript(text: string): GestureScript {
  const data = JSON.parse(text) as GestureScript;
  if (!data || !Array.isArray(data.steps)) {
    throw new Error("gesture script needs a steps array");
  }
  return data;
}

/** What the UI would be showing after a replay finishes. */
export interface ReplayOutcome {
  session: SessionInfo | null;
  lastMotion: MotionResponse | null;
  /** Derived panel rows exactly as rendered. */
  displayed: DerivedRow[];
  exports: ExportResponse[];
}

function stepToSpec(step: GestureStep, view: string): MotionSpec | null {
  switch (step.kind) {
    case "translate":
      return translationSpec(view, step.drags, step.brush_radius);
    case "rotate":
      return rotationSpec(view, step.angle_deg);
    case "scale":
      return scalingSpec(view, step.drags, step.scale_mode, step.scale_anchor, step.brush_radius);
    case "stretch":
      return stretchingSpec(
        view,
        step.drags,
        step.stretch_line,
        step.clamp_stretch,
        step.brush_radius,
      );
    default:
      return null;
  }
}

/**
 * Drive the API through the recorded steps in order. Enforces the same
 * sequencing the UI does: a motion needs an open session and an export
 * needs an applied motion.
 */
export async function replayScript(
  api: AuthoringApi,
  script: GestureScript,
): Promise<ReplayOutcome> {
  let session: SessionInfo | null = null;
  let lastMotion: MotionResponse | null = null;
  const exports: ExportResponse[] = [];

  for (const [index, step] of script.steps.entries()) {
    if (step.kind === "select") {
      session = await api.openSession(step.view, step.label);
      lastMotion = null;
      continue;
    }
    if (session === null) {
      throw new Error(`step ${index} (${step.kind}) before any selection`);
    }
    if (step.kind === "export") {
      if (lastMotion === null) {
        throw new Error(`step ${index} exports with no motion applied`);
      }
      exports.push(await api.exportFlows(session.session_id, step.name));
      continue;
    }
    const spec = stepToSpec(step, session.view);
    if (spec === null) {
      throw new Error(`step ${index} has unknown kind`);
    }
    lastMotion = await api.applyMotion(session.session_id, specToJson(spec));
  }

  const displayed = lastMotion
    ? derivedRows(lastMotion.derived as Record<string, JsonValue>)
    : [];
  return { session, lastMotion, displayed, exports };
}
