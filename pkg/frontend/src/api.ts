/**
 * Typed client for the authoring session API. The base URL defaults to the
 * page origin; the dev setup serves this UI from a static file server on a
 * different port, so it can be overridden (see resolveApiBase in app.ts).
 */

export type JsonValue =
  | string
  | number
  | boolean
  | null
  | JsonValue[]
  | { [key: string]: JsonValue };

export interface ViewSummary {
  view_id: string;
  width: number;
  height: number;
  thumbnail: string;
}

export interface SceneSummary {
  name: string;
  labels: number[];
  views: ViewSummary[];
}

export interface ViewImage {
  view_id: string;
  image: string;
}

export interface PickResult {
  view: string;
  x: number;
  y: number;
  label: number | null;
}

export interface SessionInfo {
  session_id: string;
  view: string;
  label: number;
  width: number;
  height: number;
  footprint: string;
}

export interface MotionPreview {
  flow: string;
  warped: string;
}

export interface MotionResponse {
  session_id: string;
  revision: number;
  derived: Record<string, JsonValue>;
  previews: Record<string, MotionPreview>;
}

export interface FlowSetManifest {
  motion_spec: Record<string, JsonValue>;
  label: number;
  derived: Record<string, JsonValue>;
  views: string[];
  files: Record<string, Record<string, string>>;
}

export interface ExportResponse {
  session_id: string;
  out_dir: string;
  manifest: FlowSetManifest;
  files: string[];
}

export interface SessionState {
  session_id: string;
  view: string;
  label: number;
  revision: number;
  has_motion: boolean;
  derived: Record<string, JsonValue> | null;
  exports: string[];
  age_s: number;
}

/** The subset of the backend the UI talks to; tests substitute fakes. */
export interface AuthoringApi {
  scene(): Promise<SceneSummary>;
  viewImage(viewId: string): Promise<ViewImage>;
  pick(view: string, x: number, y: number): Promise<PickResult>;
  openSession(view: string, label: number): Promise<SessionInfo>;
  applyMotion(sessionId: string, spec: Record<string, JsonValue>): Promise<MotionResponse>;
  exportFlows(sessionId: string, name?: string): Promise<ExportResponse>;
  state(sessionId: string): Promise<SessionState>;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`${status}: ${detail}`);
    this.name = "ApiError";
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const res = await fetch(url, init);
  if (!res.ok) {
    let detail = res.statusText;
    try {
      const body = (await res.json()) as { detail?: unknown };
      if (body.detail !== undefined) detail = JSON.stringify(body.detail);
    } catch {
      // keep the status text when the error body is not JSON
    }
    throw new ApiError(res.status, detail);
  }
  return (await res.json()) as T;
}

export class ApiClient implements AuthoringApi {
  constructor(readonly baseUrl: string) {}

  scene(): Promise<SceneSummary> {
    return request<SceneSummary>(`${this.baseUrl}/scene`);
  }

  viewImage(viewId: string): Promise<ViewImage> {
    return request<ViewImage>(`${this.baseUrl}/scene/view/${encodeURIComponent(viewId)}/image`);
  }

  pick(view: string, x: number, y: number): Promise<PickResult> {
    const params = new URLSearchParams({ view, x: String(x), y: String(y) });
    return request<PickResult>(`${this.baseUrl}/scene/pick?${params}`);
  }

  openSession(view: string, label: number): Promise<SessionInfo> {
    return request<SessionInfo>(`${this.baseUrl}/session`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ view, label }),
    });
  }

  applyMotion(sessionId: string, spec: Record<string, JsonValue>): Promise<MotionResponse> {
    return request<MotionResponse>(`${this.baseUrl}/session/${sessionId}/motion`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(spec),
    });
  }

  exportFlows(sessionId: string, name?: string): Promise<ExportResponse> {
    return request<ExportResponse>(`${this.baseUrl}/session/${sessionId}/export`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(name === undefined ? {} : { name }),
    });
  }

  state(sessionId: string): Promise<SessionState> {
    return request<SessionState>(`${this.baseUrl}/session/${sessionId}/state`);
  }
}
