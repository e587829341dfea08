// HTTP client for the prediction service. Kept DOM-free so tests can inject
// a fake fetch.

export interface GatePayload {
  node_id: number;
  opening_time: number;
}

export interface BoundingBox {
  min: number[];
  max: number[];
}

export interface MeshSummary {
  handle: string;
  vertex_count: number;
  face_count: number;
  bounding_box: BoundingBox;
}

export interface StageTimings {
  pre_processing: number;
  fill_time: number;
  deflection: number;
  total: number;
}

export interface PredictResponse {
  fill_time: number[];
  deflection?: number[];
  timings: StageTimings;
  model_versions: Record<string, string>;
}

export interface HealthResponse {
  status: string;
  missing: string[];
  model_versions: Record<string, string>;
  uptime_s: number;
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

async function errorText(response: Response): Promise<string> {
  try {
    const doc = await response.json();
    if (doc && typeof doc.error === "string") return doc.error;
  } catch {
    /* not json */
  }
  return `service responded with status ${response.status}`;
}

export class ServiceClient {
  constructor(private baseUrl: string, private fetchFn: FetchLike = fetch.bind(globalThis)) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  async uploadMesh(body: string): Promise<MeshSummary> {
    const response = await this.fetchFn(this.url("/meshes"), {
      method: "POST",
      headers: { "Content-Type": "application/octet-stream" },
      body,
    });
    if (!response.ok) throw new ApiError(response.status, await errorText(response));
    return (await response.json()) as MeshSummary;
  }

  async predict(handle: string, gates: GatePayload[],
                targets: string[] = ["fill_time", "deflection"]): Promise<PredictResponse> {
    const response = await this.fetchFn(this.url("/predict"), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ handle, gates, targets }),
    });
    if (!response.ok) throw new ApiError(response.status, await errorText(response));
    return (await response.json()) as PredictResponse;
  }

  async health(): Promise<HealthResponse> {
    const response = await this.fetchFn(this.url("/health"));
    if (!response.ok) throw new ApiError(response.status, await errorText(response));
    return (await response.json()) as HealthResponse;
  }
}
