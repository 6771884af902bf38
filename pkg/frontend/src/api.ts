import type {
  CascadeRequest,
  CascadeResponse,
  ClassGraph,
  ClusterInfo,
  EmbeddingView,
  LayerInfo,
  ManifestSummary,
  NeighborsResponse,
  PatchesResponse,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    detail: string,
  ) {
    super(`${code}: ${detail}`);
  }
}

/** Thin typed client; the base URL is the single configuration knob. */
export class ApiClient {
  constructor(private baseUrl: string = "") {}

  manifest(): Promise<ManifestSummary> {
    return this.get("/api/manifest");
  }

  layers(): Promise<LayerInfo[]> {
    return this.get("/api/layers");
  }

  clusters(layer?: string): Promise<ClusterInfo[]> {
    const suffix = layer ? `?layer=${encodeURIComponent(layer)}` : "";
    return this.get(`/api/clusters${suffix}`);
  }

  embedding(filter: string, pinned?: string[]): Promise<EmbeddingView> {
    const params = new URLSearchParams({ filter });
    if (pinned && pinned.length) params.set("pinned", pinned.join(","));
    return this.get(`/api/embedding?${params.toString()}`);
  }

  neighbors(neuron: string, k: number): Promise<NeighborsResponse> {
    return this.get(`/api/neighbors/${encodeURIComponent(neuron)}?k=${k}`);
  }

  patches(neuron: string, limit: number): Promise<PatchesResponse> {
    return this.get(`/api/patches/${encodeURIComponent(neuron)}?limit=${limit}`);
  }

  graph(classLabel: string, minImportance: number): Promise<ClassGraph> {
    return this.get(
      `/api/graph/${encodeURIComponent(classLabel)}?min_importance=${minImportance}`,
    );
  }

  async cascade(request: CascadeRequest): Promise<CascadeResponse> {
    const response = await fetch(`${this.baseUrl}/api/cascade`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(request),
    });
    return this.unwrap(response);
  }

  private async get<T>(path: string): Promise<T> {
    const response = await fetch(this.baseUrl + path);
    return this.unwrap(response);
  }

  private async unwrap<T>(response: Response): Promise<T> {
    const body = await response.json();
    if (!response.ok) {
      throw new ApiError(
        response.status,
        String(body.error ?? "error"),
        String(body.detail ?? response.statusText),
      );
    }
    return body as T;
  }
}
