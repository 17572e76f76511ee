// Typed client for the annotation service. All segmentation math happens
// server-side; this file only moves bytes and JSON.

export interface VolumeInfo {
  volume_id: string;
  n_slices: number;
  central_index: number;
  rows: number;
  cols: number;
}

export interface RlePayload {
  rows: number;
  cols: number;
  runs: number[];
}

export interface RoiResult {
  roi_area_px: number;
  roi_area_mm2: number;
}

export interface PreviewResult {
  area_px: number;
  area_mm2: number;
  mask_rle_central: RlePayload;
}

export interface ThresholdResult {
  reference_area_px: number;
  reference_area_mm2: number;
}

export interface SliceResult {
  s: number;
  t_s: number;
  area_px: number;
}

export interface PropagateResult {
  per_slice: SliceResult[];
  percent_density: number;
}

export interface SessionSnapshot {
  session_id: string;
  volume_id: string;
  state: string;
  central_index: number;
  vertices: number[][] | null;
  roi_area_px: number | null;
  central_threshold: number | null;
  reference_area_px: number | null;
  per_slice?: SliceResult[];
  percent_density?: number;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    detail: string,
  ) {
    super(detail);
  }
}

async function fail(response: Response): Promise<never> {
  let detail = response.statusText;
  try {
    const body = await response.json();
    if (typeof body.detail === "string") detail = body.detail;
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(response.status, detail);
}

export class AnnotationApi {
  constructor(private readonly baseUrl: string = "") {}

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await fetch(this.baseUrl + path, init);
    if (!response.ok) await fail(response);
    return (await response.json()) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.json<T>(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  uploadVolume(payload: Uint8Array | ArrayBuffer): Promise<VolumeInfo> {
    return this.json<VolumeInfo>("/volumes", {
      method: "POST",
      headers: { "content-type": "application/octet-stream" },
      body: payload as BodyInit,
    });
  }

  sliceUrl(volumeId: string, sliceIndex: number): string {
    return `${this.baseUrl}/volumes/${volumeId}/slices/${sliceIndex}?window=minmax`;
  }

  createSession(volumeId: string, readerId: string): Promise<{ session_id: string }> {
    return this.post("/sessions", { volume_id: volumeId, reader_id: readerId });
  }

  snapshot(sessionId: string): Promise<SessionSnapshot> {
    return this.json(`/sessions/${sessionId}`);
  }

  setRoi(sessionId: string, vertices: [number, number][]): Promise<RoiResult> {
    return this.post(`/sessions/${sessionId}/roi`, { vertices });
  }

  preview(sessionId: string, t: number): Promise<PreviewResult> {
    return this.json(`/sessions/${sessionId}/preview?t=${encodeURIComponent(t)}`);
  }

  commitThreshold(sessionId: string, t: number): Promise<ThresholdResult> {
    return this.post(`/sessions/${sessionId}/threshold`, { t });
  }

  propagate(sessionId: string): Promise<PropagateResult> {
    return this.post(`/sessions/${sessionId}/propagate`, {});
  }

  maskSlice(sessionId: string, sliceIndex: number): Promise<RlePayload> {
    return this.json(`/sessions/${sessionId}/mask/${sliceIndex}`);
  }

  async exportSession(sessionId: string): Promise<string> {
    const response = await fetch(`${this.baseUrl}/sessions/${sessionId}/export/session`);
    if (!response.ok) await fail(response);
    return response.text();
  }

  async exportMask(sessionId: string): Promise<Uint8Array> {
    const response = await fetch(`${this.baseUrl}/sessions/${sessionId}/export/mask`);
    if (!response.ok) await fail(response);
    return new Uint8Array(await response.arrayBuffer());
  }
}
