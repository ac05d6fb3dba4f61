// Typed client for the session service. All positions are physical mm.

export interface SessionConfig {
  delta: number;
  rays: number | [number, number];
  nodes_per_ray: number;
  mean_radius_mm: number;
  template?: string;
}

export interface SeedInfo {
  id: string;
  position_mm: number[];
}

export interface SessionState {
  id: string;
  dims: number[];
  spacing: number[];
  origin: number[];
  revision: number;
  config: SessionConfig;
  template: string;
  seeds: { primary: number[] | null; refinements: SeedInfo[] };
  recompute_count: number;
  has_result: boolean;
}

export interface ResultPayload {
  boundary: number[];
  contour_mm?: number[][];
  surface?: { vertices_mm: number[][]; triangles: number[][] };
  flow_value: number;
  mu: number;
  timing_ms: Record<string, number>;
  snapped_refinements: number[][];
}

export interface ResultDoc {
  revision: number;
  stale: boolean;
  result: ResultPayload | null;
  error?: string | null;
}

export interface OutlineDoc {
  revision: number;
  stale: boolean;
  outlines: number[][][];
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class ServiceClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = (u, i) => fetch(u, i),
  ) {}

  private async call<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: { 'Content-Type': 'application/json' } };
    if (body !== undefined) {
      init.body = JSON.stringify(body);
    }
    const resp = await this.fetchImpl(this.baseUrl + path, init);
    if (!resp.ok) {
      let detail = `${resp.status}`;
      try {
        const doc = await resp.json();
        detail = doc.error ?? doc.detail ?? detail;
      } catch {
        // keep the status text
      }
      throw new ApiError(resp.status, detail);
    }
    return (await resp.json()) as T;
  }

  createSession(imageB64: string, format: string, config: SessionConfig) {
    return this.call<{ id: string; revision: number }>('POST', '/sessions', {
      image_b64: imageB64,
      format,
      config,
    });
  }

  getState(sid: string) {
    return this.call<SessionState>('GET', `/sessions/${sid}`);
  }

  postSeed(sid: string, kind: 'primary' | 'refine', positionMm: number[], clientRevision?: number) {
    return this.call<{ seed_id: string; revision: number }>('POST', `/sessions/${sid}/seeds`, {
      kind,
      position_mm: positionMm,
      client_revision: clientRevision,
    });
  }

  moveSeed(sid: string, seedId: string, positionMm: number[], clientRevision?: number) {
    return this.call<{ seed_id: string; revision: number }>(
      'PATCH',
      `/sessions/${sid}/seeds/${seedId}`,
      { position_mm: positionMm, client_revision: clientRevision },
    );
  }

  deleteSeed(sid: string, seedId: string) {
    return this.call<{ seed_id: string; revision: number }>(
      'DELETE',
      `/sessions/${sid}/seeds/${seedId}`,
    );
  }

  patchConfig(sid: string, patch: Partial<SessionConfig>) {
    return this.call<{ revision: number }>('PATCH', `/sessions/${sid}/config`, patch);
  }

  getResult(sid: string) {
    return this.call<ResultDoc>('GET', `/sessions/${sid}/result`);
  }

  getResultOutlines(sid: string, axis: number, index: number) {
    return this.call<OutlineDoc>('GET', `/sessions/${sid}/result/slice/${axis}/${index}`);
  }

  imageSliceUrl(sid: string, axis: number, index: number): string {
    return `${this.baseUrl}/sessions/${sid}/image/slice/${axis}/${index}`;
  }
}

// Template documents are `key = value` lines plus corner_mm entries; the UI
// only needs the corner offsets to draw the yellow crosses.
export function templateCornerOffsets(templateDoc: string): number[][] {
  const corners: number[][] = [];
  let kind = '';
  let extents: number[] = [];
  for (const raw of templateDoc.split('\n')) {
    const line = raw.split('#')[0].trim();
    if (!line.includes('=')) continue;
    const [key, value] = line.split('=', 2).map((s) => s.trim());
    if (key === 'kind') kind = value;
    else if (key === 'extent_mm') extents = value.split(/\s+/).map(Number);
    else if (key === 'corner_mm') corners.push(value.split(/\s+/).map(Number));
  }
  if (kind === 'rectangle' && extents.length === 2) {
    const [w, h] = [extents[0] / 2, extents[1] / 2];
    return [
      [w, h],
      [-w, h],
      [-w, -h],
      [w, -h],
    ];
  }
  return corners;
}
