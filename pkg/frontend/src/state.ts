// View state shared by the render loop and the network layer. Result
// documents apply only when their revision is not older than the newest
// already shown (monotone revision display).

import type { ResultDoc, ResultPayload, SeedInfo } from './protocol.js';

export interface SeedHandle {
  id: string; // 'primary' or refinement id
  positionMm: number[];
}

export interface ViewState {
  sessionId: string | null;
  dims: number[];
  spacing: number[];
  origin: number[];
  ndim: number;
  sliceIndices: number[]; // active slice per axis (3D); [0] for 2D
  primary: SeedHandle | null;
  refinements: SeedHandle[];
  cornerOffsets: number[][]; // template corners, mm offsets from the primary
  contourMm: number[][] | null; // 2D result polyline
  outlinesByAxis: Record<number, number[][][]>; // 3D contour-on-slice
  shownRevision: number;
  latestSentRevision: number;
  stale: boolean;
  latencyMs: number | null;
  error: string | null;
  offline: boolean;
  resultLog: { kind: 'applied' | 'dropped-stale'; revision: number }[];
}

export function emptyViewState(): ViewState {
  return {
    sessionId: null,
    dims: [],
    spacing: [],
    origin: [],
    ndim: 2,
    sliceIndices: [0, 0, 0],
    primary: null,
    refinements: [],
    cornerOffsets: [],
    contourMm: null,
    outlinesByAxis: {},
    shownRevision: 0,
    latestSentRevision: 0,
    stale: false,
    latencyMs: null,
    error: null,
    offline: false,
    resultLog: [],
  };
}

export function applySeeds(state: ViewState, primary: number[] | null, refinements: SeedInfo[]): void {
  state.primary = primary ? { id: 'primary', positionMm: primary } : null;
  state.refinements = refinements.map((s) => ({ id: s.id, positionMm: s.position_mm }));
}

// Returns true when the document updated the view; stale documents (older
// than what is already on screen) are dropped and logged.
export function applyResult(state: ViewState, doc: ResultDoc): boolean {
  if (doc.result === null) {
    state.stale = doc.stale;
    state.error = doc.error ?? null;
    return false;
  }
  if (doc.revision < state.shownRevision) {
    state.resultLog.push({ kind: 'dropped-stale', revision: doc.revision });
    return false;
  }
  state.shownRevision = doc.revision;
  state.stale = doc.stale || doc.revision < state.latestSentRevision;
  state.error = doc.error ?? null;
  const payload: ResultPayload = doc.result;
  state.contourMm = payload.contour_mm ?? null;
  state.latencyMs = payload.timing_ms['total_ms'] ?? null;
  state.resultLog.push({ kind: 'applied', revision: doc.revision });
  return true;
}

export function revisionsMonotone(state: ViewState): boolean {
  let last = -1;
  for (const entry of state.resultLog) {
    if (entry.kind === 'applied') {
      if (entry.revision < last) return false;
      last = entry.revision;
    }
  }
  return true;
}

export function nearestHandle(
  state: ViewState,
  planeMm: [number, number],
  project: (worldMm: number[]) => [number, number],
  screenPos: [number, number],
  radiusPx: number,
): SeedHandle | null {
  let best: SeedHandle | null = null;
  let bestD = radiusPx * radiusPx;
  const handles = state.primary ? [state.primary, ...state.refinements] : state.refinements;
  for (const h of handles) {
    const [hx, hy] = project(h.positionMm);
    const d = (hx - screenPos[0]) ** 2 + (hy - screenPos[1]) ** 2;
    if (d <= bestD) {
      bestD = d;
      best = h;
    }
  }
  return best;
}
