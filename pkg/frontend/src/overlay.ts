// Overlay painting on a minimal 2D-context interface so the logic stays
// testable without a real canvas. Figure conventions: contour red, primary
// seed green, refinement seeds white, template corners yellow.

import type { SliceTransform } from './transform.js';
import type { ViewState } from './state.js';

export interface Ctx2D {
  strokeStyle: string | CanvasGradient | CanvasPattern;
  fillStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  closePath(): void;
  stroke(): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  fill(): void;
}

export const COLORS = {
  contour: '#e53935',
  primary: '#43a047',
  refinement: '#fafafa',
  corners: '#fdd835',
};

function drawPolyline(ctx: Ctx2D, pts: [number, number][], close: boolean, color: string): void {
  if (pts.length < 2) return;
  ctx.strokeStyle = color;
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.moveTo(pts[0][0], pts[0][1]);
  for (let i = 1; i < pts.length; i++) {
    ctx.lineTo(pts[i][0], pts[i][1]);
  }
  if (close) ctx.closePath();
  ctx.stroke();
}

function drawDot(ctx: Ctx2D, x: number, y: number, r: number, color: string): void {
  ctx.fillStyle = color;
  ctx.beginPath();
  ctx.arc(x, y, r, 0, 2 * Math.PI);
  ctx.fill();
}

function drawCross(ctx: Ctx2D, x: number, y: number, arm: number, color: string): void {
  ctx.strokeStyle = color;
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.moveTo(x - arm, y);
  ctx.lineTo(x + arm, y);
  ctx.moveTo(x, y - arm);
  ctx.lineTo(x, y + arm);
  ctx.stroke();
}

// Screen-space contour vertices for a view; null when the state has no
// drawable contour for this transform's plane.
export function contourScreenPoints(
  state: ViewState,
  transform: SliceTransform,
  axis: number,
): [number, number][][] {
  if (state.ndim === 2) {
    if (!state.contourMm) return [];
    return [state.contourMm.map((p) => transform.toScreen(p))];
  }
  const outlines = state.outlinesByAxis[axis] ?? [];
  return outlines.map((loop) => loop.map((p) => transform.toScreen(p)));
}

export function renderOverlay(ctx: Ctx2D, state: ViewState, transform: SliceTransform, axis: number): void {
  for (const loop of contourScreenPoints(state, transform, axis)) {
    drawPolyline(ctx, loop, true, COLORS.contour);
  }
  if (state.primary) {
    const [px, py] = transform.toScreen(transform.planeOf(state.primary.positionMm));
    for (const corner of state.cornerOffsets) {
      // corners are 2D offsets in the view plane around the primary seed
      const [cx, cy] = transform.toScreen([
        transform.planeOf(state.primary.positionMm)[0] + corner[0],
        transform.planeOf(state.primary.positionMm)[1] + corner[1],
      ]);
      drawCross(ctx, cx, cy, 5, COLORS.corners);
    }
    drawDot(ctx, px, py, 5, COLORS.primary);
  }
  for (const seed of state.refinements) {
    const [sx, sy] = transform.toScreen(transform.planeOf(seed.positionMm));
    drawDot(ctx, sx, sy, 4, COLORS.refinement);
  }
}
