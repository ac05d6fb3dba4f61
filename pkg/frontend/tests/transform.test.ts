import { describe, expect, it } from 'vitest';
import { SliceTransform } from '../src/transform.js';
import type { SliceGeometry } from '../src/transform.js';

const geom2d: SliceGeometry = {
  axes: [0, 1],
  origin: [0, 0],
  spacing: [1, 1],
  dims: [96, 96],
};

const geom3d: SliceGeometry = {
  axes: [0, 2],
  origin: [-10, 5, 0],
  spacing: [0.5, 1, 2],
  dims: [64, 64, 32],
};

describe('SliceTransform', () => {
  it('round-trips screen -> mm -> screen within 0.5 px', () => {
    const t = SliceTransform.fit(geom2d, 420, 420);
    let x = 7.3;
    for (let i = 0; i < 200; i++) {
      x = (x * 9301 + 49297) % 233280;
      const sx = (x / 233280) * 420;
      x = (x * 9301 + 49297) % 233280;
      const sy = (x / 233280) * 420;
      const [rx, ry] = t.toScreen(t.toPlaneMm([sx, sy]));
      expect(Math.hypot(rx - sx, ry - sy)).toBeLessThan(0.5);
    }
  });

  it('round-trips mm -> screen -> mm after zooming', () => {
    const t = SliceTransform.fit(geom3d, 300, 260);
    t.zoomAt(1.75, [120, 90]);
    t.panX += 13;
    for (const p of [
      [-10, 0],
      [5.25, 31.5],
      [0, 62],
    ]) {
      const back = t.toPlaneMm(t.toScreen(p));
      expect(Math.abs(back[0] - p[0])).toBeLessThan(1e-9);
      expect(Math.abs(back[1] - p[1])).toBeLessThan(1e-9);
    }
  });

  it('fit centers the slice extent', () => {
    const t = SliceTransform.fit(geom2d, 400, 400);
    const [cx, cy] = t.toScreen([47.5, 47.5]);
    expect(cx).toBeCloseTo(200, 6);
    expect(cy).toBeCloseTo(200, 6);
  });

  it('zoomAt keeps the pivot fixed', () => {
    const t = SliceTransform.fit(geom2d, 400, 400);
    const pivot: [number, number] = [123, 77];
    const before = t.toPlaneMm(pivot);
    t.zoomAt(2.0, pivot);
    const after = t.toScreen(before);
    expect(after[0]).toBeCloseTo(pivot[0], 9);
    expect(after[1]).toBeCloseTo(pivot[1], 9);
  });

  it('maps the slice index to the off-plane world coordinate', () => {
    const t = SliceTransform.fit(geom3d, 300, 300);
    const world = t.toWorldMm([150, 150], 12);
    expect(world.length).toBe(3);
    expect(world[1]).toBeCloseTo(5 + 12 * 1, 9);
  });
});
