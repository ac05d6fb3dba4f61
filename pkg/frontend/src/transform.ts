// Invertible mapping between slice-plane world coordinates (mm) and screen
// pixels. A slice view covers world axes (a0, a1) of the volume; zoom is
// pixels per mm, pan is a screen-space offset.

export interface SliceGeometry {
  axes: [number, number]; // world axis shown as (x, y) of the view
  origin: number[]; // volume origin, mm
  spacing: number[]; // mm per voxel
  dims: number[]; // voxels
}

export class SliceTransform {
  constructor(
    public geometry: SliceGeometry,
    public zoom: number, // px per mm
    public panX: number, // px
    public panY: number,
  ) {}

  // Fit the full slice extent into a viewport, centered.
  static fit(geometry: SliceGeometry, widthPx: number, heightPx: number): SliceTransform {
    const [a0, a1] = geometry.axes;
    const extent0 = (geometry.dims[a0] - 1) * geometry.spacing[a0] || 1;
    const extent1 = (geometry.dims[a1] - 1) * geometry.spacing[a1] || 1;
    const zoom = Math.min(widthPx / (extent0 + 2), heightPx / (extent1 + 2));
    const t = new SliceTransform(geometry, zoom, 0, 0);
    const [cx, cy] = t.toScreen([
      geometry.origin[a0] + extent0 / 2,
      geometry.origin[a1] + extent1 / 2,
    ]);
    t.panX = widthPx / 2 - cx;
    t.panY = heightPx / 2 - cy;
    return t;
  }

  toScreen(planeMm: [number, number] | number[]): [number, number] {
    const [a0, a1] = this.geometry.axes;
    const x = (planeMm[0] - this.geometry.origin[a0]) * this.zoom + this.panX;
    const y = (planeMm[1] - this.geometry.origin[a1]) * this.zoom + this.panY;
    return [x, y];
  }

  toPlaneMm(screen: [number, number] | number[]): [number, number] {
    const [a0, a1] = this.geometry.axes;
    return [
      (screen[0] - this.panX) / this.zoom + this.geometry.origin[a0],
      (screen[1] - this.panY) / this.zoom + this.geometry.origin[a1],
    ];
  }

  // World point (full dimensionality) for a screen position on this slice;
  // the off-plane coordinate comes from the current slice index.
  toWorldMm(screen: [number, number], sliceIndex: number): number[] {
    const nd = this.geometry.dims.length;
    const [a0, a1] = this.geometry.axes;
    const plane = this.toPlaneMm(screen);
    const world = new Array(nd).fill(0);
    world[a0] = plane[0];
    world[a1] = plane[1];
    if (nd === 3) {
      const off = [0, 1, 2].find((a) => a !== a0 && a !== a1)!;
      world[off] = this.geometry.origin[off] + sliceIndex * this.geometry.spacing[off];
    }
    return world;
  }

  planeOf(worldMm: number[]): [number, number] {
    const [a0, a1] = this.geometry.axes;
    return [worldMm[a0], worldMm[a1]];
  }

  zoomAt(factor: number, pivotScreen: [number, number]): void {
    const before = this.toPlaneMm(pivotScreen);
    this.zoom *= factor;
    const after = this.toScreen(before);
    this.panX += pivotScreen[0] - after[0];
    this.panY += pivotScreen[1] - after[1];
  }
}
