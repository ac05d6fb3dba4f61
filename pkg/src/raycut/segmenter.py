"""One segmentation pass: rays, costs, network, constraints, solve, extract.

segment() is pure in (grid, request) up to the timing fields, which come from
a monotonic clock. Refinement seeds are re-snapped against the fresh lattice
on every call, so a dragged primary seed keeps honoring fixed refinement
points.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .cutbuilder import (
    BuildConfig,
    NodeMap,
    apply_refinement,
    assemble_network,
    compute_costs,
    estimate_mean,
    snap_refinements,
)
from .errors import InfeasibleCutError, ValidationError
from .flownet import CutLabels, max_flow
from .imaging import Mask, ScalarGrid
from .templates import RayGeometry, Template, generate_rays


@dataclass(frozen=True)
class SegmentationRequest:
    grid: ScalarGrid
    template: Template
    primary_seed: tuple[float, ...]
    refinement_seeds: list
    config: BuildConfig

    def __post_init__(self):
        lo, hi = self.grid.world_bounds()
        p = np.asarray(self.primary_seed, dtype=float)
        if p.size != self.grid.ndim:
            raise ValidationError("primary seed axis count mismatch")
        if np.any(p < lo) or np.any(p > hi):
            raise ValidationError(f"primary seed {tuple(p)} outside grid bounds")
        object.__setattr__(self, "primary_seed", tuple(float(x) for x in p))


@dataclass(frozen=True)
class SurfaceMesh:
    """Triangulated closed surface over the lat-long boundary lattice."""

    vertices: np.ndarray  # (V, 3) mm
    triangles: np.ndarray  # (F, 3) vertex indices

    def area(self) -> float:
        a = self.vertices[self.triangles[:, 0]]
        b = self.vertices[self.triangles[:, 1]]
        c = self.vertices[self.triangles[:, 2]]
        return float(np.linalg.norm(np.cross(b - a, c - a), axis=1).sum() / 2.0)


@dataclass(frozen=True)
class SegmentationResult:
    boundary: np.ndarray  # depth index per ray
    contour: object  # (R, 2) closed polyline, or SurfaceMesh in 3D
    mask: Mask
    flow_value: float
    timing: dict
    snapped_refinements: list  # NodeIndex per refinement seed
    mu: float


def extract_boundary(labels: CutLabels, geom: RayGeometry,
                     node_map: NodeMap) -> np.ndarray:
    """Outermost source-side depth per ray. Depth 0 is INF-tied to the
    source, so the maximum always exists."""
    side = np.asarray(labels.source_side).reshape(node_map.ray_count,
                                                  node_map.nodes_per_ray)
    return (node_map.nodes_per_ray - 1
            - np.argmax(side[:, ::-1], axis=1)).astype(np.int64)


def boundary_to_contour(boundary, geom: RayGeometry):
    """2D: closed polyline through the boundary nodes in ray-angle order.
    3D: quad mesh over the lat-long grid, pole rows fanned to computed pole
    apexes, then triangulated. Vertices are exactly lattice node positions."""
    b = np.asarray(boundary, dtype=np.int64)
    pts = geom.positions[np.arange(geom.ray_count), b]
    if geom.ndim == 2:
        return pts
    lat, lon = geom.lat_count, geom.lon_count
    verts = pts.reshape(lat, lon, 3)
    seed = np.asarray(geom.seed)
    radii = np.linalg.norm(verts - seed, axis=2)
    top = seed + np.array([0.0, 0.0, radii[0].mean()])
    bottom = seed - np.array([0.0, 0.0, radii[-1].mean()])
    vertices = np.concatenate([verts.reshape(-1, 3), [top], [bottom]])
    top_id = lat * lon
    bottom_id = top_id + 1

    def vid(i, j):
        return i * lon + (j % lon)

    tris = []
    for j in range(lon):
        tris.append((top_id, vid(0, j + 1), vid(0, j)))
        tris.append((bottom_id, vid(lat - 1, j), vid(lat - 1, j + 1)))
    for i in range(lat - 1):
        for j in range(lon):
            a, bq = vid(i, j), vid(i, j + 1)
            c, d = vid(i + 1, j + 1), vid(i + 1, j)
            tris.append((a, bq, c))
            tris.append((a, c, d))
    return SurfaceMesh(vertices, np.asarray(tris, dtype=np.int64))


def _boundary_radii(contour_or_surface, geom: RayGeometry) -> np.ndarray:
    seed = np.asarray(geom.seed)
    if geom.ndim == 2:
        return np.linalg.norm(np.asarray(contour_or_surface) - seed, axis=1)
    verts = contour_or_surface.vertices[: geom.ray_count]
    return np.linalg.norm(verts - seed, axis=1)


def contour_to_mask(contour_or_surface, geom: RayGeometry,
                    grid: ScalarGrid) -> Mask:
    """Star-shaped radial fill: a voxel center p is foreground iff
    |p - seed| <= rho(dir(p)), with rho interpolated between adjacent rays
    (linearly in 2D, bilinearly over the lat-long cell in 3D)."""
    rho = _boundary_radii(contour_or_surface, geom)
    seed = np.asarray(geom.seed)
    rmax = float(rho.max())
    labels = np.zeros(grid.dims, dtype=bool)

    # crop to the bounding box of the maximal radius
    lo_idx, hi_idx = [], []
    for a in range(grid.ndim):
        lo = int(np.floor((seed[a] - rmax - grid.origin[a]) / grid.spacing[a]))
        hi = int(np.ceil((seed[a] + rmax - grid.origin[a]) / grid.spacing[a]))
        lo_idx.append(max(lo, 0))
        hi_idx.append(min(hi, grid.dims[a] - 1))
    if any(lo > hi for lo, hi in zip(lo_idx, hi_idx)):
        return Mask(grid.dims, labels)
    axes = [np.arange(lo, hi + 1) for lo, hi in zip(lo_idx, hi_idx)]
    idx = np.meshgrid(*axes, indexing="ij")
    coords = [idx[a] * grid.spacing[a] + grid.origin[a] - seed[a]
              for a in range(grid.ndim)]
    dist = np.sqrt(sum(c**2 for c in coords))

    if geom.ndim == 2:
        R = geom.ray_count
        ang = np.arctan2(coords[1], coords[0]) % (2 * np.pi)
        fr = ang / (2 * np.pi) * R
        r0 = np.floor(fr).astype(np.int64) % R
        w = fr - np.floor(fr)
        rho_dir = rho[r0] * (1 - w) + rho[(r0 + 1) % R] * w
    else:
        lat, lon = geom.lat_count, geom.lon_count
        grid_rho = rho.reshape(lat, lon)
        rxy = np.sqrt(coords[0] ** 2 + coords[1] ** 2)
        theta = np.arctan2(rxy, coords[2])
        phi = np.arctan2(coords[1], coords[0]) % (2 * np.pi)
        # fractional row/column on the lat-long ray grid; rows clamp at the
        # pole caps, columns wrap in longitude
        fi = np.clip(theta / np.pi * lat - 0.5, 0.0, lat - 1.0)
        fj = phi / (2 * np.pi) * lon
        i0 = np.floor(fi).astype(np.int64)
        i1 = np.minimum(i0 + 1, lat - 1)
        wi = fi - i0
        j0 = np.floor(fj).astype(np.int64) % lon
        j1 = (j0 + 1) % lon
        wj = fj - np.floor(fj)
        rho_dir = (grid_rho[i0, j0] * (1 - wi) * (1 - wj)
                   + grid_rho[i1, j0] * wi * (1 - wj)
                   + grid_rho[i0, j1] * (1 - wi) * wj
                   + grid_rho[i1, j1] * wi * wj)
    inside = dist <= rho_dir
    labels[tuple(slice(lo, hi + 1) for lo, hi in zip(lo_idx, hi_idx))] = inside
    return Mask(grid.dims, labels)


def _conflicting_seed_ids(snapped_seeds) -> list[str]:
    by_ray: dict[int, dict[int, str]] = {}
    conflicts = []
    for s in snapped_seeds:
        r, k = s.snapped
        depths = by_ray.setdefault(r, {})
        for other_k, other_id in depths.items():
            if other_k != k:
                conflicts.extend([other_id, s.id])
        depths[k] = s.id
    seen = set()
    return [i for i in conflicts if not (i in seen or seen.add(i))]


def segment(req: SegmentationRequest) -> SegmentationResult:
    """Run the full pipeline and report per-phase timings (monotonic clock)."""
    clock = time.perf_counter
    t0 = clock()
    geom = generate_rays(req.template, req.primary_seed, req.config.rays,
                         req.config.nodes_per_ray)
    t1 = clock()
    mu = estimate_mean(req.grid, req.primary_seed, req.refinement_seeds,
                       req.config)
    cost = compute_costs(req.grid, geom, mu)
    t2 = clock()
    net, node_map = assemble_network(geom, cost, req.config)
    snapped = snap_refinements(geom, req.refinement_seeds)
    for seed in snapped:
        net = apply_refinement(net, node_map, seed, geom)
    t3 = clock()
    try:
        labels = max_flow(net)
    except InfeasibleCutError:
        ids = _conflicting_seed_ids(snapped)
        raise InfeasibleCutError(
            f"refinement seeds conflict (same ray, different depths): {ids}",
            seed_ids=ids) from None
    t4 = clock()
    boundary = extract_boundary(labels, geom, node_map)
    contour = boundary_to_contour(boundary, geom)
    mask = contour_to_mask(contour, geom, req.grid)
    t5 = clock()
    timing = {
        "rays_ms": (t1 - t0) * 1e3,
        "sampling_ms": (t2 - t1) * 1e3,
        "assembly_ms": (t3 - t2) * 1e3,
        "solve_ms": (t4 - t3) * 1e3,
        "extraction_ms": (t5 - t4) * 1e3,
        "total_ms": (t5 - t0) * 1e3,
    }
    return SegmentationResult(
        boundary=boundary, contour=contour, mask=mask,
        flow_value=labels.flow_value, timing=timing,
        snapped_refinements=[s.snapped for s in snapped], mu=mu)


def results_equal_modulo_timing(a: SegmentationResult,
                                b: SegmentationResult) -> bool:
    if not np.array_equal(a.boundary, b.boundary):
        return False
    if isinstance(a.contour, SurfaceMesh) != isinstance(b.contour, SurfaceMesh):
        return False
    if isinstance(a.contour, SurfaceMesh):
        if not (np.array_equal(a.contour.vertices, b.contour.vertices)
                and np.array_equal(a.contour.triangles, b.contour.triangles)):
            return False
    elif not np.array_equal(a.contour, b.contour):
        return False
    return (np.array_equal(a.mask.labels, b.mask.labels)
            and a.flow_value == b.flow_value
            and a.snapped_refinements == b.snapped_refinements
            and a.mu == b.mu)


def result_document(result: SegmentationResult) -> dict:
    """Serializable result: boundary, contour vertices (mm), flow, timings."""
    doc = {
        "boundary": [int(b) for b in result.boundary],
        "flow_value": result.flow_value,
        "mu": result.mu,
        "timing_ms": {k: float(v) for k, v in result.timing.items()},
        "snapped_refinements": [[int(r), int(k)]
                                for r, k in result.snapped_refinements],
    }
    if isinstance(result.contour, SurfaceMesh):
        doc["surface"] = {
            "vertices_mm": result.contour.vertices.tolist(),
            "triangles": result.contour.triangles.tolist(),
        }
    else:
        doc["contour_mm"] = np.asarray(result.contour).tolist()
    return doc
