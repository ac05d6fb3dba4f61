"""Turn a ray lattice plus image intensities into a flow network.

Construction summary: node cost c(r, k) = |I(r, k) - mu| where mu is the
mean intensity in a ball around the primary seed. Terminal capacities come
from the sign split of the per-node potential v(r, k) = c(r, k) - lambda
(lambda = mean node cost over depths k >= 1), so the cut cost of a prefix
boundary vector telescopes to sum_r sum_{k <= b_r} (c - lambda): nodes whose
intensity resembles the seed region pull the boundary outward, dissimilar
nodes push it inward, and the minimum sits at the object/background
transition. Depth-0 nodes are INF-tied to the source (the primary seed is
inside the object by contract). Intra arcs (INF, outer to inner) force one
cut per ray; symmetric inter arcs between adjacent rays bound the boundary
depth difference by delta. Refinement seeds wire their snapped node's prefix
to the source and suffix to the sink with INF arcs, forcing the cut through
the chosen node.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ValidationError
from .flownet import INF, SINK, SOURCE, FlowNetwork, rebuild_with
from .imaging import ScalarGrid, sample_at, sample_points
from .templates import NodeIndex, RayGeometry, Template, closest_node


@dataclass(frozen=True)
class BuildConfig:
    """Lattice size and cost-model parameters for one segmentation pass."""

    delta: int = 2
    rays: object = 30  # int (2D) or (lat, lon) tuple (3D)
    nodes_per_ray: int = 30
    mean_radius_mm: float = 4.0
    include_refinement_in_mean: bool = False

    def __post_init__(self):
        if not isinstance(self.delta, (int, np.integer)) or self.delta < 0:
            raise ValidationError("delta must be a non-negative integer")
        if self.delta > self.nodes_per_ray - 1:
            raise ValidationError("delta must be <= nodes_per_ray - 1")
        if self.mean_radius_mm <= 0:
            raise ValidationError("mean_radius_mm must be positive")
        if isinstance(self.rays, (list, tuple)):
            object.__setattr__(self, "rays", tuple(int(r) for r in self.rays))
        else:
            object.__setattr__(self, "rays", int(self.rays))

    def as_dict(self):
        rays = self.rays if isinstance(self.rays, int) else list(self.rays)
        return {"delta": self.delta, "rays": rays,
                "nodes_per_ray": self.nodes_per_ray,
                "mean_radius_mm": self.mean_radius_mm,
                "include_refinement_in_mean": self.include_refinement_in_mean}

    @classmethod
    def from_dict(cls, d: dict) -> "BuildConfig":
        known = {"delta", "rays", "nodes_per_ray", "mean_radius_mm",
                 "include_refinement_in_mean"}
        unknown = set(d) - known - {"template"}
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {k: d[k] for k in known if k in d}
        if "rays" in kwargs and isinstance(kwargs["rays"], list):
            kwargs["rays"] = tuple(kwargs["rays"])
        return cls(**kwargs)


@dataclass(frozen=True)
class RefinementSeed:
    """User point on the contour; snapped to the nearest lattice node on
    every graph (re)construction."""

    id: str
    position: tuple[float, ...]
    snapped: NodeIndex | None = None


@dataclass(frozen=True)
class CostField:
    """Seed-region mean and per-node deviation costs c(r, k) = |I - mu|."""

    mu: float
    node_cost: np.ndarray  # (R, N), >= 0

    def __post_init__(self):
        nc = np.asarray(self.node_cost, dtype=np.float64)
        nc.setflags(write=False)
        object.__setattr__(self, "node_cost", nc)


class NodeMap:
    """Dense node ids for the (ray, depth) lattice: id = ray * N + depth."""

    __slots__ = ("ray_count", "nodes_per_ray")

    def __init__(self, ray_count: int, nodes_per_ray: int):
        self.ray_count = ray_count
        self.nodes_per_ray = nodes_per_ray

    @property
    def count(self) -> int:
        return self.ray_count * self.nodes_per_ray

    def id(self, ray: int, depth: int) -> int:
        return ray * self.nodes_per_ray + depth

    def node_index(self, node_id: int) -> NodeIndex:
        return NodeIndex(node_id // self.nodes_per_ray, node_id % self.nodes_per_ray)


def _ball_voxel_values(grid: ScalarGrid, center, radius: float) -> np.ndarray:
    """Stored values of voxels whose center lies within radius of a point."""
    nd = grid.ndim
    lo_idx = []
    hi_idx = []
    for a in range(nd):
        lo = int(np.ceil((center[a] - radius - grid.origin[a]) / grid.spacing[a]))
        hi = int(np.floor((center[a] + radius - grid.origin[a]) / grid.spacing[a]))
        lo_idx.append(max(lo, 0))
        hi_idx.append(min(hi, grid.dims[a] - 1))
    if any(lo > hi for lo, hi in zip(lo_idx, hi_idx)):
        return np.empty(0)
    axes = [np.arange(lo, hi + 1) for lo, hi in zip(lo_idx, hi_idx)]
    idx = np.meshgrid(*axes, indexing="ij")
    d2 = sum(((idx[a] * grid.spacing[a] + grid.origin[a]) - center[a]) ** 2
             for a in range(nd))
    inside = d2 <= radius * radius
    return grid.values[tuple(i[inside] for i in idx)]


def estimate_mean(grid: ScalarGrid, primary_seed, refinement_seeds,
                  cfg: BuildConfig) -> float:
    """Mean stored intensity over voxel centers within mean_radius_mm of the
    primary seed (union of balls over all seeds when the flag is set).
    An empty ball falls back to the interpolated value at the seed."""
    centers = [primary_seed]
    if cfg.include_refinement_in_mean:
        centers += [s.position for s in refinement_seeds]
    if len(centers) == 1:
        vals = _ball_voxel_values(grid, primary_seed, cfg.mean_radius_mm)
        if vals.size == 0:
            return sample_at(grid, primary_seed)
        return float(vals.mean())
    # union of balls: dedupe voxels by flat index
    nd = grid.ndim
    flat_sets = []
    for c in centers:
        lo = [max(int(np.ceil((c[a] - cfg.mean_radius_mm - grid.origin[a])
                              / grid.spacing[a])), 0) for a in range(nd)]
        hi = [min(int(np.floor((c[a] + cfg.mean_radius_mm - grid.origin[a])
                               / grid.spacing[a])), grid.dims[a] - 1)
              for a in range(nd)]
        if any(l > h for l, h in zip(lo, hi)):
            continue
        axes = [np.arange(l, h + 1) for l, h in zip(lo, hi)]
        idx = np.meshgrid(*axes, indexing="ij")
        d2 = sum(((idx[a] * grid.spacing[a] + grid.origin[a]) - c[a]) ** 2
                 for a in range(nd))
        inside = d2 <= cfg.mean_radius_mm**2
        flat = np.ravel_multi_index(tuple(i[inside] for i in idx), grid.dims)
        flat_sets.append(flat)
    if not flat_sets:
        return sample_at(grid, primary_seed)
    flat = np.unique(np.concatenate(flat_sets))
    if flat.size == 0:
        return sample_at(grid, primary_seed)
    return float(grid.values.ravel()[flat].mean())


def compute_costs(grid: ScalarGrid, geom: RayGeometry, mu: float) -> CostField:
    """Sample intensities at every lattice node and take |I - mu|."""
    pts = geom.positions.reshape(-1, geom.ndim)
    intensities = sample_points(grid, pts)
    cost = np.abs(intensities - mu).reshape(geom.ray_count, geom.nodes_per_ray)
    return CostField(mu, cost)


def terminal_weights(cost: CostField):
    """Terminal arcs per node under the balance rule.

    Depth 0: INF arc SOURCE -> (r, 0). For k >= 1 the potential
    v = c(r, k) - lambda (lambda = mean of c over k >= 1) emits
    SOURCE -> (r, k) with capacity -v when v < 0, (r, k) -> SINK with
    capacity v when v > 0, and nothing when v == 0.

    Returns (tails, heads, caps) arrays over dense node ids r * N + k.
    """
    c = cost.node_cost
    R, N = c.shape
    node_ids = (np.arange(R) * N)[:, None] + np.arange(N)[None, :]
    tails = [np.full(R, SOURCE, dtype=np.int64)]
    heads = [node_ids[:, 0].astype(np.int64)]
    caps = [np.full(R, INF)]
    if N > 1:
        lam = float(c[:, 1:].mean())
        v = c[:, 1:] - lam
        ids = node_ids[:, 1:]
        neg = v < 0
        pos = v > 0
        tails.append(np.full(int(neg.sum()), SOURCE, dtype=np.int64))
        heads.append(ids[neg].astype(np.int64))
        caps.append(-v[neg])
        tails.append(ids[pos].astype(np.int64))
        heads.append(np.full(int(pos.sum()), SINK, dtype=np.int64))
        caps.append(v[pos])
    return (np.concatenate(tails), np.concatenate(heads), np.concatenate(caps))


def assemble_network(geom: RayGeometry, cost: CostField,
                     cfg: BuildConfig) -> tuple[FlowNetwork, NodeMap]:
    """Full network: INF intra arcs (outer to inner), symmetric INF inter arcs
    clamped at depth 0, and the terminal arcs."""
    R, N = geom.ray_count, geom.nodes_per_ray
    if cost.node_cost.shape != (R, N):
        raise ValidationError("cost field does not match the lattice")
    nm = NodeMap(R, N)
    delta = cfg.delta

    # intra: (r, k) -> (r, k-1) for k >= 1
    base = np.arange(R, dtype=np.int64) * N
    k = np.arange(1, N, dtype=np.int64)
    intra_tails = (base[:, None] + k[None, :]).ravel()
    intra_heads = (base[:, None] + (k - 1)[None, :]).ravel()

    # inter: both directions for every adjacent ray pair, every depth
    pairs = np.asarray(geom.adjacency, dtype=np.int64)
    kk = np.arange(N, dtype=np.int64)
    tgt = np.maximum(kk - delta, 0)
    a_ids = pairs[:, 0][:, None] * N + kk[None, :]
    b_ids = pairs[:, 1][:, None] * N + kk[None, :]
    a_tgt = pairs[:, 0][:, None] * N + tgt[None, :]
    b_tgt = pairs[:, 1][:, None] * N + tgt[None, :]
    inter_tails = np.concatenate([a_ids.ravel(), b_ids.ravel()])
    inter_heads = np.concatenate([b_tgt.ravel(), a_tgt.ravel()])

    term_tails, term_heads, term_caps = terminal_weights(cost)

    tails = np.concatenate([intra_tails, inter_tails, term_tails])
    heads = np.concatenate([intra_heads, inter_heads, term_heads])
    caps = np.concatenate([np.full(intra_tails.size, INF),
                           np.full(inter_tails.size, INF),
                           term_caps])
    return FlowNetwork.from_arrays(nm.count, tails, heads, caps), nm


def snap_refinements(geom: RayGeometry, seeds) -> list[RefinementSeed]:
    """Re-snap every refinement seed to the nearest node of a fresh lattice."""
    return [replace(s, snapped=closest_node(geom, s.position)) for s in seeds]


def apply_refinement(net: FlowNetwork, node_map: NodeMap, seed: RefinementSeed,
                     geom: RayGeometry) -> FlowNetwork:
    """Force the cut through the seed's snapped node (r, k): INF source arcs
    for depths <= k, INF sink arcs for depths > k, and the intra arc from the
    direct successor removed (a no-op safety edit under this arc orientation;
    nothing is removed at k = N - 1). Contradictory seeds surface as the
    infeasible-cut error at solve time."""
    if seed.snapped is None:
        raise ValidationError(f"refinement seed {seed.id!r} is not snapped")
    r, k = seed.snapped
    N = node_map.nodes_per_ray
    if not (0 <= r < node_map.ray_count and 0 <= k < N):
        raise ValidationError(f"snapped node {seed.snapped} outside the lattice")
    extra = [(SOURCE, node_map.id(r, j), INF) for j in range(k + 1)]
    extra += [(node_map.id(r, j), SINK, INF) for j in range(k + 1, N)]
    removed = []
    if k + 1 < N:
        removed.append((node_map.id(r, k + 1), node_map.id(r, k)))
    return rebuild_with(net, extra_arcs=extra, removed_arcs=removed)


def config_doc(cfg: BuildConfig, template: Template | None = None) -> dict:
    """Serializable config document (delta, rays, nodes_per_ray,
    mean_radius_mm, include_refinement_in_mean, template)."""
    from .templates import format_template_doc

    doc = cfg.as_dict()
    if template is not None:
        doc["template"] = format_template_doc(template)
    return doc


def config_from_doc(doc: dict) -> tuple[BuildConfig, Template | None]:
    from .templates import parse_template_doc

    cfg = BuildConfig.from_dict({k: v for k, v in doc.items() if k != "template"})
    template = parse_template_doc(doc["template"]) if "template" in doc else None
    return cfg, template
