"""Ground-truth comparison, brute-force oracles, and the latency benchmark.

The oracles re-derive their answers by exhaustive enumeration and never call
the solver: brute_force_min_cut scans all 2^n partitions, and
brute_force_boundary scans all N^R smoothness-feasible boundary vectors,
re-implementing the terminal weight rule locally.
"""

from __future__ import annotations

import platform
import statistics
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleCutError, ValidationError
from .flownet import SINK, SOURCE, FlowNetwork
from .imaging import Mask

BRUTE_FORCE_NODE_LIMIT = 20
BRUTE_FORCE_RAY_LIMIT = 4
BRUTE_FORCE_DEPTH_LIMIT = 6


def dice(a: Mask, b: Mask) -> float:
    """Dice similarity coefficient 2|A n B| / (|A| + |B|); two empty masks -> 1.0."""
    if a.dims != b.dims:
        raise ValidationError(f"mask dims differ: {a.dims} vs {b.dims}")
    total = int(a.labels.sum()) + int(b.labels.sum())
    if total == 0:
        return 1.0
    inter = int(np.logical_and(a.labels, b.labels).sum())
    return 2.0 * inter / total


def brute_force_min_cut(net: FlowNetwork):
    """Exact minimum s-t cut by enumerating all 2^n source-side subsets.

    Returns (value, partition) where the partition is the canonical minimal
    source set (the intersection of all optimal subsets; min-cut source sets
    are closed under intersection). INF-crossing partitions are excluded;
    if every partition crosses an INF arc, raises InfeasibleCutError.
    """
    n = net.node_count
    if n > BRUTE_FORCE_NODE_LIMIT:
        raise ValidationError(f"brute force limited to {BRUTE_FORCE_NODE_LIMIT} nodes")
    count = 1 << n
    subsets = np.arange(count, dtype=np.uint64)
    cost = np.zeros(count, dtype=np.float64)
    infinite = np.zeros(count, dtype=bool)
    one = np.uint64(1)
    for frm, to, cap in zip(net.tails, net.heads, net.caps):
        f_in = np.ones(count, dtype=bool) if frm == SOURCE else (
            (subsets >> np.uint64(frm)) & one).astype(bool)
        t_in = np.zeros(count, dtype=bool) if to == SINK else (
            (subsets >> np.uint64(to)) & one).astype(bool)
        crossing = f_in & ~t_in
        if np.isinf(cap):
            infinite |= crossing
        else:
            cost += cap * crossing
    valid = ~infinite
    if not valid.any():
        raise InfeasibleCutError("every partition crosses an INF arc")
    cost[~valid] = np.inf
    value = float(cost.min())
    optimal = subsets[cost == value]
    minimal = np.bitwise_and.reduce(optimal)
    partition = np.array([(int(minimal) >> i) & 1 == 1 for i in range(n)])
    return value, partition


def boundary_table(node_cost: np.ndarray) -> np.ndarray:
    """Per-ray cut cost of each boundary depth under the terminal weight rule.

    table[r, b] = sum of sink capacities at depths <= b plus source
    capacities at depths > b, where the per-node potential is
    v(r, k) = c(r, k) - lambda for k >= 1 and lambda is the mean node cost
    over depths k >= 1.
    """
    R, N = node_cost.shape
    lam = float(node_cost[:, 1:].mean()) if N > 1 else 0.0
    v = node_cost[:, 1:] - lam
    sink = np.maximum(v, 0.0)
    src = np.maximum(-v, 0.0)
    table = np.zeros((R, N), dtype=np.float64)
    for r in range(R):
        table[r, 0] = src[r].sum()
        for b in range(1, N):
            table[r, b] = table[r, b - 1] + v[r, b - 1]
    return table


def boundary_cost(node_cost: np.ndarray, boundary) -> float:
    """Total terminal cost of one boundary vector."""
    table = boundary_table(node_cost)
    b = np.asarray(boundary, dtype=np.int64)
    return float(table[np.arange(table.shape[0]), b].sum())


def brute_force_boundary(geom, cost, cfg):
    """Exhaustive lattice optimum: all N^R boundary vectors, smoothness-filtered.

    Ties break lexicographically (first optimal vector in lexicographic
    enumeration order). Limited to R <= 4, N <= 6.
    """
    from itertools import product

    R, N = geom.ray_count, geom.nodes_per_ray
    if R > BRUTE_FORCE_RAY_LIMIT or N > BRUTE_FORCE_DEPTH_LIMIT:
        raise ValidationError(
            f"brute force limited to R <= {BRUTE_FORCE_RAY_LIMIT}, "
            f"N <= {BRUTE_FORCE_DEPTH_LIMIT}")
    delta = cfg.delta
    table = boundary_table(cost.node_cost)
    best_vec = None
    best_cost = np.inf
    for vec in product(range(N), repeat=R):
        feasible = all(abs(vec[a] - vec[b]) <= delta for a, b in geom.adjacency)
        if not feasible:
            continue
        total = float(sum(table[r, vec[r]] for r in range(R)))
        if total < best_cost:
            best_cost = total
            best_vec = vec
    if best_vec is None:
        raise InfeasibleCutError("no smoothness-feasible boundary vector")
    return np.asarray(best_vec, dtype=np.int64), best_cost


@dataclass(frozen=True)
class BenchmarkRow:
    rays: object  # int or (lat, lon)
    nodes_per_ray: int
    node_count: int
    repetitions: int
    median_total_ms: float
    mean_total_ms: float
    phase_medians_ms: dict

    def as_dict(self):
        return {
            "rays": self.rays if isinstance(self.rays, int) else list(self.rays),
            "nodes_per_ray": self.nodes_per_ray,
            "node_count": self.node_count,
            "repetitions": self.repetitions,
            "median_total_ms": self.median_total_ms,
            "mean_total_ms": self.mean_total_ms,
            "phase_medians_ms": dict(self.phase_medians_ms),
        }


@dataclass(frozen=True)
class BenchmarkReport:
    rows: tuple
    machine: str
    notes: str = ""

    def as_dict(self):
        return {"machine": self.machine, "notes": self.notes,
                "rows": [r.as_dict() for r in self.rows]}

    def table(self) -> str:
        header = (f"{'rays':>10} {'nodes':>6} {'total':>9} {'reps':>5} "
                  f"{'median_ms':>10} {'mean_ms':>10}")
        lines = [f"machine: {self.machine}", header]
        for r in self.rows:
            rays = r.rays if isinstance(r.rays, int) else "x".join(map(str, r.rays))
            lines.append(f"{rays:>10} {r.nodes_per_ray:>6} {r.node_count:>9} "
                         f"{r.repetitions:>5} {r.median_total_ms:>10.2f} "
                         f"{r.mean_total_ms:>10.2f}")
        if self.notes:
            lines.append(self.notes)
        return "\n".join(lines) + "\n"


def machine_descriptor() -> str:
    desc = platform.platform()
    try:
        with open("/proc/cpuinfo") as fh:
            for line in fh:
                if line.lower().startswith("model name"):
                    desc += "; " + line.split(":", 1)[1].strip()
                    break
    except OSError:
        pass
    return desc


def run_benchmark(grid, template, configs, repetitions: int = 10, *,
                  delta: int = 2, mean_radius_mm: float = 4.0,
                  rng_seed: int = 0) -> BenchmarkReport:
    """Time segment() over a grid of (rays, nodes_per_ray) configs.

    Each repetition uses a fresh seed point jittered around the grid center
    (deterministic under rng_seed). Runs strictly sequentially. Reports
    medians (noise-resistant) and means (paper comparability).
    """
    from .cutbuilder import BuildConfig
    from .segmenter import SegmentationRequest, segment

    if repetitions < 10:
        raise ValidationError("benchmark repetitions must be >= 10")
    rng = np.random.default_rng(rng_seed)
    lo, hi = grid.world_bounds()
    center = (np.asarray(lo) + np.asarray(hi)) / 2.0
    rows = []
    # warm-up solve so JIT compilation never lands inside a timed repetition
    warm_cfg = BuildConfig(delta=min(delta, 2), rays=8 if grid.ndim == 2 else (4, 6),
                           nodes_per_ray=3, mean_radius_mm=mean_radius_mm)
    segment(SegmentationRequest(grid, template, tuple(center), [], warm_cfg))
    for rays, nodes in configs:
        cfg = BuildConfig(delta=delta, rays=rays, nodes_per_ray=nodes,
                          mean_radius_mm=mean_radius_mm)
        totals = []
        phases: dict[str, list] = {}
        count = (rays if isinstance(rays, int) else rays[0] * rays[1]) * nodes
        for _ in range(repetitions):
            seed = center + rng.uniform(-1.0, 1.0, size=grid.ndim)
            req = SegmentationRequest(grid, template, tuple(seed), [], cfg)
            result = segment(req)
            totals.append(result.timing["total_ms"])
            for key, val in result.timing.items():
                phases.setdefault(key, []).append(val)
        rows.append(BenchmarkRow(
            rays=rays, nodes_per_ray=nodes, node_count=count,
            repetitions=repetitions,
            median_total_ms=float(statistics.median(totals)),
            mean_total_ms=float(statistics.fmean(totals)),
            phase_medians_ms={k: float(statistics.median(v))
                              for k, v in phases.items()}))
    return BenchmarkReport(tuple(rows), machine_descriptor())
