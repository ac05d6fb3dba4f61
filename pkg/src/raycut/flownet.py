"""Capacitated directed flow network with virtual source/sink and min-cut.

The solver is a Boykov-Kolmogorov style augmenting-tree scheme; a BFS
augmenting-path fallback sits behind the ``method`` switch for differential
testing and must produce identical flow values. Labels are canonical: the
minimal source set, i.e. residual reachability from SOURCE, which is unique
regardless of which maximum flow the solver found.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _maxflow
from .errors import InfeasibleCutError, ValidationError

SOURCE = -1
SINK = -2
INF = math.inf

SOURCE_SIDE = "source"
SINK_SIDE = "sink"


class FlowNetwork:
    """Immutable arc list over node ids 0..node_count-1 plus SOURCE/SINK."""

    __slots__ = ("node_count", "tails", "heads", "caps")

    def __init__(self, node_count: int, arcs=()):
        arcs = list(arcs)
        tails = np.fromiter((a[0] for a in arcs), dtype=np.int64, count=len(arcs))
        heads = np.fromiter((a[1] for a in arcs), dtype=np.int64, count=len(arcs))
        caps = np.fromiter((a[2] for a in arcs), dtype=np.float64, count=len(arcs))
        self._init_arrays(node_count, tails, heads, caps)

    @classmethod
    def from_arrays(cls, node_count: int, tails, heads, caps) -> "FlowNetwork":
        net = cls.__new__(cls)
        net._init_arrays(node_count,
                         np.asarray(tails, dtype=np.int64),
                         np.asarray(heads, dtype=np.int64),
                         np.asarray(caps, dtype=np.float64))
        return net

    def _init_arrays(self, node_count, tails, heads, caps):
        node_count = int(node_count)
        if node_count < 1:
            raise ValidationError("network needs at least one node")
        if not (tails.size == heads.size == caps.size):
            raise ValidationError("arc array lengths differ")
        if np.any(heads == SOURCE):
            raise ValidationError("arc into SOURCE")
        if np.any(tails == SINK):
            raise ValidationError("arc out of SINK")
        for arr, what in ((tails, "tail"), (heads, "head")):
            bad = (arr >= node_count) | ((arr < 0) & (arr != SOURCE) & (arr != SINK))
            if np.any(bad):
                raise ValidationError(f"arc {what} id out of range")
        if np.any(np.isnan(caps)) or np.any(caps < 0):
            raise ValidationError("capacities must be >= 0")
        self.node_count = node_count
        tails.setflags(write=False)
        heads.setflags(write=False)
        caps.setflags(write=False)
        self.tails, self.heads, self.caps = tails, heads, caps

    @property
    def arc_count(self) -> int:
        return int(self.tails.size)

    def arcs(self):
        """Arc triples (from, to, capacity) in insertion order."""
        return [(int(f), int(t), float(c))
                for f, t, c in zip(self.tails, self.heads, self.caps)]

    def __eq__(self, other):
        return (isinstance(other, FlowNetwork)
                and self.node_count == other.node_count
                and np.array_equal(self.tails, other.tails)
                and np.array_equal(self.heads, other.heads)
                and np.array_equal(self.caps, other.caps))

    def __repr__(self):
        return f"FlowNetwork(nodes={self.node_count}, arcs={self.arc_count})"


@dataclass(frozen=True)
class CutLabels:
    """Canonical min-cut labeling: the minimal source set, plus the flow value."""

    source_side: np.ndarray  # bool per node
    flow_value: float

    def side(self, node: int) -> str:
        return SOURCE_SIDE if self.source_side[node] else SINK_SIDE


def _internal_ids(net: FlowNetwork):
    n = net.node_count
    tails = np.where(net.tails == SOURCE, n, net.tails)
    heads = np.where(net.heads == SINK, n + 1, net.heads)
    return tails, heads, n, n + 1


def max_flow(net: FlowNetwork, method: str = "bk") -> CutLabels:
    """Exact maximum flow and the canonical minimal source set.

    Raises InfeasibleCutError when every s-t cut crosses an INF arc.
    """
    if method not in ("bk", "bfs"):
        raise ValidationError(f"unknown solver method {method!r}")
    tails, heads, s, t = _internal_ids(net)
    adj_ptr, adj_arc, arc_to, res = _maxflow.build_csr(
        tails, heads, net.caps.copy(), net.node_count)
    kernel = _maxflow.bk_maxflow if method == "bk" else _maxflow.bfs_maxflow
    flow, status = kernel(adj_ptr, adj_arc, arc_to, res, s, t)
    if status == _maxflow.STATUS_INFEASIBLE:
        raise InfeasibleCutError("no finite cut: SOURCE and SINK joined by INF arcs")
    seen = _maxflow.source_reachable(adj_ptr, adj_arc, arc_to, res, s)
    labels = np.array(seen[: net.node_count], dtype=bool)
    labels.setflags(write=False)
    return CutLabels(labels, float(flow))


def cut_value(net: FlowNetwork, labels: CutLabels) -> float:
    """Total capacity of arcs crossing from the source side to the sink side."""
    src = np.where(net.tails == SOURCE, True,
                   np.where(net.tails == SINK, False,
                            labels.source_side[np.maximum(net.tails, 0)]))
    dst = np.where(net.heads == SOURCE, True,
                   np.where(net.heads == SINK, False,
                            labels.source_side[np.maximum(net.heads, 0)]))
    crossing = src & ~dst
    return float(net.caps[crossing].sum())


def rebuild_with(net: FlowNetwork, extra_arcs=(), removed_arcs=()) -> FlowNetwork:
    """Copy of the network with arcs removed (matched by from/to, one occurrence
    each) and arcs appended. The original is untouched."""
    keep = np.ones(net.arc_count, dtype=bool)
    for frm, to in removed_arcs:
        idx = np.flatnonzero((net.tails == frm) & (net.heads == to) & keep)
        if idx.size == 0:
            raise ValidationError(f"cannot remove nonexistent arc {frm} -> {to}")
        keep[idx[0]] = False
    extra = list(extra_arcs)
    tails = np.concatenate([net.tails[keep],
                            np.fromiter((a[0] for a in extra), np.int64, len(extra))])
    heads = np.concatenate([net.heads[keep],
                            np.fromiter((a[1] for a in extra), np.int64, len(extra))])
    caps = np.concatenate([net.caps[keep],
                           np.fromiter((a[2] for a in extra), np.float64, len(extra))])
    return FlowNetwork.from_arrays(net.node_count, tails, heads, caps)


def dump_arcs(net: FlowNetwork) -> str:
    """Debug dump: one `arc FROM TO CAP` line per arc, SOURCE=-1, SINK=-2."""
    lines = [f"arc {f} {t} {c:.17g}" for f, t, c in net.arcs()]
    return "\n".join(lines) + "\n"


def parse_dump(text: str, node_count: int | None = None) -> FlowNetwork:
    arcs = []
    max_id = -1
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 4 or parts[0] != "arc":
            raise ValidationError(f"dump line {ln}: expected `arc FROM TO CAP`")
        frm, to, cap = int(parts[1]), int(parts[2]), float(parts[3])
        arcs.append((frm, to, cap))
        max_id = max(max_id, frm, to)
    if node_count is None:
        node_count = max_id + 1 if max_id >= 0 else 1
    return FlowNetwork(node_count, arcs)
