"""Spatio-temporal regularization by shortest-path tracking of superpixels.

Each frame is partitioned into a static grid of superpixels.  A node-split
flow graph connects a source to annotated cells, charges each cell the
negative log-odds of its mean foreground probability, and links spatially
overlapping cells of consecutive frames.  Node-disjoint negative-cost
paths are extracted by successive shortest augmenting paths until no path
lowers the total cost; the union of visited cells is the segmentation.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .seqdata import PointAnnotation, annotation_radius

DEFAULT_PRUNE = 0.4
_COST_EPS = 1e-12


@dataclass
class Superpixel:
    """A grid cell of one frame: identity, geometry and mean probability."""

    id: int
    frame: int
    pixels: np.ndarray
    centroid: tuple[float, float]
    cell: tuple[int, int]
    mean_prob: float | None = None


def grid_shape(width: int, height: int, target_count: int) -> tuple[int, int]:
    """Rows/columns of the cell grid whose count is closest to the target."""
    rows = max(1, round(math.sqrt(target_count * height / width)))
    cols = max(1, round(target_count / rows))
    return min(rows, height), min(cols, width)


def _cell_edges(size: int, cells: int) -> list[tuple[int, int]]:
    # equal cells of size//cells; the last cell absorbs the remainder
    base = size // cells
    bounds = [(i * base, (i + 1) * base) for i in range(cells - 1)]
    bounds.append(((cells - 1) * base, size))
    return bounds


def make_superpixels(seq, target_count: int) -> list[Superpixel]:
    """Identical grid partition of every frame; ids are globally unique."""
    if target_count < 1:
        raise ValueError("target_count must be >= 1")
    width, height, n_frames = seq.width, seq.height, seq.n_frames
    rows, cols = grid_shape(width, height, target_count)
    row_bounds = _cell_edges(height, rows)
    col_bounds = _cell_edges(width, cols)
    xs = np.arange(width)
    superpixels = []
    next_id = 0
    for t in range(n_frames):
        for r, (y0, y1) in enumerate(row_bounds):
            for c, (x0, x1) in enumerate(col_bounds):
                flat = (np.arange(y0, y1)[:, None] * width + xs[None, x0:x1]).ravel()
                centroid = ((x0 + x1 - 1) / 2.0, (y0 + y1 - 1) / 2.0)
                superpixels.append(Superpixel(next_id, t, flat, centroid, (r, c)))
                next_id += 1
    return superpixels


def foreground_cost(fbar: float) -> float:
    """Negative log-odds of the mean probability; zero at 0.5."""
    fbar = min(max(fbar, 1e-6), 1.0 - 1e-6)
    return -math.log(fbar / (1.0 - fbar))


@dataclass
class TrackGraph:
    """Unit-capacity node-split flow graph over superpixels.

    Node 0 is the source, node 1 the sink; superpixel ``i`` owns nodes
    ``2 + 2i`` (in) and ``3 + 2i`` (out).  Edges are stored as paired
    forward/reverse entries for residual bookkeeping.
    """

    n_nodes: int
    n_frames: int
    tail: list[int] = field(default_factory=list)
    head: list[int] = field(default_factory=list)
    cost: list[float] = field(default_factory=list)
    cap: list[int] = field(default_factory=list)
    adj: list[list[int]] = field(default_factory=list)
    visit_sp: dict[int, int] = field(default_factory=dict)  # edge index -> sp id
    sp_frame: dict[int, int] = field(default_factory=dict)  # sp id -> frame

    SOURCE = 0
    SINK = 1

    def __post_init__(self) -> None:
        if not self.adj:
            self.adj = [[] for _ in range(self.n_nodes)]

    def add_edge(self, u: int, v: int, cost: float, cap: int = 1) -> int:
        idx = len(self.head)
        self.tail += [u, v]
        self.head += [v, u]
        self.cost += [cost, -cost]
        self.cap += [cap, 0]
        self.adj[u].append(idx)
        self.adj[v].append(idx + 1)
        return idx

    @staticmethod
    def in_node(sp_index: int) -> int:
        return 2 + 2 * sp_index

    @staticmethod
    def out_node(sp_index: int) -> int:
        return 3 + 2 * sp_index


def _cells_overlap(a: tuple[int, int], b: tuple[int, int], include_neighbors: bool) -> bool:
    if a == b:
        return True
    if not include_neighbors:
        return False
    return abs(a[0] - b[0]) + abs(a[1] - b[1]) == 1


def build_graph(
    superpixels: list[Superpixel],
    prob_maps: list[np.ndarray],
    annotations: list[PointAnnotation],
    radius_frac: float = 0.05,
    prune: float = DEFAULT_PRUNE,
    neighbor_overlap: bool = True,
) -> TrackGraph:
    """Assemble the tracking graph; infinite costs are absent edges.

    Source edges go to superpixels whose centroid lies within the
    annotation circle of their frame; visiting edges carry the foreground
    cost and exist only above the prune threshold; transition edges link
    overlapping cells of consecutive frames (same cell, plus 4-neighbors
    unless ``neighbor_overlap`` is off); every superpixel reaches the sink.
    """
    n_frames = len(prob_maps)
    height, width = prob_maps[0].shape
    radius = annotation_radius(width, height, radius_frac)
    by_frame: list[list[int]] = [[] for _ in range(n_frames)]
    for i, sp in enumerate(superpixels):
        if sp.id != i:
            raise ValueError("superpixel ids must be dense and ordered")
        by_frame[sp.frame].append(i)
        flat = prob_maps[sp.frame].ravel()
        sp.mean_prob = float(flat[sp.pixels].mean())

    graph = TrackGraph(n_nodes=2 + 2 * len(superpixels), n_frames=n_frames)
    graph.sp_frame = {sp.id: sp.frame for sp in superpixels}

    ann_by_frame: list[list[PointAnnotation]] = [[] for _ in range(n_frames)]
    for ann in annotations:
        ann_by_frame[ann.frame].append(ann)

    for i, sp in enumerate(superpixels):
        cx, cy = sp.centroid
        if any(
            (cx - a.x) ** 2 + (cy - a.y) ** 2 <= radius * radius
            for a in ann_by_frame[sp.frame]
        ):
            graph.add_edge(graph.SOURCE, graph.in_node(i), 0.0)
        if sp.mean_prob > prune:
            idx = graph.add_edge(graph.in_node(i), graph.out_node(i), foreground_cost(sp.mean_prob))
            graph.visit_sp[idx] = sp.id
        graph.add_edge(graph.out_node(i), graph.SINK, 0.0)

    for t in range(n_frames - 1):
        for i in by_frame[t]:
            for j in by_frame[t + 1]:
                if _cells_overlap(superpixels[i].cell, superpixels[j].cell, neighbor_overlap):
                    graph.add_edge(graph.out_node(i), graph.in_node(j), 0.0)
    return graph


@dataclass
class PathSolution:
    """Node-disjoint source-to-sink paths and the cells they visit."""

    paths: list[list[int]]
    total_cost: float
    selected: dict[int, list[int]]


def _topological_order(graph: TrackGraph) -> list[int]:
    indeg = [0] * graph.n_nodes
    for e in range(0, len(graph.head), 2):
        if graph.cap[e] > 0:
            indeg[graph.head[e]] += 1
    order, stack = [], [u for u in range(graph.n_nodes) if indeg[u] == 0]
    while stack:
        u = stack.pop()
        order.append(u)
        for e in graph.adj[u]:
            if e % 2 == 0 and graph.cap[e] > 0:
                v = graph.head[e]
                indeg[v] -= 1
                if indeg[v] == 0:
                    stack.append(v)
    if len(order) != graph.n_nodes:
        raise ValueError("tracking graph has a cycle")
    return order


def _initial_potentials(graph: TrackGraph) -> list[float]:
    # shortest distances from the source on the DAG, negative costs allowed
    dist = [math.inf] * graph.n_nodes
    dist[graph.SOURCE] = 0.0
    for u in _topological_order(graph):
        if dist[u] == math.inf:
            continue
        for e in graph.adj[u]:
            if e % 2 == 0 and graph.cap[e] > 0:
                v = graph.head[e]
                if dist[u] + graph.cost[e] < dist[v]:
                    dist[v] = dist[u] + graph.cost[e]
    return dist


def _dijkstra(graph: TrackGraph, potential: list[float]):
    n = graph.n_nodes
    dist = [math.inf] * n
    prev_edge = [-1] * n
    dist[graph.SOURCE] = 0.0
    heap = [(0.0, graph.SOURCE)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        for e in graph.adj[u]:
            if graph.cap[e] <= 0:
                continue
            v = graph.head[e]
            if potential[v] == math.inf:
                continue
            reduced = max(graph.cost[e] + potential[u] - potential[v], 0.0)
            if d + reduced < dist[v]:
                dist[v] = d + reduced
                prev_edge[v] = e
                heapq.heappush(heap, (dist[v], v))
    return dist, prev_edge


def solve_ksp(graph: TrackGraph) -> PathSolution:
    """Extract node-disjoint paths by successive shortest augmenting paths.

    The number of paths is not configured: augmentation stops as soon as
    the cheapest remaining source-sink path no longer has negative cost.
    Path costs are non-decreasing across iterations, so the result is the
    minimum-cost set over all numbers of paths.
    """
    potential = _initial_potentials(graph)
    flow = [0] * len(graph.head)
    while True:
        if potential[graph.SINK] == math.inf:
            break
        dist, prev_edge = _dijkstra(graph, potential)
        if dist[graph.SINK] == math.inf:
            break
        path_cost = dist[graph.SINK] + potential[graph.SINK] - potential[graph.SOURCE]
        if path_cost >= 0.0:
            break
        # augment one unit along the path
        v = graph.SINK
        while v != graph.SOURCE:
            e = prev_edge[v]
            graph.cap[e] -= 1
            graph.cap[e ^ 1] += 1
            flow[e] += 1
            flow[e ^ 1] -= 1
            v = graph.tail[e]
        sink_dist = dist[graph.SINK]
        potential = [
            p + (d if d != math.inf else sink_dist)
            for p, d in zip(potential, dist)
        ]

    return _decompose(graph, flow)


def _decompose(graph: TrackGraph, flow: list[int]) -> PathSolution:
    total_cost = sum(
        graph.cost[e] * flow[e] for e in range(0, len(graph.head), 2) if flow[e] > 0
    )
    out_flow: dict[int, list[int]] = {}
    for e in range(0, len(graph.head), 2):
        if flow[e] > 0:
            out_flow.setdefault(graph.tail[e], []).append(e)
    paths = []
    selected: dict[int, list[int]] = {}
    remaining = {e: flow[e] for es in out_flow.values() for e in es}
    while out_flow.get(graph.SOURCE):
        path_sps: list[int] = []
        u = graph.SOURCE
        while u != graph.SINK:
            e = out_flow[u][-1]
            remaining[e] -= 1
            if remaining[e] == 0:
                out_flow[u].pop()
            sp_id = graph.visit_sp.get(e)
            if sp_id is not None:
                path_sps.append(sp_id)
            u = graph.head[e]
        paths.append(path_sps)
    for path in paths:
        for sp_id in path:
            selected.setdefault(graph.sp_frame[sp_id], []).append(sp_id)
    for ids in selected.values():
        ids.sort()
    return PathSolution(paths, float(total_cost), selected)


def verify_optimality(graph: TrackGraph) -> tuple[bool, float]:
    """Bellman-Ford certificate on the residual graph after solving.

    Returns (certified, best_cost): certified is False if any augmenting
    source-sink path with negative true cost remains or a negative cycle
    is reachable.
    """
    n = graph.n_nodes
    dist = [math.inf] * n
    dist[graph.SOURCE] = 0.0
    for it in range(n):
        changed = False
        for e in range(len(graph.head)):
            u, v = graph.tail[e], graph.head[e]
            if graph.cap[e] > 0 and dist[u] != math.inf:
                if dist[u] + graph.cost[e] < dist[v] - 1e-12:
                    dist[v] = dist[u] + graph.cost[e]
                    changed = True
        if not changed:
            break
    else:
        return False, -math.inf  # negative cycle reachable from the source
    best = dist[graph.SINK]
    return best == math.inf or best >= -1e-9, best


def solution_to_masks(
    sol: PathSolution,
    superpixels: list[Superpixel],
    width: int,
    height: int,
    n_frames: int,
) -> list[np.ndarray]:
    """Binary mask per frame: foreground iff the pixel's cell is on a path."""
    masks = [np.zeros(width * height, dtype=bool) for _ in range(n_frames)]
    for frame, ids in sol.selected.items():
        for sp_id in ids:
            sp = superpixels[sp_id]
            masks[frame][sp.pixels] = True
    return [m.reshape(height, width) for m in masks]


def write_edge_list(graph: TrackGraph, path: str | Path) -> None:
    """Plain-text debug dump: one ``tail head cost`` line per forward edge."""
    lines = []
    for e in range(0, len(graph.head), 2):
        lines.append(f"{graph.tail[e]} {graph.head[e]} {graph.cost[e]:.12g}")
    Path(path).write_text("\n".join(lines) + "\n")
