"""Graph of previously visited free-space positions with exploration
potential: recording, clearance-maximizing refinement, collapse merging,
and reseed queries."""
import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import Unreachable
from .grid import VoxelState, esdf_gradient
from .rrt import segment_clear


@dataclass
class HistoryConfig:
    d_hist: float = 1.0          # node spacing along the traveled path
    rho_bfs: float = 5.0         # potential search radius, sensor range
    eta: float = 0.0             # refinement step; 0 -> half a voxel
    eps_merge: float = 0.0       # merge distance; 0 -> one voxel
    robot_radius: float = 0.5


@dataclass
class HistoryNode:
    position: np.ndarray
    potential: int = 0
    edges: set = field(default_factory=set)  # neighbor node ids
    node_id: int = -1


class HistoryGraph:
    """Connected undirected graph over visited positions. Node ids are
    stable; merged nodes are dropped from the table."""

    def __init__(self):
        self.nodes = {}
        self._next_id = 0
        self._last_id = None
        self._cursor = 0  # round-robin maintenance position

    def __len__(self):
        return len(self.nodes)

    def node_list(self):
        return [self.nodes[i] for i in sorted(self.nodes)]

    def no_potential_set(self):
        return {i for i, n in self.nodes.items() if n.potential == 0}

    def _add_edge(self, a, b):
        if a != b:
            self.nodes[a].edges.add(b)
            self.nodes[b].edges.add(a)

    def nearest_node(self, p):
        p = np.asarray(p, float)
        best, best_d = None, math.inf
        for i in sorted(self.nodes):
            d = float(np.linalg.norm(self.nodes[i].position - p))
            if d < best_d:
                best, best_d = i, d
        return best

    def is_connected(self):
        if not self.nodes:
            return True
        start = next(iter(sorted(self.nodes)))
        seen = {start}
        stack = [start]
        while stack:
            cur = stack.pop()
            for nb in self.nodes[cur].edges:
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        return len(seen) == len(self.nodes)

    def export_csv(self, nodes_path, edges_path):
        with open(nodes_path, "w", newline="\n") as f:
            f.write("id,x,y,z,potential\n")
            for i in sorted(self.nodes):
                n = self.nodes[i]
                f.write(f"{i},{n.position[0]!r},{n.position[1]!r},"
                        f"{n.position[2]!r},{n.potential}\n")
        with open(edges_path, "w", newline="\n") as f:
            f.write("id_a,id_b\n")
            for i in sorted(self.nodes):
                for j in sorted(self.nodes[i].edges):
                    if i < j:
                        f.write(f"{i},{j}\n")


def record_pose(graph, p, vmap, esdf, cfg):
    """Add a graph node at p when it is at least d_hist from every existing
    node, wiring it to the most recent node and, when collision-free, to the
    Euclidean-nearest one. Returns True when a node was added."""
    p = np.asarray(p, float)
    if vmap.state_at(p) != VoxelState.FREE:
        return False
    if esdf.interpolate(p) < cfg.robot_radius:
        return False
    if not graph.nodes:
        node = HistoryNode(p.copy(), node_id=graph._next_id)
        graph.nodes[graph._next_id] = node
        graph._last_id = graph._next_id
        graph._next_id += 1
        return True
    nearest = graph.nearest_node(p)
    if np.linalg.norm(graph.nodes[nearest].position - p) < cfg.d_hist:
        graph._last_id = nearest if graph._last_id not in graph.nodes \
            else graph._last_id
        return False
    candidates = []
    last = graph._last_id if graph._last_id in graph.nodes else nearest
    for cand in (last, nearest):
        if cand in candidates:
            continue
        if segment_clear(esdf, graph.nodes[cand].position, p,
                         cfg.robot_radius):
            candidates.append(cand)
    if not candidates:
        # no collision-free attachment; skip rather than break connectivity
        return False
    node_id = graph._next_id
    graph.nodes[node_id] = HistoryNode(p.copy(), node_id=node_id)
    graph._next_id += 1
    for cand in candidates:
        graph._add_edge(node_id, cand)
    graph._last_id = node_id
    return True


def compute_potential(vmap, p, rho_bfs):
    """Frontier voxels reachable from p through free space within a
    Euclidean radius, via breadth-first search."""
    idx = vmap.world_to_index(p)
    if idx is None or vmap.cells[idx] != VoxelState.FREE:
        return 0
    return int(kernels.bfs_frontier_count(
        vmap.cells, idx[0], idx[1], idx[2], rho_bfs / vmap.resolution))


def refine_node(graph, node, esdf, vmap, cfg):
    """One gradient-ascent step away from obstacles; keep the move only if
    every incident edge stays collision-free and clearance does not drop."""
    eta = cfg.eta if cfg.eta > 0 else 0.5 * esdf.resolution
    g = esdf_gradient(esdf, node.position)
    norm = float(np.linalg.norm(g))
    if norm < 1e-9:
        return False
    candidate = node.position + (g / norm) * eta
    if vmap.state_at(candidate) != VoxelState.FREE:
        return False
    if esdf.interpolate(candidate) < esdf.interpolate(node.position):
        return False
    for nb in node.edges:
        if not segment_clear(esdf, candidate, graph.nodes[nb].position,
                             cfg.robot_radius):
            return False
    node.position = candidate
    return True


def merge_collapsed(graph, eps_merge):
    """Merge adjacent node pairs closer than eps_merge; the survivor takes
    the union of both edge sets, so reachability is unchanged."""
    merged = 0
    changed = True
    while changed:
        changed = False
        for i in sorted(graph.nodes):
            if i not in graph.nodes:
                continue
            node = graph.nodes[i]
            for j in sorted(node.edges):
                if j not in graph.nodes:
                    continue
                other = graph.nodes[j]
                if np.linalg.norm(node.position - other.position) < eps_merge:
                    for nb in other.edges:
                        if nb != i and nb in graph.nodes:
                            graph.nodes[nb].edges.discard(j)
                            graph._add_edge(i, nb)
                    node.edges.discard(j)
                    del graph.nodes[j]
                    if graph._last_id == j:
                        graph._last_id = i
                    merged += 1
                    changed = True
                    break
            if changed:
                break
    return merged


def _dijkstra(graph, source):
    dist = {source: 0.0}
    prev = {}
    heap = [(0.0, source)]
    while heap:
        d, cur = heapq.heappop(heap)
        if d > dist.get(cur, math.inf):
            continue
        for nb in sorted(graph.nodes[cur].edges):
            w = float(np.linalg.norm(graph.nodes[cur].position
                                     - graph.nodes[nb].position))
            nd = d + w
            if nd < dist.get(nb, math.inf):
                dist[nb] = nd
                prev[nb] = cur
                heapq.heappush(heap, (nd, nb))
    return dist, prev


def nearest_potential_node(graph, p):
    """Node with positive potential at minimum graph-geodesic distance from
    the graph node nearest to p; None when no potential remains."""
    if not graph.nodes:
        return None
    source = graph.nearest_node(p)
    dist, _ = _dijkstra(graph, source)
    best, best_d = None, math.inf
    for i in sorted(graph.nodes):
        node = graph.nodes[i]
        if node.potential <= 0:
            continue
        d = dist.get(i, math.inf)
        if d < best_d:
            best, best_d = node, d
    return best


def graph_shortest_path(graph, from_point, to_node):
    """Waypoints from `from_point` to the target node through the graph."""
    source = graph.nearest_node(from_point)
    dist, prev = _dijkstra(graph, source)
    target = to_node.node_id
    if target not in dist:
        raise Unreachable("history graph is disconnected")
    chain = [target]
    while chain[-1] != source:
        chain.append(prev[chain[-1]])
    chain.reverse()
    waypoints = [np.asarray(from_point, float)]
    waypoints += [graph.nodes[i].position.copy() for i in chain]
    return waypoints


def maintain_step(graph, vmap, esdf, budget, cfg):
    """Process up to `budget` nodes round-robin: refine toward clearance,
    recompute potential, then merge collapsed nodes."""
    ids = sorted(graph.nodes)
    if not ids:
        return
    eps = cfg.eps_merge if cfg.eps_merge > 0 else vmap.resolution
    n = min(budget, len(ids))
    start = graph._cursor % len(ids)
    for k in range(n):
        i = ids[(start + k) % len(ids)]
        if i not in graph.nodes:
            continue
        node = graph.nodes[i]
        refine_node(graph, node, esdf, vmap, cfg)
        node.potential = compute_potential(vmap, node.position, cfg.rho_bfs)
    graph._cursor = (start + n) % max(1, len(ids))
    merge_collapsed(graph, eps)
