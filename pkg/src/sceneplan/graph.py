"""KNN spatial scene graph with multiplicative weight modulation.

Nodes are scene objects; each node gets a directed edge to its k nearest
neighbors by centroid distance (ties broken by lower object id).  Edges
carry a coarse spatial relation.  Generating a plan step that mentions an
object multiplies the weight of that node, its neighbors, and the
connecting edges by a configurable factor, which in turn reorders the
weight-ranked prompt serialization.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .scene import ObjectInstance, SceneModel

DEFAULT_K = 2
DEFAULT_MODULATION_WEIGHT = 2.0
NEAR_DISTANCE = 0.15  # meters; closer than this overrides axis-based kinds

RELATION_KINDS = (
    "left-of",
    "right-of",
    "above",
    "below",
    "in-front-of",
    "behind",
    "near",
)


@dataclass(frozen=True)
class SpatialRelation:
    """Relation kind plus exact Euclidean centroid distance in meters."""

    kind: str
    distance: float


@dataclass
class GraphNode:
    object: ObjectInstance
    weight: float = 1.0
    feature: list[float] | None = None


@dataclass
class GraphEdge:
    relation: SpatialRelation
    weight: float = 1.0


@dataclass
class SceneGraph:
    nodes: dict[int, GraphNode]
    edges: dict[tuple[int, int], GraphEdge]
    k: int

    def neighbors(self, node_id: int) -> list[int]:
        """Out-neighbors of ``node_id`` in ascending id order."""
        return sorted(dst for (src, dst) in self.edges if src == node_id)


@dataclass(frozen=True)
class ModulationRecord:
    """Audit record of one modulation call: which elements were scaled."""

    step_index: int
    mentioned_ids: tuple[int, ...]
    w_l: float
    touched_nodes: frozenset[int]
    touched_edges: frozenset[tuple[int, int]]


def centroid_distance(a: ObjectInstance, b: ObjectInstance) -> float:
    return math.dist(a.centroid, b.centroid)


def classify_relation(a: ObjectInstance, b: ObjectInstance) -> SpatialRelation:
    """Where ``b`` sits relative to ``a``, by dominant centroid-difference axis.

    Scene coordinates: +x right, +y front, +z up.  Anything closer than
    ``NEAR_DISTANCE`` is "near" regardless of direction; identical centroids
    are "near" at distance 0.
    """
    dx = b.centroid[0] - a.centroid[0]
    dy = b.centroid[1] - a.centroid[1]
    dz = b.centroid[2] - a.centroid[2]
    distance = math.sqrt(dx * dx + dy * dy + dz * dz)
    if distance < NEAR_DISTANCE:
        return SpatialRelation("near", distance)
    ax, ay, az = abs(dx), abs(dy), abs(dz)
    if ax >= ay and ax >= az:
        kind = "right-of" if dx > 0 else "left-of"
    elif ay >= az:
        kind = "in-front-of" if dy > 0 else "behind"
    else:
        kind = "above" if dz > 0 else "below"
    return SpatialRelation(kind, distance)


def knn_ids(scene: SceneModel, k: int) -> dict[int, list[int]]:
    """The k nearest neighbor ids of every object (distance, then lower id)."""
    result: dict[int, list[int]] = {}
    for obj in scene.objects:
        ranked = sorted(
            (other for other in scene.objects if other.id != obj.id),
            key=lambda other: (centroid_distance(obj, other), other.id),
        )
        result[obj.id] = [other.id for other in ranked[:k]]
    return result


def build_graph(scene: SceneModel, k: int = DEFAULT_K) -> SceneGraph:
    """Build the directed KNN scene graph; all weights start at 1.0.

    Every node has out-degree min(k, n-1).  The edge i->j carries the
    relation of j relative to i.
    """
    if k <= 0:
        raise ValueError(f"k must be positive, got {k}")
    if not scene.objects:
        raise ValueError("scene has no objects")
    by_id = scene.by_id()
    nodes = {obj.id: GraphNode(object=obj) for obj in scene.objects}
    edges: dict[tuple[int, int], GraphEdge] = {}
    for src, neighbor_ids in knn_ids(scene, k).items():
        for dst in neighbor_ids:
            edges[(src, dst)] = GraphEdge(
                relation=classify_relation(by_id[src], by_id[dst])
            )
    return SceneGraph(nodes=nodes, edges=edges, k=k)


def modulate(
    graph: SceneGraph,
    mentioned_ids: list[int],
    w_l: float = DEFAULT_MODULATION_WEIGHT,
    step_index: int = 0,
) -> ModulationRecord:
    """Scale mentioned nodes, their KNN neighbors, and the connecting edges by ``w_l``.

    The touched sets are unions over all mentions, and every touched element
    is multiplied exactly once per call, however many mentions share it.
    Feature vectors, when present, are scaled with their node.
    """
    if w_l <= 0:
        raise ValueError(f"w_l must be positive, got {w_l}")
    unknown = [i for i in mentioned_ids if i not in graph.nodes]
    if unknown:
        raise KeyError(f"unknown object id(s) {unknown}")
    touched_nodes: set[int] = set()
    touched_edges: set[tuple[int, int]] = set()
    for node_id in mentioned_ids:
        touched_nodes.add(node_id)
        for neighbor in graph.neighbors(node_id):
            touched_nodes.add(neighbor)
            touched_edges.add((node_id, neighbor))
    for node_id in touched_nodes:
        node = graph.nodes[node_id]
        node.weight *= w_l
        if node.feature is not None:
            node.feature = [v * w_l for v in node.feature]
    for key in touched_edges:
        graph.edges[key].weight *= w_l
    return ModulationRecord(
        step_index=step_index,
        mentioned_ids=tuple(mentioned_ids),
        w_l=w_l,
        touched_nodes=frozenset(touched_nodes),
        touched_edges=frozenset(touched_edges),
    )


def reset_weights(graph: SceneGraph) -> None:
    """Restore all node and edge weights to 1.0 (idempotent)."""
    for node in graph.nodes.values():
        node.weight = 1.0
    for edge in graph.edges.values():
        edge.weight = 1.0


def serialize_for_prompt(graph: SceneGraph, budget: int) -> str:
    """Weight-ranked text rendering of the graph, at most ``budget`` node lines.

    Nodes are ordered by descending weight, ties by ascending id, each as
    "<category>#<id> (w=<weight>)".  Edge lines follow for every retained
    node's edges whose other end is also retained, as "<cat>#<i> <kind>
    <cat>#<j>".  Pure function of (weights, budget): identical inputs give
    byte-identical output.
    """
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    ranked = sorted(graph.nodes.items(), key=lambda kv: (-kv[1].weight, kv[0]))
    retained = [node_id for node_id, _ in ranked[:budget]]
    retained_set = set(retained)

    def label(node_id: int) -> str:
        return f"{graph.nodes[node_id].object.category}#{node_id}"

    lines = [
        f"{label(node_id)} (w={format(graph.nodes[node_id].weight, 'g')})"
        for node_id in retained
    ]
    for node_id in retained:
        for dst in graph.neighbors(node_id):
            if dst in retained_set:
                kind = graph.edges[(node_id, dst)].relation.kind
                lines.append(f"{label(node_id)} {kind} {label(dst)}")
    return "\n".join(lines)


def graph_to_dict(graph: SceneGraph) -> dict:
    """JSON-ready snapshot used by the CLI graph dump."""
    return {
        "k": graph.k,
        "nodes": [
            {"id": node_id, "category": node.object.category, "weight": node.weight}
            for node_id, node in sorted(graph.nodes.items())
        ],
        "edges": [
            {
                "src": src,
                "dst": dst,
                "kind": edge.relation.kind,
                "weight": edge.weight,
                "distance": edge.relation.distance,
            }
            for (src, dst), edge in sorted(graph.edges.items())
        ],
    }


def dump_graph(graph: SceneGraph) -> str:
    return json.dumps(graph_to_dict(graph), indent=2)
