"""Per-class instance refinement on the superpoint graph.

Members with weak links inside their instance are detached, then
re-attached greedily (most confident first) to a neighbouring instance that
they connect to strongly enough, or given a fresh instance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .semantic_graph import SuperpointGraph


@dataclass(frozen=True)
class RefineParams:
    theta_d: float = 0.3
    theta_o: float = 0.3
    theta_l: float = 0.5


@dataclass
class InstanceLabel:
    id: int
    category: int
    members: set = field(default_factory=set)
    confidence: float = 0.0


def class_edge(graph: SuperpointGraph, a: int, b: int, category: int) -> float:
    return graph.edge(a, b).get(category, 0.0)


def instance_confidence(members, graph: SuperpointGraph, category: int) -> float:
    """Largest class edge confidence among edges internal to the instance (0 if none)."""
    members = set(members)
    best = 0.0
    for a in members:
        for b in graph.neighbors(a):
            if b > a and b in members:
                best = max(best, class_edge(graph, a, b, category))
    return best


def link_confidence(node: int, members, graph: SuperpointGraph, category: int) -> float:
    """Largest class edge confidence between a node and the other members of an instance."""
    best = 0.0
    for b in graph.neighbors(node):
        if b != node and b in members:
            best = max(best, class_edge(graph, node, b, category))
    return best


def node_confidence(node: int, graph: SuperpointGraph, category: int, candidates) -> float:
    return link_confidence(node, candidates, graph, category)


def initial_instances(semantic: dict[int, int], association: dict[int, int | None]) -> dict[int, list[InstanceLabel]]:
    """Group superpoints of each class by their associated persistent instance.

    Superpoints without an association become singletons. Instance ids are
    local to this call and unique across classes.
    """
    out: dict[int, list[InstanceLabel]] = {}
    next_id = 1
    for category in sorted(set(semantic.values())):
        groups: dict = {}
        singles = []
        for label in sorted(l for l, c in semantic.items() if c == category):
            key = association.get(label)
            if key is None:
                singles.append(label)
            else:
                groups.setdefault(key, set()).add(label)
        insts = []
        for key in sorted(groups, key=lambda k: min(groups[k])):
            insts.append(InstanceLabel(next_id, category, groups[key]))
            next_id += 1
        for label in singles:
            insts.append(InstanceLabel(next_id, category, {label}))
            next_id += 1
        out[category] = sorted(insts, key=lambda o: min(o.members))
    return out


def refine_class(category: int, instances: list[InstanceLabel], graph: SuperpointGraph,
                 params: RefineParams = RefineParams(), next_id: int | None = None) -> list[InstanceLabel]:
    members_of = {o.id: set(o.members) for o in instances}
    owner = {l: o.id for o in instances for l in o.members}
    nodes = set(owner)
    conf = {oid: instance_confidence(m, graph, category) for oid, m in members_of.items()}
    if next_id is None:
        next_id = max(members_of, default=0) + 1

    detached = []
    for node in sorted(nodes):
        oid = owner[node]
        if link_confidence(node, members_of[oid], graph, category) < params.theta_d * conf[oid]:
            detached.append(node)
    for node in detached:
        members_of[owner.pop(node)].discard(node)
    for oid in list(members_of):
        conf[oid] = instance_confidence(members_of[oid], graph, category)

    strength = {n: node_confidence(n, graph, category, nodes) for n in detached}
    for node in sorted(detached, key=lambda n: (-strength[n], n)):
        best, best_link = None, 0.0
        candidates = sorted({owner[b] for b in graph.neighbors(node)
                             if b in owner and class_edge(graph, node, b, category) > 0})
        for oid in candidates:
            link = link_confidence(node, members_of[oid], graph, category)
            if link > params.theta_o * conf[oid] and link > params.theta_l * strength[node]:
                if best is None or link > best_link:
                    best, best_link = oid, link
        if best is None:
            best = next_id
            next_id += 1
            members_of[best] = set()
        members_of[best].add(node)
        owner[node] = best
        conf[best] = instance_confidence(members_of[best], graph, category)

    out = []
    for oid in sorted(members_of):
        parts = connected_parts(members_of[oid], graph, category)
        for i, part in enumerate(parts):
            if i == 0:
                new_id = oid
            else:
                new_id, next_id = next_id, next_id + 1
            out.append(InstanceLabel(new_id, category, part, instance_confidence(part, graph, category)))
    return sorted(out, key=lambda o: min(o.members))


def connected_parts(members, graph: SuperpointGraph, category: int) -> list[set]:
    """Split a member set into components linked by positive class edges."""
    left = set(members)
    parts = []
    while left:
        seed = min(left)
        part, stack = {seed}, [seed]
        while stack:
            a = stack.pop()
            for b in graph.neighbors(a):
                if b in left and b not in part and class_edge(graph, a, b, category) > 0:
                    part.add(b)
                    stack.append(b)
        left -= part
        parts.append(part)
    return parts


def refine_instances(semantic: dict[int, int], association: dict[int, int | None], graph: SuperpointGraph,
                     params: dict[int, RefineParams] | RefineParams = RefineParams(),
                     enabled: bool = True, skip_classes=frozenset()) -> list[InstanceLabel]:
    """Refined instances over all classes, renumbered 1..N by (class, smallest member)."""
    initial = initial_instances(semantic, association)
    next_id = sum(len(v) for v in initial.values()) + 1
    result = []
    for category, insts in initial.items():
        if category in skip_classes:
            continue
        if enabled:
            p = params.get(category, RefineParams()) if isinstance(params, dict) else params
            refined = refine_class(category, insts, graph, p, next_id)
            next_id = max([next_id] + [o.id + 1 for o in refined])
        else:
            refined = insts
            for o in refined:
                o.confidence = instance_confidence(o.members, graph, category)
        result.extend(refined)
    result.sort(key=lambda o: (o.category, min(o.members)))
    return [InstanceLabel(i + 1, o.category, o.members, o.confidence) for i, o in enumerate(result)]
