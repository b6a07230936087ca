"""Dynamic planning-order assignment between neighboring robots.

A robot gains the right to plan first ("advantage") by having more sensing
neighbors; ties fall to whoever enters the shared conflict region earlier;
remaining ties fall to the static base priority, which is unique fleet-wide
and therefore breaks every pair. Passive and stopped robots always rank
above active ones since their plans are fixed constraints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .agent import AgentMode, Lifecycle
from .conflict import OccupancyMap
from .workspace import CellSet


@dataclass(frozen=True)
class PriorityContext:
    """The per-robot quantities exchanged before a coordination round."""

    robot_id: int
    neighbor_count: int
    earliest_entry: float
    base_priority: int
    lifecycle: Lifecycle
    mode: AgentMode


def earliest_entry_time(conflict_cells: CellSet, occupancy: OccupancyMap,
                        t_c: float) -> float:
    """Earliest time the robot enters any of its conflict cells.

    This is the minimum left endpoint of the robot's own occupancy
    intervals over the conflict cells; +inf when there are none.
    """
    missing = conflict_cells - occupancy.keys()
    if missing:
        raise ValueError(f"conflict cells not in occupancy map: {sorted(missing)}")
    best = math.inf
    for cell in conflict_cells:
        start = occupancy[cell].start()
        if start < best:
            best = start
    return best


def has_advantage(ctx_i: PriorityContext, ctx_j: PriorityContext) -> bool:
    """True iff robot i outranks robot j by neighbor count, then entry time."""
    if ctx_i.neighbor_count != ctx_j.neighbor_count:
        return ctx_i.neighbor_count > ctx_j.neighbor_count
    return ctx_i.earliest_entry < ctx_j.earliest_entry


def determine_order(ctx_i: PriorityContext,
                    neighbor_ctxs: list[PriorityContext]) -> set[int]:
    """The set of neighbors that plan before robot i.

    A neighbor goes first when it is Passive or stopped in Emerg mode, when
    it has advantage over i, or when neither side has advantage and its
    base priority is larger.
    """
    seen = {ctx_i.base_priority: ctx_i.robot_id}
    for ctx in neighbor_ctxs:
        if ctx.base_priority in seen and seen[ctx.base_priority] != ctx.robot_id:
            raise ValueError(
                f"duplicate base priority {ctx.base_priority} between robots "
                f"{seen[ctx.base_priority]} and {ctx.robot_id}")
        seen[ctx.base_priority] = ctx.robot_id

    before: set[int] = set()
    for ctx_j in neighbor_ctxs:
        if ctx_j.lifecycle is Lifecycle.PASSIVE or ctx_j.mode is AgentMode.EMERG:
            before.add(ctx_j.robot_id)
        elif has_advantage(ctx_j, ctx_i):
            before.add(ctx_j.robot_id)
        elif (not has_advantage(ctx_i, ctx_j)
              and ctx_j.base_priority > ctx_i.base_priority):
            before.add(ctx_j.robot_id)
    return before


@dataclass
class PriorityDigraph:
    """Planning-order digraph of one connected subgraph.

    Edge (j, i) means robot j plans before robot i. Edges originate only
    from robots that actually compute an order this round.
    """

    nodes: list[int]
    edges: set[tuple[int, int]] = field(default_factory=set)

    def add_order(self, robot_id: int, before: set[int]) -> None:
        for j in before:
            self.edges.add((j, robot_id))

    def predecessors(self, robot_id: int) -> set[int]:
        return {j for (j, i) in self.edges if i == robot_id}


def topological_stages(graph: PriorityDigraph) -> list[list[int]] | None:
    """Kahn layering of the digraph, or None when it contains a cycle.

    Nodes in the same stage have no order constraint between them and may
    plan concurrently; each stage is sorted by id for determinism.
    """
    indeg = {n: 0 for n in graph.nodes}
    succ: dict[int, list[int]] = {n: [] for n in graph.nodes}
    for j, i in sorted(graph.edges):
        indeg[i] += 1
        succ[j].append(i)
    frontier = sorted(n for n, d in indeg.items() if d == 0)
    stages: list[list[int]] = []
    done = 0
    while frontier:
        stages.append(frontier)
        done += len(frontier)
        nxt: set[int] = set()
        for n in frontier:
            for m in succ[n]:
                indeg[m] -= 1
                if indeg[m] == 0:
                    nxt.add(m)
        frontier = sorted(nxt)
    if done != len(graph.nodes):
        return None
    return stages


def check_acyclic(graph: PriorityDigraph) -> bool:
    """True iff the planning-order digraph has no directed cycle."""
    return topological_stages(graph) is not None


def find_cycle(graph: PriorityDigraph) -> list[int]:
    """One directed cycle as a node list (empty when acyclic); for diagnostics."""
    succ: dict[int, list[int]] = {n: [] for n in graph.nodes}
    for j, i in sorted(graph.edges):
        succ[j].append(i)
    color = {n: 0 for n in graph.nodes}  # 0 unseen, 1 on stack, 2 done
    parent: dict[int, int] = {}
    for root in sorted(graph.nodes):
        if color[root] != 0:
            continue
        stack = [(root, iter(succ[root]))]
        color[root] = 1
        while stack:
            node, it = stack[-1]
            advanced = False
            for nxt in it:
                if color[nxt] == 0:
                    color[nxt] = 1
                    parent[nxt] = node
                    stack.append((nxt, iter(succ[nxt])))
                    advanced = True
                    break
                if color[nxt] == 1:
                    cycle = [nxt, node]
                    cur = node
                    while cur != nxt:
                        cur = parent[cur]
                        cycle.append(cur)
                    cycle.reverse()
                    return cycle[:-1]
            if not advanced:
                color[node] = 2
                stack.pop()
    return []
