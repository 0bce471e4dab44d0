"""Non-learning schedulers: max-flow maximal-utilization baseline plus
greedy-nearest and random references.

The max-flow baseline reduces assignment to a flow problem: source->agent
arcs of capacity 1 (an agent does one task), agent->task arcs of capacity 1
where the skill matches, task->sink arcs with the task's capacity. It
maximizes the number of assigned agents and is deliberately blind to
locations. Greedy and random are not part of the original baseline suite;
they bracket learner performance from above and below on the distance axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .domain import AgentState, TaskInstance
from .floorplan import FloorPlan
from .pathing import DistanceMemo, default_sentinel

SOURCE = 0


@dataclass(frozen=True)
class FlowNetwork:
    """Unit-capacity bipartite assignment network.

    Node ids: 0 = source, 1..n_agents = agents (ascending id),
    n_agents+1..n_agents+n_tasks = tasks (ascending slot), last = sink.
    Arcs are stored as paired forward/reverse entries (forward at even
    indices) in fixed construction order, which pins down the augmenting
    order and hence the returned assignment.
    """

    n_agents: int
    n_tasks: int
    agent_ids: tuple[int, ...]
    slots: tuple[int, ...]
    edge_to: np.ndarray       # int32, paired: reverse of e is e^1
    capacity: np.ndarray      # int32 per edge
    adj_start: np.ndarray     # CSR offsets into adj_edges, per node
    adj_edges: np.ndarray     # edge indices ordered by construction

    @property
    def n_nodes(self) -> int:
        return self.n_agents + self.n_tasks + 2

    @property
    def sink(self) -> int:
        return self.n_nodes - 1

    def agent_node(self, idx: int) -> int:
        return 1 + idx

    def task_node(self, idx: int) -> int:
        return 1 + self.n_agents + idx

    def forward_arcs(self) -> list[tuple[int, int, int]]:
        """(from, to, capacity) for every forward arc, construction order."""
        frm = self.edge_to[1::2]
        return [
            (int(frm[e // 2]), int(self.edge_to[e]), int(self.capacity[e]))
            for e in range(0, len(self.edge_to), 2)
        ]


@dataclass
class MaxFlowResult:
    flow_value: int
    flows: np.ndarray  # per-edge flow, paired layout like FlowNetwork arcs
    network: FlowNetwork

    @property
    def arc_flows(self) -> np.ndarray:
        """Flow on every forward arc, aligned with network.forward_arcs()."""
        return self.flows[0::2]

    @property
    def assignments(self) -> tuple[tuple[int, int], ...]:
        """Saturated agent->task arcs as (agent_id, slot) pairs."""
        net = self.network
        out = []
        for e in range(0, len(net.edge_to), 2):
            if self.flows[e] <= 0:
                continue
            u = int(net.edge_to[e ^ 1])
            v = int(net.edge_to[e])
            if 1 <= u <= net.n_agents and net.n_agents < v < net.sink:
                out.append((net.agent_ids[u - 1], net.slots[v - 1 - net.n_agents]))
        return tuple(out)


def build_network(agents, active_tasks) -> FlowNetwork:
    """Assemble the flow network for the given agents and active tasks.

    Agents with no compatible task get no outgoing arcs and stay isolated
    from the task layer.
    """
    agents = sorted(agents, key=lambda a: a.id)
    tasks = sorted(active_tasks, key=lambda t: t.slot)
    n_a, n_t = len(agents), len(tasks)
    n = n_a + n_t + 2
    sink = n - 1
    frm: list[int] = []
    to: list[int] = []
    cap: list[int] = []

    def add(u: int, v: int, c: int) -> None:
        frm.append(u); to.append(v); cap.append(c)
        frm.append(v); to.append(u); cap.append(0)

    for i in range(n_a):
        add(SOURCE, 1 + i, 1)
    for i, agent in enumerate(agents):
        for j, task in enumerate(tasks):
            if task.spec.task_type in agent.skills:
                add(1 + i, 1 + n_a + j, 1)
    for j, task in enumerate(tasks):
        add(1 + n_a + j, sink, task.spec.capacity)

    m = len(frm)
    counts = np.zeros(n + 1, dtype=np.int32)
    for u in frm:
        counts[u + 1] += 1
    adj_start = np.cumsum(counts, dtype=np.int32)
    fill = adj_start[:-1].copy()
    adj_edges = np.empty(m, dtype=np.int32)
    for e, u in enumerate(frm):
        adj_edges[fill[u]] = e
        fill[u] += 1
    return FlowNetwork(
        n_agents=n_a,
        n_tasks=n_t,
        agent_ids=tuple(a.id for a in agents),
        slots=tuple(t.slot for t in tasks),
        edge_to=np.asarray(to, dtype=np.int32),
        capacity=np.asarray(cap, dtype=np.int32),
        adj_start=adj_start,
        adj_edges=adj_edges,
    )


@njit(cache=True)
def _edmonds_karp(n, adj_start, adj_edges, edge_to, residual):
    """Max flow by shortest augmenting paths (BFS in fixed adjacency order).

    Mutates residual in place; returns the flow value. Compiled because the
    exhaustive verification sweep runs this on millions of tiny networks.
    """
    sink = n - 1
    total = 0
    parent_edge = np.empty(n, np.int32)
    queue = np.empty(n, np.int32)
    while True:
        for i in range(n):
            parent_edge[i] = -1
        parent_edge[0] = -2
        queue[0] = 0
        qlen = 1
        qi = 0
        reached = False
        while qi < qlen and not reached:
            u = queue[qi]
            qi += 1
            for k in range(adj_start[u], adj_start[u + 1]):
                e = adj_edges[k]
                v = edge_to[e]
                if residual[e] > 0 and parent_edge[v] == -1:
                    parent_edge[v] = e
                    if v == sink:
                        reached = True
                        break
                    queue[qlen] = v
                    qlen += 1
        if not reached:
            return total
        # bottleneck along the path
        bottleneck = 1 << 30
        v = sink
        while v != 0:
            e = parent_edge[v]
            if residual[e] < bottleneck:
                bottleneck = residual[e]
            v = edge_to[e ^ 1]
        v = sink
        while v != 0:
            e = parent_edge[v]
            residual[e] -= bottleneck
            residual[e ^ 1] += bottleneck
            v = edge_to[e ^ 1]
        total += bottleneck


def max_flow(network: FlowNetwork) -> MaxFlowResult:
    """Integral maximum flow; deterministic for a given network."""
    residual = network.capacity.copy()
    value = int(
        _edmonds_karp(
            network.n_nodes,
            network.adj_start,
            network.adj_edges,
            network.edge_to,
            residual,
        )
    )
    return MaxFlowResult(flow_value=value, flows=network.capacity - residual, network=network)


class MaxFlowScheduler:
    """Maximal-utilization baseline: assign as many agents as skills and
    capacities allow, ignoring locations entirely."""

    name = "maxflow"

    def decide(self, plan: FloorPlan, agents, tasks) -> list[int | None]:
        active = [t for t in tasks if t is not None]
        decisions: list[int | None] = [None] * len(agents)
        if not active or not agents:
            return decisions
        result = max_flow(build_network(agents, active))
        index_of = {a.id: i for i, a in enumerate(agents)}
        for agent_id, slot in result.assignments:
            decisions[index_of[agent_id]] = slot
        return decisions


class GreedyNearestScheduler:
    """Each agent independently walks to its nearest compatible active task
    (A* distance, unreachable counted as the sentinel), ties broken by the
    lower slot index. No capacity coordination."""

    name = "greedy"

    def decide(self, plan: FloorPlan, agents, tasks) -> list[int | None]:
        memo = DistanceMemo(plan)
        sentinel = default_sentinel(plan)
        decisions: list[int | None] = []
        for agent in agents:
            best: tuple[int, int] | None = None
            for task in tasks:
                if task is None or task.spec.task_type not in agent.skills:
                    continue
                d = memo.distance(agent.location, task.location, sentinel)
                if best is None or (d, task.slot) < best:
                    best = (d, task.slot)
            decisions.append(None if best is None else best[1])
        return decisions


class RandomScheduler:
    """Floor baseline: uniform over Stay plus the occupied slots."""

    name = "random"

    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)

    def decide(self, plan: FloorPlan, agents, tasks) -> list[int | None]:
        choices: list[int | None] = [None] + [t.slot for t in tasks if t is not None]
        return [choices[int(self.rng.integers(len(choices)))] for _ in agents]
