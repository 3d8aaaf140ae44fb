"""Network, cost functions, tasks, and scenario container.

All objects here are immutable after construction and safe to share across
threads.  Costs follow two families each:

    link:    Linear  D(F) = w * F
             Queue   D(F) = F / (cap - F)    for 0 <= F < cap, else infeasible
    compute: SumLinear  C(G) = s * sum_m c_m * g^m
             SumQueue   C(G) = W / (s - W),  W = sum_m c_m * g^m < s

Infeasible evaluations return ``math.inf`` rather than raising, so that
optimizers can compare capacity violations as +infinity.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

# Flows within this band of a queue capacity are treated as infeasible to
# avoid catastrophic cancellation in the derivatives near the pole.
QUEUE_GUARD = 1e-12

INFEASIBLE = math.inf


class Network:
    """Directed graph over dense node ids 0..n-1 with CSR adjacency."""

    def __init__(self, n_nodes: int, links):
        if n_nodes <= 0:
            raise ValueError("network needs at least one node")
        links = [(int(a), int(b)) for a, b in links]
        seen = set()
        for a, b in links:
            if not (0 <= a < n_nodes and 0 <= b < n_nodes):
                raise ValueError(f"link ({a},{b}) references unknown node")
            if a == b:
                raise ValueError(f"self-loop ({a},{b}) not allowed")
            if (a, b) in seen:
                raise ValueError(f"duplicate link ({a},{b})")
            seen.add((a, b))
        self.n_nodes = n_nodes
        self.links = tuple(links)
        self.n_links = len(links)
        self._eid = {lk: e for e, lk in enumerate(links)}
        self.link_src = np.array([a for a, _ in links], dtype=np.int64)
        self.link_dst = np.array([b for _, b in links], dtype=np.int64)

        out_lists = [[] for _ in range(n_nodes)]
        in_lists = [[] for _ in range(n_nodes)]
        for e, (a, b) in enumerate(links):
            out_lists[a].append((b, e))
            in_lists[b].append((a, e))

        def csr(lists):
            ptr = np.zeros(n_nodes + 1, dtype=np.int32)
            node = np.empty(self.n_links, dtype=np.int32)
            eid = np.empty(self.n_links, dtype=np.int32)
            k = 0
            for i, row in enumerate(lists):
                for other, e in row:
                    node[k] = other
                    eid[k] = e
                    k += 1
                ptr[i + 1] = k
            return ptr, node, eid

        self.out_ptr, self.out_dst, self.out_eid = csr(out_lists)
        self.in_ptr, self.in_src, self.in_eid = csr(in_lists)

    def link_id(self, a: int, b: int) -> int:
        return self._eid[(a, b)]

    def has_link(self, a: int, b: int) -> bool:
        return (a, b) in self._eid

    def out_neighbors(self, i: int) -> np.ndarray:
        return self.out_dst[self.out_ptr[i]:self.out_ptr[i + 1]]

    def out_links(self, i: int) -> np.ndarray:
        return self.out_eid[self.out_ptr[i]:self.out_ptr[i + 1]]

    def in_neighbors(self, i: int) -> np.ndarray:
        return self.in_src[self.in_ptr[i]:self.in_ptr[i + 1]]

    def in_links(self, i: int) -> np.ndarray:
        return self.in_eid[self.in_ptr[i]:self.in_ptr[i + 1]]

    def out_degree(self, i: int) -> int:
        return int(self.out_ptr[i + 1] - self.out_ptr[i])

    def _reachable(self, start, ptr, node):
        seen = np.zeros(self.n_nodes, dtype=bool)
        seen[start] = True
        stack = [start]
        while stack:
            i = stack.pop()
            for s in range(ptr[i], ptr[i + 1]):
                j = node[s]
                if not seen[j]:
                    seen[j] = True
                    stack.append(j)
        return seen

    def is_strongly_connected(self) -> bool:
        fwd = self._reachable(0, self.out_ptr, self.out_dst)
        bwd = self._reachable(0, self.in_ptr, self.in_src)
        return bool(fwd.all() and bwd.all())

    def hop_distance_to(self, dest: int) -> np.ndarray:
        """BFS hop counts from every node to ``dest`` along directed links."""
        dist = np.full(self.n_nodes, -1, dtype=np.int64)
        dist[dest] = 0
        queue = [dest]
        while queue:
            nxt = []
            for j in queue:
                for s in range(self.in_ptr[j], self.in_ptr[j + 1]):
                    i = self.in_src[s]
                    if dist[i] < 0:
                        dist[i] = dist[j] + 1
                        nxt.append(i)
            queue = nxt
        return dist

    def shortest_paths_to(self, dest: int, weights):
        """Dijkstra distances to ``dest`` plus the next-hop link per node.

        ``weights`` is a per-link array of nonnegative arc lengths.  Ties are
        broken toward the lowest next-hop node id (deterministic).
        """
        import heapq

        dist = np.full(self.n_nodes, np.inf)
        next_link = np.full(self.n_nodes, -1, dtype=np.int64)
        dist[dest] = 0.0
        heap = [(0.0, dest)]
        done = np.zeros(self.n_nodes, dtype=bool)
        while heap:
            d, j = heapq.heappop(heap)
            if done[j]:
                continue
            done[j] = True
            for s in range(self.in_ptr[j], self.in_ptr[j + 1]):
                i = self.in_src[s]
                e = self.in_eid[s]
                nd = d + weights[e]
                if nd < dist[i] or (nd == dist[i] and next_link[i] >= 0
                                    and j < self.links[next_link[i]][1]):
                    dist[i] = nd
                    next_link[i] = e
                    heapq.heappush(heap, (nd, i))
        return dist, next_link


@dataclass(frozen=True)
class LinkCost:
    """Communication cost of one link: ``linear`` weight or ``queue`` capacity."""

    kind: str
    param: float

    def __post_init__(self):
        if self.kind not in ("linear", "queue"):
            raise ValueError(f"unknown link cost kind {self.kind!r}")
        if not self.param > 0:
            raise ValueError("link cost parameter must be positive")

    def evaluate(self, flow: float):
        """Return (cost, first derivative, second derivative) at ``flow``.

        Queue links return an infinite triple at or beyond capacity.
        """
        if flow < 0:
            raise ValueError("flow must be nonnegative")
        if self.kind == "linear":
            return self.param * flow, self.param, 0.0
        cap = self.param
        if flow >= cap - QUEUE_GUARD:
            return INFEASIBLE, INFEASIBLE, INFEASIBLE
        slack = cap - flow
        return flow / slack, cap / slack**2, 2.0 * cap / slack**3

    def curvature_sup(self, cost_cap: float) -> float:
        """Largest second derivative over flows whose cost stays <= cost_cap."""
        if self.kind == "linear":
            return 0.0
        fmax = self.param * cost_cap / (1.0 + cost_cap)
        return 2.0 * self.param / (self.param - fmax) ** 3


@dataclass(frozen=True)
class ComputeCost:
    """Computation cost of one node over per-type rates g^1..g^M."""

    kind: str
    s: float
    c: tuple

    def __post_init__(self):
        if self.kind not in ("sum_linear", "sum_queue"):
            raise ValueError(f"unknown compute cost kind {self.kind!r}")
        if not self.s > 0:
            raise ValueError("compute capacity/weight must be positive")
        object.__setattr__(self, "c", tuple(float(x) for x in self.c))
        if any(not x > 0 for x in self.c):
            raise ValueError("per-type weights must be positive")

    @property
    def n_types(self) -> int:
        return len(self.c)

    def evaluate(self, g):
        """Return (cost, gradient) at the per-type rate vector ``g``."""
        g = np.asarray(g, dtype=float)
        if g.shape != (len(self.c),):
            raise ValueError(f"expected {len(self.c)} rates, got shape {g.shape}")
        if (g < 0).any():
            raise ValueError("computation rates must be nonnegative")
        c = np.asarray(self.c)
        if self.kind == "sum_linear":
            return self.s * float(c @ g), self.s * c
        load = float(c @ g)
        if load >= self.s - QUEUE_GUARD:
            return INFEASIBLE, np.full(len(c), INFEASIBLE)
        slack = self.s - load
        return load / slack, c * (self.s / slack**2)

    def curvature_sup(self, cost_cap: float, ctype: int) -> float:
        """Largest d2C/d(g^m)2 over loads whose cost stays <= cost_cap."""
        if self.kind == "sum_linear":
            return 0.0
        wmax = self.s * cost_cap / (1.0 + cost_cap)
        cm = self.c[ctype]
        return 2.0 * cm**2 * self.s / (self.s - wmax) ** 3


@dataclass(frozen=True)
class Task:
    """One computation task: result destination, type, result ratio, input rates.

    ``rates`` maps source node -> exogenous data rate; ``ctype`` is the
    0-based computation type index.
    """

    dest: int
    ctype: int
    result_ratio: float
    rates: dict

    def rate_vector(self, n_nodes: int) -> np.ndarray:
        r = np.zeros(n_nodes)
        for i, v in self.rates.items():
            r[int(i)] = float(v)
        return r

    @property
    def total_rate(self) -> float:
        return float(sum(self.rates.values()))


class _LinkTable:
    """Vectorized evaluation of all link costs at once."""

    def __init__(self, costs):
        kinds = np.array([0 if c.kind == "linear" else 1 for c in costs])
        self.queue = kinds == 1
        self.param = np.array([c.param for c in costs], dtype=float)

    def evaluate(self, flow):
        cost = self.param * flow
        d1 = self.param.copy()
        feasible = True
        if self.queue.any():
            cap = self.param[self.queue]
            f = flow[self.queue]
            bad = f >= cap - QUEUE_GUARD
            slack = np.where(bad, 1.0, cap - f)
            qc = np.where(bad, INFEASIBLE, f / slack)
            qd = np.where(bad, INFEASIBLE, cap / slack**2)
            cost[self.queue] = qc
            d1[self.queue] = qd
            feasible = not bool(bad.any())
        return cost, d1, feasible


class _CompTable:
    """Vectorized evaluation of all node computation costs at once."""

    def __init__(self, costs):
        kinds = np.array([0 if c.kind == "sum_linear" else 1 for c in costs])
        self.queue = kinds == 1
        self.s = np.array([c.s for c in costs], dtype=float)
        self.c = np.array([c.c for c in costs], dtype=float)

    def evaluate(self, g):
        """g has shape (n_nodes, M); returns (cost, grad, feasible)."""
        load = (self.c * g).sum(axis=1)
        cost = self.s * load
        grad = self.s[:, None] * self.c
        feasible = True
        if self.queue.any():
            s = self.s[self.queue]
            w = load[self.queue]
            bad = w >= s - QUEUE_GUARD
            slack = np.where(bad, 1.0, s - w)
            cost[self.queue] = np.where(bad, INFEASIBLE, w / slack)
            grad[self.queue] = np.where(
                bad[:, None], INFEASIBLE, self.c[self.queue] * (s / slack**2)[:, None]
            )
            feasible = not bool(bad.any())
        return cost, grad, feasible


class Scenario:
    """One problem instance: network + cost functions + task set + seed."""

    def __init__(self, network: Network, link_costs, comp_costs, tasks, seed: int = 0):
        self.network = network
        self.link_costs = tuple(link_costs)
        self.comp_costs = tuple(comp_costs)
        self.tasks = tuple(tasks)
        self.seed = int(seed)
        if len(self.link_costs) != network.n_links:
            raise ValueError("one link cost per link required")
        if len(self.comp_costs) != network.n_nodes:
            raise ValueError("one computation cost per node required")
        self.n_types = self.comp_costs[0].n_types if self.comp_costs else 0
        self.link_table = _LinkTable(self.link_costs)
        self.comp_table = _CompTable(self.comp_costs)
        n, S = network.n_nodes, len(self.tasks)
        self.rates = np.zeros((S, n))
        self.ratios = np.zeros(S)
        self.ctypes = np.zeros(S, dtype=np.int64)
        for t, task in enumerate(self.tasks):
            self.rates[t] = task.rate_vector(n)
            self.ratios[t] = task.result_ratio
            self.ctypes[t] = task.ctype

    @property
    def n_nodes(self) -> int:
        return self.network.n_nodes

    @property
    def n_links(self) -> int:
        return self.network.n_links

    @property
    def n_tasks(self) -> int:
        return len(self.tasks)

    def zero_flow_link_marginals(self) -> np.ndarray:
        """First derivative of every link cost at zero flow."""
        _, d1, _ = self.link_table.evaluate(np.zeros(self.n_links))
        return d1

    def zero_flow_comp_marginals(self) -> np.ndarray:
        """(n_nodes, M) gradient of every computation cost at zero load."""
        _, grad, _ = self.comp_table.evaluate(np.zeros((self.n_nodes, self.n_types)))
        return grad

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "nodes": self.network.n_nodes,
            "links": [
                {"from": a, "to": b,
                 "cost": {"type": lc.kind, "param": lc.param}}
                for (a, b), lc in zip(self.network.links, self.link_costs)
            ],
            "compute": [
                {"node": i, "type": cc.kind, "s": cc.s, "c": list(cc.c)}
                for i, cc in enumerate(self.comp_costs)
            ],
            "tasks": [
                {"dest": t.dest, "m": t.ctype, "a": t.result_ratio,
                 "rates": {str(i): v for i, v in sorted(t.rates.items())}}
                for t in self.tasks
            ],
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "Scenario":
        net = Network(doc["nodes"], [(lk["from"], lk["to"]) for lk in doc["links"]])
        link_costs = [LinkCost(lk["cost"]["type"], lk["cost"]["param"])
                      for lk in doc["links"]]
        comp = sorted(doc["compute"], key=lambda d: d["node"])
        comp_costs = [ComputeCost(d["type"], d["s"], tuple(d["c"])) for d in comp]
        tasks = [
            Task(t["dest"], t["m"], t["a"],
                 {int(i): float(v) for i, v in t["rates"].items()})
            for t in doc["tasks"]
        ]
        return cls(net, link_costs, comp_costs, tasks, doc.get("seed", 0))

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        return cls.from_dict(json.loads(text))


@dataclass
class ValidationReport:
    violations: list

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_scenario(scenario: Scenario) -> ValidationReport:
    """Check structural invariants; returns a report listing each violation."""
    bad = []
    net = scenario.network
    if not net.is_strongly_connected():
        bad.append("network is not strongly connected")
    m = scenario.n_types
    for i, cc in enumerate(scenario.comp_costs):
        if cc.n_types != m:
            bad.append(f"node {i}: computation cost has {cc.n_types} types, expected {m}")
    for t, task in enumerate(scenario.tasks):
        if not (0 <= task.dest < net.n_nodes):
            bad.append(f"task {t}: destination {task.dest} not in network")
        if not (0 <= task.ctype < m):
            bad.append(f"task {t}: computation type {task.ctype} out of range")
        if task.result_ratio < 0:
            bad.append(f"task {t}: result ratio negative")
        elif task.result_ratio == 0:
            bad.append(f"task {t}: result ratio must be positive")
        if any(v < 0 for v in task.rates.values()):
            bad.append(f"task {t}: negative input rate")
        if task.total_rate <= 0:
            bad.append(f"task {t}: no positive input rate")
        if any(not (0 <= int(i) < net.n_nodes) for i in task.rates):
            bad.append(f"task {t}: rate at unknown node")
    seen = set()
    for t, task in enumerate(scenario.tasks):
        key = (task.dest, task.ctype)
        if key in seen:
            bad.append(f"task {t}: duplicate (dest, type) pair {key}")
        seen.add(key)
    return ValidationReport(bad)
