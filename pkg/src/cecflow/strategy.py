"""Routing/computation strategies and the flows they induce.

A strategy assigns, per node and task, the fraction of incoming data routed
to each out-neighbor or into the local processor (option 0), and the
fraction of result traffic routed to each out-neighbor.  Flows are evaluated
by exact topological sweeps, so loop-freedom is a hard precondition: the
positive-fraction data and result subgraphs of each task must be acyclic.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .errors import LoopDetected, NoFeasibleStart
from .model import Scenario

# Fractions below this are snapped to zero and the row renormalized, so the
# "positive fraction" subgraphs are well defined.
SNAP = 1e-12


class Strategy:
    """Dense per-(task, node) forwarding/computation fractions.

    data_self[t, i]   fraction of task t's data computed at node i
    data_link[t, e]   fraction of task t's data at the link-e source sent on e
    result_link[t, e] same for result traffic
    """

    def __init__(self, n_tasks: int, n_nodes: int, n_links: int,
                 data_self=None, data_link=None, result_link=None):
        self.n_tasks = n_tasks
        self.n_nodes = n_nodes
        self.n_links = n_links
        z = lambda shape: np.zeros(shape)
        self.data_self = z((n_tasks, n_nodes)) if data_self is None else data_self
        self.data_link = z((n_tasks, n_links)) if data_link is None else data_link
        self.result_link = z((n_tasks, n_links)) if result_link is None else result_link

    def copy(self) -> "Strategy":
        return Strategy(self.n_tasks, self.n_nodes, self.n_links,
                        self.data_self.copy(), self.data_link.copy(),
                        self.result_link.copy())

    # -- row access --------------------------------------------------------

    def data_row(self, scenario: Scenario, t: int, i: int) -> np.ndarray:
        """Fractions over node i's data options: [compute, out-links...]."""
        eids = scenario.network.out_links(i)
        return np.concatenate(([self.data_self[t, i]], self.data_link[t, eids]))

    def result_row(self, scenario: Scenario, t: int, i: int) -> np.ndarray:
        eids = scenario.network.out_links(i)
        return self.result_link[t, eids]

    def set_data_row(self, scenario: Scenario, t: int, i: int, row):
        eids = scenario.network.out_links(i)
        self.data_self[t, i] = row[0]
        self.data_link[t, eids] = row[1:]

    def set_result_row(self, scenario: Scenario, t: int, i: int, row):
        eids = scenario.network.out_links(i)
        self.result_link[t, eids] = row

    # -- hygiene -------------------------------------------------------------

    def normalize(self, scenario: Scenario) -> "Strategy":
        """Snap tiny fractions to zero and renormalize each simplex row."""
        net = scenario.network
        for t in range(self.n_tasks):
            dest = scenario.tasks[t].dest
            for i in range(self.n_nodes):
                row = self.data_row(scenario, t, i)
                row[row < SNAP] = 0.0
                tot = row.sum()
                if tot <= 0:
                    row[:] = 0.0
                    row[0] = 1.0
                else:
                    row /= tot
                self.set_data_row(scenario, t, i, row)
                rrow = self.result_row(scenario, t, i)
                rrow[rrow < SNAP] = 0.0
                tot = rrow.sum()
                if i == dest:
                    rrow[:] = 0.0
                elif tot > 0:
                    rrow /= tot
                self.set_result_row(scenario, t, i, rrow)
        return self

    def validate(self, scenario: Scenario):
        """Raise ValueError if any simplex invariant is violated."""
        for arr, name in ((self.data_self, "data_self"),
                          (self.data_link, "data_link"),
                          (self.result_link, "result_link")):
            if (arr < 0).any() or (arr > 1 + 1e-9).any():
                raise ValueError(f"{name} fractions outside [0, 1]")
        for t in range(self.n_tasks):
            dest = scenario.tasks[t].dest
            for i in range(self.n_nodes):
                tot = self.data_row(scenario, t, i).sum()
                if abs(tot - 1.0) > 1e-9:
                    raise ValueError(f"data row of node {i}, task {t} sums to {tot}")
                tot = self.result_row(scenario, t, i).sum()
                want = 0.0 if i == dest else 1.0
                if abs(tot - want) > 1e-9:
                    raise ValueError(f"result row of node {i}, task {t} sums to {tot}")

    # -- serialization -----------------------------------------------------

    def to_dict(self, scenario: Scenario) -> dict:
        doc = {}
        for t, task in enumerate(scenario.tasks):
            key = f"{task.dest}:{task.ctype}"
            nodes = {}
            for i in range(self.n_nodes):
                data = {}
                if self.data_self[t, i] > 0:
                    data["0"] = self.data_self[t, i]
                result = {}
                for j, e in zip(scenario.network.out_neighbors(i),
                                scenario.network.out_links(i)):
                    if self.data_link[t, e] > 0:
                        data[str(int(j))] = self.data_link[t, e]
                    if self.result_link[t, e] > 0:
                        result[str(int(j))] = self.result_link[t, e]
                nodes[str(i)] = {"data": data, "result": result}
            doc[key] = nodes
        return doc

    def to_json(self, scenario: Scenario) -> str:
        return json.dumps(self.to_dict(scenario), sort_keys=True)

    @classmethod
    def from_dict(cls, scenario: Scenario, doc: dict) -> "Strategy":
        st = cls(scenario.n_tasks, scenario.n_nodes, scenario.n_links)
        keys = {f"{task.dest}:{task.ctype}": t for t, task in enumerate(scenario.tasks)}
        for key, nodes in doc.items():
            t = keys[key]
            for istr, rows in nodes.items():
                i = int(istr)
                for jstr, frac in rows.get("data", {}).items():
                    if jstr == "0":
                        st.data_self[t, i] = float(frac)
                    else:
                        e = scenario.network.link_id(i, int(jstr))
                        st.data_link[t, e] = float(frac)
                for jstr, frac in rows.get("result", {}).items():
                    e = scenario.network.link_id(i, int(jstr))
                    st.result_link[t, e] = float(frac)
        return st

    @classmethod
    def from_json(cls, scenario: Scenario, text: str) -> "Strategy":
        return cls.from_dict(scenario, json.loads(text))


@dataclass
class LoopReport:
    """Per-task acyclicity report with one witness cycle per violation."""

    loops: list  # of (task_index, flow_class, cycle_nodes)

    @property
    def ok(self) -> bool:
        return not self.loops


def _find_cycle(net, active_of_slot):
    """Extract a witness cycle from a subgraph known to be cyclic."""
    n = net.n_nodes
    color = np.zeros(n, dtype=np.int8)  # 0 new, 1 on stack, 2 done
    parent = {}
    for start in range(n):
        if color[start]:
            continue
        stack = [(start, iter(range(net.out_ptr[start], net.out_ptr[start + 1])))]
        color[start] = 1
        while stack:
            i, slots = stack[-1]
            advanced = False
            for s in slots:
                if not active_of_slot[s]:
                    continue
                j = int(net.out_dst[s])
                if color[j] == 1:
                    cycle = [j, i]
                    k = i
                    while k != j:
                        k = parent[k]
                        cycle.append(k)
                    cycle.reverse()
                    return cycle
                if color[j] == 0:
                    color[j] = 1
                    parent[j] = i
                    stack.append((j, iter(range(net.out_ptr[j], net.out_ptr[j + 1]))))
                    advanced = True
                    break
            if not advanced:
                color[i] = 2
                stack.pop()
    return []


def detect_loops(strategy: Strategy, scenario: Scenario) -> LoopReport:
    """Check each task's positive data and result subgraphs for cycles.

    Concatenations of a data path and a result path of the same task are not
    loops; the two flow classes are checked independently.
    """
    net = scenario.network
    loops = []
    for t in range(strategy.n_tasks):
        for cls_name, phi in (("data", strategy.data_link[t]),
                              ("result", strategy.result_link[t])):
            active = phi[net.out_eid] > 0.0
            _, count = K.topo_order(net.n_nodes, net.out_ptr, net.out_dst, active)
            if count < net.n_nodes:
                loops.append((t, cls_name, _find_cycle(net, active)))
    return LoopReport(loops)


@dataclass
class FlowState:
    """All traffics, flows, aggregates, and the total cost of a strategy."""

    t_data: np.ndarray      # (S, n) total data traffic per node
    t_result: np.ndarray    # (S, n) total result traffic per node
    g: np.ndarray           # (S, n) computation flow per node
    f_data: np.ndarray      # (S, L) data flow per link
    f_result: np.ndarray    # (S, L) result flow per link
    link_total: np.ndarray  # (L,) aggregate link flow
    comp_total: np.ndarray  # (n, M) aggregate per-type computation
    link_cost: np.ndarray   # (L,)
    link_dprime: np.ndarray  # (L,) first derivative at the aggregate flow
    comp_cost: np.ndarray   # (n,)
    comp_grad: np.ndarray   # (n, M)
    cost: float
    feasible: bool
    order_data: np.ndarray = field(repr=False, default=None)    # (S, n)
    order_result: np.ndarray = field(repr=False, default=None)  # (S, n)

    def residuals(self, scenario: Scenario):
        """Max residual of the two conservation identities, for verification."""
        net = scenario.network
        rd = rr = 0.0
        for t in range(scenario.n_tasks):
            a = scenario.ratios[t]
            for i in range(scenario.n_nodes):
                ins = net.in_links(i)
                got = self.f_data[t, ins].sum() + scenario.rates[t, i]
                rd = max(rd, abs(self.t_data[t, i] - got))
                got = self.f_result[t, ins].sum() + a * self.g[t, i]
                rr = max(rr, abs(self.t_result[t, i] - got))
        return rd, rr


def total_cost(flow_state: FlowState) -> float:
    """Total cost; +inf marker when the state is infeasible."""
    return flow_state.cost if flow_state.feasible else math.inf


def _evaluate(scenario: Scenario, strategy: Strategy, rate_add=None, result_add=None):
    net = scenario.network
    S, n, L = scenario.n_tasks, scenario.n_nodes, scenario.n_links
    t_data = np.zeros((S, n))
    t_result = np.zeros((S, n))
    g = np.zeros((S, n))
    f_data = np.zeros((S, L))
    f_result = np.zeros((S, L))
    order_data = np.zeros((S, n), dtype=np.int32)
    order_result = np.zeros((S, n), dtype=np.int32)
    for t in range(S):
        active = strategy.data_link[t][net.out_eid] > 0.0
        order, count = K.topo_order(n, net.out_ptr, net.out_dst, active)
        if count < n:
            raise LoopDetected(t, "data", _find_cycle(net, active))
        order_data[t] = order
        rates = scenario.rates[t]
        if rate_add is not None:
            rates = rates + rate_add[t]
        t_data[t], g[t], f_data[t] = K.sweep_data(
            order, net.out_ptr, net.out_dst, net.out_eid,
            strategy.data_self[t], strategy.data_link[t], rates)

        active = strategy.result_link[t][net.out_eid] > 0.0
        order, count = K.topo_order(n, net.out_ptr, net.out_dst, active)
        if count < n:
            raise LoopDetected(t, "result", _find_cycle(net, active))
        order_result[t] = order
        seed = scenario.ratios[t] * g[t]
        if result_add is not None:
            seed = seed + result_add[t]
        t_result[t], f_result[t] = K.sweep_result(
            order, net.out_ptr, net.out_dst, net.out_eid,
            strategy.result_link[t], seed)

    link_total = f_data.sum(axis=0) + f_result.sum(axis=0)
    comp_total = np.zeros((n, scenario.n_types))
    for t in range(S):
        comp_total[:, scenario.ctypes[t]] += g[t]
    link_cost, link_dprime, lfeas = scenario.link_table.evaluate(link_total)
    comp_cost, comp_grad, cfeas = scenario.comp_table.evaluate(comp_total)
    feasible = lfeas and cfeas
    cost = float(link_cost.sum() + comp_cost.sum()) if feasible else math.inf
    return FlowState(t_data, t_result, g, f_data, f_result, link_total,
                     comp_total, link_cost, link_dprime, comp_cost, comp_grad,
                     cost, feasible, order_data, order_result)


def evaluate_flows(scenario: Scenario, strategy: Strategy) -> FlowState:
    """Evaluate all induced flows and the total cost of a loop-free strategy.

    Raises LoopDetected (with a witness cycle) on a data or result loop.
    """
    return _evaluate(scenario, strategy)


# -- initial strategy ---------------------------------------------------------


def _all_pairs_distance(scenario: Scenario) -> np.ndarray:
    """Floyd-Warshall over zero-flow link marginals."""
    n = scenario.n_nodes
    w0 = scenario.zero_flow_link_marginals()
    dist = np.full((n, n), np.inf)
    np.fill_diagonal(dist, 0.0)
    for e, (a, b) in enumerate(scenario.network.links):
        dist[a, b] = min(dist[a, b], w0[e])
    for k in range(n):
        np.minimum(dist, dist[:, k, None] + dist[None, k, :], out=dist)
    return dist


def _min_hop_tree(net, target: int) -> np.ndarray:
    """Per-node next-hop link id on a min-hop path to ``target`` (-1 at target)."""
    hops = net.hop_distance_to(target)
    next_link = np.full(net.n_nodes, -1, dtype=np.int64)
    for i in range(net.n_nodes):
        if i == target:
            continue
        best = -1
        for j, e in zip(net.out_neighbors(i), net.out_links(i)):
            if hops[j] == hops[i] - 1:
                if best < 0 or j < net.links[best][1]:
                    best = int(e)
        next_link[i] = best
    return next_link


def _routes_toward(strategy, scenario, t, tree, spread_hops=None):
    """Point every data row at the tree toward the computation node.

    With ``spread_hops`` given, node i keeps fraction 1/(hops+1) locally so
    each task's data is split equally across the nodes of its path.
    """
    for i in range(scenario.n_nodes):
        e = tree[i]
        if e < 0:
            strategy.data_self[t, i] = 1.0
        elif spread_hops is None:
            strategy.data_link[t, e] = 1.0
        else:
            keep = 1.0 / (spread_hops[i] + 1.0)
            strategy.data_self[t, i] = keep
            strategy.data_link[t, e] = 1.0 - keep


def initial_strategy(scenario: Scenario) -> Strategy:
    """Loop-free feasible start.

    Each task routes all data on min-hop paths to the computation node that
    minimizes the zero-flow linearized total cost, and results on min-hop
    paths to the destination.  If the joint flows are infeasible, each task's
    data is instead spread equally across the nodes of its data path; if that
    is still infeasible, NoFeasibleStart is raised.
    """
    net = scenario.network
    dist = _all_pairs_distance(scenario)
    cgrad0 = scenario.zero_flow_comp_marginals()

    def build(spread: bool) -> Strategy:
        st = Strategy(scenario.n_tasks, scenario.n_nodes, scenario.n_links)
        for t, task in enumerate(scenario.tasks):
            r = scenario.rates[t]
            total = r.sum()
            score = (r @ dist) + total * cgrad0[:, task.ctype] \
                + total * task.result_ratio * dist[:, task.dest]
            vstar = int(np.argmin(score))
            tree = _min_hop_tree(net, vstar)
            hops = net.hop_distance_to(vstar) if spread else None
            _routes_toward(st, scenario, t, tree, hops)
            rtree = _min_hop_tree(net, task.dest)
            for i in range(scenario.n_nodes):
                if i != task.dest:
                    st.result_link[t, rtree[i]] = 1.0
        return st

    st = build(spread=False)
    fs = evaluate_flows(scenario, st)
    if fs.feasible:
        return st
    st = build(spread=True)
    fs = evaluate_flows(scenario, st)
    if fs.feasible:
        return st
    raise NoFeasibleStart("no finite-cost loop-free start found")


def random_loop_free_strategy(scenario: Scenario, rng) -> Strategy:
    """Random loop-free strategy with fractions defined at every node.

    Data rows respect a random node permutation (links only point forward),
    result rows point strictly down the hop-distance gradient toward the
    destination; both subgraphs are therefore acyclic by construction.
    """
    net = scenario.network
    st = Strategy(scenario.n_tasks, scenario.n_nodes, scenario.n_links)
    for t, task in enumerate(scenario.tasks):
        perm = rng.permutation(scenario.n_nodes)
        rank = np.empty(scenario.n_nodes, dtype=np.int64)
        rank[perm] = np.arange(scenario.n_nodes)
        for i in range(scenario.n_nodes):
            opts = [(-1, 0)]  # local computation
            for j, e in zip(net.out_neighbors(i), net.out_links(i)):
                if rank[j] > rank[i]:
                    opts.append((int(e), int(j)))
            w = rng.random(len(opts))
            w[rng.random(len(opts)) < 0.4] = 0.0
            if w.sum() <= 0:
                w[0] = 1.0
            w /= w.sum()
            st.data_self[t, i] = w[0]
            for (e, _), frac in zip(opts[1:], w[1:]):
                st.data_link[t, e] = frac
        hops = net.hop_distance_to(task.dest)
        for i in range(scenario.n_nodes):
            if i == task.dest:
                continue
            opts = [int(e) for j, e in zip(net.out_neighbors(i), net.out_links(i))
                    if hops[j] < hops[i]]
            w = rng.random(len(opts))
            w[rng.random(len(opts)) < 0.4] = 0.0
            if w.sum() <= 0:
                w[rng.integers(len(opts))] = 1.0
            w /= w.sum()
            for e, frac in zip(opts, w):
                st.result_link[t, e] = frac
    return st.normalize(scenario)
