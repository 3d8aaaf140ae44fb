"""Distributed scaled-gradient-projection optimizer.

Each (node, task, flow class) row takes a projection step

    argmin_{v in feasible set}  u . (v - phi) + (v - phi)^T M (v - phi)

where u is the row of unit option marginals, M a diagonal scaling built from
curvature bounds and remaining-hop counts, and the feasible set the simplex
with blocked out-neighbors forced to zero.  Blocking keeps every iterate
loop-free: a neighbor is blocked when its marginal is not strictly smaller,
or when it can reach (through positive fractions) a link whose marginal
ordering is already violated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .errors import InfeasibleState, LoopDetected, NoFeasibleDirection
from .gradients import (MarginalState, compute_marginals, optimality_gap,
                        stationarity_gap)
from .model import Scenario
from .strategy import FlowState, Strategy, detect_loops, evaluate_flows, initial_strategy


@dataclass
class UpdateConfig:
    max_iters: int = 500
    tolerance: float = 1e-6          # on the optimality gap, relative to 1+|cost|
    schedule: str = "synchronous"    # or "asynchronous"
    seed: int = 0
    eps_scale: float = 1e-6          # floor for the scaling diagonal
    scaling: str = "sgp"             # "sgp" | "gp"
    gp_stepsize: float = 0.1


@dataclass
class CurvatureBounds:
    """Second-derivative bounds over the cost sublevel set {D <= d0}."""

    d0: float
    link: np.ndarray   # (L,) sup of D'' per link
    comp: np.ndarray   # (n, M) sup of d2C/d(g^m)2 per node and type
    a_max: float       # max over links


def curvature_bounds(scenario: Scenario, d0: float) -> CurvatureBounds:
    """Per-link curvature bounds and their maximum at reference cost ``d0``.

    A linear link has bound 0; a queue link's bound is its second derivative
    at the largest flow whose cost stays below d0.  Computation options get
    the analogous per-type bound.
    """
    link = np.array([lc.curvature_sup(d0) for lc in scenario.link_costs])
    comp = np.array([[cc.curvature_sup(d0, m) for m in range(scenario.n_types)]
                     for cc in scenario.comp_costs])
    a_max = float(link.max()) if len(link) else 0.0
    return CurvatureBounds(d0, link, comp, a_max)


def hop_extents(scenario: Scenario, strategy: Strategy, fs: FlowState):
    """Remaining-hop counts along positive paths, per task.

    h_result[t, j] is the longest positive result path from j to the task's
    destination; h_data[t, j] the longest positive data path from j to a
    computing node, with the computation hop counting zero.
    """
    net = scenario.network
    S, n = scenario.n_tasks, scenario.n_nodes
    h_data = np.zeros((S, n), dtype=np.int64)
    h_result = np.zeros((S, n), dtype=np.int64)
    for t in range(S):
        order = fs.order_result[t]
        for k in range(n - 1, -1, -1):
            i = order[k]
            best = 0
            for j, e in zip(net.out_neighbors(i), net.out_links(i)):
                if strategy.result_link[t, e] > 0:
                    best = max(best, 1 + h_result[t, j])
            h_result[t, i] = best
        order = fs.order_data[t]
        for k in range(n - 1, -1, -1):
            i = order[k]
            best = 0
            for j, e in zip(net.out_neighbors(i), net.out_links(i)):
                if strategy.data_link[t, e] > 0:
                    best = max(best, 1 + h_data[t, j])
            h_data[t, i] = best
    return h_data, h_result


def _blocked_class(scenario, phi_link, marg):
    """Slot-aligned blocked mask for one task and flow class."""
    net = scenario.network
    positive = phi_link > 0
    improper = positive & (marg[net.link_dst] >= marg[net.link_src])
    tagged = np.zeros(scenario.n_nodes, dtype=bool)
    stack = list(np.unique(net.link_src[improper]))
    tagged[stack] = True
    while stack:
        p = stack.pop()
        for q, e in zip(net.in_neighbors(p), net.in_links(p)):
            if positive[e] and not tagged[q]:
                tagged[q] = True
                stack.append(int(q))
    dst = net.out_dst
    src = net.link_src[net.out_eid]
    return (marg[dst] >= marg[src]) | tagged[dst]


@dataclass
class BlockedSets:
    """Blocked out-neighbor masks, slot-aligned with the out-CSR adjacency."""

    data: np.ndarray    # (S, L) bool
    result: np.ndarray  # (S, L) bool

    def neighbors(self, scenario, t, i, cls):
        """The blocked set as plain node ids, for inspection."""
        net = scenario.network
        mask = (self.data if cls == "data" else self.result)
        sl = slice(net.out_ptr[i], net.out_ptr[i + 1])
        return {int(j) for j, b in zip(net.out_dst[sl], mask[t][sl]) if b}


def blocked_sets(scenario: Scenario, strategy: Strategy,
                 ms: MarginalState) -> BlockedSets:
    """Blocked out-neighbors per (task, flow class).

    A neighbor is blocked when its node marginal is >= the sender's, or when
    it is tagged: some positive path from it contains a link whose marginal
    ordering is violated.  The local compute option is never blocked.
    """
    S = scenario.n_tasks
    data = np.zeros((S, scenario.n_links), dtype=bool)
    result = np.zeros((S, scenario.n_links), dtype=bool)
    for t in range(S):
        data[t] = _blocked_class(scenario, strategy.data_link[t],
                                 ms.data_marginal[t])
        result[t] = _blocked_class(scenario, strategy.result_link[t],
                                   ms.result_marginal[t])
    return BlockedSets(data, result)


def scaling_row(scenario, cfg, curv, fs, h_data, h_result, t, i, cls, free):
    """Diagonal scaling entries for one row, floored for well-posedness.

    ``free`` marks the unblocked options of the row ([compute] + links for
    the data class, links only for the result class).
    """
    if cfg.scaling == "gp":
        return np.full(len(free), 1.0 / (2.0 * cfg.gp_stepsize))
    net = scenario.network
    eids = net.out_links(i)
    nbrs = net.out_neighbors(i)
    n_free = int(np.count_nonzero(free))
    if cls == "data":
        traffic = fs.t_data[t, i]
        entries = np.empty(1 + len(eids))
        entries[0] = curv.comp[i, scenario.ctypes[t]]
        entries[1:] = curv.link[eids] + n_free * h_data[t, nbrs] * curv.a_max
    else:
        traffic = fs.t_result[t, i]
        entries = curv.link[eids] + n_free * h_result[t, nbrs] * curv.a_max
    entries = (traffic / 2.0) * entries
    floor = cfg.eps_scale * (1.0 + curv.a_max)
    return np.maximum(entries, floor)


def project_scaled(phi_row, delta_row, scale_row, blocked) -> np.ndarray:
    """Exact scaled projection of one fraction row onto its feasible simplex.

    Blocked options are forced to zero; raises NoFeasibleDirection when every
    option is blocked.
    """
    free = ~np.asarray(blocked, dtype=bool)
    if not free.any():
        raise NoFeasibleDirection("all options blocked")
    return K.project_row(np.asarray(phi_row, dtype=float),
                         np.asarray(delta_row, dtype=float),
                         np.asarray(scale_row, dtype=float), free)


def update_node_task(scenario, strategy_out, ms, fs, curv, h_data, h_result,
                     blocked, cfg, t, i, cls, allowed_data=None) -> bool:
    """Recompute one row of ``strategy_out`` from the given marginal snapshot.

    Returns True when the row changed.  Result rows whose options are all
    blocked are left unchanged.
    """
    net = scenario.network
    eids = net.out_links(i)
    sl = slice(net.out_ptr[i], net.out_ptr[i + 1])
    if cls == "data":
        phi = np.concatenate(([strategy_out.data_self[t, i]],
                              strategy_out.data_link[t, eids]))
        delta = np.concatenate(([ms.opt_data_self[t, i]],
                                ms.opt_data_link[t, eids]))
        blk = np.concatenate(([False], blocked.data[t][sl]))
        if allowed_data is not None:
            blk |= np.concatenate(([False], ~allowed_data[t, eids]))
    else:
        if i == scenario.tasks[t].dest or len(eids) == 0:
            return False
        phi = strategy_out.result_link[t, eids]
        delta = ms.opt_result_link[t, eids]
        blk = blocked.result[t][sl].copy()
        if blk.all():
            return False
    free = ~blk
    scale = scaling_row(scenario, cfg, curv, fs, h_data, h_result, t, i, cls, free)
    new_row = project_scaled(phi, delta, scale, blk)
    changed = bool(np.abs(new_row - phi).max() > 1e-15)
    if cls == "data":
        strategy_out.data_self[t, i] = new_row[0]
        strategy_out.data_link[t, eids] = new_row[1:]
    else:
        strategy_out.result_link[t, eids] = new_row
    return changed


def synchronous_sweep(scenario, strategy, fs, ms, curv, cfg,
                      classes=("data", "result"), allowed_data=None,
                      use_blocking=True) -> tuple:
    """Update every row from one marginal snapshot; returns (new, n_changed)."""
    h_data, h_result = hop_extents(scenario, strategy, fs)
    if use_blocking:
        blocked = blocked_sets(scenario, strategy, ms)
    else:
        blocked = BlockedSets(
            np.zeros((scenario.n_tasks, scenario.n_links), dtype=bool),
            np.zeros((scenario.n_tasks, scenario.n_links), dtype=bool))
    new = strategy.copy()
    changed = 0
    for t in range(scenario.n_tasks):
        for cls in classes:
            for i in range(scenario.n_nodes):
                if update_node_task(scenario, new, ms, fs, curv, h_data,
                                    h_result, blocked, cfg, t, i, cls,
                                    allowed_data):
                    changed += 1
    new.normalize(scenario)
    return new, changed


@dataclass
class RunResult:
    strategy: Strategy
    cost: float
    gap: float
    iterations: int
    converged: bool
    termination: str
    trajectory: list = field(repr=False, default_factory=list)

    def trajectory_rows(self):
        return [(r["iter"], r["cost"], r["optimality_gap"],
                 r["stationarity_gap"], r["updates"]) for r in self.trajectory]


def _backtrack_feasible(scenario, old, new):
    """Mix back toward ``old`` until the flows are finite again."""
    beta = 1.0
    for _ in range(60):
        mix = Strategy(new.n_tasks, new.n_nodes, new.n_links,
                       (1 - beta) * old.data_self + beta * new.data_self,
                       (1 - beta) * old.data_link + beta * new.data_link,
                       (1 - beta) * old.result_link + beta * new.result_link)
        mix.normalize(scenario)
        fs = evaluate_flows(scenario, mix)
        if fs.feasible:
            return mix, fs
        beta *= 0.5
    raise InfeasibleState("could not recover a feasible iterate")


def run(scenario: Scenario, config: UpdateConfig, initial: Strategy = None,
        classes=("data", "result"), allowed_data=None,
        use_blocking=True) -> RunResult:
    """Drive the optimizer to the certified optimum or the iteration cap.

    The synchronous schedule updates every row of every task from a single
    marginal snapshot per iteration; the asynchronous schedule updates one
    uniformly random (node, task, class) row per iteration with fresh
    marginals.  Terminates when the optimality gap falls below
    tolerance * (1 + |cost|).
    """
    strategy = (initial.copy() if initial is not None
                else initial_strategy(scenario))
    strategy.normalize(scenario)
    fs = evaluate_flows(scenario, strategy)
    if not fs.feasible:
        raise InfeasibleState("initial strategy has infinite cost")
    curv = curvature_bounds(scenario, fs.cost)
    rng = np.random.default_rng(config.seed)

    if config.schedule == "asynchronous":
        rows = [(t, i, "data") for t in range(scenario.n_tasks)
                for i in range(scenario.n_nodes) if "data" in classes]
        rows += [(t, i, "result") for t in range(scenario.n_tasks)
                 for i in range(scenario.n_nodes)
                 if "result" in classes and i != scenario.tasks[t].dest]

    trajectory = []
    termination = "max_iters"
    converged = False
    gap = math.inf
    it = 0
    while True:
        ms = compute_marginals(scenario, strategy, fs)
        gap = optimality_gap(ms, strategy, scenario, classes, allowed_data)
        sgap = stationarity_gap(ms, strategy, scenario, classes, allowed_data)
        record = {"iter": it, "cost": fs.cost, "optimality_gap": gap,
                  "stationarity_gap": sgap, "updates": 0}
        trajectory.append(record)
        if gap <= config.tolerance * (1.0 + abs(fs.cost)):
            converged = True
            termination = "gap"
            break
        if it >= config.max_iters:
            break
        if config.schedule == "asynchronous":
            t, i, cls = rows[int(rng.integers(len(rows)))]
            h_data, h_result = hop_extents(scenario, strategy, fs)
            blocked = (blocked_sets(scenario, strategy, ms) if use_blocking
                       else BlockedSets(
                           np.zeros((scenario.n_tasks, scenario.n_links), dtype=bool),
                           np.zeros((scenario.n_tasks, scenario.n_links), dtype=bool)))
            new = strategy.copy()
            changed = update_node_task(scenario, new, ms, fs, curv, h_data,
                                       h_result, blocked, config, t, i, cls,
                                       allowed_data)
            new.normalize(scenario)
            record["updates"] = int(changed)
        else:
            new, changed = synchronous_sweep(scenario, strategy, fs, ms, curv,
                                             config, classes, allowed_data,
                                             use_blocking)
            record["updates"] = changed
        report = detect_loops(new, scenario)
        if not report.ok:
            t_bad, cls_bad, cyc = report.loops[0]
            raise LoopDetected(t_bad, cls_bad, cyc)
        new_fs = evaluate_flows(scenario, new)
        if not new_fs.feasible:
            new, new_fs = _backtrack_feasible(scenario, strategy, new)
        strategy, fs = new, new_fs
        it += 1

    return RunResult(strategy, fs.cost, gap, it, converged, termination,
                     trajectory)
