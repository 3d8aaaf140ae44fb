"""Marginal costs of a strategy and the optimality-condition checkers.

Two per-node sensitivities are computed by reverse sweeps over each task's
positive subgraphs:

    data_marginal[i]    d(total cost)/d(exogenous data rate at i)
    result_marginal[i]  d(total cost)/d(result traffic injected at i)

From them the per-option unit marginals follow for *every* out-option,
including zero-fraction ones:

    option cost of link (i,j):   D'_ij + downstream marginal at j
    option cost of computing:    dC_i/dg^m + ratio * result_marginal[i]

A strategy is stationary when, at every node with traffic, all positive
options attain the row minimum of t * option-cost; it is globally optimal
when the same holds for the unit option costs at every node, traffic or not.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .errors import InfeasibleState
from .model import Scenario
from .strategy import FlowState, Strategy, _evaluate


@dataclass
class MarginalState:
    data_marginal: np.ndarray     # (S, n)
    result_marginal: np.ndarray   # (S, n)
    opt_data_self: np.ndarray     # (S, n)  unit cost of the compute option
    opt_data_link: np.ndarray     # (S, L)  unit cost of each data link option
    opt_result_link: np.ndarray   # (S, L)
    dphi_data_self: np.ndarray    # (S, n)  d cost / d fraction
    dphi_data_link: np.ndarray    # (S, L)
    dphi_result_link: np.ndarray  # (S, L)


def assemble_marginal_state(scenario: Scenario, strategy: Strategy,
                            fs: FlowState, pr: np.ndarray, pt: np.ndarray) -> MarginalState:
    """Derive option marginals and strategy derivatives from pr/pt arrays."""
    net = scenario.network
    S = scenario.n_tasks
    opt_data_self = np.zeros((S, scenario.n_nodes))
    opt_data_link = np.zeros((S, scenario.n_links))
    opt_result_link = np.zeros((S, scenario.n_links))
    for t in range(S):
        m = scenario.ctypes[t]
        a = scenario.ratios[t]
        opt_data_self[t] = fs.comp_grad[:, m] + a * pt[t]
        opt_data_link[t] = fs.link_dprime + pr[t, net.link_dst]
        opt_result_link[t] = fs.link_dprime + pt[t, net.link_dst]
    dphi_data_self = fs.t_data * opt_data_self
    dphi_data_link = fs.t_data[:, net.link_src] * opt_data_link
    dphi_result_link = fs.t_result[:, net.link_src] * opt_result_link
    return MarginalState(pr, pt, opt_data_self, opt_data_link, opt_result_link,
                         dphi_data_self, dphi_data_link, dphi_result_link)


def compute_marginals(scenario: Scenario, strategy: Strategy,
                      fs: FlowState) -> MarginalState:
    """Reverse-sweep both marginals for every task, then the option marginals.

    Result marginals come first (the destination is a sink with value 0);
    data marginals use the same node's result marginal through the compute
    option.  Requires a feasible flow state of a loop-free strategy.
    """
    if not fs.feasible:
        raise InfeasibleState("marginals need a finite-cost flow state")
    net = scenario.network
    S = scenario.n_tasks
    pr = np.zeros((S, scenario.n_nodes))
    pt = np.zeros((S, scenario.n_nodes))
    for t in range(S):
        pt[t] = K.marginal_result(
            fs.order_result[t], net.out_ptr, net.out_dst, net.out_eid,
            strategy.result_link[t], fs.link_dprime)
        pr[t] = K.marginal_data(
            fs.order_data[t], net.out_ptr, net.out_dst, net.out_eid,
            strategy.data_self[t], strategy.data_link[t], fs.link_dprime,
            fs.comp_grad[:, scenario.ctypes[t]], scenario.ratios[t], pt[t])
    return assemble_marginal_state(scenario, strategy, fs, pr, pt)


def finite_difference_marginal(scenario: Scenario, strategy: Strategy,
                               node: int, task: int, which: str,
                               eps: float = 1e-6) -> float:
    """Central finite difference of the total cost, the test oracle.

    ``which`` selects the perturbed quantity: "input" injects exogenous data
    at the node, "result" injects exogenous result traffic.
    """
    if which not in ("input", "result"):
        raise ValueError("which must be 'input' or 'result'")
    costs = []
    for sign in (1.0, -1.0):
        add = np.zeros((scenario.n_tasks, scenario.n_nodes))
        add[task, node] = sign * eps
        if which == "input":
            fs = _evaluate(scenario, strategy, rate_add=add)
        else:
            fs = _evaluate(scenario, strategy, result_add=add)
        if not fs.feasible:
            raise InfeasibleState("perturbed state infeasible")
        costs.append(fs.cost)
    return (costs[0] - costs[1]) / (2.0 * eps)


def _iter_rows(scenario, strategy, ms, classes, allowed_data):
    """Yield (phi, values_weighted, values_unit) per simplex row."""
    net = scenario.network
    for t in range(scenario.n_tasks):
        dest = scenario.tasks[t].dest
        for i in range(scenario.n_nodes):
            eids = net.out_links(i)
            if "data" in classes:
                phi = np.concatenate(([strategy.data_self[t, i]],
                                      strategy.data_link[t, eids]))
                w = np.concatenate(([ms.dphi_data_self[t, i]],
                                    ms.dphi_data_link[t, eids]))
                u = np.concatenate(([ms.opt_data_self[t, i]],
                                    ms.opt_data_link[t, eids]))
                if allowed_data is not None:
                    mask = np.concatenate(([True], allowed_data[t, eids]))
                    phi, w, u = phi[mask], w[mask], u[mask]
                yield phi, w, u
            if "result" in classes and i != dest and len(eids):
                yield (strategy.result_link[t, eids],
                       ms.dphi_result_link[t, eids],
                       ms.opt_result_link[t, eids])


def stationarity_gap(marginals: MarginalState, strategy: Strategy,
                     scenario: Scenario, classes=("data", "result"),
                     allowed_data=None) -> float:
    """Largest violation of the necessary condition.

    Every positive-fraction option must attain the row minimum of the
    traffic-weighted derivative d cost / d fraction.  Rows without traffic
    contribute zero no matter what their fractions are.
    """
    gap = 0.0
    for phi, w, _ in _iter_rows(scenario, strategy, marginals, classes, allowed_data):
        lo = w.min()
        pos = phi > 0
        if pos.any():
            gap = max(gap, float((w[pos] - lo).max()))
    return gap


def optimality_gap(marginals: MarginalState, strategy: Strategy,
                   scenario: Scenario, classes=("data", "result"),
                   allowed_data=None) -> float:
    """Largest violation of the sufficient condition for global optimality.

    Same structure as ``stationarity_gap`` but on the unit option marginals,
    with the traffic factors removed, so zero-traffic rows are held to the
    same standard.  Gap zero certifies a feasible loop-free strategy as a
    global optimum.
    """
    gap = 0.0
    for phi, _, u in _iter_rows(scenario, strategy, marginals, classes, allowed_data):
        lo = u.min()
        pos = phi > 0
        if pos.any():
            gap = max(gap, float((u[pos] - lo).max()))
    return gap


def certified_optimal(gap: float, cost: float, tol: float = 1e-6) -> bool:
    """Certification threshold: gap <= tol * (1 + |cost|)."""
    return gap <= tol * (1.0 + abs(cost))


def flow_identity_residual(scenario: Scenario, fs: FlowState,
                           ms: MarginalState) -> float:
    """Residual of the exchange identity linking marginals and flows.

    For every feasible loop-free strategy the rate-weighted data marginals
    equal the derivative-weighted flows:
        sum_i sum_tasks r_i * data_marginal_i
            = sum_links D' F + sum_nodes sum_m dC/dg^m g^m
    """
    lhs = float((scenario.rates * ms.data_marginal).sum())
    rhs = float((fs.link_dprime * fs.link_total).sum()
                + (fs.comp_grad * fs.comp_total).sum())
    return abs(lhs - rhs)


def dump_marginals_csv(path, scenario: Scenario, strategy: Strategy,
                       ms: MarginalState):
    """Audit dump: one row per (task, node, option)."""
    net = scenario.network
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["task", "node", "option", "phi", "delta", "dDdphi"])
        for t in range(scenario.n_tasks):
            dest = scenario.tasks[t].dest
            for i in range(scenario.n_nodes):
                w.writerow([t, i, "compute", repr(strategy.data_self[t, i]),
                            repr(ms.opt_data_self[t, i]),
                            repr(ms.dphi_data_self[t, i])])
                for j, e in zip(net.out_neighbors(i), net.out_links(i)):
                    w.writerow([t, i, f"data->{j}", repr(strategy.data_link[t, e]),
                                repr(ms.opt_data_link[t, e]),
                                repr(ms.dphi_data_link[t, e])])
                    if i != dest:
                        w.writerow([t, i, f"result->{j}",
                                    repr(strategy.result_link[t, e]),
                                    repr(ms.opt_result_link[t, e]),
                                    repr(ms.dphi_result_link[t, e])])
