"""Shared fixtures: the canonical desk instances E0, E1, F3 and helpers.

Node numbering in comments follows the 1-based prose convention; the code
uses 0-based ids (prose node k == index k-1).
"""

import numpy as np
import pytest

from cecflow.model import ComputeCost, LinkCost, Network, Scenario, Task
from cecflow.strategy import Strategy

# E1: nodes {1,2,3}; forward links (1,2),(2,3),(1,3) at linear weight 1,
# reverse links (2,1),(3,2),(3,1) at weight 100; one task (d=3, m=1) with
# a=0.5, r_1=1; SumLinear computation with unit costs (10, 1, 10).
E1_LINKS = [(0, 1), (1, 2), (0, 2), (1, 0), (2, 1), (2, 0)]
E1_WEIGHTS = [1.0, 1.0, 1.0, 100.0, 100.0, 100.0]
E1_COMP = [10.0, 1.0, 10.0]


def _linear_scenario(links, weights, comp, tasks, n=None):
    n = n or (max(max(a, b) for a, b in links) + 1)
    net = Network(n, links)
    link_costs = [LinkCost("linear", w) for w in weights]
    comp_costs = [ComputeCost("sum_linear", 1.0, (c,)) for c in comp]
    return Scenario(net, link_costs, comp_costs, tasks, seed=0)


@pytest.fixture
def e1():
    return _linear_scenario(E1_LINKS, E1_WEIGHTS, E1_COMP,
                            [Task(dest=2, ctype=0, result_ratio=0.5, rates={0: 1.0})])


@pytest.fixture
def e0():
    return _linear_scenario(E1_LINKS, E1_WEIGHTS, E1_COMP,
                            [Task(dest=0, ctype=0, result_ratio=0.5, rates={0: 1.0})])


def e1_optimal_strategy(scn):
    """Data 1->2, compute at 2, result 2->3; other rows point at node 3."""
    st = Strategy(1, 3, scn.n_links)
    net = scn.network
    st.data_link[0, net.link_id(0, 1)] = 1.0   # 1 -> 2
    st.data_self[0, 1] = 1.0                   # compute at 2
    st.data_self[0, 2] = 1.0                   # destination computes locally
    st.result_link[0, net.link_id(1, 2)] = 1.0  # 2 -> 3
    st.result_link[0, net.link_id(0, 2)] = 1.0  # 1 -> 3 (zero traffic)
    return st


def e1_compute_at_source_strategy(scn):
    """Compute everything at node 1, result on the direct link 1->3."""
    st = Strategy(1, 3, scn.n_links)
    net = scn.network
    st.data_self[0, 0] = 1.0
    st.data_self[0, 1] = 1.0
    st.data_self[0, 2] = 1.0
    st.result_link[0, net.link_id(0, 2)] = 1.0
    st.result_link[0, net.link_id(1, 2)] = 1.0
    return st


@pytest.fixture
def e1_optimal(e1):
    return e1_optimal_strategy(e1)


# F3: the stationary-but-suboptimal construction.  Nodes {1,2,3,4}, forward
# links (1,2),(2,3),(2,4),(3,4),(1,4) with weights 1,1,3,1,2, reverses at
# 100; unit compute costs (10,10,1,1); one task (d=4, m=1), a=1, r_1=1.
# The tested strategy routes 1->2->3, computes at 3, sends the result 3->4,
# and node 4's zero-traffic data row points backward at node 2.  Every
# traffic-carrying row is stationary, but node 4's data row violates the
# unit-marginal ordering, and the true optimum (route 1->4, compute at 4,
# cost 3) beats the strategy's cost 4.
F3_LINKS = [(0, 1), (1, 2), (1, 3), (2, 3), (0, 3),
            (1, 0), (2, 1), (3, 1), (3, 2), (3, 0)]
F3_WEIGHTS = [1.0, 1.0, 3.0, 1.0, 2.0, 100.0, 100.0, 100.0, 100.0, 100.0]
F3_COMP = [10.0, 10.0, 1.0, 1.0]


@pytest.fixture
def f3():
    return _linear_scenario(F3_LINKS, F3_WEIGHTS, F3_COMP,
                            [Task(dest=3, ctype=0, result_ratio=1.0, rates={0: 1.0})])


def f3_stationary_strategy(scn):
    st = Strategy(1, 4, scn.n_links)
    net = scn.network
    st.data_link[0, net.link_id(0, 1)] = 1.0   # 1 -> 2
    st.data_link[0, net.link_id(1, 2)] = 1.0   # 2 -> 3
    st.data_self[0, 2] = 1.0                   # compute at 3
    st.data_link[0, net.link_id(3, 1)] = 1.0   # 4 -> 2 (zero traffic)
    st.result_link[0, net.link_id(2, 3)] = 1.0  # 3 -> 4
    st.result_link[0, net.link_id(1, 2)] = 1.0  # 2 -> 3 (zero traffic)
    st.result_link[0, net.link_id(0, 3)] = 1.0  # 1 -> 4 (zero traffic)
    return st


@pytest.fixture
def f3_stationary(f3):
    return f3_stationary_strategy(f3)
