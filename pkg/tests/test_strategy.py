import math

import numpy as np
import pytest

from cecflow.errors import LoopDetected, NoFeasibleStart
from cecflow.model import ComputeCost, LinkCost, Network, Scenario, Task
from cecflow.strategy import (Strategy, detect_loops, evaluate_flows,
                              initial_strategy, random_loop_free_strategy,
                              total_cost)

from _gen import random_scenario
from conftest import (E1_COMP, E1_LINKS, E1_WEIGHTS, _linear_scenario,
                      e1_compute_at_source_strategy, e1_optimal_strategy)


def test_detect_loops_forward_chain(e1, e1_optimal):
    assert detect_loops(e1_optimal, e1).ok


def test_detect_loops_two_cycle(e1):
    st = Strategy(1, 3, e1.n_links)
    st.data_link[0, e1.network.link_id(0, 1)] = 1.0
    st.data_link[0, e1.network.link_id(1, 0)] = 1.0
    st.data_self[0, 2] = 1.0
    report = detect_loops(st, e1)
    assert not report.ok
    t, cls, cycle = report.loops[0]
    assert (t, cls) == (0, "data")
    assert set(cycle) == {0, 1}


def test_detect_loops_sink_destination(e0):
    st = e1_compute_at_source_strategy(e0)
    st.result_link[0] = 0.0  # destination == source: no result rows needed
    st.result_link[0, e0.network.link_id(1, 2)] = 1.0
    st.result_link[0, e0.network.link_id(2, 0)] = 1.0
    assert detect_loops(st, e0).ok


def test_data_result_concatenation_is_not_a_loop(e0):
    # data 1->2, compute at 2, result 2->1: the concatenation closes a ring
    # but each class on its own is acyclic.
    st = Strategy(1, 3, e0.n_links)
    net = e0.network
    st.data_link[0, net.link_id(0, 1)] = 1.0
    st.data_self[0, 1] = 1.0
    st.data_self[0, 2] = 1.0
    st.result_link[0, net.link_id(1, 0)] = 1.0
    st.result_link[0, net.link_id(2, 0)] = 1.0
    assert detect_loops(st, e0).ok


def test_evaluate_flows_e1_optimum(e1, e1_optimal):
    fs = evaluate_flows(e1, e1_optimal)
    net = e1.network
    assert fs.f_data[0, net.link_id(0, 1)] == pytest.approx(1.0)
    assert fs.g[0, 1] == pytest.approx(1.0)
    assert fs.f_result[0, net.link_id(1, 2)] == pytest.approx(0.5)
    assert fs.link_total[net.link_id(0, 1)] == pytest.approx(1.0)
    assert fs.link_total[net.link_id(1, 2)] == pytest.approx(0.5)
    assert fs.cost == pytest.approx(2.5)
    assert total_cost(fs) == pytest.approx(2.5)


def test_evaluate_flows_e1_split(e1):
    # half computed at 1, half at 2, results on the direct links to 3
    st = Strategy(1, 3, e1.n_links)
    net = e1.network
    st.data_self[0, 0] = 0.5
    st.data_link[0, net.link_id(0, 1)] = 0.5
    st.data_self[0, 1] = 1.0
    st.data_self[0, 2] = 1.0
    st.result_link[0, net.link_id(0, 2)] = 1.0
    st.result_link[0, net.link_id(1, 2)] = 1.0
    fs = evaluate_flows(e1, st)
    assert fs.g[0, 0] == pytest.approx(0.5)
    assert fs.g[0, 1] == pytest.approx(0.5)
    assert fs.f_result[0, net.link_id(0, 2)] == pytest.approx(0.25)
    assert fs.f_result[0, net.link_id(1, 2)] == pytest.approx(0.25)
    # 0.5 link + 5 compute at 1 + 0.5 compute at 2 + 0.25 + 0.25 result
    assert fs.cost == pytest.approx(6.5)


def test_evaluate_flows_zero_rates(e1, e1_optimal):
    scn = _linear_scenario(E1_LINKS, E1_WEIGHTS, E1_COMP,
                           [Task(2, 0, 0.5, {0: 0.0})])
    fs = evaluate_flows(scn, e1_optimal)
    assert fs.cost == 0.0
    assert not fs.f_data.any() and not fs.f_result.any()


def test_evaluate_flows_raises_on_loop(e1):
    st = Strategy(1, 3, e1.n_links)
    st.data_link[0, e1.network.link_id(0, 1)] = 1.0
    st.data_link[0, e1.network.link_id(1, 0)] = 1.0
    st.data_self[0, 2] = 1.0
    with pytest.raises(LoopDetected) as exc:
        evaluate_flows(e1, st)
    assert set(exc.value.cycle) == {0, 1}


def test_total_cost_infeasible_marker():
    net = Network(2, [(0, 1), (1, 0)])
    scn = Scenario(net, [LinkCost("queue", 1.0), LinkCost("queue", 1.0)],
                   [ComputeCost("sum_linear", 1.0, (1.0,))] * 2,
                   [Task(1, 0, 1.0, {0: 2.0})])
    st = Strategy(1, 2, 2)
    st.data_link[0, 0] = 1.0
    st.data_self[0, 1] = 1.0
    st.result_link[0, 1] = 1.0
    fs = evaluate_flows(scn, st)
    assert not fs.feasible
    assert math.isinf(total_cost(fs))


def test_conservation_residuals_on_random_strategies():
    rng = np.random.default_rng(5)
    for _ in range(10):
        scn = random_scenario(rng, n_nodes=int(rng.integers(4, 10)), n_tasks=2)
        st = random_loop_free_strategy(scn, rng)
        fs = evaluate_flows(scn, st)
        rd, rr = fs.residuals(scn)
        assert rd <= 1e-9 and rr <= 1e-9


def test_positive_homogeneity_linear_costs():
    rng = np.random.default_rng(6)
    scn = random_scenario(rng, n_nodes=6, n_tasks=2,
                          link_kind="linear", comp_kind="sum_linear")
    st = random_loop_free_strategy(scn, rng)
    fs1 = evaluate_flows(scn, st)
    scaled = Scenario(scn.network, scn.link_costs, scn.comp_costs,
                      [Task(t.dest, t.ctype, t.result_ratio,
                            {i: 3.0 * v for i, v in t.rates.items()})
                       for t in scn.tasks])
    fs3 = evaluate_flows(scaled, st)
    assert fs3.cost == pytest.approx(3.0 * fs1.cost)
    np.testing.assert_allclose(fs3.f_data, 3.0 * fs1.f_data, atol=1e-12)
    np.testing.assert_allclose(fs3.f_result, 3.0 * fs1.f_result, atol=1e-12)


def test_all_data_is_eventually_computed():
    rng = np.random.default_rng(7)
    for _ in range(8):
        scn = random_scenario(rng, n_nodes=7, n_tasks=2)
        st = random_loop_free_strategy(scn, rng)
        fs = evaluate_flows(scn, st)
        for t, task in enumerate(scn.tasks):
            assert fs.g[t].sum() == pytest.approx(scn.rates[t].sum(), rel=1e-9)
            # result absorbed at the destination equals ratio * total rate
            net = scn.network
            absorbed = fs.t_result[t, task.dest] \
                - fs.f_result[t, net.out_links(task.dest)].sum()
            assert absorbed == pytest.approx(
                task.result_ratio * scn.rates[t].sum(), rel=1e-9)


def test_initial_strategy_e1(e1):
    st = initial_strategy(e1)
    fs = evaluate_flows(e1, st)
    assert fs.cost == pytest.approx(2.5)
    assert fs.g[0, 1] == pytest.approx(1.0)  # zero-flow linearization picks node 2


def test_initial_strategy_e0(e0):
    st = initial_strategy(e0)
    fs = evaluate_flows(e0, st)
    assert fs.cost == pytest.approx(10.0)
    assert fs.g[0, 0] == pytest.approx(1.0)


def test_initial_strategy_infeasible_everywhere():
    net = Network(2, [(0, 1), (1, 0)])
    scn = Scenario(net, [LinkCost("linear", 1.0)] * 2,
                   [ComputeCost("sum_queue", 1.0, (1.0,))] * 2,
                   [Task(1, 0, 1.0, {0: 5.0})])
    with pytest.raises(NoFeasibleStart):
        initial_strategy(scn)


def test_random_strategies_are_loop_free_and_valid():
    rng = np.random.default_rng(8)
    for _ in range(12):
        scn = random_scenario(rng, n_nodes=int(rng.integers(3, 12)), n_tasks=2)
        st = random_loop_free_strategy(scn, rng)
        st.validate(scn)
        assert detect_loops(st, scn).ok


def test_strategy_json_roundtrip(e1, e1_optimal):
    text = e1_optimal.to_json(e1)
    again = Strategy.from_json(e1, text)
    np.testing.assert_array_equal(again.data_self, e1_optimal.data_self)
    np.testing.assert_array_equal(again.data_link, e1_optimal.data_link)
    np.testing.assert_array_equal(again.result_link, e1_optimal.result_link)
