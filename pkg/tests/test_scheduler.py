from dataclasses import dataclass

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pinsched.profiles import SlowdownMatrix
from pinsched.scheduler import (HostModel, InstanceState, PlacementError, Policy, ResourceMap,
                                SchedulerParams, cas_select_pinning, core_interference,
                                core_overload, ias_select_pinning, ras_select_pinning,
                                rrs_select_pinning, schedule_tick, select_pinning,
                                update_resource_map, workload_interference)

import oracles


@dataclass
class Inst:
    instance_id: int
    class_id: int
    state: InstanceState = InstanceState.RUNNING
    pinned_core: int | None = None


# -- overload ----------------------------------------------------------------

def test_overload_examples():
    U = np.array([[0.5, 0.1, 0.0, 0.2], [0.9, 0, 0, 0.5], [0.6, 0, 0, 0.8]])
    assert core_overload([], U, 1.2) == 0
    assert core_overload([0], U, 1.2) == 0
    assert core_overload([1, 2], U, 1.2) == pytest.approx(0.4, abs=1e-15)


def test_ras_prefers_first_core_without_overload():
    U = np.array([[0.5, 0.5, 0.5, 0.5]])
    assert ras_select_pinning(0, [[], [], []], U, 1.2) == 0
    assert ras_select_pinning(0, [[0, 0], [0], []], U, 1.2) == 1


def test_ras_argmin_takes_first_of_tied_deltas():
    # cpu-only rows; core 0 already at thr so the whole 0.4 is new overload
    U = np.array([[0.6, 0, 0, 0], [0.9, 0, 0, 0], [0.4, 0, 0, 0]])
    cores = [[0, 0], [1], [1], [0, 0]]
    assert ras_select_pinning(2, cores, U, 1.2) == 1
    assert oracles.overload_choice(2, cores, U, 1.2) == (False, 1)


def test_zero_demand_goes_first():
    U = np.array([[0.0, 0.0, 0.0, 0.0], [1.0, 1.0, 1.0, 1.0]])
    for cores in ([[1], []], [[1, 1], [1, 1]]):
        assert ras_select_pinning(0, cores, U, 1.2) == 0
        assert cas_select_pinning(0, cores, U, 1.2) == 0
    # an already overloaded core stays overloaded, so the first-fit test skips it
    assert ras_select_pinning(0, [[1, 1], [1]], U, 1.2) == 1


def test_cas_ignores_memory_bandwidth():
    U = np.array([[0.3, 0.0, 0.0, 0.7]])
    cores = [[0], [], []]
    assert cas_select_pinning(0, cores, U, 1.2) == 0
    assert ras_select_pinning(0, cores, U, 1.2) == 1


@given(st.lists(st.floats(0, 1), min_size=1, max_size=5), st.data())
def test_cas_equals_ras_on_cpu_only_rows(cpus, data):
    U = np.array([[c, 0, 0, 0] for c in cpus])
    n = len(cpus)
    cores = data.draw(st.lists(st.lists(st.integers(0, n - 1), max_size=3), min_size=1, max_size=4))
    w = data.draw(st.integers(0, n - 1))
    assert cas_select_pinning(w, cores, U, 1.2) == ras_select_pinning(w, cores, U, 1.2)


def test_scoped_overload_sees_socket_memory_bandwidth():
    host = HostModel(12)
    U = np.array([[0.1, 0.0, 0.0, 0.7]])
    cores = [[0]] + [[] for _ in range(11)]
    assert ras_select_pinning(0, cores, U, 1.2) == 1
    assert ras_select_pinning(0, cores, U, 1.2, host=host) == 6
    params = SchedulerParams(policy=Policy.RAS, scoped_overload=True)
    assert select_pinning(0, cores, params, U, None, host) == 6


# -- interference ------------------------------------------------------------

def test_interference_examples():
    ones = np.ones((4, 4))
    assert workload_interference(0, [1, 2, 3], ones) == 2.0
    assert workload_interference(0, [], ones) == 1.0
    S = np.ones((3, 3))
    S[0, 1], S[0, 2] = 1.2, 1.4
    assert workload_interference(0, [1, 2], S) == pytest.approx(2.14, abs=1e-15)
    P = np.array([[1.0, 1.2], [1.8, 1.0]])
    assert core_interference([], P) == 0.0
    assert core_interference([0], P) == 1.0
    assert core_interference([0, 1], P) == 1.8


def test_interference_accepts_slowdown_matrix():
    S = SlowdownMatrix(np.array([[1.0, 1.3], [1.1, 1.0]]))
    assert workload_interference(0, [1], S) == 1.3


def test_ias_first_below_threshold_and_argmin():
    S = np.ones((4, 4))
    S[0, 1], S[0, 2], S[0, 3] = 2.4, 1.9, 2.4
    assert ias_select_pinning(0, [[1], [2], [3]], S, 1.5) == 1
    assert ias_select_pinning(0, [[], [], []], S, 1.5) == 0


def test_ias_threshold_is_strict():
    S = np.ones((3, 3))
    S[0, 1], S[0, 2] = 1.5, 1.4
    assert ias_select_pinning(0, [[1], [2]], S, 1.5) == 1
    S[0, 2] = 1.6
    assert ias_select_pinning(0, [[1], [2]], S, 1.5) == 0


slowdowns = st.floats(1.0, 3.0)


@given(st.lists(slowdowns, min_size=1, max_size=5), st.integers(0, 4), st.floats(0, 2))
def test_wi_monotone_in_each_entry(vals, k, bump):
    n = len(vals) + 1
    S = np.ones((n, n))
    S[0, 1:] = vals
    base = workload_interference(0, list(range(1, n)), S)
    S[0, 1 + k % len(vals)] += bump
    assert workload_interference(0, list(range(1, n)), S) >= base


@given(st.integers(1, 5).flatmap(lambda n: st.tuples(
    st.lists(st.lists(slowdowns, min_size=n, max_size=n), min_size=n, max_size=n),
    st.lists(st.integers(0, n - 1), min_size=1, max_size=6))))
def test_core_interference_at_least_one(args):
    S, members = args
    assert core_interference(members, np.array(S)) >= 1.0


# -- round robin -------------------------------------------------------------

def test_rrs_examples():
    assert rrs_select_pinning(0, 12) == 0
    assert rrs_select_pinning(13, 12) == 1
    assert rrs_select_pinning(23, [[]] * 12) == 11


@given(st.integers(1, 64), st.integers(0, 200))
def test_rrs_is_modular(cores, n):
    assert [rrs_select_pinning(i, cores) for i in range(n)] == [i % cores for i in range(n)]


@pytest.mark.parametrize("fn,args", [
    (ras_select_pinning, (np.ones((1, 4)), 1.2)),
    (cas_select_pinning, (np.ones((1, 4)), 1.2)),
    (ias_select_pinning, (np.ones((1, 1)), 1.5)),
])
def test_no_cores_is_a_placement_error(fn, args):
    with pytest.raises(PlacementError):
        fn(0, [], *args)
    with pytest.raises(PlacementError):
        rrs_select_pinning(0, [])


# -- oracle agreement (small randomized batch; the large run is an acceptance criterion) --

@st.composite
def instances(draw):
    n_classes = draw(st.integers(1, 8))
    U = draw(st.lists(st.lists(st.floats(0, 1), min_size=4, max_size=4),
                      min_size=n_classes, max_size=n_classes))
    S = draw(st.lists(st.lists(slowdowns, min_size=n_classes, max_size=n_classes),
                      min_size=n_classes, max_size=n_classes))
    n_cores = draw(st.integers(1, 4))
    placed = draw(st.lists(st.integers(0, n_classes - 1), max_size=7))
    where = draw(st.lists(st.integers(0, n_cores - 1), min_size=len(placed), max_size=len(placed)))
    cores = [[c for c, k in zip(placed, where) if k == i] for i in range(n_cores)]
    w = draw(st.integers(0, n_classes - 1))
    return w, cores, np.array(U), np.array(S)


@settings(max_examples=300)
@given(instances())
def test_policies_match_exact_oracle(inst):
    w, cores, U, S = inst
    exists, idx = oracles.overload_choice(w, cores, U, 1.2)
    assert ras_select_pinning(w, cores, U, 1.2) == idx
    exists, idx = oracles.overload_choice(w, cores, U, 1.2, resources=(oracles.CPU,))
    assert cas_select_pinning(w, cores, U, 1.2) == idx
    exists, idx = oracles.interference_choice(w, cores, S, 1.5)
    assert ias_select_pinning(w, cores, S, 1.5) == idx


@settings(max_examples=200)
@given(instances())
def test_first_fit_guarantees(inst):
    w, cores, U, S = inst
    after = [core_overload(list(A) + [w], U, 1.2) for A in cores]
    got = ras_select_pinning(w, cores, U, 1.2)
    if any(v == 0 for v in after):
        assert after[got] == 0
    after = [core_interference(list(A) + [w], S) for A in cores]
    got = ias_select_pinning(w, cores, S, 1.5)
    if any(v < 1.5 for v in after):
        assert after[got] < 1.5
    else:
        assert after[got] == min(after)


# -- schedule_tick -----------------------------------------------------------

HOST = HostModel(4)


def _U(n):
    return np.full((n, 4), 0.3)


def test_all_idle_goes_to_idle_core():
    insts = [Inst(i, i % 2, pinned_core=i) for i in range(4)]
    usage = {i: 0.0 for i in range(4)}
    for policy in (Policy.CAS, Policy.RAS, Policy.IAS):
        out = schedule_tick(insts, usage, SchedulerParams(policy=policy), HOST, _U(2), np.ones((2, 2)))
        assert out == {i: 0 for i in range(4)}


def test_fresh_slate_matches_sequential_ias():
    S = np.array([[1.6, 1.2, 1.1], [1.3, 1.7, 1.0], [1.1, 1.2, 2.0]])
    classes = [0, 1, 2, 0, 1, 2, 2]
    insts = [Inst(i, c, pinned_core=3) for i, c in enumerate(classes)]
    out = schedule_tick(insts, {i: 0.5 for i in range(7)}, SchedulerParams(), HOST, _U(3), S)
    cores = [[] for _ in range(4)]
    expected = {}
    for inst in insts:
        k = ias_select_pinning(inst.class_id, cores, S, 1.5)
        cores[k].append(inst.class_id)
        expected[inst.instance_id] = k
    assert out == expected


def test_finished_and_pending_are_excluded():
    insts = [Inst(0, 0), Inst(1, 0, InstanceState.FINISHED, 2), Inst(2, 0, InstanceState.PENDING)]
    out = schedule_tick(insts, {0: 0.5}, SchedulerParams(policy=Policy.RAS), HOST, _U(1),
                        np.ones((1, 1)))
    assert out == {0: 0}


def test_rrs_never_moves_anything():
    insts = [Inst(i, 0, pinned_core=(i * 3) % 4) for i in range(5)]
    out = schedule_tick(insts, {i: 0.0 for i in range(5)}, SchedulerParams(policy=Policy.RRS),
                        HOST, _U(1), np.ones((1, 1)))
    assert out == {i: (i * 3) % 4 for i in range(5)}


@settings(max_examples=100)
@given(st.lists(st.tuples(st.integers(0, 2), st.floats(0, 1)), min_size=1, max_size=10),
       st.sampled_from([Policy.CAS, Policy.RAS, Policy.IAS]))
def test_tick_is_idempotent(items, policy):
    S = np.array([[1.6, 1.2, 1.1], [1.3, 1.7, 1.0], [1.1, 1.2, 2.0]])
    U = np.array([[0.9, 0.1, 0.0, 0.2], [0.4, 0.6, 0.3, 0.1], [0.2, 0.1, 0.8, 0.05]])
    insts = [Inst(i, c) for i, (c, _) in enumerate(items)]
    usage = {i: u for i, (_, u) in enumerate(items)}
    params = SchedulerParams(policy=policy)
    first = schedule_tick(insts, usage, params, HOST, U, S)
    for inst in insts:
        inst.pinned_core = first[inst.instance_id]
    assert schedule_tick(insts, usage, params, HOST, U, S) == first


# -- resource map ------------------------------------------------------------

H12 = HostModel(12)


def test_resource_map_scopes():
    U = np.array([[0.5, 0.1, 0.2, 0.3]])
    rmap = update_resource_map(None, [(0, 2)], U, H12)
    t = rmap.totals()
    assert t[2, 0] == 0.5 and t[:, 0].sum() == 0.5
    assert np.all(t[0:6, 3] == 0.3) and np.all(t[6:, 3] == 0.0)
    assert np.all(t[:, 1] == 0.1) and np.all(t[:, 2] == 0.2)


def test_resource_map_empty_and_two_sockets():
    U = np.array([[0.5, 0.1, 0.2, 0.3]])
    assert not update_resource_map(None, [], U, H12).totals().any()
    t = update_resource_map(None, [(0, 1), (0, 7)], U, H12).totals()
    assert np.all(t[:, 3] == 0.3)  # one contribution per socket, disjoint
    assert np.all(t[:, 1] == 0.2) and np.all(t[:, 2] == 0.4)


def test_host_validation():
    assert HostModel(12).sockets == (tuple(range(6)), tuple(range(6, 12)))
    assert HostModel(3).sockets == ((0, 1, 2),)
    with pytest.raises(ValueError):
        HostModel(4, sockets=((0, 1), (1, 2, 3)))
    with pytest.raises(ValueError):
        HostModel(4, idle_core=4)


@settings(max_examples=100)
@given(st.lists(st.tuples(st.booleans(), st.integers(0, 2), st.integers(0, 11)), max_size=30))
def test_incremental_map_equals_rebuild(ops):
    U = np.array([[0.9, 0.1, 0.0, 0.2], [0.4, 0.6, 0.3, 0.1], [0.2, 0.1, 0.8, 0.05]])
    rmap = ResourceMap(H12, U)
    live = []
    for add, c, core in ops:
        if add or not live:
            rmap.add(c, core)
            live.append((c, core))
        else:
            victim = live.pop(c % len(live))
            rmap.remove(*victim)
    rebuilt = update_resource_map(None, live, U, H12)
    assert np.array_equal(rmap.totals(), rebuilt.totals())


def test_remove_unknown_placement():
    with pytest.raises(KeyError):
        ResourceMap(H12, np.ones((1, 4))).remove(0, 3)
