"""World, forays, FSM, network, and the scenario engine."""

import random
import statistics

import pytest

from expmarket.catalogue import bundled_catalogue
from expmarket.config import bundled_scenario, parse_scenario_config
from expmarket.graph import connected_components
from expmarket.ids import NodeIdGenerator
from expmarket.localiser import LocaliserConfig
from expmarket.patches import Repository
from expmarket.sim import (
    ADVISORY_BYTES,
    DesyncDetected,
    FsmState,
    NetworkModel,
    Phase,
    barrier_sync,
    deliver,
    failure_distribution,
    run_foray,
    run_trial,
)
from expmarket.world import Route, RoutePlan, World


# -- world ----------------------------------------------------------------------


def test_world_observation_is_seed_deterministic():
    cat = bundled_catalogue("parks")
    w1 = World(cat, seed=5)
    w2 = World(cat, seed=5)
    o1 = w1.observe(2, 3, 125.0)
    o2 = w2.observe(2, 3, 125.0)
    assert o1 == o2
    w3 = World(cat, seed=6)
    assert w3.observe(2, 3, 125.0) != o1


def test_world_drift_accumulates():
    cat = bundled_catalogue("parks")
    w = World(cat, seed=1)
    d1 = w.drift(0, 1)
    d5 = w.drift(0, 5)
    assert (d1 ** 2).sum() < (d5 ** 2).sum()


def test_world_same_place_same_epoch_looks_alike_across_robots():
    cat = bundled_catalogue("parks")
    w = World(cat, seed=9)
    a = w.observe(0, 2, 42.0)
    b = w.observe(1, 2, 42.0)
    dist = sum((x - y) ** 2 for x, y in zip(a.descriptor, b.descriptor)) ** 0.5
    assert dist < 0.12  # within merge-match threshold
    far = w.observe(0, 2, 442.0)
    dist_far = sum((x - y) ** 2 for x, y in zip(a.descriptor, far.descriptor)) ** 0.5
    assert dist_far > 1.0


def test_route_positions_and_wrapping():
    r = Route(0.0, 100.0)
    pos = r.positions(5.0)
    assert pos[0] == 0.0 and pos[-1] == 95.0 and len(pos) == 20

    looped = Route(600.0, 700.0, wrap_at=640.0)
    wrapped = looped.positions(5.0)
    assert wrapped[0] == 600.0
    assert 0.0 in wrapped and max(wrapped) < 640.0


def test_route_plan_covers_all_sections_each_epoch():
    cat = bundled_catalogue("parks")  # 8 sections, cyclic
    plan = RoutePlan(cat, width=2, stride=2, shift=1)
    for epoch in range(1, 7):
        covered = set()
        for robot in range(4):
            covered.update(plan.sections_for(robot, epoch))
        assert covered == set(range(8))


# -- forays -----------------------------------------------------------------------


def _foray_setup(seed=0):
    cat = bundled_catalogue("parks")
    world = World(cat, seed=seed)
    repo = Repository(0)
    ids = NodeIdGenerator(seed, 0)
    return world, repo, ids


def test_foray_empty_map_single_full_dropout():
    world, repo, ids = _foray_setup()
    route = Route(0.0, 100.0)
    result = run_foray(repo, world, route, 1, LocaliserConfig(), ids)
    assert result.dropouts == [95.0]  # 20 stops, 19 travelled blind
    assert len(result.patch.inserts()) == 20


def test_foray_covered_map_no_dropouts():
    world, repo, ids = _foray_setup()
    route = Route(0.0, 100.0)
    first = run_foray(repo, world, route, 1, LocaliserConfig(), ids)
    repo.commit(first.patch)
    again = run_foray(repo, world, route, 1, LocaliserConfig(), ids)
    assert again.dropouts == []
    assert again.patch.is_empty()


def test_foray_half_covered_single_half_dropout():
    world, repo, ids = _foray_setup()
    cfg = LocaliserConfig()
    first = run_foray(repo, world, Route(0.0, 50.0), 1, cfg, ids)
    repo.commit(first.patch)
    result = run_foray(repo, world, Route(0.0, 100.0), 1, cfg, ids)
    assert len(result.dropouts) == 1
    assert abs(result.dropouts[0] - 50.0) <= 5.0
    assert len(result.patch.inserts()) == 10


def test_foray_dropout_total_bounded_by_route():
    world, repo, ids = _foray_setup(3)
    route = Route(80.0, 240.0)
    result = run_foray(repo, world, route, 2, LocaliserConfig(), ids)
    assert sum(result.dropouts) <= route.length


def test_foray_patch_chains_are_connected():
    world, repo, ids = _foray_setup(4)
    result = run_foray(repo, world, Route(0.0, 160.0), 1, LocaliserConfig(), ids)
    repo.commit(result.patch)
    assert len(connected_components(repo.graph)) == 1


def test_foray_bumps_path_memory():
    world, repo, ids = _foray_setup()
    first = run_foray(repo, world, Route(0.0, 50.0), 1, LocaliserConfig(), ids)
    repo.commit(first.patch)
    run_foray(repo, world, Route(0.0, 50.0), 1, LocaliserConfig(), ids)
    assert sum(n.path_memory for n in repo.graph.nodes()) == 10


# -- FSM and barrier ---------------------------------------------------------------


def test_fsm_cycle_and_semaphore():
    st = FsmState()
    assert (st.theta, st.psi) == (Phase.IDLE, 0)
    seen = []
    for _ in range(12):
        st = st.advance()
        seen.append((st.theta, st.psi))
    assert seen[:6] == [(Phase.MAPPING, 1), (Phase.SAMPLING, 1), (Phase.TENDERING, 1),
                        (Phase.PURCHASING, 1), (Phase.MERGING, 1), (Phase.IDLE, 1)]
    assert seen[6] == (Phase.MAPPING, 2)  # semaphore bumps on re-entry


def test_barrier_proceeds_when_identical():
    states = {0: FsmState(Phase.MAPPING, 3), 1: FsmState(Phase.MAPPING, 3)}
    assert barrier_sync(states)


def test_barrier_waits_on_lagging_semaphore():
    states = {0: FsmState(Phase.MAPPING, 3), 1: FsmState(Phase.MAPPING, 2)}
    assert not barrier_sync(states)


def test_barrier_detects_desync():
    states = {0: FsmState(Phase.MAPPING, 3), 1: FsmState(Phase.MERGING, 3)}
    with pytest.raises(DesyncDetected):
        barrier_sync(states)


# -- network ------------------------------------------------------------------------


def test_deliver_degenerate_latency():
    net = NetworkModel(latency_low_ms=100, latency_high_ms=100)
    assert deliver(net, 10, random.Random(0), src=0, dst=1) == 100.0


def test_deliver_mean_latency():
    net = NetworkModel(latency_low_ms=50, latency_high_ms=500)
    rng = random.Random(42)
    draws = [deliver(net, 0, rng) for _ in range(100_000)]
    assert abs(statistics.mean(draws) - 275.0) <= 5.0
    assert min(draws) >= 50.0 and max(draws) <= 500.0


def test_deliver_zero_byte_message_counts_nothing_but_delays():
    net = NetworkModel(latency_low_ms=10, latency_high_ms=20)
    arrival = deliver(net, 0, random.Random(1), src=0, dst=1)
    assert arrival >= 10.0
    assert net.sent[0]["query"] == 0
    assert net.received[1]["query"] == 0


def test_deliver_accounts_both_endpoints():
    net = NetworkModel()
    deliver(net, 123, random.Random(0), src=2, dst=4, kind="patch")
    assert net.sent[2]["patch"] == 123
    assert net.received[4]["patch"] == 123


# -- failure distribution -------------------------------------------------------------


def test_failure_distribution_counting_oracle():
    got = failure_distribution([10.0, 20.0, 20.0, 40.0])
    assert got == [(10.0, 1.0), (20.0, 0.75), (40.0, 0.25)]


def test_failure_distribution_empty_and_single():
    assert failure_distribution([]) == []
    assert failure_distribution([7.0]) == [(7.0, 1.0)]


# -- scenario engine ------------------------------------------------------------------


def test_run_trial_deterministic_and_conserving():
    cfg = parse_scenario_config(bundled_scenario("shopping"))
    a = run_trial(cfg, seed=5, trial=0)
    b = run_trial(cfg, seed=5, trial=0)
    assert a == b
    assert a.bytes_sent() == a.bytes_received()
    assert run_trial(cfg, seed=6, trial=0) != a


def test_run_trial_team_converges_under_all_trading():
    doc = bundled_scenario("shopping")
    doc["strategies"]["shopping"] = "WINDOW"
    doc["strategies"]["window_radius"] = 4  # whole catalogue: full sync
    cfg = parse_scenario_config(doc)
    m = run_trial(cfg, seed=2, trial=0)
    assert len(set(m.final_digests)) == 1


def test_run_trial_dropouts_bounded_per_epoch():
    cfg = parse_scenario_config(bundled_scenario("robustness"))
    m = run_trial(cfg, seed=3, trial=0)
    route_len = 160.0
    for k in range(1, cfg.forays + 1):
        for robot in range(cfg.robots):
            total = sum(d for kk, r, d in m.dropouts if kk == k and r == robot)
            assert total <= route_len


def test_run_trial_trading_never_hurts_on_bundled_scenarios():
    for name in ("robustness", "shopping"):
        doc = bundled_scenario(name)
        base_doc = bundled_scenario(name)
        base_doc["strategies"]["trading"] = "NONE"
        for seed in (1, 2):
            with_trade = run_trial(parse_scenario_config(doc), seed=seed, trial=0)
            without = run_trial(parse_scenario_config(base_doc), seed=seed, trial=0)
            assert with_trade.total_dropout() <= without.total_dropout()


def test_run_trial_none_strategy_moves_no_bytes():
    doc = bundled_scenario("shopping")
    doc["strategies"]["trading"] = "NONE"
    m = run_trial(parse_scenario_config(doc), seed=1, trial=0)
    assert m.bytes_sent() == 0
    assert not m.trades


def test_advisory_traffic_accounted_separately():
    cfg = parse_scenario_config(bundled_scenario("shopping"))
    m = run_trial(cfg, seed=1, trial=0)
    advisory = m.bytes_sent(kinds=("advisory",))
    assert advisory == cfg.robots * (cfg.robots - 1) * cfg.forays * ADVISORY_BYTES


def test_run_scenario_jobs_pool_matches_serial():
    from expmarket.sim import run_scenario

    doc = bundled_scenario("shopping")
    doc["sim"]["forays"] = 2
    cfg = parse_scenario_config(doc)
    serial = run_scenario(cfg, seed=4, trials=2, jobs=1)
    pooled = run_scenario(cfg, seed=4, trials=2, jobs=2)
    assert serial == pooled


def test_match_commutation_scenario_runs_and_converges_with_full_shopping():
    doc = bundled_scenario("scaling")
    doc["strategies"]["shopping"] = "WINDOW"
    doc["strategies"]["window_radius"] = 3  # whole loop: full convergence
    doc["sim"]["forays"] = 4
    cfg = parse_scenario_config(doc)
    m = run_trial(cfg, seed=8, trial=0)
    assert len(set(m.final_digests)) == 1
    assert any(t.nodes_deleted > 0 for t in m.trades)  # match merges really drop
