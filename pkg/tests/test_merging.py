"""Merge engine: choice policies, commutation, reconnection, trade merges."""

import random

import pytest

from expmarket.graph import Edge, Graph, connected_components
from expmarket.ids import NodeIdGenerator, derive_seed
from expmarket.localiser import LocaliserConfig
from expmarket.merging import (
    Choice,
    ChoicePolicy,
    Commutation,
    CommutationPolicy,
    NonScoringPolicy,
    NonSymmetricPolicy,
    choose,
    commute,
    gamma_score,
    reconnect,
    trade_merge,
)
from expmarket.patches import Repository, apply_patch, diff
from expmarket.pose import Pose

from _builders import chain_graph, mknode

INLIERS = ChoicePolicy(Choice.INLIERS)


def union_policy():
    return CommutationPolicy(Commutation.UNION)


def match_policy(tau_m=0.12, choice=Choice.INLIERS):
    return CommutationPolicy(Commutation.MATCH, ChoicePolicy(choice),
                             LocaliserConfig(tau_m=tau_m))


# -- gamma and choose --------------------------------------------------------


def test_gamma_projects_metadata_fields():
    gen = NodeIdGenerator(0, 0)
    node = mknode(gen, [0.0], inlier_count=42, fabmap_score=0.8, path_memory=0)
    assert gamma_score(node, INLIERS) == 42.0
    assert gamma_score(node, ChoicePolicy(Choice.FABMAP)) == 0.8
    assert gamma_score(node, ChoicePolicy(Choice.PATH_MEMORY)) == 0.0


def test_gamma_rejects_non_scoring():
    gen = NodeIdGenerator(0, 0)
    node = mknode(gen, [0.0])
    with pytest.raises(NonScoringPolicy):
        gamma_score(node, ChoicePolicy(Choice.LHS))
    with pytest.raises(NonScoringPolicy):
        gamma_score(node, ChoicePolicy(Choice.COIN, rng=random.Random(0)))


def test_choose_strict_order_and_tie_break():
    gen = NodeIdGenerator(0, 0)
    a = mknode(gen, [0.0], inlier_count=3)
    b = mknode(gen, [1.0], inlier_count=2)
    assert choose(a, b, INLIERS)[0] is a
    assert choose(b, a, INLIERS)[0] is a  # argument-order invariant

    t1 = mknode(gen, [0.0], inlier_count=5)
    t2 = mknode(gen, [1.0], inlier_count=5)
    lo, hi = sorted((t1, t2), key=lambda n: n.id)
    assert choose(t1, t2, INLIERS)[0] is lo
    assert choose(t2, t1, INLIERS)[0] is lo


def test_choose_lhs_depends_on_argument_order():
    gen = NodeIdGenerator(0, 0)
    a = mknode(gen, [0.0], inlier_count=1)
    b = mknode(gen, [1.0], inlier_count=9)
    lhs = ChoicePolicy(Choice.LHS)
    assert choose(a, b, lhs)[0] is a
    assert choose(b, a, lhs)[0] is b  # the versioning mischief


# -- reconnect ----------------------------------------------------------------


def test_reconnect_chain_splice():
    gen = NodeIdGenerator(0, 0)
    g, nodes = chain_graph(gen, [[0.0], [1.0], [2.0]])
    x, drop, y = nodes
    keep = mknode(gen, [9.0])
    edges = reconnect(g, drop, keep.id)
    assert {(e.src, e.dst) for e in edges} == {(x.id, keep.id), (keep.id, y.id)}


def test_reconnect_isolated_drop():
    gen = NodeIdGenerator(0, 0)
    node = mknode(gen, [0.0])
    g = Graph()
    g.insert_node(node)
    assert reconnect(g, node, NodeIdGenerator(1, 1).next_id()) == set()


def test_reconnect_suppresses_self_loop_when_adjacent():
    gen = NodeIdGenerator(0, 0)
    g, nodes = chain_graph(gen, [[0.0], [1.0]])
    keep, drop = nodes
    edges = reconnect(g, drop, keep.id)
    assert all(e.src != e.dst for e in edges)
    assert not any(e.src == keep.id and e.dst == keep.id for e in edges)


def test_reconnect_composes_poses():
    gen = NodeIdGenerator(0, 0)
    g, nodes = chain_graph(gen, [[0.0], [1.0]], spacing=5.0)
    x, drop = nodes
    keep = mknode(gen, [9.0])
    offset = Pose.from_translation(2.0)
    (edge,) = reconnect(g, drop, keep.id, offset)
    assert (edge.src, edge.dst) == (x.id, keep.id)
    assert edge.pose.tx == 7.0  # 5 m chain edge + 2 m drop-to-keep


# -- fixtures for merges -------------------------------------------------------


def fig2_repos(near_duplicate=False, mine_quality=5, theirs_quality=9):
    """Common chain n1-n3; each side extends by two nodes. With
    ``near_duplicate`` the first new nodes of both sides are the same place."""
    gen = NodeIdGenerator(42, 0)
    base, base_nodes = chain_graph(gen, [[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]])

    def extend(first_desc, second_desc, quality):
        side = base.copy()
        n_a = mknode(gen, first_desc, inlier_count=quality)
        n_b = mknode(gen, second_desc, inlier_count=quality)
        side.insert_node(n_a)
        side.insert_node(n_b)
        side.insert_edge(Edge(base_nodes[2].id, n_a.id, Pose.from_translation(5)))
        side.insert_edge(Edge(n_a.id, n_b.id, Pose.from_translation(5)))
        return side, (n_a, n_b)

    mine, mine_nodes = extend([10.0, 10.0], [11.0, 11.0], mine_quality)
    theirs_first = [10.0, 10.05] if near_duplicate else [20.0, 20.0]
    theirs, theirs_nodes = extend(theirs_first, [21.0, 21.0], theirs_quality)
    return (Repository(0, mine), Repository(1, theirs),
            base_nodes, mine_nodes, theirs_nodes)


# -- commute -------------------------------------------------------------------


def test_commute_union_passes_diff_through():
    left, right, *_ = fig2_repos()
    incoming, outgoing = diff(left.graph, right.graph)
    pair = commute(incoming, outgoing, union_policy(), left.graph, right.graph)
    assert pair.for_left is incoming
    assert pair.for_right is outgoing
    u1 = apply_patch(left.graph, pair.for_left)
    u2 = apply_patch(right.graph, pair.for_right)
    assert u1.digest() == u2.digest()
    assert len(u1) == 7


def test_commute_match_drops_low_quality_twin():
    left, right, base_nodes, mine_nodes, theirs_nodes = fig2_repos(
        near_duplicate=True, mine_quality=5, theirs_quality=9)
    incoming, outgoing = diff(left.graph, right.graph)
    pair = commute(incoming, outgoing, match_policy(), left.graph, right.graph)
    u1 = apply_patch(left.graph, pair.for_left)
    u2 = apply_patch(right.graph, pair.for_right)
    assert u1.digest() == u2.digest()
    # the matched pair resolved to theirs (higher inliers): 6 nodes remain
    assert len(u1) == 6
    assert mine_nodes[0].id not in u1
    assert theirs_nodes[0].id in u1


def test_commute_match_hand_enumerated_outcome():
    # keep = mine (higher gamma): both sides end with mine's twin kept
    left, right, base_nodes, mine_nodes, theirs_nodes = fig2_repos(
        near_duplicate=True, mine_quality=9, theirs_quality=5)
    incoming, outgoing = diff(left.graph, right.graph)
    pair = commute(incoming, outgoing, match_policy(), left.graph, right.graph)
    u1 = apply_patch(left.graph, pair.for_left)
    u2 = apply_patch(right.graph, pair.for_right)
    expected = {n.id for n in base_nodes} | {mine_nodes[0].id, mine_nodes[1].id,
                                             theirs_nodes[1].id}
    assert u1.node_ids() == expected
    assert u2.node_ids() == expected
    # dropped node's successor is rewired onto the keeper
    assert u1.has_edge(mine_nodes[0].id, theirs_nodes[1].id)


def test_commute_empty_diffs():
    left, right, *_ = fig2_repos()
    incoming, outgoing = diff(left.graph, left.graph.copy())
    pair = commute(incoming, outgoing, match_policy(), left.graph, left.graph.copy())
    assert pair.for_left.is_empty() and pair.for_right.is_empty()


# -- trade_merge ---------------------------------------------------------------


def test_trade_merge_fig2_union():
    left, right, *_ = fig2_repos()
    l2, r2, stats = trade_merge(left, right, union_policy())
    assert l2.digest() == r2.digest()
    assert len(l2.graph) == 7
    assert stats.nodes_in == 2
    assert stats.matches == 0
    assert len(l2.history) == len(left.history) + 1


def test_trade_merge_identical_repos_noop():
    left, right, *_ = fig2_repos()
    merged_l, merged_r, _ = trade_merge(left, right, union_policy())
    again_l, again_r, stats = trade_merge(merged_l, merged_r, union_policy())
    assert stats.nodes_in == 0 and stats.nodes_deleted == 0
    assert again_l.digest() == merged_l.digest()
    assert len(again_l.history) == len(merged_l.history)  # empty patches not recorded


def test_trade_merge_rejects_asymmetric_policies():
    left, right, *_ = fig2_repos()
    lhs = CommutationPolicy(Commutation.MATCH, ChoicePolicy(Choice.LHS),
                            LocaliserConfig())
    with pytest.raises(NonSymmetricPolicy):
        trade_merge(left, right, lhs)


def test_trade_merge_lhs_diverges_when_allowed():
    left, right, *_ = fig2_repos(near_duplicate=True)
    lhs = CommutationPolicy(Commutation.MATCH, ChoicePolicy(Choice.LHS),
                            LocaliserConfig(), allow_asymmetric=True)
    l2, r2, _ = trade_merge(left, right, lhs, enforce=False)
    assert l2.digest() != r2.digest()


def test_trade_merge_enforces_convergence():
    from expmarket.merging import IntegrityViolation

    left, right, *_ = fig2_repos(near_duplicate=True)
    lhs = CommutationPolicy(Commutation.MATCH, ChoicePolicy(Choice.LHS),
                            LocaliserConfig(), allow_asymmetric=True)
    with pytest.raises(IntegrityViolation):
        trade_merge(left, right, lhs)  # enforce on: divergence is an error


def test_trade_merge_coin_diverges_eventually():
    coin_rng = random.Random(123)
    diverged = False
    for case in range(8):
        left, right, *_ = fig2_repos(near_duplicate=True)
        policy = CommutationPolicy(Commutation.MATCH,
                                   ChoicePolicy(Choice.COIN, rng=coin_rng),
                                   LocaliserConfig(), allow_asymmetric=True)
        l2, r2, _ = trade_merge(left, right, policy, enforce=False)
        if l2.digest() != r2.digest():
            diverged = True
    assert diverged


def _random_divergent_repos(case: int, overlap: float):
    rng = random.Random(derive_seed("merge-prop", case))
    gen = NodeIdGenerator(derive_seed("merge-prop-ids", case), 0)
    base, base_nodes = chain_graph(
        gen, [[rng.uniform(-50, 50) for _ in range(3)]
              for _ in range(rng.randrange(1, 4))])

    def extend(n_new, dup_sources):
        side = base.copy()
        prev = None
        new_nodes = []
        for j in range(n_new):
            if dup_sources and rng.random() < overlap:
                src = rng.choice(dup_sources)
                desc = [v + rng.uniform(-0.02, 0.02) for v in src.descriptor]
            else:
                desc = [rng.uniform(-50, 50) for _ in range(3)]
            node = mknode(gen, desc, inlier_count=rng.randrange(100),
                          fabmap_score=rng.random(), path_memory=rng.randrange(6))
            side.insert_node(node)
            if prev is None:
                side.insert_edge(Edge(rng.choice(base_nodes).id, node.id,
                                      Pose.from_translation(5)))
            else:
                side.insert_edge(Edge(prev.id, node.id, Pose.from_translation(5)))
            prev = node
            new_nodes.append(node)
        return side, new_nodes

    mine, mine_new = extend(rng.randrange(1, 7), [])
    theirs, _ = extend(rng.randrange(1, 7), mine_new)
    return Repository(0, mine), Repository(1, theirs)


def test_trade_merge_convergence_property_1000_cases():
    policies = {
        Choice.INLIERS: match_policy(tau_m=0.1, choice=Choice.INLIERS),
        Choice.FABMAP: match_policy(tau_m=0.1, choice=Choice.FABMAP),
        Choice.PATH_MEMORY: match_policy(tau_m=0.1, choice=Choice.PATH_MEMORY),
    }
    kinds = list(policies.values()) + [union_policy()]
    for case in range(1000):
        left, right = _random_divergent_repos(case, overlap=0.5)
        policy = kinds[case % len(kinds)]
        l2, r2, _ = trade_merge(left, right, policy)
        assert l2.digest() == r2.digest()


def test_trade_merge_commutativity_merge_order_irrelevant():
    # merging A's content then B's equals merging B's then A's
    for case in range(200):
        rng = random.Random(derive_seed("order", case))
        repo_a, repo_b = _random_divergent_repos(case, overlap=0.4)
        repo_c = Repository(2, repo_a.graph.copy())
        policy = match_policy(tau_m=0.1)

        one, b1, _ = trade_merge(repo_c.copy(), repo_b.copy(), policy)
        two, a1, _ = trade_merge(one, repo_a.copy(), policy)

        alt1, a2, _ = trade_merge(repo_c.copy(), repo_a.copy(), policy)
        alt2, b2, _ = trade_merge(alt1, repo_b.copy(), policy)

        assert two.digest() == alt2.digest()


def test_trade_merge_idempotent_without_new_forays():
    for case in range(50):
        left, right = _random_divergent_repos(case + 3000, overlap=0.5)
        policy = match_policy(tau_m=0.1)
        l1, r1, _ = trade_merge(left, right, policy)
        l2, r2, stats = trade_merge(l1, r1, policy)
        assert stats.nodes_in == 0 and stats.nodes_deleted == 0
        assert l2.digest() == l1.digest()
        assert r2.digest() == r1.digest()


def test_match_never_larger_than_union():
    for case in range(100):
        left, right = _random_divergent_repos(case + 600, overlap=0.6)
        lu, ru, _ = trade_merge(left.copy(), right.copy(), union_policy())
        lm, rm, _ = trade_merge(left.copy(), right.copy(), match_policy(tau_m=0.1))
        assert len(lm.graph) <= len(lu.graph)


def test_match_does_not_fragment_the_map():
    for case in range(100):
        left, right = _random_divergent_repos(case + 4000, overlap=0.7)
        lu, _, _ = trade_merge(left.copy(), right.copy(), union_policy())
        lm, _, _ = trade_merge(left.copy(), right.copy(), match_policy(tau_m=0.1))
        assert len(connected_components(lm.graph)) <= \
            len(connected_components(lu.graph))


def test_trade_merge_product_scope_restricts_transfer():
    gen = NodeIdGenerator(7, 0)
    base = Graph()
    mine = base.copy()
    theirs = base.copy()
    wanted = mknode(gen, [1.0, 1.0], product=2)
    unwanted = mknode(gen, [9.0, 9.0], product=5)
    theirs.insert_node(wanted)
    theirs.insert_node(unwanted)
    l2, r2, stats = trade_merge(Repository(0, mine), Repository(1, theirs),
                                union_policy(), products={2})
    assert wanted.id in l2.graph
    assert unwanted.id not in l2.graph
    assert stats.nodes_in == 1
