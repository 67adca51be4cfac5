import random

import pytest

from flowcensor.censor import (CensorError, CensorState, SecurityConfig,
                               censor_step, generalize, inferred_states,
                               security_configuration,
                               security_configuration_by_search,
                               subtree_scheme, subtree_scheme_by_search,
                               validate_distortion)
from flowcensor.domain import Policy, make_project
from flowcensor.hierarchy import assemble, parse_tree
from flowcensor.mediator import Session
from flowcensor.partition import init_view, lift_operator
from flowcensor.values import VAtom, VInt, VNode, VTuple


def pair(a, second_attr, second):
    kind = VAtom(second_attr, second) if second_attr else VNode(second)
    return VTuple((VAtom("A", a), kind))


def joined_view_partition(running):
    """The partition for the guarded copy, as tracked by a mediated run."""
    session = Session(running)
    trace = session.run(running.space.states[0])
    decl = next(r for r in trace.records if r.case == 3)
    return trace.states[decl.t].tracker.views["x5"], session


def test_security_configuration_of_joined_partition(running):
    part, _ = joined_view_partition(running)
    sc = security_configuration(part, running.space.all_mask, running.policy)
    c2_indices = frozenset({pair("a1", "C", "c2"), pair("a2", "C", "c2")})
    assert sc.violating == frozenset({c2_indices})
    # the ambiguous pair indices must not be declared violating
    b2_indices = {pair("a1", "B", "b2"), pair("a2", "B", "b2")}
    for vio in sc.violating:
        assert not (b2_indices & vio)
    assert sc.domain == frozenset(part.indices())


def test_empty_policy_yields_no_violating_sets(running):
    part, _ = joined_view_partition(running)
    sc = security_configuration(part, running.space.all_mask, Policy(()))
    assert sc.violating == frozenset()


def test_sum_partition_configuration(intervals):
    space, schema, ops = intervals.space, intervals.schema, intervals.ops
    pd = init_view(schema, make_project(schema, ["D"]), space)
    pe = init_view(schema, make_project(schema, ["E"]), space)
    psum = lift_operator(ops, "gplus", [pd, pe])
    sc = security_configuration(psum, space.all_mask, intervals.policy)
    assert sc.domain == frozenset(VInt(k) for k in range(7))
    assert sc.violating == frozenset({frozenset({VInt(6)})})


def test_configuration_matches_powerset_search(running, intervals):
    part, _ = joined_view_partition(running)
    fast = security_configuration(part, running.space.all_mask, running.policy)
    slow = security_configuration_by_search(part, running.space.all_mask, running.policy)
    assert fast == slow
    space, schema, ops = intervals.space, intervals.schema, intervals.ops
    pd = init_view(schema, make_project(schema, ["D"]), space)
    assert security_configuration(pd, space.all_mask, intervals.policy) == \
        security_configuration_by_search(pd, space.all_mask, intervals.policy)


def test_configuration_search_with_narrowed_view(intervals):
    space, schema = intervals.space, intervals.schema
    pe = init_view(schema, make_project(schema, ["E"]), space)
    view = space.mask_of(s for s in space if s[0].n in (2, 3))
    fast = security_configuration(pe, view, intervals.policy)
    slow = security_configuration_by_search(pe, view, intervals.policy)
    assert fast == slow == SecurityConfig(frozenset(VInt(k) for k in range(4)),
                                          frozenset({frozenset({VInt(3)})}))


def test_compromised_view_detected(intervals):
    space, schema = intervals.space, intervals.schema
    pe = init_view(schema, make_project(schema, ["E"]), space)
    inside = space.mask_of(s for s in space if s[0].n == 3)  # within D-is-3
    with pytest.raises(CensorError):
        security_configuration(pe, inside, intervals.policy)


# --- subtree schemes over a small occupations tree -------------------------


def occupations():
    spec = parse_tree(
        {"node": "any", "children": [
            {"node": "p", "children": ["e", "l"]},
            {"node": "a", "children": ["d", "w"]},
        ]}, leaf_attr=None)
    return assemble([spec], [])


def V(name):
    return VNode(name)


def test_two_subtrees_cover_split_violation():
    h = occupations()
    sc = SecurityConfig(frozenset({V("e"), V("l"), V("d"), V("w")}),
                        frozenset({frozenset({V("e"), V("d")})}))
    assert subtree_scheme(h, sc) == frozenset({V("p"), V("a")})


def test_whole_tree_selected_when_domain_too_thin():
    h = occupations()
    sc = SecurityConfig(frozenset({V("l"), V("d"), V("w")}),
                        frozenset({frozenset({V("l")})}))
    # neither the leaf nor its parent subtree escapes the violating set
    assert subtree_scheme(h, sc) == frozenset({V("any")})


def test_empty_violating_sets_select_nothing():
    h = occupations()
    sc = SecurityConfig(frozenset({V("e")}), frozenset())
    assert subtree_scheme(h, sc) == frozenset()
    assert generalize(h, sc, V("e")) == V("e")


def test_scheme_iteration_order_irrelevant():
    h = occupations()
    domain = frozenset({V("e"), V("l"), V("d"), V("w")})
    vio = frozenset({V("e"), V("d")})
    schemes = {subtree_scheme(h, SecurityConfig(domain, frozenset({frozenset(order)})))
               for order in ([V("e"), V("d")], [V("d"), V("e")])}
    assert len(schemes) == 1


def test_scheme_matches_exhaustive_search_handpicked():
    h = occupations()
    cases = [
        SecurityConfig(frozenset({V("e"), V("l"), V("d"), V("w")}),
                       frozenset({frozenset({V("e"), V("d")})})),
        SecurityConfig(frozenset({V("l"), V("d"), V("w")}),
                       frozenset({frozenset({V("l")})})),
        SecurityConfig(frozenset({V("e"), V("l"), V("p")}),
                       frozenset({frozenset({V("e"), V("l")})})),
        SecurityConfig(frozenset({V("e"), V("l"), V("d"), V("w")}),
                       frozenset({frozenset({V("e")}), frozenset({V("w")})})),
    ]
    for sc in cases:
        assert subtree_scheme(h, sc) == subtree_scheme_by_search(h, sc)


def random_config(h, rng):
    values = h.values()
    domain = frozenset(rng.sample(values, rng.randint(1, len(values) - 1)))
    violating = set()
    for _ in range(rng.randint(0, 2)):
        strict = rng.randint(1, max(1, len(domain) - 1))
        vio = frozenset(rng.sample(sorted(domain, key=str), strict))
        if vio and vio != domain:
            violating.add(vio)
    return SecurityConfig(domain, frozenset(violating))


def test_scheme_matches_exhaustive_search_fuzzed():
    h = occupations()
    rng = random.Random(0x5EED)
    for _ in range(150):
        sc = random_config(h, rng)
        assert subtree_scheme(h, sc) == subtree_scheme_by_search(h, sc)


# --- generalization and the view update ------------------------------------


def test_generalize_pair_values(running):
    part, session = joined_view_partition(running)
    sc = security_configuration(part, running.space.all_mask, running.policy)
    h = running.hierarchy
    assert generalize(h, sc, pair("a1", "C", "c2")) == \
        VTuple((VAtom("A", "a1"), VNode("gC")))
    assert generalize(h, sc, pair("a1", "C", "c4")) == \
        VTuple((VAtom("A", "a1"), VNode("gC")))
    assert generalize(h, sc, pair("a2", "B", "b1")) == pair("a2", "B", "b1")


def test_generalize_integers(intervals):
    h = intervals.hierarchy
    sc1 = SecurityConfig(frozenset(VInt(k) for k in range(4)),
                         frozenset({frozenset({VInt(3)})}))
    assert generalize(h, sc1, VInt(2)) == parse_interval("[2,3]")
    assert generalize(h, sc1, VInt(1)) == VInt(1)
    sc2 = SecurityConfig(frozenset(VInt(k) for k in range(7)),
                         frozenset({frozenset({VInt(6)})}))
    assert generalize(h, sc2, VInt(3)) == VInt(3)


def parse_interval(text):
    from flowcensor.hierarchy import parse_node_value
    return parse_node_value(text)


def test_inferred_states_cluster(running):
    part, _ = joined_view_partition(running)
    sc = security_configuration(part, running.space.all_mask, running.policy)
    g = VTuple((VAtom("A", "a1"), VNode("gC")))
    mask = inferred_states(part, running.hierarchy, sc, g)
    expected = running.space.mask_of(
        s for s in running.space if s[0].name == "a1" and s[2].name in {"c2", "c4"})
    assert mask == expected


def test_inferred_states_singleton_preimage(running):
    part, _ = joined_view_partition(running)
    sc = security_configuration(part, running.space.all_mask, running.policy)
    g = pair("a1", "B", "b2")
    assert inferred_states(part, running.hierarchy, sc, g) == part.block(g)


def test_censor_step_generalizes_harmless_neighbour(running):
    # a value outside every violating set is still generalized when it shares
    # the selected subtree, and the view narrows to the whole cluster
    part, _ = joined_view_partition(running)
    cs = CensorState(running.space.all_mask, running.policy, running.hierarchy)
    decision = censor_step(cs, part, pair("a1", "C", "c4"))
    assert decision.generalized == VTuple((VAtom("A", "a1"), VNode("gC")))
    expected_view = running.space.mask_of(
        s for s in running.space if s[0].name == "a1" and s[2].name in {"c2", "c4"})
    assert decision.view_after == expected_view


def test_censor_step_passes_harmless_value(running):
    part, _ = joined_view_partition(running)
    cs = CensorState(running.space.all_mask, running.policy, running.hierarchy)
    v = pair("a2", "B", "b1")
    decision = censor_step(cs, part, v)
    assert decision.generalized == v
    assert decision.view_after == running.space.all_mask & part.block(v)


def test_censor_step_sum_value(intervals):
    space, schema, ops = intervals.space, intervals.schema, intervals.ops
    pd = init_view(schema, make_project(schema, ["D"]), space)
    pe = init_view(schema, make_project(schema, ["E"]), space)
    psum = lift_operator(ops, "gplus", [pd, pe])
    cs = CensorState(space.all_mask, intervals.policy, intervals.hierarchy)
    decision = censor_step(cs, psum, VInt(3))
    assert decision.generalized == VInt(3)
    # brute force: the rows whose cells sum to three
    expected = space.mask_of(s for s in space if s[0].n + s[1].n == 3)
    assert decision.view_after == expected


def test_censor_step_post_compliance_asserted(running):
    part, _ = joined_view_partition(running)
    cs = CensorState(running.space.all_mask, running.policy, running.hierarchy)
    for v in part.indices():
        decision = censor_step(cs, part, v)
        for secret in running.policy.secrets:
            assert decision.view_after & ~secret.mask != 0


# --- distortion lawfulness --------------------------------------------------


def test_validate_distortion_on_tracked_configuration(running):
    part, _ = joined_view_partition(running)
    sc = security_configuration(part, running.space.all_mask, running.policy)
    report = validate_distortion(running.hierarchy, [sc])
    assert report.passed and report.checked == 1


def test_validate_distortion_flags_bad_table():
    h = occupations()
    vio = frozenset({V("e"), V("d")})
    sc = SecurityConfig(frozenset({V("e"), V("l"), V("d"), V("w")}),
                        frozenset({vio}))

    def collapses_violating_set(config, w):
        return V("e") if w in vio else w

    report = validate_distortion(h, [sc], table=collapses_violating_set)
    assert not report.passed
    assert any(f.item == 2 for f in report.failures)


def test_validate_distortion_flags_needless_distortion():
    h = occupations()
    sc = SecurityConfig(frozenset({V("e")}), frozenset())
    report = validate_distortion(h, [sc], table=lambda config, w: V("any"))
    assert any(f.item == 1 for f in report.failures)


def test_validate_distortion_fuzzed_configurations():
    h = occupations()
    rng = random.Random(0xD157)
    configs = [random_config(h, rng) for _ in range(300)]
    report = validate_distortion(h, configs)
    assert report.passed and report.checked == 300
