import pytest

from flowcensor.domain import eval_query, make_project, make_select
from flowcensor.partition import (IndexedPartition, PartitionError, branch,
                                  init_view, join, lift_operator, single_block)
from flowcensor.values import EMPTY, FALSE, TRUE, VAtom, VInt, VTuple


def group_by(space, fn):
    """Independent oracle: plain dict grouping of per-state evaluation."""
    groups = {}
    for s in space:
        groups.setdefault(fn(s), set()).add(s)
    return groups


def assert_matches_grouping(space, part, fn):
    groups = group_by(space, fn)
    assert set(part.indices()) == set(groups)
    for v, states in groups.items():
        assert part.block(v) == space.mask_of(states)


def test_init_view_project_pair_block_count(running):
    q = make_project(running.schema, ["A", "C"])
    part = init_view(running.schema, q, running.space)
    # one block per (A, C) pair
    assert len(part) == len(running.schema.attribute("C").domain) * 2 == 8
    assert_matches_grouping(running.space, part,
                            lambda s: eval_query(running.schema, q, s))


def test_init_view_full_projection_singletons(running):
    q = make_project(running.schema, ["A", "B", "C"])
    part = init_view(running.schema, q, running.space)
    assert len(part) == len(running.space)
    assert all(mask.bit_count() == 1 for _, mask in part.items())


def test_init_view_select_two_groups_after_isempty(running):
    q = make_select(running.schema, [("C", VAtom("C", "c1"))])
    part = init_view(running.schema, q, running.space)
    assert_matches_grouping(running.space, part,
                            lambda s: eval_query(running.schema, q, s))
    lifted = lift_operator(running.ops, "isempty", [part])
    expected = group_by(running.space,
                        lambda s: TRUE if eval_query(running.schema, q, s) == EMPTY else FALSE)
    assert lifted.block(FALSE) == running.space.mask_of(expected[FALSE])
    assert lifted.block(TRUE) == running.space.mask_of(expected[TRUE])
    assert len(lifted) == 2


def c_block(space, values):
    schema = space.schema
    pos = schema.position("C")
    return space.mask_of(s for s in space if s[pos].name in values)


def test_lift_or_splits_space_into_two(running):
    space = running.space
    p1 = IndexedPartition({TRUE: c_block(space, {"c1"}), FALSE: c_block(space, {"c2", "c3", "c4"})})
    p2 = IndexedPartition({TRUE: c_block(space, {"c3"}), FALSE: c_block(space, {"c1", "c2", "c4"})})
    out = lift_operator(running.ops, "or", [p1, p2])
    assert out.block(TRUE) == c_block(space, {"c1", "c3"})
    assert out.block(FALSE) == c_block(space, {"c2", "c4"})


def test_lift_identity_preserves_partition(running):
    q = make_project(running.schema, ["A", "B"])
    part = init_view(running.schema, q, running.space)
    assert lift_operator(running.ops, "tostring", [part]) == part


def test_lift_sum_seven_blocks(intervals):
    space = intervals.space
    schema = intervals.schema
    pd = init_view(schema, make_project(schema, ["D"]), space)
    pe = init_view(schema, make_project(schema, ["E"]), space)
    out = lift_operator(intervals.ops, "gplus", [pd, pe])
    # brute force: group the 16 states by the sum of their cells
    expected = group_by(space, lambda s: VInt(s[0].n + s[1].n))
    assert set(out.indices()) == {VInt(k) for k in range(7)}
    for k, states in expected.items():
        assert out.block(k) == space.mask_of(states)


def test_lift_commutative_argument_order(running):
    space = running.space
    p1 = IndexedPartition({TRUE: c_block(space, {"c1"}), FALSE: c_block(space, {"c2", "c3", "c4"})})
    p2 = IndexedPartition({TRUE: c_block(space, {"c3"}), FALSE: c_block(space, {"c1", "c2", "c4"})})
    assert lift_operator(running.ops, "or", [p1, p2]) == lift_operator(running.ops, "or", [p2, p1])


def test_branch_restricts_to_condition(running):
    space = running.space
    cond = IndexedPartition({TRUE: c_block(space, {"c1", "c3"}),
                             FALSE: c_block(space, {"c2", "c4"})})
    q = make_project(running.schema, ["A", "B"])
    part = init_view(running.schema, q, space)
    out = branch(cond, part)
    a1b2 = VTuple((VAtom("A", "a1"), VAtom("B", "b2")))
    expected = space.mask_of(
        s for s in space
        if s[0].name == "a1" and s[1].name == "b2" and s[2].name in {"c1", "c3"})
    assert out.block(a1b2) == expected
    assert out.coverage == cond.block(TRUE)


def test_branch_all_false_condition_empties(running):
    space = running.space
    cond = IndexedPartition({FALSE: space.all_mask})
    part = single_block(space, VInt(1))
    assert len(branch(cond, part)) == 0


def test_branch_all_true_condition_is_identity(running):
    space = running.space
    cond = IndexedPartition({TRUE: space.all_mask})
    q = make_project(running.schema, ["A", "C"])
    part = init_view(running.schema, q, space)
    assert branch(cond, part) == part


def test_branch_requires_boolean_condition(running):
    space = running.space
    with pytest.raises(PartitionError):
        branch(single_block(space, VInt(1)), single_block(space, VInt(2)))


def test_join_neutral_element(running):
    q = make_project(running.schema, ["A", "B"])
    part = init_view(running.schema, q, running.space)
    empty = IndexedPartition({})
    assert join(part, empty) == part
    assert join(empty, part) == part


def test_join_of_branched_alternatives(running):
    # both paths through the conditional, grouped by brute force
    space, schema, ops = running.space, running.schema, running.ops
    taken = c_block(space, {"c1", "c3"})
    other = space.all_mask & ~taken
    cond = IndexedPartition({TRUE: taken, FALSE: other})
    ncond = IndexedPartition({TRUE: other, FALSE: taken})
    pab = init_view(schema, make_project(schema, ["A", "B"]), space)
    pac = init_view(schema, make_project(schema, ["A", "C"]), space)
    out = join(branch(cond, pab), branch(ncond, pac))

    def concrete(s):
        qab = make_project(schema, ["A", "B"])
        qac = make_project(schema, ["A", "C"])
        picked = qab if s[2].name in {"c1", "c3"} else qac
        return eval_query(schema, picked, s)

    assert_matches_grouping(space, out, concrete)
    a1b2 = VTuple((VAtom("A", "a1"), VAtom("B", "b2")))
    assert out.block(a1b2) == space.mask_of(
        s for s in space if s[0].name == "a1" and s[1].name == "b2"
        and s[2].name in {"c1", "c3"})
    assert len(out) == 8


def test_join_disjoint_indices_is_plain_union(running):
    space = running.space
    left = IndexedPartition({VInt(1): c_block(space, {"c1"})})
    right = IndexedPartition({VInt(2): c_block(space, {"c2"})})
    out = join(left, right)
    assert out.block(VInt(1)) == left.block(VInt(1))
    assert out.block(VInt(2)) == right.block(VInt(2))


def test_join_rejects_overlapping_coverage(running):
    space = running.space
    with pytest.raises(PartitionError):
        join(single_block(space, VInt(1)), single_block(space, VInt(1)))


def test_blocks_stay_disjoint_and_nonempty(running):
    space = running.space
    q = make_select(running.schema, [("C", VAtom("C", "c2"))])
    part = init_view(running.schema, q, space)
    seen = 0
    for _, mask in part.items():
        assert mask != 0
        assert mask & seen == 0
        seen |= mask


def test_coverage_algebra(running):
    space, schema, ops = running.space, running.schema, running.ops
    taken = c_block(space, {"c1", "c3"})
    cond = IndexedPartition({TRUE: taken, FALSE: space.all_mask & ~taken})
    pab = init_view(schema, make_project(schema, ["A", "B"]), space)
    restricted = branch(cond, pab)
    assert restricted.coverage == taken & pab.coverage
    lifted = lift_operator(ops, "or", [cond, cond])
    assert lifted.coverage == cond.coverage
    rest = branch(IndexedPartition({TRUE: space.all_mask & ~taken, FALSE: taken}), pab)
    assert join(restricted, rest).coverage == restricted.coverage | rest.coverage


def test_partition_dump_is_stable(running):
    q = make_project(running.schema, ["A", "B"])
    part = init_view(running.schema, q, running.space)
    assert part.dump(running.space) == part.dump(running.space)
    first = part.dump(running.space).splitlines()[0]
    assert "->" in first


def test_oracle_equivalence_composite_expression(running):
    """For a composite lifted expression, membership in a block must match
    per-state concrete evaluation, exhaustively."""
    space, schema, ops = running.space, running.schema, running.ops
    q1 = make_select(schema, [("C", VAtom("C", "c1"))])
    q3 = make_select(schema, [("C", VAtom("C", "c3"))])
    p1 = lift_operator(ops, "not", [lift_operator(ops, "isempty", [init_view(schema, q1, space)])])
    p3 = lift_operator(ops, "not", [lift_operator(ops, "isempty", [init_view(schema, q3, space)])])
    out = lift_operator(ops, "or", [p1, p3])

    def concrete(s):
        def holds(q):
            return eval_query(schema, q, s) != EMPTY
        return TRUE if holds(q1) or holds(q3) else FALSE

    assert_matches_grouping(space, out, concrete)


def test_lift_error_names_the_index_tuple(running):
    space = running.space
    bools = IndexedPartition({TRUE: c_block(space, {"c1"}),
                              FALSE: c_block(space, {"c2", "c3", "c4"})})
    with pytest.raises(Exception, match=r"index tuple \(FALSE, FALSE\)"):
        lift_operator(running.ops, "plus", [bools, bools])
