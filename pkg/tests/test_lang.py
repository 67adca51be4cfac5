import pytest

from flowcensor.lang import (Assign, Binary, Config, Declassify, If,
                             LangError, ParseError, initial_memory, parse,
                             pretty, run_concrete, statement_count, step)
from flowcensor.operators import EvalError
from flowcensor.values import EMPTY, TRUE, VAtom, VInt, VTuple


def test_parse_running_program_shape(running):
    program = running.programs["main"].program
    ifs = [s for s in program.statements if isinstance(s, If)]
    reqs = [s for s in program.statements
            if isinstance(s, Assign) and _has_basicreq(s.expr)]
    decls = [s for s in program.statements if isinstance(s, Declassify)]
    assert len(ifs) == 3
    assert len(reqs) == 4
    assert len(decls) == 1
    assert program.params == ("arg1", "arg2")
    assert program.reaction == "x_rea"


def _has_basicreq(e):
    from flowcensor.levels import contains_basicreq
    return contains_basicreq(e)


def test_parse_empty_body():
    program = parse("program(): x_rea")
    assert program.body == ()
    assert program.reaction == "x_rea"


def test_parse_sum_program_shape(intervals):
    program = intervals.programs["P2"].program
    assert len(program.statements) == 4
    gplus = [e for s in program.statements if isinstance(s, Assign)
             for e in [s.expr] if isinstance(e, Binary) and e.op == "gplus"]
    assert len(gplus) == 1
    assert sum(isinstance(s, Declassify) for s in program.statements) == 1


def test_parse_rejects_loops():
    with pytest.raises(ParseError, match="unsupported construct"):
        parse("program(): x_rea\nwhile true then x := 1 end")


def test_parse_error_carries_position():
    with pytest.raises(ParseError) as err:
        parse("program(): x_rea\nx := := 1")
    assert err.value.line == 2


def test_pretty_parse_roundtrip(running, intervals):
    for scenario in (running, intervals):
        for typed in scenario.programs.values():
            text = pretty(typed.program)
            assert pretty(parse(text)) == text


def test_pretty_keeps_operator_structure():
    program = parse("program(): x_rea\nx_rea := not (a or b) and c")
    text = pretty(program)
    assert "not (a or b) and c" in text
    assert pretty(parse(text)) == text


def test_step_plain_assignment(running):
    program = parse("program(): x_rea\nx := 1; x_rea := 2")
    db = running.space.states[0]
    cfg = Config(tuple(program.body), initial_memory(program, ()), db)
    out = step(cfg, running.schema, running.ops)
    assert out.mem["x"] == VInt(1)
    assert len(out.code) == 1


def test_step_request_line_sets_true(running):
    # first protected line with a matching row: the guard variable turns TRUE
    program = running.programs["main"].program
    db = next(s for s in running.space
              if s[0].name == "a1" and s[1].name == "b2" and s[2].name == "c1")
    mem = initial_memory(program, running.args)
    line = program.statements[1]  # the then-branch request assignment
    assert isinstance(line, Assign) and line.target == "x1"
    cfg = Config((line,), mem, db)
    out = step(cfg, running.schema, running.ops)
    assert out.mem["x1"] == TRUE


def test_step_guard_dispatch(running):
    program = parse("program(): x_rea\nif false then x := 1 else x := 2 end")
    db = running.space.states[0]
    cfg = Config(tuple(program.body), initial_memory(program, ()), db)
    out = step(cfg, running.schema, running.ops)
    assert isinstance(out.code[0], Assign) and out.code[0].expr == parse(
        "program(): x\nx := 2").body[0].expr


def test_step_rejects_non_boolean_guard(running):
    program = parse("program(): x_rea\nif 3 then x := 1 end")
    cfg = Config(tuple(program.body), initial_memory(program, ()), running.space.states[0])
    with pytest.raises(EvalError, match="non-boolean"):
        step(cfg, running.schema, running.ops)


def test_step_refuses_declassify(running):
    program = parse("program(): x_rea\ndeclassify(a, b)")
    cfg = Config(tuple(program.body), initial_memory(program, ()), running.space.states[0])
    with pytest.raises(LangError):
        step(cfg, running.schema, running.ops)


def test_run_concrete_running_example(running):
    program = running.programs["main"].program
    db = next(s for s in running.space
              if s[0].name == "a1" and s[1].name == "b2" and s[2].name == "c1")
    out = run_concrete(program, running.args, running.schema, running.ops, db)
    pair = VTuple((VAtom("A", "a1"), VAtom("B", "b2")))
    assert out.mem["x5"] == pair
    assert out.mem["x6"] == pair  # oracle declassification is a plain copy
    assert out.reaction == pair


def test_run_concrete_sum(intervals):
    program = intervals.programs["P2"].program
    db = (VInt(2), VInt(1))
    out = run_concrete(program, (), intervals.schema, intervals.ops, db)
    assert out.mem["x3"] == VInt(3)
    assert out.reaction == VInt(3)


def test_run_concrete_passthrough(running):
    program = parse("program(arg1): x_rea\nx_rea := arg1")
    out = run_concrete(program, (VAtom("C", "c2"),), running.schema, running.ops,
                       running.space.states[0])
    assert out.reaction == VAtom("C", "c2")


def test_run_concrete_deterministic(running):
    program = running.programs["main"].program
    db = running.space.states[5]
    a = run_concrete(program, running.args, running.schema, running.ops, db)
    b = run_concrete(program, running.args, running.schema, running.ops, db)
    assert a.mem == b.mem


def test_run_concrete_step_budget(running):
    program = running.programs["main"].program
    db = running.space.states[0]
    out = run_concrete(program, running.args, running.schema, running.ops, db,
                       snapshots=True)
    assert len(out.configs) <= 2 * statement_count(program.body) + 8


def test_initial_memory_defaults_and_args(running):
    program = running.programs["main"].program
    mem = initial_memory(program, running.args)
    assert mem["arg1"] == VAtom("C", "c1")
    assert mem["arg2"] == VAtom("C", "c3")
    assert mem["x1"] == EMPTY and mem["x_rea"] == EMPTY
    with pytest.raises(LangError):
        initial_memory(program, ())


def low_projection(mem, typed):
    from flowcensor.levels import Level
    return {v: mem[v] for v in typed.program.variables if typed.level(v) is Level.LOW}


def test_protected_steps_never_write_low_memory(running, intervals):
    # exhaustive: across every run, a step whose active command is protected
    # leaves the low projection untouched
    for scenario in (running, intervals):
        for name, typed in scenario.programs.items():
            for db in scenario.space:
                out = run_concrete(typed.program, scenario.args, scenario.schema,
                                   scenario.ops, db, snapshots=True)
                for before, after in zip(out.configs, out.configs[1:]):
                    active = before.active
                    if active is None or isinstance(active, Declassify):
                        continue
                    if typed.fragment_member(active):
                        assert low_projection(before.mem, typed) == \
                            low_projection(after.mem, typed)


def test_open_steps_depend_only_on_low_memory(running, intervals):
    # exhaustive pairing: open-realm non-declassify steps started from equal
    # low memories and equal code agree on successor code and low memory
    for scenario in (running, intervals):
        for name, typed in scenario.programs.items():
            seen = {}
            for db in scenario.space:
                out = run_concrete(typed.program, scenario.args, scenario.schema,
                                   scenario.ops, db, snapshots=True)
                for before, after in zip(out.configs, out.configs[1:]):
                    active = before.active
                    if active is None or isinstance(active, Declassify):
                        continue
                    if typed.fragment_member(active):
                        continue
                    key = (tuple(id(s) for s in before.code),
                           tuple(sorted(low_projection(before.mem, typed).items(),
                                        key=lambda kv: kv[0])))
                    succ = (tuple(id(s) for s in after.code),
                            tuple(sorted(low_projection(after.mem, typed).items(),
                                         key=lambda kv: kv[0])))
                    assert seen.setdefault(key, succ) == succ


def test_unbound_variable_reported(running):
    program = parse("program(): x_rea\nx_rea := true")
    cfg = Config((Assign("y", parse("program(): z\nz := ghost").body[0].expr, sid=99),),
                 initial_memory(program, ()), running.space.states[0])
    with pytest.raises(EvalError, match="unbound variable"):
        step(cfg, running.schema, running.ops)
