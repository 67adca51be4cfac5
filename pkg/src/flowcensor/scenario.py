"""Scenario files.

A scenario bundles the schema, optional prior-knowledge narrowing of the
state space, the labeled secrets, the generalization hierarchies, one or
more programs, the request arguments and a partner id. Loading validates
everything across modules: programs parse and type, secrets resolve and
stay compliant initially, and every value the monitor can ever index is
placed exactly once in the assembled hierarchy (checked by running the
reference interpreter over the whole space and collecting query results).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .domain import (Attribute, Policy, Schema, SchemaError, Secret, State,
                     StateSpace, enumerate_states, state_text)
from .hierarchy import (Hierarchy, HierarchyError, TreeSpec, assemble,
                        flat_tree, parse_tree, tuple_tree)
from .lang import (Assign, BasicReq, Binary, If, InDomain, Lit, ParseError,
                   Program, Stmt, Unary, Var, parse, run_concrete, walk_exprs)
from .levels import Level, TypedProgram, infer
from .operators import IntervalTable, Operators
from .values import (EMPTY, FALSE, TRUE, Value, VAtom, VInt, VInterval,
                     VNode, VTuple, sort_key)


class ScenarioError(ValueError):
    pass


@dataclass
class Scenario:
    name: str
    path: Path | None
    schema: Schema
    space: StateSpace
    policy: Policy
    hierarchy: Hierarchy
    ops: Operators
    programs: dict[str, TypedProgram]
    args: tuple[Value, ...]
    partner: str = "partner"
    sources: dict[str, str] = field(default_factory=dict)

    def program_name(self, name: str | None = None) -> str:
        if name is not None:
            if name not in self.programs:
                raise ScenarioError(f"no program named {name!r} "
                                    f"(have: {', '.join(sorted(self.programs))})")
            return name
        if len(self.programs) == 1:
            return next(iter(self.programs))
        if "main" in self.programs:
            return "main"
        raise ScenarioError("several programs; pick one with --program")


# ---------------------------------------------------------------------------
# Value and state parsing


def _atom_index(schema: Schema) -> dict[str, VAtom]:
    index: dict[str, VAtom] = {}
    for attr in schema.attributes:
        for v in attr.domain:
            if isinstance(v, VAtom):
                index[v.name] = v
    return index


def parse_value_text(schema: Schema, text: str, where: str) -> Value:
    text = text.strip()
    if ":" in text:
        attr_name, _, atom = text.partition(":")
        attr = schema.attribute(attr_name)
        v = VAtom(attr_name, atom)
        if v not in attr.domain:
            raise ScenarioError(f"{where}: unknown atom {text!r}")
        return v
    if text.lstrip("-").isdigit():
        return VInt(int(text))
    if text.lower() == "true":
        return TRUE
    if text.lower() == "false":
        return FALSE
    atom = _atom_index(schema).get(text)
    if atom is None:
        raise ScenarioError(f"{where}: unknown atom {text!r}")
    return atom


def parse_state(schema: Schema, space: StateSpace, text: str, where: str = "state") -> State:
    body = text.strip()
    if body.startswith("(") and body.endswith(")"):
        body = body[1:-1]
    parts = [p.strip() for p in body.split(",")]
    if len(parts) != len(schema.attributes) + 1:
        raise ScenarioError(f"{where}: expected {len(schema.attributes) + 1} fields in {text!r}")
    if parts[0] != schema.key_value:
        raise ScenarioError(f"{where}: key must be {schema.key_value!r} in {text!r}")
    cells = []
    for attr, raw in zip(schema.attributes, parts[1:]):
        if raw.lstrip("-").isdigit():
            cell: Value = VInt(int(raw))
        else:
            cell = VAtom(attr.name, raw.partition(":")[2] if ":" in raw else raw)
        if cell not in attr.domain:
            raise ScenarioError(f"{where}: {raw!r} is not in dom({attr.name})")
        cells.append(cell)
    state = tuple(cells)
    space.bit(state)  # membership check
    return state


# ---------------------------------------------------------------------------
# Program post-processing


def resolve_atoms(program: Program, schema: Schema) -> Program:
    """Rewrite name references that are not program variables but match a
    domain atom into atom literals; anything else unresolved stays a
    variable and fails level inference loudly."""
    atoms = _atom_index(schema)
    bound = set(program.variables)

    def fix(e):
        match e:
            case Var(name) if name not in bound and name in atoms:
                return Lit(atoms[name])
            case Unary(op, a):
                return Unary(op, fix(a))
            case Binary(op, l, r):
                return Binary(op, fix(l), fix(r))
            case InDomain(a, attr):
                return InDomain(fix(a), attr)
            case BasicReq(kind, terms, attrs):
                return BasicReq(kind, tuple((a, fix(t)) for a, t in terms), attrs)
            case _:
                return e

    def fix_stmts(stmts: tuple[Stmt, ...]) -> tuple[Stmt, ...]:
        out: list[Stmt] = []
        for s in stmts:
            if isinstance(s, Assign):
                out.append(Assign(s.target, fix(s.expr), sid=s.sid, line=s.line))
            elif isinstance(s, If):
                out.append(If(fix(s.guard), fix_stmts(s.then), fix_stmts(s.orelse),
                              sid=s.sid, line=s.line))
            else:
                out.append(s)
        return tuple(out)

    return Program(program.params, fix_stmts(program.body), program.reaction)


# ---------------------------------------------------------------------------
# Loading


def _schema_from(doc: dict) -> Schema:
    try:
        key = doc["schema"]["key"]
        raw_attrs = doc["schema"]["attributes"]
    except (KeyError, TypeError):
        raise ScenarioError("schema: needs key {attribute, value} and attributes")
    attributes = []
    seen_atoms: set[str] = set()
    for i, rawa in enumerate(raw_attrs):
        where = f"schema.attributes[{i}]"
        name = rawa.get("name")
        domain_raw = rawa.get("domain")
        if not name or not domain_raw:
            raise ScenarioError(f"{where}: needs name and a nonempty domain")
        kinds = {type(v) for v in domain_raw}
        if kinds == {int}:
            domain = tuple(VInt(v) for v in domain_raw)
        elif kinds == {str}:
            for v in domain_raw:
                if v in seen_atoms:
                    raise ScenarioError(f"{where}: atom name {v!r} reused across attributes")
                seen_atoms.add(v)
            domain = tuple(VAtom(name, v) for v in domain_raw)
        else:
            raise ScenarioError(f"{where}: domain must be all strings or all integers")
        attributes.append(Attribute(name, domain))
    try:
        return Schema(key["attribute"], key["value"], tuple(attributes))
    except SchemaError as e:
        raise ScenarioError(f"schema: {e}")


def _policy_from(doc: dict, schema: Schema, space: StateSpace) -> Policy:
    secrets = []
    labels: set[str] = set()
    for i, raw in enumerate(doc.get("policy", [])):
        where = f"policy[{i}]"
        label = raw.get("label", f"secret-{i}")
        if label in labels:
            raise ScenarioError(f"{where}: duplicate label {label!r}")
        labels.add(label)
        mask = 0
        if "pattern" in raw:
            pattern = {}
            for attr_name, raw_value in raw["pattern"].items():
                attr = _schema_attr(schema, attr_name, where)
                value = raw_value if isinstance(raw_value, str) else str(raw_value)
                cell = parse_value_text(schema, f"{attr_name}:{value}"
                                        if isinstance(raw_value, str) else value, where)
                if cell not in attr.domain:
                    raise ScenarioError(f"{where}: {raw_value!r} not in dom({attr_name})")
                pattern[schema.position(attr_name)] = cell
            for state in space:
                if all(state[pos] == cell for pos, cell in pattern.items()):
                    mask |= space.bit(state)
        elif "states" in raw:
            for text in raw["states"]:
                mask |= space.bit(parse_state(schema, space, text, where))
        else:
            raise ScenarioError(f"{where}: needs a pattern or a state list")
        if mask == 0:
            raise ScenarioError(f"{where}: secret {label!r} matches no state")
        if mask == space.all_mask:
            raise ScenarioError(f"{where}: secret {label!r} covers every state")
        secrets.append(Secret(label, mask))
    return Policy(tuple(secrets))


def _schema_attr(schema: Schema, name: str, where: str):
    try:
        return schema.attribute(name)
    except SchemaError:
        raise ScenarioError(f"{where}: unknown attribute {name!r}")


def _interval_spec(doc: dict) -> TreeSpec | None:
    raw = doc.get("hierarchy", {}).get("integers")
    if raw is None:
        return None
    try:
        spec = parse_tree(raw, leaf_attr=None)
    except HierarchyError as e:
        raise ScenarioError(f"hierarchy.integers: {e}")
    for v in spec.values():
        if not isinstance(v, (VInt, VInterval)):
            raise ScenarioError(f"hierarchy.integers: non-integer node {v}")
    return spec


def _attr_tree(doc: dict, attr: Attribute) -> TreeSpec:
    raw = doc.get("hierarchy", {}).get("attributes", {}).get(attr.name)
    names = {v.name for v in attr.domain if isinstance(v, VAtom)}
    if raw is None:
        return flat_tree(VNode(f"{attr.name}:*"), list(attr.domain))
    try:
        spec = parse_tree(raw, leaf_attr=attr.name, leaf_names=names)
    except HierarchyError as e:
        raise ScenarioError(f"hierarchy.attributes.{attr.name}: {e}")
    leaves = {v for v in spec.values() if isinstance(v, VAtom)}
    if leaves != set(attr.domain):
        missing = ", ".join(str(v) for v in sorted(set(attr.domain) - leaves, key=sort_key))
        raise ScenarioError(f"hierarchy.attributes.{attr.name}: does not cover {{{missing}}}")
    return spec


def _interval_table(spec: TreeSpec | None) -> IntervalTable | None:
    if spec is None:
        return None
    spans = set()
    for v in spec.values():
        if isinstance(v, VInt):
            spans.add((v.n, v.n))
        else:
            spans.add((v.lo, v.hi))
    root = spec.root
    root_span = (root.n, root.n) if isinstance(root, VInt) else (root.lo, root.hi)
    return IntervalTable(frozenset(spans), root_span)


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ScenarioError(f"{path}: no such file")
    except json.JSONDecodeError as e:
        raise ScenarioError(f"{path}: not valid JSON: {e}")
    return build_scenario(doc, path)


def build_scenario(doc: dict, path: Path | None = None) -> Scenario:
    schema = _schema_from(doc)
    full = enumerate_states(schema)
    if "space" in doc:
        keep = {parse_state(schema, full, text, f"space[{i}]")
                for i, text in enumerate(doc["space"])}
        space = StateSpace(schema, [s for s in full if s in keep])
    else:
        space = full
    policy = _policy_from(doc, schema, space)

    interval_spec = _interval_spec(doc)
    ops = Operators(schema, _interval_table(interval_spec))

    raw_programs = doc.get("programs")
    if not raw_programs:
        if "program" not in doc:
            raise ScenarioError("programs: need at least one program")
        raw_programs = {"main": doc["program"]}
    declared_levels = {name: Level(raw.lower())
                       for name, raw in doc.get("levels", {}).items()}

    programs: dict[str, TypedProgram] = {}
    sources: dict[str, str] = {}
    args = tuple(parse_value_text(schema, text, f"args[{i}]")
                 for i, text in enumerate(doc.get("args", [])))
    query_values: set[Value] = set()
    shapes: set[tuple[str, ...]] = set()
    literals: set[Value] = set(args)

    for name, rel in sorted(raw_programs.items()):
        where = f"programs.{name}"
        source_path = (path.parent / rel) if path is not None else Path(rel)
        try:
            source = source_path.read_text()
        except FileNotFoundError:
            raise ScenarioError(f"{where}: no such file {source_path}")
        try:
            program = resolve_atoms(parse(source), schema)
        except ParseError as e:
            raise ScenarioError(f"{where}: {e}")
        declared = {k: v for k, v in declared_levels.items() if k in program.variables}
        typed = infer(program, declared)  # TypeViolation propagates as such
        if len(args) != len(program.params):
            raise ScenarioError(f"{where}: takes {len(program.params)} argument(s), "
                                f"scenario provides {len(args)}")
        programs[name] = typed
        sources[name] = source
        for e in walk_exprs(program):
            if isinstance(e, Lit):
                literals.add(e.value)
        log: list = []
        for db in space:
            run_concrete(program, args, schema, ops, db, query_log=log)
        for query, result in log:
            query_values.add(result)
            if query.kind == "project" and len(query.attrs) > 1:
                shapes.add(query.attrs)

    hierarchy = _assemble_hierarchy(doc, schema, space, interval_spec,
                                    query_values, literals, shapes)
    name = doc.get("name", path.stem if path is not None else "scenario")
    return Scenario(name, path, schema, space, policy, hierarchy, ops,
                    programs, args, doc.get("partner", "partner"), sources)


def _assemble_hierarchy(doc, schema, space, interval_spec, query_values,
                        literals, shapes) -> Hierarchy:
    attr_trees: dict[str, TreeSpec] = {}
    for attr in schema.attributes:
        if all(isinstance(v, VAtom) for v in attr.domain):
            attr_trees[attr.name] = _attr_tree(doc, attr)
        elif doc.get("hierarchy", {}).get("attributes", {}).get(attr.name):
            raise ScenarioError(f"hierarchy.attributes.{attr.name}: integer attributes "
                                "are generalized by hierarchy.integers")

    parts: list[TreeSpec] = [attr_trees[a.name] for a in schema.attributes
                             if a.name in attr_trees]
    for shape in sorted(shapes):
        trees = []
        for attr_name in shape:
            if attr_name not in attr_trees:
                raise ScenarioError(f"projection over {{{', '.join(shape)}}}: tuple "
                                    "generalization needs atom attributes")
            trees.append(attr_trees[attr_name])
        parts.append(tuple_tree(trees))
    if interval_spec is not None:
        parts.append(interval_spec)

    placed: set[Value] = set()
    for part in parts:
        placed.update(part.values())
    extras: set[Value] = {TRUE, FALSE, EMPTY}
    for v in query_values | literals:
        if v not in placed and v not in extras:
            if isinstance(v, (VInt, VInterval)):
                raise ScenarioError(f"hierarchy.integers: value {v} from a query or "
                                    "literal is missing from the integer hierarchy")
            if isinstance(v, VTuple) and v.items and isinstance(v.items[0], VAtom) \
                    and v.items[0].attr == schema.key_attribute:
                extras.add(v)  # a full row
            elif isinstance(v, VTuple):
                raise ScenarioError(f"hierarchy: tuple value {v} is not covered "
                                    "by a projection shape")
            else:
                extras.add(v)
    try:
        hierarchy = assemble(parts, sorted(extras, key=sort_key),
                             interval_spec.root if interval_spec is not None else None)
    except HierarchyError as e:
        raise ScenarioError(f"hierarchy: {e}")
    for v in query_values | literals:
        if v not in hierarchy:
            raise ScenarioError(f"hierarchy: value {v} is not covered")
    return hierarchy


# ---------------------------------------------------------------------------
# Persistent previous-view store


def view_store_path(scenario: Scenario) -> Path:
    if scenario.path is None:
        raise ScenarioError("in-memory scenarios have no view store")
    return scenario.path.with_name(f"{scenario.path.stem}.view-{scenario.partner}.json")


def load_view(scenario: Scenario) -> int | None:
    """Stored previous view, or None when no request was served before."""
    store = view_store_path(scenario)
    if not store.exists():
        return None
    try:
        doc = json.loads(store.read_text())
        states = [parse_state(scenario.schema, scenario.space, text, str(store))
                  for text in doc["states"]]
    except (json.JSONDecodeError, KeyError) as e:
        raise ScenarioError(f"{store}: unreadable view store: {e}")
    return scenario.space.mask_of(states)


def save_view(scenario: Scenario, mask: int) -> Path:
    store = view_store_path(scenario)
    states = [state_text(scenario.schema, s) for s in scenario.space.members(mask)]
    store.write_text(json.dumps({"partner": scenario.partner, "states": states},
                                indent=2) + "\n")
    return store
