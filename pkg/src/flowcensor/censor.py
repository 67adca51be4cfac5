"""Declassification censor.

Before a protected value crosses into the open realm, the censor summarizes
which value sets would, combined with what the partner already holds (the
previous view), pin the database row inside a secret. The summary is a
security configuration: the partition's index domain plus, per secret, the
maximal set of indices whose blocks are confined to that secret. A
nonempty summary forces generalization: the value is replaced by the root
of its subtree in a minimal disjoint-subtree scheme that covers every
violating set while no selected subtree stays inside one. Finally the
previous view narrows to the states consistent with the released value's
preimage. Hiding is thereby indistinguishable across the whole preimage
cluster, which blocks meta-inference from the act of hiding itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

from .domain import Policy
from .hierarchy import Hierarchy
from .partition import IndexedPartition
from .values import Value, sort_key


class CensorError(RuntimeError):
    pass


@dataclass(frozen=True)
class SecurityConfig:
    domain: frozenset[Value]
    violating: frozenset[frozenset[Value]]

    def describe(self) -> str:
        def fmt(vals):
            return "{" + ", ".join(str(v) for v in sorted(vals, key=sort_key)) + "}"

        sets = sorted(self.violating, key=lambda s: sorted(sort_key(v) for v in s))
        return f"domain={fmt(self.domain)} violating=[{', '.join(fmt(s) for s in sets)}]"


def security_configuration(p: IndexedPartition, view: int, policy: Policy) -> SecurityConfig:
    """Per secret, the indices whose block (within the view) lies inside the
    secret; empty index sets are dropped and equal ones deduplicated. A
    secret absorbing the whole domain means the view was already compromised."""
    domain = frozenset(p.indices())
    violating: set[frozenset[Value]] = set()
    for secret in policy.secrets:
        harmful = frozenset(w for w, block in p.items() if block & view & ~secret.mask == 0)
        if harmful == domain and domain:
            raise CensorError(f"previous view is already confined to secret {secret.label!r}")
        if harmful:
            violating.add(harmful)
    return SecurityConfig(domain, frozenset(violating))


def security_configuration_by_search(p: IndexedPartition, view: int, policy: Policy) -> SecurityConfig:
    """Reference computation straight from the harmfulness condition: search
    the powerset of the domain for maximal index sets whose combined blocks,
    within the view, are confined to a secret. Exponential; test-sized only."""
    indices = p.indices()
    if len(indices) > 16:
        raise CensorError("powerset search only supports small domains")
    domain = frozenset(indices)
    violating: set[frozenset[Value]] = set()
    for secret in policy.secrets:
        harmful: list[frozenset[Value]] = []
        for size in range(1, len(indices)):
            for combo in combinations(indices, size):
                union = 0
                for w in combo:
                    union |= p.block(w)
                if union & view & ~secret.mask == 0:
                    harmful.append(frozenset(combo))
        maximal = [i for i in harmful if not any(i < j for j in harmful)]
        violating.update(maximal)
    return SecurityConfig(domain, frozenset(violating))


def subtree_scheme(h: Hierarchy, sc: SecurityConfig) -> frozenset[Value]:
    """Roots of the selected subtrees: climb from each violating value to the
    first ancestor whose subtree reaches outside the violating set (within
    the configuration domain), then drop subtrees nested in selected ones."""
    roots: set[Value] = set()
    for vio in sc.violating:
        for w in vio:
            if w not in h:
                raise CensorError(f"value {w} is outside the generalization hierarchy")
            node = w
            while h.subtree_values(node) & sc.domain <= vio:
                parent = h.parent_of(node)
                if parent is None:
                    break
                node = parent
            roots.add(node)
    return frozenset(
        r for r in roots
        if not any(other != r and h.is_ancestor_or_self(other, r) for other in roots)
    )


def _scheme_valid(h: Hierarchy, sc: SecurityConfig, scheme: frozenset[Value]) -> bool:
    subtrees = {r: h.subtree_values(r) for r in scheme}
    for vio in sc.violating:
        touched = [r for r, vals in subtrees.items() if vals & vio]
        covered = set()
        for r in touched:
            if subtrees[r] & sc.domain <= vio:
                return False
            covered |= subtrees[r]
        if not vio <= covered:
            return False
    return True


def subtree_scheme_by_search(h: Hierarchy, sc: SecurityConfig) -> frozenset[Value]:
    """Reference computation: enumerate every family of pairwise-disjoint
    subtrees, keep the valid ones and demand a unique minimum under the
    'every subtree is contained in one of the other scheme' order."""
    values = h.values()
    if len(values) > 14:
        raise CensorError("exhaustive scheme search only supports small hierarchies")

    candidates: list[frozenset[Value]] = []

    def grow(chosen: list[Value], rest: list[Value]):
        candidates.append(frozenset(chosen))
        for i, v in enumerate(rest):
            if any(h.is_ancestor_or_self(c, v) or h.is_ancestor_or_self(v, c) for c in chosen):
                continue
            grow(chosen + [v], rest[i + 1:])

    grow([], values)
    valid = [c for c in candidates if _scheme_valid(h, sc, c)]

    def below(a: frozenset[Value], b: frozenset[Value]) -> bool:
        return all(any(h.is_ancestor_or_self(rb, ra) for rb in b) for ra in a)

    minimal = [a for a in valid if not any(b != a and below(b, a) and not below(a, b) for b in valid)]
    if len(minimal) != 1:
        raise CensorError(f"scheme minimum is not unique: {len(minimal)} candidates")
    return minimal[0]


def generalize(h: Hierarchy, sc: SecurityConfig, w: Value,
               scheme: frozenset[Value] | None = None) -> Value:
    """Root of the scheme subtree containing the value, else the value."""
    if w not in h:
        raise CensorError(f"value {w} is outside the generalization hierarchy")
    if scheme is None:
        scheme = subtree_scheme(h, sc)
    for root in scheme:
        if h.is_ancestor_or_self(root, w):
            return root
    return w


def inferred_states(p: IndexedPartition, h: Hierarchy, sc: SecurityConfig,
                    g: Value, scheme: frozenset[Value] | None = None) -> int:
    """States consistent with the released value: the union of the blocks of
    every index that generalizes to the same output."""
    if scheme is None:
        scheme = subtree_scheme(h, sc)
    mask = 0
    for w, block in p.items():
        if generalize(h, sc, w, scheme) == g:
            mask |= block
    return mask


@dataclass
class CensorState:
    view: int
    policy: Policy
    hierarchy: Hierarchy
    scheme_cache: dict[SecurityConfig, frozenset[Value]] = field(default_factory=dict)

    def scheme(self, sc: SecurityConfig) -> frozenset[Value]:
        if sc not in self.scheme_cache:
            self.scheme_cache[sc] = subtree_scheme(self.hierarchy, sc)
        return self.scheme_cache[sc]


@dataclass(frozen=True)
class CensorDecision:
    sc: SecurityConfig
    value: Value
    generalized: Value
    inferred: int
    view_before: int
    view_after: int


def censor_step(cs: CensorState, p: IndexedPartition, v: Value) -> CensorDecision:
    """One declassification: summarize, generalize, narrow the view."""
    if v not in p:
        raise CensorError(f"declassified value {v} is not an index of the temporary view")
    sc = security_configuration(p, cs.view, cs.policy)
    scheme = cs.scheme(sc)
    g = generalize(cs.hierarchy, sc, v, scheme)
    inferred = inferred_states(p, cs.hierarchy, sc, g, scheme)
    view_after = cs.view & inferred
    for secret in cs.policy.secrets:
        if view_after & ~secret.mask == 0:
            raise CensorError(f"view confined to secret {secret.label!r} after censoring")
    return CensorDecision(sc, v, g, inferred, cs.view, view_after)


@dataclass
class DistortionFailure:
    sc: SecurityConfig
    item: int
    value: Value
    message: str


@dataclass
class DistortionReport:
    checked: int
    failures: list[DistortionFailure]

    @property
    def passed(self) -> bool:
        return not self.failures


def validate_distortion(h: Hierarchy, configs, table=None) -> DistortionReport:
    """Check the two distortion laws for each configuration: with nothing
    violating every value maps to itself, and no preimage cluster that meets
    the domain may stay inside a violating set. `table` defaults to subtree
    generalization; tests inject broken tables to prove the check bites."""
    if table is None:
        def table(sc: SecurityConfig, w: Value) -> Value:
            return generalize(h, sc, w)

    failures: list[DistortionFailure] = []
    checked = 0
    values = h.values()
    for sc in configs:
        checked += 1
        clusters: dict[Value, set[Value]] = {}
        for w in values:
            clusters.setdefault(table(sc, w), set()).add(w)
        if not sc.violating:
            for w in values:
                if table(sc, w) != w:
                    failures.append(DistortionFailure(
                        sc, 1, w, f"{w} distorted although nothing is violating"))
            continue
        for g, cluster in clusters.items():
            met = cluster & sc.domain
            if not met:
                continue
            for vio in sc.violating:
                if met <= vio:
                    failures.append(DistortionFailure(
                        sc, 2, g, f"preimage of {g} meets the domain only inside a violating set"))
    return DistortionReport(checked, failures)
