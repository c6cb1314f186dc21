"""Consistency checking and compilation of rule models into policy trees.

Semantics at one assignment of the state variables:

* Applicable rules are those whose condition holds.
* Hard rules are resolved by priority (1 first). A rule that cannot be
  satisfied together with already accepted higher-priority rules is
  discarded. Rules of equal priority that cannot be satisfied together are
  a conflict, as is a rule none of whose actions has a true precondition.
* The selected actions are the first valid choice vector in (priority,
  declaration) order, each rule trying its actions left to right. Selected
  actions must have true preconditions and be pairwise non-mutex.
* Advisory rules never conflict; each uses its first enabled action.

The compiled policy is a reduced ordered decision diagram over the catalog
order: identical subtrees are shared and tests whose branches all agree are
removed, so depth never exceeds the number of variables.
"""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass
from functools import cached_property, lru_cache
from pathlib import Path
from itertools import groupby
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .dsl import BOUNDED_KINDS, ConstraintKind, Rule, RuleModel, compile_condition, parse_file
from .monitor import SemanticState, StateVariableCatalog

MAX_STATE_SPACE = 10 ** 7
DEFAULT_MAX_REPORTS = 100

MUTEX_CONFLICT = "mutex_conflict"
UNSATISFIABLE_PRECONDITION = "unsatisfiable_precondition"
EMPTY_REQUIREMENT_INTERSECTION = "empty_requirement_intersection"


class PolicyError(Exception):
    pass


class StateSpaceTooLarge(PolicyError):
    pass


class InconsistentModelError(PolicyError):
    def __init__(self, reports: Sequence["ConflictReport"]):
        self.reports = list(reports)
        super().__init__(f"model is inconsistent ({len(self.reports)} conflicting situation(s))")


@dataclass(frozen=True)
class ConflictReport:
    assignment: SemanticState
    conflicting_rules: Tuple[str, ...]
    reason: str

    def describe(self) -> str:
        situation = ", ".join(f"{k}={v}" for k, v in self.assignment.as_dict().items())
        return (f"{self.reason}: rules {', '.join(self.conflicting_rules)} cannot all be "
                f"satisfied when {situation}")


@dataclass(frozen=True)
class Leaf:
    """Constraint kinds required at a situation, with the rules behind each."""

    hard: Tuple[Tuple[ConstraintKind, Tuple[str, ...]], ...] = ()
    advisory: Tuple[Tuple[ConstraintKind, Tuple[str, ...]], ...] = ()

    @property
    def hard_kinds(self) -> FrozenSet[ConstraintKind]:
        return frozenset(k for k, _ in self.hard)

    @property
    def advisory_kinds(self) -> FrozenSet[ConstraintKind]:
        return frozenset(k for k, _ in self.advisory)

    @property
    def hard_mask(self) -> int:
        return sum(k.bit for k, _ in self.hard)

    @property
    def advisory_mask(self) -> int:
        return sum(k.bit for k, _ in self.advisory)

    def rules_for(self, kind: ConstraintKind, hard: bool) -> Tuple[str, ...]:
        for k, rules in (self.hard if hard else self.advisory):
            if k == kind:
                return rules
        return ()


EMPTY_LEAF = Leaf()


# --------------------------------------------------------------- semantics

class _Semantics:
    """Precompiled predicates for fast evaluation of a model over index tuples."""

    def __init__(self, model: RuleModel):
        self.model = model
        catalog = model.catalog
        self.rule_cond = [compile_condition(r.condition, catalog) for r in model.rules]
        self.action_pre = {a.name: compile_condition(a.precondition, catalog)
                           for a in model.actions}
        self.kind = {a.name: a.kind for a in model.actions}
        self.mutex_pairs = set()
        for m in model.mutexes:
            for a in m.actions:
                for b in m.actions:
                    if a != b:
                        self.mutex_pairs.add((a, b))
        order = sorted(range(len(model.rules)), key=lambda i: model.rules[i].priority)
        self.hard_order = [i for i in order if model.rules[i].hard]
        self.advisory_order = [i for i, r in enumerate(model.rules) if not r.hard]

    def compatible(self, a: str, chosen: Sequence[str]) -> bool:
        return all((a, c) not in self.mutex_pairs for c in chosen)

    def choose(self, rules: Sequence[Rule], enabled: Dict[str, bool]) -> Optional[List[str]]:
        """First valid choice vector, or None if the rules cannot be satisfied."""
        chosen: List[str] = []

        def search(i: int) -> bool:
            if i == len(rules):
                return True
            for a in rules[i].requirement:
                if enabled[a] and self.compatible(a, chosen):
                    chosen.append(a)
                    if search(i + 1):
                        return True
                    chosen.pop()
            return False

        return chosen if search(0) else None

    def resolve(self, idx: Sequence[int]):
        """Return ``(accepted hard rules, chosen actions, conflict or None)``."""
        rules = self.model.rules
        enabled = {name: pre(idx) for name, pre in self.action_pre.items()}
        applicable = [i for i in self.hard_order if self.rule_cond[i](idx)]
        accepted: List[Rule] = []
        for _, group_iter in groupby(applicable, key=lambda i: rules[i].priority):
            group = [rules[i] for i in group_iter]
            dead = [r for r in group if not any(enabled[a] for a in r.requirement)]
            if dead:
                return accepted, None, ((dead[0].name,), UNSATISFIABLE_PRECONDITION)
            fits = [r for r in group if self.choose(accepted + [r], enabled) is not None]
            if self.choose(accepted + fits, enabled) is None:
                for i, r1 in enumerate(fits):
                    for r2 in fits[i + 1:]:
                        if self.choose(accepted + [r1, r2], enabled) is None:
                            return accepted, None, ((r1.name, r2.name), MUTEX_CONFLICT)
                return accepted, None, (tuple(r.name for r in fits),
                                        EMPTY_REQUIREMENT_INTERSECTION)
            accepted.extend(fits)
        chosen = self.choose(accepted, enabled)
        return accepted, chosen, None

    def decide(self, idx: Sequence[int]) -> Leaf:
        accepted, chosen, conflict = self.resolve(idx)
        if conflict is not None:
            raise InconsistentModelError([])
        hard: Dict[ConstraintKind, List[str]] = {}
        for rule, action in zip(accepted, chosen):
            kind = self.kind[action]
            if kind is not ConstraintKind.NONE:
                hard.setdefault(kind, []).append(rule.name)
        advisory: Dict[ConstraintKind, List[str]] = {}
        rules = self.model.rules
        for i in self.advisory_order:
            if not self.rule_cond[i](idx):
                continue
            for a in rules[i].requirement:
                if self.action_pre[a](idx):
                    kind = self.kind[a]
                    if kind is not ConstraintKind.NONE:
                        advisory.setdefault(kind, []).append(rules[i].name)
                    break
        return Leaf(tuple((k, tuple(hard[k])) for k in sorted(hard)),
                    tuple((k, tuple(advisory[k])) for k in sorted(advisory)))


def _guard(catalog: StateVariableCatalog) -> None:
    if catalog.state_space_size > MAX_STATE_SPACE:
        raise StateSpaceTooLarge(
            f"state space has {catalog.state_space_size} assignments (limit {MAX_STATE_SPACE})")


def check_consistency(model: RuleModel,
                      max_reports: int = DEFAULT_MAX_REPORTS) -> List[ConflictReport]:
    """Enumerate every assignment; return the situations where hard rules conflict."""
    catalog = model.catalog
    _guard(catalog)
    sem = _Semantics(model)
    reports: List[ConflictReport] = []
    for idx in catalog.assignments():
        _, _, conflict = sem.resolve(idx)
        if conflict is not None:
            rules, reason = conflict
            reports.append(ConflictReport(catalog.state(idx), rules, reason))
            if len(reports) >= max_reports:
                break
    return reports


def conflict_classes(reports: Iterable[ConflictReport]
                     ) -> Dict[Tuple[FrozenSet[str], str], List[ConflictReport]]:
    """Group reports by (set of conflicting rules, reason)."""
    classes: Dict[Tuple[FrozenSet[str], str], List[ConflictReport]] = {}
    for rep in reports:
        classes.setdefault((frozenset(rep.conflicting_rules), rep.reason), []).append(rep)
    return classes


def decide(model: RuleModel, state: SemanticState) -> Leaf:
    """Direct semantic evaluation of ``model`` (no tree)."""
    return _Semantics(model).decide(state.indices)


# -------------------------------------------------------------------- tree

@dataclass(frozen=True)
class PolicyTree:
    """Decision diagram: refs >= 0 index ``nodes``, refs < 0 are ``~leaf_index``."""

    catalog: StateVariableCatalog
    nodes: Tuple[Tuple[int, Tuple[int, ...]], ...]
    leaves: Tuple[Leaf, ...]
    root: int
    model_digest: bytes = b"\0" * 32

    @property
    def catalog_digest(self) -> bytes:
        return self.catalog.digest()

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    @property
    def depth(self) -> int:
        memo: Dict[int, int] = {}

        def d(ref: int) -> int:
            if ref < 0:
                return 0
            if ref not in memo:
                memo[ref] = 1 + max(d(c) for c in self.nodes[ref][1])
            return memo[ref]

        return d(self.root)

    def evaluate_indices(self, indices: Sequence[int]) -> Leaf:
        ref = self.root
        nodes = self.nodes
        while ref >= 0:
            var, children = nodes[ref]
            ref = children[indices[var]]
        return self.leaves[~ref]

    @cached_property
    def flat(self) -> "FlatPolicy":
        return FlatPolicy.from_tree(self)

    def flatten(self) -> "FlatPolicy":
        return self.flat


def evaluate(tree: PolicyTree, state: SemanticState) -> Leaf:
    """Descend the tree for ``state``; at most ``tree.depth`` tests."""
    if state.catalog.digest() != tree.catalog_digest:
        raise PolicyError("state catalog does not match the policy catalog")
    return tree.evaluate_indices(state.indices)


class _Builder:
    def __init__(self):
        self.leaves: List[Leaf] = []
        self.leaf_ids: Dict[Leaf, int] = {}
        self.nodes: List[Tuple[int, Tuple[int, ...]]] = []
        self.node_ids: Dict[Tuple[int, Tuple[int, ...]], int] = {}

    def leaf(self, leaf: Leaf) -> int:
        i = self.leaf_ids.get(leaf)
        if i is None:
            i = self.leaf_ids[leaf] = len(self.leaves)
            self.leaves.append(leaf)
        return ~i

    def node(self, var: int, children: Tuple[int, ...], reduce: bool = True) -> int:
        if reduce:
            if all(c == children[0] for c in children):
                return children[0]
            key = (var, children)
            i = self.node_ids.get(key)
            if i is None:
                i = self.node_ids[key] = len(self.nodes)
                self.nodes.append(key)
            return i
        self.nodes.append((var, children))
        return len(self.nodes) - 1


def compile_model(model: RuleModel, minimize: bool = True) -> PolicyTree:
    """Compile a consistent model into a policy tree.

    With ``minimize=False`` the full, unshared decision tree is returned;
    it is only useful for testing the reduction.
    """
    catalog = model.catalog
    _guard(catalog)
    conflicts = check_consistency(model, max_reports=1)
    if conflicts:
        raise InconsistentModelError(conflicts)
    sem = _Semantics(model)
    builder = _Builder()
    refs = [builder.leaf(sem.decide(idx)) for idx in catalog.assignments()]
    for var in reversed(range(len(catalog))):
        d = catalog.sizes[var]
        refs = [builder.node(var, tuple(refs[i:i + d]), reduce=minimize)
                for i in range(0, len(refs), d)]
    return PolicyTree(catalog, tuple(builder.nodes), tuple(builder.leaves), refs[0],
                      model.digest())


def minimize(tree: PolicyTree) -> PolicyTree:
    """Return the reduced form of ``tree`` (identity on reduced trees)."""
    builder = _Builder()
    memo: Dict[int, int] = {}

    def rebuild(ref: int) -> int:
        if ref < 0:
            return builder.leaf(tree.leaves[~ref])
        if ref not in memo:
            var, children = tree.nodes[ref]
            memo[ref] = builder.node(var, tuple(rebuild(c) for c in children))
        return memo[ref]

    root = rebuild(tree.root)
    return PolicyTree(tree.catalog, tuple(builder.nodes), tuple(builder.leaves), root,
                      tree.model_digest)


def compile(model: RuleModel) -> PolicyTree:  # noqa: A001
    return compile_model(model)


# ----------------------------------------------------- flat kernel layout

@dataclass(frozen=True)
class FlatPolicy:
    """Array form of a policy tree consumed by the checker kernels."""

    node_var: np.ndarray       # int32[n_nodes]
    node_start: np.ndarray     # int32[n_nodes], offset into children
    children: np.ndarray       # int32[n_children]
    leaf_hard: np.ndarray      # int32[n_leaves], bit mask of hard kinds
    leaf_advisory: np.ndarray  # int32[n_leaves], bit mask of advisory kinds
    root: int

    @classmethod
    def from_tree(cls, tree: PolicyTree) -> "FlatPolicy":
        node_var = np.empty(len(tree.nodes), dtype=np.int32)
        node_start = np.empty(len(tree.nodes), dtype=np.int32)
        children: List[int] = []
        for i, (var, kids) in enumerate(tree.nodes):
            node_var[i] = var
            node_start[i] = len(children)
            children.extend(kids)
        return cls(node_var, node_start, np.asarray(children, dtype=np.int32),
                   np.asarray([leaf.hard_mask for leaf in tree.leaves], dtype=np.int32),
                   np.asarray([leaf.advisory_mask for leaf in tree.leaves], dtype=np.int32),
                   tree.root)


# -------------------------------------------------------------- file format

MAGIC = b"TCPOLICY"
FORMAT_VERSION = 1


class PolicyFormatError(PolicyError):
    pass


class BadMagicError(PolicyFormatError):
    pass


class VersionMismatchError(PolicyFormatError):
    pass


class ChecksumError(PolicyFormatError):
    pass


class CatalogMismatchError(PolicyFormatError):
    pass


def _pack_str(out: List[bytes], text: str) -> None:
    data = text.encode("utf-8")
    out.append(struct.pack("<H", len(data)))
    out.append(data)


def export_policy(tree: PolicyTree) -> bytes:
    out: List[bytes] = [MAGIC, struct.pack("<H", FORMAT_VERSION), tree.catalog_digest,
                        tree.model_digest]
    out.append(struct.pack("<H", len(tree.catalog)))
    for name, values in tree.catalog:
        _pack_str(out, name)
        out.append(struct.pack("<H", len(values)))
        for v in values:
            _pack_str(out, v)
    out.append(struct.pack("<I", len(tree.leaves)))
    for leaf in tree.leaves:
        entries = [(0, k, r) for k, r in leaf.hard] + [(1, k, r) for k, r in leaf.advisory]
        out.append(struct.pack("<H", len(entries)))
        for sev, kind, rules in entries:
            out.append(struct.pack("<BBH", sev, int(kind), len(rules)))
            for r in rules:
                _pack_str(out, r)
    out.append(struct.pack("<I", len(tree.nodes)))
    children: List[int] = []
    for var, kids in tree.nodes:
        out.append(struct.pack("<HHI", var, len(kids), len(children)))
        children.extend(kids)
    out.append(struct.pack("<I", len(children)))
    out.append(struct.pack(f"<{len(children)}i", *children))
    out.append(struct.pack("<i", tree.root))
    body = b"".join(out)
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, data: bytes, pos: int):
        self.data = data
        self.pos = pos

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise PolicyFormatError("policy file is truncated")
        values = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return values

    def string(self) -> str:
        (n,) = self.take("<H")
        if self.pos + n > len(self.data):
            raise PolicyFormatError("policy file is truncated")
        raw = self.data[self.pos:self.pos + n]
        self.pos += n
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError:
            raise PolicyFormatError("invalid string in policy file") from None


def import_policy(data: bytes, expected_catalog: Optional[StateVariableCatalog] = None
                  ) -> PolicyTree:
    """Parse a policy file, verifying magic, version, checksum and catalog hash."""
    if len(data) < len(MAGIC) + 2 + 64 + 4:
        raise PolicyFormatError("policy file is truncated")
    if data[:len(MAGIC)] != MAGIC:
        raise BadMagicError("not a policy file (bad magic)")
    (version,) = struct.unpack_from("<H", data, len(MAGIC))
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"unsupported policy version {version}")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise ChecksumError("policy file checksum mismatch")
    r = _Reader(body, len(MAGIC) + 2)
    catalog_digest = body[r.pos:r.pos + 32]
    model_digest = body[r.pos + 32:r.pos + 64]
    r.pos += 64
    try:
        (nvars,) = r.take("<H")
        variables = []
        for _ in range(nvars):
            name = r.string()
            (nvals,) = r.take("<H")
            variables.append((name, tuple(r.string() for _ in range(nvals))))
        catalog = StateVariableCatalog(tuple(variables))
        if catalog.digest() != catalog_digest:
            raise CatalogMismatchError("catalog does not match its recorded hash")
        if expected_catalog is not None and expected_catalog.digest() != catalog_digest:
            raise CatalogMismatchError("policy catalog differs from the monitor catalog")
        (nleaves,) = r.take("<I")
        leaves = []
        for _ in range(nleaves):
            (nentries,) = r.take("<H")
            hard, advisory = [], []
            for _ in range(nentries):
                sev, kind, nrules = r.take("<BBH")
                rules = tuple(r.string() for _ in range(nrules))
                if kind >= len(BOUNDED_KINDS) or sev > 1:
                    raise PolicyFormatError("invalid leaf entry")
                (hard if sev == 0 else advisory).append((ConstraintKind(kind), rules))
            leaves.append(Leaf(tuple(hard), tuple(advisory)))
        (nnodes,) = r.take("<I")
        raw_nodes = [r.take("<HHI") for _ in range(nnodes)]
        (nchildren,) = r.take("<I")
        children = r.take(f"<{nchildren}i")
        (root,) = r.take("<i")
    except (ValueError, IndexError) as exc:
        if isinstance(exc, PolicyFormatError):
            raise
        raise PolicyFormatError(f"malformed policy file: {exc}") from None
    if r.pos != len(body):
        raise PolicyFormatError("trailing bytes in policy file")
    nodes = []
    for i, (var, arity, start) in enumerate(raw_nodes):
        if var >= len(catalog) or arity != catalog.sizes[var] or start + arity > len(children):
            raise PolicyFormatError("invalid node record")
        kids = tuple(children[start:start + arity])
        for k in kids:
            # children precede their parent, which rules out cycles
            if not (-len(leaves) <= k < i):
                raise PolicyFormatError("node child out of range")
        nodes.append((var, kids))
    if not (-len(leaves) <= root < len(nodes)):
        raise PolicyFormatError("root out of range")
    return PolicyTree(catalog, tuple(nodes), tuple(leaves), root, model_digest)


def save_policy(tree: PolicyTree, path) -> None:
    with open(path, "wb") as fh:
        fh.write(export_policy(tree))


def load_policy(path, expected_catalog: Optional[StateVariableCatalog] = None) -> PolicyTree:
    with open(path, "rb") as fh:
        return import_policy(fh.read(), expected_catalog)


DEFAULT_RULES = Path(__file__).with_name("data") / "rss_core.rules"


@lru_cache(maxsize=1)
def default_policy() -> PolicyTree:
    """The shipped rule model, compiled."""
    return compile_model(parse_file(DEFAULT_RULES))
