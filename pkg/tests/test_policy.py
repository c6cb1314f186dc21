import struct
import zlib
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trajcheck import dsl, policy as P
from trajcheck.dsl import ConstraintKind
from trajcheck.monitor import BUILTIN_CATALOG, StateVariableCatalog

from oracles import BruteForceSemantics, all_assignments, random_model_source

FIXTURES = Path(dsl.__file__).with_name("data") / "fixtures"
MINIMAL = ("statevar g { safe, unsafe } action brake { pre: true; kind: MIN_BRAKE } "
           "rule r1 priority 1 severity hard: when g == unsafe require brake")


def default_model():
    return dsl.parse_file(P.DEFAULT_RULES)


def assert_tree_matches_oracle(model, tree):
    oracle = BruteForceSemantics(model)
    for values, idx in zip(all_assignments(model), model.catalog.assignments()):
        expected = oracle.decide(values)
        assert expected is not None, values
        leaf = P.evaluate(tree, model.catalog.state(idx))
        assert (leaf.hard, leaf.advisory) == expected, values


def variables_in(tree):
    return {var for var, _ in tree.nodes}


def shape(tree, ref=None):
    """Node numbering-independent structure of a tree."""
    ref = tree.root if ref is None else ref
    if ref < 0:
        return tree.leaves[~ref]
    var, kids = tree.nodes[ref]
    return (var, tuple(shape(tree, k) for k in kids))


def reachable_leaves(tree):
    seen, stack = set(), [tree.root]
    while stack:
        ref = stack.pop()
        if ref < 0:
            seen.add(~ref)
        else:
            stack.extend(tree.nodes[ref][1])
    return seen


def assert_reduced(tree):
    assert len(set(tree.nodes)) == len(tree.nodes)
    assert all(len(set(kids)) > 1 for _, kids in tree.nodes)
    assert reachable_leaves(tree) == set(range(len(tree.leaves)))
    assert tree.depth <= len(tree.catalog)


def consistent_random_models(seed, count, max_states=10_000):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        m = dsl.parse(random_model_source(rng, max_states))
        if not P.check_consistency(m, max_reports=1):
            out.append(m)
    return out


# ------------------------------------------------------------ compile

def test_single_rule_tree():
    tree = P.compile_model(dsl.parse(MINIMAL))
    assert tree.depth == 1 and tree.node_count == 1 and len(tree.leaves) == 2
    cat = tree.catalog
    brake = P.evaluate(tree, cat.state_from(g="unsafe"))
    assert brake.hard == ((ConstraintKind.MIN_BRAKE, ("r1",)),) and brake.advisory == ()
    assert P.evaluate(tree, cat.state_from(g="safe")) == P.EMPTY_LEAF


def test_irrelevant_variable_is_never_tested():
    src = ("statevar a { p, q, r } statevar b { x, y } statevar c { u, v, w }\n"
           "action brake { pre: true; kind: MIN_BRAKE } action gap { pre: true; kind: MIN_GAP }\n"
           "rule r1 priority 1 severity hard: when a == q require brake\n"
           "rule r2 priority 1 severity advisory: when c == w require gap\n")
    m = dsl.parse(src)
    tree = P.compile_model(m)
    assert variables_in(tree) == {0, 2}
    assert_tree_matches_oracle(m, tree)
    assert_reduced(tree)


def test_default_model_exhaustive():
    m = default_model()
    tree = P.compile_model(m)
    assert m.catalog.state_space_size == 324
    assert_tree_matches_oracle(m, tree)
    assert_reduced(tree)


def test_default_policy_is_cached_and_matches():
    assert P.default_policy() is P.default_policy()
    assert P.export_policy(P.default_policy()) == P.export_policy(P.compile(default_model()))


def test_random_models_exhaustive():
    for m in consistent_random_models(5, 25):
        tree = P.compile_model(m)
        assert_tree_matches_oracle(m, tree)
        assert_reduced(tree)


def test_minimize_idempotent_and_shrinks():
    for m in [default_model()] + consistent_random_models(9, 10):
        full = P.compile_model(m, minimize=False)
        reduced = P.minimize(full)
        assert reduced.node_count <= full.node_count
        assert P.minimize(reduced) == reduced
        compiled = P.compile_model(m)
        assert shape(reduced) == shape(compiled)
        assert reduced.node_count == compiled.node_count
        for idx in m.catalog.assignments():
            assert full.evaluate_indices(idx) == reduced.evaluate_indices(idx)


def test_evaluate_examples():
    tree = P.default_policy()
    cat = BUILTIN_CATALOG
    lead = cat.state_from(relative_lane="same", longitudinal_relation="ahead",
                          long_gap_zone="unsafe", lat_gap_zone="safe", cut_in_threat="none")
    assert ConstraintKind.MIN_BRAKE in P.evaluate(tree, lead).hard_kinds
    watch = cat.state_from(relative_lane="adjacent_right", longitudinal_relation="ahead",
                           long_gap_zone="safe", lat_gap_zone="safe", cut_in_threat="predicted")
    leaf = P.evaluate(tree, watch)
    assert leaf.hard == () and leaf.advisory != ()
    oracle = BruteForceSemantics(default_model())
    for state in (lead, watch):
        found = P.evaluate(tree, state)
        assert (found.hard, found.advisory) == oracle.decide(state.as_dict())


def test_empty_rule_tree_is_empty():
    m = dsl.parse("statevar g { a, b } statevar h { c, d }")
    tree = P.compile_model(m)
    assert tree.node_count == 0 and tree.depth == 0
    for idx in m.catalog.assignments():
        assert tree.evaluate_indices(idx) == P.EMPTY_LEAF


def test_evaluate_rejects_foreign_state():
    tree = P.compile_model(dsl.parse(MINIMAL))
    with pytest.raises(P.PolicyError):
        P.evaluate(tree, BUILTIN_CATALOG.state((0, 0, 0, 0, 0)))


def test_decide_matches_tree():
    m = default_model()
    tree = P.default_policy()
    for idx in m.catalog.assignments():
        assert P.decide(m, m.catalog.state(idx)) == tree.evaluate_indices(idx)


# -------------------------------------------------------- consistency

def test_left_right_conflict_is_one_class():
    m = dsl.parse_file(FIXTURES / "conflict_left_right.rules")
    reports = P.check_consistency(m)
    classes = P.conflict_classes(reports)
    assert list(classes) == [(frozenset({"evade_left", "evade_right"}), P.MUTEX_CONFLICT)]
    for rep in reports:
        assert rep.assignment["lane_blocked"] == "yes"
        assert rep.assignment["left_free"] == rep.assignment["right_free"] == "yes"
    with pytest.raises(P.InconsistentModelError):
        P.compile_model(m)


def test_default_and_empty_models_consistent():
    assert P.check_consistency(default_model()) == []
    assert P.check_consistency(dsl.parse("statevar g { a, b }")) == []


def test_unsatisfiable_precondition_reason():
    m = dsl.parse("statevar g { a, b } action x { pre: g == a; kind: NONE } "
                  "rule r priority 1 severity hard: when true require x")
    (rep,) = P.check_consistency(m)
    assert rep.reason == P.UNSATISFIABLE_PRECONDITION
    assert rep.conflicting_rules == ("r",) and rep.assignment["g"] == "b"


def test_empty_requirement_intersection_reason():
    m = dsl.parse("statevar g { a, b } action x { pre: true; kind: NONE } "
                  "action y { pre: true; kind: NONE } action z { pre: true; kind: NONE } "
                  "mutex { x, y, z } "
                  "rule r1 priority 1 severity hard: when g == a require x or y "
                  "rule r2 priority 1 severity hard: when g == a require y or z "
                  "rule r3 priority 1 severity hard: when g == a require x or z")
    (rep,) = P.check_consistency(m)
    assert rep.reason == P.EMPTY_REQUIREMENT_INTERSECTION
    assert set(rep.conflicting_rules) == {"r1", "r2", "r3"}


def test_priority_resolves_conflict():
    m = dsl.parse("statevar g { a, b } action x { pre: true; kind: MIN_BRAKE } "
                  "action y { pre: true; kind: NONE } mutex { x, y } "
                  "rule hi priority 1 severity hard: when true require x "
                  "rule lo priority 2 severity hard: when true require y")
    assert P.check_consistency(m) == []
    tree = P.compile_model(m)
    assert tree.evaluate_indices((0,)).hard == ((ConstraintKind.MIN_BRAKE, ("hi",)),)


def test_report_cap_and_state_space_guard():
    m = dsl.parse_file(FIXTURES / "conflict_left_right.rules")
    assert len(P.check_consistency(m, max_reports=1)) == 1
    big = " ".join(f"statevar v{i} {{ {', '.join(f's{j}' for j in range(10))} }}"
                   for i in range(8))
    with pytest.raises(P.StateSpaceTooLarge):
        P.check_consistency(dsl.parse(big))


@settings(max_examples=40)
@given(st.integers(0, 2 ** 32 - 1))
def test_consistency_matches_brute_force(seed):
    m = dsl.parse(random_model_source(np.random.default_rng(seed), mutex_rate=0.9))
    oracle = BruteForceSemantics(m)
    expected = {tuple(v.items()) for v in all_assignments(m) if oracle.resolve(v)[1]}
    reports = P.check_consistency(m, max_reports=10 ** 7)
    assert {tuple(r.assignment.as_dict().items()) for r in reports} == expected
    names = {r.name: r for r in m.rules}
    for rep in reports:
        values = rep.assignment.as_dict()
        for rn in rep.conflicting_rules:
            assert dsl.evaluate_condition(names[rn].condition, values)


# -------------------------------------------------------- file format

def test_export_import_round_trip(tmp_path):
    tree = P.default_policy()
    assert P.import_policy(P.export_policy(tree), BUILTIN_CATALOG) == tree
    path = tmp_path / "p.bin"
    P.save_policy(tree, path)
    loaded = P.load_policy(path, BUILTIN_CATALOG)
    assert loaded == tree and loaded.model_digest == default_model().digest()


def test_single_byte_flips_never_crash():
    data = P.export_policy(P.default_policy())
    for i in range(len(data)):
        for bit in (0x01, 0x80):
            bad = bytearray(data)
            bad[i] ^= bit
            with pytest.raises(P.PolicyFormatError):
                P.import_policy(bytes(bad))


def _resign(body: bytes) -> bytes:
    return body + struct.pack("<I", zlib.crc32(body))


def test_specific_format_errors():
    data = P.export_policy(P.default_policy())
    with pytest.raises(P.BadMagicError):
        P.import_policy(b"XX" + data[2:])
    with pytest.raises(P.VersionMismatchError):
        P.import_policy(_resign(data[:8] + struct.pack("<H", 9) + data[10:-4]))
    with pytest.raises(P.ChecksumError):
        P.import_policy(data[:-1] + bytes([data[-1] ^ 0xFF]))
    with pytest.raises(P.PolicyFormatError):
        P.import_policy(data[:40])
    with pytest.raises(P.PolicyFormatError):
        P.import_policy(_resign(data[:-4] + b"\0"))


def test_catalog_mismatch_refused():
    other = P.compile_model(dsl.parse(MINIMAL))
    with pytest.raises(P.CatalogMismatchError):
        P.import_policy(P.export_policy(other), BUILTIN_CATALOG)


def test_cyclic_node_table_rejected():
    tree = P.default_policy()
    nodes = list(tree.nodes)
    var, kids = nodes[0]
    nodes[0] = (var, (tree.root,) + kids[1:])
    crafted = P.PolicyTree(tree.catalog, tuple(nodes), tree.leaves, tree.root, tree.model_digest)
    with pytest.raises(P.PolicyFormatError):
        P.import_policy(P.export_policy(crafted))


def test_flat_layout_matches_tree():
    tree = P.default_policy()
    flat = tree.flat
    assert tree.flatten() is flat
    for idx in BUILTIN_CATALOG.assignments():
        ref = flat.root
        while ref >= 0:
            ref = int(flat.children[flat.node_start[ref] + idx[flat.node_var[ref]]])
        leaf = tree.leaves[~ref]
        assert leaf == tree.evaluate_indices(idx)
        assert flat.leaf_hard[~ref] == leaf.hard_mask
