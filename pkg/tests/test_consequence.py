"""Staged operator tables: evaluation, validation, compilation, revision."""
from __future__ import annotations

import itertools

import pytest

from dialectic.consequence import (
    BOT,
    CE,
    Rule,
    RuleTable,
    TableError,
    ValidationScopeError,
    check_no_empty_derivation,
    evaluate,
    from_horn,
    limit_closure,
    parse_rule_line,
    parse_rule_table,
    revision_operator,
    rule,
    stream_revision_operator,
    validate_aco,
)


def table(*rules):
    return RuleTable(rules)


# ---------------------------------------------------------------------------
# evaluate / limit_closure
# ---------------------------------------------------------------------------

def test_evaluate_is_single_pass():
    # a chain does not cascade within one evaluation
    t = table(rule(0, {0}, 1), rule(0, {1}, 2))
    assert evaluate(t, 0, {0}) == {0, 1}


def test_evaluate_respects_stages():
    t = table(rule(3, {0}, BOT))
    assert evaluate(t, 2, {0}) == {0}
    assert evaluate(t, 3, {0}) == {0, BOT}


def test_evaluate_requires_all_premises():
    t = table(rule(0, {0, 1}, CE))
    assert evaluate(t, 5, {0}) == {0}
    assert evaluate(t, 5, {0, 1}) == {0, 1, CE}


def test_limit_closure_uses_max_stage():
    t = table(rule(7, {0}, BOT), rule(2, {1}, 2))
    assert limit_closure(t, {0}) == {0, BOT}
    assert limit_closure(t, {1}) == {1, 2}
    assert limit_closure(RuleTable(), {4}) == {4}


def test_inclusion_and_monotony_exhaustive_small():
    t = table(rule(1, {0}, 2), rule(2, {1, 2}, BOT), rule(0, {2}, CE))
    universe = [0, 1, 2, 3]
    sets = [frozenset(c) for n in range(4) for c in itertools.combinations(universe, n)]
    for F in sets:
        prev = None
        for n in range(4):
            out = evaluate(t, n, F)
            assert F <= out
            if prev is not None:
                assert prev <= out
            prev = out
        for G in sets:
            if F <= G:
                # fired conclusions persist under premise growth
                assert evaluate(t, 3, F) <= evaluate(t, 3, G)


# ---------------------------------------------------------------------------
# empty-set derivations are rejected at load time
# ---------------------------------------------------------------------------

def test_empty_derivation_rejected():
    bad = table(rule(0, set(), BOT))
    with pytest.raises(TableError):
        check_no_empty_derivation(bad)
    ok = table(rule(0, set(), 3))  # axiom conclusions from ∅ are fine
    check_no_empty_derivation(ok)


# ---------------------------------------------------------------------------
# validate_aco
# ---------------------------------------------------------------------------

def test_validate_passes_closed_table():
    t = table(rule(1, {0}, 1), rule(1, {1}, 2), rule(2, {0}, 2))
    rep = validate_aco(t, bound=4)
    assert rep.ok
    assert not rep.structural_iteration


def test_validate_iteration_violation_witness():
    # chain without its materialized composition: closure of closure grows
    t = table(rule(1, {0}, 1), rule(1, {1}, 2))
    rep = validate_aco(t, bound=4)
    assert not rep.ok
    assert any("iteration" in f for f in rep.failures)


def test_validate_structural_certificate():
    t = table(rule(0, {0, 1}, BOT), rule(4, {2}, CE))
    rep = validate_aco(t, bound=5)
    assert rep.ok
    assert rep.structural_iteration


def test_validate_scope_error():
    t = table(rule(0, {9}, BOT))
    with pytest.raises(ValidationScopeError):
        validate_aco(t, bound=8)


# ---------------------------------------------------------------------------
# from_horn
# ---------------------------------------------------------------------------

def test_from_horn_single_conflict():
    t = from_horn([0, 1, 2], [], [{1, 2}])
    assert len(t) == 1
    r = t.rules[0]
    assert r.stage == 0 and r.premises == {1, 2} and r.conclusion == BOT


def test_from_horn_materializes_chains():
    t = from_horn([0, 1, 2], [({0}, 1), ({1}, 2)], [])
    entries = {(r.premises, r.conclusion): r.stage for r in t}
    assert entries[(frozenset({0}), 1)] == 1
    assert entries[(frozenset({1}), 2)] == 1
    assert entries[(frozenset({0}), 2)] == 2  # derived at depth 2
    # single-pass evaluation now reaches the end of the chain immediately
    assert 2 in evaluate(t, 2, {0})


def test_from_horn_conflict_through_derivation():
    # k0 derives k2; k2 conflicts with k1  =>  {k0, k1} is jointly bad
    t = from_horn([0, 1, 2], [({0}, 2)], [{2, 1}])
    entries = {(r.premises, r.conclusion): r.stage for r in t}
    assert (frozenset({0, 1}), BOT) in entries
    assert entries[(frozenset({0, 1}), BOT)] == 1  # depth 1 + depth 0
    assert BOT in limit_closure(t, {0, 1})


def test_from_horn_validates_iteration():
    t = from_horn([0, 1, 2, 3], [({0}, 1), ({1}, 2), ({2}, 3)], [{3, 0}])
    rep = validate_aco(t, bound=4)
    assert rep.ok


def test_from_horn_rejects_unknown_items():
    with pytest.raises(TableError):
        from_horn([0, 1], [({0}, 5)], [])
    with pytest.raises(TableError):
        from_horn([0, 1], [], [{0, 7}])


# ---------------------------------------------------------------------------
# revision operators
# ---------------------------------------------------------------------------

def test_revision_operator_drops_b_from_premises():
    base = table(rule(0, {0, 5}, BOT), rule(1, {1}, CE), rule(0, {2}, 1))
    K = {0, 1, 2}
    revised = revision_operator(base, K, 5)
    entries = {(r.premises, r.conclusion) for r in revised}
    assert (frozenset({0}), BOT) in entries  # b removed from premises
    assert all(c == BOT or c in K for _, c in entries)
    assert not any(c == CE for _, c in entries)  # ce filtered out


def test_revision_operator_identity():
    base = table(
        rule(0, {0, 9}, BOT),
        rule(1, {1, 9}, 2),
        rule(2, {0, 1}, BOT),
        rule(0, {9}, 0),
        rule(1, {2}, CE),
    )
    K = frozenset({0, 1, 2})
    b = 9
    revised = revision_operator(base, K, b)
    filt = K | {BOT}
    for n in range(4):
        for size in range(len(K) + 1):
            for F in itertools.combinations(sorted(K), size):
                want = evaluate(base, n, frozenset(F) | {b}) & filt
                got = evaluate(revised, n, F) & filt
                assert got == want, (n, F)


def test_revision_operator_requires_fresh_b():
    base = table(rule(0, {0}, BOT))
    with pytest.raises(TableError):
        revision_operator(base, {0, 1}, 0)


def test_stream_revision_shifts_stages():
    # conflict {b1, k0} fires only once b1 has arrived (stream index 1)
    base = table(rule(0, {11, 0}, BOT))
    revised = stream_revision_operator(base, {0}, [10, 11])
    assert len(revised) == 1
    r = revised.rules[0]
    assert r.premises == {0}
    assert r.conclusion == BOT
    assert r.stage == 1
    assert BOT not in evaluate(revised, 0, {0})
    assert BOT in evaluate(revised, 1, {0})


def test_stream_revision_empty_stream_matches_plain_filter():
    base = table(rule(0, {0, 1}, BOT), rule(2, {1}, 2), rule(0, {0}, CE))
    a = stream_revision_operator(base, {0, 1, 2}, [])
    filt = frozenset({0, 1, 2, BOT})
    for n in range(3):
        for F in [set(), {0}, {1}, {0, 1}, {1, 2}]:
            assert evaluate(a, n, F) & filt == evaluate(base, n, F) & filt


def test_stream_items_disjoint_from_background():
    base = table(rule(0, {0}, BOT))
    with pytest.raises(TableError):
        stream_revision_operator(base, {0, 1}, [1])


# ---------------------------------------------------------------------------
# rule-line grammar
# ---------------------------------------------------------------------------

def test_parse_rule_line():
    r = parse_rule_line("at 3 : a0 a1 |- BOT")
    assert r == Rule(3, frozenset({0, 1}), BOT)
    r2 = parse_rule_line("at 0 : a5 |- CE")
    assert r2.conclusion == CE
    r3 = parse_rule_line("at 1 : a2 |- a7")
    assert r3.conclusion == 7


def test_parse_rule_table_skips_blank_and_comments():
    text = "# header\n\nat 0 : a0 |- CE\n  # tail\nat 1 : a1 a2 |- BOT\n"
    t = parse_rule_table(text)
    assert len(t) == 2


def test_rule_render_round_trip():
    r = Rule(4, frozenset({3, 1}), BOT)
    assert parse_rule_line(r.render()) == r


def test_parse_rule_line_errors():
    for bad in ["at x : a0 |- BOT", "a0 |- BOT", "at 1 : b0 |- BOT", "at 1 : a0 |- XX"]:
        with pytest.raises(ValueError):
            parse_rule_line(bad)
