"""Set coding, fueled programs, and opponent runs."""

import random

import pytest

from dialectic.consequence import CE, RuleTable, rule
from dialectic.engine import ReplacementMap, RunEngine, QSystem, estimate_beliefs
from dialectic.opponents import (
    Diverged, FamilyParseError, PartialPSystem, Progress, decode_index,
    default_family, p_system_from_table, parse_family, pi_decode, pi_encode,
    r_iterate,
)
from dialectic.randomgen import random_qsystem
from dialectic.universe import (
    FueledFunction, ProgramError, ProgramUniverse, closure, lookup_table,
    parse_sexpr, script,
)


# ---------------------------------------------------------------------------
# set coding
# ---------------------------------------------------------------------------

def test_code_examples():
    assert pi_encode([]) == 0
    assert pi_encode([CE]) == 1
    assert pi_encode([0]) == 2
    assert pi_encode([CE, 1]) == 5
    assert pi_decode(0) == frozenset()
    assert pi_decode(1) == frozenset({CE})
    assert pi_decode(2) == frozenset({0})
    assert pi_decode(5) == frozenset({CE, 1})


def test_code_round_trip_all_small():
    for m in range(2 ** 16):
        assert pi_encode(pi_decode(m)) == m


def test_code_round_trip_sets():
    rng = random.Random(11)
    pool = [CE] + list(range(15))
    for _ in range(300):
        s = frozenset(rng.sample(pool, rng.randrange(len(pool))))
        assert pi_decode(pi_encode(s)) == s


def test_code_rejects_garbage():
    with pytest.raises(ValueError):
        pi_encode([-7])
    with pytest.raises(ValueError):
        pi_decode(-1)


def test_decode_index_examples():
    assert decode_index(1) == (0, 0, 0)
    assert decode_index(168) == (3, 1, 0)
    assert decode_index(2250) == (1, 2, 3)
    with pytest.raises(ValueError):
        decode_index(0)


def test_decode_index_round_trip():
    for a in range(7):
        for b in range(7):
            for c in range(7):
                for k in (1, 7, 11, 49):
                    m = 2 ** a * 3 ** b * 5 ** c * k
                    assert decode_index(m) == (a, b, c)


# ---------------------------------------------------------------------------
# the expression language
# ---------------------------------------------------------------------------

def test_script_parse_errors():
    for bad in ("", "(+ n", "(+ n 1))", "(frobnicate n 1)", "(+ n 1 2)",
                "(not)", "y", "(if n 1)"):
        with pytest.raises(ProgramError):
            parse_sexpr(bad)


def test_script_values():
    f = script("(+ (* n 2) 1)")
    assert f.call((5,), 100) == 11
    g = script("(if (ge n 3) (- n 3) (diverge))")
    assert g.call((7,), 100) == 4
    assert g.call((1,), 100) is None
    two = script("(bor (band x 6) (bxor n n))")
    assert two.call((9, 7), 100) == 6


def test_script_partial_operations_diverge():
    assert script("(div n 0)").call((4,), 100) is None
    assert script("(mod n 0)").call((4,), 100) is None
    assert script("(shl n 65)").call((1,), 100) is None
    assert script("(shr n 70)").call((1,), 100) is None
    assert script("(shl n 3)").call((1,), 100) == 8


def test_script_fuel_is_visited_nodes():
    # (+ n 1) visits three nodes
    f = script("(+ n 1)")
    assert f.call((4,), 2) is None
    assert f.call((4,), 3) == 5
    # short-circuit: the skipped arm costs nothing
    g = script("(and (lt n 0) (diverge))")
    assert g.call((5,), 4) == 0


def test_fuel_monotone_on_scripts():
    rng = random.Random(5)
    progs = [script(t) for t in (
        "(+ n 1)",
        "(if (ge t 40) (bor x 1) x)",
        "(mod (* n 7) 13)",
        "(or (eq n 3) (gt n 10))",
    )]
    for f in progs:
        for _ in range(200):
            args = (rng.randrange(100), rng.randrange(1 << 10))
            lo = rng.randrange(1, 12)
            a = f.call(args, lo)
            b = f.call(args, lo + rng.randrange(1, 50))
            if a is not None:
                assert a == b


def test_closure_and_table_kinds():
    c = closure(lambda n: n * n)
    assert c.call((6,), 1) == 36
    assert c.call((6,), 0) is None
    t = lookup_table({(2,): 9, 5: 1})
    assert t.call((2,), 1) == 9
    assert t.call((5,), 1) == 1
    assert t.call((3,), 99) is None
    bad = closure(lambda n: -1, name="neg")
    with pytest.raises(ProgramError):
        bad.call((0,), 10)
    with pytest.raises(ProgramError):
        FueledFunction("weird", None)


def test_universe_registry():
    u = ProgramUniverse()
    i = u.register(closure(lambda n: n, name="ident"))
    assert u.index_of("ident") == i
    assert len(u) == 1
    with pytest.raises(ProgramError):
        u.register(closure(lambda n: n, name="ident"))
    with pytest.raises(KeyError):
        u.index_of("missing")


# ---------------------------------------------------------------------------
# opponent runs
# ---------------------------------------------------------------------------

def _mk(g, h, r, universe=None, **kw):
    u = universe or ProgramUniverse()
    return PartialPSystem(u, u.register(g), u.register(h), u.register(r), **kw)


def test_pure_growth():
    th = _mk(closure(lambda n: n), closure(lambda t, x: x),
             closure(lambda x: x + 1))
    for s in range(1, 51):
        out = th.step(s)
        assert out == Progress(s, True)
    assert th.sigma == list(range(50))
    rep = th.stability_report(50, 10)
    assert rep.belief_estimate == frozenset(range(50))
    assert rep.loop_suspects == ()


def test_operator_stall_freezes_string():
    th = _mk(closure(lambda n: n), script("(diverge)"),
             closure(lambda x: x + 1))
    for s in range(1, 20):
        assert th.step(s) == Diverged("H")
    assert th.sigma == []
    assert th.stage == 19
    assert th.diverge_counts["H"] == 19


def test_enum_stall():
    th = _mk(script("(diverge)"), closure(lambda t, x: x),
             closure(lambda x: x + 1))
    for s in range(1, 10):
        assert th.step(s) == Diverged("g")
    assert th.sigma == []


def test_replacement_stall():
    # the operator marks any non-empty prefix, the replacement never answers
    th = _mk(closure(lambda n: n),
             closure(lambda t, x: x | 1 if x else 0),
             script("(diverge)"))
    assert th.step(1) == Progress(1, True)      # expansion while empty
    for s in range(2, 12):
        assert th.step(s) == Diverged("r")
    assert th.sigma == [0]


def test_marker_from_empty_prefix_is_invalid():
    th = _mk(closure(lambda n: n), closure(lambda t, x: 1),
             closure(lambda x: x + 1))
    out = th.step(1)
    assert out == Progress(0, False)
    assert th.frozen
    assert "empty prefix" in th.invalid_reason
    # stays frozen, stage keeps counting
    assert th.step(2) == Progress(0, False)
    assert th.stage == 2


def test_inclusion_violation_recorded_not_fatal():
    th = _mk(closure(lambda n: n), closure(lambda t, x: 0),
             closure(lambda x: x + 1))
    for s in range(1, 6):
        th.step(s)
    assert not th.frozen
    assert "include its argument" in th.invalid_reason
    assert len(th.sigma) == 5


# the two-threshold masked operator used across the diagonalizer tests:
# marks {a0,a1,a2,a3} from t=40 and {a0,a1,a2,a4} from t=60
def _masked(t, x):
    if t >= 40 and (x & 30) == 30:
        return x | 1
    if t >= 60 and (x & 46) == 46:
        return x | 1
    return x


def test_masked_operator_run_timeline():
    th = _mk(closure(lambda n: n), closure(_masked), closure(lambda x: x + 1))
    for s in range(1, 71):
        th.step(s)
        if s == 41:
            assert th.sigma == [0, 1, 2, 4]
        if s == 61:
            assert th.sigma == [0, 1, 2, 5]
        if s == 63:
            assert th.sigma == [0, 1, 2, 5, 5]
    assert th.sigma[:6] == [0, 1, 2, 5, 5, 5]
    # run further and estimate: the third and fourth axioms never settle back
    for s in range(71, 201):
        th.step(s)
    est = th.belief_estimate(200, 50)
    assert 3 not in est and 4 not in est
    assert {0, 1, 2, 5, 6}.issubset(est)


def test_monotone_shortcut_matches_full_scan():
    a = _mk(closure(lambda n: n), closure(_masked), closure(lambda x: x + 1),
            monotone_h=True)
    b = _mk(closure(lambda n: n), closure(_masked), closure(lambda x: x + 1),
            monotone_h=False)
    for s in range(1, 81):
        a.step(s)
        b.step(s)
        assert a.sigma == b.sigma
    assert a.stability_report(80, 20) == b.stability_report(80, 20)


# ---------------------------------------------------------------------------
# iterated replacement
# ---------------------------------------------------------------------------

def test_r_iterate_examples():
    th = _mk(closure(lambda n: n), closure(lambda t, x: x),
             closure(lambda x: x + 1))
    assert r_iterate(th, 5, frozenset(), 10) == (5, 0)
    assert r_iterate(th, 3, {3}, 10) == (4, 1)
    assert r_iterate(th, 3, {3, 4, 5}, 10) == (6, 3)
    assert not th.r_cycle_found


def test_r_iterate_cycle_is_flagged():
    th = _mk(closure(lambda n: n), closure(lambda t, x: x),
             closure(lambda x: {3: 4, 4: 3}.get(x, x + 1)))
    assert r_iterate(th, 3, {3, 4}, 10) is None
    assert th.r_cycle_found


def test_r_iterate_stall_is_quiet():
    th = _mk(closure(lambda n: n), closure(lambda t, x: x),
             script("(diverge)"))
    assert r_iterate(th, 3, {3}, 10) is None
    assert not th.r_cycle_found


# ---------------------------------------------------------------------------
# table-backed opponents against the run engine
# ---------------------------------------------------------------------------

def _marker_only(table):
    return RuleTable(rule(r.stage, r.premises, CE) for r in table)


def test_table_backed_matches_engine():
    for seed in range(12):
        rng = random.Random(seed)
        sys0 = random_qsystem(rng, max_rules=6, pool=9, max_stage=30)
        table = _marker_only(sys0.table)
        system = QSystem(table, sys0.replacement)
        th = p_system_from_table(table, sys0.replacement)
        eng = RunEngine(system)
        for s in range(1, 151):
            th.step(s)
            eng.step_once()
            assert th.sigma == eng.sigma, "diverged at stage %d seed %d" % (s, seed)
        mine = th.stability_report(150, 30)
        ref = estimate_beliefs(eng.trace(), 30)
        assert mine.belief_estimate == ref.belief_estimate
        assert mine.last_change == ref.last_change


def test_table_backed_requires_marker_only():
    from dialectic.consequence import BOT
    from dialectic.systemspec import VariantError
    bad = RuleTable([rule(0, {0}, BOT)])
    with pytest.raises(VariantError):
        p_system_from_table(bad, ReplacementMap())


# ---------------------------------------------------------------------------
# family files
# ---------------------------------------------------------------------------

def test_default_family_loads():
    universe, opponents = default_family()
    assert [o.name for o in opponents] == [
        "caseA", "caseB", "caseC", "tailfirst", "stuck-rho", "stuck-enum"]
    assert all(o.monotone_h for o in opponents)
    assert len(universe) == 10


def test_family_packed_index_form():
    text = "\n".join([
        "prog ident = n",
        "prog echo = x",
        "prog bump = (+ n 1)",
        # 75 = 3 * 25 names programs (0, 1, 2)
        "opponent packed : m=75",
        "opponent named : g=ident h=echo r=bump scan=full",
    ])
    _, opps = parse_family(text)
    assert opps[0].indices == (0, 1, 2)
    assert opps[1].indices == (0, 1, 2)
    assert opps[0].monotone_h and not opps[1].monotone_h


def test_family_parse_errors():
    cases = [
        ("frob x = 1", 1),
        ("prog p1 = (wat n)", 1),
        ("prog p = n\nopponent a : g=p h=p", 2),
        ("prog p = n\nopponent a : m=0", 2),
        ("prog p = n\nopponent a : m=6", 2),      # names program 1, undefined
        ("prog p = n\nopponent a : g=p h=p r=q", 2),
        ("prog p = n\nopponent a : m=1\nopponent a : m=1", 3),
    ]
    for text, line in cases:
        with pytest.raises(FamilyParseError) as err:
            parse_family(text)
        assert err.value.line_no == line
