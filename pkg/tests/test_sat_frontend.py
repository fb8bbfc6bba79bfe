import itertools
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from gsqc.sat_frontend import (
    ExactCoverInstance,
    InstanceError,
    SoundnessError,
    brute_force,
    choose_lambda,
    compare_readout,
    load_instance,
    parse_instance,
    readout_probability,
)
from gsqc.solver import FinalRowReadout

TWO_CLAUSE = "4 2\n1 2 3\n2 3 4\n"


def _enumerate(n, clauses):
    """Plain itertools oracle, independent of the vectorized counter."""
    out = []
    for bits in itertools.product((0, 1), repeat=n):
        if all(sum(bits[v - 1] for v in c) == 1 for c in clauses):
            out.append("".join(map(str, bits)))
    return out


def test_parse_and_round_trip(tmp_path):
    inst = parse_instance("# comment\n4 3\n1 2 3\nsum1 1 4\neq1 2  # trailing\n")
    assert inst.n_bits == 4 and inst.n_clauses == 3
    assert [c.kind for c in inst.clauses] == ["exact_cover", "sum1", "eq1"]
    assert parse_instance(inst.to_text()) == inst
    p = tmp_path / "i.txt"
    p.write_text(TWO_CLAUSE)
    assert load_instance(p).n_clauses == 2
    assert inst.alpha == pytest.approx(0.75)


@pytest.mark.parametrize(
    "text",
    ["", "4\n", "4 2\n1 2 3\n", "3 1\n1 2\n", "3 1\n1 1 2\n", "3 1\n1 2 9\n", "3 1\na b c\n", "3 1\neq0 1 2\n"],
)
def test_parse_errors(text):
    with pytest.raises(InstanceError):
        parse_instance(text)


def test_two_clause_ledger():
    led = brute_force(parse_instance(TWO_CLAUSE))
    assert led.counts == [16, 6, 3]
    assert sorted(led.final_set) == ["0010", "0100", "1001"]
    assert sorted(led.final_set) == _enumerate(4, [(1, 2, 3), (2, 3, 4)])
    assert led.satisfiable
    assert led.ratios == pytest.approx([16 / 6, 2.0])
    assert led.to_text().splitlines()[0] == "j\tclause\tS_j\tratio"


@given(st.integers(3, 12), st.data())
def test_single_clause_ratio(n, data):
    triple = data.draw(st.lists(st.integers(1, n), min_size=3, max_size=3, unique=True))
    led = brute_force(ExactCoverInstance.exact_cover(n, [triple]))
    assert led.counts == [2**n, 3 * 2 ** (n - 3)]
    assert led.ratios[0] == pytest.approx(8 / 3)


@given(st.lists(st.lists(st.integers(1, 6), min_size=3, max_size=3, unique=True), min_size=1, max_size=4), st.randoms())
def test_final_set_order_invariant(triples, rnd):
    inst = ExactCoverInstance.exact_cover(6, triples)
    order = list(range(len(triples)))
    rnd.shuffle(order)
    a, b = brute_force(inst), brute_force(inst, order=order)
    assert a.final_set == b.final_set == _enumerate(6, triples)
    assert a.counts[-1] == b.counts[-1]
    assert all(x >= y for x, y in zip(b.counts, b.counts[1:]))


def test_enumeration_guard_and_bad_order():
    with pytest.raises(InstanceError):
        brute_force(ExactCoverInstance(30, ()))
    with pytest.raises(InstanceError):
        brute_force(parse_instance(TWO_CLAUSE), order=[0, 0])


def _readout(dist, p=0.5):
    ids = [f"z{k}" for k in range(1, len(next(iter(dist))) + 1)]
    return FinalRowReadout(ids, p, dist)


def test_compare_readout():
    led = brute_force(parse_instance(TWO_CLAUSE))
    good = _readout({"0010": 1 / 3, "0100": 1 / 3, "1001": 1 / 3})
    d = compare_readout(good, led)
    assert d.ok and d.tv_distance < 1e-12 and not d.missing
    bad = _readout({"0010": 0.5, "1111": 0.5})
    d = compare_readout(bad, led)
    assert not d.ok and "1111" in d.outside_support
    assert d.missing == ["0100", "1001"]
    assert d.tv_distance == pytest.approx(2 / 3)


def test_compare_readout_unsatisfiable():
    led = brute_force(parse_instance("1 2\neq0 1\neq1 1\n"))
    assert not led.satisfiable
    assert compare_readout(_readout({"0": 1.0}, p=0.0), led).no_readout
    with pytest.raises(SoundnessError):
        compare_readout(_readout({"0": 1.0}), led)


def test_choose_lambda():
    # L = 1 at P = 1/e gives lambda^2 = C
    assert choose_lambda(1) ** 2 == pytest.approx(8.0)
    with pytest.raises(ValueError):
        choose_lambda(0)
    with pytest.raises(ValueError):
        choose_lambda(3, target_p=1.0)
    with pytest.raises(ValueError):
        choose_lambda(10, target_p=1 - 1e-15)


@given(st.integers(1, 10**4), st.floats(0.01, 0.9))
def test_choose_lambda_hits_target(L, p):
    lam = choose_lambda(L, target_p=p)
    assert math.isclose(math.exp(-8.0 * L / lam**2), p, rel_tol=1e-9)
    if lam**2 > 8.0:
        assert 0 <= readout_probability(lam, L) <= p


def test_lambda_squared_scales_with_problem_size():
    # lambda^2 = D N for L proportional to N
    for n in (10, 100, 1000):
        assert choose_lambda(3 * n) ** 2 / n == pytest.approx(24.0)
