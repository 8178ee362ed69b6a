import random

import pytest
from sympy.polys.domains import QQ

from jonesexpand.algebra import LPoly, apoly_ring
from jonesexpand.errors import OperatorRequiredError, ParseError, SequenceTooShortError, ValidationError
from jonesexpand.jones_lab import jones_41_sequence
from jonesexpand.operators import (
    QDiffOperator,
    apply_operator,
    builtin_figure_eight,
    builtin_operator,
    hbar_expand,
    load_operator,
    normalize_operator,
    parse_operator,
    serialize_operator,
    specialize_q1,
    unknot_operator,
)

UNKNOT_TEXT = """# E - 1
knot unknot
vars q Q E
term -1 0 0 0
term 1 0 0 1
"""


def test_parse_operator_file():
    A = parse_operator(UNKNOT_TEXT)
    assert A.name == "unknot"
    assert A.degree == 1
    assert A == unknot_operator()


def test_serialize_then_parse_keeps_builtin_operator():
    A = builtin_figure_eight()
    assert parse_operator(serialize_operator(A)) == A


@pytest.mark.parametrize(
    "text, line",
    [
        ("knot x\nterm 1 0 0\n", 2),
        ("term 1 0 0 1\nterm 1 a 0 0\n", 2),
        ("term 1 0 0 -1\n", 1),
        ("term 1 0 0 1\nterm 2 0 0 1\n", 2),
        ("vars q Q E\nshift 1\n", 2),
    ],
)
def test_parse_errors_carry_line_numbers(text, line):
    with pytest.raises(ParseError) as e:
        parse_operator(text)
    assert e.value.line == line
    assert e.value.details["line"] == line


def test_parse_rejects_empty_operator():
    with pytest.raises(ParseError):
        parse_operator("# nothing here\nterm 0 1 1 1\n")


def test_load_operator_missing_file(tmp_path):
    with pytest.raises(OperatorRequiredError):
        load_operator(tmp_path / "absent.op")


def test_load_operator_from_file(tmp_path):
    path = tmp_path / "unknot.op"
    path.write_text(UNKNOT_TEXT, encoding="utf-8")
    assert load_operator(path) == unknot_operator()


def test_normalize_removes_units():
    # -3 q Q (E^2 - E)
    A = QDiffOperator.from_terms({(1, 1, 2): -3, (1, 1, 1): 3})
    normalized = normalize_operator(A)
    assert normalized == unknot_operator()


def test_normalize_is_idempotent():
    A = builtin_figure_eight()
    assert normalize_operator(A) == A


def test_normalize_zero_operator():
    with pytest.raises(ValidationError):
        normalize_operator(QDiffOperator.from_terms({}))


def test_builtin_figure_eight_shape():
    A = builtin_figure_eight()
    assert A.degree == 3
    assert A.low_degree == 0
    assert min(a for (a, _, _), _ in A.terms) == 0
    assert min(b for (_, b, _), _ in A.terms) == 0


def test_builtin_operator_lookup():
    assert builtin_operator("unknot") == unknot_operator()
    with pytest.raises(ValidationError):
        builtin_operator("trefoil")


def test_figure_eight_annihilates_multisum():
    A = builtin_figure_eight()
    values = jones_41_sequence(20)
    for N0 in range(1, 18):
        assert apply_operator(A, values, N0).is_zero(), f"nonzero residual at N0 = {N0}"


def test_apply_operator_accepts_callables_and_mappings():
    A = unknot_operator()
    one = LPoly.constant("q", 1)
    assert apply_operator(A, lambda N: one, 5).is_zero()
    assert apply_operator(A, {3: one, 4: one}, 3).is_zero()


def test_apply_operator_short_sequence():
    with pytest.raises(SequenceTooShortError):
        apply_operator(unknot_operator(), [LPoly.constant("q", 1)], 1)


def test_coefficient_at_substitutes_q_power():
    A = QDiffOperator.from_terms({(1, 2, 0): 1, (0, 0, 1): -1})
    assert A.coefficient_at(0, 3) == LPoly.monomial("q", 7)
    assert A.coefficient_at(1, 3) == LPoly.constant("q", -1)


def test_specialize_q1():
    l, m = apoly_ring().gens
    assert specialize_q1(unknot_operator()) == l - 1
    # Q^-1 E - 1 specializes to m^-2 l - 1, cleared to l - m^2 up to sign
    A = QDiffOperator.from_terms({(0, -1, 1): 1, (0, 0, 0): -1})
    assert specialize_q1(A) == l - m**2


def test_hbar_expansion_coefficients():
    # q Q with q = e^{2 hbar}: sum_p (2)^p / p! hbar^p * m^2
    A = QDiffOperator.from_terms({(1, 1, 0): 1, (0, 0, 1): -1})
    table = hbar_expand(A, 3)
    assert table.a(0, 0) == LPoly.monomial("m", 2)
    assert table.a(0, 2) == LPoly.monomial("m", 2, QQ(2))
    assert table.a(0, 3) == LPoly.monomial("m", 2, QQ(4, 3))
    assert table.a(1, 0) == LPoly.constant("m", -1)
    assert table.a(1, 1).is_zero()
    with pytest.raises(ValidationError):
        table.a(0, 4)


@pytest.mark.parametrize("p, expected", [(0, 1), (1, 4), (2, 8)])
def test_hbar_expansion_of_q_squared(p, expected):
    # q^2 Q: (4 hbar)^p / p! * m^2
    A = QDiffOperator.from_terms({(2, 1, 0): 1, (0, 0, 1): -1})
    assert hbar_expand(A, 2).a(0, p) == LPoly.monomial("m", 2, QQ(expected))


def test_hbar_row_zero_is_q1_specialization():
    A = builtin_figure_eight()

    # Call the function
    row = hbar_expand(A, 0).row(0)

    # Verify sum_j a_{j,0}(m) l^j is the q -> 1 specialization
    from_row = apoly_ring().from_dict(
        {(j, e): int(c.numerator) for j, a_j in enumerate(row) for e, c in a_j.items()}
    )
    assert specialize_q1(A) in (from_row, -from_row)


def test_apply_operator_is_linear():
    rng = random.Random(7)
    A = builtin_figure_eight()
    first = [LPoly.from_dict("q", {e: rng.randint(-3, 3) for e in range(-2, 3)}) for _ in range(6)]
    second = [LPoly.from_dict("q", {e: rng.randint(-3, 3) for e in range(-2, 3)}) for _ in range(6)]
    combined = [x + y * 2 for x, y in zip(first, second)]
    for N0 in (1, 2, 3):
        expected = apply_operator(A, first, N0) + apply_operator(A, second, N0) * 2
        assert apply_operator(A, combined, N0) == expected


def test_perturbed_sequence_is_not_annihilated():
    A = builtin_figure_eight()
    values = jones_41_sequence(8)
    perturbed = list(values)
    perturbed[1] = perturbed[1] + 1

    # Call the function
    residuals = [apply_operator(A, perturbed, N0) for N0 in (1, 2, 3, 4)]

    # Verify only windows that contain J_2 are disturbed
    assert any(not r.is_zero() for r in residuals[:2])
    assert all(r.is_zero() for r in residuals[2:])


def test_normalize_removes_q_and_Q_units_and_sign():
    A = builtin_figure_eight()
    shifted = QDiffOperator.from_terms({(a + 3, b - 2, j): c for (a, b, j), c in A.terms})
    negated = QDiffOperator.from_terms({key: -c for key, c in A.terms})
    assert normalize_operator(shifted) == normalize_operator(A)
    assert normalize_operator(negated) == normalize_operator(A)
