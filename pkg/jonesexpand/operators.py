"""
q-Operators Module

Noncommutative A-polynomials sum_j a_j(q, Q) E^j with E shifting N and Q
multiplying by q^N (so EQ = qQE). Operators are stored left-normalized:
every q and Q power sits inside the coefficients, E on the right.

The module parses and serializes the line-oriented operator file format,
normalizes operators up to units, applies them to colored Jones sequences,
specializes them at q = 1 and expands them in hbar (q = e^{2 hbar}, Q = m^2).
"""

import logging
from dataclasses import dataclass, field
from math import factorial, gcd
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from mpmath import mp
from sympy import Add, expand, symbols
from sympy.polys.domains import QQ
from sympy.polys.rings import PolyElement

from jonesexpand.algebra import LPoly, apoly_ring, fix_sign
from jonesexpand.config import LOG_FORMAT, LOG_LEVEL
from jonesexpand.errors import OperatorRequiredError, ParseError, SequenceTooShortError, ValidationError

logging.basicConfig(level=LOG_LEVEL, format=LOG_FORMAT)
logger = logging.getLogger(__name__)

# (a, b, j) -> c for the monomial c * q^a * Q^b * E^j
TermKey = Tuple[int, int, int]
JonesValues = Union[Mapping[int, LPoly], Callable[[int], LPoly], Sequence[LPoly]]


@dataclass(frozen=True)
class QDiffOperator:
    """Finite sum of integer monomials c * q^a * Q^b * E^j."""

    terms: Tuple[Tuple[TermKey, int], ...]
    name: Optional[str] = field(default=None, compare=False)

    @classmethod
    def from_terms(cls, terms: Mapping[TermKey, int], name: Optional[str] = None) -> "QDiffOperator":
        cleaned = {k: int(c) for k, c in terms.items() if c}
        return cls(tuple(sorted(cleaned.items(), key=lambda t: (t[0][2], t[0][1], t[0][0]))), name)

    def as_dict(self) -> Dict[TermKey, int]:
        return dict(self.terms)

    def is_zero(self) -> bool:
        return not self.terms

    @property
    def degree(self) -> int:
        return max((j for (_, _, j), _ in self.terms), default=0)

    @property
    def low_degree(self) -> int:
        return min((j for (_, _, j), _ in self.terms), default=0)

    def coefficient(self, j: int) -> Dict[Tuple[int, int], int]:
        """a_j as {(a, b): c}."""
        return {(a, b): c for (a, b, jj), c in self.terms if jj == j}

    def coefficient_at(self, j: int, N: int) -> LPoly:
        """a_j(q, q^N) as a Laurent polynomial in q."""
        coeffs: Dict[int, int] = {}
        for (a, b), c in self.coefficient(j).items():
            e = a + b * N
            coeffs[e] = coeffs.get(e, 0) + c
        return LPoly.from_dict("q", coeffs)

    def coefficient_value(self, j: int, q, N: int):
        """a_j(q, q^N) for a numeric q (mpmath)."""
        total = mp.mpf(0)
        for (a, b), c in self.coefficient(j).items():
            total += c * mp.power(q, a + b * N)
        return total

    def __str__(self):
        return serialize_operator(self)


def parse_operator(text: str) -> QDiffOperator:
    """
    Parse operator-file content.

    Args:
        text: Lines "knot <name>", "vars q Q E" (both optional) and
            "term <c> <a> <b> <j>"; '#' starts a comment.

    Returns:
        QDiffOperator: the parsed (not normalized) operator
    """
    name = None
    terms: Dict[TermKey, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        keyword = fields[0]
        if keyword == "knot":
            if len(fields) != 2:
                raise ParseError("expected 'knot <name>'", lineno)
            name = fields[1]
        elif keyword == "vars":
            if fields[1:] != ["q", "Q", "E"]:
                raise ParseError(f"expected 'vars q Q E', got {line!r}", lineno)
        elif keyword == "term":
            if len(fields) != 5:
                raise ParseError(f"malformed term line {line!r}", lineno)
            try:
                c, a, b, j = (int(x) for x in fields[1:])
            except ValueError:
                raise ParseError(f"non-integer field in {line!r}", lineno)
            if j < 0:
                raise ParseError(f"negative E-power {j}", lineno)
            if (a, b, j) in terms:
                raise ParseError(f"duplicate term q^{a} Q^{b} E^{j}", lineno)
            terms[(a, b, j)] = c
        else:
            raise ParseError(f"unknown keyword {keyword!r}", lineno)

    if not any(terms.values()):
        raise ParseError("operator has no nonzero terms")
    return QDiffOperator.from_terms(terms, name)


def serialize_operator(A: QDiffOperator) -> str:
    lines = []
    if A.name:
        lines.append(f"knot {A.name}")
    lines.append("vars q Q E")
    lines += [f"term {c} {a} {b} {j}" for (a, b, j), c in A.terms]
    return "\n".join(lines) + "\n"


def load_operator(path: Union[str, Path]) -> QDiffOperator:
    path = Path(path)
    if not path.is_file():
        raise OperatorRequiredError(f"operator file not found: {path}", {"path": str(path)})
    logger.info(f"Loading operator from {path}")
    return parse_operator(path.read_text(encoding="utf-8"))


def normalize_operator(A: QDiffOperator) -> QDiffOperator:
    """
    Normal form up to units: content 1, lowest E-power 0, lowest q- and
    Q-powers 0, and the term with the largest (j, b, a) positive.

    Left multiplication by E^-k maps q^a Q^b E^j to q^(a - k b) Q^b E^(j - k).
    """
    if A.is_zero():
        raise ValidationError("cannot normalize the zero operator")
    terms = A.as_dict()

    content = 0
    for c in terms.values():
        content = gcd(content, abs(c))

    k = A.low_degree
    shifted = {(a - k * b, b, j - k): c // content for (a, b, j), c in terms.items()}
    a_min = min(a for a, _, _ in shifted)
    b_min = min(b for _, b, _ in shifted)
    shifted = {(a - a_min, b - b_min, j): c for (a, b, j), c in shifted.items()}

    lead = max(shifted, key=lambda key: (key[2], key[1], key[0]))
    if shifted[lead] < 0:
        shifted = {key: -c for key, c in shifted.items()}
    return QDiffOperator.from_terms(shifted, A.name)


def _sequence_value(J: JonesValues, N: int) -> LPoly:
    try:
        if callable(J):
            value = J(N)
        elif isinstance(J, Mapping):
            value = J[N]
        else:
            if N < 1:
                raise IndexError(N)
            value = J[N - 1]
    except (KeyError, IndexError):
        raise SequenceTooShortError(f"sequence has no value at N = {N}", {"N": N})
    if value is None:
        raise SequenceTooShortError(f"sequence has no value at N = {N}", {"N": N})
    return value


def apply_operator(A: QDiffOperator, J: JonesValues, N0: int) -> LPoly:
    """
    sum_j a_j(q, q^N0) * J(N0 + j).

    J may be a mapping N -> LPoly, a callable, or a list holding J_1, J_2, ...
    """
    total = LPoly.constant("q", 0)
    for j in range(A.degree + 1):
        coeff = A.coefficient_at(j, N0)
        if coeff.is_zero():
            continue
        total = total + coeff * _sequence_value(J, N0 + j)
    return total


def specialize_q1(A: QDiffOperator) -> PolyElement:
    """
    q -> 1, Q -> m^2, E -> l.

    Only negative exponents are cleared and the sign fixed; full unit
    normalization is algebra.unit_normalize.
    """
    coeffs: Dict[Tuple[int, int], int] = {}
    for (a, b, j), c in A.terms:
        key = (j, 2 * b)
        coeffs[key] = coeffs.get(key, 0) + c
    coeffs = {k: c for k, c in coeffs.items() if c}
    if not coeffs:
        return apoly_ring().zero
    m_low = min(0, min(k[1] for k in coeffs))
    poly = apoly_ring().from_dict({(i, e - m_low): c for (i, e), c in coeffs.items()})
    return fix_sign(poly)


@dataclass
class HbarTable:
    """a_{j,p}(m) with a_j(e^{2 hbar}, m^2) = sum_p a_{j,p}(m) hbar^p."""

    degree: int
    p_max: int
    entries: Dict[int, List[LPoly]] = field(default_factory=dict)

    def a(self, j: int, p: int) -> LPoly:
        if p > self.p_max:
            raise ValidationError(f"hbar table holds p <= {self.p_max}, asked for {p}")
        return self.entries[j][p]

    def row(self, p: int) -> List[LPoly]:
        return [self.a(j, p) for j in range(self.degree + 1)]


def hbar_expand(A: QDiffOperator, p_max: int) -> HbarTable:
    """
    Expand each coefficient in hbar.

    Args:
        A: operator (any normalization)
        p_max: highest hbar power kept

    Returns:
        HbarTable: a_{j,p}(m) = sum c * (2a)^p / p! * m^{2b}
    """
    if p_max < 0:
        raise ValidationError("p_max must be >= 0")
    table = HbarTable(degree=A.degree, p_max=p_max)
    for j in range(A.degree + 1):
        coeff = A.coefficient(j)
        row = []
        for p in range(p_max + 1):
            values: Dict[int, object] = {}
            for (a, b), c in coeff.items():
                e = 2 * b
                values[e] = values.get(e, QQ.zero) + QQ(c * (2 * a) ** p, factorial(p))
            row.append(LPoly.from_dict("m", values))
        table.entries[j] = row
    return table


def operator_from_expressions(coefficients: Iterable, name: Optional[str] = None) -> QDiffOperator:
    """Build an operator from sympy expressions a_0, a_1, ... in the symbols q and Q."""
    q, Q = symbols("q Q")
    terms: Dict[TermKey, int] = {}
    for j, expr in enumerate(coefficients):
        for term in Add.make_args(expand(expr)):
            c, mono = term.as_coeff_Mul()
            powers = mono.as_powers_dict()
            if not c.is_Integer or set(mono.free_symbols) - {q, Q}:
                raise ValidationError(f"coefficient a_{j} is not an integer Laurent polynomial in q, Q")
            key = (int(powers.get(q, 0)), int(powers.get(Q, 0)), j)
            terms[key] = terms.get(key, 0) + int(c)
    return QDiffOperator.from_terms(terms, name)


def figure_eight_raw() -> QDiffOperator:
    """The annihilator of J_N(4_1; q) as obtained by creative telescoping, before normalization."""
    q, Q = symbols("q Q")
    a0 = q**5 * Q * (q - q**3 * Q) * (q**3 - q**3 * Q) * (q + q**3 * Q) * (q - q**6 * Q**2) * (q**3 - q**6 * Q**2)
    a1 = (
        -(1 / (q**5 * Q))
        * (q - q**3 * Q) * (q**2 - q**3 * Q) * (q**2 + q**3 * Q) * (q - q**6 * Q**2) * (q**3 - q**6 * Q**2)
        * (
            q**8 - 2 * q**9 * Q + q**10 * Q - q**9 * Q**2 + q**10 * Q**2 - q**11 * Q**2
            + q**10 * Q**3 - 2 * q**11 * Q**3 + q**12 * Q**4
        )
    )
    a2 = (
        (1 / (q**4 * Q))
        * (q - q**3 * Q) ** 2 * (q + q**3 * Q) * (q**3 - q**6 * Q**2) * (q**5 - q**6 * Q**2)
        * (
            q**4 + q**5 * Q - 2 * q**6 * Q - q**7 * Q**2 + q**8 * Q**2 - q**9 * Q**2
            - 2 * q**10 * Q**3 + q**11 * Q**3 + q**12 * Q**4
        )
    )
    a3 = q**4 * Q * (q - q**3 * Q) * (-1 + q**3 * Q) * (q**2 + q**3 * Q) * (q**3 - q**6 * Q**2) * (q**5 - q**6 * Q**2)
    return operator_from_expressions([a0, a1, a2, a3], "4_1")


def builtin_figure_eight() -> QDiffOperator:
    return normalize_operator(figure_eight_raw())


def unknot_operator() -> QDiffOperator:
    """E - 1, annihilating J_N(unknot) = 1."""
    return QDiffOperator.from_terms({(0, 0, 1): 1, (0, 0, 0): -1}, "unknot")


BUILTIN_OPERATORS = {
    "figure_eight": builtin_figure_eight,
    "unknot": unknot_operator,
}


def builtin_operator(key: str) -> QDiffOperator:
    if key not in BUILTIN_OPERATORS:
        raise ValidationError(f"unknown builtin operator {key!r}", {"available": sorted(BUILTIN_OPERATORS)})
    return BUILTIN_OPERATORS[key]()
