"""
Exact Algebra Module

Exact arithmetic kernel for the expansion engine: Laurent polynomials in one
variable, rational functions in m over Q (optionally Q(i)), the quadratic
extension Q(m)[s]/(s^2 - R(m)), u-differentiation (d/du = m d/dm since
m = e^u) and u-integration with logarithm recognition.

Polynomial storage and gcd/cancellation are delegated to sympy's sparse
polynomial rings and fraction fields; numeric evaluation goes through mpmath.
"""

import logging
from functools import lru_cache
from math import gcd, lcm
from typing import Dict, Iterable, List, Optional, Tuple, Union

from mpmath import mp
from sympy import Add, Basic, Dummy, Poly, Rational, Symbol, expand, factor_list, sympify
from sympy.integrals.rationaltools import ratint_logpart, ratint_ratpart
from sympy.polys.domains import QQ, QQ_I, ZZ
from sympy.polys.fields import FracElement, field
from sympy.polys.polyerrors import CoercionFailed
from sympy.polys.rings import PolyElement, ring

from jonesexpand.config import LOG_FORMAT, LOG_LEVEL
from jonesexpand.errors import (
    MismatchedRadicandError,
    NonElementaryLogError,
    ParseError,
    ValidationError,
)

logging.basicConfig(level=LOG_LEVEL, format=LOG_FORMAT)
logger = logging.getLogger(__name__)

VARIABLES = ("m", "q", "t")


@lru_cache(maxsize=None)
def poly_ring(var: str, domain=QQ):
    """Univariate sparse polynomial ring used as LPoly storage."""
    return ring(var, domain)[0]


@lru_cache(maxsize=None)
def rational_field(var: str = "m", domain=QQ):
    """Univariate rational function field used as RatFunc storage."""
    return field(var, domain)[0]


def is_scalar(value) -> bool:
    """True for exact scalars accepted by the field types (ints, Q, Q(i))."""
    return isinstance(value, int) or QQ.of_type(value) or QQ_I.of_type(value)


def to_mp(c):
    """Convert an exact coefficient (int, Q, Q(i)) to an mpmath number."""
    if QQ_I.of_type(c):
        return mp.mpc(to_mp(c.x), to_mp(c.y))
    if isinstance(c, int):
        return mp.mpf(c)
    return mp.mpf(int(c.numerator)) / int(c.denominator)


def format_coeff(c) -> str:
    if QQ_I.of_type(c):
        if not c.y:
            return format_coeff(c.x)
        im = "I" if c.y == 1 else "-I" if c.y == -1 else f"{format_coeff(c.y)}*I"
        if not c.x:
            return im
        sign = "-" if im.startswith("-") else "+"
        return f"({format_coeff(c.x)} {sign} {im.lstrip('-')})"
    if isinstance(c, int):
        return str(c)
    num, den = int(c.numerator), int(c.denominator)
    return str(num) if den == 1 else f"{num}/{den}"


def format_terms(terms: Iterable[Tuple[str, object]]) -> str:
    """Join (monomial, coefficient) pairs as 'c*mono + ...' with signs folded in."""
    parts = []
    for mono, c in terms:
        text = format_coeff(c)
        if mono:
            if text == "1":
                text = mono
            elif text == "-1":
                text = "-" + mono
            else:
                text = f"{text}*{mono}"
        parts.append(text)
    if not parts:
        return "0"
    out = parts[0]
    for text in parts[1:]:
        out += f" - {text[1:]}" if text.startswith("-") else f" + {text}"
    return out


def _monomial(var: str, e: int) -> str:
    if e == 0:
        return ""
    return var if e == 1 else f"{var}^{e}"


class LPoly:
    """
    Laurent polynomial var^shift * poly(var) with exact coefficients.

    ``poly`` lives in a sympy ring and is kept with a nonzero constant term,
    so equal Laurent polynomials have equal (shift, poly) pairs.
    """

    __slots__ = ("var", "shift", "poly")

    def __init__(self, var: str, poly: PolyElement, shift: int = 0):
        if var not in VARIABLES:
            raise ValidationError(f"unknown variable tag: {var}")
        if not poly:
            shift = 0
        else:
            low = min(monom[0] for monom in poly.keys())
            if low:
                poly = poly.ring.from_dict({(e - low,): c for (e,), c in poly.items()})
                shift += low
        self.var = var
        self.shift = shift
        self.poly = poly

    @classmethod
    def from_dict(cls, var: str, coeffs: Dict[int, object], domain=QQ) -> "LPoly":
        R = poly_ring(var, domain)
        if not coeffs:
            return cls(var, R.zero)
        low = min(coeffs)
        poly = R.from_dict({(e - low,): domain.convert(c) for e, c in coeffs.items() if c})
        return cls(var, poly, low)

    @classmethod
    def constant(cls, var: str, c, domain=QQ) -> "LPoly":
        return cls.from_dict(var, {0: c}, domain)

    @classmethod
    def monomial(cls, var: str, e: int, c=1, domain=QQ) -> "LPoly":
        return cls.from_dict(var, {e: c}, domain)

    @classmethod
    def parse(cls, text: str, var: str) -> "LPoly":
        """Parse text such as 't^-1 + t - 3' into a Laurent polynomial over Q."""
        sym = Symbol(var)
        try:
            expr = expand(sympify(str(text).replace("^", "**"), locals={var: sym}))
        except Exception as e:
            raise ParseError(f"cannot parse Laurent polynomial {text!r}: {e}")
        coeffs: Dict[int, object] = {}
        for term in Add.make_args(expr):
            c, e = term.as_coeff_exponent(sym)
            if c.free_symbols or not c.is_Rational or not e.is_Integer:
                raise ParseError(f"not a Laurent polynomial in {var}: {text!r}")
            coeffs[int(e)] = coeffs.get(int(e), QQ.zero) + QQ(int(c.p), int(c.q))
        return cls.from_dict(var, coeffs)

    @property
    def domain(self):
        return self.poly.ring.domain

    def items(self) -> List[Tuple[int, object]]:
        """(exponent, coefficient) pairs in ascending exponent order."""
        return sorted(((e + self.shift, c) for (e,), c in self.poly.items()), key=lambda t: t[0])

    def to_dict(self) -> Dict[int, object]:
        return dict(self.items())

    def coeff(self, e: int):
        return self.poly.get((e - self.shift,), self.domain.zero)

    def is_zero(self) -> bool:
        return not self.poly

    def low(self) -> int:
        return self.shift

    def high(self) -> int:
        return self.shift + (self.poly.degree() if self.poly else 0)

    def _check(self, other: "LPoly") -> None:
        if self.var != other.var:
            raise ValidationError(f"variable mismatch: {self.var} vs {other.var}")

    def _aligned(self, other: "LPoly"):
        low = min(self.shift, other.shift)
        x = self.poly.ring.gens[0]
        return low, self.poly * x ** (self.shift - low), other.poly * x ** (other.shift - low)

    def __add__(self, other):
        if is_scalar(other):
            other = LPoly.constant(self.var, other, self.domain)
        if not isinstance(other, LPoly):
            return NotImplemented
        self._check(other)
        low, p, q = self._aligned(other)
        return LPoly(self.var, p + q, low)

    __radd__ = __add__

    def __neg__(self):
        return LPoly(self.var, -self.poly, self.shift)

    def __sub__(self, other):
        if is_scalar(other):
            other = LPoly.constant(self.var, other, self.domain)
        if not isinstance(other, LPoly):
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if is_scalar(other):
            return LPoly(self.var, self.poly * other, self.shift)
        if not isinstance(other, LPoly):
            return NotImplemented
        self._check(other)
        return LPoly(self.var, self.poly * other.poly, self.shift + other.shift)

    __rmul__ = __mul__

    def __pow__(self, n: int):
        if n < 0:
            if len(self.poly) == 1 and self.poly.get((0,)):
                c = self.poly[(0,)]
                return LPoly(self.var, self.poly.ring.ground_new(c ** n), self.shift * n)
            raise ValidationError("negative power of a non-monomial Laurent polynomial")
        return LPoly(self.var, self.poly ** n, self.shift * n)

    def __eq__(self, other):
        if is_scalar(other):
            other = LPoly.constant(self.var, other, self.domain)
        if not isinstance(other, LPoly):
            return NotImplemented
        return self.var == other.var and self.shift == other.shift and self.poly == other.poly

    def __hash__(self):
        return hash((self.var, self.shift, tuple(self.items())))

    def __repr__(self):
        return f"LPoly({self.var}: {self})"

    def __str__(self):
        return format_terms((_monomial(self.var, e), c) for e, c in self.items())

    def divmod_exact(self, other: "LPoly") -> Tuple["LPoly", "LPoly"]:
        """Division in the Laurent ring; the remainder is zero iff other divides self."""
        self._check(other)
        if other.is_zero():
            raise ZeroDivisionError("Laurent polynomial division by zero")
        q, r = self.poly.div(other.poly)
        return LPoly(self.var, q, self.shift - other.shift), LPoly(self.var, r, self.shift)

    def derive(self) -> "LPoly":
        """var * d/dvar, i.e. d/du when var = e^u."""
        return LPoly.from_dict(self.var, {e: c * e for e, c in self.items()}, self.domain)

    def scale_exponents(self, k: int, var: Optional[str] = None) -> "LPoly":
        """Substitute var -> new_var^k (e.g. t -> m^2)."""
        return LPoly.from_dict(var or self.var, {e * k: c for e, c in self.items()}, self.domain)

    def halve_exponents(self, var: str) -> "LPoly":
        """Inverse of scale_exponents(2): requires every exponent even."""
        if any(e % 2 for e, _ in self.items()):
            raise ValidationError(f"{self} has odd exponents")
        return LPoly.from_dict(var, {e // 2: c for e, c in self.items()}, self.domain)

    def reflect(self) -> "LPoly":
        """var -> 1/var."""
        return LPoly.from_dict(self.var, {-e: c for e, c in self.items()}, self.domain)

    def evaluate(self, z):
        """Numeric value at z with mpmath arithmetic."""
        if not self.poly:
            return mp.mpf(0)
        dense = [to_mp(self.coeff(e)) for e in range(self.high(), self.low() - 1, -1)]
        return mp.polyval(dense, z) * mp.power(z, self.shift)

    def evaluate_at_one(self):
        """Exact value at var = 1."""
        return sum(self.poly.values(), self.domain.zero)


def exact_scalar(value):
    """Exact scalar for ints, Q and Q(i) elements, or sympy numbers such as I; None otherwise."""
    if is_scalar(value):
        return value
    if isinstance(value, Basic) and value.is_number:
        for domain in (QQ, QQ_I):
            try:
                return domain.from_sympy(value)
            except CoercionFailed:
                continue
    return None


def _to_domain(frac: FracElement, domain) -> FracElement:
    source = frac.field.domain
    if source == domain:
        return frac
    F = rational_field("m", domain)

    def lift(p: PolyElement):
        return F.ring.from_dict({k: domain.convert(c, source) for k, c in p.items()})

    return F.new(lift(frac.numer), lift(frac.denom))


def _coerce_pair(left: FracElement, value) -> Optional[Tuple[FracElement, FracElement]]:
    """Both operands in one field; Q is promoted to Q(i) when they mix."""
    if isinstance(value, RatFunc):
        right = value.value
    elif isinstance(value, LPoly):
        right = RatFunc.from_lpoly(value).value
    else:
        c = exact_scalar(value)
        if c is None:
            return None
        right = rational_field("m", QQ_I if QQ_I.of_type(c) else left.field.domain).ground_new(c)
    domain = QQ_I if QQ_I in (left.field.domain, right.field.domain) else QQ
    return _to_domain(left, domain), _to_domain(right, domain)


def _primitive_parts(num: PolyElement, den: PolyElement) -> Tuple[PolyElement, PolyElement]:
    """
    Scale num/den by a common factor so den has a positive integer leading
    coefficient and all coefficient components are integers with gcd 1.
    """
    domain = num.ring.domain
    lc = den.LC
    num, den = num.quo_ground(lc), den.quo_ground(lc)
    parts = [
        x
        for p in (num, den)
        for c in p.values()
        for x in ((c.x, c.y) if domain == QQ_I else (c,))
    ]
    scale = lcm(*(int(x.denominator) for x in parts))
    content = gcd(*(int(x.numerator) * (scale // int(x.denominator)) for x in parts))
    factor = domain.from_sympy(Rational(scale, content))
    return num.mul_ground(factor), den.mul_ground(factor)


class RatFunc:
    """
    Rational function in m = e^u over Q or Q(i).

    Wraps a sympy FracElement, which is kept reduced (numerator and
    denominator coprime, canonical denominator unit) after every operation.
    """

    __slots__ = ("value",)

    def __init__(self, value: FracElement):
        self.value = value

    @property
    def field(self):
        return self.value.field

    @property
    def domain(self):
        return self.value.field.domain

    @classmethod
    def from_lpoly(cls, numer: LPoly, denom: Optional[LPoly] = None, domain=None) -> "RatFunc":
        domain = domain or numer.domain
        F = rational_field("m", domain)
        m = F.ring.gens[0]

        def lift(p: LPoly):
            if p.var != "m":
                raise ValidationError(f"RatFunc requires an LPoly in m, got {p.var}")
            return F.ring.from_dict({k: domain.convert(c) for k, c in p.poly.items()}), p.shift

        num, ns = lift(numer)
        den, ds = lift(denom) if denom is not None else (F.ring.one, 0)
        if not den:
            raise ZeroDivisionError("RatFunc with zero denominator")
        shift = ns - ds
        if shift >= 0:
            num = num * m ** shift
        else:
            den = den * m ** (-shift)
        return cls(F.new(num, den))

    @classmethod
    def constant(cls, c, domain=None) -> "RatFunc":
        c = exact_scalar(c)
        if c is None:
            raise ValidationError("RatFunc.constant needs an exact scalar")
        if domain is None:
            domain = QQ_I if QQ_I.of_type(c) else QQ
        return cls(rational_field("m", domain).ground_new(c))

    @classmethod
    def m(cls, power: int = 1, domain=QQ) -> "RatFunc":
        return cls.from_lpoly(LPoly.monomial("m", power, domain=domain))

    @classmethod
    def parse(cls, text: str, domain=QQ) -> "RatFunc":
        """Parse a rational expression in m such as '(m^4 + 1)/(m - 1)'."""
        F = rational_field("m", domain)
        try:
            expr = sympify(str(text).replace("^", "**"), locals={"m": F.symbols[0]})
            return cls(F.from_expr(expr))
        except Exception as e:
            raise ParseError(f"cannot parse rational function {text!r}: {e}")

    def _pair(self, other):
        return _coerce_pair(self.value, other)

    def __add__(self, other):
        pair = self._pair(other)
        return NotImplemented if pair is None else RatFunc(pair[0] + pair[1])

    __radd__ = __add__

    def __sub__(self, other):
        pair = self._pair(other)
        return NotImplemented if pair is None else RatFunc(pair[0] - pair[1])

    def __rsub__(self, other):
        pair = self._pair(other)
        return NotImplemented if pair is None else RatFunc(pair[1] - pair[0])

    def __mul__(self, other):
        pair = self._pair(other)
        return NotImplemented if pair is None else RatFunc(pair[0] * pair[1])

    __rmul__ = __mul__

    def __truediv__(self, other):
        pair = self._pair(other)
        if pair is None:
            return NotImplemented
        if not pair[1]:
            raise ZeroDivisionError("division by the zero rational function")
        return RatFunc(pair[0] / pair[1])

    def __rtruediv__(self, other):
        pair = self._pair(other)
        if pair is None:
            return NotImplemented
        if not self.value:
            raise ZeroDivisionError("division by the zero rational function")
        return RatFunc(pair[1] / pair[0])

    def __neg__(self):
        return RatFunc(-self.value)

    def __pow__(self, n: int):
        if n < 0 and not self.value:
            raise ZeroDivisionError("negative power of zero")
        return RatFunc(self.value ** n)

    def __eq__(self, other):
        pair = self._pair(other)
        if pair is None:
            return NotImplemented
        return not (pair[0] - pair[1])

    def __hash__(self):
        return hash(self.to_text())

    def __bool__(self):
        return bool(self.value)

    def is_zero(self) -> bool:
        return not self.value

    def derive_u(self) -> "RatFunc":
        """m * d/dm, the derivative with respect to u = log m."""
        m = self.field.gens[0]
        return RatFunc(m * self.value.diff(m))

    def inverse(self) -> "RatFunc":
        return 1 / self

    def parts(self) -> Tuple[LPoly, LPoly]:
        """
        Canonical (numerator, denominator) as Laurent polynomials.

        The denominator is an ordinary polynomial with nonzero constant term and
        a positive integer leading coefficient. Coefficients of both parts are
        integers (Gaussian integers over Q(i)) whose components have gcd 1.
        Any power of m is carried by the numerator.
        """
        num, den = self.value.numer, self.value.denom
        domain = self.domain
        if num:
            num, den = _primitive_parts(num, den)
        N = LPoly("m", poly_ring("m", domain).from_dict(dict(num.items())))
        D = LPoly("m", poly_ring("m", domain).from_dict(dict(den.items())))
        return LPoly("m", N.poly, N.shift - D.shift), LPoly("m", D.poly)

    def numer(self) -> LPoly:
        return self.parts()[0]

    def denom(self) -> LPoly:
        return self.parts()[1]

    def is_laurent(self) -> bool:
        """True when the denominator is a unit (a constant)."""
        return self.parts()[1].high() == 0

    def to_lpoly(self) -> LPoly:
        num, den = self.parts()
        if den.high() != 0:
            raise ValidationError(f"{self} is not a Laurent polynomial")
        return num * (1 / den.coeff(0))

    def to_text(self) -> str:
        num, den = self.parts()
        if den == 1:
            return str(num)
        return f"({num})/({den})"

    def __str__(self):
        return self.to_text()

    def __repr__(self):
        return f"RatFunc({self.to_text()})"

    def evaluate(self, z):
        num, den = self.parts()
        return num.evaluate(z) / den.evaluate(z)


class QuadExt:
    """
    Element a + b*s of Q(m)[s]/(s^2 - R(m)), with a, b RatFunc and R an LPoly in m.

    ds/du = m R'(m) / (2 s) = (m R'(m) / (2 R)) * s, which keeps derivatives
    inside the same extension.
    """

    __slots__ = ("a", "b", "radicand")

    def __init__(self, a: RatFunc, b: RatFunc, radicand: LPoly):
        self.a = a
        self.b = b
        self.radicand = radicand

    @classmethod
    def generator(cls, radicand: LPoly) -> "QuadExt":
        return cls(RatFunc.constant(0), RatFunc.constant(1), radicand)

    @classmethod
    def lift(cls, value, radicand: LPoly) -> "QuadExt":
        if isinstance(value, QuadExt):
            if value.radicand != radicand:
                raise MismatchedRadicandError(
                    f"radicands differ: {value.radicand} vs {radicand}",
                    {"left": str(value.radicand), "right": str(radicand)},
                )
            return value
        if isinstance(value, LPoly):
            value = RatFunc.from_lpoly(value)
        elif exact_scalar(value) is not None:
            value = RatFunc.constant(value)
        if not isinstance(value, RatFunc):
            raise ValidationError(f"cannot embed {type(value).__name__} in the quadratic extension")
        return cls(value, RatFunc.constant(0, value.domain), radicand)

    @property
    def R(self) -> RatFunc:
        return RatFunc.from_lpoly(self.radicand)

    def _other(self, other) -> Optional["QuadExt"]:
        if isinstance(other, (QuadExt, RatFunc, LPoly)) or exact_scalar(other) is not None:
            return QuadExt.lift(other, self.radicand)
        return None

    def __add__(self, other):
        o = self._other(other)
        if o is None:
            return NotImplemented
        return QuadExt(self.a + o.a, self.b + o.b, self.radicand)

    __radd__ = __add__

    def __neg__(self):
        return QuadExt(-self.a, -self.b, self.radicand)

    def __sub__(self, other):
        o = self._other(other)
        if o is None:
            return NotImplemented
        return QuadExt(self.a - o.a, self.b - o.b, self.radicand)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if is_scalar(other):
            return QuadExt(self.a * other, self.b * other, self.radicand)
        o = self._other(other)
        if o is None:
            return NotImplemented
        a = self.a * o.a + self.b * o.b * self.R
        b = self.a * o.b + self.b * o.a
        return QuadExt(a, b, self.radicand)

    __rmul__ = __mul__

    def conjugate(self) -> "QuadExt":
        return QuadExt(self.a, -self.b, self.radicand)

    def norm(self) -> RatFunc:
        return self.a * self.a - self.b * self.b * self.R

    def inverse(self) -> "QuadExt":
        n = self.norm()
        if n.is_zero():
            raise ZeroDivisionError("element of zero norm is not invertible")
        c = self.conjugate()
        return QuadExt(c.a / n, c.b / n, self.radicand)

    def __truediv__(self, other):
        if is_scalar(other):
            if not other:
                raise ZeroDivisionError("division by zero")
            return QuadExt(self.a / other, self.b / other, self.radicand)
        o = self._other(other)
        if o is None:
            return NotImplemented
        return self * o.inverse()

    def __rtruediv__(self, other):
        o = self._other(other)
        if o is None:
            return NotImplemented
        return o * self.inverse()

    def __pow__(self, n: int):
        if n < 0:
            return self.inverse() ** (-n)
        result = QuadExt.lift(1, self.radicand)
        base = self
        while n:
            if n & 1:
                result = result * base
            base = base * base
            n >>= 1
        return result

    def __eq__(self, other):
        o = self._other(other)
        if o is None:
            return NotImplemented
        return self.a == o.a and self.b == o.b

    def __hash__(self):
        return hash((self.a, self.b, self.radicand))

    def is_zero(self) -> bool:
        return self.a.is_zero() and self.b.is_zero()

    def is_rational(self) -> bool:
        return self.b.is_zero()

    def derive_u(self) -> "QuadExt":
        R = self.R
        dlog_s = R.derive_u() / (2 * R)
        return QuadExt(self.a.derive_u(), self.b.derive_u() + self.b * dlog_s, self.radicand)

    def to_text(self) -> str:
        return f"{self.a.to_text()} + ({self.b.to_text()})*s, s^2 = {self.radicand}"

    def __str__(self):
        return self.to_text()

    def __repr__(self):
        return f"QuadExt({self.to_text()})"

    def evaluate(self, z, s_value=None):
        """Numeric value at m = z; s defaults to the principal square root of R(z)."""
        if s_value is None:
            s_value = mp.sqrt(self.radicand.evaluate(z))
        return self.a.evaluate(z) + self.b.evaluate(z) * s_value


FieldElement = Union[RatFunc, QuadExt]


def field_op(a, b, op: str):
    """Apply one of add/sub/mul/div to two field elements."""
    ops = {
        "add": lambda x, y: x + y,
        "sub": lambda x, y: x - y,
        "mul": lambda x, y: x * y,
        "div": lambda x, y: x / y,
    }
    if op not in ops:
        raise ValidationError(f"unknown field operation: {op}")
    if isinstance(a, QuadExt) and isinstance(b, QuadExt) and a.radicand != b.radicand:
        raise MismatchedRadicandError(
            f"radicands differ: {a.radicand} vs {b.radicand}",
            {"left": str(a.radicand), "right": str(b.radicand)},
        )
    return ops[op](a, b)


def derive_u(f):
    """u-derivative of a field element (m = e^u)."""
    return f.derive_u()


class LogCombination:
    """
    rational + sum(c_i * log(g_i(m))) + u_coeff * u, integration constant 0.

    Log arguments are primitive integer polynomials with positive leading
    coefficient and nonzero constant term; powers of m are folded into
    u_coeff since log m = u.
    """

    __slots__ = ("rational", "logs", "u_coeff")

    def __init__(self, rational: RatFunc, logs: Iterable[Tuple[object, LPoly]] = (), u_coeff=QQ.zero):
        self.rational = rational
        merged: Dict[LPoly, object] = {}
        for c, arg in logs:
            merged[arg] = merged.get(arg, QQ.zero) + QQ.convert(c)
        self.logs = tuple(sorted(((c, g) for g, c in merged.items() if c), key=lambda t: (t[1].high(), str(t[1]))))
        self.u_coeff = QQ.convert(u_coeff)

    def derive_u(self) -> RatFunc:
        result = self.rational.derive_u() + self.u_coeff
        for c, g in self.logs:
            result = result + RatFunc.from_lpoly(g.derive()) / RatFunc.from_lpoly(g) * c
        return result

    def is_zero(self) -> bool:
        return self.rational.is_zero() and not self.logs and not self.u_coeff

    def exp(self, normalize_at_one: bool = False) -> RatFunc:
        """
        exp of a pure log combination with integer coefficients.

        With normalize_at_one the undetermined constant is chosen so that the
        result equals 1 at m = 1.
        """
        if not self.rational.is_zero():
            raise ValidationError("exp() needs a combination without rational part")
        result = RatFunc.constant(1)
        for c, g in self.logs + ((self.u_coeff, LPoly.monomial("m", 1)),):
            if c.denominator != 1:
                raise ValidationError(f"exp() needs integral log coefficients, got {format_coeff(c)}")
            result = result * RatFunc.from_lpoly(g) ** int(c.numerator)
        if normalize_at_one:
            num, den = result.parts()
            at_one = num.evaluate_at_one() / den.evaluate_at_one() if den.evaluate_at_one() else None
            if not at_one:
                raise ValidationError("cannot normalize exp() at m = 1")
            result = result / at_one
        return result

    def evaluate(self, u):
        """Numeric value at u (m = e^u), principal branch of log, constant 0."""
        m = mp.exp(u)
        total = self.rational.evaluate(m) + to_mp(self.u_coeff) * u
        for c, g in self.logs:
            total += to_mp(c) * mp.log(g.evaluate(m))
        return total

    def to_json(self) -> Dict[str, object]:
        return {
            "rational": self.rational.to_text(),
            "logs": [[format_coeff(c), str(g)] for c, g in self.logs],
            "u_coeff": format_coeff(self.u_coeff),
            "constant": "0",
        }

    def __str__(self):
        pieces = []
        if not self.rational.is_zero():
            pieces.append(self.rational.to_text())
        pieces += [f"{format_coeff(c)}*log({g})" for c, g in self.logs]
        if self.u_coeff:
            pieces.append(f"{format_coeff(self.u_coeff)}*u")
        return " + ".join(pieces) or "0"

    def __repr__(self):
        return f"LogCombination({self})"


def _lpoly_from_sympy(p: Poly) -> LPoly:
    return LPoly.from_dict("m", {monom[0]: QQ(int(c.p), int(c.q)) for monom, c in p.as_dict().items()})


def integrate_du(D: RatFunc) -> LogCombination:
    """
    Antiderivative of D with respect to u, i.e. the integral of D(m)/m dm.

    The polynomial part is integrated termwise, Hermite/Horowitz reduction
    gives the rational part and the Lazard-Rioboo-Trager resultant gives the
    logarithmic part; a residue outside Q raises NonElementaryLogError.
    """
    if D.domain != QQ:
        raise ValidationError("integrate_du works over Q only")
    m = D.field.symbols[0]
    f = D.value / D.field.gens[0]
    p = Poly(f.numer.as_expr(), m, domain="QQ")
    q = Poly(f.denom.as_expr(), m, domain="QQ")

    coeff, p, q = p.cancel(q)
    poly, p = p.div(q)
    scale = QQ(int(coeff.p), int(coeff.q))

    rational = RatFunc(D.field.from_expr(coeff * poly.integrate(m).as_expr()))
    logs: List[Tuple[object, LPoly]] = []
    u_coeff = QQ.zero

    if not p.is_zero:
        g, h = ratint_ratpart(p, q, m)
        P, Q = h.as_numer_denom()
        P, Q = Poly(P, m, domain="QQ"), Poly(Q, m, domain="QQ")
        quo, r = P.div(Q)
        rational = rational + RatFunc(D.field.from_expr(coeff * (g + quo.integrate(m).as_expr())))

        if not r.is_zero:
            t = Dummy("t")
            for h_t, q_t in ratint_logpart(r, Q, m, t):
                _, factors = factor_list(q_t.as_expr(), t)
                for fac, _mult in factors:
                    fac = Poly(fac, t)
                    if fac.degree() != 1:
                        raise NonElementaryLogError(
                            "non-elementary-over-Q log part",
                            {"residue_polynomial": str(fac.as_expr())},
                        )
                    root = -fac.nth(0) / fac.nth(1)
                    arg = _lpoly_from_sympy(Poly(h_t.as_expr().subs(t, root), m, domain="QQ"))
                    c = QQ(int(root.p), int(root.q)) * scale
                    u_coeff += c * arg.low()
                    arg = LPoly("m", arg.poly)
                    if arg.high() == 0:
                        continue
                    _, prim = arg.poly.clear_denoms()
                    _, prim = prim.primitive()
                    if prim.LC < 0:
                        prim = -prim
                    logs.append((c, LPoly("m", prim)))

    result = LogCombination(rational, logs, u_coeff)
    logger.debug(f"integrate_du: {D} -> {result}")
    return result


@lru_cache(maxsize=None)
def apoly_ring(domain=ZZ):
    """Ring Z[l, m] (or Q[l, m]) holding classical A-polynomials."""
    return ring("l,m", domain)[0]


def bivariate(terms: Dict[Tuple[int, int], int]) -> PolyElement:
    """Polynomial in (l, m) from {(l_exp, m_exp): c}; exponents must be >= 0."""
    return apoly_ring().from_dict({k: ZZ(int(c)) for k, c in terms.items() if c})


def parse_bivariate(text: str) -> PolyElement:
    R = apoly_ring()
    try:
        expr = sympify(str(text).replace("^", "**"), locals={"l": R.symbols[0], "m": R.symbols[1]})
        return R.from_expr(expr)
    except Exception as e:
        raise ParseError(f"cannot parse polynomial in l, m {text!r}: {e}")


def fix_sign(poly: PolyElement) -> PolyElement:
    """Make the lex-greatest term (by (l-degree, m-degree)) positive."""
    if poly and poly.LC < 0:
        return -poly
    return poly


def clear_monomial(poly: PolyElement) -> PolyElement:
    """Divide by the greatest common monomial l^a m^b."""
    if not poly:
        return poly
    la = min(k[0] for k in poly.keys())
    mb = min(k[1] for k in poly.keys())
    if not (la or mb):
        return poly
    return poly.ring.from_dict({(i - la, j - mb): c for (i, j), c in poly.items()})


def unit_normalize(poly: PolyElement) -> PolyElement:
    """Canonical representative up to units: no monomial factor, primitive, sign fixed."""
    if not poly:
        return poly
    poly = clear_monomial(poly)
    _, poly = poly.primitive()
    return fix_sign(poly)


def same_up_to_units(f: PolyElement, g: PolyElement) -> bool:
    return unit_normalize(f) == unit_normalize(g)


def divide_bivariate(poly: PolyElement, divisor: PolyElement) -> Optional[PolyElement]:
    """Exact quotient in Q[l, m] after clearing monomial factors, or None if divisor does not divide."""
    Rq = apoly_ring(QQ)
    quotient, remainder = clear_monomial(poly).set_ring(Rq).div(clear_monomial(divisor).set_ring(Rq))
    return None if remainder else quotient


def format_bivariate(poly: PolyElement) -> str:
    """Text such as 'l + m^6', terms in descending lex order of (l, m) exponents."""
    terms = []
    for (i, j), c in poly.terms():
        mono = "*".join(x for x in (_monomial("l", i), _monomial("m", j)) if x)
        terms.append((mono, c))
    return format_terms(terms)
