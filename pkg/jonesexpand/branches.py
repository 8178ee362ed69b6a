"""
Branch Solver Module

Branches l(m) of A_K(l, m) = 0 and the derivative stream of v = log l in u
(m = e^u) that seeds the expansion engine:

- the abelian branch l = 1 (exact, RatFunc valued),
- the geometric branch of 4_1 in Q(m)[s]/(s^2 - R) (exact, QuadExt valued),
- numeric branches of any classical A-polynomial at a point m0, carried as
  truncated Taylor jets in u so the engine can differentiate them.
"""

import logging
import threading
from math import factorial
from typing import Any, Callable, Dict, List, Optional

from mpmath import mp
from sympy.polys.rings import PolyElement

from jonesexpand.algebra import LPoly, QuadExt, RatFunc, is_scalar, to_mp
from jonesexpand.config import JET_PADDING, LOG_FORMAT, LOG_LEVEL, MIN_PRECISION
from jonesexpand.errors import (
    DegenerateBranchError,
    PrecisionLossError,
    ResidualError,
    ValidationError,
)

logging.basicConfig(level=LOG_LEVEL, format=LOG_FORMAT)
logger = logging.getLogger(__name__)

FIGURE_EIGHT_RADICAND = "1 - 2*m^2 - m^4 - 2*m^6 + m^8"
# l_G = (A + B s) / (2 m^4)
FIGURE_EIGHT_A = "1 - m^2 - 2*m^4 - m^6 + m^8"
FIGURE_EIGHT_B = "1 - m^4"


def _mp_scalar(x):
    if is_scalar(x):
        return to_mp(x)
    return mp.mpmathify(x)


class Jet:
    """
    Truncated Taylor series f(u0 + e) = sum_k c_k e^k, k < length.

    Products and quotients truncate to the shorter operand, and each
    derivative drops one coefficient.
    """

    __slots__ = ("coeffs",)

    def __init__(self, coeffs):
        self.coeffs = [mp.mpmathify(c) for c in coeffs]

    @classmethod
    def constant(cls, value, length: int) -> "Jet":
        return cls([_mp_scalar(value)] + [mp.mpf(0)] * (length - 1))

    @classmethod
    def from_lpoly(cls, p: LPoly, m0, length: int) -> "Jet":
        """p(m) along m = m0 e^e: the k-th coefficient is sum c m0^e e^k / k!."""
        coeffs = []
        terms = [(e, to_mp(c) * mp.power(m0, e)) for e, c in p.items()]
        for k in range(length):
            coeffs.append(mp.fsum(w * mp.mpf(e) ** k for e, w in terms) / factorial(k))
        return cls(coeffs)

    @property
    def length(self) -> int:
        return len(self.coeffs)

    @property
    def value(self):
        if not self.coeffs:
            raise PrecisionLossError("jet exhausted; rerun with a larger order padding")
        return self.coeffs[0]

    def derivative(self, k: int):
        """k-th u-derivative at u0."""
        if k >= self.length:
            raise PrecisionLossError(f"jet of length {self.length} has no derivative of order {k}")
        return self.coeffs[k] * factorial(k)

    def _coerce(self, other) -> Optional["Jet"]:
        if isinstance(other, Jet):
            return other
        try:
            return Jet.constant(_mp_scalar(other), self.length)
        except (TypeError, ValueError):
            return None

    def __add__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        n = min(self.length, o.length)
        return Jet([self.coeffs[k] + o.coeffs[k] for k in range(n)])

    __radd__ = __add__

    def __neg__(self):
        return Jet([-c for c in self.coeffs])

    def __sub__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return self + (-o)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet):
            try:
                c = _mp_scalar(other)
            except (TypeError, ValueError):
                return NotImplemented
            return Jet([x * c for x in self.coeffs])
        n = min(self.length, other.length)
        a, b = self.coeffs, other.coeffs
        return Jet([mp.fsum(a[i] * b[k - i] for i in range(k + 1)) for k in range(n)])

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        if o.value == 0:
            raise ZeroDivisionError("jet division by a series with zero constant term")
        n = min(self.length, o.length)
        a, b = self.coeffs, o.coeffs
        out = []
        for k in range(n):
            out.append((a[k] - mp.fsum(out[i] * b[k - i] for i in range(k))) / b[0])
        return Jet(out)

    def __rtruediv__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return o / self

    def __pow__(self, n: int):
        if n < 0:
            return Jet.constant(1, self.length) / (self ** (-n))
        result = Jet.constant(1, self.length)
        base = self
        while n:
            if n & 1:
                result = result * base
            base = base * base
            n >>= 1
        return result

    def derive_u(self) -> "Jet":
        if self.length <= 1:
            raise PrecisionLossError("jet exhausted; rerun with a larger order padding")
        return Jet([self.coeffs[k + 1] * (k + 1) for k in range(self.length - 1)])

    def is_zero(self) -> bool:
        return all(c == 0 for c in self.coeffs)

    def __repr__(self):
        return f"Jet({mp.nstr(self.value, 15)}, length={self.length})"


class BranchSpec:
    """
    A branch of A_K(l, m) = 0 together with its log-derivative stream.

    supplier(k) is the k-th u-derivative of v = log l, so the expansion's
    S_0^(k+1) equals supplier(k). Values are RatFunc (abelian), QuadExt
    (geometric 4_1) or Jet (numeric). The stream is memoized under a lock.
    """

    def __init__(
        self,
        kind: str,
        l,
        delta,
        first_derivative,
        lift: Callable[[Any], Any],
        info: Optional[Dict[str, Any]] = None,
        tolerance=None,
        prec: Optional[int] = None,
        expandable: bool = True,
    ):
        self.kind = kind
        self.l = l
        self.delta = delta
        self._lift = lift
        self.info = dict(info or {})
        self.tolerance = tolerance
        self.prec = prec
        self.expandable = expandable
        self._stream: List[Any] = [first_derivative] if first_derivative is not None else []
        self._lock = threading.Lock()

    def supplier(self, k: int):
        """k-th u-derivative of log l, k >= 1."""
        if k < 1:
            raise ValidationError(f"supplier index must be >= 1, got {k}")
        if not self.expandable:
            raise DegenerateBranchError(
                f"{self.kind} branch is a multiple root; it cannot be expanded",
                self.info,
            )
        with self._lock:
            while len(self._stream) < k:
                self._stream.append(self._stream[-1].derive_u())
            return self._stream[k - 1]

    def lift(self, value):
        """Embed an LPoly in m (or an exact scalar) in the branch's field."""
        return self._lift(value)

    def is_negligible(self, x) -> bool:
        """Zero test: exact for exact kinds, against the tolerance for jets."""
        if isinstance(x, Jet):
            return abs(x.value) < self.tolerance
        return x.is_zero()

    def to_dict(self) -> Dict[str, Any]:
        out = {"kind": self.kind, "delta": None if self.delta is None else str(self.delta)}
        out.update(self.info)
        return out

    def __repr__(self):
        return f"BranchSpec({self.kind})"


def _rat_lift(value):
    if isinstance(value, LPoly):
        return RatFunc.from_lpoly(value)
    if isinstance(value, RatFunc):
        return value
    return RatFunc.constant(value)


def abelian_branch() -> BranchSpec:
    """l = 1, delta = 0, supplier(k) = 0 for all k."""
    return BranchSpec(
        kind="abelian",
        l=RatFunc.constant(1),
        delta=0,
        first_derivative=RatFunc.constant(0),
        lift=_rat_lift,
        info={"l": "1"},
    )


def figure_eight_radicand() -> LPoly:
    return LPoly.parse(FIGURE_EIGHT_RADICAND, "m")


def geometric_l_41(conjugate: bool = False) -> QuadExt:
    """l_G = (1 - m^2 - 2m^4 - m^6 + m^8 + (1 - m^4) s) / (2 m^4), s^2 = R."""
    R = figure_eight_radicand()
    denom = RatFunc.m(4) * 2
    a = RatFunc.from_lpoly(LPoly.parse(FIGURE_EIGHT_A, "m")) / denom
    b = RatFunc.from_lpoly(LPoly.parse(FIGURE_EIGHT_B, "m")) / denom
    return QuadExt(a, -b if conjugate else b, R)


def geometric_branch_41(conjugate: bool = False) -> BranchSpec:
    """
    Exact geometric branch of the figure-eight knot.

    Args:
        conjugate: take s -> -s (the conjugate branch)

    Returns:
        BranchSpec: kind "geometric41", delta 3, QuadExt-valued stream
    """
    R = figure_eight_radicand()
    l = geometric_l_41(conjugate)
    first = l.derive_u() / l

    def lift(value):
        return QuadExt.lift(_rat_lift(value) if not isinstance(value, QuadExt) else value, R)

    return BranchSpec(
        kind="geometric41",
        l=l,
        delta=3,
        first_derivative=first,
        lift=lift,
        info={"l": l.to_text(), "radicand": str(R), "conjugate": conjugate},
    )


def _pair(z):
    z = mp.mpc(z)
    return [mp.nstr(z.real, 30), mp.nstr(z.imag, 30)]


def _coefficients_in_l(A: PolyElement) -> Dict[int, LPoly]:
    """A(l, m) as {i: c_i(m)} with A = sum c_i(m) l^i."""
    by_l: Dict[int, Dict[int, object]] = {}
    for (i, j), c in A.items():
        by_l.setdefault(i, {})[j] = c
    return {i: LPoly.from_dict("m", coeffs) for i, coeffs in by_l.items()}


def _evaluate_in_l(coeffs: Dict[int, Any], l):
    """Horner evaluation of sum c_i l^i for jets or numbers."""
    top = max(coeffs)
    acc = coeffs[top]
    for i in range(top - 1, -1, -1):
        acc = acc * l
        if i in coeffs:
            acc = acc + coeffs[i]
    return acc


def numeric_branches(A: PolyElement, m0, prec: int = 128, order: int = 4) -> List[BranchSpec]:
    """
    Solve A(l, m0) = 0 and build one numeric branch per root.

    Args:
        A: classical A-polynomial in Z[l, m]
        m0: sample point, complex
        prec: working precision in bits (>= 64)
        order: expansion order the jets must support

    Returns:
        list: BranchSpec per root, sorted by (real part, imaginary part);
        multiple roots are flagged non-expandable
    """
    if prec < MIN_PRECISION:
        raise ValidationError(f"precision must be >= {MIN_PRECISION} bits, got {prec}")
    length = order + JET_PADDING
    with mp.workprec(prec):
        m0 = mp.mpmathify(m0)
        coeffs = _coefficients_in_l(A)
        if not coeffs:
            raise ValidationError("A-polynomial is zero")
        values = {i: c.evaluate(m0) for i, c in coeffs.items()}
        degree = max(coeffs)
        while degree >= 0 and values.get(degree, 0) == 0:
            degree -= 1
        if degree < 0:
            raise ValidationError(f"A(l, m) vanishes identically at m = {mp.nstr(m0, 10)}")
        if degree < max(coeffs):
            logger.warning(f"Leading l-coefficient vanishes at m = {mp.nstr(m0, 10)}; degree drops to {degree}")
        if degree == 0:
            return []

        dense = [values.get(i, mp.mpf(0)) for i in range(degree, -1, -1)]
        try:
            result = mp.polyroots(dense, maxsteps=200, extraprec=prec, error=True)
            roots, root_error = result if isinstance(result, tuple) else (result, mp.mpf(0))
        except mp.NoConvergence as e:
            raise ResidualError("root finding did not converge", {"m0": str(m0), "reason": str(e)})
        roots = sorted((mp.mpc(r) for r in roots), key=lambda r: (r.real, r.imag))
        logger.debug(f"polyroots error estimate at m = {mp.nstr(m0, 10)}: {mp.nstr(root_error, 5)}")

        tolerance = mp.mpf(10) ** (1 - mp.dps // 4)
        cluster = mp.mpf(2) ** (-prec // 4)
        dA_dl = {i - 1: c * i for i, c in values.items() if i > 0}
        coeff_jets = {i: Jet.from_lpoly(c, m0, length) for i, c in coeffs.items()}
        dcoeff_jets = {i - 1: jet * i for i, jet in coeff_jets.items() if i > 0}

        branches = []
        for root in roots:
            multiplicity = sum(1 for r in roots if abs(r - root) < cluster)
            residual = abs(_evaluate_in_l(values, root))
            slope = _evaluate_in_l(dA_dl, root) if dA_dl else mp.mpf(0)
            expandable = multiplicity == 1 and abs(slope) > tolerance
            info = {
                "m0": _pair(m0),
                "root": _pair(root),
                "multiplicity": multiplicity,
                "residual": mp.nstr(residual, 5),
            }
            if not expandable:
                logger.warning(f"Root {mp.nstr(root, 15)} at m = {mp.nstr(m0, 10)} is multiple; flagged non-expandable")
                branches.append(
                    BranchSpec("numeric", root, None, None, lambda v: v, info, tolerance, prec, expandable=False)
                )
                continue

            # Newton on jets doubles the number of correct Taylor coefficients per step
            l_jet = Jet.constant(root, length)
            for _ in range(length.bit_length() + 2):
                l_jet = l_jet - _evaluate_in_l(coeff_jets, l_jet) / _evaluate_in_l(dcoeff_jets, l_jet)
            first = l_jet.derive_u() / l_jet

            def lift(value, _m0=m0, _length=length):
                if isinstance(value, Jet):
                    return value
                if isinstance(value, LPoly):
                    return Jet.from_lpoly(value, _m0, _length)
                return Jet.constant(value, _length)

            info["supplier_1"] = _pair(first.value)
            branches.append(BranchSpec("numeric", l_jet, None, first, lift, info, tolerance, prec))
        logger.info(f"Found {len(branches)} numeric branches at m = {mp.nstr(m0, 10)}")
        return branches


def volume_from_branch(prec: int = 128):
    """
    Hyperbolic volume of the figure-eight complement from its geometric branch,
    2 * integral over theta in [0, pi/3] of |log |l_G(e^{i theta})||.
    """
    if prec < MIN_PRECISION:
        raise ValidationError(f"precision must be >= {MIN_PRECISION} bits, got {prec}")
    l = geometric_l_41()
    with mp.workprec(prec):

        def integrand(theta):
            return abs(mp.log(abs(l.evaluate(mp.expj(theta)))))

        volume = 2 * mp.quad(integrand, [0, mp.pi / 6, mp.pi / 3])
    logger.info(f"Volume from the geometric branch: {mp.nstr(volume, 15)}")
    return volume
