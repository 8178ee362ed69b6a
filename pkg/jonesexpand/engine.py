"""
Expansion Engine Module

Order-by-order solver for the asymptotic expansion
    J_N(e^{2u/N}) ~ exp(S_0(u)/hbar - delta/2 log hbar + sum_n S_n(u) hbar^(n-1))
along a branch of the A-polynomial. With a_{j,p}(m) the hbar-expansion of the
operator coefficients and l = e^{S_0'} the branch,

    S_n' = -num_n / L,   L = sum_j j l^j a_{j,0},

where num_n collects the hbar^n coefficient of sum_j l^j a_j(m, hbar)
exp(sum_t B_t(u, j) hbar^t) with the single unknown S_n' j removed.

The engine is generic over the branch's field: RatFunc (abelian), QuadExt
(geometric 4_1) or Jet (numeric), all of which provide arithmetic and
derive_u().
"""

import logging
import threading
from dataclasses import dataclass, field
from math import factorial
from typing import Any, Dict, List, Optional, Tuple

from mpmath import mp
from sympy.polys.domains import QQ
from sympy.utilities.iterables import partitions

from jonesexpand.algebra import LogCombination, LPoly, QuadExt, RatFunc, integrate_du
from jonesexpand.branches import BranchSpec, Jet, abelian_branch, geometric_branch_41, numeric_branches
from jonesexpand.catalog import KnotRecord
from jonesexpand.config import LOG_FORMAT, LOG_LEVEL, SCHEMA_VERSION
from jonesexpand.errors import (
    DegenerateBranchError,
    NonElementaryLogError,
    ResidualError,
    UnsupportedBranchError,
    ValidationError,
)
from jonesexpand.operators import HbarTable, hbar_expand, specialize_q1

logging.basicConfig(level=LOG_LEVEL, format=LOG_FORMAT)
logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Partition:
    parts: Tuple[int, ...]

    @property
    def weight(self) -> int:
        return sum(self.parts)

    @property
    def length(self) -> int:
        return len(self.parts)


def partitions_with_aut(n: int) -> List[Tuple[Partition, int]]:
    """
    All partitions of n with |Aut(mu)| = prod over k of (multiplicity of k)!.

    n = 0 yields the empty partition with aut 1.
    """
    if n < 0:
        raise ValidationError(f"cannot partition a negative integer: {n}")
    out = []
    for counts in partitions(n):
        counts = dict(counts)
        parts = tuple(sorted((k for k, mult in counts.items() for _ in range(mult)), reverse=True))
        aut = 1
        for mult in counts.values():
            aut *= factorial(mult)
        out.append((Partition(parts), aut))
    out.sort(key=lambda item: item[0].parts, reverse=True)
    return out


class ExpansionState:
    """
    Derivatives S_n^(k)(u) computed so far for one (operator, branch) job.

    derivatives[n][k - 1] holds S_n^(k); S_0^(k + 1) comes from the branch.
    """

    def __init__(self, branch: BranchSpec, table: HbarTable):
        self.branch = branch
        self.table = table
        self.order = 0
        self.derivatives: Dict[int, List[Any]] = {}
        self._lock = threading.Lock()
        self._l_powers = self._powers_of_l()
        self._a_cache: Dict[Tuple[int, int], Any] = {}

    def _powers_of_l(self) -> List[Any]:
        one = self.branch.lift(1)
        powers = [one]
        for _ in range(self.table.degree):
            powers.append(powers[-1] * self.branch.l)
        return powers

    def l_power(self, j: int):
        return self._l_powers[j]

    def a(self, j: int, p: int):
        """a_{j,p}(m) lifted into the branch's field."""
        key = (j, p)
        if key not in self._a_cache:
            self._a_cache[key] = self.branch.lift(self.table.a(j, p))
        return self._a_cache[key]

    def S(self, n: int, k: int):
        """k-th u-derivative of S_n, k >= 1."""
        if n == 0:
            if k < 2:
                raise ValidationError("S_0' = log l is carried by the branch, not by the engine")
            return self.branch.supplier(k - 1)
        if n not in self.derivatives:
            raise ValidationError(f"S_{n}' has not been computed yet")
        with self._lock:
            stream = self.derivatives[n]
            while len(stream) < k:
                stream.append(stream[-1].derive_u())
            return stream[k - 1]

    def push(self, value) -> None:
        with self._lock:
            self.order += 1
            self.derivatives[self.order] = [value]


def b_poly(t: int, state: ExpansionState, truncated: bool = False) -> Dict[int, Any]:
    """
    B_t(u, j) = sum_{k=1}^{t+1} S_{t-k+1}^(k) j^k / k! as {k: coefficient}.

    With truncated, the S_t' j term is left out (used at t = current order).
    """
    if t < 1:
        raise ValidationError(f"B_t needs t >= 1, got {t}")
    coeffs = {}
    for k in range(2 if truncated else 1, t + 2):
        coeffs[k] = state.S(t - k + 1, k) * QQ(1, factorial(k))
    return coeffs


def _evaluate_in_j(coeffs: Dict[int, Any], j: int, zero):
    total = zero
    for k, c in coeffs.items():
        if j:
            total = total + c * (j ** k)
    return total


def _denominator(state: ExpansionState):
    zero = state.branch.lift(0)
    total = zero
    for j in range(1, state.table.degree + 1):
        total = total + state.l_power(j) * state.a(j, 0) * j
    return total


def check_characteristic(state: ExpansionState):
    """sum_j l^j a_{j,0}(m); zero exactly when the branch solves the characteristic equation."""
    total = state.branch.lift(0)
    for j in range(state.table.degree + 1):
        total = total + state.l_power(j) * state.a(j, 0)
    return total


def next_order(state: ExpansionState):
    """
    Compute S_n' for n = state.order + 1 and append it to the state.

    Returns:
        the new S_n' in the branch's field
    """
    n = state.order + 1
    if n > state.table.p_max:
        raise ValidationError(f"hbar table truncated at p = {state.table.p_max}; cannot reach order {n}")
    L = _denominator(state)
    if state.branch.is_negligible(L):
        raise DegenerateBranchError(
            "degenerate branch: sum_j j l^j a_{j,0} vanishes (multiple root of the characteristic polynomial)",
            {"order": n, "branch": state.branch.kind},
        )

    zero = state.branch.lift(0)
    one = state.branch.lift(1)
    # B_t(j) for t < n in full, B_n(j) without its S_n' j term
    b_full = {t: b_poly(t, state) for t in range(1, n)}
    b_last = b_poly(n, state, truncated=True)
    partition_table = {w: partitions_with_aut(w) for w in range(n + 1)}

    numerator = zero
    for j in range(state.table.degree + 1):
        b_at_j = {t: _evaluate_in_j(c, j, zero) for t, c in b_full.items()}

        def b_mu(mu: Partition):
            value = one
            for part in mu.parts:
                value = value * b_at_j[part]
            return value

        inner = zero
        for p in range(1, n + 1):
            a_jp = state.a(j, p)
            if a_jp.is_zero():
                continue
            weight = zero
            for mu, aut in partition_table[n - p]:
                weight = weight + b_mu(mu) * QQ(1, aut)
            inner = inner + a_jp * weight

        a_j0 = state.a(j, 0)
        if not a_j0.is_zero():
            weight = zero
            for mu, aut in partition_table[n]:
                if mu.parts == (n,):
                    continue
                weight = weight + b_mu(mu) * QQ(1, aut)
            weight = weight + _evaluate_in_j(b_last, j, zero)
            inner = inner + a_j0 * weight

        numerator = numerator + state.l_power(j) * inner

    value = -numerator / L
    state.push(value)
    logger.info(f"Computed S_{n}' on the {state.branch.kind} branch")
    return value


@dataclass
class OrderResult:
    n: int
    dS_du: Any
    S: Optional[LogCombination] = None
    alexander_power: Optional[int] = None
    radicand_power: Optional[int] = None
    note: Optional[str] = None

    def to_json(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"n": self.n, "dS_du": _element_json(self.dS_du)}
        out["S"] = self.S.to_json() if self.S is not None else None
        if self.alexander_power is not None:
            out["alexander_power"] = self.alexander_power
        if self.radicand_power is not None:
            out["radicand_power"] = self.radicand_power
        if self.note:
            out["note"] = self.note
        return out


@dataclass
class ExpansionResult:
    knot: str
    branch: BranchSpec
    orders: List[OrderResult] = field(default_factory=list)

    @property
    def delta(self):
        return self.branch.delta

    def derivative(self, n: int):
        return self.orders[n - 1].dS_du

    def to_json(self) -> Dict[str, Any]:
        return {
            "schema": SCHEMA_VERSION,
            "knot": self.knot,
            "branch": self.branch.kind,
            "branch_info": self.branch.to_dict(),
            "delta": None if self.delta is None else str(self.delta),
            "orders": [o.to_json() for o in self.orders],
        }


def _element_json(value):
    if isinstance(value, Jet):
        z = mp.mpc(value.value)
        return [mp.nstr(z.real, 30), mp.nstr(z.imag, 30)]
    return value.to_text()


def _power_of(denominator: LPoly, base: LPoly) -> Tuple[int, bool]:
    """Largest k with base^k | denominator, and whether the cofactor is a constant."""
    k = 0
    rest = denominator
    if base.high() == base.low():
        return 0, rest.high() == rest.low()
    while True:
        quotient, remainder = rest.divmod_exact(base)
        if not remainder.is_zero():
            break
        rest, k = quotient, k + 1
    return k, rest.high() == rest.low()


def _alexander_in_m(delta: LPoly) -> LPoly:
    scaled = delta.scale_exponents(2, "m")
    return LPoly("m", scaled.poly)


def _present(value, knot: KnotRecord, branch: BranchSpec) -> OrderResult:
    result = OrderResult(n=0, dS_du=value)
    rational = None
    if isinstance(value, RatFunc):
        rational = value
    elif isinstance(value, QuadExt):
        if value.is_rational():
            rational = value.a
        radicand = LPoly("m", value.radicand.poly)
        powers = [_power_of(part.denom(), radicand)[0] for part in (value.a, value.b) if not part.is_zero()]
        result.radicand_power = max(powers, default=0)
    if rational is None:
        return result
    try:
        result.S = integrate_du(rational)
    except NonElementaryLogError as e:
        result.note = e.message
        logger.warning(f"No elementary presentation: {e.message}")
        return result
    if branch.kind == "abelian" and knot.alexander is not None and not result.S.rational.is_zero():
        base = _alexander_in_m(knot.alexander)
        k, pure = _power_of(result.S.rational.denom(), base)
        if pure:
            result.alexander_power = k
        else:
            logger.warning(f"Denominator of S on {knot.name} is not a power of the Alexander polynomial")
    return result


def _residual_is_zero(state: ExpansionState, residual) -> bool:
    if not isinstance(residual, Jet):
        return residual.is_zero()
    scale = mp.mpf(1)
    for j in range(state.table.degree + 1):
        scale += abs(state.a(j, 0).value) * abs(state.l_power(j).value)
    return abs(residual.value) <= scale * mp.mpf(10) ** (1 - state.branch.prec / 4.0)


def _run(knot: KnotRecord, branch: BranchSpec, n_max: int) -> ExpansionResult:
    operator = knot.require_operator()
    table = hbar_expand(operator, n_max)
    state = ExpansionState(branch, table)

    residual = check_characteristic(state)
    if not _residual_is_zero(state, residual):
        raise ResidualError(
            f"branch {branch.kind} does not solve the characteristic equation of {knot.name}",
            {"residual": _element_json(residual)},
        )

    result = ExpansionResult(knot=knot.name, branch=branch)
    for _ in range(n_max):
        value = next_order(state)
        if branch.kind == "numeric":
            order = OrderResult(n=state.order, dS_du=value)
        else:
            order = _present(value, knot, branch)
            order.n = state.order
        result.orders.append(order)
    return result


def expand(knot: KnotRecord, branch: BranchSpec, n_max: int) -> ExpansionResult:
    """
    Run the expansion to order n_max along a branch.

    Args:
        knot: record with an operator
        branch: abelian, geometric41 or numeric branch
        n_max: highest order, >= 1

    Returns:
        ExpansionResult: S_n' for n = 1..n_max with presentations for exact kinds
    """
    if n_max < 1:
        raise ValidationError(f"order must be >= 1, got {n_max}")
    logger.info(f"Expanding {knot.name} on the {branch.kind} branch to order {n_max}")
    if branch.prec:
        with mp.workprec(branch.prec):
            return _run(knot, branch, n_max)
    return _run(knot, branch, n_max)


def select_branches(
    knot: KnotRecord,
    selector: str,
    order: int,
    m0=None,
    prec: int = 128,
    conjugate: bool = False,
) -> List[BranchSpec]:
    """
    Branches for a CLI-style selector: abelian, geometric or numeric.

    Exact geometric branches exist only for 4_1; numeric branches solve the
    q = 1 specialization of the knot's operator at m0.
    """
    if selector == "abelian":
        return [abelian_branch()]
    if selector == "geometric":
        if knot.name != "4_1":
            raise UnsupportedBranchError(
                "exact geometric branch unsupported; use --branch numeric",
                {"knot": knot.name},
            )
        return [geometric_branch_41(conjugate)]
    if selector == "numeric":
        if m0 is None:
            raise ValidationError("numeric branches need a sample point m0")
        characteristic = specialize_q1(knot.require_operator())
        return [b for b in numeric_branches(characteristic, m0, prec, order) if b.expandable]
    raise ValidationError(f"unknown branch selector {selector!r}")
