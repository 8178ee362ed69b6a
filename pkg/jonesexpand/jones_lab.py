"""
Jones Lab Module

Colored Jones polynomials exactly (multisum or recursion from an operator)
and numerically at arbitrary precision, plus the numeric experiments that
cross-check the expansion engine:

- fits of J_N(e^{2u/N}) in powers of hbar = u/N (the MMR coefficients C_d),
- the partition formula for C_d from the abelian S_n and the polynomials P_d,
- growth of the Kashaev invariant J_N(e^{2 pi i/N}) against the volume.
"""

import logging
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

from mpmath import mp
from pydantic import BaseModel
from tqdm import tqdm

from jonesexpand.algebra import LPoly, RatFunc
from jonesexpand.catalog import KnotRecord
from jonesexpand.config import LOG_FORMAT, LOG_LEVEL, MIN_PRECISION, PARALLEL_JOBS
from jonesexpand.engine import partitions_with_aut
from jonesexpand.errors import (
    IllConditionedFitError,
    NonPolynomialError,
    OperatorRequiredError,
    PrecisionLossError,
    SequenceTooShortError,
    ValidationError,
    VanishingLeadingCoefficientError,
)
from jonesexpand.operators import QDiffOperator, parse_operator, serialize_operator

logging.basicConfig(level=LOG_LEVEL, format=LOG_FORMAT)
logger = logging.getLogger(__name__)

# Extra powers of hbar fitted beyond d_max to absorb truncation error
FIT_EXTRA_TERMS = 3
GROWTH_BASIS = ("1", "log(N)/N", "1/N", "1/N^2", "1/N^3")


@dataclass
class JonesSequence:
    knot: str
    values: List[LPoly]
    provenance: str

    def value(self, N: int) -> LPoly:
        if not 1 <= N <= len(self.values):
            raise SequenceTooShortError(f"sequence for {self.knot} has no value at N = {N}", {"N": N})
        return self.values[N - 1]


def jones_41_sequence(N_max: int) -> List[LPoly]:
    """
    J_1..J_N_max of the figure-eight knot from the multisum
    sum_k q^{kN} (q^{-N-1}; q^{-1})_k (q^{1-N}; q)_k, which stops at k = N - 1.
    """
    return [_jones_41_single(N) for N in range(1, N_max + 1)]


def jones_41(N: int) -> LPoly:
    if N < 1:
        raise ValidationError(f"N must be >= 1, got {N}")
    return _jones_41_single(N)


def _jones_41_single(N: int) -> LPoly:
    one = LPoly.constant("q", 1)
    term, total = one, one
    for k in range(1, N):
        term = term * LPoly.monomial("q", N) * (one - LPoly.monomial("q", -N - k)) * (one - LPoly.monomial("q", k - N))
        total = total + term
    return total


def _jones_41_value(N: int, q):
    qN = mp.power(q, N)
    term, total = mp.mpf(1), mp.mpf(1)
    for k in range(1, N):
        term *= qN * (1 - mp.power(q, -N - k)) * (1 - mp.power(q, k - N))
        total += term
    return total


@dataclass(frozen=True)
class Multisum:
    exact: Callable[[int], LPoly]
    numeric: Callable[[int, Any], Any]


MULTISUMS: Dict[str, Multisum] = {
    "figure_eight": Multisum(_jones_41_single, _jones_41_value),
    "trivial": Multisum(lambda N: LPoly.constant("q", 1), lambda N, q: mp.mpf(1)),
}


def jones_from_multisum(name: str, N: int) -> LPoly:
    """Exact J_N from the builtin multisum registered under name."""
    if name not in MULTISUMS:
        raise ValidationError(f"no builtin multisum {name!r}", {"available": sorted(MULTISUMS)})
    if N < 1:
        raise ValidationError(f"N must be >= 1, got {N}")
    return MULTISUMS[name].exact(N)


def jones_from_recursion(record: KnotRecord, init: Sequence[LPoly], N_max: int) -> JonesSequence:
    """
    Run the operator as a recursion:
    J_{N+d} = -(sum_{j<d} a_j(q, q^N) J_{N+j}) / a_d(q, q^N).

    Args:
        record: knot with an operator of degree d
        init: J_1..J_d
        N_max: last index to produce

    Returns:
        JonesSequence: J_1..J_N_max with provenance "recursion"
    """
    operator = record.require_operator()
    d = operator.degree
    if len(init) != d:
        raise ValidationError(f"{record.name}: need {d} initial values, got {len(init)}")
    values = list(init)
    N = 1
    while len(values) < N_max:
        lead = operator.coefficient_at(d, N)
        if lead.is_zero():
            raise VanishingLeadingCoefficientError(
                f"{record.name}: leading coefficient a_{d}(q, q^N) vanishes at N = {N}",
                {"N": N},
            )
        rhs = LPoly.constant("q", 0)
        for j in range(d):
            rhs = rhs - operator.coefficient_at(j, N) * values[N - 1 + j]
        quotient, remainder = rhs.divmod_exact(lead)
        if not remainder.is_zero():
            raise NonPolynomialError(
                f"{record.name}: J_{N + d} is not a Laurent polynomial (wrong operator or initial values)",
                {"N": N + d},
            )
        values.append(quotient)
        N += 1
    logger.info(f"Generated J_1..J_{N_max} of {record.name} by recursion")
    return JonesSequence(record.name, values[:N_max], "recursion")


@dataclass(frozen=True)
class EvaluationSource:
    """Picklable description of how to evaluate J_N numerically."""

    knot: str
    multisum: Optional[str] = None
    operator_text: Optional[str] = None
    initial: Tuple[str, ...] = field(default_factory=tuple)


def evaluation_source(record: KnotRecord) -> EvaluationSource:
    if record.multisum:
        return EvaluationSource(record.name, multisum=record.multisum)
    if record.operator is None:
        raise OperatorRequiredError(f"knot {record.name} has neither a multisum nor an operator", {"knot": record.name})
    if len(record.initial) < record.operator.degree:
        raise SequenceTooShortError(
            f"knot {record.name} needs {record.operator.degree} initial values in its manifest",
            {"knot": record.name},
        )
    return EvaluationSource(
        record.name,
        operator_text=serialize_operator(record.operator),
        initial=tuple(str(v) for v in record.initial),
    )


def _recursion_value(operator: QDiffOperator, initial: Sequence[LPoly], N: int, q):
    d = operator.degree
    values = [v.evaluate(q) for v in initial]
    M = 1
    while len(values) < N:
        lead = operator.coefficient_value(d, q, M)
        if lead == 0:
            raise VanishingLeadingCoefficientError(f"leading coefficient vanishes at N = {M}", {"N": M})
        acc = mp.fsum(operator.coefficient_value(j, q, M) * values[M - 1 + j] for j in range(d))
        values.append(-acc / lead)
        M += 1
    return values[N - 1]


def _evaluate_at(source: EvaluationSource, N: int, u):
    q = mp.exp(2 * u / N)
    if source.multisum:
        if source.multisum not in MULTISUMS:
            raise ValidationError(f"no builtin multisum {source.multisum!r}")
        return MULTISUMS[source.multisum].numeric(N, q)
    operator = parse_operator(source.operator_text)
    initial = [LPoly.parse(text, "q") for text in source.initial]
    return _recursion_value(operator, initial, N, q)


def evaluate_source(source: EvaluationSource, N: int, u, prec: int):
    """
    J_N(e^{2u/N}) at prec bits, checked against a run at twice the precision.

    Raises PrecisionLossError when the two runs disagree beyond 2^{-prec/2}.
    """
    if prec < MIN_PRECISION:
        raise ValidationError(f"precision must be >= {MIN_PRECISION} bits, got {prec}")
    if N < 1:
        raise ValidationError(f"N must be >= 1, got {N}")
    with mp.workprec(2 * prec):
        u_hi = mp.mpmathify(u)
        if u_hi == 0:
            return mp.mpc(1)
        reference = mp.mpc(_evaluate_at(source, N, u_hi))
    with mp.workprec(prec):
        value = mp.mpc(_evaluate_at(source, N, mp.mpmathify(u)))
        scale = abs(reference) if reference != 0 else mp.mpf(1)
        relative = abs(value - reference) / scale
        if relative > mp.mpf(2) ** (-prec // 2):
            raise PrecisionLossError(
                f"J_{N} of {source.knot} lost precision at {prec} bits",
                {"N": N, "prec": prec, "relative_change": mp.nstr(relative, 5)},
            )
        return +reference


def jones_numeric(record: KnotRecord, N: int, u, prec: int):
    """
    J_N(K; q) at q = e^{2u/N} with arbitrary-precision complex arithmetic.

    Args:
        record: knot with a multisum, or an operator and initial values
        N: color
        u: complex evaluation parameter
        prec: working precision in bits

    Returns:
        mpc: the value at prec bits
    """
    return evaluate_source(evaluation_source(record), N, u, prec)


def _evaluate_job(source: EvaluationSource, N: int, u, prec: int):
    return N, evaluate_source(source, N, u, prec)


def evaluate_many(
    record: KnotRecord,
    Ns: Sequence[int],
    u,
    prec: int,
    workers: Optional[int] = None,
    desc: str = "J_N",
) -> Dict[int, Any]:
    """
    J_N(e^{2u/N}) for every N in Ns, in parallel when workers > 1.

    Returns:
        dict: N -> value, independent of completion order
    """
    source = evaluation_source(record)
    workers = PARALLEL_JOBS if workers is None else workers
    results: Dict[int, Any] = {}
    if workers <= 1:
        for N in tqdm(Ns, desc=desc, disable=None):
            results[N] = evaluate_source(source, N, u, prec)
        return results

    with ProcessPoolExecutor(max_workers=workers) as executor:
        future_to_n = {executor.submit(_evaluate_job, source, N, u, prec): N for N in Ns}
        for future in tqdm(as_completed(future_to_n), total=len(future_to_n), desc=desc, disable=None):
            N, value = future.result()
            results[N] = value
    return results


class FitCoefficient(BaseModel):
    d: int
    re: str
    im: str
    err: str


class FitReport(BaseModel):
    u: Tuple[str, str]
    N_min: int
    N_max: int
    prec: int
    C: List[FitCoefficient]
    extrapolation: Dict[str, Any]

    def coefficient(self, d: int):
        c = self.C[d]
        return mp.mpc(mp.mpf(c.re), mp.mpf(c.im))

    def error(self, d: int):
        return mp.mpf(self.C[d].err)


def _pair(z) -> Tuple[str, str]:
    z = mp.mpc(z)
    return mp.nstr(z.real, 30), mp.nstr(z.imag, 30)


def least_squares(columns: List[Callable[[int], Any]], data: Mapping[int, Any], prec: int):
    """
    Fit data[N] ~ sum_i x_i columns[i](N) with a real design matrix.

    Real and imaginary parts are solved separately. Raises
    IllConditionedFitError when the normal matrix condition number exceeds 2^{prec/2}.
    """
    Ns = sorted(data)
    if len(Ns) < len(columns):
        raise ValidationError(f"{len(Ns)} points cannot determine {len(columns)} coefficients")
    A = mp.matrix(len(Ns), len(columns))
    for r, N in enumerate(Ns):
        for c, column in enumerate(columns):
            A[r, c] = column(N)
    condition = mp.sqrt(mp.cond(A.T * A))
    if condition > mp.mpf(2) ** (prec // 2):
        raise IllConditionedFitError(
            f"fit is ill-conditioned (condition number {mp.nstr(condition, 5)})",
            {"condition": mp.nstr(condition, 5)},
        )
    re_part, _ = mp.qr_solve(A, mp.matrix([mp.re(data[N]) for N in Ns]))
    im_part, _ = mp.qr_solve(A, mp.matrix([mp.im(data[N]) for N in Ns]))
    return [mp.mpc(re_part[i], im_part[i]) for i in range(len(columns))], condition


def _nested_windows(N_min: int, N_max: int) -> List[Tuple[int, int]]:
    span = N_max - N_min
    return [(N_min, N_max), (N_min + span // 4, N_max), (N_min + span // 2, N_max)]


def fit_series(
    record: KnotRecord,
    u,
    d_max: int,
    N_min: int,
    N_max: int,
    prec: int,
    workers: Optional[int] = None,
) -> FitReport:
    """
    Fit J_N(e^{2u/N}) ~ sum_d C_d (u/N)^d over nested windows of N.

    The model carries FIT_EXTRA_TERMS powers beyond d_max; each reported C_d
    comes from the widest window and its error is the spread across windows.
    """
    if d_max < 0:
        raise ValidationError("d_max must be >= 0")
    if N_min < 1 or N_max <= N_min:
        raise ValidationError(f"bad N window [{N_min}, {N_max}]")
    terms = d_max + 1 + FIT_EXTRA_TERMS
    with mp.workprec(prec):
        u = mp.mpmathify(u)
        if u == 0:
            raise ValidationError("u = 0 carries no hbar dependence to fit")
        data = evaluate_many(record, list(range(N_min, N_max + 1)), u, prec, workers, desc=f"J_N({record.name})")

        # columns (N_min/N)^d keep the design matrix well scaled
        columns = [lambda N, d=d: (mp.mpf(N_min) / N) ** d for d in range(terms)]
        per_window = []
        conditions = []
        for lo, hi in _nested_windows(N_min, N_max):
            window = {N: data[N] for N in range(lo, hi + 1)}
            coeffs, condition = least_squares(columns, window, prec)
            per_window.append([c * mp.power(N_min / u, d) for d, c in enumerate(coeffs)])
            conditions.append(condition)

        best = per_window[0]
        C = []
        for d in range(d_max + 1):
            err = max(abs(w[d] - best[d]) for w in per_window)
            re, im = _pair(best[d])
            C.append(FitCoefficient(d=d, re=re, im=im, err=mp.nstr(err, 5)))
        logger.info(f"Fitted C_0..C_{d_max} of {record.name} at u = {mp.nstr(u, 10)}")
        return FitReport(
            u=_pair(u),
            N_min=N_min,
            N_max=N_max,
            prec=prec,
            C=C,
            extrapolation={
                "windows": [list(w) for w in _nested_windows(N_min, N_max)],
                "terms": terms,
                "condition": [mp.nstr(c, 5) for c in conditions],
                "C0_by_window": [list(_pair(w[0])) for w in per_window],
            },
        )


def mmr_cd(S: Mapping[int, Any], d: int, exp_s1):
    """
    C_d = exp(S_1) * sum over partitions mu of d of prod S_{mu_i + 1} / |Aut(mu)|.

    Args:
        S: n -> S_n (numbers or RatFunc), n = 2..d+1
        d: order
        exp_s1: exp(S_1), e.g. 1/Delta(e^{2u})

    Returns:
        C_d in the type of the inputs
    """
    total = None
    for mu, aut in partitions_with_aut(d):
        term = exp_s1
        for part in mu.parts:
            if part + 1 not in S:
                raise ValidationError(f"S_{part + 1} is required for C_{d}", {"missing": part + 1})
            term = term * S[part + 1]
        term = term / aut
        total = term if total is None else total + term
    return total


def mmr_polynomial(S: Mapping[int, RatFunc], d: int, alexander: LPoly) -> LPoly:
    """
    P_d(t) = C_d Delta(t)^{2d+1} / 2^d with t = m^2 and Delta normalized to Delta(1) = 1.

    Args:
        S: n -> S_n as RatFunc in m (constants fixed by the caller)
        d: order
        alexander: Alexander polynomial in t, Delta(1) = 1

    Returns:
        LPoly: P_d in t
    """
    if alexander.evaluate_at_one() != 1:
        raise ValidationError("mmr_polynomial needs the Alexander polynomial normalized to Delta(1) = 1")
    delta_m = RatFunc.from_lpoly(alexander.scale_exponents(2, "m"))
    C = mmr_cd(S, d, 1 / delta_m)
    P = C * delta_m ** (2 * d + 1) / 2 ** d
    if not P.is_laurent():
        raise NonPolynomialError(f"P_{d} is not a Laurent polynomial: {P}")
    return P.to_lpoly().halve_exponents("t")


def mmr_compare(S_exact: Mapping[int, Any], report: FitReport, exp_s1) -> Dict[str, Any]:
    """
    Compare fitted C_d with the partition formula.

    S_2 is shifted by the constant that makes C_1 match the fit; the other
    S_n keep constant 0. S_exact maps n to S_n(u) values at the fit's u.
    """
    S = dict(S_exact)
    C0 = report.coefficient(0)
    rows = [{"d": 0, "fitted": list(_pair(C0)), "predicted": list(_pair(exp_s1)),
             "difference": mp.nstr(abs(C0 - exp_s1), 5)}]
    if len(report.C) > 1:
        constant = report.coefficient(1) / C0 - S.get(2, 0)
        S[2] = S.get(2, 0) + constant
    else:
        constant = mp.mpf(0)
    for d in range(1, len(report.C)):
        predicted = mmr_cd(S, d, exp_s1)
        fitted = report.coefficient(d)
        rows.append({
            "d": d,
            "fitted": list(_pair(fitted)),
            "predicted": list(_pair(predicted)),
            "difference": mp.nstr(abs(fitted - predicted), 5),
            "fit_error": mp.nstr(report.error(d), 5),
        })
    return {"u": list(report.u), "S2_constant": list(_pair(constant)), "rows": rows}


class GrowthReport(BaseModel):
    knot: str
    prec: int
    estimates: List[Tuple[int, str]]
    limit: str
    error: str
    basis: List[str]


def kashaev_growth(
    record: KnotRecord,
    N_list: Sequence[int],
    prec: int,
    workers: Optional[int] = None,
) -> GrowthReport:
    """
    (2 pi / N) log |J_N(e^{2 pi i/N})| for N in N_list, extrapolated to N -> oo.

    The limit is fitted with the basis 1, log N/N, 1/N, 1/N^2, 1/N^3 over
    nested windows; the error bar is the spread across windows.
    """
    N_list = list(N_list)
    if N_list != sorted(set(N_list)):
        raise ValidationError("N_list must be strictly ascending")
    with mp.workprec(prec):
        values = evaluate_many(record, N_list, mp.pi * 1j, prec, workers, desc=f"Kashaev({record.name})")
        estimates = {}
        for N in N_list:
            magnitude = abs(values[N])
            if magnitude == 0:
                raise PrecisionLossError(f"|J_{N}| evaluated to 0", {"N": N})
            estimates[N] = 2 * mp.pi / N * mp.log(magnitude)

        columns = [
            lambda N: mp.mpf(1),
            lambda N: mp.log(N) / N,
            lambda N: mp.mpf(1) / N,
            lambda N: mp.mpf(1) / N ** 2,
            lambda N: mp.mpf(1) / N ** 3,
        ]
        limits = []
        count = len(N_list)
        for start in (0, count // 4, count // 2):
            window = {N: estimates[N] for N in N_list[start:]}
            if len(window) < len(columns):
                continue
            coeffs, _ = least_squares(columns, window, prec)
            limits.append(mp.re(coeffs[0]))
        if not limits:
            raise ValidationError(f"need at least {len(columns)} values of N to extrapolate")
        limit = limits[0]
        error = max(abs(x - limit) for x in limits)
        logger.info(f"Kashaev growth of {record.name}: limit {mp.nstr(limit, 10)} +- {mp.nstr(error, 3)}")
        return GrowthReport(
            knot=record.name,
            prec=prec,
            estimates=[(N, mp.nstr(estimates[N], 20)) for N in N_list],
            limit=mp.nstr(limit, 20),
            error=mp.nstr(error, 5),
            basis=list(GROWTH_BASIS),
        )
