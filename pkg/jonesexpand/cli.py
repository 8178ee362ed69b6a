"""
CLI Module

Command-line front end: every pipeline is a subcommand printing JSON or text
on stdout. Exit codes: 0 success, 1 validation error (including bad flags),
2 computational failure. Errors go to stderr as one JSON line.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from mpmath import mp
from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from sympy import I, N as sympy_n
from sympy.parsing.sympy_parser import parse_expr, rationalize, standard_transformations

from jonesexpand import __version__
from jonesexpand.algebra import RatFunc, format_bivariate
from jonesexpand.branches import volume_from_branch
from jonesexpand.catalog import (
    KnotRegistry,
    knot_record,
    torus_apoly,
    twist_apoly,
    twist_index,
    twist_knot_name,
)
from jonesexpand.config import (
    DEFAULT_N_MAX,
    DEFAULT_N_MIN,
    DEFAULT_PRECISION,
    LOG_FORMAT,
    LOG_LEVEL,
    MIN_PRECISION,
    PARALLEL_JOBS,
    SCHEMA_VERSION,
)
from jonesexpand.engine import expand, select_branches
from jonesexpand.errors import (
    ComputationError,
    JonesExpandError,
    NonPolynomialError,
    ResidualError,
    UnknownKnotError,
    ValidationError,
)
from jonesexpand.jones_lab import (
    fit_series,
    jones_from_multisum,
    jones_from_recursion,
    kashaev_growth,
    mmr_compare,
    mmr_polynomial,
)
from jonesexpand.operators import apply_operator

logging.basicConfig(level=LOG_LEVEL, format=LOG_FORMAT)
logger = logging.getLogger(__name__)

COMMANDS = ("apoly", "expand", "verify", "fit", "mmr", "growth", "volume", "list")
BRANCHES = ("abelian", "geometric", "numeric")
# decimal literals parse as exact rationals
DECIMALS_EXACT = standard_transformations + (rationalize,)


class UsageError(ValidationError):
    code = "usage"


class JobParser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting with status 2."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def parse_complex(text: str, prec: int = DEFAULT_PRECISION):
    """
    Parse a complex number such as "0.1", "0.1+0.05j", "pi*i/3" at prec bits.

    Args:
        text: expression in i (or j) and sympy constants
        prec: working precision in bits

    Returns:
        mpc: the value
    """
    try:
        expr = parse_expr(text, local_dict={"i": I, "j": I}, transformations=DECIMALS_EXACT)
        re_part, im_part = expr.as_real_imag()
        digits = int(prec * 0.30103) + 10
        with mp.workprec(prec):
            return mp.mpc(str(sympy_n(re_part, digits)), str(sympy_n(im_part, digits)))
    except (SyntaxError, TypeError, ValueError, AttributeError) as e:
        raise ValidationError(f"cannot read {text!r} as a complex number: {e}")


class JobConfig(BaseModel):
    """One validated CLI invocation."""

    model_config = ConfigDict(extra="forbid")

    command: str
    format: str = "json"
    workers: int = PARALLEL_JOBS
    knot_dir: Optional[Path] = None
    knot: Optional[str] = None
    operator: Optional[Path] = None
    twist: Optional[int] = None
    torus: Optional[List[int]] = None
    branch: str = "abelian"
    order: int = 4
    m0: Optional[str] = None
    conjugate: bool = False
    u: Optional[str] = None
    d_max: int = 2
    n_min: int = DEFAULT_N_MIN
    n_max: int = DEFAULT_N_MAX
    n_list: List[int] = []
    prec: int = DEFAULT_PRECISION

    @field_validator("command")
    @classmethod
    def _known_command(cls, value: str) -> str:
        if value not in COMMANDS:
            raise ValueError(f"unknown command {value!r}")
        return value

    @field_validator("format")
    @classmethod
    def _known_format(cls, value: str) -> str:
        if value not in ("json", "text"):
            raise ValueError("format must be json or text")
        return value

    @field_validator("branch")
    @classmethod
    def _known_branch(cls, value: str) -> str:
        if value not in BRANCHES:
            raise ValueError(f"branch must be one of {', '.join(BRANCHES)}")
        return value

    @field_validator("prec")
    @classmethod
    def _enough_bits(cls, value: int) -> int:
        if value < MIN_PRECISION:
            raise ValueError(f"precision must be >= {MIN_PRECISION} bits")
        return value

    @field_validator("order", "workers")
    @classmethod
    def _positive(cls, value: int) -> int:
        if value < 1:
            raise ValueError("must be >= 1")
        return value

    @model_validator(mode="after")
    def _consistent(self) -> "JobConfig":
        if self.command == "expand" and self.branch == "numeric" and self.m0 is None:
            raise ValueError("--branch numeric needs --m0")
        if self.command in ("fit", "mmr") and self.n_max <= self.n_min:
            raise ValueError("--nmax must exceed --nmin")
        if self.command == "apoly" and sum(x is not None for x in (self.twist, self.torus, self.knot)) != 1:
            raise ValueError("apoly needs exactly one of --twist, --torus, --knot")
        if self.d_max < 0:
            raise ValueError("--dmax must be >= 0")
        return self


def _common_parser() -> argparse.ArgumentParser:
    common = JobParser(add_help=False)
    common.add_argument("--format", choices=["json", "text"], default="json", help="Output format")
    common.add_argument("--workers", type=int, default=PARALLEL_JOBS, help="Worker processes for evaluation sweeps")
    common.add_argument("--knot-dir", type=Path, help="Knot manifest directory (overrides JONESEXP_KNOT_DIR)")
    return common


def _knot_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--knot", help="Knot id, e.g. 4_1, unknot, K_3 (default: 4_1 when registered)")
    parser.add_argument("--operator", type=Path, help="Operator file overriding the manifest")


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = JobParser(prog="jonesexpand", description="Asymptotic expansion of colored Jones polynomials")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("apoly", parents=[common], help="Classical A-polynomial")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--twist", type=int, help="Twist index p of K_p")
    group.add_argument("--torus", type=int, nargs=2, metavar=("P", "Q"), help="Torus knot T(p, q)")
    group.add_argument("--knot", help="Knot name from the twist table")

    p = sub.add_parser("expand", parents=[common], help="Compute S_1'..S_n' along a branch")
    _knot_arguments(p)
    p.add_argument("--branch", choices=BRANCHES, default="abelian")
    p.add_argument("--order", type=int, default=4, help="Highest order n")
    p.add_argument("--m0", help="Sample point for numeric branches")
    p.add_argument("--prec", type=int, default=DEFAULT_PRECISION, help="Bits for numeric branches")
    p.add_argument("--conjugate", action="store_true", help="Use the conjugate geometric branch (s -> -s)")

    p = sub.add_parser("verify", parents=[common], help="Annihilation and AJ cross-checks")
    _knot_arguments(p)
    p.add_argument("--nmax", dest="n_max", type=int, default=17, help="Check N0 = 1..nmax")

    p = sub.add_parser("fit", parents=[common], help="Fit J_N(e^{2u/N}) in powers of u/N")
    _knot_arguments(p)
    p.add_argument("--u", required=True)
    p.add_argument("--dmax", dest="d_max", type=int, default=2)
    p.add_argument("--nmin", dest="n_min", type=int, default=DEFAULT_N_MIN)
    p.add_argument("--nmax", dest="n_max", type=int, default=DEFAULT_N_MAX)
    p.add_argument("--prec", type=int, default=DEFAULT_PRECISION)

    p = sub.add_parser("mmr", parents=[common], help="Partition formula against the numeric fit")
    _knot_arguments(p)
    p.add_argument("--u", default="0.1")
    p.add_argument("--dmax", dest="d_max", type=int, default=2)
    p.add_argument("--nmin", dest="n_min", type=int, default=DEFAULT_N_MIN)
    p.add_argument("--nmax", dest="n_max", type=int, default=DEFAULT_N_MAX)
    p.add_argument("--prec", type=int, default=DEFAULT_PRECISION)

    p = sub.add_parser("growth", parents=[common], help="Kashaev invariant growth rate")
    _knot_arguments(p)
    p.add_argument("--nlist", dest="n_list", type=int, nargs="+", required=True)
    p.add_argument("--prec", type=int, default=DEFAULT_PRECISION)

    p = sub.add_parser("volume", parents=[common], help="Volume of the figure-eight complement from its branch")
    p.add_argument("--prec", type=int, default=DEFAULT_PRECISION)

    sub.add_parser("list", parents=[common], help="Registered knots")
    return parser


def job_from_args(argv: Sequence[str]) -> JobConfig:
    args = vars(build_parser().parse_args(list(argv)))
    args = {k: v for k, v in args.items() if v is not None}
    try:
        return JobConfig(**args)
    except ValueError as e:
        raise UsageError(str(e))


def _registry(job: JobConfig) -> KnotRegistry:
    return KnotRegistry(job.knot_dir)


def _record(job: JobConfig):
    registry = _registry(job)
    name = job.knot or registry.get_default_knot_id()
    return knot_record(name, operator_path=job.operator, registry=registry)


def run_apoly(job: JobConfig) -> Dict[str, Any]:
    if job.torus is not None:
        poly, source = torus_apoly(*job.torus), f"torus({job.torus[0]}, {job.torus[1]})"
    else:
        p = job.twist if job.twist is not None else twist_index(job.knot)
        if p is None:
            raise UnknownKnotError(f"{job.knot!r} is not in the twist-knot table")
        poly, source = twist_apoly(p), f"K_{p}"
        name = twist_knot_name(p)
        if name:
            source = f"{source} = {name}"
    return {"schema": SCHEMA_VERSION, "source": source, "apoly": format_bivariate(poly)}


def run_expand(job: JobConfig) -> Dict[str, Any]:
    record = _record(job)
    m0 = parse_complex(job.m0, job.prec) if job.m0 is not None else None
    branches = select_branches(record, job.branch, job.order, m0=m0, prec=job.prec, conjugate=job.conjugate)
    results = [expand(record, branch, job.order).to_json() for branch in branches]
    if job.branch != "numeric":
        return results[0]
    return {"schema": SCHEMA_VERSION, "knot": record.name, "branch": job.branch, "m0": job.m0, "branches": results}


def _jones_values(record, count: int):
    if record.multisum:
        return [jones_from_multisum(record.multisum, N) for N in range(1, count + 1)]
    init = record.initial[: record.require_operator().degree]
    return jones_from_recursion(record, init, count).values


def run_verify(job: JobConfig) -> Dict[str, Any]:
    record = _record(job)
    operator = record.require_operator()
    values = _jones_values(record, job.n_max + operator.degree)
    failures = [N0 for N0 in range(1, job.n_max + 1) if not apply_operator(operator, values, N0).is_zero()]
    report = {
        "schema": SCHEMA_VERSION,
        "knot": record.name,
        "operator": operator.name,
        "annihilation": {
            "source": "multisum" if record.multisum else "recursion",
            "checked": [1, job.n_max],
            "failures": failures,
        },
        "aj": record.aj_report,
        "aj_flagged": record.aj_flagged,
    }
    if failures:
        raise ResidualError(f"operator of {record.name} does not annihilate J_N at N0 = {failures}", report)
    return report


def run_fit(job: JobConfig) -> Dict[str, Any]:
    record = _record(job)
    u = parse_complex(job.u, job.prec)
    report = fit_series(record, u, job.d_max, job.n_min, job.n_max, job.prec, workers=job.workers)
    return {"schema": SCHEMA_VERSION, "knot": record.name, **report.model_dump()}


def _normalized_alexander(record):
    if record.alexander is None:
        raise ValidationError(f"knot {record.name} has no Alexander polynomial in the catalog")
    delta = record.alexander
    return -delta if delta.evaluate_at_one() < 0 else delta


def run_mmr(job: JobConfig) -> Dict[str, Any]:
    record = _record(job)
    delta = _normalized_alexander(record)
    expansion = expand(record, select_branches(record, "abelian", job.d_max + 1)[0], job.d_max + 1)
    u = parse_complex(job.u, job.prec)

    exact: Dict[int, RatFunc] = {}
    with mp.workprec(job.prec):
        values: Dict[int, Any] = {}
        for order in expansion.orders[1:]:
            if order.S is None:
                raise ComputationError(f"S_{order.n} of {record.name} has no closed form", {"n": order.n})
            values[order.n] = order.S.evaluate(u)
            if not order.S.logs and not order.S.u_coeff:
                exact[order.n] = order.S.rational
        exp_s1 = 1 / delta.evaluate(mp.exp(2 * u))
        report = fit_series(record, u, job.d_max, job.n_min, job.n_max, job.prec, workers=job.workers)
        comparison = mmr_compare(values, report, exp_s1)

    polynomials = {}
    for d in range(job.d_max + 1):
        try:
            polynomials[str(d)] = str(mmr_polynomial(exact, d, delta))
        except (NonPolynomialError, ValidationError) as e:
            logger.warning(f"P_{d} of {record.name} not available: {e}")
            polynomials[str(d)] = None
    return {
        "schema": SCHEMA_VERSION,
        "knot": record.name,
        "comparison": comparison,
        "polynomials": polynomials,
        "note": "engine constants of integration are 0; P_d uses them as is",
    }


def run_growth(job: JobConfig) -> Dict[str, Any]:
    record = _record(job)
    report = kashaev_growth(record, job.n_list, job.prec, workers=job.workers)
    return {"schema": SCHEMA_VERSION, **report.model_dump()}


def run_volume(job: JobConfig) -> Dict[str, Any]:
    volume = volume_from_branch(job.prec)
    return {"schema": SCHEMA_VERSION, "knot": "4_1", "prec": job.prec, "volume": mp.nstr(volume, 30)}


def run_list(job: JobConfig) -> Dict[str, Any]:
    return {"schema": SCHEMA_VERSION, "knots": _registry(job).list_records()}


HANDLERS = {
    "apoly": run_apoly,
    "expand": run_expand,
    "verify": run_verify,
    "fit": run_fit,
    "mmr": run_mmr,
    "growth": run_growth,
    "volume": run_volume,
    "list": run_list,
}


def _text_lines(command: str, payload: Dict[str, Any]) -> List[str]:
    if command == "apoly":
        return [payload["apoly"]]
    if command == "volume":
        return [payload["volume"]]
    if command == "list":
        return [f"{k['id']}\t{k['name']}\t{k['description']}" for k in payload["knots"]]
    if command == "expand":
        results = payload.get("branches", [payload])
        lines = []
        for result in results:
            lines.append(f"# {result['knot']} {result['branch']}")
            for order in result["orders"]:
                lines.append(f"S_{order['n']}' = {order['dS_du']}")
                if order.get("S"):
                    S = order["S"]
                    logs = " ".join(f"{c}*log({g})" for c, g in S["logs"])
                    lines.append(f"S_{order['n']} = {S['rational']} {logs} + {S['u_coeff']}*u".rstrip())
        return lines
    if command == "growth":
        lines = [f"{N}\t{value}" for N, value in payload["estimates"]]
        lines.append(f"limit\t{payload['limit']} +- {payload['error']}")
        return lines
    if command == "fit":
        return [f"C_{c['d']} = {c['re']} + {c['im']}i +- {c['err']}" for c in payload["C"]]
    return [json.dumps(payload, sort_keys=True, indent=2)]


def render(command: str, payload: Dict[str, Any], fmt: str) -> str:
    if fmt == "json":
        return json.dumps(payload, sort_keys=True)
    return "\n".join(_text_lines(command, payload))


def _report_error(error: JonesExpandError) -> None:
    logger.error(error.message)
    print(json.dumps(error.to_dict(), sort_keys=True, default=str), file=sys.stderr)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run one CLI job.

    Args:
        argv: arguments without the program name; sys.argv[1:] by default

    Returns:
        int: exit code (0 success, 1 validation error, 2 computational failure)
    """
    argv = sys.argv[1:] if argv is None else argv
    try:
        job = job_from_args(argv)
        payload = HANDLERS[job.command](job)
    except SystemExit as e:
        # --help and --version
        return int(e.code or 0)
    except ValidationError as e:
        _report_error(e)
        return 1
    except ComputationError as e:
        _report_error(e)
        return 2
    except ZeroDivisionError as e:
        _report_error(ComputationError(f"division by zero: {e}"))
        return 2
    print(render(job.command, payload, job.format))
    return 0


if __name__ == "__main__":
    sys.exit(main())
