"""
Knot Catalog Module

Classical A-polynomials (twist-knot recursion, torus-knot formula),
Alexander polynomials, and knot records that bind a name to its operator,
initial values and fixtures. Records are loaded from YAML files in the knot
directory, one file per knot.
"""

import logging
import re
from math import gcd
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import yaml
from pydantic import BaseModel, ConfigDict
from sympy.polys.rings import PolyElement

from jonesexpand.algebra import (
    LPoly,
    apoly_ring,
    bivariate,
    divide_bivariate,
    format_bivariate,
    parse_bivariate,
    same_up_to_units,
    unit_normalize,
)
from jonesexpand.config import LOG_FORMAT, LOG_LEVEL, knot_dir
from jonesexpand.errors import OperatorRequiredError, ParseError, UnknownKnotError, ValidationError
from jonesexpand.operators import QDiffOperator, builtin_operator, load_operator, specialize_q1

logging.basicConfig(level=LOG_LEVEL, format=LOG_FORMAT)
logger = logging.getLogger(__name__)

# A_{K_p} = c A_{K_{p-1}} - d A_{K_{p-2}}
TWIST_C = "-l + l^2 + 2*l*m^2 + m^4 + 2*l*m^4 + l^2*m^4 + 2*l*m^6 + m^8 - l*m^8"
TWIST_D = "m^4*(l + m^2)^4"
TWIST_INITIAL = {
    2: "-l^2 + l^3 + 2*l^2*m^2 + l*m^4 + 2*l^2*m^4 - l*m^6 - l^2*m^8 + 2*l*m^10 + l^2*m^10 + 2*l*m^12 + m^14 - l*m^14",
    1: "l + m^6",
    0: "1",
    -1: "-l + l*m^2 + m^4 + 2*l*m^4 + l^2*m^4 + l*m^6 - l*m^8",
}

TWIST_NAMES = {1: "3_1", 2: "5_2", 3: "7_2", 4: "9_2", -1: "4_1", -2: "6_1", -3: "8_1", -4: "10_1"}

ALEXANDER = {
    "unknot": "1",
    "3_1": "t^-1 - 1 + t",
    "4_1": "t^-1 + t - 3",
    "5_2": "2*t^-1 + 2*t - 3",
    "6_1": "2*t^-1 + 2*t - 5",
}

_TWIST_NAME = re.compile(r"^K_(-?\d+)$")


def twist_knot_name(p: int) -> Optional[str]:
    """Rolfsen name of the twist knot K_p, when it has one in the table."""
    if p == 0:
        return "unknot"
    return TWIST_NAMES.get(p)


def twist_index(name: str) -> Optional[int]:
    """Inverse of twist_knot_name; also accepts 'K_p'."""
    match = _TWIST_NAME.match(name)
    if match:
        return int(match.group(1))
    if name == "unknot":
        return 0
    for p, known in TWIST_NAMES.items():
        if known == name:
            return p
    return None


def _twist_recursion(p: int) -> PolyElement:
    c, d = parse_bivariate(TWIST_C), parse_bivariate(TWIST_D)
    values = {k: parse_bivariate(text) for k, text in TWIST_INITIAL.items()}
    if p in values:
        return values[p]
    if p > 0:
        prev2, prev1 = values[1], values[2]
        for _ in range(3, p + 1):
            prev2, prev1 = prev1, c * prev1 - d * prev2
        return prev1
    # backward: A_p = c A_{p+1} - d A_{p+2}
    next2, next1 = values[0], values[-1]
    for _ in range(-2, p - 1, -1):
        next2, next1 = next1, c * next1 - d * next2
    return next1


def twist_apoly(p: int) -> PolyElement:
    """
    Classical A-polynomial (abelian factor l - 1 removed) of the twist knot K_p.

    Args:
        p: twist index, any integer (K_1 = 3_1, K_-1 = 4_1)

    Returns:
        PolyElement: unit-normalized polynomial in Z[l, m]
    """
    return unit_normalize(_twist_recursion(p))


def torus_apoly(p: int, q: int) -> PolyElement:
    """1 + l m^{pq} for the (p, q) torus knot."""
    if abs(p) < 2 or abs(q) < 2:
        raise ValidationError(f"torus knot needs |p|, |q| >= 2, got ({p}, {q})")
    if gcd(p, q) != 1:
        raise ValidationError(f"torus knot needs coprime p, q, got ({p}, {q})")
    e = p * q
    if e >= 0:
        return bivariate({(0, 0): 1, (1, e): 1})
    return bivariate({(0, -e): 1, (1, 0): 1})


def alexander(name: str) -> LPoly:
    """Symmetric Alexander polynomial in t of a catalog knot."""
    if name not in ALEXANDER:
        raise UnknownKnotError(f"no Alexander polynomial for knot {name!r}", {"known": sorted(ALEXANDER)})
    return LPoly.parse(ALEXANDER[name], "t")


def alexander_normalized(name: str) -> LPoly:
    """Alexander polynomial with the sign fixed so that Delta(1) = 1."""
    delta = alexander(name)
    return -delta if delta.evaluate_at_one() < 0 else delta


class KnotRecord(BaseModel):
    """A knot with whatever data the catalog holds for it."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    name: str
    description: str = ""
    apoly: Optional[PolyElement] = None
    alexander: Optional[LPoly] = None
    operator: Optional[QDiffOperator] = None
    initial: List[LPoly] = []
    multisum: Optional[str] = None
    twist: Optional[int] = None
    torus: Optional[Tuple[int, int]] = None
    aj_flagged: bool = False
    aj_report: Dict[str, Any] = {}

    def require_operator(self) -> QDiffOperator:
        if self.operator is None:
            raise OperatorRequiredError(
                f"knot {self.name} has no operator; supply an operator file",
                {"knot": self.name},
            )
        return self.operator


def check_aj(operator: QDiffOperator, apoly: PolyElement) -> Dict[str, Any]:
    """
    Divide specialize_q1(operator) by (l - 1) * apoly.

    Returns:
        dict: divisible flag, the cofactor text and whether the cofactor
        depends on m only
    """
    l = apoly_ring().gens[0]
    specialized = specialize_q1(operator)
    quotient = divide_bivariate(specialized, (l - 1) * apoly)
    report: Dict[str, Any] = {
        "specialization": format_bivariate(unit_normalize(specialized)),
        "divisible": quotient is not None,
        "cofactor": None,
        "cofactor_in_m_only": None,
    }
    if quotient is not None:
        report["cofactor"] = format_bivariate(quotient)
        report["cofactor_in_m_only"] = all(i == 0 for i, _ in quotient.keys())
    return report


class KnotRegistry:
    """
    Registry of knot records loaded from YAML files.

    Each file describes one knot; operator files are resolved relative to the
    directory that holds the YAML file.
    """

    def __init__(self, directory: Optional[Path] = None):
        self.directory = Path(directory) if directory else knot_dir()
        self.records: Dict[str, Dict[str, Any]] = {}
        logger.info(f"Initializing KnotRegistry from {self.directory}")
        self._load_records()
        logger.info(f"Loaded {len(self.records)} knot records: {sorted(self.records)}")

    def _load_records(self) -> None:
        if not self.directory.exists():
            logger.warning(f"Knot directory not found: {self.directory.absolute()}")
            return
        for file_path in sorted(self.directory.glob("*.yaml")):
            try:
                with open(file_path, "r", encoding="utf-8") as f:
                    raw = yaml.safe_load(f)
                if self._validate_record(raw):
                    self.records[raw["id"]] = raw
                else:
                    logger.error(f"Invalid knot record in {file_path.name}")
            except Exception as e:
                logger.error(f"Error loading knot record from {file_path.name}: {str(e)}")

    def _validate_record(self, raw: Any) -> bool:
        """
        Validate the structure of a knot record.

        Args:
            raw: the parsed YAML document

        Returns:
            bool: True if the record is usable, False otherwise
        """
        if not isinstance(raw, dict):
            logger.error("Knot record must be a mapping")
            return False
        for key in ["id", "name", "description"]:
            if key not in raw:
                logger.error(f"Missing required field in knot record: {key}")
                return False
        if not isinstance(raw["id"], str):
            # YAML reads an unquoted 4_1 as the integer 41
            logger.error(f"Knot id must be a string, got {raw['id']!r}; quote it in the YAML file")
            return False
        operator = raw.get("operator")
        if operator is not None:
            if not isinstance(operator, dict) or not ({"builtin", "file"} & set(operator)):
                logger.error(f"Operator of {raw['id']} needs 'builtin' or 'file'")
                return False
        torus = raw.get("torus")
        if torus is not None and (not isinstance(torus, list) or len(torus) != 2):
            logger.error(f"Torus entry of {raw['id']} must be [p, q]")
            return False
        if not isinstance(raw.get("initial", []), list):
            logger.error(f"Initial values of {raw['id']} must be a list")
            return False
        return True

    def get_record(self, knot_id: str) -> Optional[Dict[str, Any]]:
        return self.records.get(knot_id)

    def list_records(self) -> List[Dict[str, Any]]:
        return [
            {
                "id": r["id"],
                "name": r["name"],
                "description": r["description"],
                "operator": "builtin" if "builtin" in (r.get("operator") or {}) else
                ("file" if r.get("operator") else None),
                "multisum": r.get("multisum"),
            }
            for _, r in sorted(self.records.items())
        ]

    def get_default_knot_id(self) -> str:
        if "4_1" in self.records:
            return "4_1"
        if self.records:
            return next(iter(sorted(self.records)))
        raise ValidationError("No knot records available")

    def operator_path(self, knot_id: str) -> Optional[Path]:
        raw = self.records.get(knot_id) or {}
        entry = raw.get("operator") or {}
        if "file" not in entry:
            return None
        path = Path(entry["file"])
        return path if path.is_absolute() else self.directory / path


def _load_record_operator(registry: KnotRegistry, raw: Dict[str, Any]) -> Optional[QDiffOperator]:
    entry = raw.get("operator")
    if not entry:
        return None
    if "builtin" in entry:
        return builtin_operator(entry["builtin"])
    path = registry.operator_path(raw["id"])
    if not path.is_file():
        # user-supplied data; require_operator() reports the absence when it matters
        logger.warning(f"Operator file for {raw['id']} not found: {path}")
        return None
    operator = load_operator(path)
    expected = entry.get("degree")
    if expected is not None and operator.degree != int(expected):
        raise ValidationError(
            f"operator for {raw['id']} has degree {operator.degree}, manifest says {expected}",
            {"knot": raw["id"]},
        )
    return operator


def _classical_apoly(name: str, raw: Dict[str, Any]) -> Optional[PolyElement]:
    if "apoly" in raw:
        return unit_normalize(parse_bivariate(raw["apoly"]))
    p = raw.get("twist", twist_index(name))
    if p is not None:
        return twist_apoly(int(p))
    if raw.get("torus"):
        return torus_apoly(*(int(x) for x in raw["torus"]))
    return None


def knot_record(
    name: str,
    operator_path: Optional[Path] = None,
    registry: Optional[KnotRegistry] = None,
) -> KnotRecord:
    """
    Assemble the record of a knot from the registry, the twist table and an
    optional operator file.

    Args:
        name: knot id ("4_1", "unknot", "K_3", ...)
        operator_path: operator file overriding the manifest
        registry: registry to read; a fresh one from the configured directory by default

    Returns:
        KnotRecord: the record; a failed AJ cross-check sets aj_flagged
    """
    registry = registry or KnotRegistry()
    raw = registry.get_record(name)
    if raw is None:
        if twist_index(name) is None and operator_path is None:
            raise UnknownKnotError(f"unknown knot {name!r}", {"known": sorted(registry.records)})
        raw = {"id": name, "name": name, "description": ""}

    if operator_path is not None:
        operator = load_operator(operator_path)
    else:
        operator = _load_record_operator(registry, raw)

    delta = None
    if raw.get("alexander"):
        delta = LPoly.parse(str(raw["alexander"]), "t")
    elif name in ALEXANDER:
        delta = alexander(name)

    try:
        initial = [LPoly.parse(str(v), "q") for v in raw.get("initial", [])]
    except ParseError as e:
        raise ParseError(f"initial values of {name}: {e.message}")

    apoly = _classical_apoly(name, raw)
    aj_report: Dict[str, Any] = {}
    flagged = False
    if operator is not None and apoly is not None:
        aj_report = check_aj(operator, apoly)
        if not aj_report["divisible"]:
            flagged = True
            logger.warning(f"AJ cross-check failed for {name}: specialization not divisible by (l - 1) A_K")

    torus = tuple(int(x) for x in raw["torus"]) if raw.get("torus") else None
    twist = raw.get("twist", twist_index(name))
    return KnotRecord(
        name=name,
        description=raw.get("description", ""),
        apoly=apoly,
        alexander=delta,
        operator=operator,
        initial=initial,
        multisum=raw.get("multisum"),
        twist=None if twist is None else int(twist),
        torus=torus,
        aj_flagged=flagged,
        aj_report=aj_report,
    )


__all__ = [
    "KnotRecord",
    "KnotRegistry",
    "alexander",
    "alexander_normalized",
    "check_aj",
    "format_bivariate",
    "knot_record",
    "same_up_to_units",
    "torus_apoly",
    "twist_apoly",
    "twist_index",
    "twist_knot_name",
    "unit_normalize",
]
