import pytest

from jonesexpand.algebra import LPoly, apoly_ring, format_bivariate, parse_bivariate, same_up_to_units
from jonesexpand.catalog import (
    KnotRegistry,
    alexander,
    alexander_normalized,
    check_aj,
    knot_record,
    torus_apoly,
    twist_apoly,
    twist_index,
    twist_knot_name,
)
from jonesexpand.config import knot_dir
from jonesexpand.errors import OperatorRequiredError, UnknownKnotError, ValidationError
from jonesexpand.operators import builtin_figure_eight, unknot_operator

A_K2 = (
    "-l^2 + l^3 + 2*l^2*m^2 + l*m^4 + 2*l^2*m^4 - l*m^6 - l^2*m^8 + 2*l*m^10"
    " + l^2*m^10 + 2*l*m^12 + m^14 - l*m^14"
)
A_KM1 = "-l + l*m^2 + m^4 + 2*l*m^4 + l^2*m^4 + l*m^6 - l*m^8"
A_KM2 = (
    "l^2 - l^3 - 3*l^2*m^2 + l^3*m^2 - 2*l*m^4 - l^2*m^4 + 3*l*m^6 + 3*l^2*m^6"
    " + m^8 + 3*l*m^8 + 6*l^2*m^8 + 3*l^3*m^8 + l^4*m^8 + 3*l^2*m^10 + 3*l^3*m^10"
    " - l^2*m^12 - 2*l^3*m^12 + l*m^14 - 3*l^2*m^14 - l*m^16 + l^2*m^16"
)

UNKNOT_YAML = """id: unknot
name: unknot
description: test unknot
operator:
  file: unknot.op
initial: ["1"]
"""

UNKNOT_OP = "term -1 0 0 0\nterm 1 0 0 1\n"


def test_twist_knot_initial_conditions():
    assert format_bivariate(twist_apoly(1)) == "l + m^6"
    assert twist_apoly(0) == apoly_ring().one
    assert same_up_to_units(twist_apoly(-1), parse_bivariate(A_KM1))
    assert same_up_to_units(twist_apoly(2), parse_bivariate(A_K2))


def test_twist_recursion_reaches_six_one():
    assert same_up_to_units(twist_apoly(-2), parse_bivariate(A_KM2))


def test_twist_recursion_forward_step():
    # A_{K_3} = c A_{K_2} - d A_{K_1}, nonzero and of higher l-degree than A_{K_2}
    A3 = twist_apoly(3)
    assert A3.degree(0) > twist_apoly(2).degree(0)


def test_twist_names_round_trip():
    for p in (-4, -3, -2, -1, 1, 2, 3, 4):
        assert twist_index(twist_knot_name(p)) == p
    assert twist_index("K_7") == 7
    assert twist_knot_name(0) == "unknot"
    assert twist_index("8_19") is None


def test_torus_knot():
    assert format_bivariate(torus_apoly(2, 3)) == "l*m^6 + 1"
    assert format_bivariate(torus_apoly(2, -3)) == "l + m^6"
    with pytest.raises(ValidationError):
        torus_apoly(2, 4)
    with pytest.raises(ValidationError):
        torus_apoly(1, 3)


def test_alexander_polynomials():
    assert alexander("4_1") == LPoly.parse("t^-1 - 3 + t", "t")
    assert alexander_normalized("4_1").evaluate_at_one() == 1
    assert alexander_normalized("3_1").evaluate_at_one() == 1
    with pytest.raises(UnknownKnotError):
        alexander("8_19")


def test_aj_check_figure_eight():
    report = check_aj(builtin_figure_eight(), twist_apoly(-1))
    assert report["divisible"]
    assert report["cofactor_in_m_only"]


def test_aj_check_detects_wrong_operator():
    report = check_aj(unknot_operator(), twist_apoly(-1))
    assert not report["divisible"]
    assert report["cofactor"] is None


def test_registry_loads_shipped_manifest():
    registry = KnotRegistry()
    ids = [r["id"] for r in registry.list_records()]
    for knot in ("unknot", "3_1", "4_1", "5_2", "6_1"):
        assert knot in ids
    assert registry.get_default_knot_id() == "4_1"


def test_registry_skips_invalid_files(tmp_path):
    (tmp_path / "good.yaml").write_text("id: a\nname: a\ndescription: fine\n", encoding="utf-8")
    (tmp_path / "missing.yaml").write_text("id: b\nname: b\n", encoding="utf-8")
    (tmp_path / "broken.yaml").write_text("id: [unclosed\n", encoding="utf-8")
    (tmp_path / "badop.yaml").write_text("id: c\nname: c\ndescription: x\noperator: {path: c.op}\n", encoding="utf-8")

    # Call the function
    registry = KnotRegistry(tmp_path)

    # Verify only the well-formed record was kept
    assert sorted(registry.records) == ["a"]


def test_registry_skips_unquoted_numeric_id(tmp_path, caplog):
    (tmp_path / "4_1.yaml").write_text("id: 4_1\nname: figure-eight\ndescription: unquoted id\n", encoding="utf-8")
    (tmp_path / "a.yaml").write_text("id: a\nname: a\ndescription: fine\n", encoding="utf-8")

    # Call the function
    registry = KnotRegistry(tmp_path)

    # Verify the integer id 41 was rejected and the rest still loads
    assert sorted(registry.records) == ["a"]
    assert "Knot id must be a string" in caplog.text


def test_shipped_ids_are_strings():
    registry = KnotRegistry()
    assert all(isinstance(k, str) for k in registry.records)
    assert registry.get_record("4_1")["name"] == "figure-eight"
    assert knot_record("4_1", registry=registry).name == "4_1"


def test_knot_dir_from_environment(monkeypatch, tmp_path):
    monkeypatch.setenv("JONESEXP_KNOT_DIR", str(tmp_path))
    assert knot_dir() == tmp_path


def test_knot_record_figure_eight():
    record = knot_record("4_1")
    assert record.operator == builtin_figure_eight()
    assert record.multisum == "figure_eight"
    assert len(record.initial) == 3
    assert record.initial[0] == LPoly.constant("q", 1)
    assert not record.aj_flagged
    assert record.alexander == LPoly.parse("t^-1 - 3 + t", "t")


def test_knot_record_from_operator_file(tmp_path):
    (tmp_path / "unknot.yaml").write_text(UNKNOT_YAML, encoding="utf-8")
    (tmp_path / "unknot.op").write_text(UNKNOT_OP, encoding="utf-8")

    # Call the function
    record = knot_record("unknot", registry=KnotRegistry(tmp_path))

    assert record.operator == unknot_operator()
    assert record.initial == [LPoly.constant("q", 1)]
    assert record.twist == 0


def test_knot_record_without_operator_file(tmp_path):
    (tmp_path / "unknot.yaml").write_text(UNKNOT_YAML, encoding="utf-8")

    record = knot_record("unknot", registry=KnotRegistry(tmp_path))

    assert record.operator is None
    with pytest.raises(OperatorRequiredError):
        record.require_operator()


def test_knot_record_degree_mismatch(tmp_path):
    (tmp_path / "unknot.yaml").write_text(UNKNOT_YAML.replace("unknot.op\n", "unknot.op\n  degree: 2\n"), encoding="utf-8")
    (tmp_path / "unknot.op").write_text(UNKNOT_OP, encoding="utf-8")
    with pytest.raises(ValidationError):
        knot_record("unknot", registry=KnotRegistry(tmp_path))


def test_knot_record_flags_failed_aj_check(tmp_path):
    (tmp_path / "4_1.yaml").write_text(
        "id: \"4_1\"\nname: wrong\ndescription: unknot operator on 4_1\noperator: {builtin: unknot}\n",
        encoding="utf-8",
    )
    record = knot_record("4_1", registry=KnotRegistry(tmp_path))
    assert record.aj_flagged
    assert not record.aj_report["divisible"]


def test_unknown_knot(tmp_path):
    with pytest.raises(UnknownKnotError):
        knot_record("8_19", registry=KnotRegistry(tmp_path))


def test_twist_knot_outside_manifest(tmp_path):
    record = knot_record("K_3", registry=KnotRegistry(tmp_path))
    assert record.twist == 3
    assert record.apoly == twist_apoly(3)
    assert record.operator is None
