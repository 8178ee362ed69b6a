import json

import pytest
from mpmath import mp

from jonesexpand.algebra import parse_bivariate, same_up_to_units
from jonesexpand.catalog import twist_apoly
from jonesexpand.cli import main, parse_complex
from jonesexpand.errors import ValidationError


def error_payload(err: str) -> dict:
    """The JSON error line written to stderr (log lines may precede it)."""
    lines = [line for line in err.splitlines() if line.startswith("{")]
    return json.loads(lines[-1])


def test_apoly_twist_text(capsys):
    # Call the function
    code = main(["apoly", "--twist", "1", "--format", "text"])

    # Check the results
    assert code == 0
    assert capsys.readouterr().out.strip() == "l + m^6"


def test_apoly_torus_json(capsys):
    assert main(["apoly", "--torus", "2", "3"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["apoly"] == "l*m^6 + 1"
    assert payload["schema"] == 1


def test_apoly_by_knot_name(capsys):
    assert main(["apoly", "--knot", "4_1", "--format", "text"]) == 0
    out = capsys.readouterr().out.strip()
    assert same_up_to_units(parse_bivariate(out), twist_apoly(-1))


def test_unknown_flag_is_usage_error(capsys):
    assert main(["apoly", "--twist", "1", "--bogus"]) == 1
    assert error_payload(capsys.readouterr().err)["error"] == "usage"


def test_missing_subcommand(capsys):
    assert main([]) == 1


def test_help_exits_cleanly(capsys):
    assert main(["--help"]) == 0
    assert "expand" in capsys.readouterr().out


def test_expand_unknot(capsys):
    assert main(["expand", "--knot", "unknot", "--order", "4"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert [o["dS_du"] for o in payload["orders"]] == ["0", "0", "0", "0"]


def test_expand_figure_eight_text(capsys):
    assert main(["expand", "--knot", "4_1", "--order", "3", "--format", "text"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "# 4_1 abelian"
    assert "S_2' = 0" in lines


def test_expand_is_deterministic(capsys):
    main(["expand", "--knot", "4_1", "--order", "3"])
    first = capsys.readouterr().out
    main(["expand", "--knot", "4_1", "--order", "3"])
    assert capsys.readouterr().out == first


def test_expand_geometric_unsupported(capsys):
    assert main(["expand", "--knot", "5_2", "--branch", "geometric", "--order", "4"]) == 2
    payload = error_payload(capsys.readouterr().err)
    assert payload["error"] == "unsupported-branch"
    assert "use --branch numeric" in payload["message"]


def test_expand_numeric_needs_m0(capsys):
    assert main(["expand", "--knot", "4_1", "--branch", "numeric"]) == 1


def test_expand_numeric_branches(capsys):
    assert main(["expand", "--knot", "4_1", "--branch", "numeric", "--m0", "1.2", "--order", "2", "--prec", "128"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["m0"] == "1.2"
    assert payload["branch"] == "numeric"
    # l = 1 and the two geometric roots
    assert len(payload["branches"]) == 3
    for result in payload["branches"]:
        assert result["branch"] == "numeric"
        assert result["branch_info"]["multiplicity"] == 1


def test_unknown_knot(capsys):
    # Call the function
    code = main(["expand", "--knot", "8_19"])

    # Verify the exit code and the error line
    assert code == 1
    assert error_payload(capsys.readouterr().err)["error"] == "unknown-knot"


def test_precision_floor(capsys):
    assert main(["expand", "--knot", "4_1", "--prec", "10"]) == 1


def test_verify_unknot(capsys):
    assert main(["verify", "--knot", "unknot", "--nmax", "5"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["annihilation"]["failures"] == []
    assert payload["annihilation"]["source"] == "multisum"


def test_verify_detects_wrong_operator(capsys, tmp_path):
    (tmp_path / "wrong.op").write_text("term -1 0 0 0\nterm 1 0 0 1\n", encoding="utf-8")
    assert main(["verify", "--knot", "4_1", "--operator", str(tmp_path / "wrong.op"), "--nmax", "3"]) == 2
    assert error_payload(capsys.readouterr().err)["error"] == "residual"


def test_list_uses_knot_dir(capsys, tmp_path):
    (tmp_path / "a.yaml").write_text("id: a\nname: a\ndescription: only knot\n", encoding="utf-8")
    assert main(["list", "--knot-dir", str(tmp_path)]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert [k["id"] for k in payload["knots"]] == ["a"]


def test_list_shipped_knots(capsys):
    assert main(["list", "--format", "text"]) == 0
    ids = [line.split("\t")[0] for line in capsys.readouterr().out.splitlines()]
    assert "4_1" in ids and "unknot" in ids


def test_volume(capsys):
    assert main(["volume", "--prec", "96"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["volume"].startswith("2.02988321")


def test_growth_of_unknot(capsys):
    assert main(["growth", "--knot", "unknot", "--nlist", *map(str, range(10, 21)), "--prec", "128"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert abs(mp.mpf(payload["limit"])) < mp.mpf(10) ** -15


def test_parse_complex():
    with mp.workprec(128):
        assert parse_complex("0.1", 128) == mp.mpf("0.1")
        z = parse_complex("0.1+0.05j")
        assert abs(z - mp.mpc("0.1", "0.05")) < mp.mpf(10) ** -30
        assert abs(parse_complex("pi*i/3").imag - mp.pi / 3) < mp.mpf(10) ** -30
    with pytest.raises(ValidationError):
        parse_complex("x")


def test_parse_complex_matches_working_precision():
    for bits in (128, 256):
        with mp.workprec(bits):
            # Call the function
            z = parse_complex("0.1", bits)

            # Verify it is 0.1 rounded to the same number of bits
            assert z.real == mp.mpf("0.1")
            assert z.imag == 0


def test_knot_defaults_to_figure_eight(capsys):
    # Call the function
    code = main(["expand", "--order", "2"])

    # Verify the registry default was used
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["knot"] == "4_1"
    assert payload["branch"] == "abelian"


def test_knot_default_needs_a_registry(capsys, tmp_path):
    assert main(["expand", "--knot-dir", str(tmp_path), "--order", "2"]) == 1
    assert error_payload(capsys.readouterr().err)["error"] == "validation"


def test_expand_numeric_text(capsys):
    assert main(["expand", "--branch", "numeric", "--m0", "1.2", "--order", "1", "--prec", "128", "--format", "text"]) == 0
    headers = [line for line in capsys.readouterr().out.splitlines() if line.startswith("#")]
    assert headers == ["# 4_1 numeric"] * 3
