import io
import json
import os

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hutchinson import acceptance, cli
from hutchinson.cli import main, parse_expression, parse_operator
from hutchinson.errors import BothZero, ParseError

UNITDISK = '{"P": [[1,0],[1,0]], "Q": [[0,0],[-1,0],[1,0]]}'


def test_parse_operator_examples():
    P, Q = parse_operator('{"P": [[0,0],[1,0]], "Q": [[-1,0]]}')
    assert np.array_equal(P.coeffs, [0, 1]) and np.array_equal(Q.coeffs, [-1])
    P, Q = parse_operator('{"P": [[1,0]], "Q": [[0,0],[1,6]]}')
    assert np.array_equal(P.coeffs, [1]) and np.array_equal(Q.coeffs, [0, 1 + 6j])


def test_parse_operator_trims_trailing_zeros():
    _, Q = parse_operator('{"P": [[1,0]], "Q": [[1,0],[0,0],[0,0]]}')
    assert Q.degree == 0


def test_parse_operator_odd_pair_reports_offset():
    text = '{"P": [[1,0],[2]], "Q": [[1,0]]}'
    with pytest.raises(ParseError) as info:
        parse_operator(text)
    assert info.value.offset == text.index("[2]")


def test_parse_operator_invalid_json_offset():
    with pytest.raises(ParseError) as info:
        parse_operator('{"P": [[1,0]], "Q": }')
    assert info.value.offset == 20


def test_parse_operator_both_zero():
    with pytest.raises(BothZero):
        parse_operator('{"P": [[0,0]], "Q": []}')


def test_parse_short_form_and_strings():
    P, Q = parse_operator("P=z^2+1; Q=(1+6i)z")
    assert np.array_equal(P.coeffs, [1, 0, 1]) and np.array_equal(Q.coeffs, [0, 1 + 6j])
    P2, Q2 = parse_operator('{"P": "z^2+1", "Q": "(1+6i)z"}')
    assert P2 == P and Q2 == Q


@pytest.mark.parametrize("text, coeffs", [
    ("2(z-1)^3", [-2, 6, -6, 2]),
    ("-z", [0, -1]),
    ("z z - 3i", [-3j, 0, 1]),
    ("(z^2)^2 / 1", None),
])
def test_expression_grammar(text, coeffs):
    if coeffs is None:
        with pytest.raises(ParseError):
            parse_expression(text)
    else:
        assert np.allclose(parse_expression(text).coeffs, coeffs)


def test_expression_error_offset_is_shifted_by_base():
    with pytest.raises(ParseError) as info:
        parse_operator("P=z^+; Q=1")
    assert info.value.offset == 4


@given(st.lists(st.tuples(st.integers(-9, 9), st.integers(-9, 9)), min_size=1, max_size=6))
def test_expression_round_trip(cs):
    text = " + ".join(f"({a}{b:+d}i)*z^{k}" for k, (a, b) in enumerate(cs))
    got = parse_expression(text).coeffs
    want = np.array([complex(a, b) for a, b in cs])
    want = want[:np.max(np.nonzero(want)[0]) + 1] if np.any(want) else want[:0]
    assert np.array_equal(got, want)


def test_analyze_trivial_plane(capsys):
    assert main(["analyze", "P=1; Q=z^2"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["regime"] == "TRIVIAL_PLANE" and out["why"]


def test_exit_code_parse(capsys):
    assert main(["analyze", '{"P": [[1,0],[2]], "Q": [[1,0]]}']) == 2
    assert "ParseError" in capsys.readouterr().err


def test_exit_code_precondition(capsys):
    assert main(["oracle", "residue", "--operator", "P=1; Q=z^2"]) == 3


def test_exit_code_verification_failure(monkeypatch, capsys):
    failing = lambda: acceptance.CriterionResult(10, "forced", False)
    monkeypatch.setitem(acceptance.CRITERIA, 10, failing)
    assert main(["verify", "--criteria", "10"]) == 5
    assert "criterion 10 FAIL" in capsys.readouterr().out


def test_outputs_are_deterministic(tmp_path):
    args = ["minset", UNITDISK, "--window=-1.6,-1.6,1.6,1.6", "--grid-h", "0.1", "--budget", "1500"]
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    names = sorted(os.listdir(a))
    assert names == ["minset.json", "minset.svg", "minset_boundary.csv", "minset_grid.csv"]
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes()
    svg = (a / "minset.svg").read_text()
    assert svg.startswith("<svg") or svg.startswith("<?xml")
    assert "legend" in svg
    diag = json.loads((a / "minset.json").read_text())
    assert diag["hausdorff_to_unit_circle"] <= 0.2


def test_format_filter(tmp_path):
    assert main(["curves", "P=z^2+1; Q=z", "--window=-3,-3,3,3", "--format", "json",
                 "--out", str(tmp_path)]) == 0
    assert os.listdir(tmp_path) == ["curves.json"]


def test_trail_csv(capsys):
    assert main(["trail", "P=z+1; Q=z(z-1)", "--u", "3", "--t-max", "10"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "u_re,u_im,branch,t,x,y"
    first = lines[1].split(",")
    assert float(first[3]) == 0.0 and float(first[4]) == 3.0


def test_oracle_writes_csv_and_json(tmp_path):
    assert main(["oracle", "hyperbola", "--samples", "50", "--out", str(tmp_path)]) == 0
    info = json.loads((tmp_path / "oracle.json").read_text())
    assert {c["name"] for c in info["curves"]} >= {"f1_global", "f2_local", "f3_global"}


def test_run_without_out_prints_primary():
    buf = io.StringIO()
    cfg = cli.RunConfig(command="analyze", operator=UNITDISK)
    assert cli.run(cfg, buf) == 0
    assert json.loads(buf.getvalue())["bounds"]
