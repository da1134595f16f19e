import json
import subprocess
import sys

import pytest

from covar import cli
from covar.cli import DimensionError, SchemaError, build, parse, parse_text, serialize

from conftest import PROBLEMS

MINIMAL = """version: 1
kind: constraint
n: 1
d: 1
scenarios: s1 1
xbar: 0
zbar: 0

node phi
  type: affine
  A: -1 1
end

set K
  type: orthant
  dim: 1
  sign: -1
end
"""


def run_json(*args):
    out = subprocess.run([sys.executable, "-m", "covar.cli", *args, "--json"], capture_output=True, text=True)
    return out.returncode, out.stdout, out.stderr


# ---------------------------------------------------------------------------
# parsing


def test_minimal_file_one_atom():
    pf = parse_text(MINIMAL)
    spec = build(pf)
    assert list(cli.scenario_model(pf).ids) == ["s1"]
    assert spec.n == 1 and spec.d == 1


@pytest.mark.parametrize("path", sorted(PROBLEMS.glob("*.txt")), ids=lambda p: p.stem)
def test_roundtrip(path):
    pf = parse(path)
    again = parse_text(serialize(pf))
    assert serialize(again) == serialize(pf)
    build(again)


def test_row_mismatch_names_field():
    bad = MINIMAL.replace("A: -1 1", "A: -1 1; 2 0 3")
    with pytest.raises((DimensionError, SchemaError)) as exc:
        build(parse_text(bad))
    assert exc.value.field.endswith("A")


def test_shape_mismatch_names_field():
    bad = MINIMAL.replace("A: -1 1", "A: -1 1 4")
    with pytest.raises(DimensionError) as exc:
        build(parse_text(bad))
    assert exc.value.field.endswith("A")


def test_unknown_node_kind_lists_catalog():
    bad = MINIMAL.replace("type: affine", "type: spline")
    with pytest.raises(SchemaError) as exc:
        build(parse_text(bad))
    for kind in cli.NODE_TYPES:
        assert kind in str(exc.value)


def test_unknown_kind_and_field():
    with pytest.raises(SchemaError):
        parse_text(MINIMAL.replace("kind: constraint", "kind: game"))
    with pytest.raises(SchemaError) as exc:
        parse_text(MINIMAL.replace("xbar: 0", "xbar: 0\ncolour: 3"))
    assert exc.value.line == 7


def test_unclosed_block():
    with pytest.raises(SchemaError):
        parse_text(MINIMAL.rsplit("end", 1)[0])


def test_weights_finite_measure():
    # a finite measure need not have unit mass; weights must be positive
    assert cli.scenario_model(parse_text(MINIMAL.replace("scenarios: s1 1", "scenarios: s1 0.3"))).total_mass == 0.3
    with pytest.raises(ValueError):
        build(parse_text(MINIMAL.replace("scenarios: s1 1", "scenarios: s1 -1")))


# ---------------------------------------------------------------------------
# commands and exit codes


@pytest.mark.parametrize("command,path,flags,code,verdict", [
    ("certify", "semilinear_slater.txt", {}, 0, "certified"),
    ("certify", "semilinear_no_slater.txt", {}, 3, "inconclusive"),
    ("certify", "stochastic_vi.txt", {"property": "metric-regularity"}, 3, "inconclusive"),
    ("certify", "stochastic_vi.txt", {"property": "lipschitz"}, 0, "certified"),
    ("certify", "stationary.txt", {}, 0, "certified"),
    ("certify", "truncated_vi.txt", {}, 0, "certified"),
    ("certify", "minimal_constraint.txt", {}, 0, "certified"),
])
def test_certify_exit_codes(command, path, flags, code, verdict):
    report, rc = cli.run(command, PROBLEMS / path, flags)
    assert rc == code and report["exit_code"] == code
    assert report["certificate"]["verdict"] == verdict
    assert report["schema"] == cli.SCHEMA


def test_semilinear_multiplier_identities():
    report, _ = cli.run("certify", PROBLEMS / "semilinear_slater.txt")
    assert report["multipliers"]["max_residual"] <= 1e-8


def test_stationary_bound():
    report, _ = cli.run("certify", PROBLEMS / "stationary.txt")
    assert report["certificate"]["bound"] == pytest.approx(1.5)


def test_estimate_reports_divergence():
    report, rc = cli.run("estimate", PROBLEMS / "stochastic_vi.txt")
    assert rc == 0 and report["oracle"]["empirical_reg"]["diverging"]


def test_check_mpec():
    report, rc = cli.run("check-mpec", PROBLEMS / "mpec_toy.txt")
    assert rc == 0 and report["mpec"]["verdict"] == "satisfied"
    assert report["mpec"]["residual"] <= 1e-8
    with pytest.raises(SchemaError):
        cli.run("check-mpec", PROBLEMS / "stochastic_vi.txt")


def test_flags_override_options():
    report, _ = cli.run("estimate", PROBLEMS / "stochastic_vi.txt", {"grid": 11, "seed": 5})
    assert report["options"]["grid"] == 11 and report["options"]["seed"] == 5
    with pytest.raises(SchemaError):
        cli.run("estimate", PROBLEMS / "stochastic_vi.txt", {"colour": 1})


def test_canonical_numbers():
    out = cli.dumps({"a": -0.0, "b": float("inf"), "c": 1 / 3})
    data = json.loads(out)
    assert data == {"a": 0.0, "b": "inf", "c": pytest.approx(1 / 3, rel=1e-11)}


# ---------------------------------------------------------------------------
# process-level behaviour


def test_main_error_exit(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text(MINIMAL.replace("type: affine", "type: spline"))
    rc, out, err = run_json("certify", str(p))
    assert rc == 1 and "catalog" in err


def test_main_deterministic():
    first = run_json("certify", str(PROBLEMS / "semilinear_slater.txt"))
    second = run_json("certify", str(PROBLEMS / "semilinear_slater.txt"))
    assert first[0] == 0 and first[1] == second[1]
    json.loads(first[1])


def test_main_text_report(capsys):
    rc = cli.main(["certify", str(PROBLEMS / "minimal_constraint.txt")])
    out = capsys.readouterr().out
    assert rc == 0 and "certified" in out and "exit code: 0" in out
