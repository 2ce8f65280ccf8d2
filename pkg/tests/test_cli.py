from __future__ import annotations

import json

import pytest

from pentalab.cli import EXIT_CONTRACT, EXIT_NUMERICAL, EXIT_OK, EXIT_STRUCTURAL, EXIT_USAGE, main
from pentalab.pentagram import pentagram_map
from pentalab.polygon import TwistedCoords


def _run(tmp_path, *argv):
    return main(list(argv) + ["--out", str(tmp_path)])


def _json(path):
    return json.loads(path.read_text())


def test_gen_is_byte_identical(tmp_path):
    argv = ["gen", "--d", "3", "--n", "7", "--seed", "1"]
    assert _run(tmp_path, *argv) == EXIT_OK
    first = (tmp_path / "polygon.json").read_bytes()
    assert _run(tmp_path, *argv) == EXIT_OK
    assert (tmp_path / "polygon.json").read_bytes() == first
    assert _run(tmp_path, "gen", "--d", "3", "--n", "7", "--seed", "2") == EXIT_OK
    assert (tmp_path / "polygon.json").read_bytes() != first


def test_float_map_is_deterministic(tmp_path):
    argv = ["map", "--d", "4", "--n", "7", "--backend", "float", "--precision", "80"]
    assert _run(tmp_path, *argv) == EXIT_OK
    first = (tmp_path / "map.json").read_bytes()
    assert _run(tmp_path, *argv) == EXIT_OK
    assert (tmp_path / "map.json").read_bytes() == first


def test_help_and_usage_errors(capsys):
    assert main(["--help"]) == EXIT_OK
    assert main(["gen", "--bogus"]) == EXIT_USAGE
    assert main(["no-such-command"]) == EXIT_USAGE
    assert main([]) == EXIT_USAGE
    assert "usage" in capsys.readouterr().err


def test_contract_violations(tmp_path, monkeypatch):
    assert _run(tmp_path, "gen", "--d", "3", "--n", "6") == EXIT_CONTRACT  # gcd(6, 4) = 2
    assert _run(tmp_path, "gen", "--d", "3") == EXIT_CONTRACT
    assert _run(tmp_path, "gen", "--d", "3", "--n", "5", "--backend", "float", "--precision", "40") == EXIT_CONTRACT
    monkeypatch.setenv("PENTALAB_PRECISION", "lots")
    assert _run(tmp_path, "gen", "--d", "3", "--n", "5", "--backend", "float") == EXIT_CONTRACT


def test_numerical_failure_exit_code(tmp_path):
    # a lift whose image has three collinear consecutive vertices
    poly = {"backend": "rational", "d": 2, "n": 5, "precision": None,
            "coeffs": [["0", "0"]] + [["1", "-1"]] * 4}
    src = tmp_path / "degenerate.json"
    src.write_text(json.dumps({"polygon": poly}))
    assert _run(tmp_path, "map", "--input", str(src)) == EXIT_NUMERICAL


def test_mutated_lax_sign_exits_structural(tmp_path, monkeypatch):
    import pentalab.lax as lax_mod

    good = lax_mod.lax_matrix

    def flipped(c, j, stated=False):
        L = good(c, j, stated)
        rows = [list(r) for r in L.rows]
        rows[0][1] = -rows[0][1]
        return type(L)(rows, L.backend)

    monkeypatch.setattr(lax_mod, "lax_matrix", flipped)
    assert _run(tmp_path, "conserve", "--d", "3", "--n", "5", "--steps", "2") == EXIT_STRUCTURAL


def test_conserve_rational_is_all_zero(tmp_path):
    assert _run(tmp_path, "conserve", "--d", "3", "--n", "5", "--steps", "10", "--backend", "rational") == EXIT_OK
    lines = (tmp_path / "conserve.csv").read_text().splitlines()
    assert lines[0].startswith("# producer=lax.conservation_report config=")
    assert lines[1] == "step,coeff_id,rel_drift"
    assert len(lines) > 2
    assert all(float(line.rsplit(",", 1)[1]) == 0 for line in lines[2:])
    assert _json(tmp_path / "conserve.json")["ok"] is True


def test_config_echo_and_environment_precision(tmp_path, monkeypatch):
    monkeypatch.setenv("PENTALAB_PRECISION", "80")
    assert _run(tmp_path, "gen", "--d", "2", "--n", "5", "--backend", "float", "--seed", "9",
                "--tol", "drift=1e-20") == EXIT_OK
    doc = _json(tmp_path / "polygon.json")
    assert doc["config"] == {"backend": "float", "precision": 80, "seed": 9,
                             "tolerances": {"drift": 1e-20}, "out": str(tmp_path)}
    assert doc["producer"] == "polygon.random_polygon"
    assert doc["polygon"]["precision"] == 80
    assert _run(tmp_path, "gen", "--d", "2", "--n", "5", "--backend", "float", "--precision", "64") == EXIT_OK
    assert _json(tmp_path / "polygon.json")["config"]["precision"] == 64


def test_input_round_trip(tmp_path):
    assert _run(tmp_path, "gen", "--d", "3", "--n", "7", "--seed", "4") == EXIT_OK
    src = tmp_path / "polygon.json"
    c = TwistedCoords.from_json(_json(src)["polygon"])
    assert _run(tmp_path, "map", "--input", str(src)) == EXIT_OK
    doc = _json(tmp_path / "map.json")
    assert TwistedCoords.from_json(doc["source"]) == c
    assert TwistedCoords.from_json(doc["polygon"]) == pentagram_map(c)


@pytest.mark.parametrize("cmd", [
    ["spectral", "--d", "3", "--n", "5"],
    ["orbit", "--d", "2", "--n", "5", "--steps", "3"],
    ["scaling-check", "--d", "3", "--n", "5", "--samples", "2"],
    ["closed-check", "--d", "3", "--n", "5"],
    ["xcheck-monodromy", "--d", "3", "--n", "5", "--backend", "float", "--precision", "256"],
    ["genus", "--d", "3", "--n", "7"],
    ["rank", "--d", "3", "--n", "5"],
    ["kdv-evolve", "--d", "2", "--steps", "5", "--store-every", "5"],
    ["kdv-shift-check", "--d", "2", "--steps", "5"],
])
def test_subcommands_succeed(tmp_path, cmd):
    assert _run(tmp_path, *cmd) == EXIT_OK
    written = list(tmp_path.glob("*.json"))
    assert written and all("producer" in _json(p) for p in written)


def test_climit_slope(tmp_path):
    assert _run(tmp_path, "climit", "--d", "2", "--eps", "0.08,0.04,0.02") == EXIT_OK
    doc = _json(tmp_path / "climit.json")
    assert abs(doc["slope"] - 2.0) <= 0.1
    assert (tmp_path / "climit.csv").read_text().splitlines()[1] == "eps,residual,alpha"


def test_verify_quick_echoes_config(tmp_path, capsys):
    assert _run(tmp_path, "verify") == EXIT_OK
    out = capsys.readouterr().out
    assert out.startswith("config: ")
    assert "FAIL" not in out
