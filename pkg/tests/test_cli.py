import csv
import io
import json
import os

import numpy as np
import pytest

from kdvcascade import cli, config
from kdvcascade.config import ConfigError, Scenario, load_scenario, parse_config
from kdvcascade.errors import PlantError
from kdvcascade.poly2 import Poly2

DEMO_DOC = {
    "plant": {"A": [[0, 1], [1, 0]], "B": [[0], [1]], "K": [[-3, -4]], "l": 1.0, "lambda": 1.0},
    "sim": {"N": 64, "dt": 0.002, "T": 4.0, "record_every": 5},
    "initial": {"X0": [1.0, -0.5], "u0": {"target_mode": {"amplitude": 1.0}}},
}
# large gains need a finer grid for the round trip of the initial data
FAST_DOC = {**DEMO_DOC, "plant": {**DEMO_DOC["plant"], "K": [[-181, -27]]},
            "sim": {"N": 128, "dt": 0.001, "T": 4.0, "record_every": 10}}


def write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def with_plant(**kw):
    return {**DEMO_DOC, "plant": {**DEMO_DOC["plant"], **kw}}


def test_parse_demo(tmp_path):
    scn = parse_config(write(tmp_path, DEMO_DOC))
    ev = np.sort(np.linalg.eigvals(scn.plant.closed_loop).real)
    np.testing.assert_allclose(ev, [-2 - np.sqrt(2), -2 + np.sqrt(2)])
    assert scn.sim.N == 64 and scn.D == 40 and scn.envelope_tol == 0.05


@pytest.mark.parametrize("plant,violation", [
    ({"lambda": 0.0}, "lambda_nonpositive"),
    ({"A": [[0, 0], [0, 0]], "B": [[0], [0]]}, "not_controllable"),
    ({"K": [[3, 4]]}, "not_hurwitz"),
])
def test_plant_violations(tmp_path, capsys, plant, violation):
    path = write(tmp_path, with_plant(**plant))
    with pytest.raises(PlantError) as ei:
        parse_config(path)
    assert ei.value.violation == violation
    assert cli.main(["verify", "--config", path]) == cli.EXIT_PLANT
    assert violation in capsys.readouterr().err


def test_missing_file_and_bad_json(tmp_path, capsys):
    assert cli.main(["verify", "--config", str(tmp_path / "nope.json")]) == cli.EXIT_CONFIG
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["verify", "--config", str(bad)]) == cli.EXIT_CONFIG


@pytest.mark.parametrize("doc,field", [
    ({**DEMO_DOC, "sim": {"N": 63}}, "sim.N"),
    (with_plant(l="one"), "plant.l"),
    ({**DEMO_DOC, "initial": {"u0": {"gauss_bump": {"center": 0.5}}}}, "initial.u0"),
    ({"plant": {"A": [[0]]}}, "plant"),
    (with_plant(B=[[0], [1], [2]]), "plant.B"),
])
def test_schema_violations_name_the_field(tmp_path, capsys, doc, field):
    path = write(tmp_path, doc)
    with pytest.raises(ConfigError) as ei:
        parse_config(path)
    assert ei.value.path.startswith(field)
    assert cli.main(["synthesize", "--config", path, "--out", str(tmp_path)]) == 2
    assert field in capsys.readouterr().err


def test_initial_data_kinds(tmp_path):
    base = {**DEMO_DOC, "sim": {"N": 32}}
    scn = load_scenario({**base, "initial": {"u0": "zero"}})
    assert not np.any(scn.initial_u()) and not np.any(scn.initial_X())
    scn = load_scenario({**base, "initial": {"u0": {"gauss_bump": {
        "center": 0.5, "width": 0.1, "amplitude": 2.0}}}})
    assert scn.initial_u()[16] == 2.0
    scn = load_scenario({**base, "initial": {"u0": {"samples": list(range(33))}}})
    assert scn.initial_u()[-1] == 32
    scn = load_scenario({**base, "initial": {"u0": {"samples": [1, 2]}}})
    with pytest.raises(ConfigError):
        scn.initial_u()


def test_tolerance_overlay(monkeypatch):
    monkeypatch.setenv(config.TOLERANCE_ENV, '{"residual": 1e-20}')
    assert config.tolerances()["residual"] == 1e-20
    monkeypatch.setenv(config.TOLERANCE_ENV, '{"bogus": 1}')
    with pytest.raises(ConfigError):
        config.tolerances()
    monkeypatch.setenv(config.TOLERANCE_ENV, "[1")
    with pytest.raises(ConfigError):
        config.tolerances()


def test_synthesize(tmp_path, capsys):
    path = write(tmp_path, DEMO_DOC)
    out = tmp_path / "out"
    assert cli.main(["synthesize", "--config", path, "--out", str(out)]) == 0
    assert sorted(os.listdir(out)) == ["certificate.json", "gains.csv", "kernel_direct.json",
                                       "kernel_inverse.json"]
    d = json.loads((out / "kernel_direct.json").read_text())
    assert d["residuals"]["pde_sup"] <= 1e-6
    rows = list(csv.reader(io.StringIO((out / "gains.csv").read_text())))
    assert rows[0] == ["x", "phi_1", "phi_2", "psi_1", "psi_2"]
    assert rows[-1] == ["1", "-3", "-4", "-3", "-4"]
    cert = json.loads((out / "certificate.json").read_text())
    assert cert["mu"] > 0 and cert["passed"] is None


def test_synthesize_residual_failure(tmp_path, monkeypatch):
    monkeypatch.setenv(config.TOLERANCE_ENV, '{"residual": 1e-20}')
    path = write(tmp_path, DEMO_DOC)
    assert cli.main(["synthesize", "--config", path, "--out", str(tmp_path / "o")]) == 4
    doc = {**DEMO_DOC, "kernel": {"max_iter": 2}}
    assert cli.main(["synthesize", "--config", write(tmp_path, doc), "--out",
                     str(tmp_path / "o")]) == 4


def test_synthesize_and_simulate_are_deterministic(tmp_path):
    path = write(tmp_path, DEMO_DOC)
    for cmd in (["synthesize"], ["simulate", "--which", "both"]):
        a, b = tmp_path / (cmd[0] + "a"), tmp_path / (cmd[0] + "b")
        assert cli.main(cmd + ["--config", path, "--out", str(a)]) == 0
        assert cli.main(cmd + ["--config", path, "--out", str(b)]) == 0
        for f in os.listdir(a):
            assert (a / f).read_bytes() == (b / f).read_bytes()
        assert not [f for f in os.listdir(a) if f.startswith(".tmp")]


def test_simulate_zero_data(tmp_path):
    doc = {**DEMO_DOC, "initial": {"u0": "zero"}}
    out = tmp_path / "o"
    assert cli.main(["simulate", "--config", write(tmp_path, doc), "--out", str(out)]) == 0
    s = json.loads((out / "summary.json").read_text())
    assert s["rates"] == {"closed_loop": None, "target": None}
    assert set(s["rate_fit_skipped"]) == {"closed_loop", "target"}
    data = np.genfromtxt(out / "trace_closed_loop.csv", delimiter=",", names=True)
    for col in ("X_1", "X_2", "U", "H_norm"):
        assert not np.any(data[col])


def test_simulate_both_summary(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["simulate", "--config", write(tmp_path, DEMO_DOC), "--out", str(out)]) == 0
    s = json.loads((out / "summary.json").read_text())
    assert s["c2_effective"] == pytest.approx(s["delta"] / 2)
    assert s["equivalence"]["relative"] < 1e-2
    assert s["certificate"]["passed"] is True
    V = np.genfromtxt(out / "trace_target.csv", delimiter=",", names=True)["V"]
    assert np.all(np.isfinite(V))
    out2 = tmp_path / "o2"
    assert cli.main(["simulate", "--config", write(tmp_path, DEMO_DOC), "--out", str(out2),
                     "--which", "closed_loop"]) == 0
    assert sorted(os.listdir(out2)) == ["summary.json", "trace_closed_loop.csv"]


def test_simulate_divergence_exit_code(tmp_path, monkeypatch):
    scn = load_scenario(DEMO_DOC)
    from kdvcascade.errors import DivergenceError

    def boom(*a, **k):
        raise DivergenceError("state grew", 3)

    monkeypatch.setattr(cli.sim, "simulate_closed_loop", boom)
    assert cli.cmd_simulate(scn, str(tmp_path / "o"), "both") == cli.EXIT_DIVERGED


def test_verify_demo_passes(tmp_path, capsys):
    assert cli.main(["verify", "--config", write(tmp_path, DEMO_DOC)]) == 0
    out = capsys.readouterr().out
    for name in ("direct.pde_sup", "g2_closed_form", "reciprocity", "composition_ratio",
                 "energy_balance_ratio", "envelope_margin"):
        assert name in out
    assert "FAIL" not in out


def test_verify_detects_corrupted_kernels(capsys):
    scn = load_scenario(DEMO_DOC)
    q, h, _ = cli.synthesize(scn)
    c = q.G.coeffs.copy()
    c[2, 1] += 0.5
    bad = type(q)(Poly2(c, q.cap), q.which, q.lam, q.l, q.iterations, q.coeff_delta)
    rows = {r[0]: r for r in cli.run_checks(scn, q=bad, h=h)}
    assert not rows["reciprocity"][3] and not rows["composition_ratio"][3]
    assert cli.cmd_verify(scn, q=bad, h=h) == cli.EXIT_VERIFY
    err = capsys.readouterr().err
    assert "reciprocity" in err and "composition_ratio" in err


def test_verify_lambda_sweep_reports_rates(tmp_path, capsys):
    code = cli.main(["verify", "--config", write(tmp_path, FAST_DOC),
                     "--lambda-sweep", "0.5,1,2"])
    out = capsys.readouterr().out
    line = [l for l in out.splitlines() if l.startswith("rapid_stabilization")][0]
    rates = [float(v.rstrip(",")) for v in line.split()[1:4]]
    assert code == 0 and line.endswith("PASS")
    assert rates[0] < rates[1] < rates[2]


def _sweep(tmp_path, doc, param, values, *extra):
    out = tmp_path / f"sweep_{param}.csv"
    code = cli.main(["sweep", "--config", write(tmp_path, doc), "--param", param,
                     "--values", values, "--out", str(out), *extra])
    return code, list(csv.DictReader(open(out)))


def test_sweep_lambda_rates_increase(tmp_path):
    code, rows = _sweep(tmp_path, FAST_DOC, "lambda", "0.5,1,2", "--workers", "3")
    assert code == 0 and [r["value"] for r in rows] == ["0.5", "1", "2"]
    rates = [float(r["rate"]) for r in rows]
    assert rates[0] < rates[1] < rates[2]
    assert all(r["envelope_pass"] == "true" for r in rows)


def test_sweep_N_rates_agree(tmp_path):
    code, rows = _sweep(tmp_path, DEMO_DOC, "N", "64,128,256")
    rates = np.array([float(r["rate"]) for r in rows])
    assert code == 0 and [r["value"] for r in rows] == ["64", "128", "256"]
    assert np.ptp(rates) <= 0.02 * rates.mean()


def test_sweep_records_failures_in_row(tmp_path):
    code, rows = _sweep(tmp_path, DEMO_DOC, "lambda", "1,-1", "--workers", "1")
    assert code == 0
    assert rows[0]["status"] == "ok" and rows[1]["status"] == "PlantError"
    assert "lambda_nonpositive" in rows[1]["error"]


def test_sweep_empty_values(tmp_path, capsys):
    with pytest.raises(SystemExit) as ei:
        cli.main(["sweep", "--config", write(tmp_path, DEMO_DOC), "--param", "N",
                  "--values", ""])
    assert ei.value.code == 2
    assert cli.cmd_sweep(load_scenario(DEMO_DOC), "N", []) == 2
