import csv
import io
import json
import math

import pytest

from neutralgas import NonConvergence, self_energy_constant, KernelConfig
from neutralgas import cli

CANONICAL = {
    "species": [{"charge": 1, "activity": 0.5}, {"charge": -1, "activity": 0.5}],
    "geometry": {"kind": "lattice_torus", "dimension": 1, "side": 1.0, "spacing": 0.25},
    "ensemble": {"beta": 0.2, "elementary_charge": 1.0},
    "kernel": {"t": 0.0, "u0": "zero"},
    "tolerances": {"partition": 1e-12, "modes": 1e-12},
    "work_budget": 100000000,
}


def run(tmp_path, doc, *args, command="compute"):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps(doc))
    out = tmp_path / "out.txt"
    code = cli.main([command, str(cfg), "-o", str(out), *args])
    return code, out.read_text() if out.exists() else ""


def test_compute_symmetric(tmp_path):
    code, text = run(tmp_path, CANONICAL)
    assert code == 0
    doc = json.loads(text)
    assert doc["tilt"]["c0"] == 0.0
    assert doc["xi0_ideal"]["value"] == pytest.approx(doc["xi0_ideal_series"]["value"], rel=1e-13)
    assert doc["eta_hat"]["0"] == 1.0
    assert doc["xi2"]["xi2"] <= doc["xi0_ideal"]["value"]
    assert "debye_huckel" not in doc


def test_compute_three_dimensional_self_energy(tmp_path):
    doc = dict(CANONICAL, geometry={"kind": "continuum_torus", "dimension": 3, "side": 1.0},
               kernel={"t": 0.2, "u0": "infinite_volume"}, debye_huckel=True)
    code, text = run(tmp_path, doc)
    assert code == 0
    rep = json.loads(text)
    assert rep["u0"] == self_energy_constant(KernelConfig(0.2, "infinite_volume"), 3)
    assert rep["debye_huckel"]["regularized_energy"]["error"] < 1e-8


def test_floats_carry_seventeen_digits(tmp_path):
    _, text = run(tmp_path, CANONICAL)
    assert '"beta": 0.20000000000000001' in text
    assert '"elementary_charge": 1.0' in text


def test_reports_are_reproducible(tmp_path):
    assert run(tmp_path, CANONICAL) == run(tmp_path, CANONICAL)


@pytest.mark.parametrize("patch", [
    {"species": [{"charge": 1}]},
    {"species": "plus-minus"},
    {"species": [{"charge": 1, "activity": 1.0}]},
    {"geometry": {"kind": "lattice_torus", "dimension": 1, "side": 1.0, "spacing": 0.3}},
    {"kernel": {"t": 0.0, "u0": "infinite_volume"}},
    {"tolerances": {"partition": -1.0}},
    {"ensemble": {"beta": "hot"}},
])
def test_config_errors_exit_two(tmp_path, patch):
    code, text = run(tmp_path, dict(CANONICAL, **patch))
    assert code == 2
    doc = json.loads(text)
    assert doc["status"] == "error" and doc["exit_code"] == 2


def test_unreadable_config_exits_two(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["compute", str(bad), "-o", str(tmp_path / "o.json")]) == 2
    assert cli.main(["compute", str(tmp_path / "missing.json"), "-o", str(tmp_path / "o.json")]) == 2


def test_numerical_failure_exits_three(tmp_path, monkeypatch):
    def boom(cfg):
        raise NonConvergence("forced")
    monkeypatch.setattr(cli, "compute_report", boom)
    code, text = run(tmp_path, CANONICAL)
    assert code == 3
    assert json.loads(text)["error"]["type"] == "NonConvergence"


def test_verify_canonical_passes(tmp_path):
    code, text = run(tmp_path, CANONICAL, command="verify")
    assert code == 0
    doc = json.loads(text)
    assert doc["pass"] is True and doc["slack"] > 0
    assert doc["xi_exact"]["tail_bound"] < 1e-12


def test_verify_zero_coupling(tmp_path):
    code, text = run(tmp_path, dict(CANONICAL, ensemble={"beta": 0.0}), command="verify")
    assert code == 0
    assert abs(json.loads(text)["relative_slack"]) < 1e-11


def test_verify_oversize_lattice_exits_four(tmp_path):
    doc = dict(CANONICAL, geometry={"kind": "lattice_torus", "dimension": 2, "side": 1.0, "spacing": 0.125},
               kernel={"t": 0.1, "u0": "zero"}, work_budget=10**6)
    code, text = run(tmp_path, doc, command="verify")
    assert code == 4
    assert json.loads(text)["error"]["type"] == "WorkBudgetExceeded"


def read_csv(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_sweep_activity_scale(tmp_path):
    doc = dict(CANONICAL, geometry={"kind": "continuum_torus", "dimension": 1, "side": 1.0},
               species=[{"charge": 1, "activity": 1.0}, {"charge": -1, "activity": 1.0}])
    code, text = run(tmp_path, doc, "--grid", "activity_scale=0.1:10:12:log", command="sweep")
    assert code == 0
    rows = read_csv(text)
    assert len(rows) == 12
    frac = [float(r["density_fraction"]) for r in rows]
    dens = [float(r["density"]) for r in rows]
    assert all(b > a for a, b in zip(frac, frac[1:])) and frac[-1] < 1
    assert all(b > a for a, b in zip(dens, dens[1:]))
    assert all(r["xi_exact"] == "" for r in rows)


def test_sweep_side_approaches_infinite_volume(tmp_path):
    doc = dict(CANONICAL, geometry={"kind": "continuum_torus", "dimension": 1, "side": 1.0}, sweep={"side": [1, 2, 4, 8, 32]})
    code, text = run(tmp_path, doc, command="sweep")
    assert code == 0
    rows = read_csv(text)
    lengths = [float(r["correlation_length"]) for r in rows]
    dens = [float(r["density"]) for r in rows]
    assert all(b < a for a, b in zip(lengths, lengths[1:]))
    assert lengths[-1] > (2 * 0.5 * 0.2) ** -0.5
    assert all(b > a for a, b in zip(dens, dens[1:])) and dens[-1] < 1.0


def test_sweep_two_dimensional_grid_with_exact_column(tmp_path):
    code, text = run(tmp_path, CANONICAL, "--grid", "beta=0.1,0.2", "--grid", "side=1,2", command="sweep")
    assert code == 0
    rows = read_csv(text)
    assert [(r["beta"], r["side"]) for r in rows] == [("0.10000000000000001", "1.0"), ("0.10000000000000001", "2.0"),
                                                      ("0.20000000000000001", "1.0"), ("0.20000000000000001", "2.0")]
    for r in rows:
        assert float(r["xi_exact"]) >= float(r["xi2"])


def test_empty_grid_gives_header_only(tmp_path):
    code, text = run(tmp_path, dict(CANONICAL, sweep={"beta": []}), command="sweep")
    assert code == 0
    assert text.strip() == "beta," + ",".join(cli.SWEEP_COLUMNS)


def test_sweep_rejects_unknown_variable(tmp_path):
    code, _ = run(tmp_path, CANONICAL, "--grid", "temperature=1,2", command="sweep")
    assert code == 2


def test_module_entry_point(tmp_path):
    import subprocess
    import sys
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(CANONICAL))
    proc = subprocess.run([sys.executable, "-m", "neutralgas", "verify", str(cfg)], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["pass"] is True
