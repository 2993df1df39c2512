import csv
import json
import math

import numpy as np
import pytest

from spectrocnot import cli
from spectrocnot.cli import main, parse_time_list
from spectrocnot.spectrum import AssignmentAmbiguous

DEVICE = {"epsilon_ghz": 6.715, "omega_ghz": 6.5, "delta_ghz": 0.2, "g_ghz": 0.115}


def write(tmp_path, payload, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(v) for v in r] for r in rows[1:]])


def idle_schedule(eps=6.9, theta=0.0, dt=0.01):
    return {"t_gate_ns": 10.0, "t_ramp_ns": 2.0, "epsilon_park_ghz": eps, "epsilon_drive_ghz": eps,
            "theta": theta, "sigma_frac": 1 / 6, "omega_c_ghz": eps, "scale3": 1.0, "scale5": 1.0,
            "scale_det": 1.0, "theta_pre": 0.0, "theta_post": 0.0, "dt_ns": dt}


def test_spectrum_resonance_gap(tmp_path):
    out = tmp_path / "levels.csv"
    cfg = write(tmp_path, {"device": DEVICE,
                           "spectrum": {"epsilon_grid_ghz": {"start": 6.4, "stop": 6.6, "num": 201}}})
    assert main(["spectrum", "--config", cfg, "--out", str(out)]) == 0
    header, data = read_csv(out)
    assert header == ["epsilon_ghz", "E00", "E01", "E10", "E02", "E11", "E20", "E21"]
    gap = data[:, 3] - data[:, 2]
    i = np.argmin(gap)
    assert data[i, 0] == pytest.approx(6.5, abs=1e-9)
    assert gap[i] == pytest.approx(0.230, rel=1e-3)


def test_spectrum_single_point(tmp_path):
    out = tmp_path / "one.csv"
    cfg = write(tmp_path, {"device": DEVICE, "spectrum": {"epsilon_grid_ghz": [6.8]}})
    assert main(["spectrum", "--config", cfg, "--out", str(out)]) == 0
    _, data = read_csv(out)
    assert data.shape == (1, 8)


def test_spectrum_empty_grid(tmp_path):
    cfg = write(tmp_path, {"device": DEVICE, "spectrum": {"epsilon_grid_ghz": []}})
    assert main(["spectrum", "--config", cfg, "--out", str(tmp_path / "x.csv")]) == 2


def test_spectrum_labelling_failure(tmp_path, monkeypatch, caplog):
    def boom(*a, **k):
        raise AssignmentAmbiguous("labels undetermined at epsilon=6.5 GHz")

    monkeypatch.setattr(cli, "spectrum_curve", boom)
    cfg = write(tmp_path, {"device": DEVICE, "spectrum": {"epsilon_grid_ghz": [6.5]}})
    assert main(["spectrum", "--config", cfg, "--out", str(tmp_path / "x.csv")]) == 3
    assert "epsilon=6.5" in caplog.text


def test_missing_device_names_key(tmp_path, caplog):
    cfg = write(tmp_path, {"spectrum": {"epsilon_grid_ghz": [6.8]}})
    assert main(["spectrum", "--config", cfg]) == 2
    assert "device" in caplog.text


@pytest.mark.parametrize("payload", [
    {"device": {**DEVICE, "g_mhz": 115}, "spectrum": {"epsilon_grid_ghz": [6.8]}},
    {"device": DEVICE, "spectrum": {"epsilon_grid_ghz": [6.8]}, "extra": 1},
    {"device": DEVICE, "spectrum": {"epsilon_grid": [6.8]}},
    {"device": DEVICE, "spectrum": {"epsilon_grid_ghz": {"start": 6.0, "stop": 7.0}}},
])
def test_strict_parsing(tmp_path, payload):
    assert main(["spectrum", "--config", write(tmp_path, payload)]) == 2


def test_unreadable_config(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["spectrum", "--config", str(bad)]) == 2
    assert main(["spectrum", "--config", str(tmp_path / "missing.json")]) == 2


def test_sensitivity_uncoupled_row(tmp_path):
    out = tmp_path / "sens.csv"
    cfg = write(tmp_path, {"device": DEVICE,
                           "sensitivity": {"coupling_grid_ghz": [0.0, 0.115], "detuning_ghz": 0.215}})
    assert main(["sensitivity", "--config", cfg, "--out", str(out)]) == 0
    header, data = read_csv(out)
    assert header == ["detuning_ghz", "coupling_ghz", "s_c_mhz", "s_l_mhz"]
    assert data[0, 2] == pytest.approx(0.0, abs=1e-9)
    assert data[0, 3] == pytest.approx(200.0, abs=1e-6)
    assert np.all(data[:, 0] == 0.215)


def test_sensitivity_detuning_peak(tmp_path):
    out = tmp_path / "sens.csv"
    cfg = write(tmp_path, {"device": DEVICE,
                           "sensitivity": {"detuning_grid_ghz": {"start": -0.5, "stop": 0.5, "num": 101}}})
    assert main(["sensitivity", "--config", cfg, "--out", str(out)]) == 0
    _, data = read_csv(out)
    assert 0.08 <= data[np.argmax(data[:, 2]), 0] <= 0.12


def test_floats_keep_full_precision(tmp_path):
    out = tmp_path / "sens.csv"
    cfg = write(tmp_path, {"device": DEVICE, "sensitivity": {"detuning_grid_ghz": [0.2]}})
    main(["sensitivity", "--config", cfg, "--out", str(out)])
    from spectrocnot.model import DeviceParams
    from spectrocnot.spectrum import sensitivities

    expected = sensitivities(DeviceParams.from_dict(DEVICE).with_(epsilon=6.7)).s_c * 1e3
    _, data = read_csv(out)
    assert data[0, 2] == pytest.approx(expected, rel=1e-12)


def test_simulate_identity_case(tmp_path):
    out = tmp_path / "sim.json"
    cfg = write(tmp_path, {"device": {**DEVICE, "g_ghz": 0.0}, "schedule": idle_schedule(),
                           "simulate": {"populations": ["00"], "stride": 50}})
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["fidelity"] == pytest.approx(0.4, abs=1e-9)
    u = np.array(report["u_comp"])
    assert u.shape == (4, 4, 2)
    assert np.allclose(u[..., 0] + 1j * u[..., 1], np.eye(4), atol=1e-9)
    header, eps = read_csv(tmp_path / "sim_epsilon.csv")
    assert header == ["t_ns", "epsilon_ghz"]
    assert np.allclose(eps[:, 1], 6.9)
    header, pops = read_csv(tmp_path / "sim_populations_00.csv")
    assert header == ["t_ns", "p00", "p01", "p10", "p11", "leak"]
    assert np.allclose(pops[:, 1], 1.0)


def test_simulate_trapezoid(tmp_path):
    out = tmp_path / "sim.json"
    sched = {**idle_schedule(), "epsilon_park_ghz": 7.5, "epsilon_drive_ghz": 6.7}
    cfg = write(tmp_path, {"device": DEVICE, "schedule": sched})
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    _, eps = read_csv(tmp_path / "sim_epsilon.csv")
    assert eps[0, 1] == pytest.approx(7.5) and eps[-1, 1] == pytest.approx(7.5)
    plateau = (eps[:, 0] >= 2.0) & (eps[:, 0] <= 8.0)
    assert np.allclose(eps[plateau, 1], 6.7)
    assert eps[eps[:, 0] == 1.0, 1] == pytest.approx(7.1)


def test_simulate_convergence_guard(tmp_path):
    sched = {**idle_schedule(theta=math.pi, dt=0.04), "epsilon_park_ghz": 7.5,
             "epsilon_drive_ghz": 6.72, "omega_c_ghz": 6.69}
    cfg = write(tmp_path, {"device": DEVICE, "schedule": sched})
    args = ["simulate", "--config", cfg, "--out", str(tmp_path / "s.json")]
    assert main(args + ["--check-convergence"]) == 4
    assert main(args + ["--check-convergence", "--dt-ns", "0.005"]) == 0
    assert main(args + ["--dt-ns", "-1"]) == 2


SMALL_SEARCH = {"budget": 3, "restarts": 0, "seed": 1}
SMALL_CONTEXT = {"dt_search_ns": 0.02, "dt_final_ns": 0.01}


def test_optimize_record_feeds_simulate(tmp_path):
    rec_path = tmp_path / "record.json"
    cfg = write(tmp_path, {"device": DEVICE, "search": SMALL_SEARCH, "context": SMALL_CONTEXT})
    assert main(["optimize", "--config", cfg, "--t-gate-ns", "30", "--out", str(rec_path)]) == 0
    record = json.loads(rec_path.read_text())
    assert record["result"]["evaluations"] == 3
    sim = tmp_path / "sim.json"
    assert main(["simulate", "--config", str(rec_path), "--out", str(sim)]) == 0
    assert json.loads(sim.read_text())["fidelity"] == pytest.approx(record["result"]["fidelity"], abs=1e-9)


def test_optimize_is_deterministic(tmp_path):
    cfg = write(tmp_path, {"device": DEVICE, "search": SMALL_SEARCH, "context": SMALL_CONTEXT})
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for out in (a, b):
        assert main(["optimize", "--config", cfg, "--t-gate-ns", "30", "--out", str(out)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_optimize_requires_gate_time(tmp_path):
    cfg = write(tmp_path, {"device": DEVICE})
    assert main(["optimize", "--config", cfg]) == 2


def test_optimize_rejects_bad_search(tmp_path):
    cfg = write(tmp_path, {"device": DEVICE, "search": {"x0": [0.1, 0.2]}})
    assert main(["optimize", "--config", cfg, "--t-gate-ns", "30"]) == 2


def test_curve_rows(tmp_path):
    out = tmp_path / "curve.csv"
    cfg = write(tmp_path, {"device": DEVICE, "search": {"budget": 1, "restarts": 0},
                           "context": SMALL_CONTEXT})
    assert main(["curve", "--config", cfg, "--t-gate-list", "30:32:2", "--out", str(out)]) == 0
    header, data = read_csv(out)
    assert header == ["t_gate_ns", "t_ramp_ns", "g_mhz", "detuning_mhz", "fidelity_pct"]
    assert list(data[:, 0]) == [30.0, 32.0]
    assert np.all((data[:, 4] >= 0) & (data[:, 4] <= 100))
    records = json.loads((tmp_path / "curve_records.json").read_text())["records"]
    assert len(records) == 2


def test_time_list_parsing():
    assert parse_time_list("33:51:2") == [33.0 + 2 * k for k in range(10)]
    assert parse_time_list("45") == [45.0]
    assert parse_time_list("41,45") == [41.0, 45.0]
    with pytest.raises(cli.ConfigError):
        parse_time_list("51:33:2")
