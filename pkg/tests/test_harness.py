import csv
import io
import json
from dataclasses import replace

import numpy as np
import pytest

from hybridgp.control import ControlConfig
from hybridgp.errors import InputError
from hybridgp.forecast import ForecastConfig
from hybridgp.harness import (
    CONTROLLERS,
    METRIC_FIELDS,
    RUN_COLUMNS,
    SimConfig,
    compare_controllers,
    compute_metrics,
    controller_name,
    metrics_json,
    run_closed_loop,
    step_objective,
    sweep_training_horizon,
)
from hybridgp.scenario import ScenarioSpec


def short(kind="SN", controller="Hybrid", duration=20.0, **kw):
    return SimConfig(scenario=ScenarioSpec(kind, duration=duration), controller=controller, **kw)


def read_csv(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_controller_names():
    assert controller_name("hybridff") == "Hybridff"
    assert controller_name("fixed_range") == "FixedRange"
    with pytest.raises(InputError):
        controller_name("bogus")


def test_config_consistency_checks():
    with pytest.raises(InputError):
        SimConfig(control=ControlConfig(Np=10))
    with pytest.raises(InputError):
        SimConfig(control=ControlConfig(h=1.0))
    with pytest.raises(InputError):
        SimConfig(fixed_range=(70.0, 0.0))


def test_forgetting_only_for_ff_variants():
    assert short(controller="KC").forecast_config().forgetting is None
    assert short(controller="KCff").forecast_config().forgetting is not None
    assert short(controller="Hybridff").forecast_config().forgetting.kappa == 1.0


def test_config_dict_round_trip():
    cfg = short(controller="KCff", seed=4)
    back = SimConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert back == cfg


def test_config_rejects_unknown_keys():
    with pytest.raises(InputError):
        SimConfig.from_dict({"scenario": {"kind": "SN", "nope": 1}})
    with pytest.raises(InputError):
        SimConfig.from_dict({"colour": "red"})


def test_step_objective_example():
    cfg = ControlConfig()
    J = step_objective([1.0, 2.0], [54.0, 60.0], cfg)
    np.testing.assert_allclose(J, [1.0 + 10.0 * 1.0 * 2.0, 4.0])


def test_compute_metrics_example():
    m = compute_metrics([54.0, 56.0], [1.0, 3.0], [21.0, 9.0], ["NAR", "KC"], 2.0, 55.0)
    assert m.avg_objective == 15.0
    assert m.violation_degree_seconds == 2.0
    assert m.total_heater_energy == 8.0
    assert m.switch_fraction_NAR == 0.5
    assert m.peak_violation == 1.0


def test_perfect_has_zero_width_envelope():
    rec = run_closed_loop(short(controller="Perfect", duration=40.0))
    np.testing.assert_array_equal(rec.env_lo, rec.env_hi)
    np.testing.assert_array_equal(rec.env_hi, rec.mdot_true)


def test_fixed_range_envelope():
    rec = run_closed_loop(short(controller="FixedRange", duration=40.0))
    assert np.all(rec.env_lo == 0.0) and np.all(rec.env_hi == 70.0)


@pytest.mark.parametrize("controller", ["KC", "NAR", "Hybrid"])
def test_run_record_shape_and_metrics(controller):
    cfg = short(controller=controller, duration=12.0)
    rec = run_closed_loop(cfg)
    n = cfg.n_steps
    assert all(len(getattr(rec, c)) == n for c in ("t", "T", "u", "mdot_true", "env_lo"))
    assert np.all((rec.u >= 0) & (rec.u <= 10))
    assert all(v >= 0 for v in rec.metrics.to_dict().values())
    if controller == "Hybrid":
        assert set(rec.switch) <= {"KC", "NAR"} and all(rec.switch)
    else:
        assert not any(rec.switch)


def test_metrics_recomputed_from_csv():
    cfg = short(controller="Hybrid", duration=20.0)
    rec = run_closed_loop(cfg)
    rows = read_csv(rec.to_csv())
    assert list(rows[0]) == list(RUN_COLUMNS)
    T = [float(r["T"]) for r in rows]
    u = [float(r["u"]) for r in rows]
    J = step_objective(u, T, cfg.control)
    np.testing.assert_array_equal(J, [float(r["J_step"]) for r in rows])
    m = compute_metrics(T, u, J, [r["switch"] for r in rows], cfg.control.h, cfg.control.x_min)
    assert m == rec.metrics


def test_metrics_json_keys():
    rec = run_closed_loop(short(controller="FixedRange", duration=6.0))
    assert tuple(json.loads(metrics_json(rec.metrics))) == METRIC_FIELDS


def test_replay_is_byte_identical():
    cfg = short(kind="RW", controller="Hybridff", duration=16.0, seed=3)
    assert run_closed_loop(cfg).to_csv() == run_closed_loop(cfg).to_csv()


def test_timing_column_opt_in():
    cfg = short(controller="FixedRange", duration=6.0, record_timing=True)
    rows = read_csv(run_closed_loop(cfg).to_csv())
    assert all(float(r["solve_ms"]) >= 0 for r in rows)
    rows = read_csv(run_closed_loop(replace(cfg, record_timing=False)).to_csv())
    assert all(r["solve_ms"] == "" for r in rows)


def test_forecast_failure_falls_back_to_fixed_range(monkeypatch):
    import hybridgp.harness as harness
    from hybridgp.errors import ForecastError

    def broken(*args, **kwargs):
        raise ForecastError("boom")

    monkeypatch.setattr(harness, "nar_forecast", broken)
    rec = run_closed_loop(short(controller="NAR", duration=6.0))
    assert np.all(rec.env_hi == 70.0)
    assert len(rec.events) == 3


def test_solver_failure_uses_max_heat(monkeypatch):
    import hybridgp.harness as harness
    from hybridgp.errors import SolverError

    def broken(*args, **kwargs):
        raise SolverError("no finite probe")

    monkeypatch.setattr(harness, "solve_rempc", broken)
    rec = run_closed_loop(short(controller="FixedRange", duration=6.0))
    assert np.all(rec.u == 10.0)


def test_compare_one_row_per_controller():
    base = short(duration=8.0)
    lineup = ["Perfect", "FixedRange", "KC"]
    table = compare_controllers(base, lineup, seeds=[0, 1])
    assert [r["controller"] for r in table.rows] == lineup
    assert table.rows[0]["normalized_objective"] == 1.0
    assert all(r["status"] == "ok" and r["n_runs"] == 2 for r in table.rows)
    header = table.to_csv().splitlines()[0].split(",")
    assert "avg_objective_mean" in header and "avg_objective_sd" in header


def test_compare_marks_failed_runs(monkeypatch):
    import hybridgp.harness as harness

    real = harness.run_closed_loop

    def flaky(cfg):
        if cfg.controller == "KC":
            raise RuntimeError("forced")
        return real(cfg)

    monkeypatch.setattr(harness, "run_closed_loop", flaky)
    table = compare_controllers(short(duration=4.0), ["Perfect", "KC"], seeds=[0])
    status = {r["controller"]: r["status"] for r in table.rows}
    assert status == {"Perfect": "ok", "KC": "error"}
    assert ("KC", 0) in table.errors


def test_compare_needs_seeds():
    with pytest.raises(InputError):
        compare_controllers(short(), ["Perfect"], seeds=[])


def test_sweep_rows_and_factor_one_matches_base():
    base = short(kind="CM", duration=8.0)
    table = sweep_training_horizon(base, factors=(1, 2), seeds=[0])
    assert len(table.rows) == 2 * 2
    assert {(r["controller"], r["factor"]) for r in table.rows} == {
        ("Hybrid", 1), ("Hybrid", 2), ("Hybridff", 1), ("Hybridff", 2)}
    direct = run_closed_loop(replace(base, controller="Hybrid")).metrics
    assert table.runs[("Hybrid", 1, 0)] == direct
    assert [r["normalized_objective"] for r in table.rows if r["factor"] == 1] == [1.0, 1.0]


def test_sweep_rejects_bad_factor():
    with pytest.raises(InputError):
        sweep_training_horizon(short(), factors=(0, 1))


def test_all_controllers_run():
    for c in CONTROLLERS:
        rec = run_closed_loop(short(kind="LS", controller=c, duration=4.0))
        assert np.isfinite(rec.metrics.avg_objective)
