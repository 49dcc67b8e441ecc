import numpy as np
import pytest

from hybridgp.errors import InputError
from hybridgp.scenario import DisturbanceTrace, ScenarioSpec, generate, profile


def test_sn_at_zero():
    tr = generate(ScenarioSpec("SN", measurement_sigma=0.0))
    assert tr.true_values[tr.index_of(0.0)] == pytest.approx(35.0, abs=1e-12)


def test_ls_before_switch_is_constant():
    tr = generate(ScenarioSpec("LS"))
    assert tr.true_values[tr.index_of(100.0)] == 30.0


def test_ls_continuous_at_switch():
    spec = ScenarioSpec("LS")
    left, right = profile(spec, [300.0 - 1e-9, 300.0])
    assert abs(left - right) < 1e-6


def test_cm_piecewise_shape():
    spec = ScenarioSpec("CM")
    v = profile(spec, [0.0, 159.0, 160.0, 399.999999, 400.0])
    assert v[0] == v[1] == 30.0
    assert v[2] == pytest.approx(25 + 12 * np.sin(2 * np.pi * 2))
    assert v[3] == pytest.approx(v[4], abs=1e-4)
    # slope well after the turn is negative on average over one period
    t = np.linspace(420, 500, 81)
    assert np.polyfit(t, profile(spec, t), 1)[0] == pytest.approx(-0.05, abs=0.01)


def test_rw_seed_determinism():
    a = generate(ScenarioSpec("RW", seed=11))
    b = generate(ScenarioSpec("RW", seed=11))
    np.testing.assert_array_equal(a.true_values, b.true_values)
    np.testing.assert_array_equal(a.measured_values, b.measured_values)
    c = generate(ScenarioSpec("RW", seed=12))
    assert not np.array_equal(a.true_values, c.true_values)


def test_time_grid_includes_pre_roll():
    tr = generate(ScenarioSpec("SN", duration=20.0, pre_roll=10.0))
    np.testing.assert_allclose(tr.times, np.arange(-10.0, 21.0, 2.0))


def test_extra_time_extends_grid():
    tr = generate(ScenarioSpec("SN", duration=20.0, pre_roll=0.0), extra_time=4.0)
    assert tr.times[-1] == pytest.approx(24.0)


@pytest.mark.parametrize("bad", [dict(kind="XX"), dict(duration=0.0), dict(sample_period=-1.0),
                                 dict(measurement_sigma=-0.1)])
def test_invalid_scenario_settings(bad):
    with pytest.raises(InputError):
        ScenarioSpec(**bad)


def test_kind_is_case_insensitive():
    assert ScenarioSpec("ls").kind == "LS"


def test_clipping_fuzz():
    for seed in range(10_000):
        spec = ScenarioSpec("RW", seed=seed, duration=60.0, pre_roll=0.0, rw_sigma=30.0)
        tr = generate(spec)
        assert tr.true_values.min() >= 0.0 and tr.true_values.max() <= 70.0


def test_profiles_clipped():
    spec = ScenarioSpec("SN", sn_offset=60.0, sn_amplitude=30.0)
    tr = generate(spec)
    assert tr.true_values.max() == 70.0 and tr.true_values.min() >= 0.0


def test_measurement_noise_zero_mean():
    spec = ScenarioSpec("SN", duration=200_000.0, pre_roll=0.0, seed=3)
    tr = generate(spec)
    r = tr.measured_values - tr.true_values
    n = len(r)
    assert n >= 100_000
    assert abs(r.mean()) <= 3 * 1.5 / np.sqrt(n)


def test_csv_round_trip(tmp_path):
    tr = generate(ScenarioSpec("CM", seed=2, duration=40.0))
    path = tmp_path / "trace.csv"
    tr.to_csv(path)
    back = DisturbanceTrace.from_csv(path)
    np.testing.assert_array_equal(back.times, tr.times)
    np.testing.assert_array_equal(back.true_values, tr.true_values)
    np.testing.assert_array_equal(back.measured_values, tr.measured_values)


def test_csv_missing_columns(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n3,4\n")
    with pytest.raises(InputError):
        DisturbanceTrace.from_csv(path)


def test_index_of_off_grid():
    tr = generate(ScenarioSpec("SN", duration=10.0))
    with pytest.raises(InputError):
        tr.index_of(1.0)
