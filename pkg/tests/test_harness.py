import json

import numpy as np
import pytest

from tailsitter import cli, metrics
from tailsitter.control import RateLoopConfig, default_notch_config
from tailsitter.dataio import (
    ConfigError,
    load_aero_table,
    read_csv,
    save_aero_table,
    tf_from_config,
    write_bode_csv,
    write_biquad_csv,
)
from tailsitter.harness import (
    EXIT_CHECK_FAILED,
    EXIT_CONFIG_ERROR,
    EXIT_OK,
    builtin_scenarios,
    compare_runs,
    run_scenario,
    scenario_from_config,
    scenario_to_config,
)
from tailsitter.sim import Event, Scenario, run_linear_axis


def short_ab_scenario(name="ab_short", enabled_at=6.0, duration=9.0, seed=1,
                      noise=0.0):
    return Scenario(
        name=name,
        mode="linear-axis",
        duration_s=duration,
        seed=seed,
        events=(
            Event(0.0, "notch", {"enabled": False}),
            Event(enabled_at, "notch", {"enabled": True}),
        ),
        rate_cfg=RateLoopConfig(
            kp=(0.054,) * 3, ki=(0.06,) * 3, kd=(0.006,) * 3,
            notches=(None, default_notch_config(), None)),
        initial_pitch_rate=0.01,
        meas_noise_std=noise,
        check_suite="notch_ab",
    )


class TestRunScenario:
    def test_builtin_notch_ab_passes(self, tmp_path):
        report = run_scenario("hover_notch_ab", tmp_path)
        assert report.passed
        assert (tmp_path / "hover_notch_ab_telemetry.csv").exists()
        assert (tmp_path / "hover_notch_ab_report.txt").exists()

    def test_metrics_recomputable_from_csv(self, tmp_path):
        report = run_scenario("hover_notch_ab", tmp_path)
        header, data = read_csv(tmp_path / "hover_notch_ab_telemetry.csv")
        t = data[:, 0]
        w = data[:, header.index("w_meas_y")]
        seg = (t >= 4.0) & (t < 10.0)
        f = metrics.dominant_frequency(w[seg], 1.0 / (t[1] - t[0]), 5.0, 40.0)
        assert f == report.metrics["divergence_dominant_hz"]

    def test_unknown_source_is_config_error(self, tmp_path):
        with pytest.raises(ConfigError):
            run_scenario(tmp_path / "nope.json", tmp_path)

    def test_rate_step_reports_integrator_hump(self, tmp_path):
        # the type-2 loop must overshoot; the report records the design
        # target as a failing check with the computed value
        report = run_scenario("rate_step", tmp_path)
        assert 6.0 < report.metrics["worst_overshoot_pct"] < 16.0
        failed = {name for name, ok, _ in report.checks if not ok}
        assert failed == {"rate_step_overshoot"}
        assert report.metrics["rise_time_s"] < 0.5


class TestCompareRuns:
    def test_identical_seeds_bit_identical(self, tmp_path):
        a = run_scenario(short_ab_scenario(seed=4, noise=1e-4), tmp_path / "a")
        b = run_scenario(short_ab_scenario(seed=4, noise=1e-4), tmp_path / "b")
        diff = compare_runs(a.artifacts[0], b.artifacts[0])
        assert diff.identical

    def test_different_seeds_same_verdicts(self, tmp_path):
        a = run_scenario(short_ab_scenario(seed=4, noise=1e-4), tmp_path / "a")
        b = run_scenario(short_ab_scenario(seed=5, noise=1e-4), tmp_path / "b")
        diff = compare_runs(a.artifacts[0], b.artifacts[0])
        assert not diff.identical
        assert a.passed == b.passed
        for (na, oka, _), (nb, okb, _) in zip(a.checks, b.checks):
            assert na == nb and oka == okb

    def test_notch_toggle_changes_divergence_flag(self, tmp_path):
        diverging = Scenario(
            name="div", mode="linear-axis", duration_s=6.0, seed=1,
            events=(Event(0.0, "notch", {"enabled": False}),),
            rate_cfg=RateLoopConfig(
                kp=(0.054,) * 3, ki=(0.06,) * 3, kd=(0.006,) * 3,
                notches=(None, default_notch_config(), None)),
            initial_pitch_rate=0.01,
        )
        stable = Scenario(
            name="stab", mode="linear-axis", duration_s=6.0, seed=1,
            rate_cfg=diverging.rate_cfg,
            initial_pitch_rate=0.01,
        )
        ra = run_scenario(diverging, tmp_path / "a")
        rb = run_scenario(stable, tmp_path / "b")
        ha, wa = read_csv(tmp_path / "a" / "div_telemetry.csv")
        hb, wb = read_csv(tmp_path / "b" / "stab_telemetry.csv")
        col = ha.index("w_meas_y")
        ga = metrics.max_growth_rate(wa[:, 0], wa[:, col], t_lo=1.0)
        gb = metrics.max_growth_rate(wb[:, 0], wb[:, col], t_lo=1.0)
        assert ga > 0.1 and gb < 0.05

    def test_schema_mismatch_rejected(self, tmp_path):
        report = run_scenario(short_ab_scenario(), tmp_path)
        other = tmp_path / "other.csv"
        other.write_text("a,b\n1,2\n")
        with pytest.raises(ConfigError):
            compare_runs(report.artifacts[0], other)


class TestScenarioSerialization:
    def test_round_trip_preserves_behavior(self, tmp_path):
        sc = short_ab_scenario(duration=4.0)
        cfg = scenario_to_config(sc)
        sc2 = scenario_from_config(json.loads(json.dumps(cfg)))
        a = run_linear_axis(sc)
        b = run_linear_axis(sc2)
        np.testing.assert_array_equal(a.telemetry, b.telemetry)

    def test_bad_event_kind_rejected(self):
        with pytest.raises((ConfigError, ValueError)):
            scenario_from_config({"name": "x", "events": [
                {"t": 0.0, "kind": "warp_drive"}]})

    def test_aircraft_overrides(self):
        sc = scenario_from_config({
            "name": "heavy", "mode": "nonlinear", "duration_s": 1.0,
            "aircraft": {"mass": 2.0, "hover_command": 0.6,
                         "thrust_coeff": 2.0 * 9.81 / 0.6},
        })
        assert sc.params.mass == 2.0
        # hover identity still holds for the overridden airframe
        assert sc.params.thrust_coeff * sc.params.hover_command == pytest.approx(
            sc.params.mass * sc.params.gravity, rel=1e-12)
        cfg = scenario_to_config(sc)
        assert cfg["aircraft"]["mass"] == 2.0

    def test_aero_table_path(self, tmp_path):
        from tailsitter.dataio import save_aero_table
        from tailsitter.plant import default_aero_table
        from tailsitter.sim import run_nonlinear

        table_path = tmp_path / "table.csv"
        save_aero_table(table_path, default_aero_table())
        sc = scenario_from_config({
            "name": "tbl", "mode": "nonlinear", "duration_s": 0.5,
            "aero_table_path": str(table_path),
        })
        log = run_nonlinear(sc)
        assert log.diverged_at is None

    def test_chirp_injection_event(self, tmp_path):
        sc = Scenario(
            name="inj", mode="linear-axis", duration_s=6.0, seed=1,
            events=(Event(1.0, "inject_chirp",
                          {"f0": 2.0, "f1": 30.0, "duration": 4.0,
                           "amplitude": 0.05}),),
            rate_cfg=RateLoopConfig.reference_pitch_design(),
        )
        report = run_scenario(sc, tmp_path)
        header, tele = read_csv(tmp_path / "inj_telemetry.csv")
        t = tele[:, 0]
        torque = tele[:, header.index("torque_y")]
        w = tele[:, header.index("w_meas_y")]
        # injection appears on the torque channel and excites the plant
        assert np.max(np.abs(torque[(t >= 1.0) & (t < 5.0)])) > 0.04
        assert np.max(np.abs(w[(t >= 1.0) & (t < 5.0)])) > 0.05
        assert np.max(np.abs(w[t < 1.0])) < 1e-6

    def test_events_must_be_ordered(self):
        with pytest.raises(ValueError):
            Scenario(name="x", events=(
                Event(5.0, "notch", {"enabled": True}),
                Event(1.0, "notch", {"enabled": False}),
            ))


class TestDataIO:
    def test_bode_export_schema(self, tmp_path):
        path = write_bode_csv(tmp_path / "bode.csv", tf_from_config(
            {"plant": "reference"}), 0.5, 50.0)
        header, data = read_csv(path)
        assert header == ["freq_hz", "mag_db", "phase_deg"]
        # >= 100 points/decade over two decades
        assert data.shape[0] >= 200
        assert np.all(np.diff(data[:, 0]) > 0.0)
        # delay keeps unwrapped phase monotone negative at high frequency
        assert data[-1, 2] < -360.0

    def test_biquad_export_schema(self, tmp_path):
        from tailsitter.biquad import discretize_tustin
        from tailsitter.lti import notch

        c = discretize_tustin(notch(14.0, 0.2, 0.05), 250.0, prewarp_hz=14.0)
        path = write_biquad_csv(tmp_path / "biq.csv", c)
        header, data = read_csv(path)
        assert header == ["section", "b0", "b1", "b2", "a1", "a2"]
        assert data.shape[0] == len(c.sections)

    def test_aero_table_round_trip(self, tmp_path):
        from tailsitter.plant import default_aero_table

        table = default_aero_table()
        path = save_aero_table(tmp_path / "aero.csv", table)
        loaded = load_aero_table(path)
        np.testing.assert_array_equal(loaded.alpha_grid, table.alpha_grid)
        np.testing.assert_array_equal(loaded.cl, table.cl)
        np.testing.assert_array_equal(loaded.cd, table.cd)

    def test_json_error_carries_location(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"name": "x",\n  "mode": }\n')
        with pytest.raises(ConfigError) as exc:
            run_scenario(bad, tmp_path)
        assert "2:" in str(exc.value)

    def test_tf_config_forms(self):
        tf = tf_from_config({"num": [1.0], "den": [1.0, 0.1], "delay": 0.02})
        assert tf.delay == 0.02
        with pytest.raises(ConfigError):
            tf_from_config({"nonsense": 1})


class TestPipeline:
    def test_design_pipeline_artifacts_and_checks(self, tmp_path):
        from tailsitter.harness import PipelineConfig, design_pipeline
        from tailsitter.sysid import ChirpConfig

        cfg = PipelineConfig(chirp=ChirpConfig(1.0, 60.0, 30.0, 0.1, 250.0))
        report = design_pipeline(cfg, tmp_path)
        assert report.metrics["fit_converged"]
        for name in ("sweep_io.csv", "frf.csv", "fit_report.txt",
                     "bode_plant_fit.csv", "bode_compensator.csv",
                     "bode_open_loop.csv", "compensator_biquads_250hz.csv",
                     "design_pipeline_report.txt"):
            assert (tmp_path / name).exists()
        results = {n: ok for n, ok, _ in report.checks}
        assert results["fitted_peak_within_2pct"]
        assert results["bandwidth_gain"]
        header, _ = read_csv(tmp_path / "sweep_io.csv")
        assert header == ["t", "u_injected", "u_total", "omega_meas"]
        header, _ = read_csv(tmp_path / "frf.csv")
        assert header == ["freq_hz", "re", "im", "coherence"]

    def test_skip_notch_flags_instability(self, tmp_path):
        from tailsitter.harness import PipelineConfig, design_pipeline
        from tailsitter.sysid import ChirpConfig

        cfg = PipelineConfig(chirp=ChirpConfig(1.0, 60.0, 30.0, 0.1, 250.0),
                             skip_notch=True)
        report = design_pipeline(cfg, tmp_path)
        assert report.metrics["loop_peak_mag_db"] > 0.0
        assert not report.metrics["closed_loop_stable"]
        results = {n: ok for n, ok, _ in report.checks}
        assert results["no_notch_flagged_unstable"]


class TestSaturationHonesty:
    def test_aggressive_altitude_step_logs_saturation(self, tmp_path):
        from tailsitter.sim import FLAG_THRUST_SAT

        sc = Scenario(
            name="alt_step", mode="nonlinear", duration_s=4.0, seed=2,
            events=(Event(1.0, "altitude", {"alt": 80.0}),),
            initial_altitude_m=50.0,
        )
        run_scenario(sc, tmp_path)
        header, tele = read_csv(tmp_path / "alt_step_telemetry.csv")
        flags = tele[:, header.index("flags")].astype(int)
        assert np.any(flags & FLAG_THRUST_SAT)
        # the state log carries the motor saturation flag column
        sim_header, sim = read_csv(tmp_path / "alt_step_simlog.csv")
        assert sim_header[-1] == "sat_flag"


class TestCli:
    def test_run_exit_codes(self, tmp_path, capsys):
        rc = cli.main(["run", "hover_notch_ab", "--out-dir", str(tmp_path)])
        assert rc == EXIT_OK
        assert "overall: PASS" in capsys.readouterr().out

    def test_failing_check_exit_code(self, tmp_path):
        rc = cli.main(["run", "rate_step", "--out-dir", str(tmp_path)])
        assert rc == EXIT_CHECK_FAILED

    def test_config_error_exit_code(self, tmp_path, capsys):
        missing = tmp_path / "missing.json"
        rc = cli.main(["run", str(missing), "--out-dir", str(tmp_path)])
        assert rc == EXIT_CONFIG_ERROR

    def test_margins_command(self, tmp_path, capsys):
        cfg = tmp_path / "tf.json"
        cfg.write_text(json.dumps({"plant": "reference"}))
        rc = cli.main(["margins", str(cfg), "--slope-band", "0.6", "14"])
        assert rc == EXIT_OK
        out = capsys.readouterr().out
        assert "gain crossover" in out and "dB/dec" in out

    def test_bode_command(self, tmp_path):
        cfg = tmp_path / "tf.json"
        cfg.write_text(json.dumps({"num": [1.0], "den": [1.0, 0.01]}))
        rc = cli.main(["bode", str(cfg), "--out", str(tmp_path / "b.csv")])
        assert rc == EXIT_OK
        assert (tmp_path / "b.csv").exists()

    def test_compare_command(self, tmp_path, capsys):
        run_scenario(short_ab_scenario(duration=3.0), tmp_path)
        log = str(tmp_path / "ab_short_telemetry.csv")
        rc = cli.main(["compare", log, log])
        assert rc == EXIT_OK
        assert "bit-identical" in capsys.readouterr().out

    def test_scenarios_dump(self, tmp_path, capsys):
        rc = cli.main(["scenarios", "--dump-dir", str(tmp_path)])
        assert rc == EXIT_OK
        for name in builtin_scenarios():
            assert (tmp_path / f"{name}.json").exists()

    def test_numerical_abort_exit_code(self, tmp_path, capsys):
        from tailsitter.harness import EXIT_NUMERICAL_ABORT

        # an oversized injection drives the sweep past its divergence guard
        cfg = tmp_path / "pipe.json"
        cfg.write_text(json.dumps({"chirp": {"amplitude": 1e4,
                                             "duration_s": 10.0}}))
        rc = cli.main(["pipeline", str(cfg), "--out-dir", str(tmp_path)])
        assert rc == EXIT_NUMERICAL_ABORT
        assert "numerical abort" in capsys.readouterr().err
