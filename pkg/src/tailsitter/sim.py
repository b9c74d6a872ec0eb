"""Closed-loop scenario engine: event-scripted runs of the cascaded
controller against either plant, producing the CSV logs every metric is
recomputed from.

Flags column encoding (bitmask): 1 rate-loop saturation, 2 thrust
saturation, 4 no-vertical-authority feedforward fallback, 8 motor-command
saturation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import quat
from .control import (
    AltitudeController,
    AltitudeLoopConfig,
    AttitudeController,
    AttitudeLoopConfig,
    RateController,
    RateLoopConfig,
)
from .lti import PlantFitParams, fitted_plant
from .plant import (
    PLANT_RATE_HZ,
    AircraftParams,
    FlexibleModeParams,
    LinearAxisPlant,
    SensorConfig,
    SimNumericsError,
    TailsitterSim,
    VibrationConfig,
    angle_of_attack,
    default_aero_table,
    hover_state,
)
from .sysid import ChirpConfig, chirp

__all__ = [
    "Event",
    "Scenario",
    "SimLog",
    "run_linear_axis",
    "run_nonlinear",
    "SIMLOG_HEADER",
    "TELEMETRY_HEADER",
    "FLAG_RATE_SAT",
    "FLAG_THRUST_SAT",
    "FLAG_NO_AUTHORITY",
    "FLAG_MOTOR_SAT",
]

CONTROL_DT = 1.0 / 250.0
SUBSTEPS = int(round(PLANT_RATE_HZ / 250.0))

FLAG_RATE_SAT = 1
FLAG_THRUST_SAT = 2
FLAG_NO_AUTHORITY = 4
FLAG_MOTOR_SAT = 8

SIMLOG_HEADER = [
    "t", "px", "py", "pz", "vx", "vy", "vz",
    "eta", "ex", "ey", "ez", "wx", "wy", "wz",
    "m1", "m2", "m3", "m4", "sat_flag",
]
TELEMETRY_HEADER = [
    "t",
    "q_cmd_eta", "q_cmd_ex", "q_cmd_ey", "q_cmd_ez",
    "q_meas_eta", "q_meas_ex", "q_meas_ey", "q_meas_ez",
    "w_cmd_x", "w_cmd_y", "w_cmd_z",
    "w_meas_x", "w_meas_y", "w_meas_z",
    "torque_x", "torque_y", "torque_z",
    "thrust_cmd", "flags",
]


@dataclass(frozen=True)
class Event:
    """One timed command in a scenario script.

    kinds: "attitude" {roll,pitch,yaw rad} | "pitch_ramp" {pitch_to rad,
    duration s} | "altitude" {alt m} | "rate_cmd" {x,y,z rad/s} |
    "notch" {enabled bool} | "inject_chirp" {f0,f1,duration,amplitude}.
    """

    t: float
    kind: str
    args: dict = field(default_factory=dict)

    _KINDS = ("attitude", "pitch_ramp", "altitude", "rate_cmd", "notch",
              "inject_chirp")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")
        if self.t < 0.0:
            raise ValueError("event time must be >= 0")


@dataclass(frozen=True)
class Scenario:
    """A deterministic scripted run against one plant mode."""

    name: str
    mode: str = "nonlinear"  # or "linear-axis"
    duration_s: float = 20.0
    seed: int = 0
    events: tuple = ()
    rate_cfg: RateLoopConfig = field(
        default_factory=RateLoopConfig.reference_pitch_design)
    attitude_cfg: AttitudeLoopConfig = field(default_factory=AttitudeLoopConfig)
    altitude_cfg: AltitudeLoopConfig = field(default_factory=AltitudeLoopConfig)
    params: AircraftParams = field(default_factory=AircraftParams)
    plant_params: PlantFitParams = field(default_factory=PlantFitParams.reference)
    flex_enabled: bool = True
    delay_enabled: bool = True
    sensor_cfg: SensorConfig = field(default_factory=SensorConfig)
    vibration_cfg: VibrationConfig = field(default_factory=VibrationConfig)
    meas_noise_std: float = 0.0  # linear-axis measurement noise
    initial_altitude_m: float = 50.0
    initial_pitch_rate: float = 0.0
    aero_table_path: str | None = None
    check_suite: str | None = None

    def __post_init__(self):
        if self.mode not in ("nonlinear", "linear-axis"):
            raise ValueError("mode must be nonlinear or linear-axis")
        if self.duration_s <= 0.0:
            raise ValueError("duration must be positive")
        ts = [e.t for e in self.events]
        if ts != sorted(ts):
            raise ValueError("events must be time-ordered")


@dataclass(frozen=True, eq=False)
class SimLog:
    """In-memory run record; rows match the CSV schemas exactly."""

    telemetry: np.ndarray
    simlog: np.ndarray | None = None
    diverged_at: float | None = None

    def pitch_rate(self):
        i = TELEMETRY_HEADER.index("w_meas_y")
        return self.telemetry[:, 0], self.telemetry[:, i]


def _flags_bits(rate_sat, thrust_flags, motor_sat):
    bits = 0
    if np.any(rate_sat):
        bits |= FLAG_RATE_SAT
    if "thrust_saturated" in thrust_flags:
        bits |= FLAG_THRUST_SAT
    if "no_vertical_authority" in thrust_flags:
        bits |= FLAG_NO_AUTHORITY
    if motor_sat:
        bits |= FLAG_MOTOR_SAT
    return bits


def run_linear_axis(sc: Scenario, abort_limit: float = 1e6) -> SimLog:
    """Pitch-rate loop around the identified single-axis plant.

    The plant integrates at 1 kHz; the controller ticks at 250 Hz on the
    decimated measurement.  Divergence beyond ``abort_limit`` rad/s stops
    the run and records the departure time instead of raising.
    """
    plant = LinearAxisPlant(
        fitted_plant(sc.plant_params), PLANT_RATE_HZ,
        prewarp_hz=sc.plant_params.peak.freq_hz,
    )
    ctrl = RateController(sc.rate_cfg)
    rng = np.random.default_rng(sc.seed)
    n = int(round(sc.duration_s / CONTROL_DT))
    events = list(sc.events)
    w_cmd = np.zeros(3)
    inject = None
    inject_start = 0
    rows = []
    y = sc.initial_pitch_rate
    diverged_at = None
    qid = (1.0, 0.0, 0.0, 0.0)
    for i in range(n):
        t = i * CONTROL_DT
        while events and events[0].t <= t:
            ev = events.pop(0)
            if ev.kind == "rate_cmd":
                w_cmd = np.array([ev.args.get("x", 0.0), ev.args.get("y", 0.0),
                                  ev.args.get("z", 0.0)])
            elif ev.kind == "notch":
                ctrl.set_notch_enabled(bool(ev.args["enabled"]))
            elif ev.kind == "inject_chirp":
                cfg = ChirpConfig(ev.args["f0"], ev.args["f1"],
                                  ev.args["duration"], ev.args["amplitude"],
                                  1.0 / CONTROL_DT)
                inject = chirp(cfg).values
                inject_start = i
            else:
                raise ValueError(f"event {ev.kind!r} not valid in linear-axis mode")
        meas = y + (rng.normal(0.0, sc.meas_noise_std)
                    if sc.meas_noise_std > 0.0 else 0.0)
        w_meas = np.array([0.0, meas, 0.0])
        torque = ctrl.step(w_meas, w_cmd)
        if inject is not None and i - inject_start < inject.size:
            torque = torque.copy()
            torque[1] += inject[i - inject_start]
        for _ in range(SUBSTEPS):
            y = plant.step(torque[1])
        bits = _flags_bits(ctrl.saturated, (), False)
        rows.append((t, *qid, *qid, *w_cmd, *w_meas, *torque, 0.0, bits))
        if abs(y) > abort_limit:
            diverged_at = t
            break
    return SimLog(np.array(rows), None, diverged_at)


def _build_sim(sc: Scenario) -> TailsitterSim:
    flex = None
    if sc.flex_enabled:
        flex = FlexibleModeParams(sc.plant_params.peak, sc.plant_params.anti)
    if sc.aero_table_path is not None:
        from .dataio import load_aero_table

        table = load_aero_table(sc.aero_table_path)
    else:
        table = default_aero_table()
    return TailsitterSim(
        sc.params,
        table,
        flex=flex,
        delay_s=sc.plant_params.delay_s if sc.delay_enabled else 0.0,
        sensor_cfg=sc.sensor_cfg,
        vibration_cfg=sc.vibration_cfg,
        seed=sc.seed,
        state=hover_state(sc.params, sc.initial_altitude_m),
    )


def run_nonlinear(sc: Scenario) -> SimLog:
    """Full cascade (attitude + rate + altitude) on the rigid-body plant."""
    sim = _build_sim(sc)
    rate_ctrl = RateController(sc.rate_cfg)
    att_ctrl = AttitudeController(sc.attitude_cfg)
    alt_ctrl = AltitudeController(sc.altitude_cfg, sc.params, sim.table)

    hover_pitch = 0.5 * math.pi
    q_cmd = quat.euler_zxy_to_quat(quat.EulerZXY(0.0, hover_pitch, 0.0))
    alt_cmd = sc.initial_altitude_m
    ramp = None  # (t0, pitch_from, pitch_to, duration, roll, yaw)
    cmd_euler = quat.EulerZXY(0.0, hover_pitch, 0.0)

    events = list(sc.events)
    n = int(round(sc.duration_s / CONTROL_DT))
    w_meas = np.zeros(3)
    telemetry = []
    simrows = []
    diverged_at = None

    for i in range(n):
        t = i * CONTROL_DT
        while events and events[0].t <= t:
            ev = events.pop(0)
            if ev.kind == "attitude":
                cmd_euler = quat.EulerZXY(
                    ev.args.get("roll", 0.0),
                    ev.args.get("pitch", hover_pitch),
                    ev.args.get("yaw", 0.0),
                )
                q_cmd = quat.euler_zxy_to_quat(cmd_euler)
                ramp = None
            elif ev.kind == "pitch_ramp":
                ramp = (t, cmd_euler.pitch, ev.args["pitch_to"],
                        ev.args["duration"], cmd_euler.roll, cmd_euler.yaw)
            elif ev.kind == "altitude":
                alt_cmd = float(ev.args["alt"])
            elif ev.kind == "notch":
                rate_ctrl.set_notch_enabled(bool(ev.args["enabled"]))
            else:
                raise ValueError(f"event {ev.kind!r} not valid in nonlinear mode")

        if ramp is not None:
            t0, p_from, p_to, dur, roll0, yaw0 = ramp
            frac = min(1.0, (t - t0) / dur)
            cmd_euler = quat.EulerZXY(roll0, p_from + frac * (p_to - p_from), yaw0)
            q_cmd = quat.euler_zxy_to_quat(cmd_euler)
            if frac >= 1.0:
                ramp = None

        q_meas = sim.state.quaternion
        alpha, speed = angle_of_attack(sim.state)
        w_cmd = att_ctrl.step(q_meas, q_cmd)
        torque = rate_ctrl.step(w_meas, w_cmd)
        thrust, alt_flags = alt_ctrl.step(sim.altitude(), alt_cmd, sim.v_z(),
                                          q_meas, speed, alpha)
        try:
            sim.set_command(torque, thrust)
            for _ in range(SUBSTEPS):
                sim.step()
        except SimNumericsError:
            diverged_at = t
            break
        if sim.last_measurement is not None:
            w_meas = sim.last_measurement

        bits = _flags_bits(rate_ctrl.saturated, alt_flags, sim.saturated_last)
        st = sim.state
        telemetry.append((t, *q_cmd.as_array(), *st.q, *w_cmd, *w_meas,
                          *torque, thrust, bits))
        simrows.append((t, *st.p, *st.v, *st.q, *st.omega, *sim.motor_states,
                        int(sim.saturated_last)))
    return SimLog(np.array(telemetry), np.array(simrows), diverged_at)
