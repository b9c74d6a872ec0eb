"""Frequency-domain identification: chirp excitation, FRF estimation with
frequency-dependent resolution, and parametric fitting of the plant structure.

The estimator realizes frequency-dependent resolution as constant
cycles-per-window Welch averaging: each output frequency gets its own
window length (long at low frequency, short at high frequency), Hann
weighting, 50 % overlap, and a single-bin DFT evaluated exactly at the
target frequency.  Coherence below the threshold marks a bin untrusted
rather than dropping it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .lti import (
    ContinuousTF,
    PlantFitParams,
    ResonanceParams,
    fitted_plant,
    tf_eval,
)

__all__ = [
    "ChirpConfig",
    "TimeSeries",
    "FRFEstimate",
    "FitConfig",
    "FitResult",
    "SweepData",
    "SweepDivergence",
    "chirp",
    "estimate_frf",
    "frf_of_tf",
    "fit_plant_model",
    "sweep_experiment",
]


@dataclass(frozen=True)
class ChirpConfig:
    """Exponential sweep from f0 to f1 over T seconds, amplitude A.

    The instantaneous frequency is f0 * k**t with k = (f1/f0)**(1/T), so it
    grows geometrically and reaches f1 exactly at t = T.  f0 == f1 is the
    degenerate pure-sinusoid branch.
    """

    f0: float = 1.0
    f1: float = 60.0
    duration_s: float = 60.0
    amplitude: float = 0.1
    sample_hz: float = 250.0

    def __post_init__(self):
        if not 0.0 < self.f0 <= self.f1 < 0.5 * self.sample_hz:
            raise ValueError("need 0 < f0 <= f1 < sample_hz/2")
        if self.duration_s <= 0.0 or self.amplitude <= 0.0:
            raise ValueError("duration and amplitude must be positive")


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Uniformly sampled scalar signal."""

    sample_hz: float
    values: np.ndarray
    t0: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1:
            raise ValueError("values must be 1-D")
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")
        object.__setattr__(self, "values", v)
        v.flags.writeable = False

    @property
    def times(self):
        return self.t0 + np.arange(self.values.size) / self.sample_hz

    def __len__(self):
        return self.values.size


def chirp(cfg: ChirpConfig) -> TimeSeries:
    """Sampled exponential chirp u(t) = A sin(phi(t)), u(0) = 0 exactly."""
    n = int(round(cfg.duration_s * cfg.sample_hz))
    t = np.arange(n) / cfg.sample_hz
    if cfg.f1 == cfg.f0:
        phi = 2.0 * math.pi * cfg.f0 * t
    else:
        k = (cfg.f1 / cfg.f0) ** (1.0 / cfg.duration_s)
        phi = 2.0 * math.pi * cfg.f0 * (np.power(k, t) - 1.0) / math.log(k)
    return TimeSeries(cfg.sample_hz, cfg.amplitude * np.sin(phi))


def chirp_instantaneous_freq(cfg: ChirpConfig, t):
    """Instantaneous frequency f0 * k**t of the sweep, Hz."""
    t = np.asarray(t, dtype=float)
    if cfg.f1 == cfg.f0:
        return np.full_like(t, cfg.f0)
    k = (cfg.f1 / cfg.f0) ** (1.0 / cfg.duration_s)
    return cfg.f0 * np.power(k, t)


@dataclass(frozen=True, eq=False)
class FRFEstimate:
    """Nonparametric frequency response with per-bin coherence.

    ``trusted`` marks bins whose coherence reaches the estimation threshold;
    untrusted bins stay in the arrays so nothing is dropped silently.
    """

    freqs: np.ndarray
    response: np.ndarray
    coherence: np.ndarray
    coherence_threshold: float = 0.6

    def __post_init__(self):
        f = np.asarray(self.freqs, dtype=float)
        h = np.asarray(self.response, dtype=complex)
        c = np.asarray(self.coherence, dtype=float)
        if not (f.shape == h.shape == c.shape) or f.ndim != 1:
            raise ValueError("freqs, response, coherence must be same-shape 1-D")
        if np.any(np.diff(f) <= 0.0):
            raise ValueError("freqs must be strictly increasing")
        if np.any((c < -1e-12) | (c > 1.0 + 1e-12)):
            raise ValueError("coherence must lie in [0, 1]")
        object.__setattr__(self, "freqs", f)
        object.__setattr__(self, "response", h)
        object.__setattr__(self, "coherence", np.clip(c, 0.0, 1.0))

    @property
    def trusted(self):
        return self.coherence >= self.coherence_threshold

    @property
    def magnitude_db(self):
        return 20.0 * np.log10(np.abs(self.response))

    def unwrapped_phase_deg(self):
        """Phase unwrapped along the trusted bins only.

        A garbage untrusted bin must not inject a 360-degree jump into every
        later bin, so the unwrap chain skips untrusted entries; those are
        filled by interpolation (they carry zero weight downstream anyway).
        """
        raw = np.angle(self.response)
        t = self.trusted
        if not np.any(t):
            return np.degrees(np.unwrap(raw))
        out = np.empty_like(raw)
        idx = np.flatnonzero(t)
        out[idx] = np.unwrap(raw[idx])
        out[~t] = np.interp(np.flatnonzero(~t), idx, out[idx])
        return np.degrees(out)


def _single_bin_spectra(u, y, f, sample_hz, cycles_per_window, overlap):
    """Averaged auto/cross spectra at one frequency via windowed DFT bins."""
    n = u.size
    win_len = int(round(cycles_per_window * sample_hz / f))
    win_len = max(16, min(win_len, n))
    step = max(1, int(round(win_len * (1.0 - overlap))))
    window = np.hanning(win_len)
    probe = window * np.exp(-2j * np.pi * f * np.arange(win_len) / sample_hz)
    starts = range(0, n - win_len + 1, step)
    suu = syy = 0.0
    suy = 0.0 + 0.0j
    count = 0
    for s in starts:
        fu = probe @ u[s : s + win_len]
        fy = probe @ y[s : s + win_len]
        suu += (fu * fu.conjugate()).real
        syy += (fy * fy.conjugate()).real
        suy += fu.conjugate() * fy
        count += 1
    return suu / count, suy / count, syy / count, count


def estimate_frf(u: TimeSeries, y: TimeSeries, n_freqs: int = 64,
                 f_lo: float = 1.0, f_hi: float = 60.0,
                 cycles_per_window: float = 20.0, overlap: float = 0.5,
                 coherence_threshold: float = 0.6,
                 hold_rate_hz: float | None = None,
                 plant_rate_hz: float | None = None) -> FRFEstimate:
    """H(f) = S_uy/S_uu with frequency-dependent window lengths.

    The output grid is log-spaced over [f_lo, f_hi]; the window at each
    frequency spans ``cycles_per_window`` periods, which trades variance for
    resolution uniformly across the band.  Coherence is
    |S_uy|^2 / (S_uu S_yy) over the averaged segments.

    ``hold_rate_hz`` deconvolves the known hold of the command channel so
    the estimate refers to the plant alone.  With ``plant_rate_hz`` also
    given, the exact discrete staircase is removed: each command latched at
    t_k drives the plant substeps over (t_k, t_k + 1/hold_rate], whose
    centroid sits half a plant sample later than a continuous zero-order
    hold.  Resolving a resonance whose relative width is 2*zeta requires
    roughly ``cycles_per_window > 2/zeta``; the default favors variance.
    """
    if u.sample_hz != y.sample_hz or len(u) != len(y):
        raise ValueError("input and output series must share rate and length")
    if not 0.0 < f_lo < f_hi < 0.5 * u.sample_hz:
        raise ValueError("need 0 < f_lo < f_hi < Nyquist")
    freqs = np.logspace(math.log10(f_lo), math.log10(f_hi), n_freqs)
    h = np.empty(n_freqs, dtype=complex)
    coh = np.empty(n_freqs)
    uu = u.values
    yy = y.values
    for i, f in enumerate(freqs):
        suu, suy, syy, count = _single_bin_spectra(
            uu, yy, f, u.sample_hz, cycles_per_window, overlap
        )
        if suu <= 0.0 or syy <= 0.0:
            h[i] = 0.0
            coh[i] = 0.0
            continue
        h[i] = suy / suu
        if count < 2:
            coh[i] = 0.0
        else:
            coh[i] = min(1.0, (abs(suy) ** 2) / (suu * syy))
    if hold_rate_hz is not None:
        h = h / _hold_response(freqs, hold_rate_hz, plant_rate_hz)
    return FRFEstimate(freqs, h, coh, coherence_threshold)


def _hold_response(freqs, hold_rate_hz, plant_rate_hz=None):
    """Frequency response of the command hold, continuous or staircase."""
    f = np.asarray(freqs, dtype=float)
    if plant_rate_hz is None:
        return np.sinc(f / hold_rate_hz) * np.exp(-1j * np.pi * f / hold_rate_hz)
    s = int(round(plant_rate_hz / hold_rate_hz))
    theta = 2.0 * np.pi * f / plant_rate_hz
    return (np.exp(-0.5j * theta * (s + 1))
            * np.sin(0.5 * s * theta) / (s * np.sin(0.5 * theta)))


def frf_of_tf(tf: ContinuousTF, freqs, coherence=1.0) -> FRFEstimate:
    """Synthesize an exact FRF from a transfer function (testing/fit seeds)."""
    freqs = np.asarray(freqs, dtype=float)
    return FRFEstimate(freqs, tf_eval(tf, freqs), np.full(freqs.shape, coherence))


@dataclass(frozen=True)
class FitConfig:
    """Knobs of the two-stage parametric fit.

    The measurement-filter corner is treated as known flight-stack
    configuration and not optimized unless ``fit_lf_corner`` is set; sweep
    data rarely reaches far enough past it to pin it down.
    """

    phase_weight: float = 0.1
    restarts: int = 5
    max_iterations: int = 4000
    convergence_cost_per_bin: float = 3.0
    known_lf_corner_hz: float = 69.0
    fit_lf_corner: bool = False
    seed: int = 0


@dataclass(frozen=True)
class FitResult:
    params: PlantFitParams
    cost: float
    cost_per_bin: float
    converged: bool
    stage1: PlantFitParams
    restart_costs: tuple


def _stage1_initial(frf: FRFEstimate, cfg: FitConfig) -> PlantFitParams:
    """Heuristic initialization from the raw FRF.

    Resonances come from coherence-weighted extrema of the detrended
    magnitude, the delay from the high-frequency phase slope, and the
    low-frequency gain from the |H * jw| plateau.
    """
    f = frf.freqs
    mag_db = frf.magnitude_db
    trusted = frf.trusted

    # low-frequency gain: integrator-compensated plateau
    lo = trusted & (f <= f[0] * 3.0)
    if not np.any(lo):
        lo = np.arange(f.size) < max(3, f.size // 8)
    gain = float(np.median(np.abs(frf.response[lo]) * 2.0 * np.pi * f[lo]))
    gain = max(gain, 1e-6)

    # detrend against a smoothed baseline so the sharp modes stand out
    k = max(3, f.size // 12)
    pad = np.pad(mag_db, k, mode="edge")
    baseline = np.convolve(pad, np.ones(2 * k + 1) / (2 * k + 1), mode="valid")
    resid = np.where(trusted, mag_db - baseline, 0.0)

    band = (f >= 4.0) & (f <= 0.85 * f[-1])
    peak_idx = int(np.argmax(np.where(band, resid, -np.inf)))
    f_peak = float(f[peak_idx])
    above = band & (f > f_peak)
    if np.any(above):
        anti_idx = int(np.argmin(np.where(above, resid, np.inf)))
        f_anti = float(f[anti_idx])
    else:
        f_anti = min(2.0 * f_peak, 0.9 * f[-1])

    # delay from the phase slope over the top half-decade (the rational part
    # contributes a roughly constant extra slope that stage 2 absorbs)
    hi = trusted & (f >= f[-1] / math.sqrt(10.0))
    if np.count_nonzero(hi) < 2:
        hi = f >= f[-1] / math.sqrt(10.0)
    ph = np.radians(frf.unwrapped_phase_deg())
    slope = np.polyfit(f[hi], ph[hi], 1)[0]
    delay = max(1e-4, min(0.1, -slope / (2.0 * math.pi)))

    peak_gain_db = float(resid[peak_idx])
    depth = 10.0 ** (max(peak_gain_db, 3.0) / 20.0)
    return PlantFitParams(
        lf_corner_hz=cfg.known_lf_corner_hz,
        main_num=(gain, gain / 70.0, gain / 19000.0),
        main_pole_tc=0.06,
        peak=ResonanceParams(f_peak, 0.2, 0.2 / depth),
        anti=ResonanceParams(f_anti, 0.02, 0.2),
        delay_s=delay,
    )


def _params_to_vector(p: PlantFitParams, cfg: FitConfig):
    x = [
        math.log(p.main_num[0]),
        math.log(p.main_num[1]),
        math.log(p.main_num[2]),
        math.log(p.main_pole_tc),
        math.log(p.peak.freq_hz),
        math.log(p.peak.num_damp),
        math.log(p.peak.den_damp),
        math.log(p.anti.freq_hz),
        math.log(p.anti.num_damp),
        math.log(p.anti.den_damp),
        math.log(max(p.delay_s, 1e-5)),
    ]
    if cfg.fit_lf_corner:
        x.append(math.log(p.lf_corner_hz))
    return np.array(x)


def _vector_to_params(x, cfg: FitConfig) -> PlantFitParams:
    e = np.exp(np.clip(x, -40.0, 40.0))
    lf = e[11] if cfg.fit_lf_corner else cfg.known_lf_corner_hz
    return PlantFitParams(
        lf_corner_hz=float(lf),
        main_num=(float(e[0]), float(e[1]), float(e[2])),
        main_pole_tc=float(e[3]),
        peak=ResonanceParams(float(e[4]), float(e[5]), float(e[6])),
        anti=ResonanceParams(float(e[7]), float(e[8]), float(e[9])),
        delay_s=float(min(e[10], 0.1)),
    )


def _fit_cost(frf: FRFEstimate, params: PlantFitParams, phase_weight: float):
    model = fitted_plant(params)
    h = tf_eval(model, frf.freqs)
    w = np.where(frf.trusted, frf.coherence, 0.0)
    if not np.any(w > 0.0):
        return np.inf
    dmag = 20.0 * (np.log10(np.abs(h)) - np.log10(np.abs(frf.response)))
    # both phases unwrapped along the same grid; delay keeps them comparable
    ph_model = np.degrees(np.unwrap(np.angle(h * np.exp(
        2j * np.pi * frf.freqs * params.delay_s)))) - 360.0 * frf.freqs * params.delay_s
    ph_data = frf.unwrapped_phase_deg()
    dph = ph_model - ph_data
    return float(np.sum(w * (dmag**2 + phase_weight * dph**2)))


def fit_plant_model(frf: FRFEstimate, cfg: FitConfig | None = None) -> FitResult:
    """Two-stage fit of the identified-plant structure to an FRF.

    Stage 1 initializes from FRF features; stage 2 runs coherence-weighted
    Nelder-Mead on [log-magnitude, unwrapped-phase] error with seeded random
    restarts (lowest cost wins, ties broken by restart index).  Requires at
    least half the bins trusted; a fit that never reaches the convergence
    threshold is returned flagged, carrying the stage-1 parameters.
    """
    cfg = cfg or FitConfig()
    if np.mean(frf.trusted) < 0.5:
        raise ValueError("fewer than half the FRF bins are coherence-trusted")
    stage1 = _stage1_initial(frf, cfg)
    x0 = _params_to_vector(stage1, cfg)
    rng = np.random.default_rng(cfg.seed)

    best = None
    costs = []
    for restart in range(max(1, cfg.restarts)):
        xi = x0 if restart == 0 else x0 + rng.normal(0.0, 0.2, x0.shape)
        res = minimize(
            lambda x: _fit_cost(frf, _vector_to_params(x, cfg), cfg.phase_weight),
            xi,
            method="Nelder-Mead",
            options={
                "maxiter": cfg.max_iterations,
                "xatol": 1e-6,
                "fatol": 1e-9,
                "adaptive": True,
            },
        )
        costs.append(float(res.fun))
        if best is None or res.fun < best[0]:
            best = (float(res.fun), res.x.copy())

    n_bins = int(np.sum(frf.trusted))
    cost_per_bin = best[0] / max(n_bins, 1)
    converged = cost_per_bin <= cfg.convergence_cost_per_bin
    params = _vector_to_params(best[1], cfg) if converged else stage1
    return FitResult(
        params=params,
        cost=best[0],
        cost_per_bin=cost_per_bin,
        converged=converged,
        stage1=stage1,
        restart_costs=tuple(costs),
    )


class SweepDivergence(RuntimeError):
    """Simulated response left the small-signal envelope during the sweep."""

    def __init__(self, t):
        super().__init__(f"sweep diverged at t = {t:.3f} s")
        self.time_s = t


@dataclass(frozen=True, eq=False)
class SweepData:
    """Recorded sweep experiment channels at the controller rate."""

    injected: TimeSeries
    total_input: TimeSeries
    measured: TimeSeries


def sweep_experiment(plant, cfg: ChirpConfig, closed_loop: bool = True,
                     stabilizing_gain: float = 0.05,
                     noise_std: float = 0.0, seed: int = 0,
                     settle_s: float = 2.0,
                     divergence_limit: float = 50.0) -> SweepData:
    """Inject a chirp at the rate-controller output and record the response.

    ``plant`` is a LinearAxisPlant-like object (``step(u) -> rate`` at its
    own internal rate, normally 1 kHz).  In closed-loop mode a plain
    proportional rate controller (gain ``stabilizing_gain``, no notch)
    holds the loop around zero command while the sweep runs, as on the real
    vehicle; open-loop mode feeds the chirp directly.  The recorded total
    input is controller output plus injection; the output is the measured
    rate decimated to the chirp rate.  A response beyond
    ``divergence_limit`` rad/s aborts with the divergence time.
    """
    sub = int(round(plant.sample_hz / cfg.sample_hz))
    if sub < 1 or abs(plant.sample_hz - sub * cfg.sample_hz) > 1e-9:
        raise ValueError("plant rate must be an integer multiple of chirp rate")
    rng = np.random.default_rng(seed)
    u_inj = chirp(cfg).values
    n_settle = int(round(settle_s * cfg.sample_hz))
    n = u_inj.size + n_settle

    u_total = np.zeros(n)
    y_meas = np.zeros(n)
    y = 0.0
    for i in range(n):
        # the measurement the controller (and the log) sees is sampled at
        # the tick start, before this tick's input acts
        meas = y + (rng.normal(0.0, noise_std) if noise_std > 0.0 else 0.0)
        tau = -stabilizing_gain * meas if closed_loop else 0.0
        inj = u_inj[i - n_settle] if i >= n_settle else 0.0
        u = tau + inj
        u_total[i] = u
        y_meas[i] = meas
        for _ in range(sub):
            y = plant.step(u)
        if abs(y) > divergence_limit:
            raise SweepDivergence(i / cfg.sample_hz)

    sl = slice(n_settle, n)
    return SweepData(
        injected=TimeSeries(cfg.sample_hz, u_inj),
        total_input=TimeSeries(cfg.sample_hz, u_total[sl]),
        measured=TimeSeries(cfg.sample_hz, y_meas[sl]),
    )
