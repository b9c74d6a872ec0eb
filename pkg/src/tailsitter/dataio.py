"""File formats: CSV logs and exports, JSON configs, aero-table CSV.

All CSV is plain comma-separated text with a single header row.  Floats are
written with repr-level precision so identical runs produce bit-identical
files (the determinism contract).
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .lti import ContinuousTF, PlantFitParams, ResonanceParams, fitted_plant, frequency_response
from .plant import AeroTable

__all__ = [
    "ConfigError",
    "write_csv",
    "read_csv",
    "write_bode_csv",
    "write_biquad_csv",
    "write_frf_csv",
    "save_aero_table",
    "load_aero_table",
    "load_json",
    "tf_from_config",
    "plant_params_from_config",
    "plant_params_to_config",
]


class ConfigError(ValueError):
    """Configuration file is malformed; message carries file/line context."""


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])
    return path


def read_csv(path):
    """(header list, float ndarray of shape (rows, cols))."""
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        data = [[float(x) for x in row] for row in r if row]
    return header, np.array(data)


def write_bode_csv(path, tf: ContinuousTF, f_lo=0.1, f_hi=100.0,
                   points_per_decade=100):
    """`freq_hz,mag_db,phase_deg` at >= 100 log-spaced points per decade."""
    fr = frequency_response(tf, f_lo, f_hi, points_per_decade)
    # unwrap the rational part, add delay phase exactly
    rational = ContinuousTF(tf.num, tf.den, 0.0)
    ph = np.degrees(np.unwrap(np.angle(frequency_response(rational, f_lo, f_hi,
                                                          points_per_decade).values)))
    ph -= 360.0 * fr.freqs * tf.delay
    rows = zip(fr.freqs, fr.magnitude_db, ph)
    return write_csv(path, ["freq_hz", "mag_db", "phase_deg"], rows)


def write_biquad_csv(path, cascade):
    """`section,b0,b1,b2,a1,a2` with a0 normalized to 1."""
    rows = [
        (i, *s.coefficients())
        for i, s in enumerate(cascade.sections)
    ]
    return write_csv(path, ["section", "b0", "b1", "b2", "a1", "a2"], rows)


def write_frf_csv(path, frf):
    rows = zip(frf.freqs, frf.response.real, frf.response.imag, frf.coherence)
    return write_csv(path, ["freq_hz", "re", "im", "coherence"], rows)


def save_aero_table(path, table: AeroTable):
    """Rectangular grid flattened to `alpha_rad,V_ms,CL,CD` rows."""
    rows = []
    for i, a in enumerate(table.alpha_grid):
        for j, v in enumerate(table.v_grid):
            rows.append((a, v, table.cl[i, j], table.cd[i, j]))
    return write_csv(path, ["alpha_rad", "V_ms", "CL", "CD"], rows)


def load_aero_table(path) -> AeroTable:
    header, data = read_csv(path)
    if header != ["alpha_rad", "V_ms", "CL", "CD"]:
        raise ConfigError(f"{path}: expected header alpha_rad,V_ms,CL,CD")
    alphas = np.unique(data[:, 0])
    vs = np.unique(data[:, 1])
    if data.shape[0] != alphas.size * vs.size:
        raise ConfigError(f"{path}: grid is not rectangular")
    cl = np.full((alphas.size, vs.size), np.nan)
    cd = np.full((alphas.size, vs.size), np.nan)
    ia = np.searchsorted(alphas, data[:, 0])
    iv = np.searchsorted(vs, data[:, 1])
    cl[ia, iv] = data[:, 2]
    cd[ia, iv] = data[:, 3]
    if np.any(np.isnan(cl)) or np.any(np.isnan(cd)):
        raise ConfigError(f"{path}: grid has missing nodes")
    return AeroTable(alphas, vs, cl, cd)


def load_json(path):
    path = Path(path)
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such file")
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}: {e.msg}")


def tf_from_config(cfg) -> ContinuousTF:
    """Build a ContinuousTF from a config mapping.

    Accepted forms:
      {"num": [...ascending...], "den": [...], "delay": s}
      {"plant": "reference"}                      - stock identified plant
      {"plant_params": {...}}                     - explicit structure params
    """
    if not isinstance(cfg, dict):
        raise ConfigError("transfer-function config must be a JSON object")
    if "num" in cfg or "den" in cfg:
        try:
            return ContinuousTF(cfg["num"], cfg["den"], float(cfg.get("delay", 0.0)))
        except (KeyError, ValueError) as e:
            raise ConfigError(f"bad transfer-function config: {e}")
    if cfg.get("plant") == "reference":
        return fitted_plant()
    if "plant_params" in cfg:
        return fitted_plant(plant_params_from_config(cfg["plant_params"]))
    raise ConfigError(
        "transfer-function config needs num/den, plant: reference, or plant_params"
    )


def _resonance_from_config(d) -> ResonanceParams:
    return ResonanceParams(float(d["freq_hz"]), float(d["num_damp"]),
                           float(d["den_damp"]))


def plant_params_from_config(d) -> PlantFitParams:
    try:
        ref = PlantFitParams.reference()
        return PlantFitParams(
            lf_corner_hz=float(d.get("lf_corner_hz", ref.lf_corner_hz)),
            main_num=tuple(float(x) for x in d.get("main_num", ref.main_num)),
            main_pole_tc=float(d.get("main_pole_tc", ref.main_pole_tc)),
            peak=_resonance_from_config(d["peak"]) if "peak" in d else ref.peak,
            anti=_resonance_from_config(d["anti"]) if "anti" in d else ref.anti,
            delay_s=float(d.get("delay_s", ref.delay_s)),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"bad plant_params config: {e}")


def plant_params_to_config(p: PlantFitParams) -> dict:
    return {
        "lf_corner_hz": p.lf_corner_hz,
        "main_num": list(p.main_num),
        "main_pole_tc": p.main_pole_tc,
        "peak": {"freq_hz": p.peak.freq_hz, "num_damp": p.peak.num_damp,
                 "den_damp": p.peak.den_damp},
        "anti": {"freq_hz": p.anti.freq_hz, "num_damp": p.anti.num_damp,
                 "den_damp": p.anti.den_damp},
        "delay_s": p.delay_s,
    }
