"""Synthetic two-bearing test-rig data generator.

Stands in for a proprietary rig dataset.  Each operating condition (axial
load F_x, radial load F_y, rotational speed) produces a recording of 1 Hz
channels: 20 temperatures, 12 vibration RMS values, and the speed signal.

Generative rules (all constants in SIM_CONSTANTS):
  * vibration RMS = a * speed + b * (load projected onto the sensor's axis
    and angle) + Gaussian noise
  * each temperature follows a first-order lag toward an equilibrium
    proportional to load * speed; outer-ring sensors are weighted by a
    load-zone factor max(0, cos(angle - radial load direction)), inner-ring
    sensors heat near-uniformly
  * speed channel = commanded speed + small noise

The mapping from condition to signals is intentionally simple and injective
so the learning task is well-posed, not a tribological model.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .graph import SensorNode, _canonical_sorted, default_layout

# generative constants; fixed and versioned so results are reproducible
SIM_CONSTANTS = {
    "ambient_c": 25.0,          # starting / ambient temperature, degC
    "tau_s": 200.0,             # first-order lag time constant, s
    "load_dir_deg": 270.0,      # direction of the radial load
    "heat_gain": 0.004,         # degC equilibrium rise per kN*rpm
    "or_axial_share": 0.6,      # outer ring: weight of F_x in effective load
    "or_radial_share": 1.0,     # outer ring: weight of the load-zone F_y term
    "ir_axial_share": 0.6,      # inner ring: weight of F_x
    "ir_radial_share": 0.35,    # inner ring: uniform F_y share
    "temp_noise_c": 0.01,       # temperature measurement noise, degC
    "vib_speed_gain": 0.05,     # vibration RMS per rpm
    "vib_load_gain": 0.01,      # vibration RMS per projected kN
    "vib_ax_radial_leak": 0.1,  # axial sensors: small F_y pickup
    "vib_ra_axial_leak": 0.1,   # radial sensors: small F_x pickup
    "vib_noise": 0.02,          # vibration noise floor, RMS units
    "speed_noise": 0.05,        # speed measurement noise, rpm
}

DURATION_MIN_S = 600
DURATION_MAX_S = 7200


@dataclass(frozen=True)
class OperatingCondition:
    """A unique (axial load, radial load, speed) triple."""

    f_x: float  # kN
    f_y: float  # kN
    speed: float  # r/min

    def __post_init__(self):
        if self.speed < 0 or self.f_x < 0 or self.f_y < 0:
            raise ValueError(f"loads and speed must be nonnegative: {self}")


@dataclass(frozen=True)
class GridSpec:
    """Cross-product grid of condition levels; defaults give 7*4*2 = 56."""

    axial_kn: tuple = (50.0, 100.0, 150.0, 200.0, 250.0, 300.0, 350.0)
    radial_kn: tuple = (20.0, 40.0, 60.0, 80.0)
    speeds_rpm: tuple = (10.0, 20.0)


def generate_condition_grid(spec: GridSpec = GridSpec()) -> list[OperatingCondition]:
    if not spec.axial_kn or not spec.radial_kn or not spec.speeds_rpm:
        raise ValueError("every grid axis needs at least one level")
    return [OperatingCondition(fx, fy, s)
            for fx in spec.axial_kn for fy in spec.radial_kn
            for s in spec.speeds_rpm]


@dataclass
class CaseRecording:
    condition: OperatingCondition
    duration: int
    temp_ids: list[str]
    vib_ids: list[str]
    temperatures: np.ndarray  # (N_T, duration)
    vibrations: np.ndarray    # (N_V, duration)
    speed: np.ndarray         # (duration,)


def _effective_load(node: SensorNode, cond: OperatingCondition,
                    c: dict) -> float:
    """Per-sensor heat-generating load in kN-equivalents."""
    if node.subtype == "T_OR":
        zone = max(0.0, np.cos(np.radians(node.angle_deg - c["load_dir_deg"])))
        return c["or_axial_share"] * cond.f_x + c["or_radial_share"] * zone * cond.f_y
    return c["ir_axial_share"] * cond.f_x + c["ir_radial_share"] * cond.f_y


def _vibration_level(node: SensorNode, cond: OperatingCondition,
                     c: dict) -> float:
    """Noise-free vibration RMS for a sensor under a condition."""
    zone = max(0.0, np.cos(np.radians(node.angle_deg - c["load_dir_deg"])))
    if node.subtype == "V_AX":
        proj = cond.f_x + c["vib_ax_radial_leak"] * zone * cond.f_y
    else:
        proj = zone * cond.f_y + c["vib_ra_axial_leak"] * cond.f_x
    return c["vib_speed_gain"] * cond.speed + c["vib_load_gain"] * proj


def simulate_case(cond: OperatingCondition, duration: int,
                  seed, layout: list[SensorNode] | None = None,
                  constants: dict | None = None) -> CaseRecording:
    """Deterministically generate one case recording.

    ``seed`` may be any value accepted by ``np.random.default_rng``; the
    grid-level driver passes (master seed, condition index) so cases own
    independent streams and can run concurrently.
    """
    if not DURATION_MIN_S <= duration <= DURATION_MAX_S:
        raise ValueError(
            f"duration {duration} outside [{DURATION_MIN_S}, {DURATION_MAX_S}] s"
        )
    c = dict(SIM_CONSTANTS)
    if constants:
        c.update(constants)
    layout = default_layout() if layout is None else layout
    t_nodes = _canonical_sorted([n for n in layout if n.meta == "T"])
    v_nodes = _canonical_sorted([n for n in layout if n.meta == "V"])
    rng = np.random.default_rng(seed)

    # temperature: exact exponential relaxation toward per-sensor equilibrium
    t_eq = np.array([c["ambient_c"] + c["heat_gain"] * _effective_load(n, cond, c)
                     * cond.speed for n in t_nodes])
    t_axis = np.arange(duration, dtype=np.float64)
    decay = np.exp(-t_axis / c["tau_s"])
    temps = t_eq[:, None] + (c["ambient_c"] - t_eq[:, None]) * decay[None, :]
    temps = temps + rng.normal(0.0, c["temp_noise_c"], temps.shape)

    vib_mean = np.array([_vibration_level(n, cond, c) for n in v_nodes])
    vibs = vib_mean[:, None] + rng.normal(0.0, c["vib_noise"],
                                          (len(v_nodes), duration))

    speed = cond.speed + rng.normal(0.0, c["speed_noise"], duration)

    return CaseRecording(cond, duration,
                         [n.node_id for n in t_nodes],
                         [n.node_id for n in v_nodes],
                         temps, vibs, speed)


# -- on-disk dataset ----------------------------------------------------------


def _f(v) -> str:
    """Shortest round-trip decimal form of a float for CSV output."""
    return repr(float(v))


def case_filename(case_id: int) -> str:
    return f"case_{case_id:03d}.csv"


def write_case_csv(path, case_id: int, rec: CaseRecording):
    """One CSV per case: timestamp, temperature channels, vibration
    channels, speed, and the per-second targets F_x, F_y."""
    header = (["timestamp"] + rec.temp_ids + rec.vib_ids
              + ["speed", "F_x", "F_y"])
    cond = rec.condition
    with open(path, "w") as f:
        f.write(",".join(header) + "\n")
        for t in range(rec.duration):
            row = [str(t)]
            row += [_f(v) for v in rec.temperatures[:, t]]
            row += [_f(v) for v in rec.vibrations[:, t]]
            row += [_f(rec.speed[t]), _f(cond.f_x), _f(cond.f_y)]
            f.write(",".join(row) + "\n")


def read_case_csv(path) -> tuple[dict[str, np.ndarray], float, float]:
    """Return per-channel arrays keyed by column name plus (F_x, F_y)."""
    with open(path) as f:
        header = f.readline().strip().split(",")
        rows = [line.strip().split(",") for line in f if line.strip()]
    data = np.array(rows, dtype=np.float64)
    channels = {name: data[:, i] for i, name in enumerate(header)}
    f_x = float(channels["F_x"][0])
    f_y = float(channels["F_y"][0])
    return channels, f_x, f_y


def write_manifest_csv(path, rows: list[dict]):
    """Manifest: one row per case with its condition and split assignment."""
    cols = ["case_id", "F_x", "F_y", "speed", "duration", "split"]
    with open(path, "w") as f:
        f.write(",".join(cols) + "\n")
        for r in rows:
            f.write(",".join(str(r[c]) for c in cols) + "\n")


def read_manifest_csv(path) -> list[dict]:
    with open(path) as f:
        header = f.readline().strip().split(",")
        expected = ["case_id", "F_x", "F_y", "speed", "duration", "split"]
        if header != expected:
            raise ValueError(f"manifest header {header} != {expected}")
        out = []
        for line in f:
            if not line.strip():
                continue
            cid, fx, fy, sp, dur, split = line.strip().split(",")
            out.append({"case_id": int(cid), "F_x": float(fx), "F_y": float(fy),
                        "speed": float(sp), "duration": int(dur),
                        "split": split})
    return out


def simulate_dataset(out_dir, seed: int, duration: int = 600,
                     spec: GridSpec = GridSpec(),
                     unseen_ids: list[int] | None = None,
                     layout: list[SensorNode] | None = None,
                     constants: dict | None = None) -> list[dict]:
    """Generate the full condition grid to ``out_dir`` and return the
    manifest rows.  ``unseen_ids`` marks holdout conditions in the manifest
    (the harness computes them; pass None to mark everything 'seen')."""
    os.makedirs(out_dir, exist_ok=True)
    conditions = generate_condition_grid(spec)
    unseen = set(unseen_ids or [])
    manifest = []
    for i, cond in enumerate(conditions):
        rec = simulate_case(cond, duration, seed=(seed, i), layout=layout,
                            constants=constants)
        write_case_csv(os.path.join(out_dir, case_filename(i)), i, rec)
        manifest.append({"case_id": i, "F_x": cond.f_x, "F_y": cond.f_y,
                         "speed": cond.speed, "duration": duration,
                         "split": "unseen" if i in unseen else "seen"})
    write_manifest_csv(os.path.join(out_dir, "manifest.csv"), manifest)
    return manifest
