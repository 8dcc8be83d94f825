"""Data ingestion, deterministic synthetic profiles, and scenario config.

CSV data files carry a ``timestamp,pv_kw,load_kw`` header with an
optional ``energy_rate`` column for time-varying rates.  Timestamps are
naive local time on a strictly uniform grid; there is no timezone or DST
handling anywhere.  Floats are written with ``repr`` so a write/read
round trip is bit-exact.
"""

from __future__ import annotations

import configparser
import csv
import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Optional

import numpy as np

from .controllers import CASES, METHODS, ControllerConfig
from .dynamics import ExogenousSeries, MicrogridParams
from .errors import DataError, InputError
from .harness import ScenarioSpec
from .tariff import BillingWindow, TariffSchedule


@dataclass
class DataBundle:
    """A validated time-series file: timestamps, series, optional rates."""

    timestamps: list
    series: ExogenousSeries
    dt_hours: float
    energy_rate: Optional[np.ndarray] = None

    @property
    def start_hour(self) -> float:
        t = self.timestamps[0]
        return t.hour + t.minute / 60.0 + t.second / 3600.0

    def __len__(self) -> int:
        return len(self.series)


def load_data(path) -> DataBundle:
    """Read and validate a data CSV; errors carry 1-based row numbers."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if header[:3] != ["timestamp", "pv_kw", "load_kw"]:
            raise DataError(
                f"{path}: header must start with timestamp,pv_kw,load_kw, got {header}"
            )
        has_rate = len(header) > 3 and header[3] == "energy_rate"
        times, pv, load, rate = [], [], [], []
        for rownum, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                times.append(datetime.fromisoformat(row[0]))
                pv.append(float(row[1]))
                load.append(float(row[2]))
                if has_rate:
                    rate.append(float(row[3]))
            except (ValueError, IndexError) as exc:
                raise DataError(f"{path}: row {rownum}: {exc}") from None
            if pv[-1] < 0:
                raise DataError(f"{path}: row {rownum}: negative pv_kw {pv[-1]}")
            if load[-1] < 0:
                raise DataError(f"{path}: row {rownum}: negative load_kw {load[-1]}")
    if len(times) < 2:
        raise DataError(f"{path}: need at least two rows")
    step = times[1] - times[0]
    if step <= timedelta(0):
        raise DataError(f"{path}: row 3: timestamps not strictly increasing")
    for i in range(1, len(times)):
        if times[i] - times[i - 1] != step:
            raise DataError(
                f"{path}: row {i + 2}: nonuniform spacing "
                f"{times[i] - times[i - 1]} (expected {step})"
            )
    series = ExogenousSeries(np.array(pv), np.array(load))
    return DataBundle(
        timestamps=times,
        series=series,
        dt_hours=step.total_seconds() / 3600.0,
        energy_rate=np.array(rate) if has_rate else None,
    )


def synth_profile(hours: np.ndarray):
    """Deterministic daily load/PV shapes as functions of hour-of-day.

    The load carries a morning-anchored sinusoid plus an early-evening
    bump so the demand peak lands inside the on-peak window; PV is a
    clipped cubed half-sine over daylight.
    """
    load = (
        300.0
        + 150.0 * np.sin(2.0 * np.pi * (hours - 9.0) / 24.0)
        + 250.0 * np.exp(-(((hours - 18.5) / 1.5) ** 2))
    )
    pv = 400.0 * np.maximum(0.0, np.sin(np.pi * (hours - 6.0) / 12.0)) ** 3
    return pv, load


def synth_month(
    days: int, dt_hours: float = 0.25, start: str = "2019-01-01T00:00"
) -> DataBundle:
    """Seed-free synthetic series covering ``days`` days."""
    if days < 1:
        raise InputError(f"days must be at least 1, got {days}")
    per_day = 24.0 / dt_hours
    if abs(per_day - round(per_day)) > 1e-9:
        raise InputError(f"dt_hours {dt_hours} does not divide a day evenly")
    n = int(round(per_day)) * days
    start_dt = datetime.fromisoformat(start)
    start_hour = start_dt.hour + start_dt.minute / 60.0 + start_dt.second / 3600.0
    hours = (start_hour + np.arange(n) * dt_hours) % 24.0
    pv, load = synth_profile(hours)
    step = timedelta(hours=dt_hours)
    times = [start_dt + i * step for i in range(n)]
    return DataBundle(times, ExogenousSeries(pv, load), dt_hours)


def write_data_csv(bundle: DataBundle, path):
    with open(path, "w") as f:
        header = "timestamp,pv_kw,load_kw"
        if bundle.energy_rate is not None:
            header += ",energy_rate"
        f.write(header + "\n")
        for i, t in enumerate(bundle.timestamps):
            # repr of the builtin float round-trips bit-exactly
            row = (
                f"{t.isoformat()},{float(bundle.series.pv_kw[i])!r},"
                f"{float(bundle.series.load_kw[i])!r}"
            )
            if bundle.energy_rate is not None:
                row += f",{float(bundle.energy_rate[i])!r}"
            f.write(row + "\n")


# ----------------------------------------------------------------------
# Scenario configuration

CONFIG_DEFAULTS = {
    "tariff": {
        "energy_rate": "0.1",
        "ncdc_rate": "24.48",
        "opdc_rate": "19.19",
        "onpeak_start_hour": "16",
        "onpeak_end_hour": "21",
    },
    "bess": {
        "energy_kwh": "2500",
        "power_kw": "700",
        "soc_min": "0.2",
        "soc_max": "0.8",
        "eta": "0.8",
        "soc_init": "0.5",
        "grid_min_kw": "-20000",
        "grid_max_kw": "20000",
    },
    "horizon": {"dt_hours": "0.25", "steps_n": "96"},
    "window": {"start": "2019-01-01T00:00", "days": "31"},
    "reference": {"method": "std_ref", "case": "i", "track_opdp_floor": "false"},
    "proposed": {"method": "choice2"},
    "solver": {"tie_break": "true", "feastol": "1e-6"},
}


@dataclass
class ScenarioConfig:
    """Typed view of the scenario configuration file."""

    tariff: TariffSchedule
    params: MicrogridParams
    horizon_N: int
    window_start: str
    window_days: int
    reference_method: str
    reference_case: str
    track_opdp_floor: bool
    proposed_method: Optional[str]
    tie_break: bool
    feastol: float


def _parser_with_defaults() -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    cp.read_dict(CONFIG_DEFAULTS)
    return cp


def load_config(path=None) -> ScenarioConfig:
    """Parse the INI-style scenario config; omitted keys take defaults."""
    cp = _parser_with_defaults()
    if path is not None:
        read = cp.read(path)
        if not read:
            raise DataError(f"config file {path} not found or unreadable")
    try:
        tariff = TariffSchedule(
            energy_rate=cp.getfloat("tariff", "energy_rate"),
            ncdc_rate=cp.getfloat("tariff", "ncdc_rate"),
            opdc_rate=cp.getfloat("tariff", "opdc_rate"),
            onpeak_start_hour=cp.getfloat("tariff", "onpeak_start_hour"),
            onpeak_end_hour=cp.getfloat("tariff", "onpeak_end_hour"),
            dt_hours=cp.getfloat("horizon", "dt_hours"),
        )
        params = MicrogridParams(
            bess_energy_kwh=cp.getfloat("bess", "energy_kwh"),
            bess_power_kw=cp.getfloat("bess", "power_kw"),
            soc_min=cp.getfloat("bess", "soc_min"),
            soc_max=cp.getfloat("bess", "soc_max"),
            eta=cp.getfloat("bess", "eta"),
            grid_lo=cp.getfloat("bess", "grid_min_kw"),
            grid_hi=cp.getfloat("bess", "grid_max_kw"),
            soc_init=cp.getfloat("bess", "soc_init"),
        )
        proposed = cp.get("proposed", "method").strip().lower()
        if proposed in ("", "none"):
            proposed = None
        cfg = ScenarioConfig(
            tariff=tariff,
            params=params,
            horizon_N=cp.getint("horizon", "steps_n"),
            window_start=cp.get("window", "start"),
            window_days=cp.getint("window", "days"),
            reference_method=cp.get("reference", "method").strip().lower(),
            reference_case=cp.get("reference", "case").strip().lower(),
            track_opdp_floor=cp.getboolean("reference", "track_opdp_floor"),
            proposed_method=proposed,
            tie_break=cp.getboolean("solver", "tie_break"),
            feastol=cp.getfloat("solver", "feastol"),
        )
    except (configparser.Error, ValueError) as exc:
        raise DataError(f"bad config: {exc}") from None
    if cfg.reference_method not in ("std_ref", "track_ref"):
        raise DataError(f"[reference] method must be std_ref or track_ref, got {cfg.reference_method!r}")
    if cfg.reference_case not in CASES:
        raise DataError(f"[reference] case must be one of {CASES}, got {cfg.reference_case!r}")
    if cfg.proposed_method is not None and cfg.proposed_method not in METHODS:
        raise DataError(f"[proposed] method {cfg.proposed_method!r} unknown")
    if cfg.window_days < 1:
        raise DataError("[window] days must be at least 1")
    return cfg


def lookahead_days(horizon_N: int, dt_hours: float) -> int:
    return math.ceil(horizon_N * dt_hours / 24.0)


def make_scenario(
    cfg: ScenarioConfig,
    bundle: Optional[DataBundle] = None,
    method: Optional[str] = None,
    case: Optional[str] = None,
    ncdc_only: bool = False,
) -> ScenarioSpec:
    """Assemble a runnable scenario from config plus optional overrides.

    ``method`` overrides the proposed controller; passing a reference
    method selects a single-system run.  ``ncdc_only`` zeroes the on-peak
    demand rate.  Without a data bundle, the synthetic profile is
    generated to cover the window plus lookahead.
    """
    tariff = cfg.tariff
    if ncdc_only:
        tariff = TariffSchedule(
            energy_rate=tariff.energy_rate,
            ncdc_rate=tariff.ncdc_rate,
            opdc_rate=0.0,
            onpeak_start_hour=tariff.onpeak_start_hour,
            onpeak_end_hour=tariff.onpeak_end_hour,
            dt_hours=tariff.dt_hours,
        )
    if bundle is None:
        days = cfg.window_days + lookahead_days(cfg.horizon_N, tariff.dt_hours)
        bundle = synth_month(days, tariff.dt_hours, cfg.window_start)
    else:
        if abs(bundle.dt_hours - tariff.dt_hours) > 1e-9:
            raise DataError(
                f"data spacing {bundle.dt_hours} h does not match configured "
                f"dt_hours {tariff.dt_hours} h"
            )
        if bundle.energy_rate is not None:
            tariff = TariffSchedule(
                energy_rate=bundle.energy_rate,
                ncdc_rate=tariff.ncdc_rate,
                opdc_rate=tariff.opdc_rate,
                onpeak_start_hour=tariff.onpeak_start_hour,
                onpeak_end_hour=tariff.onpeak_end_hour,
                dt_hours=tariff.dt_hours,
            )

    method = (method or cfg.proposed_method or cfg.reference_method).lower()
    case = (case or cfg.reference_case).lower()
    reference = ControllerConfig(
        method=cfg.reference_method if method not in ("std_ref", "track_ref") else method,
        horizon_N=cfg.horizon_N,
        terminal_case=case,
        track_opdp_floor=cfg.track_opdp_floor,
    )
    proposed = None
    if method not in ("std_ref", "track_ref"):
        proposed = ControllerConfig(method=method, horizon_N=cfg.horizon_N)

    T = int(round(cfg.window_days * 24.0 / tariff.dt_hours))
    start_hour = bundle.start_hour
    window = BillingWindow.from_tariff(tariff, T, 0, start_hour)
    return ScenarioSpec(
        params=cfg.params,
        tariff=tariff,
        series=bundle.series,
        window=window,
        reference=reference,
        proposed=proposed,
        start_hour=start_hour,
        start_timestamp=bundle.timestamps[0].isoformat(),
        tie_break=cfg.tie_break,
    )
