"""Boro rice damage from flood extent, growth stage and flood duration."""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import NegativeDaysError, NegativeInputError, ShapeMismatchError, UnknownStageError
from .raster import FLOODED, FloodMask

SEEDLING, TILLERING, PANICLE, GRAIN_FILLING = "seedling", "tillering", "panicle", "grain_filling"
STAGES = (SEEDLING, TILLERING, PANICLE, GRAIN_FILLING)

# Days since transplanting at which each later stage begins.
STAGE_STARTS = {TILLERING: 30, PANICLE: 60, GRAIN_FILLING: 90}

DEFAULT_LOSS_RANGES = {
    SEEDLING: (0.10, 0.30),
    TILLERING: (0.30, 0.60),
    PANICLE: (0.60, 0.85),
    GRAIN_FILLING: (0.85, 1.00),
}

RAMP_START_DAYS = 1.0
RAMP_END_DAYS = 7.0
DEFAULT_BAND = 0.40


@dataclass(frozen=True)
class StageLossTable:
    stages: dict = None

    def __post_init__(self):
        stages = dict(DEFAULT_LOSS_RANGES if self.stages is None else self.stages)
        prev_lo = prev_hi = 0.0
        for name in STAGES:
            if name not in stages:
                raise UnknownStageError(f"loss table lacks stage {name!r}")
            lo, hi = stages[name]
            if not 0.0 <= lo <= hi <= 1.0:
                raise NegativeInputError(f"{name}: need 0 <= lo <= hi <= 1, got {lo}, {hi}")
            if lo < prev_lo or hi < prev_hi:
                raise NegativeInputError("loss ranges must not decrease across stages")
            prev_lo, prev_hi = lo, hi
        object.__setattr__(self, "stages", stages)

    def __getitem__(self, stage: str) -> tuple:
        try:
            return self.stages[stage]
        except KeyError:
            raise UnknownStageError(f"unknown growth stage {stage!r}") from None


@dataclass(frozen=True)
class DamageEstimate:
    upazila_id: int | None
    flooded_area_km2: float
    stage: str
    loss_fraction: float
    loss_tonnes: float
    loss_bdt: float
    band_low_bdt: float
    band_high_bdt: float


def growth_stage(days_since_transplant: float) -> str:
    if days_since_transplant < 0:
        raise NegativeDaysError(f"days since transplant must be >= 0, got {days_since_transplant}")
    if days_since_transplant < STAGE_STARTS[TILLERING]:
        return SEEDLING
    if days_since_transplant < STAGE_STARTS[PANICLE]:
        return TILLERING
    if days_since_transplant < STAGE_STARTS[GRAIN_FILLING]:
        return PANICLE
    return GRAIN_FILLING


def loss_fraction(stage: str, duration_days: float,
                  table: StageLossTable = StageLossTable()) -> float:
    """Stage loss range scaled by submergence duration: low end at <= 1 day,
    high end from 7 days, linear between."""
    if duration_days < 0:
        raise NegativeInputError(f"duration must be >= 0, got {duration_days}")
    lo, hi = table[stage]
    pos = (duration_days - RAMP_START_DAYS) / (RAMP_END_DAYS - RAMP_START_DAYS)
    pos = min(1.0, max(0.0, pos))
    return lo + (hi - lo) * pos


def estimate(flooded_area_km2: float, yield_t_per_km2: float, stage: str,
             duration_days: float, price_bdt_per_t: float,
             band_fraction: float = DEFAULT_BAND, compound_steps: int = 1,
             table: StageLossTable = StageLossTable(),
             upazila_id: int | None = None) -> DamageEstimate:
    """Loss = area x yield x stage fraction x price.

    The uncertainty band is ``loss * (1 -/+ band_fraction) ** compound_steps``;
    one step by default, three to compound area, depth and loss-fraction
    uncertainty.
    """
    for name, v in (("flooded_area_km2", flooded_area_km2), ("yield_t_per_km2", yield_t_per_km2),
                    ("duration_days", duration_days), ("price_bdt_per_t", price_bdt_per_t),
                    ("band_fraction", band_fraction)):
        if v < 0:
            raise NegativeInputError(f"{name} must be >= 0, got {v}")
    frac = loss_fraction(stage, duration_days, table)
    tonnes = flooded_area_km2 * yield_t_per_km2 * frac
    bdt = tonnes * price_bdt_per_t
    return DamageEstimate(
        upazila_id=upazila_id,
        flooded_area_km2=flooded_area_km2,
        stage=stage,
        loss_fraction=frac,
        loss_tonnes=tonnes,
        loss_bdt=bdt,
        band_low_bdt=bdt * max(0.0, 1.0 - band_fraction) ** compound_steps,
        band_high_bdt=bdt * (1.0 + band_fraction) ** compound_steps,
    )


def intersect_acreage(mask: FloodMask, acreage, pixel_size_m: float | None = None) -> dict[int, float]:
    """Flooded cultivated km2 per upazila.

    ``acreage`` holds an upazila id per cultivated pixel and 0 or NaN where
    nothing is cultivated.
    """
    ids = np.asarray(acreage, dtype=np.float64)
    if ids.shape != mask.flags.shape:
        raise ShapeMismatchError(f"acreage {ids.shape} vs mask {mask.flags.shape}")
    size = mask.pixel_size_m if pixel_size_m is None else pixel_size_m
    px_km2 = (size / 1000.0) ** 2
    cultivated = np.isfinite(ids) & (ids > 0)
    out = {}
    for uid in np.unique(ids[cultivated]):
        in_upazila = ids == uid
        n = int(np.count_nonzero(in_upazila & (mask.flags == FLOODED)))
        out[int(uid)] = n * px_km2
    return out


def read_calendar(path) -> dict[int, dt.date]:
    with open(path, newline="") as fh:
        return {int(r["upazila_id"]): dt.date.fromisoformat(r["transplant_date"].strip())
                for r in csv.DictReader(fh)}


def read_prices(path) -> dict[int, tuple[float, float]]:
    """``upazila_id,yield_t_per_km2,price_bdt_per_t``; id 0 is the fallback row."""
    with open(path, newline="") as fh:
        return {int(r["upazila_id"]): (float(r["yield_t_per_km2"]), float(r["price_bdt_per_t"]))
                for r in csv.DictReader(fh)}


def upazila_damage(mask: FloodMask, acreage, calendar: dict, prices: dict,
                   onset: dt.date, duration_days: float, band_fraction: float = DEFAULT_BAND,
                   compound_steps: int = 1) -> list[DamageEstimate]:
    out = []
    for uid, area in sorted(intersect_acreage(mask, acreage).items()):
        if uid not in calendar:
            raise UnknownStageError(f"upazila {uid} missing from transplanting calendar")
        if uid not in prices and 0 not in prices:
            raise NegativeInputError(f"no yield/price row for upazila {uid}")
        yld, price = prices.get(uid, prices.get(0))
        stage = growth_stage((onset - calendar[uid]).days)
        out.append(estimate(area, yld, stage, duration_days, price, band_fraction,
                            compound_steps, upazila_id=uid))
    return out
