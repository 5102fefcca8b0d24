"""SAR change detection on VV backscatter grids.

A pre-flood reference image is differenced against the at-flood image and
the difference is split with Otsu's method. New open water shows up as a
strong backscatter drop, so pixels whose difference falls below the Otsu
threshold (and whose at-flood VV is below an absolute guard) are flooded.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateInputError,
    EmptyInputError,
    OutOfRangeError,
    ShapeMismatchError,
)

FLOODED = 1
DRY = 0
NODATA = -1

DEFAULT_BINS = 256
DEFAULT_GUARD_DB = -15.0
DB_MIN, DB_MAX = -60.0, 20.0


@dataclass(frozen=True)
class RasterGrid:
    """Row-major backscatter grid in dB. Non-finite values mean no-data."""

    values: np.ndarray
    pixel_size_m: float = 30.0

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 2:
            raise ShapeMismatchError(f"raster must be 2-D, got shape {arr.shape}")
        if not self.pixel_size_m > 0:
            raise OutOfRangeError(f"pixel_size_m must be > 0, got {self.pixel_size_m}")
        finite = arr[np.isfinite(arr)]
        if finite.size and (finite.min() < DB_MIN or finite.max() > DB_MAX):
            raise OutOfRangeError(
                f"backscatter outside [{DB_MIN}, {DB_MAX}] dB: "
                f"[{finite.min()}, {finite.max()}]"
            )
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class FloodMask:
    """Per-pixel flags: FLOODED, DRY or NODATA."""

    flags: np.ndarray
    pixel_size_m: float = 30.0

    def __post_init__(self):
        flags = np.asarray(self.flags, dtype=np.int8)
        if flags.ndim != 2:
            raise ShapeMismatchError(f"mask must be 2-D, got shape {flags.shape}")
        if not np.isin(flags, (FLOODED, DRY, NODATA)).all():
            raise OutOfRangeError("mask flags must be 1 (flooded), 0 (dry) or -1 (nodata)")
        flags.flags.writeable = False
        object.__setattr__(self, "flags", flags)

    @property
    def height(self) -> int:
        return self.flags.shape[0]

    @property
    def width(self) -> int:
        return self.flags.shape[1]

    @property
    def flooded(self) -> np.ndarray:
        return self.flags == FLOODED


@dataclass(frozen=True)
class OtsuResult:
    threshold: float
    between_class_variance: float
    histogram_bins: int


def otsu_threshold(values, bins: int = DEFAULT_BINS) -> OtsuResult:
    """Histogram Otsu threshold over the finite entries of ``values``.

    The histogram spans the observed min-max range with ``bins`` equal bins.
    Every interior bin edge is a candidate; samples in bins left of the edge
    form the lower class. Class means use bin centres. The edge maximising
    ``w0 * w1 * (mu0 - mu1)**2`` wins. Empty bins between two clusters give a
    run of exactly equal maxima; the middle edge of that run is taken (the
    lower of the two middles for an even run), which centres the threshold
    in the gap.
    """
    if bins < 2:
        raise ValueError(f"bins must be >= 2, got {bins}")
    x = np.asarray(values, dtype=np.float64).ravel()
    x = x[np.isfinite(x)]
    if x.size == 0:
        raise EmptyInputError("no finite samples to threshold")
    lo, hi = x.min(), x.max()
    if lo == hi:
        raise DegenerateInputError(f"all {x.size} samples equal {lo}; nothing to split")

    counts, edges = np.histogram(x, bins=bins, range=(lo, hi))
    centres = 0.5 * (edges[:-1] + edges[1:])
    total = counts.sum()

    # lower class for candidate k = bins [0, k)
    c0 = np.cumsum(counts)[:-1].astype(np.float64)
    s0 = np.cumsum(counts * centres)[:-1]
    c1 = total - c0
    s1 = (counts * centres).sum() - s0
    with np.errstate(divide="ignore", invalid="ignore"):
        mu0 = s0 / c0
        mu1 = s1 / c1
        var = (c0 / total) * (c1 / total) * (mu0 - mu1) ** 2
    var = np.where((c0 > 0) & (c1 > 0), var, 0.0)

    ties = np.flatnonzero(var == var.max())
    k = int(ties[(len(ties) - 1) // 2])
    return OtsuResult(float(edges[k + 1]), float(var[k]), bins)


def change_detect(
    reference: RasterGrid,
    at_flood: RasterGrid,
    guard_db: float | None = DEFAULT_GUARD_DB,
    bins: int = DEFAULT_BINS,
) -> FloodMask:
    """Flood mask from a reference/at-flood pair.

    ``guard_db=None`` disables the absolute VV guard.
    """
    if reference.values.shape != at_flood.values.shape:
        raise ShapeMismatchError(
            f"reference {reference.values.shape} vs at_flood {at_flood.values.shape}"
        )
    if reference.pixel_size_m != at_flood.pixel_size_m:
        raise ShapeMismatchError(
            f"pixel size {reference.pixel_size_m} m vs {at_flood.pixel_size_m} m"
        )
    diff = at_flood.values - reference.values
    valid = np.isfinite(diff)
    t = otsu_threshold(diff[valid], bins=bins).threshold

    flooded = valid & (diff < t)
    if guard_db is not None:
        flooded &= at_flood.values < guard_db
    flags = np.where(valid, np.where(flooded, FLOODED, DRY), NODATA)
    return FloodMask(flags.astype(np.int8), reference.pixel_size_m)


def inundated_area_km2(mask: FloodMask, pixel_size_m: float | None = None) -> float:
    size = mask.pixel_size_m if pixel_size_m is None else pixel_size_m
    n = int(np.count_nonzero(mask.flags == FLOODED))
    return n * (size / 1000.0) ** 2


def _check_same_shape(a: FloodMask, b: FloodMask):
    if a.flags.shape != b.flags.shape:
        raise ShapeMismatchError(f"mask shapes differ: {a.flags.shape} vs {b.flags.shape}")


def spatial_correspondence(predicted: FloodMask, reference: FloodMask) -> float:
    """Share of the reference flooded pixels that the prediction also floods."""
    _check_same_shape(predicted, reference)
    ref = reference.flooded
    n_ref = int(np.count_nonzero(ref))
    if n_ref == 0:
        return 1.0 if not predicted.flooded.any() else 0.0
    return int(np.count_nonzero(predicted.flooded & ref)) / n_ref


def correspondence_report(predicted: FloodMask, reference: FloodMask) -> dict:
    """Overlap-over-reference (canonical) plus IoU."""
    _check_same_shape(predicted, reference)
    p, r = predicted.flooded, reference.flooded
    union = int(np.count_nonzero(p | r))
    inter = int(np.count_nonzero(p & r))
    return {
        "overlap": spatial_correspondence(predicted, reference),
        "iou": 1.0 if union == 0 else inter / union,
        "predicted_pixels": int(np.count_nonzero(p)),
        "reference_pixels": int(np.count_nonzero(r)),
    }


# --- plain-text grid I/O --------------------------------------------------
#
# header line: "width height pixel_size_m", then `height` rows of `width`
# whitespace-separated values, "NA" for no-data.


def read_grid(path) -> tuple[np.ndarray, float]:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise EmptyInputError(f"{path}: empty grid file")
    header = lines[0].split()
    if len(header) != 3:
        raise ShapeMismatchError(f"{path}: header must be 'width height pixel_size_m'")
    width, height, size = int(header[0]), int(header[1]), float(header[2])
    tokens = " ".join(lines[1:]).split()
    if len(tokens) != width * height:
        raise ShapeMismatchError(
            f"{path}: expected {width * height} values, found {len(tokens)}"
        )
    vals = np.array([np.nan if t == "NA" else float(t) for t in tokens], dtype=np.float64)
    return vals.reshape(height, width), size


def write_grid(path, values: np.ndarray, pixel_size_m: float, integer: bool = False):
    values = np.asarray(values)
    h, w = values.shape
    out = [f"{w} {h} {pixel_size_m!r}"]
    for row in values:
        cells = []
        for v in row:
            if not np.isfinite(v):
                cells.append("NA")
            elif integer:
                cells.append(str(int(v)))
            else:
                cells.append(repr(float(v)))
        out.append(" ".join(cells))
    Path(path).write_text("\n".join(out) + "\n")


def read_raster(path) -> RasterGrid:
    values, size = read_grid(path)
    return RasterGrid(values, size)


def write_raster(path, grid: RasterGrid):
    write_grid(path, grid.values, grid.pixel_size_m)


def read_mask(path) -> FloodMask:
    values, size = read_grid(path)
    flags = np.where(np.isfinite(values), values, NODATA).astype(np.int8)
    return FloodMask(flags, size)


def write_mask(path, mask: FloodMask):
    vals = np.where(mask.flags == NODATA, np.nan, mask.flags.astype(np.float64))
    write_grid(path, vals, mask.pixel_size_m, integer=True)
