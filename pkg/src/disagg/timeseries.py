"""Power time-series ingestion, resampling, gap filling, and appliance
activation extraction.

A power series is a uniformly sampled sequence of non-negative watt
readings anchored at an absolute start time.  Raw meter CSVs may have
missing grid slots; ingestion snaps timestamps to the grid and fills
gaps (short gaps carry the last reading forward, long gaps are treated
as the meter being off and read zero), so every `PowerSeries` in the
rest of the pipeline is gap-free.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

DEFAULT_SAMPLE_PERIOD = 6
DEFAULT_MAX_FORWARD_FILL = 180.0


@dataclass(frozen=True)
class PowerSeries:
    """Uniformly sampled power demand in watts.

    Sample i sits at ``start_time + i * sample_period`` seconds.
    """

    start_time: float
    sample_period: int
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if self.sample_period <= 0:
            raise DataError(f"sample_period must be positive, got {self.sample_period}")
        if values.ndim != 1:
            raise DataError("power series values must be one-dimensional")
        if values.size and (not np.all(np.isfinite(values)) or np.any(values < 0)):
            raise DataError("power series values must be finite and non-negative")

    def __len__(self) -> int:
        return len(self.values)

    @property
    def duration(self) -> float:
        """Total covered time in seconds (one period per sample)."""
        return len(self.values) * self.sample_period

    def timestamps(self) -> np.ndarray:
        return self.start_time + np.arange(len(self.values)) * float(self.sample_period)


@dataclass(frozen=True)
class ActivationParams:
    """Extraction thresholds for one appliance class."""

    max_power: float
    on_power_threshold: float
    min_on_duration: float
    min_off_duration: float

    def __post_init__(self):
        fields = (self.max_power, self.on_power_threshold, self.min_on_duration, self.min_off_duration)
        if any(v < 0 for v in fields):
            raise DataError("activation params must be non-negative")
        if self.on_power_threshold > self.max_power:
            raise DataError("on_power_threshold cannot exceed max_power")


@dataclass(frozen=True)
class Activation:
    """One complete appliance cycle cut out of a source series.

    `source_offset` is the sample index of the first value in the series
    the activation was extracted from; `house` tags provenance so the
    train/test partition can be enforced downstream.
    """

    source_offset: int
    values: np.ndarray
    house: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))

    def __len__(self) -> int:
        return len(self.values)


def load_csv(path, sample_period: int = DEFAULT_SAMPLE_PERIOD,
             max_forward_fill: float = DEFAULT_MAX_FORWARD_FILL) -> PowerSeries:
    """Read a `timestamp,watts` CSV into a gap-free PowerSeries.

    Timestamps must be strictly increasing.  They are snapped to the
    sample grid anchored at the first timestamp (collisions keep the
    last value), then missing slots are filled with `fill_gaps`.  An
    empty file yields an empty series with the declared period.
    """
    timestamps: list[float] = []
    values: list[float] = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        for lineno, row in enumerate(reader, start=1):
            if not row or (lineno == 1 and row[0].strip().lower() == "timestamp"):
                continue
            if len(row) != 2:
                raise DataError(f"{path}: expected 2 columns at line {lineno}, got {len(row)}")
            try:
                t = float(row[0])
                w = float(row[1])
            except ValueError as exc:
                raise DataError(f"{path}: malformed row at line {lineno}: {exc}") from None
            if not np.isfinite(w) or not np.isfinite(t):
                raise DataError(f"{path}: non-finite value at line {lineno}")
            if w < 0:
                raise DataError(f"{path}: negative power at line {lineno}")
            if timestamps and t <= timestamps[-1]:
                raise DataError(
                    f"{path}: non-increasing timestamp at line {lineno} "
                    f"({t} follows {timestamps[-1]})"
                )
            timestamps.append(t)
            values.append(w)
    if not timestamps:
        return PowerSeries(start_time=0.0, sample_period=sample_period, values=np.empty(0))

    # Snap to the grid anchored at the first timestamp; keep the last
    # value when two rows land on the same slot.
    start = timestamps[0]
    slots = np.rint((np.asarray(timestamps) - start) / sample_period).astype(np.int64)
    snapped_t = {}
    for slot, w in zip(slots, values):
        snapped_t[int(slot)] = w
    grid_slots = np.array(sorted(snapped_t), dtype=np.int64)
    grid_values = np.array([snapped_t[int(s)] for s in grid_slots])
    return fill_gaps(start + grid_slots * float(sample_period), grid_values,
                     sample_period, max_forward_fill)


def fill_gaps(timestamps, values, sample_period: int,
              max_forward_fill: float = DEFAULT_MAX_FORWARD_FILL) -> PowerSeries:
    """Fill missing grid slots between on-grid (timestamp, value) pairs.

    A gap is the stretch of missing slots between two consecutive
    samples.  Gaps of at most `max_forward_fill` seconds repeat the last
    seen value; longer gaps are read as the meter being off and filled
    with zeros.  The result covers every slot from the first to the last
    timestamp.
    """
    timestamps = np.asarray(timestamps, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if timestamps.size == 0:
        return PowerSeries(start_time=0.0, sample_period=sample_period, values=np.empty(0))
    if timestamps.size != values.size:
        raise DataError("timestamps and values must have equal length")

    start = timestamps[0]
    slots = np.rint((timestamps - start) / sample_period).astype(np.int64)
    if np.any(np.diff(slots) <= 0):
        raise DataError("timestamps must be strictly increasing on the grid")
    n = int(slots[-1]) + 1
    out = np.zeros(n)
    out[slots] = values
    for i in range(len(slots) - 1):
        lo, hi = int(slots[i]), int(slots[i + 1])
        n_missing = hi - lo - 1
        if n_missing == 0:
            continue
        if n_missing * sample_period <= max_forward_fill:
            out[lo + 1 : hi] = values[i]
        # else: leave zeros (meter assumed off)
    return PowerSeries(start_time=float(start), sample_period=sample_period, values=out)


def resample(series: PowerSeries, target_period: int) -> PowerSeries:
    """Downsample by averaging bins of `target_period / sample_period`
    consecutive samples.  A partial trailing bin is dropped.
    """
    if target_period % series.sample_period != 0:
        raise DataError(
            f"target period {target_period} is not a multiple of "
            f"sample period {series.sample_period}"
        )
    ratio = target_period // series.sample_period
    if ratio == 1:
        return series
    n_bins = len(series.values) // ratio
    binned = series.values[: n_bins * ratio].reshape(n_bins, ratio).mean(axis=1)
    return PowerSeries(series.start_time, target_period, binned)


def extract_activations(series: PowerSeries, params: ActivationParams) -> list[Activation]:
    """Cut complete appliance cycles out of a gap-free appliance series.

    Finds maximal runs of samples strictly above the on-power threshold,
    merges runs separated by sub-threshold stretches shorter than the
    minimum off duration (complex appliances dip below threshold mid
    cycle), drops merged runs shorter than the minimum on duration, and
    clips values to the appliance's maximum power.
    """
    values = series.values
    period = series.sample_period
    above = values > params.on_power_threshold
    if not above.any():
        return []

    # Maximal runs of consecutive above-threshold samples, as [start, end).
    edges = np.flatnonzero(np.diff(above.astype(np.int8)))
    runs = []
    run_start = 0 if above[0] else None
    for e in edges:
        if above[e]:  # falling edge after e
            runs.append((run_start, int(e) + 1))
            run_start = None
        else:  # rising edge: run starts at e+1
            run_start = int(e) + 1
    if run_start is not None:
        runs.append((run_start, len(values)))

    merged = [runs[0]]
    for start, end in runs[1:]:
        gap_samples = start - merged[-1][1]
        if gap_samples * period < params.min_off_duration:
            merged[-1] = (merged[-1][0], end)
        else:
            merged.append((start, end))

    activations = []
    for start, end in merged:
        if (end - start) * period < params.min_on_duration:
            continue
        chunk = np.minimum(values[start:end], params.max_power)
        activations.append(Activation(source_offset=start, values=chunk))
    return activations


@dataclass
class ActivationLibrary:
    """Per-class activation pools partitioned into train and test houses.

    The partition is enforced here: an activation enters exactly one
    pool, decided by its house tag, so test-house cycles can never leak
    into training batches.
    """

    train_houses: dict[str, set] = field(default_factory=dict)
    test_houses: dict[str, set] = field(default_factory=dict)
    _train: dict[str, list[Activation]] = field(default_factory=dict)
    _test: dict[str, list[Activation]] = field(default_factory=dict)

    def assign_houses(self, appliance: str, train, test):
        train, test = set(train), set(test)
        overlap = train & test
        if overlap:
            raise DataError(f"houses {sorted(overlap)} assigned to both train and test for {appliance}")
        self.train_houses[appliance] = train
        self.test_houses[appliance] = test
        self._train.setdefault(appliance, [])
        self._test.setdefault(appliance, [])

    def add(self, appliance: str, house, activations):
        """File activations under their house's partition; unassigned houses are ignored."""
        if appliance not in self.train_houses:
            raise DataError(f"no house assignment for appliance {appliance!r}")
        tagged = [Activation(a.source_offset, a.values, house=house) for a in activations]
        if house in self.train_houses[appliance]:
            self._train[appliance].extend(tagged)
        elif house in self.test_houses[appliance]:
            self._test[appliance].extend(tagged)

    def classes(self) -> list[str]:
        return sorted(self.train_houses)

    def train_activations(self, appliance: str) -> list[Activation]:
        return self._train.get(appliance, [])

    def test_activations(self, appliance: str) -> list[Activation]:
        return self._test.get(appliance, [])
