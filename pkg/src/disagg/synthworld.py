"""Desk-scale synthetic world generation.

Full-scale training needs weeks of sub-metered recordings; the desk
profile substitutes a small simulated household with a two-state
"kettle-like" target appliance and a couple of distractors.  The same
generator feeds the acceptance experiment and the CLI smoke tests, and
can write a house's channels out as CSVs in the layout the CLI ingests
(``<data_dir>/house_<n>/<channel>.csv``).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .timeseries import Activation, ActivationLibrary, PowerSeries
from .util import format_watts


@dataclass(frozen=True)
class SynthAppliance:
    """Shape of one simulated appliance's activations."""

    name: str
    power: float          # plateau level, watts
    power_jitter: float   # per-activation level wobble, watts
    min_samples: int
    max_samples: int
    mean_gap: int         # mean samples between activations in long series


# The acceptance world: a 2000 W kettle-like target that runs 3-5
# samples, plus two distractors at clearly different levels/durations.
DESK_APPLIANCES = (
    SynthAppliance("kettle", power=2000.0, power_jitter=60.0,
                   min_samples=3, max_samples=5, mean_gap=60),
    SynthAppliance("microwave", power=800.0, power_jitter=60.0,
                   min_samples=8, max_samples=16, mean_gap=90),
    SynthAppliance("fridge", power=350.0, power_jitter=20.0,
                   min_samples=10, max_samples=22, mean_gap=70),
)


def make_activation(spec: SynthAppliance, rng, house: int | None = None,
                    source_offset: int = 0) -> Activation:
    length = int(rng.integers(spec.min_samples, spec.max_samples + 1))
    level = spec.power + rng.uniform(-spec.power_jitter, spec.power_jitter)
    values = level + rng.normal(scale=0.01 * spec.power, size=length)
    return Activation(source_offset=source_offset, values=np.maximum(values, 0.0),
                      house=house)


def make_library(appliances, train_houses, test_houses, per_house: int, rng) -> ActivationLibrary:
    """A library of freshly drawn activations, partitioned by house."""
    library = ActivationLibrary()
    for spec in appliances:
        library.assign_houses(spec.name, train_houses, test_houses)
        for house in tuple(train_houses) + tuple(test_houses):
            acts = [make_activation(spec, rng, house=house) for _ in range(per_house)]
            library.add(spec.name, house, acts)
    return library


def make_household(appliances, length: int, rng, sample_period: int = 6,
                   start_time: float = 0.0, noise_std: float = 4.0,
                   vampire_watts: float = 35.0):
    """Simulate one household: per-appliance channels plus their aggregate.

    Each appliance runs on its own renewal process (uniform gaps around
    its mean).  The aggregate is the channel sum plus an always-on
    vampire load and a small non-negative noise floor.

    Returns (aggregate PowerSeries, {name: channel PowerSeries}).
    """
    channels = {}
    for spec in appliances:
        channel = np.zeros(length)
        cursor = int(rng.integers(0, spec.mean_gap))
        while cursor < length:
            act = make_activation(spec, rng)
            end = min(length, cursor + len(act))
            channel[cursor:end] = act.values[: end - cursor]
            gap = int(rng.uniform(0.5, 1.5) * spec.mean_gap)
            cursor = end + max(1, gap)
        channels[spec.name] = PowerSeries(start_time, sample_period, channel)

    total = sum(c.values for c in channels.values())
    total = total + vampire_watts + np.abs(rng.normal(scale=noise_std, size=length))
    aggregate = PowerSeries(start_time, sample_period, total)
    return aggregate, channels


def channel_slug(name: str) -> str:
    return name.replace(" ", "_")


def write_series_csv(path, series: PowerSeries):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["timestamp", "watts"])
        for t, w in zip(series.timestamps(), series.values):
            writer.writerow([int(t), format_watts(w)])


def write_world(data_dir, houses, length: int, seed: int,
                appliances=DESK_APPLIANCES, sample_period: int = 6):
    """Write per-house channel CSVs for the CLI: aggregate + one per appliance."""
    data_dir = Path(data_dir)
    for house in houses:
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(house,)))
        aggregate, channels = make_household(appliances, length, rng,
                                             sample_period=sample_period)
        house_dir = data_dir / f"house_{house}"
        house_dir.mkdir(parents=True, exist_ok=True)
        write_series_csv(house_dir / "aggregate.csv", aggregate)
        for name, series in channels.items():
            write_series_csv(house_dir / f"{channel_slug(name)}.csv", series)
