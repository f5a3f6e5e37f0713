"""Input patterns and teacher trains."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class PatternSpec:
    channels: int = 32
    duration: float = 0.200
    n_spikes: int = 128
    seed: int = 0
    periodic: bool = True

    def __post_init__(self):
        if self.n_spikes < 0 or self.channels < 1 or not self.duration > 0:
            raise ValueError("PatternSpec needs n_spikes >= 0, channels >= 1, duration > 0")


class SpikeTrain:
    """Time-ordered ``(t, channel)`` events.

    Events are kept as two parallel arrays sorted by ``(t, channel)``.
    """

    __slots__ = ("times", "channels", "n_channels")

    def __init__(self, times, channels, n_channels: int):
        times = np.asarray(times, dtype=float).reshape(-1)
        channels = np.asarray(channels, dtype=np.int64).reshape(-1)
        if times.shape != channels.shape:
            raise ValueError("times and channels must have equal length")
        if channels.size and (channels.min() < 0 or channels.max() >= n_channels):
            raise ValueError(f"channel index out of range for {n_channels} channels")
        order = np.lexsort((channels, times))
        self.times = times[order]
        self.channels = channels[order]
        self.n_channels = int(n_channels)

    @classmethod
    def empty(cls, n_channels: int) -> "SpikeTrain":
        return cls(np.zeros(0), np.zeros(0, dtype=np.int64), n_channels)

    def __len__(self) -> int:
        return int(self.times.size)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, SpikeTrain)
            and self.n_channels == other.n_channels
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.channels, other.channels)
        )

    def __repr__(self) -> str:
        return f"SpikeTrain({len(self)} events, {self.n_channels} channels)"

    @property
    def events(self) -> list[tuple[float, int]]:
        return list(zip(self.times.tolist(), self.channels.tolist()))

    def counts(self) -> np.ndarray:
        return np.bincount(self.channels, minlength=self.n_channels)

    def shifted(self, offset: float) -> "SpikeTrain":
        return SpikeTrain(self.times + offset, self.channels, self.n_channels)

    def merge(self, other: "SpikeTrain") -> "SpikeTrain":
        if other.n_channels != self.n_channels:
            raise ValueError("cannot merge trains with different channel counts")
        return SpikeTrain(
            np.concatenate([self.times, other.times]),
            np.concatenate([self.channels, other.channels]),
            self.n_channels,
        )

    def select(self, keep_channels) -> "SpikeTrain":
        """Keep only events on the given channels (channel numbering unchanged)."""
        mask = np.isin(self.channels, np.asarray(list(keep_channels), dtype=np.int64))
        return SpikeTrain(self.times[mask], self.channels[mask], self.n_channels)

    def to_csv(self) -> str:
        buf = io.StringIO(newline="")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t_seconds", "channel"])
        for t, c in zip(self.times, self.channels):
            w.writerow([f"{t:.9g}", int(c)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, source: str | Path, n_channels: int | None = None) -> "SpikeTrain":
        """Read a ``t_seconds,channel`` CSV file (or CSV text)."""
        text = Path(source).read_text() if isinstance(source, Path) else source
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or [h.strip() for h in rows[0]] != ["t_seconds", "channel"]:
            raise ValueError("expected header 't_seconds,channel'")
        times, chans = [], []
        for lineno, row in enumerate(rows[1:], start=2):
            if not row:
                continue
            try:
                times.append(float(row[0]))
                chans.append(int(row[1]))
            except (ValueError, IndexError) as exc:
                raise ValueError(f"malformed spike row {lineno}: {row}") from exc
        if n_channels is None:
            n_channels = max(chans) + 1 if chans else 1
        return cls(times, chans, n_channels)


def _snap(times: np.ndarray, dt: float) -> np.ndarray:
    return np.round(times / dt) * dt


def generate_pattern(spec: PatternSpec, dt: float | None = None) -> SpikeTrain:
    """One tile of ``n_spikes`` events placed uniformly on channels x [0, duration).

    With ``dt`` given, times are snapped to the grid and same-channel collisions
    are redrawn until every (slot, channel) pair is unique.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([spec.seed, 3])))
    channels = rng.integers(0, spec.channels, size=spec.n_spikes)
    times = rng.uniform(0.0, spec.duration, size=spec.n_spikes)
    if dt is not None:
        n_slots = int(round(spec.duration / dt))
        if spec.n_spikes > n_slots * spec.channels:
            raise ValueError("more spikes than grid slots")
        slots = np.minimum(np.round(times / dt).astype(np.int64), n_slots - 1)
        while True:
            key = slots * spec.channels + channels
            _, first = np.unique(key, return_index=True)
            dup = np.setdiff1d(np.arange(key.size), first)
            if dup.size == 0:
                break
            slots[dup] = np.minimum(
                np.round(rng.uniform(0.0, spec.duration, size=dup.size) / dt).astype(np.int64),
                n_slots - 1,
            )
        times = slots * dt
    return SpikeTrain(times, channels, spec.channels)


def deviant_pattern(spec: PatternSpec, alt_seed: int, dt: float | None = None) -> SpikeTrain:
    """A pattern with identical statistics drawn from another seed."""
    if alt_seed == spec.seed:
        raise ValueError("alt_seed must differ from the pattern seed")
    return generate_pattern(
        PatternSpec(spec.channels, spec.duration, spec.n_spikes, alt_seed, spec.periodic), dt
    )


def tile(train: SpikeTrain, period: float, duration: float) -> SpikeTrain:
    """Repeat a tile every ``period`` seconds, keeping events before ``duration``."""
    if not period > 0:
        raise ValueError("period must be positive")
    n_tiles = int(math.ceil(duration / period)) if duration > 0 else 0
    times = [train.times + k * period for k in range(n_tiles)]
    chans = [train.channels] * n_tiles
    if not times:
        return SpikeTrain.empty(train.n_channels)
    t = np.concatenate(times)
    c = np.concatenate(chans)
    keep = t < duration
    return SpikeTrain(t[keep], c[keep], train.n_channels)


def generate_teacher(
    rate: float,
    duration: float,
    channel: int = 0,
    n_channels: int = 1,
    dt: float | None = None,
    poisson_seed: int | None = None,
) -> SpikeTrain:
    """Clock-like train at ``rate`` Hz, first spike half an interval in.

    ``poisson_seed`` switches to a Poisson train of the same mean rate.
    """
    if rate < 0:
        raise ValueError("rate must be nonnegative")
    if rate == 0 or duration <= 0:
        return SpikeTrain.empty(n_channels)
    if poisson_seed is not None:
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([poisson_seed, 4])))
        n = rng.poisson(rate * duration)
        times = np.sort(rng.uniform(0.0, duration, size=n))
    else:
        isi = 1.0 / rate
        times = isi / 2 + isi * np.arange(int(math.floor(duration * rate)) + 1)
        times = times[times < duration]
    if dt is not None:
        times = np.unique(_snap(times, dt))
        times = times[times < duration]
    return SpikeTrain(times, np.full(times.size, channel), n_channels)
