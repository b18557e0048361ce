"""Uniformly sampled signals and their CSV representation."""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

_HEADER_RE = re.compile(r"^\s*(?P<name>[^\[\]]+?)\s*(?:\[(?P<unit>[^\]]*)\])?\s*$")


def fmt(x: float) -> str:
    """Fixed 17-significant-digit formatting used for every CSV we write."""
    return format(float(x), ".17g")


@dataclass(frozen=True)
class TimeSeries:
    name: str
    unit: str
    t0: float
    dt: float
    samples: np.ndarray = field(repr=False)
    diverged: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        arr = np.array(self.samples, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)
        if not self.diverged and not np.all(np.isfinite(arr)):
            raise ValueError(f"non-finite samples in {self.name!r}")

    def __len__(self):
        return len(self.samples)

    @property
    def t(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.samples))

    @property
    def t_end(self) -> float:
        return self.t0 + self.dt * (len(self.samples) - 1)

    @property
    def fs(self) -> float:
        return 1.0 / self.dt

    def window(self, t_start: float, t_stop: float) -> "TimeSeries":
        """Samples with t_start <= t <= t_stop (half-sample tolerance)."""
        if t_stop <= t_start:
            raise ValueError("empty window")
        i0 = max(int(np.ceil((t_start - self.t0) / self.dt - 1e-9)), 0)
        i1 = min(int(np.floor((t_stop - self.t0) / self.dt + 1e-9)), len(self.samples) - 1)
        if i1 <= i0:
            raise ValueError(f"window ({t_start}, {t_stop}) outside series extent")
        return self.replace(t0=self.t0 + i0 * self.dt, samples=self.samples[i0 : i1 + 1])

    def replace(self, **changes) -> "TimeSeries":
        kw = dict(
            name=self.name, unit=self.unit, t0=self.t0, dt=self.dt,
            samples=self.samples, diverged=self.diverged,
        )
        kw.update(changes)
        return TimeSeries(**kw)

    def scaled(self, factor: float, unit: str | None = None) -> "TimeSeries":
        return self.replace(samples=self.samples * factor, unit=self.unit if unit is None else unit)

    # -- CSV ---------------------------------------------------------------

    def header(self) -> list[str]:
        return ["t [s]", f"{self.name} [{self.unit}]" if self.unit else self.name]

    def to_csv(self, path) -> None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header())
        for ti, xi in zip(self.t, self.samples):
            w.writerow([fmt(ti), fmt(xi)])
        Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="")


def parse_header_label(label: str) -> tuple[str, str]:
    m = _HEADER_RE.match(label)
    if not m:
        raise ValueError(f"bad column label {label!r}")
    return m.group("name"), m.group("unit") or ""


def read_table(path) -> tuple[list[str], np.ndarray]:
    """Read a headed, comma-separated numeric table. Returns (labels, data[rows, cols])."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValueError(f"{path}: need a header row and at least one data row")
    header = [c.strip() for c in rows[0]]
    try:
        data = np.array([[float(c) for c in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric data ({exc})") from None
    if data.ndim != 2 or data.shape[1] != len(header):
        raise ValueError(f"{path}: ragged rows")
    if not np.all(np.isfinite(data)):
        raise ValueError(f"{path}: non-finite values")
    return header, data


def uniform_step(t: np.ndarray) -> float:
    if len(t) < 2:
        raise ValueError("need at least two samples")
    d = np.diff(t)
    dt = float(np.mean(d))
    if dt <= 0 or np.max(np.abs(d - dt)) > 1e-6 * dt + 1e-12:
        raise ValueError("time column is not uniformly sampled")
    return dt


def read_series_csv(path) -> TimeSeries:
    header, data = read_table(path)
    if data.shape[1] != 2:
        raise ValueError(f"{path}: expected two columns (t, value)")
    name, unit = parse_header_label(header[1])
    return TimeSeries(name, unit, float(data[0, 0]), uniform_step(data[:, 0]), data[:, 1])
