"""Dominant-mode identification for oscillating waveforms."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import FlatSignal, WindowTooShort
from .series import TimeSeries, parse_header_label, read_table, uniform_step

MIN_PROMINENCE_DB = 3.0
_FLAT_REL = 1e-12


class ModeEstimate(NamedTuple):
    frequency: float
    peak_to_peak: float
    growth_rate: float
    window: tuple[float, float]
    prominence_db: float
    reliable: bool = True


@dataclass(frozen=True)
class ThreePhaseRecord:
    dt: float
    va: np.ndarray
    vb: np.ndarray
    vc: np.ndarray
    ia: np.ndarray
    ib: np.ndarray
    ic: np.ndarray
    t0: float = 0.0
    unit: str = "pu"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        n = {len(np.asarray(getattr(self, c))) for c in ("va", "vb", "vc", "ia", "ib", "ic")}
        if len(n) != 1:
            raise ValueError("phase channels must have equal length")


def _next_pow2(n: int) -> int:
    return 1 << (max(n, 1) - 1).bit_length()


def _spectral_peak(x: np.ndarray, fs: float, f_min: float) -> tuple[float, float]:
    """(frequency, prominence_db) of the strongest Hann-windowed FFT bin."""
    n = len(x)
    nfft = _next_pow2(8 * n)
    mag = np.abs(np.fft.rfft(x * np.hanning(n), nfft))
    freqs = np.fft.rfftfreq(nfft, 1.0 / fs)
    band = np.flatnonzero(freqs >= f_min)
    band = band[band < len(mag) - 1]
    if band.size < 3:
        raise WindowTooShort("window too short to resolve a spectral peak")
    k = int(band[np.argmax(mag[band])])
    tiny = np.finfo(float).tiny
    a, b, c = np.log(np.maximum(mag[k - 1 : k + 2], tiny))
    denom = a - 2 * b + c
    shift = 0.5 * (a - c) / denom if denom < 0 else 0.0
    f = (k + shift) * fs / nfft
    floor = np.median(mag[band])
    prom = 20 * math.log10(max(mag[k], tiny) / max(floor, tiny))
    return float(f), float(prom)


def _extrema(x: np.ndarray, half: int, sign: float):
    """Indices of samples that dominate (sign*x) over +/- ``half`` samples."""
    r = sign * x
    pad = np.pad(r, half, mode="constant", constant_values=-np.inf)
    local_max = sliding_window_view(pad, 2 * half + 1).max(axis=1)
    idx = np.flatnonzero(r >= local_max)
    idx = idx[(idx > 0) & (idx < len(r) - 1)]
    # parabolic refinement
    y0, y1, y2 = r[idx - 1], r[idx], r[idx + 1]
    den = y0 - 2 * y1 + y2
    off = np.where(den < 0, 0.5 * (y0 - y2) / np.where(den < 0, den, 1.0), 0.0)
    return idx + off, sign * (y1 - 0.25 * (y0 - y2) * off)


def _envelope(x: np.ndarray, t: np.ndarray, period_samples: float):
    """Oscillation envelope from adjacent crest/trough pairs.

    Half the crest-to-trough difference is insensitive to a residual
    offset, which matters once a decaying oscillation is mean-removed.
    """
    half = max(int(period_samples / 4), 1)
    if len(x) < 2 * half + 3:
        return np.array([]), np.array([])
    ip, vp = _extrema(x, half, 1.0)
    im, vm = _extrema(x, half, -1.0)
    pos = np.concatenate((ip, im))
    val = np.concatenate((vp, vm))
    kind = np.concatenate((np.ones(len(ip)), -np.ones(len(im))))
    order = np.argsort(pos)
    pos, val, kind = pos[order], val[order], kind[order]
    pair = np.flatnonzero(kind[:-1] != kind[1:])
    amp = 0.5 * np.abs(val[pair] - val[pair + 1])
    dt = t[1] - t[0]
    tm = t[0] + 0.5 * (pos[pair] + pos[pair + 1]) * dt
    return tm, amp


def dominant_mode(series: TimeSeries, window: tuple[float, float] | None = None) -> ModeEstimate:
    """Frequency, peak-to-peak amplitude and growth rate of the main oscillation.

    Mean-removed, Hann-windowed FFT (zero-padded 8x); the top bin is refined
    by a parabola through the log-magnitudes of its neighbours. The growth
    rate is the least-squares slope of the log envelope (half the
    crest-to-trough swing of adjacent extrema) over the last 80% of the
    window. Raises :class:`FlatSignal` (estimate attached) when the peak
    stands less than 3 dB above the median spectrum or the window is
    constant.
    """
    w = series if window is None else series.window(*window)
    x = w.samples - np.mean(w.samples)
    span = (float(w.t0), float(w.t_end))
    p2p = float(np.ptp(x))
    fs = w.fs
    if len(x) < 8:
        raise WindowTooShort("need at least 8 samples")
    level = max(1.0, float(np.max(np.abs(w.samples))))
    if p2p <= _FLAT_REL * level:
        est = ModeEstimate(math.nan, p2p, math.nan, span, 0.0, False)
        raise FlatSignal("window is constant", est)
    duration = len(x) / fs
    freq, prom = _spectral_peak(x, fs, 1.0 / duration)
    growth = math.nan
    if freq > 0:
        tail = int(round(0.2 * len(x)))
        tp, amp = _envelope(x[tail:], w.t[tail:], fs / freq)
        ok = amp > 0
        if np.count_nonzero(ok) >= 3:
            growth = float(np.polyfit(tp[ok], np.log(amp[ok]), 1)[0])
    reliable = prom >= MIN_PROMINENCE_DB and math.isfinite(growth)
    est = ModeEstimate(freq, p2p, growth, span, prom, reliable)
    if not reliable:
        raise FlatSignal(f"spectral peak prominence {prom:.2f} dB below {MIN_PROMINENCE_DB} dB", est)
    return est


def instantaneous_power(rec: ThreePhaseRecord) -> TimeSeries:
    p = (np.asarray(rec.va) * np.asarray(rec.ia) + np.asarray(rec.vb) * np.asarray(rec.ib)
         + np.asarray(rec.vc) * np.asarray(rec.ic))
    return TimeSeries("p", rec.unit, rec.t0, rec.dt, p)


def rms_window(series: TimeSeries, cycles: float, f0: float) -> TimeSeries:
    """Sliding RMS over ``cycles / f0`` seconds, one output per input sample.

    The first samples average over the shorter history available.
    """
    per_cycle = series.fs / f0
    if per_cycle < 8:
        raise WindowTooShort(f"only {per_cycle:.2f} samples per cycle of {f0} Hz (need 8)")
    n = max(int(round(cycles * per_cycle)), 1)
    sq = np.concatenate(([0.0], np.cumsum(np.square(series.samples, dtype=float))))
    idx = np.arange(1, len(sq))
    lo = np.maximum(idx - n, 0)
    mean_sq = (sq[idx] - sq[lo]) / (idx - lo)
    return series.replace(name=f"{series.name}_rms", samples=np.sqrt(np.maximum(mean_sq, 0.0)))


def compare_runs(a: TimeSeries, b: TimeSeries, window: tuple[float, float]) -> dict:
    """Dominant-mode differences of ``a`` against the reference ``b`` over one window.

    ``delta_frequency_hz`` is ``f_a - f_b``; ``delta_peak_to_peak_rel`` is
    ``(pp_a - pp_b) / pp_b``.
    """
    ea = dominant_mode(a, window)
    eb = dominant_mode(b, window)
    rel = (ea.peak_to_peak - eb.peak_to_peak) / eb.peak_to_peak if eb.peak_to_peak else math.nan
    return {
        "delta_frequency_hz": ea.frequency - eb.frequency,
        "delta_peak_to_peak_rel": rel,
        "a": ea,
        "b": eb,
    }


THREE_PHASE_COLUMNS = ("va", "vb", "vc", "ia", "ib", "ic")


def read_waveform_csv(path) -> TimeSeries | ThreePhaseRecord:
    """Load a (t, value) series or a (t, va, vb, vc, ia, ib, ic) record."""
    header, data = read_table(path)
    t = data[:, 0]
    dt = uniform_step(t)
    if data.shape[1] == 2:
        name, unit = parse_header_label(header[1])
        return TimeSeries(name, unit, float(t[0]), dt, data[:, 1])
    if data.shape[1] == 7:
        cols = {c: data[:, i + 1] for i, c in enumerate(THREE_PHASE_COLUMNS)}
        return ThreePhaseRecord(dt=dt, t0=float(t[0]), **cols)
    raise ValueError(f"{path}: expected 2 or 7 columns, got {data.shape[1]}")
