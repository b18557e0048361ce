"""Linear model of the DC-link voltage control (DVC) loop of an electronic load.

Blocks, all in per unit:

* DC-link plant       1 / (2 tau_dc s)
* DVC PI              kp + ki / s
* current tracking    1 / (tau_i s + 1)
* synchronizing lag   1 / (tau_sync s + 1)

The load's operating point and grid strength enter only through the loop
factor ``k = (xg * id0)**2``. The outer loop is closed so that the
characteristic equation is ``1 + k * G_dvc * G_sync = 0`` (see
:func:`build_loop_gain`).
"""

from __future__ import annotations

import functools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

from .errors import BracketInvalid, NoFeasibleSync
from .ratfun import (
    TWO_PI,
    Polynomial,
    TransferFunction,
    freq_response,
    log_grid,
    magnitude_db,
    poly_roots,
    unwrap_deg,
)

TARGET_OSC_HZ = 26.0

# Synchronizing-lag time constant returned by calibrate_sync() for the
# after-tuning parameters; regenerate with `python -m lelosc.lelmodel`.
CALIBRATED_TAU_SYNC = 0.038724160734303105


@dataclass(frozen=True)
class FeedbackParams:
    kp: float
    ki: float
    tau_dc: float
    tau_i: float
    tau_sync: float
    xg: float
    id0: float
    vg: float = 1.0
    vdc_ref: float = 1.0

    def __post_init__(self):
        for name in ("kp", "ki", "tau_dc", "tau_i", "tau_sync", "xg", "id0", "vg", "vdc_ref"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite")
        if self.kp < 0 or self.ki < 0 or self.kp + self.ki <= 0:
            raise ValueError("need kp >= 0, ki >= 0 and kp + ki > 0")
        if self.tau_dc <= 0:
            raise ValueError("tau_dc must be positive")
        if self.tau_i < 0 or self.tau_sync < 0 or self.xg < 0:
            raise ValueError("tau_i, tau_sync and xg must be non-negative")
        if not 0 <= self.id0 * self.xg < self.vg:
            raise ValueError("network unsolvable: need 0 <= id0*xg < vg")
        if self.vdc_ref <= 0:
            raise ValueError("vdc_ref must be positive")

    @property
    def loop_factor(self) -> float:
        """(xg * id0)^2, the static gain of the grid-coupling path."""
        return (self.xg * self.id0) ** 2

    def with_loop_factor(self, k: float) -> "FeedbackParams":
        """Same grid reactance, operating current chosen so (xg*id0)^2 == k."""
        if k < 0:
            raise ValueError("loop factor must be non-negative")
        if k == 0:
            return replace(self, id0=0.0)
        if self.xg == 0:
            raise ValueError("cannot realise a nonzero loop factor with xg = 0")
        return replace(self, id0=math.sqrt(k) / self.xg)

    @property
    def v0_exact(self) -> float:
        """Bus voltage of the exact network at this operating point.

        The small-signal model assumes 1 pu here.
        """
        return math.sqrt(self.vg ** 2 - (self.xg * self.id0) ** 2)


AFTER_TUNING = FeedbackParams(
    kp=2.8, ki=2000.0, tau_dc=0.0377, tau_i=0.001,
    tau_sync=CALIBRATED_TAU_SYNC, xg=0.65, id0=1.0,
)
BEFORE_TUNING = replace(AFTER_TUNING, kp=10.0, ki=1.0 / 0.0063)


class StabilityVerdict(NamedTuple):
    cls: str  # "stable" | "marginal" | "unstable"
    dominant_pole: complex
    oscillation_frequency: float
    damping_ratio: float

    @property
    def stable(self) -> bool:
        return self.cls == "stable"


class Resonance(NamedTuple):
    frequency: float
    magnitude_db: float
    prominence_db: float

    @property
    def flat(self) -> bool:
        return self.prominence_db < 0.1


class SyncCalibration(NamedTuple):
    tau_sync: float
    oscillation_frequency: float


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("LELOSC_THREADS", "1")))
    except ValueError:
        return 1


def _pmap(fn: Callable, items: Sequence) -> list:
    """Order-preserving map, threaded when LELOSC_THREADS > 1."""
    n = _threads()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


# -- blocks ---------------------------------------------------------------------


def build_plant(p: FeedbackParams) -> TransferFunction:
    return TransferFunction([1.0], [2.0 * p.tau_dc, 0.0])


def _pi_num(p: FeedbackParams) -> Polynomial:
    return Polynomial([p.kp, p.ki])


def _dvc_open_den(p: FeedbackParams, include_current_lag: bool = True) -> Polynomial:
    # (tau_i s + 1) * 2 tau_dc s^2
    lag = Polynomial([p.tau_i, 1.0]) if include_current_lag else Polynomial([1.0])
    return lag * Polynomial([2.0 * p.tau_dc, 0.0, 0.0])


def build_gdvc(p: FeedbackParams, include_current_lag: bool = True) -> TransferFunction:
    """Closed DVC loop, reference DC voltage to measured DC voltage."""
    num = _pi_num(p)
    return TransferFunction(num, _dvc_open_den(p, include_current_lag) + num)


def build_gsync(p: FeedbackParams) -> TransferFunction:
    return TransferFunction([1.0], [p.tau_sync, 1.0])


def build_loop_gain(p: FeedbackParams, k: float | None = None) -> TransferFunction:
    """Outer-loop transfer ``k * G_dvc * G_sync`` in the negative-feedback sense.

    The loop is unstable when this crosses -180 deg with magnitude above
    0 dB; the closed-loop characteristic equation is ``1 + L(s) = 0``.
    Its wrapped phase flips from -180 to +180 deg close to the DVC
    resonance once G_sync adds enough lag.
    """
    k = p.loop_factor if k is None else k
    return build_gdvc(p, True) * build_gsync(p) * k


def characteristic_polynomial(p: FeedbackParams, k: float | None = None) -> Polynomial:
    """den(G_dvc)*(tau_sync s + 1) + k*(kp s + ki).

    For k == 0 the synchronizing path is disconnected and its factor is
    dropped, leaving exactly the G_dvc denominator.
    """
    k = p.loop_factor if k is None else k
    g = build_gdvc(p, True)
    if k == 0:
        return g.den
    return g.den * Polynomial([p.tau_sync, 1.0]) + _pi_num(p) * k


def build_closed_loop(p: FeedbackParams, output: str = "ac_voltage",
                      k: float | None = None) -> TransferFunction:
    """Transfer function from a DC-load power disturbance to ``output``.

    ``output`` is one of ``ac_voltage``, ``dc_voltage`` or ``current``;
    all three share :func:`characteristic_polynomial` as denominator.
    """
    if k is None:
        k = p.loop_factor
    else:
        p = p.with_loop_factor(k)
    char = characteristic_polynomial(p, k)
    sync = Polynomial([p.tau_sync, 1.0]) if k != 0 else Polynomial([1.0])
    pi = _pi_num(p)
    if output == "current":
        num = pi * sync
    elif output == "dc_voltage":
        num = -(Polynomial([p.tau_i, 1.0, 0.0]) * sync)
    elif output == "ac_voltage":
        # dV = -xg^2 id0 G_sync di with V0 = 1
        num = pi * (-(p.xg ** 2) * p.id0)
    else:
        raise ValueError(f"unknown output {output!r}")
    return TransferFunction(num, char)


# -- analysis -------------------------------------------------------------------


def resonant_frequency(g: TransferFunction, f_lo: float, f_hi: float) -> Resonance:
    """Peak of |g(j 2 pi f)| on [f_lo, f_hi].

    Argmax on a 2000-point log grid, then golden-section refinement to
    0.01 Hz. ``prominence_db`` is the rise of the peak above the larger of
    the two band-edge magnitudes; a static gain returns ``f_lo`` and is
    reported :attr:`Resonance.flat`.
    """
    if not 0 < f_lo < f_hi:
        raise ValueError("need 0 < f_lo < f_hi")
    f = np.logspace(math.log10(f_lo), math.log10(f_hi), 2000)
    mag = np.abs(freq_response(g, f))
    i = int(np.argmax(mag))
    a, b = f[max(i - 1, 0)], f[min(i + 1, len(f) - 1)]

    def m(x):
        return abs(complex(freq_response(g, [x])[0]))

    if b > a and not np.all(mag == mag[0]):
        invphi = (math.sqrt(5) - 1) / 2
        c, d = b - invphi * (b - a), a + invphi * (b - a)
        mc, md = m(c), m(d)
        while b - a > 0.01:
            if mc >= md:
                b, d, md = d, c, mc
                c = b - invphi * (b - a)
                mc = m(c)
            else:
                a, c, mc = c, d, md
                d = a + invphi * (b - a)
                md = m(d)
        cands = [(m(x), x) for x in (0.5 * (a + b), f[i])]
        peak_mag, f_peak = max(cands)
    else:
        peak_mag, f_peak = mag[i], f[i]
    db = magnitude_db(peak_mag)
    edge = max(magnitude_db(mag[0]), magnitude_db(mag[-1]))
    return Resonance(float(f_peak), float(db), float(db - edge))


@functools.lru_cache(maxsize=256)
def _dvc_resonance_hz(kp: float, ki: float, tau_dc: float, tau_i: float) -> float:
    p = replace(AFTER_TUNING, kp=kp, ki=ki, tau_dc=tau_dc, tau_i=tau_i)
    return resonant_frequency(build_gdvc(p, True), 0.1, 1000.0).frequency


def marginal_band(p: FeedbackParams) -> float:
    """Tolerance on max Re(pole) inside which the loop is called marginal."""
    return 1e-6 * TWO_PI * _dvc_resonance_hz(p.kp, p.ki, p.tau_dc, p.tau_i)


def _verdict(roots: np.ndarray, eps: float) -> StabilityVerdict:
    top = float(np.max(roots.real))
    lead = roots[np.isclose(roots.real, top, rtol=0, atol=1e-12 * max(1.0, abs(top)))]
    dom = complex(lead[np.argmax(lead.imag)])
    if top < -eps:
        cls = "stable"
    elif top <= eps:
        cls = "marginal"
    else:
        cls = "unstable"
    mag = abs(dom)
    zeta = -dom.real / mag if mag > 0 else 1.0
    return StabilityVerdict(cls, dom, abs(dom.imag) / TWO_PI, zeta)


def closed_loop_poles(p: FeedbackParams, k: float | None = None) -> np.ndarray:
    return poly_roots(characteristic_polynomial(p, k).coefficients)


def classify_stability(p: FeedbackParams, k: float | None = None) -> StabilityVerdict:
    """Verdict from the closed-loop poles; dominant pole = largest real part."""
    return _verdict(closed_loop_poles(p, k), marginal_band(p))


def max_pole_real(p: FeedbackParams, k: float | None = None) -> float:
    return float(np.max(closed_loop_poles(p, k).real))


def critical_bracket(p: FeedbackParams, k_lo: float, k_hi: float,
                     tol: float = 1e-4) -> tuple[float, float]:
    """Final (stable, not-stable) bisection bracket, narrower than ``tol``."""
    if not k_lo < k_hi:
        raise BracketInvalid("need k_lo < k_hi")
    if not classify_stability(p, k_lo).stable:
        raise BracketInvalid(f"not stable at k_lo={k_lo}")
    if classify_stability(p, k_hi).stable:
        raise BracketInvalid(f"stable at k_hi={k_hi}: bracket never destabilizes")
    lo, hi = k_lo, k_hi
    while hi - lo >= tol:
        mid = 0.5 * (lo + hi)
        if classify_stability(p, mid).stable:
            lo = mid
        else:
            hi = mid
    return lo, hi


def critical_gain(p: FeedbackParams, k_lo: float, k_hi: float, tol: float = 1e-4) -> float:
    """Loop factor at which the dominant pair crosses the imaginary axis.

    Bisection on the stability verdict; returns the midpoint of
    :func:`critical_bracket`.
    """
    lo, hi = critical_bracket(p, k_lo, k_hi, tol)
    return 0.5 * (lo + hi)


def gain_sweep(p: FeedbackParams, ks: Iterable[float]) -> list[tuple[float, float, float]]:
    """(k, max pole real part, dominant oscillation frequency) per loop factor."""
    ks = list(ks)

    def row(k):
        v = classify_stability(p, k)
        return (float(k), float(v.dominant_pole.real), v.oscillation_frequency)

    return _pmap(row, ks)


def calibrate_sync(p: FeedbackParams, k_unstable: float, k_stable: float,
                   target_hz: float = TARGET_OSC_HZ, tau_range=(0.001, 0.05),
                   points: int = 200) -> SyncCalibration:
    """Pick tau_sync so the loop oscillates near ``target_hz`` at ``k_unstable``.

    Scans a log grid of tau_sync values; a candidate is feasible when the
    loop is not stable at ``k_unstable`` and stable at ``k_stable``. Among
    feasible candidates the one whose oscillation frequency is closest to
    the target wins (first index on ties).
    """
    if not k_stable < k_unstable:
        raise ValueError("need k_stable < k_unstable")
    grid = np.geomspace(tau_range[0], tau_range[1], points)

    def probe(ts):
        q = replace(p, tau_sync=float(ts))
        hot = classify_stability(q, k_unstable)
        if hot.stable or not classify_stability(q, k_stable).stable:
            return None
        return hot.oscillation_frequency

    freqs = _pmap(probe, list(grid))
    best = None
    for ts, f in zip(grid, freqs):
        if f is not None and (best is None or abs(f - target_hz) < abs(best[1] - target_hz)):
            best = (float(ts), f)
    if best is None:
        raise NoFeasibleSync(
            f"no tau_sync in [{tau_range[0]}, {tau_range[1]}] s destabilizes k={k_unstable} "
            f"while keeping k={k_stable} stable"
        )
    return SyncCalibration(*best)


def phase_crossings(g: TransferFunction, f_lo: float, f_hi: float,
                    level_deg: float = 180.0, points_per_decade: int = 400) -> list[float]:
    """Frequencies where the unwrapped phase crosses an odd multiple of ``level_deg``."""
    f = log_grid(f_lo, f_hi, points_per_decade)
    ph = unwrap_deg(np.degrees(np.angle(freq_response(g, f))))
    shifted = (ph - level_deg) / 360.0
    band = np.floor(shifted)
    idx = np.flatnonzero(np.diff(band) != 0)
    out = []
    for i in idx:
        target = level_deg + 360.0 * max(band[i], band[i + 1])
        w = (target - ph[i]) / (ph[i + 1] - ph[i])
        out.append(float(f[i] * (f[i + 1] / f[i]) ** w))
    return out


if __name__ == "__main__":
    cal = calibrate_sync(replace(AFTER_TUNING, tau_sync=0.0), 0.4225, 0.1)
    print(repr(cal.tau_sync), cal.oscillation_frequency)
