"""Real-coefficient polynomial and rational transfer-function algebra.

Coefficient arrays are ordered highest degree first (``numpy.polyval``
convention). Nothing here cancels common factors: ``tf_mul`` of
``1/(s+1)`` and ``(s+1)`` is ``(s+1)/(s+1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from .errors import (
    ConvergenceFailure,
    DegenerateLoop,
    ImproperSystem,
    PoleOnAxis,
    StepTooLarge,
)
from .series import TimeSeries

TWO_PI = 2.0 * math.pi
MAG_FLOOR_DB = -300.0
_DIVERGENCE_LIMIT = 1e12
_ROOT_ITER_CAP = 1000
_ROOT_RESIDUAL = 1e-8


class Polynomial:
    """Immutable real polynomial, leading zeros trimmed on construction."""

    __slots__ = ("_c",)

    def __init__(self, coefficients: Iterable[float]):
        c = np.atleast_1d(np.asarray(coefficients, dtype=float)).ravel()
        if c.size and not np.all(np.isfinite(c)):
            raise ValueError("polynomial coefficients must be finite")
        nz = np.flatnonzero(c)
        c = c[nz[0]:].copy() if nz.size else np.zeros(1)
        c.setflags(write=False)
        self._c = c

    @property
    def coefficients(self) -> np.ndarray:
        return self._c

    @property
    def degree(self) -> int:
        return len(self._c) - 1

    def is_zero(self) -> bool:
        return len(self._c) == 1 and self._c[0] == 0.0

    def __call__(self, s):
        return np.polyval(self._c, s)

    def __mul__(self, other):
        if isinstance(other, Polynomial):
            return Polynomial(np.polymul(self._c, other._c))
        return Polynomial(self._c * float(other))

    __rmul__ = __mul__

    def __add__(self, other):
        other = other if isinstance(other, Polynomial) else Polynomial([other])
        return Polynomial(np.polyadd(self._c, other._c))

    def __neg__(self):
        return Polynomial(-self._c)

    def __sub__(self, other):
        return self + (-other if isinstance(other, Polynomial) else -float(other))

    def __eq__(self, other):
        return isinstance(other, Polynomial) and np.array_equal(self._c, other._c)

    def __hash__(self):
        return hash(self._c.tobytes())

    def __repr__(self):
        return f"Polynomial({self._c.tolist()})"


def _as_poly(p) -> Polynomial:
    return p if isinstance(p, Polynomial) else Polynomial(p)


@dataclass(frozen=True)
class TransferFunction:
    num: Polynomial
    den: Polynomial

    def __init__(self, num, den=(1.0,)):
        num, den = _as_poly(num), _as_poly(den)
        if den.is_zero():
            raise ValueError("denominator is the zero polynomial")
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)

    @classmethod
    def gain(cls, k: float) -> "TransferFunction":
        return cls([k], [1.0])

    def is_zero(self) -> bool:
        return self.num.is_zero()

    def is_proper(self) -> bool:
        return self.is_zero() or self.num.degree <= self.den.degree

    def __call__(self, s):
        return self.num(s) / self.den(s)

    def dc_gain(self) -> float:
        return float(self.num(0.0) / self.den(0.0))

    def __mul__(self, other):
        if not isinstance(other, TransferFunction):
            other = TransferFunction.gain(float(other))
        return tf_mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return TransferFunction(-self.num, self.den)

    def __repr__(self):
        return f"TransferFunction(num={self.num.coefficients.tolist()}, den={self.den.coefficients.tolist()})"


class FrequencyPoint(NamedTuple):
    frequency: float
    magnitude_db: float
    phase_deg: float


@dataclass(frozen=True)
class StateSpaceRealization:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: float

    @property
    def order(self) -> int:
        return self.A.shape[0]

    def __call__(self, s: complex) -> complex:
        """Transfer function C (sI - A)^-1 B + D at a complex point."""
        n = self.order
        if n == 0:
            return complex(self.D)
        x = np.linalg.solve(s * np.eye(n) - self.A, self.B[:, 0])
        return complex(self.C[0] @ x + self.D)


# -- algebra ------------------------------------------------------------------


def tf_mul(a: TransferFunction, b: TransferFunction) -> TransferFunction:
    return TransferFunction(a.num * b.num, a.den * b.den)


def tf_feedback(g: TransferFunction, h: TransferFunction | None = None) -> TransferFunction:
    """Negative-feedback closure g / (1 + g h); ``h`` defaults to unity."""
    h = TransferFunction.gain(1.0) if h is None else h
    den = g.den * h.den + g.num * h.num
    if den.is_zero():
        raise DegenerateLoop("1 + g*h is identically zero")
    return TransferFunction(g.num * h.den, den)


# -- frequency domain ---------------------------------------------------------


def freq_eval(g: TransferFunction, f: float) -> complex:
    if not f > 0:
        raise ValueError("frequency must be positive")
    s = 1j * TWO_PI * f
    d = g.den(s)
    if abs(d) < 1e-300:
        raise PoleOnAxis(f"denominator vanishes at {f} Hz")
    return complex(g.num(s) / d)


def freq_response(g: TransferFunction, freqs) -> np.ndarray:
    """Vectorised ``freq_eval`` over an array of frequencies in Hz."""
    f = np.asarray(freqs, dtype=float)
    s = 1j * TWO_PI * f
    d = g.den(s)
    if np.any(np.abs(d) < 1e-300):
        raise PoleOnAxis("denominator vanishes on the sweep grid")
    return g.num(s) / d


def log_grid(f_lo: float, f_hi: float, points_per_decade: int) -> np.ndarray:
    decades = math.log10(f_hi / f_lo)
    n = max(int(math.ceil(decades * points_per_decade)), 1) + 1
    return np.logspace(math.log10(f_lo), math.log10(f_hi), n)


def unwrap_deg(phase_deg: np.ndarray) -> np.ndarray:
    """Continuous phase seeded from the first sample's principal value."""
    p = np.asarray(phase_deg, dtype=float)
    step = np.diff(p)
    step = (step + 180.0) % 360.0 - 180.0
    return np.concatenate(([p[0]], p[0] + np.cumsum(step)))


def magnitude_db(h) -> np.ndarray:
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(np.abs(h))
    return np.maximum(db, MAG_FLOOR_DB)


def bode_sweep(g: TransferFunction, f_lo: float, f_hi: float,
               points_per_decade: int = 100) -> list[FrequencyPoint]:
    if not 0 < f_lo < f_hi:
        raise ValueError("need 0 < f_lo < f_hi")
    if points_per_decade < 10:
        raise ValueError("points_per_decade must be >= 10")
    f = log_grid(f_lo, f_hi, points_per_decade)
    h = freq_response(g, f)
    mag = magnitude_db(h)
    phase = unwrap_deg(np.degrees(np.angle(h)))
    return [FrequencyPoint(float(a), float(b), float(c)) for a, b, c in zip(f, mag, phase)]


# -- poles ----------------------------------------------------------------------


def _residual_ok(a: np.ndarray, z: np.ndarray) -> np.ndarray:
    n = len(a) - 1
    return np.abs(np.polyval(a, z)) / (abs(a[0]) * np.maximum(1.0, np.abs(z)) ** n) < _ROOT_RESIDUAL


def _pair_conjugates(z: np.ndarray) -> np.ndarray:
    """Force exact conjugate symmetry on roots of a real polynomial."""
    scale = np.maximum(1.0, np.abs(z))
    real_mask = np.abs(z.imag) <= 1e-10 * scale
    upper = list(z[(~real_mask) & (z.imag > 0)])
    lower = list(z[(~real_mask) & (z.imag < 0)])
    out = [complex(r.real, 0.0) for r in z[real_mask]]
    for u in sorted(upper, key=lambda c: (c.real, c.imag)):
        if lower:
            j = int(np.argmin([abs(u - np.conj(w)) for w in lower]))
            w = lower.pop(j)
            m = 0.5 * (u + np.conj(w))
            out += [m, np.conj(m)]
        else:
            out.append(complex(u.real, 0.0))
    out += [complex(w.real, 0.0) for w in lower]
    return np.array(out, dtype=complex)


def poly_roots(coefficients) -> np.ndarray:
    """All roots of a real polynomial by Aberth-Ehrlich simultaneous iteration.

    The polynomial is normalised to be monic first. Iteration stops once
    every root passes the scaled residual test
    ``|p(z)| / max(1, |z|)^n < 1e-8`` and the last correction is at
    round-off level; :class:`ConvergenceFailure` after 1000 sweeps.
    """
    a = Polynomial(coefficients).coefficients
    n = len(a) - 1
    if n < 1:
        raise ValueError("need degree >= 1")
    a = a / a[0]
    # zero roots are exact; peel them off
    nz = 0
    while a[-1] == 0.0 and len(a) > 1:
        a = a[:-1]
        nz += 1
    m = len(a) - 1
    found = [np.zeros(nz, dtype=complex)]
    if m == 1:
        found.append(np.array([-a[1]], dtype=complex))
    elif m > 1:
        da = np.polyder(a)
        # Fujiwara bound for the starting circle
        radius = 2.0 * max(abs(a[k]) ** (1.0 / k) for k in range(1, m + 1))
        radius = radius if radius > 0 else 1.0
        theta = 2.0 * math.pi * np.arange(m) / m + 0.4
        z = radius * 0.5 * np.exp(1j * theta) - a[1] / m
        for _ in range(_ROOT_ITER_CAP):
            p = np.polyval(a, z)
            dp = np.polyval(da, z)
            dp = np.where(dp == 0, 1e-300, dp)
            ratio = p / dp
            diff = z[:, None] - z[None, :]
            np.fill_diagonal(diff, np.inf)
            diff = np.where(diff == 0, 1e-300, diff)
            repulse = np.sum(1.0 / diff, axis=1)
            w = ratio / (1.0 - ratio * repulse)
            z = z - w
            small = np.abs(w) <= 1e-14 * np.maximum(1.0, np.abs(z))
            if np.all(_residual_ok(a, z)) and np.all(small | (np.abs(np.polyval(a, z)) == 0)):
                break
        else:
            if not np.all(_residual_ok(a, z)):
                raise ConvergenceFailure("root iteration exceeded 1000 sweeps")
        found.append(z)
    roots = _pair_conjugates(np.concatenate(found))
    if not np.all(_residual_ok(Polynomial(coefficients).coefficients, roots)):
        raise ConvergenceFailure("roots fail residual check after conjugate pairing")
    return roots[np.lexsort((roots.imag, roots.real))]


def poles(g: TransferFunction) -> np.ndarray:
    if g.den.degree < 1:
        raise ValueError("transfer function has no poles")
    return poly_roots(g.den.coefficients)


def zeros(g: TransferFunction) -> np.ndarray:
    if g.num.degree < 1:
        return np.zeros(0, dtype=complex)
    return poly_roots(g.num.coefficients)


# -- time domain -----------------------------------------------------------------


def to_state_space(g: TransferFunction) -> StateSpaceRealization:
    """Controllable canonical form."""
    if not g.is_proper():
        raise ImproperSystem("numerator degree exceeds denominator degree")
    a = g.den.coefficients / g.den.coefficients[0]
    n = len(a) - 1
    b = np.zeros(n + 1)
    nb = g.num.coefficients / g.den.coefficients[0]
    b[n + 1 - len(nb):] = nb
    d = float(b[0])
    A = np.zeros((n, n))
    if n:
        A[:-1, 1:] = np.eye(n - 1)
        A[-1, :] = -a[1:][::-1]
    B = np.zeros((n, 1))
    if n:
        B[-1, 0] = 1.0
    C = (b[1:] - d * a[1:])[::-1].reshape(1, n)
    return StateSpaceRealization(A, B, C, d)


def _rk4_lti(A: np.ndarray, Bu: np.ndarray, x: np.ndarray, dt: float) -> np.ndarray:
    k1 = A @ x + Bu
    k2 = A @ (x + 0.5 * dt * k1) + Bu
    k3 = A @ (x + 0.5 * dt * k2) + Bu
    k4 = A @ (x + dt * k3) + Bu
    return x + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def step_response(g: TransferFunction, t_end: float, dt: float,
                  amplitude: float = 1.0, name: str = "y", unit: str = "") -> TimeSeries:
    """Response to ``amplitude`` times a unit step at t=0, zero initial state.

    Fixed-step RK4 on the controllable canonical realization. Raises
    :class:`StepTooLarge` (with the computed prefix attached) once
    ``|y|`` exceeds 1e12.
    """
    if not (t_end > 0 and dt > 0):
        raise ValueError("t_end and dt must be positive")
    ss = to_state_space(g)
    nsteps = int(round(t_end / dt))
    y = np.empty(nsteps + 1)
    x = np.zeros(ss.order)
    Bu = ss.B[:, 0] * amplitude
    c = ss.C[0]
    du = ss.D * amplitude
    y[0] = c @ x + du if ss.order else du
    for i in range(1, nsteps + 1):
        if ss.order:
            x = _rk4_lti(ss.A, Bu, x, dt)
        y[i] = (c @ x if ss.order else 0.0) + du
        if not abs(y[i]) <= _DIVERGENCE_LIMIT:
            partial = TimeSeries(name, unit, 0.0, dt, y[:i], diverged=True)
            raise StepTooLarge(f"response exceeded 1e12 at t={i * dt:g} s", partial)
    return TimeSeries(name, unit, 0.0, dt, y)
