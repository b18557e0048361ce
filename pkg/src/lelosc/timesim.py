"""Nonlinear averaged simulation of an electronic load on a Thevenin grid.

States: DC-link voltage ``vdc``, PI integrator ``xi``, delivered real
current ``id`` and synchronizing angle ``delta``. The network is algebraic
and solved exactly at every RK4 stage::

    V e^{j delta_v} = vg - j xg id e^{j delta}

    2 tau_dc vdc dvdc/dt = p_ac - P_dc(t)
    dxi/dt              = vdc_ref - vdc          (frozen while winding up)
    did/dt              = (clamp(kp e + ki xi, 0, i_limit) - id) / tau_i
    ddelta/dt           = (delta_v - delta) / tau_sync
    p_ac                = V id cos(delta_v - delta)

``tau_i == 0`` or ``tau_sync == 0`` make the corresponding state track its
target algebraically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import InfeasibleLoad, NumericalDivergence, VoltageCollapse
from .lelmodel import FeedbackParams
from .series import TimeSeries

COLLAPSE_VOLTAGE = 0.2
SIGNALS = (
    ("P_ac", "pu"), ("V", "pu"), ("V_dc", "pu"), ("i_d", "pu"),
    ("i_d_ref", "pu"), ("delta", "rad"), ("delta_v", "rad"),
)


@dataclass(frozen=True)
class Scenario:
    params: FeedbackParams
    pdc_profile: tuple = ((0.0, 0.0),)
    t_end: float = 10.0
    dt: float = 50e-6
    i_limit: float = 1.5
    p_base_mw: float = 320.0

    def __post_init__(self):
        prof = tuple((float(t), float(p)) for t, p in self.pdc_profile)
        object.__setattr__(self, "pdc_profile", prof)
        if not prof or prof[0][0] != 0.0:
            raise ValueError("pdc_profile must start at t = 0")
        ts = [t for t, _ in prof]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("pdc_profile times must be strictly increasing")
        if any(p < 0 or not math.isfinite(p) for _, p in prof):
            raise ValueError("pdc_profile powers must be finite and non-negative")
        if not (self.t_end > 0 and self.dt > 0 and self.i_limit > 0 and self.p_base_mw > 0):
            raise ValueError("t_end, dt, i_limit and p_base_mw must be positive")
        taus = [x for x in (self.params.tau_i, self.params.tau_sync, 2 * self.params.tau_dc) if x > 0]
        if self.dt > min(taus) / 20 * (1 + 1e-12):
            raise ValueError(f"dt={self.dt} exceeds min time constant / 20 = {min(taus) / 20}")

    def pdc(self, t: float) -> float:
        prof = self.pdc_profile
        if t >= prof[-1][0]:
            return prof[-1][1]
        for (t0, p0), (t1, p1) in zip(prof, prof[1:]):
            if t < t1:
                return p0 + (p1 - p0) * (t - t0) / (t1 - t0)
        return prof[-1][1]


class SimState(NamedTuple):
    vdc: float
    xi: float
    id: float
    delta: float
    v: float
    delta_v: float
    p_ac: float


def network_solve(id: float, delta: float, vg: float, xg: float) -> tuple[float, float]:
    """Bus voltage magnitude and angle for current ``id`` at angle ``delta``."""
    re = vg + xg * id * math.sin(delta)
    im = -xg * id * math.cos(delta)
    v = math.hypot(re, im)
    if v == 0.0:
        raise VoltageCollapse("bus voltage is exactly zero")
    if v < COLLAPSE_VOLTAGE:
        raise VoltageCollapse(f"bus voltage {v:.4f} pu below {COLLAPSE_VOLTAGE} pu")
    return v, math.atan2(im, re)


def network_residual(v, delta_v, id, delta, vg, xg) -> np.ndarray:
    """|V e^{j delta_v} + j xg id e^{j delta} - vg|, elementwise."""
    v, delta_v, id, delta = map(np.asarray, (v, delta_v, id, delta))
    return np.abs(v * np.exp(1j * delta_v) + 1j * xg * id * np.exp(1j * delta) - vg)


def max_power(vg: float, xg: float) -> float:
    """Largest P = id sqrt(vg^2 - (xg id)^2) the Thevenin source can deliver."""
    return math.inf if xg == 0 else vg * vg / (2.0 * xg)


def rated_power(params: FeedbackParams) -> float:
    """DC power drawn at id = 1 pu on the configured grid."""
    return math.sqrt(params.vg ** 2 - params.xg ** 2)


def equilibrium_current(pdc: float, vg: float, xg: float) -> float:
    """Low-current root of id sqrt(vg^2 - (xg id)^2) = pdc, by bisection."""
    if pdc < 0:
        raise ValueError("negative load")
    if pdc > max_power(vg, xg):
        raise InfeasibleLoad(f"P_dc={pdc} exceeds transferable maximum {max_power(vg, xg):.6f}")
    if pdc == 0:
        return 0.0
    if xg == 0:
        return pdc / vg
    lo, hi = 0.0, vg / (xg * math.sqrt(2.0))
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid * math.sqrt(max(vg * vg - (xg * mid) ** 2, 0.0)) < pdc:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    return 0.5 * (lo + hi)


def init_equilibrium(sc: Scenario) -> SimState:
    p = sc.params
    pdc = sc.pdc(0.0)
    i0 = equilibrium_current(pdc, p.vg, p.xg)
    if p.ki == 0 and i0 > 0:
        raise ValueError("a loaded equilibrium needs integral action (ki > 0)")
    if i0 > sc.i_limit:
        raise InfeasibleLoad(f"equilibrium current {i0:.4f} exceeds i_limit {sc.i_limit}")
    v = math.sqrt(p.vg ** 2 - (p.xg * i0) ** 2)
    delta = -math.atan2(p.xg * i0, v)
    v, delta_v = network_solve(i0, delta, p.vg, p.xg)
    xi = i0 / p.ki if p.ki else 0.0
    return SimState(p.vdc_ref, xi, i0, delta_v, v, delta_v, v * i0 * math.cos(0.0))


def _partial(rec: dict, n: int, dt: float) -> dict:
    return {
        name: TimeSeries(name, unit, 0.0, dt, np.asarray(rec[name][:n]), diverged=True)
        for name, unit in SIGNALS
    }


def simulate(sc: Scenario) -> dict[str, TimeSeries]:
    """Fixed-step RK4 run from :func:`init_equilibrium`.

    Returns per-unit :class:`TimeSeries` keyed ``P_ac, V, V_dc, i_d,
    i_d_ref, delta, delta_v``. :class:`VoltageCollapse` and
    :class:`NumericalDivergence` carry the signals up to the failure in
    ``partial``.
    """
    p = sc.params
    kp, ki, tdc2 = p.kp, p.ki, 2.0 * p.tau_dc
    tau_i, tau_s, vg, xg, vref, ilim = p.tau_i, p.tau_sync, p.vg, p.xg, p.vdc_ref, sc.i_limit
    dt = sc.dt
    n = int(round(sc.t_end / dt))
    prof_t = np.array([t for t, _ in sc.pdc_profile])
    prof_p = np.array([q for _, q in sc.pdc_profile])
    # load profile sampled at step start, midpoint and end
    tgrid = np.arange(2 * n + 1) * (0.5 * dt)
    pdc_half = np.interp(tgrid, prof_t, prof_p).tolist()

    sin, cos, atan2, hypot = math.sin, math.cos, math.atan2, math.hypot

    def iref_of(vdc, xi):
        e = vref - vdc
        u = kp * e + ki * xi
        if u > ilim:
            return ilim, (0.0 if e > 0 else e)
        if u < 0.0:
            return 0.0, (0.0 if e < 0 else e)
        return u, e

    def net(i, d):
        re = vg + xg * i * sin(d)
        im = -xg * i * cos(d)
        v = hypot(re, im)
        if v < COLLAPSE_VOLTAGE:
            raise VoltageCollapse(f"bus voltage {v:.4f} pu below {COLLAPSE_VOLTAGE} pu")
        return v, atan2(im, re)

    def deriv(vdc, xi, i, d, pdc):
        v, dv = net(i, d)
        pac = v * i * cos(dv - d)
        ir, dxi = iref_of(vdc, xi)
        return (
            (pac - pdc) / (tdc2 * vdc),
            dxi,
            (ir - i) / tau_i if tau_i > 0 else 0.0,
            (dv - d) / tau_s if tau_s > 0 else 0.0,
        )

    def algebraic(vdc, xi, i, d):
        # zero time constants: states follow their targets instantly
        if tau_i == 0:
            i = iref_of(vdc, xi)[0]
        if tau_s == 0:
            for _ in range(50):
                d_new = net(i, d)[1]
                if abs(d_new - d) < 1e-15:
                    break
                d = d_new
        return i, d

    s0 = init_equilibrium(sc)
    vdc, xi, i, d = s0.vdc, s0.xi, s0.id, s0.delta
    rec = {name: [0.0] * (n + 1) for name, _ in SIGNALS}

    def record(k, vdc, xi, i, d):
        v, dv = net(i, d)
        rec["P_ac"][k] = v * i * cos(dv - d)
        rec["V"][k] = v
        rec["V_dc"][k] = vdc
        rec["i_d"][k] = i
        rec["i_d_ref"][k] = iref_of(vdc, xi)[0]
        rec["delta"][k] = d
        rec["delta_v"][k] = dv

    record(0, vdc, xi, i, d)
    h, h2 = dt, 0.5 * dt
    k = 0
    try:
        for k in range(1, n + 1):
            p0, pm, p1 = pdc_half[2 * k - 2], pdc_half[2 * k - 1], pdc_half[2 * k]
            a1, b1, c1, e1 = deriv(vdc, xi, i, d, p0)
            i2, d2 = algebraic(vdc + h2 * a1, xi + h2 * b1, i + h2 * c1, d + h2 * e1)
            a2, b2, c2, e2 = deriv(vdc + h2 * a1, xi + h2 * b1, i2, d2, pm)
            i3, d3 = algebraic(vdc + h2 * a2, xi + h2 * b2, i + h2 * c2, d + h2 * e2)
            a3, b3, c3, e3 = deriv(vdc + h2 * a2, xi + h2 * b2, i3, d3, pm)
            i4, d4 = algebraic(vdc + h * a3, xi + h * b3, i + h * c3, d + h * e3)
            a4, b4, c4, e4 = deriv(vdc + h * a3, xi + h * b3, i4, d4, p1)
            vdc += h / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
            xi += h / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4)
            i += h / 6.0 * (c1 + 2 * c2 + 2 * c3 + c4)
            d += h / 6.0 * (e1 + 2 * e2 + 2 * e3 + e4)
            i, d = algebraic(vdc, xi, i, d)
            if not (math.isfinite(vdc) and math.isfinite(xi) and math.isfinite(i)
                    and math.isfinite(d)) or vdc <= 0.0:
                raise NumericalDivergence(f"state left the valid region at t={k * dt:g} s")
            record(k, vdc, xi, i, d)
    except (VoltageCollapse, NumericalDivergence) as exc:
        exc.partial = _partial(rec, k, dt)
        raise
    return {
        name: TimeSeries(name, unit, 0.0, dt, np.asarray(rec[name])) for name, unit in SIGNALS
    }


def to_mw(series: TimeSeries, p_base_mw: float) -> TimeSeries:
    return series.replace(samples=series.samples * p_base_mw, unit="MW")


def ramp_profile(target: float, start: float, t_hold: float = 1.0, t_ramp: float = 1.0,
                 t_end: float = 10.0) -> tuple:
    """Hold ``start``, ramp linearly to ``target`` over ``t_ramp``, then hold."""
    prof = [(0.0, start), (t_hold, start), (t_hold + t_ramp, target)]
    if t_end > t_hold + t_ramp:
        prof.append((t_end, target))
    return tuple(prof)


def level_scenario(base: Scenario, level_percent: float, pre_fraction: float = 0.5,
                   t_hold: float = 1.0, t_ramp: float = 1.0) -> Scenario:
    """Scenario ramping the DC load to ``level_percent`` of rated power.

    Rated power is the DC load drawn at id = 1 pu; the run starts at
    ``pre_fraction`` of the target level.
    """
    if not 0 < level_percent <= 100:
        raise ValueError("level_percent must be in (0, 100]")
    target = level_percent / 100.0 * rated_power(base.params)
    prof = ramp_profile(target, pre_fraction * target, t_hold, t_ramp, base.t_end)
    return Scenario(base.params, prof, base.t_end, base.dt, base.i_limit, base.p_base_mw)
