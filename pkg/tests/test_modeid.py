import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lelosc.errors import FlatSignal, WindowTooShort
from lelosc.modeid import (
    ThreePhaseRecord,
    compare_runs,
    dominant_mode,
    instantaneous_power,
    read_waveform_csv,
    rms_window,
)
from lelosc.series import TimeSeries

FS = 1000.0


def _series(x, fs=FS, t0=0.0, name="x", unit="MW"):
    return TimeSeries(name, unit, t0, 1.0 / fs, np.asarray(x, dtype=float))


def _t(duration, fs=FS):
    return np.arange(int(round(duration * fs))) / fs


def _balanced(t, f=60.0, amp_v=math.sqrt(2), amp_i=math.sqrt(2), mod=None):
    ph = [0.0, -2 * math.pi / 3, 2 * math.pi / 3]
    v = [amp_v * np.cos(2 * math.pi * f * t + a) for a in ph]
    m = 1.0 if mod is None else mod
    i = [amp_i * m * np.cos(2 * math.pi * f * t + a) for a in ph]
    return v, i


# -- dominant_mode ---------------------------------------------------------------


def test_event_proxy_sinusoid():
    t = _t(2.0)
    est = dominant_mode(_series(320 + 25 * np.sin(2 * math.pi * 23 * t)))
    assert est.frequency == pytest.approx(23, abs=0.1)
    assert est.peak_to_peak == pytest.approx(50, rel=0.01)
    assert abs(est.growth_rate) < 0.05
    assert est.reliable and est.prominence_db >= 3


def test_exponential_decay_rate():
    t = _t(2.0)
    est = dominant_mode(_series(np.exp(-3 * t) * np.sin(2 * math.pi * 23 * t)))
    assert est.growth_rate == pytest.approx(-3, rel=0.05)
    assert est.frequency == pytest.approx(23, abs=0.2)


def test_growing_oscillation():
    t = _t(2.0)
    est = dominant_mode(_series(np.exp(0.5 * t) * np.sin(2 * math.pi * 26 * t)))
    assert est.growth_rate == pytest.approx(0.5, abs=0.05)


@settings(max_examples=30, deadline=None)
@given(st.floats(5, 200))
def test_frequency_error_bound(f):
    t = _t(2.0)
    est = dominant_mode(_series(np.sin(2 * math.pi * f * t + 0.3)))
    bin_width = FS / len(t)
    assert abs(est.frequency - f) < max(0.05, 0.5 * bin_width)


def test_window_selects_samples():
    t = _t(4.0)
    x = np.where(t < 2, 0.0, np.sin(2 * math.pi * 23 * t))
    est = dominant_mode(_series(x), (2.0, 4.0))
    assert est.window == (2.0, pytest.approx(3.999))
    assert est.frequency == pytest.approx(23, abs=0.1)


def test_flat_signal_raises_with_estimate():
    with pytest.raises(FlatSignal) as ei:
        dominant_mode(_series(np.full(2000, 5.0)))
    assert ei.value.estimate.peak_to_peak == 0 and not ei.value.estimate.reliable


def test_flat_spectrum_is_flagged():
    # a centred impulse has a flat magnitude spectrum: no peak stands out
    x = np.zeros(2001)
    x[1000] = 1.0
    with pytest.raises(FlatSignal) as ei:
        dominant_mode(_series(x))
    assert ei.value.estimate.prominence_db < 3 and not ei.value.estimate.reliable


def test_too_short():
    with pytest.raises(WindowTooShort):
        dominant_mode(_series([0.0, 1.0, 0.0, -1.0]))


@settings(max_examples=25, deadline=None)
@given(st.floats(0.01, 1e3))
def test_amplitude_scaling(c):
    t = _t(2.0)
    x = np.exp(-1.5 * t) * np.sin(2 * math.pi * 23 * t)
    a = dominant_mode(_series(x))
    b = dominant_mode(_series(c * x))
    assert b.peak_to_peak == pytest.approx(c * a.peak_to_peak, rel=1e-9)
    assert b.frequency == pytest.approx(a.frequency, rel=1e-9)
    assert b.growth_rate == pytest.approx(a.growth_rate, rel=1e-9, abs=1e-12)


def test_time_shift_invariance():
    t = _t(6.0)
    x = np.exp(-0.5 * t) * np.sin(2 * math.pi * 20 * t)
    s = _series(x)
    a = dominant_mode(s, (1.0, 3.0))
    b = dominant_mode(s, (2.5, 4.5))  # 2 s later, same 40-cycle count
    assert b.frequency == pytest.approx(a.frequency, rel=0.01)
    assert b.growth_rate == pytest.approx(a.growth_rate, rel=0.01)


# -- three-phase / rms -----------------------------------------------------------


def test_balanced_power_is_constant():
    t = _t(0.5, fs=6000)
    v, i = _balanced(t)
    p = instantaneous_power(ThreePhaseRecord(1 / 6000, *v, *i))
    np.testing.assert_allclose(p.samples, 3.0, rtol=1e-9)


def test_zero_currents():
    t = _t(0.1, fs=6000)
    v, _ = _balanced(t)
    z = np.zeros_like(t)
    p = instantaneous_power(ThreePhaseRecord(1 / 6000, *v, z, z, z))
    assert np.all(p.samples == 0)


def test_modulated_current_power_mode():
    t = _t(2.0, fs=1200)
    mod = 1 + 0.1 * np.sin(2 * math.pi * 23 * t)
    v, i = _balanced(t, mod=mod)
    p = instantaneous_power(ThreePhaseRecord(1 / 1200, *v, *i))
    # p = 3 * (1 + 0.1 sin(2 pi 23 t)) exactly for a balanced set
    np.testing.assert_allclose(p.samples, 3 * mod, rtol=1e-9)
    est = dominant_mode(p)
    assert est.frequency == pytest.approx(23, abs=0.1)
    assert est.peak_to_peak == pytest.approx(0.6, rel=0.01)


def test_three_phase_record_validation():
    with pytest.raises(ValueError):
        ThreePhaseRecord(1e-3, [1, 2], [1, 2], [1, 2], [1], [1], [1])


def test_rms_of_sine():
    t = _t(1.0, fs=6000)
    r = rms_window(_series(np.sin(2 * math.pi * 60 * t), fs=6000), 1, 60)
    assert np.max(np.abs(r.samples[100:] - 1 / math.sqrt(2))) < 1e-4


def test_rms_of_constant():
    r = rms_window(_series(np.full(600, 5.0), fs=6000), 1, 60)
    np.testing.assert_allclose(r.samples, 5.0)


def test_rms_carries_modulation():
    t = _t(2.0, fs=6000)
    x = (1 + 0.1 * np.sin(2 * math.pi * 23 * t)) * np.sin(2 * math.pi * 60 * t)
    r = rms_window(_series(x, fs=6000), 1, 60)
    est = dominant_mode(r, (0.1, 2.0))
    assert est.frequency == pytest.approx(23, abs=0.2)


def test_rms_needs_enough_samples():
    with pytest.raises(WindowTooShort):
        rms_window(_series(np.ones(100), fs=400), 1, 60)


# -- compare_runs ----------------------------------------------------------------


def test_compare_identical():
    t = _t(2.0)
    s = _series(np.sin(2 * math.pi * 23 * t))
    rep = compare_runs(s, s, (0.0, 2.0))
    assert rep["delta_frequency_hz"] == 0 and rep["delta_peak_to_peak_rel"] == 0


def test_compare_frequency_offset():
    t = _t(2.0)
    a = _series(np.sin(2 * math.pi * 23 * t))
    b = _series(np.sin(2 * math.pi * 22.3 * t))
    assert compare_runs(a, b, (0.0, 2.0))["delta_frequency_hz"] == pytest.approx(0.7, abs=0.1)


def test_compare_propagates_flat():
    t = _t(2.0)
    with pytest.raises(FlatSignal):
        compare_runs(_series(np.sin(2 * math.pi * 23 * t)), _series(np.zeros_like(t)), (0, 2))


def test_compare_sim_against_event_proxy():
    t = _t(2.0)
    event = _series(320 + 25 * np.sin(2 * math.pi * 23 * t))
    sim = _series(300 + 20 * np.exp(-0.2 * t) * np.sin(2 * math.pi * 22.3 * t))
    rep = compare_runs(sim, event, (0.0, 2.0))
    assert rep["a"].reliable and rep["b"].reliable
    assert rep["delta_peak_to_peak_rel"] < 0


# -- CSV input -------------------------------------------------------------------


def test_read_single_series(tmp_path):
    s = _series(np.sin(2 * math.pi * 5 * _t(1.0)), name="P_ac", unit="MW")
    s.to_csv(tmp_path / "p.csv")
    back = read_waveform_csv(tmp_path / "p.csv")
    assert (back.name, back.unit) == ("P_ac", "MW")
    np.testing.assert_array_equal(back.samples, s.samples)


def test_read_three_phase(tmp_path):
    t = _t(0.2, fs=1200)
    v, i = _balanced(t)
    np.savetxt(tmp_path / "r.csv", np.column_stack([t, *v, *i]), delimiter=",",
               header="t,va,vb,vc,ia,ib,ic", comments="")
    rec = read_waveform_csv(tmp_path / "r.csv")
    assert isinstance(rec, ThreePhaseRecord)
    assert rec.dt == pytest.approx(1 / 1200)


def test_read_rejects_bad_shape(tmp_path):
    (tmp_path / "bad.csv").write_text("t,a,b\n0,1,2\n1,2,3\n")
    with pytest.raises(ValueError):
        read_waveform_csv(tmp_path / "bad.csv")
    (tmp_path / "gap.csv").write_text("t,a\n0,1\n1,2\n3,3\n")
    with pytest.raises(ValueError):
        read_waveform_csv(tmp_path / "gap.csv")
