import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest

from lelosc.cli import main
from lelosc.config import ConfigError, default_document, dump_config, load_config, parse_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
BEFORE = str(CONFIGS / "before_tuning.json")


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def _write_cfg(tmp_path, mutate=None, name="cfg.json"):
    doc = default_document()
    if mutate:
        mutate(doc)
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


# -- config ----------------------------------------------------------------------


def test_config_round_trip():
    doc = default_document()
    params, scenario = parse_config(doc)
    assert dump_config(params, scenario) == doc
    assert parse_config(dump_config(params, scenario)) == (params, scenario)


def test_shipped_configs_load():
    for name in ("after_tuning", "before_tuning"):
        load_config(CONFIGS / f"{name}.json")


@pytest.mark.parametrize("mutate", [
    lambda d: d["grid"].update(extra=1.0),
    lambda d: d.update(plot={}),
    lambda d: d["dvc"].pop("kp"),
    lambda d: d["dvc"].update(kp=True),
    lambda d: d["dvc"].update(kp="2.8"),
    lambda d: d["sync"].update(tau_sync=float("nan")),
    lambda d: d["scenario"].update(pdc_profile=[[0, 0.1, 3]]),
    lambda d: d["dvc"].update(tau_dc=-1.0),
])
def test_config_rejects(mutate):
    doc = default_document()
    mutate(doc)
    with pytest.raises(ConfigError):
        parse_config(doc)


# -- bode ------------------------------------------------------------------------


def test_bode_gdvc(tmp_path, capsys):
    out = tmp_path / "b.csv"
    assert main(["bode", "gdvc", "--out", str(out)]) == 0
    rows = _rows(out)
    assert rows[0] == ["frequency_hz", "magnitude_db", "phase_deg_unwrapped"]
    assert len(rows) == 202
    f = float(capsys.readouterr().out.split("resonant_frequency_hz=")[1].split()[0])
    assert 25 <= f <= 27


def test_bode_zero_loop(tmp_path):
    cfg = _write_cfg(tmp_path, lambda d: d["grid"].update(id0=0.0))
    out = tmp_path / "z.csv"
    assert main(["bode", "loopgain", "--config", cfg, "--out", str(out)]) == 0
    assert all(float(r[1]) <= -300 for r in _rows(out)[1:])


def test_bode_malformed_config(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    out = tmp_path / "never.csv"
    assert main(["bode", "gdvc", "--config", str(bad), "--out", str(out)]) == 2
    assert not out.exists()


# -- step ------------------------------------------------------------------------


def _verdict(capsys):
    return capsys.readouterr().out.split("verdict=")[1].split()[0]


def test_step_after_tuning(tmp_path, capsys):
    out = tmp_path / "s.csv"
    assert main(["step", "--k", "0.425", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert text.split("verdict=")[1].split()[0] in ("marginal", "unstable")
    assert 23 <= float(text.split("frequency_hz=")[1].split()[0]) <= 29
    rows = _rows(out)
    assert rows[0] == ["t [s]", "delta_v_ac [pu]"]
    y = np.array([float(r[1]) for r in rows[1:]])
    # no decay across 1 s: the last 0.2 s swing at least as large as 0.2-0.4 s
    n = len(y)
    assert np.ptp(y[int(0.8 * n):]) >= np.ptp(y[int(0.2 * n):int(0.4 * n)])


def test_step_low_gain_stable(tmp_path, capsys):
    assert main(["step", "--k", "0.1", "--out", str(tmp_path / "s.csv")]) == 0
    assert _verdict(capsys) == "stable"


def test_step_before_tuning(tmp_path, capsys):
    cfg = BEFORE
    assert main(["step", "--config", cfg, "--k", "0.425", "--out", str(tmp_path / "s.csv")]) == 0
    assert _verdict(capsys) == "stable"


# -- sweep -----------------------------------------------------------------------


def test_sweep_after_tuning(tmp_path, capsys):
    out = tmp_path / "k.csv"
    assert main(["sweep", "--k-lo", "0.05", "--k-hi", "0.5", "--out", str(out)]) == 0
    k = float(capsys.readouterr().out.split("critical_k=")[1])
    assert 0.1 < k < 0.425
    assert _rows(out)[0] == ["k", "max_pole_real", "freq_hz"]


def test_sweep_before_tuning(tmp_path, capsys):
    cfg = BEFORE
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "k.csv")]) == 4
    assert "stable throughout" in capsys.readouterr().out


def test_sweep_single_point(tmp_path):
    out = tmp_path / "k.csv"
    main(["sweep", "--k-lo", "0.3", "--k-hi", "0.3", "--points", "1", "--out", str(out)])
    assert len(_rows(out)) == 2


def test_sweep_bad_bracket(tmp_path):
    assert main(["sweep", "--k-lo", "0.5", "--k-hi", "0.1", "--out", str(tmp_path / "k.csv")]) == 2


# -- sim -------------------------------------------------------------------------


def _short_sim_cfg(tmp_path, t_end=3.0):
    def mutate(d):
        d["scenario"]["t_end"] = t_end

    return _write_cfg(tmp_path, mutate)


def test_sim_writes_all_signals(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["sim", "--config", _short_sim_cfg(tmp_path), "--level", "75", "--out", str(out)]) == 0
    for name in ("P_ac_mw", "V", "V_dc", "i_d", "i_d_ref"):
        rows = _rows(out / f"{name}.csv")
        assert rows[0][0] == "t [s]" and len(rows) == 60002
    assert _rows(out / "P_ac_mw.csv")[0][1] == "P_ac [MW]"
    text = capsys.readouterr().out
    assert "P_ac final 2 s" in text


def test_sim_negligible_load_is_flat(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["sim", "--config", _short_sim_cfg(tmp_path), "--level", "0.1", "--out", str(out)]) == 0
    assert "FlatSignal" in capsys.readouterr().out


def test_sim_divergence_exit_5(tmp_path):
    def mutate(d):
        d["scenario"]["t_end"] = 2.0
        d["scenario"]["pdc_profile"] = [[0, 0.5], [0.1, 0.5], [0.3, 0.95]]

    out = tmp_path / "run"
    assert main(["sim", "--config", _write_cfg(tmp_path, mutate), "--out", str(out)]) == 5
    rows = _rows(out / "V.csv")
    assert 2 < len(rows) < 40002


def test_sim_bad_level(tmp_path):
    assert main(["sim", "--level", "150", "--out", str(tmp_path / "run")]) == 2


# -- analyze ---------------------------------------------------------------------


def test_analyze_event_proxy(tmp_path):
    t = np.arange(2000) / 1000
    src = tmp_path / "p.csv"
    np.savetxt(src, np.column_stack([t, 320 + 25 * np.sin(2 * math.pi * 23 * t)]),
               delimiter=",", header="t [s],P [MW]", comments="")
    out = tmp_path / "e.csv"
    assert main(["analyze", str(src), "--out", str(out)]) == 0
    hdr, row = _rows(out)
    est = dict(zip(hdr, row))
    assert float(est["frequency_hz"]) == pytest.approx(23, abs=0.1)
    assert float(est["peak_to_peak"]) == pytest.approx(50, rel=0.01)
    assert est["reliable"] == "1"


def test_analyze_three_phase(tmp_path):
    t = np.arange(2400) / 1200
    ph = [0, -2 * math.pi / 3, 2 * math.pi / 3]
    mod = 1 + 0.1 * np.sin(2 * math.pi * 23 * t)
    v = [np.cos(2 * math.pi * 60 * t + a) for a in ph]
    i = [mod * np.cos(2 * math.pi * 60 * t + a) for a in ph]
    src = tmp_path / "r.csv"
    np.savetxt(src, np.column_stack([t, *v, *i]), delimiter=",",
               header="t,va,vb,vc,ia,ib,ic", comments="")
    out = tmp_path / "e.csv"
    assert main(["analyze", str(src), "--out", str(out)]) == 0
    assert float(_rows(out)[1][0]) == pytest.approx(23, abs=0.1)


def test_analyze_constant_exit_6(tmp_path):
    t = np.arange(500) / 1000
    src = tmp_path / "c.csv"
    np.savetxt(src, np.column_stack([t, np.full_like(t, 7.0)]), delimiter=",",
               header="t [s],x", comments="")
    out = tmp_path / "e.csv"
    assert main(["analyze", str(src), "--out", str(out)]) == 6
    assert _rows(out)[1][-1] == "0"


def test_analyze_unparseable(tmp_path):
    src = tmp_path / "junk.csv"
    src.write_text("t,x\n0,a\n")
    assert main(["analyze", str(src), "--out", str(tmp_path / "e.csv")]) == 2


# -- output format ---------------------------------------------------------------


def test_outputs_are_byte_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["step", "--out", str(a)])
    main(["step", "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()
    data = a.read_bytes()
    assert b"\r" not in data
    assert data.split(b"\n")[2].split(b",")[0] == b"5.0000000000000002e-05"
