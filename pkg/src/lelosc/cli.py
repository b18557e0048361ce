"""Command-line front end: ``lelosc {bode,step,sweep,sim,analyze}``.

Exit codes: 0 ok, 2 config/input parse error, 3 numerical failure,
4 sweep never destabilizes, 5 simulation collapse/divergence,
6 flat signal in ``analyze``.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from pathlib import Path

import numpy as np

from . import lelmodel, modeid, timesim
from .config import ConfigError, load_config
from .errors import (
    BracketInvalid,
    FlatSignal,
    LelOscError,
    NumericalDivergence,
    StepTooLarge,
    VoltageCollapse,
)
from .ratfun import bode_sweep, step_response
from .series import fmt

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_STABLE, EXIT_SIM, EXIT_FLAT = 0, 2, 3, 4, 5, 6

STEP_T_END = 1.0
STEP_DT = 50e-6
STEP_LOAD_DROP = -0.1  # pu DC-load step applied in `step`
SIM_SIGNALS = ("P_ac", "V", "V_dc", "i_d", "i_d_ref")
ESTIMATE_HEADER = ["frequency_hz", "peak_to_peak", "growth_rate", "window_start_s",
                   "window_end_s", "prominence_db", "reliable"]


def _write_rows(path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(x) if not isinstance(x, str) else x for x in r])
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="")


def _v0_note(p: lelmodel.FeedbackParams) -> str:
    return (f"note: small-signal model assumes V0 = 1 pu; exact network gives "
            f"V0 = {p.v0_exact:.5f} pu at id0 = {p.id0:g} pu")


def _format_estimate(e: modeid.ModeEstimate, unit: str = "") -> str:
    u = f" {unit}" if unit else ""
    return (f"frequency_hz={e.frequency:.4f} peak_to_peak={e.peak_to_peak:.6g}{u} "
            f"growth_rate={e.growth_rate:.4f} prominence_db={e.prominence_db:.1f} "
            f"reliable={'yes' if e.reliable else 'no'}")


def _estimate_row(e: modeid.ModeEstimate) -> list:
    return [e.frequency, e.peak_to_peak, e.growth_rate, e.window[0], e.window[1],
            e.prominence_db, "1" if e.reliable else "0"]


# -- commands ---------------------------------------------------------------------


def cmd_bode(args) -> int:
    p, _ = load_config(args.config)
    g = {
        "gdvc": lambda: lelmodel.build_gdvc(p, True),
        "gsync": lambda: lelmodel.build_gsync(p),
        "loopgain": lambda: lelmodel.build_loop_gain(p),
    }[args.which]()
    pts = bode_sweep(g, args.f_lo, args.f_hi, args.points_per_decade)
    res = lelmodel.resonant_frequency(g, args.f_lo, args.f_hi)
    _write_rows(args.out, ["frequency_hz", "magnitude_db", "phase_deg_unwrapped"], pts)
    ph = float(np.interp(math.log(res.frequency), [math.log(x.frequency) for x in pts],
                         [x.phase_deg for x in pts]))
    print(f"resonant_frequency_hz={res.frequency:.3f} magnitude_db={res.magnitude_db:.3f} "
          f"phase_deg={ph:.2f}" + (" flat" if res.flat else ""))
    if args.which == "loopgain" and not g.is_zero():
        xs = lelmodel.phase_crossings(g, args.f_lo, args.f_hi)
        print("phase_180_crossings_hz=" + ",".join(f"{x:.3f}" for x in xs))
    return EXIT_OK


def cmd_step(args) -> int:
    p, _ = load_config(args.config)
    k = p.loop_factor if args.k is None else args.k
    g = lelmodel.build_closed_loop(p, "ac_voltage", k)
    v = lelmodel.classify_stability(p, k)
    try:
        y = step_response(g, STEP_T_END, STEP_DT, amplitude=STEP_LOAD_DROP,
                          name="delta_v_ac", unit="pu")
        code = EXIT_OK
    except StepTooLarge as exc:
        y, code = exc.partial, EXIT_NUMERIC
        print(f"error: {exc}", file=sys.stderr)
    y.to_csv(args.out)
    print(f"verdict={v.cls} frequency_hz={v.oscillation_frequency:.3f} "
          f"max_pole_real={v.dominant_pole.real:.5g} k={k:.6g}")
    print(_v0_note(p.with_loop_factor(k)))
    return code


def cmd_sweep(args) -> int:
    p, _ = load_config(args.config)
    if args.points < 1 or args.k_lo > args.k_hi or (args.points > 1 and args.k_lo == args.k_hi):
        raise ConfigError("need k_lo < k_hi (or k_lo == k_hi with --points 1)")
    ks = np.linspace(args.k_lo, args.k_hi, args.points) if args.points > 1 else [args.k_lo]
    rows = lelmodel.gain_sweep(p, ks)
    _write_rows(args.out, ["k", "max_pole_real", "freq_hz"], rows)
    stable = [lelmodel.classify_stability(p, k).stable for k, _, _ in rows]
    if all(stable):
        print("stable throughout")
        return EXIT_STABLE
    first = stable.index(False)
    if first == 0:
        print(f"not stable at k_lo={rows[0][0]:g}; no stable bracket")
        return EXIT_OK
    k_star = lelmodel.critical_gain(p, rows[first - 1][0], rows[first][0])
    print(f"critical_k={k_star:.6f}")
    return EXIT_OK


def cmd_sim(args) -> int:
    _, sc = load_config(args.config)
    if args.level is not None:
        sc = timesim.level_scenario(sc, args.level)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    code = EXIT_OK
    try:
        sig = timesim.simulate(sc)
    except (VoltageCollapse, NumericalDivergence) as exc:
        sig, code = exc.partial, EXIT_SIM
        print(f"error: {type(exc).__name__}: {exc} (partial output written)", file=sys.stderr)
    p_mw = timesim.to_mw(sig["P_ac"], sc.p_base_mw)
    p_mw.replace(name="P_ac").to_csv(out / "P_ac_mw.csv")
    for name in SIM_SIGNALS[1:]:
        sig[name].to_csv(out / f"{name}.csv")
    if code != EXIT_OK:
        return code
    t1 = p_mw.t_end
    try:
        e = modeid.dominant_mode(p_mw, (max(t1 - 2.0, p_mw.t0), t1))
        print("P_ac final 2 s: " + _format_estimate(e, "MW"))
    except FlatSignal as exc:
        print("P_ac final 2 s: FlatSignal" + (
            f" ({_format_estimate(exc.estimate, 'MW')})" if exc.estimate else ""))
    return EXIT_OK


def cmd_analyze(args) -> int:
    try:
        data = modeid.read_waveform_csv(args.csv_path)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if isinstance(data, modeid.ThreePhaseRecord):
        data = modeid.instantaneous_power(data)
    t0 = data.t0 if args.window_start is None else args.window_start
    t1 = data.t_end if args.window_end is None else args.window_end
    try:
        e = modeid.dominant_mode(data, (t0, t1))
        code = EXIT_OK
        print(_format_estimate(e, data.unit))
    except FlatSignal as exc:
        e, code = exc.estimate, EXIT_FLAT
        print("FlatSignal: " + _format_estimate(e, data.unit))
    _write_rows(args.out, ESTIMATE_HEADER, [_estimate_row(e)])
    return code


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lelosc", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, out_help):
        sp.add_argument("--config", help="JSON config (default: packaged after-tuning set)")
        sp.add_argument("--out", required=True, help=out_help)

    sp = sub.add_parser("bode", help="Bode data of G_dvc, G_sync or the loop gain")
    sp.add_argument("which", choices=("gdvc", "gsync", "loopgain"))
    common(sp, "output CSV")
    sp.add_argument("--f-lo", type=float, default=1.0)
    sp.add_argument("--f-hi", type=float, default=100.0)
    sp.add_argument("--points-per-decade", type=int, default=100)
    sp.set_defaults(func=cmd_bode)

    sp = sub.add_parser("step", help="AC-voltage response to a DC-load drop")
    common(sp, "output CSV")
    sp.add_argument("--k", type=float, help="override (xg*id0)^2")
    sp.set_defaults(func=cmd_step)

    sp = sub.add_parser("sweep", help="closed-loop poles across the loop factor")
    common(sp, "output CSV")
    sp.add_argument("--k-lo", type=float, default=0.05)
    sp.add_argument("--k-hi", type=float, default=0.5)
    sp.add_argument("--points", type=int, default=46)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("sim", help="nonlinear time-domain run")
    common(sp, "output directory")
    sp.add_argument("--level", type=float, help="ramp target, percent of rated load")
    sp.set_defaults(func=cmd_sim)

    sp = sub.add_parser("analyze", help="dominant mode of a recorded waveform")
    sp.add_argument("csv_path")
    sp.add_argument("--out", required=True, help="output CSV for the estimate")
    sp.add_argument("--window-start", type=float)
    sp.add_argument("--window-end", type=float)
    sp.set_defaults(func=cmd_analyze)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BracketInvalid as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except LelOscError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
