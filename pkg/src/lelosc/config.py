"""JSON configuration document <-> FeedbackParams + Scenario."""

from __future__ import annotations

import json
import math
from importlib import resources
from pathlib import Path

from .lelmodel import FeedbackParams
from .timesim import Scenario

SCHEMA = {
    "grid": ("vg", "xg", "id0"),
    "dvc": ("kp", "ki", "tau_dc", "vdc_ref"),
    "current_lag": ("tau_i",),
    "sync": ("tau_sync",),
    "scenario": ("p_base_mw", "pdc_profile", "t_end", "dt", "i_limit"),
}


class ConfigError(ValueError):
    pass


def _number(section: str, key: str, v) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{section}.{key} must be a finite number, got {v!r}")
    return float(v)


def parse_config(doc: dict) -> tuple[FeedbackParams, Scenario]:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be an object")
    extra = set(doc) - set(SCHEMA)
    if extra:
        raise ConfigError(f"unknown sections: {sorted(extra)}")
    vals: dict[str, object] = {}
    for section, keys in SCHEMA.items():
        body = doc.get(section)
        if not isinstance(body, dict):
            raise ConfigError(f"missing section {section!r}")
        unknown = set(body) - set(keys)
        if unknown:
            raise ConfigError(f"unknown keys in {section}: {sorted(unknown)}")
        for key in keys:
            if key not in body:
                raise ConfigError(f"missing key {section}.{key}")
            if key == "pdc_profile":
                prof = body[key]
                if not isinstance(prof, list) or not all(
                    isinstance(r, list) and len(r) == 2 for r in prof
                ):
                    raise ConfigError("scenario.pdc_profile must be a list of [t, P] pairs")
                vals[key] = tuple(
                    (_number(section, "pdc_profile", t), _number(section, "pdc_profile", p))
                    for t, p in prof
                )
            else:
                vals[key] = _number(section, key, body[key])
    try:
        params = FeedbackParams(
            kp=vals["kp"], ki=vals["ki"], tau_dc=vals["tau_dc"], tau_i=vals["tau_i"],
            tau_sync=vals["tau_sync"], xg=vals["xg"], id0=vals["id0"], vg=vals["vg"],
            vdc_ref=vals["vdc_ref"],
        )
        scenario = Scenario(
            params=params, pdc_profile=vals["pdc_profile"], t_end=vals["t_end"],
            dt=vals["dt"], i_limit=vals["i_limit"], p_base_mw=vals["p_base_mw"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return params, scenario


def dump_config(params: FeedbackParams, scenario: Scenario) -> dict:
    return {
        "grid": {"vg": params.vg, "xg": params.xg, "id0": params.id0},
        "dvc": {"kp": params.kp, "ki": params.ki, "tau_dc": params.tau_dc,
                "vdc_ref": params.vdc_ref},
        "current_lag": {"tau_i": params.tau_i},
        "sync": {"tau_sync": params.tau_sync},
        "scenario": {
            "p_base_mw": scenario.p_base_mw,
            "pdc_profile": [[t, p] for t, p in scenario.pdc_profile],
            "t_end": scenario.t_end,
            "dt": scenario.dt,
            "i_limit": scenario.i_limit,
        },
    }


def default_document() -> dict:
    text = resources.files("lelosc").joinpath("default_config.json").read_text(encoding="utf-8")
    return json.loads(text)


def load_config(path=None) -> tuple[FeedbackParams, Scenario]:
    """Parse a config file, or the packaged after-tuning defaults when ``path`` is None."""
    if path is None:
        return parse_config(default_document())
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(doc)
