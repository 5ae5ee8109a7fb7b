"""YAML experiment configuration.

Every key has a default (see ``DEFAULTS``); unknown keys are rejected so a
typo never silently falls back to a default. Several files can be layered,
later ones overriding earlier ones, and any leaf can be overridden by a
dotted path (``scenario.duration=0.5``).
"""

from __future__ import annotations

import copy
import os
from pathlib import Path

import numpy as np
import yaml

from .controllers import FopiParams
from .errors import ConfigurationError
from .fracorder import DEFAULT_BAND, DEFAULT_N_FILTER
from .it2fis import It2Fis, default_fis, default_input_scales
from .mmcplant import MmcParams
from .simkit import ControllerConfig, Scenario
from .tuning import TuningSpec, fofpi_bounds, fopi_bounds
from .woa import WoaParams


def _fis_block(fis: It2Fis) -> dict:
    return {
        "mfs": {name: [[float(fis.centers[i, k]), float(fis.sigma_lower[i, k]),
                        float(fis.sigma_upper[i, k])] for k in range(fis.n_mf)]
                for i, name in enumerate(("error", "derivative"))},
        "theta_kp": [float(v) for v in fis.theta_kp],
        "theta_ki": [float(v) for v in fis.theta_ki],
        "blend_m": float(fis.blend_m),
        "input_scales": None,
    }


FIS_SCHEMA = _fis_block(default_fis(kp=30.0, ki=3000.0))

DEFAULTS = {
    "plant": {"n_cells": 4, "L": 5e-3, "R": 0.1, "C": 2e-3, "grid_amplitude": None,
              "grid_freq_hz": 50.0, "grid_phase_scale": [1.0, 1.0, 1.0]},
    "fractional": {"n_filter": DEFAULT_N_FILTER, "band": list(DEFAULT_BAND)},
    "controller": {
        "kind": "fopi",
        "fopi": {"d": {"kp": 30.0, "ki": 3000.0, "alpha": 0.9},
                 "q": {"kp": 30.0, "ki": 3000.0, "alpha": 0.9}},
        "fofpi": {"alpha": 0.9},
        "u_max": None,
        "tau_d": None,
        "feedforward": True,
    },
    "fis": {"d": copy.deepcopy(FIS_SCHEMA), "q": None},
    "woa": {"pop_size": 30, "max_iter": 100, "spiral_b": 1.0, "seed": 0, "workers": None,
            "bounds": None, "sigma_penalty": 0.01, "tracking_tolerance": 0.02,
            "tracking_weight": 1.0},
    "scenario": {"duration": 0.4, "dt_sim": 20e-6, "dt_ctrl": 100e-6,
                 "vdc_profile": [[0.0, 500.0]],
                 "reference": {"mode": "current", "profile": [[0.0, 10.0, 0.0]]},
                 "thd_window": 5, "seed": 0, "balance_sort": False, "i_rated": 10.0,
                 "divergence_factor": 10.0},
    "output": {"directory": "out", "plots": False, "log_decimation": 1},
}

# keys whose value may be null by default but take a structured block
_NULLABLE_BLOCKS = {("fis", "q"): FIS_SCHEMA}


def _schema_at(path):
    node = DEFAULTS
    for i, key in enumerate(path):
        sub = _NULLABLE_BLOCKS.get(tuple(path[:i + 1]))
        if not isinstance(node, dict) or key not in node:
            raise ConfigurationError(f"unknown config key: {'.'.join(path)}")
        node = sub if sub is not None else node[key]
    return node


def merge(base: dict, update: dict, path=()) -> dict:
    """Deep-merge ``update`` into a copy of ``base``, rejecting unknown keys."""
    out = copy.deepcopy(base)
    for key, value in (update or {}).items():
        here = path + (key,)
        schema = _schema_at(list(here))
        if isinstance(schema, dict) and isinstance(value, dict):
            out[key] = merge(out.get(key) or schema, value, here)
        elif isinstance(schema, dict) and value is not None:
            raise ConfigurationError(f"config key {'.'.join(here)} must be a mapping")
        else:
            out[key] = value
    return out


def load(paths=(), overrides=()) -> dict:
    """Defaults, then each YAML file in order, then ``key=value`` overrides."""
    cfg = copy.deepcopy(DEFAULTS)
    for path in paths:
        path = Path(path)
        if not path.is_file():
            raise ConfigurationError(f"config file not found: {path}")
        try:
            data = yaml.safe_load(path.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"cannot parse {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigurationError(f"{path}: top level must be a mapping")
        cfg = merge(cfg, data)
    for item in overrides:
        cfg = merge(cfg, parse_override(item))
    return cfg


def parse_override(item: str) -> dict:
    key, sep, raw = item.partition("=")
    if not sep or not key:
        raise ConfigurationError(f"override must look like key=value, got {item!r}")
    value = yaml.safe_load(raw)
    for part in reversed(key.split(".")):
        value = {part: value}
    return value


def dump(cfg: dict) -> str:
    return yaml.safe_dump(cfg, sort_keys=False)


def _fis_from_block(block: dict, i_rated, dt) -> It2Fis:
    try:
        mfs = np.array([block["mfs"]["error"], block["mfs"]["derivative"]], dtype=float)
    except ValueError as exc:
        raise ConfigurationError("both FIS inputs need the same number of MFs") from exc
    scales = block.get("input_scales")
    if scales is None:
        scales = default_input_scales(i_rated, dt)
    return It2Fis(mfs[..., 0], mfs[..., 1], mfs[..., 2], block["theta_kp"],
                  block["theta_ki"], float(block["blend_m"]), scales)


def build_scenario(cfg: dict) -> Scenario:
    try:
        return _build_scenario(cfg)
    except (TypeError, KeyError, ValueError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(f"invalid configuration: {exc}") from exc


def _build_scenario(cfg):
    s, p, c, fr = cfg["scenario"], cfg["plant"], cfg["controller"], cfg["fractional"]
    vdc_profile = [tuple(float(v) for v in row) for row in s["vdc_profile"]]
    if not vdc_profile:
        raise ConfigurationError("scenario.vdc_profile must not be empty")
    vdc0 = vdc_profile[0][1]
    plant = MmcParams(int(p["n_cells"]), float(p["L"]), float(p["R"]), float(p["C"]), vdc0,
                      None if p["grid_amplitude"] is None else float(p["grid_amplitude"]),
                      2 * np.pi * float(p["grid_freq_hz"]), tuple(p["grid_phase_scale"]))
    dt_ctrl = float(s["dt_ctrl"])
    i_rated = float(s["i_rated"])
    fis_d = _fis_from_block(cfg["fis"]["d"], i_rated, dt_ctrl)
    fis_q = fis_d if cfg["fis"]["q"] is None else _fis_from_block(cfg["fis"]["q"], i_rated, dt_ctrl)
    ctrl = ControllerConfig(
        kind=c["kind"],
        fopi_d=FopiParams(**{k: float(v) for k, v in c["fopi"]["d"].items()}),
        fopi_q=FopiParams(**{k: float(v) for k, v in c["fopi"]["q"].items()}),
        fis_d=fis_d, fis_q=fis_q, alpha=float(c["fofpi"]["alpha"]),
        u_max=c["u_max"], tau_d=c["tau_d"], feedforward=bool(c["feedforward"]),
        n_filter=int(fr["n_filter"]), band=tuple(float(v) for v in fr["band"]))
    ref = s["reference"]
    sc = Scenario(
        duration=float(s["duration"]), dt_sim=float(s["dt_sim"]), dt_ctrl=dt_ctrl,
        vdc_profile=vdc_profile,
        reference_profile=[tuple(float(v) for v in row) for row in ref["profile"]],
        reference_mode=ref["mode"], plant=plant, controller=ctrl,
        thd_window=int(s["thd_window"]), seed=int(s["seed"]),
        balance_sort=bool(s["balance_sort"]), i_rated=i_rated,
        divergence_factor=float(s["divergence_factor"]),
        log_decimation=int(cfg["output"]["log_decimation"]))
    sc.validate()
    return sc


def build_tuning(cfg: dict):
    """``(TuningSpec, WoaParams, n_workers)`` for the configured controller."""
    sc = build_scenario(cfg)
    w = cfg["woa"]
    kind = cfg["controller"]["kind"]
    bounds = w["bounds"]
    if bounds is None:
        n_mf = len(cfg["fis"]["d"]["mfs"]["error"])
        bounds = fopi_bounds() if kind == "fopi" else fofpi_bounds(n_mf)
    n_mf = len(cfg["fis"]["d"]["mfs"]["error"])
    spec = TuningSpec(kind, sc, np.asarray(bounds, dtype=float).reshape(-1, 2), n_mf,
                      float(w["sigma_penalty"]), float(w["tracking_tolerance"]),
                      float(w["tracking_weight"]))
    woa = WoaParams(spec.bounds, int(w["pop_size"]), int(w["max_iter"]),
                    float(w["spiral_b"]), int(w["seed"]))
    return spec, woa, int(w["workers"] or os.cpu_count() or 1)


def controller_fragment(ctrl: ControllerConfig) -> dict:
    """Config fragment (controller + fis sections) describing ``ctrl``."""
    frag = {"controller": {"kind": ctrl.kind}}
    if ctrl.kind == "fopi":
        frag["controller"]["fopi"] = {
            axis: {"kp": float(p.kp), "ki": float(p.ki), "alpha": float(p.alpha)}
            for axis, p in (("d", ctrl.fopi_d), ("q", ctrl.fopi_q))}
    else:
        frag["controller"]["fofpi"] = {"alpha": float(ctrl.alpha)}
        d = _fis_block(ctrl.fis_d)
        d["input_scales"] = [float(v) for v in ctrl.fis_d.input_scales]
        frag["fis"] = {"d": d}
        if ctrl.fis_q is not None and ctrl.fis_q is not ctrl.fis_d:
            q = _fis_block(ctrl.fis_q)
            q["input_scales"] = [float(v) for v in ctrl.fis_q.input_scales]
            frag["fis"]["q"] = q
    return frag
