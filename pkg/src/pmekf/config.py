"""Configuration files: flat key = value text with optional sections.

A file may carry [model], [ekf] and [subject] sections; a sectionless file
is treated as model parameters only. Unknown keys are rejected.
"""

from __future__ import annotations

import configparser
from dataclasses import fields
from pathlib import Path

import numpy as np

from .ekf import FilterConfig
from .params import ModelParams, SubjectProfile, params_from_mapping

_EKF_SCALARS = {"dt", "substeps", "r_frac", "jacobian_step", "cond_limit",
                "constant_hr_bpm"}
_EKF_VECTORS = {"q_proc": 5, "r_meas": 2, "x0": 5, "p0": 5}
_SUBJECT_KEYS = {f.name for f in fields(SubjectProfile)}


def _parse(path: Path) -> configparser.ConfigParser:
    text = Path(path).read_text()
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    cp.optionxform = str  # keep key case
    if not text.lstrip().startswith("["):
        text = "[model]\n" + text
    cp.read_string(text)
    for section in cp.sections():
        if section not in ("model", "ekf", "subject"):
            raise ValueError(f"unknown config section [{section}]")
    return cp


def load_model_params(path: Path, base: ModelParams | None = None) -> ModelParams:
    cp = _parse(path)
    mapping = dict(cp["model"]) if cp.has_section("model") else {}
    return params_from_mapping(mapping, base)


def load_subject(path: Path) -> SubjectProfile:
    cp = _parse(path)
    if not cp.has_section("subject"):
        return SubjectProfile()
    kwargs = {}
    for key, raw in cp["subject"].items():
        if key not in _SUBJECT_KEYS:
            raise ValueError(f"unknown subject parameter {key!r}")
        kwargs[key] = float(raw)
    return SubjectProfile(**kwargs)


def load_filter_config(path: Path) -> FilterConfig:
    cp = _parse(path)
    cfg = FilterConfig()
    if not cp.has_section("ekf"):
        return cfg
    for key, raw in cp["ekf"].items():
        if key in _EKF_SCALARS:
            value = float(raw)
            setattr(cfg, key, int(value) if key == "substeps" else value)
        elif key in _EKF_VECTORS:
            parts = [float(v) for v in raw.replace(",", " ").split()]
            if len(parts) != _EKF_VECTORS[key]:
                raise ValueError(
                    f"ekf.{key} needs {_EKF_VECTORS[key]} values, got {len(parts)}")
            setattr(cfg, key, np.asarray(parts))
        elif key == "constant_hr":
            cfg.constant_hr = raw.strip().lower() in ("1", "true", "yes")
        else:
            raise ValueError(f"unknown ekf parameter {key!r}")
    cfg.__post_init__()
    return cfg


def load_all(path: Path | None) -> tuple[ModelParams, FilterConfig, SubjectProfile]:
    if path is None:
        return ModelParams(), FilterConfig(), SubjectProfile()
    return (load_model_params(path), load_filter_config(path), load_subject(path))
