"""Experiment configuration: INI-style sections of ``key = value`` lines.

Every problem found while reading a file is collected and reported in a
single :class:`ConfigError`.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .exceptions import ConfigError

SYSTEMS = ("forced-vdp", "forced-vdp-coupled")
STARTS = ("given", "invariant")


@dataclass(frozen=True)
class ExperimentConfig:
    system: str = "forced-vdp"
    omega: float = 2.0
    sigma: float = 1.0
    mu: float = 1.5
    coupling_gain: float = 0.1
    box_lower: tuple = (0.5, 0.2, 0.5)
    box_upper: tuple = (3.0, 2.0, 2.0)

    w0: tuple = (1.0, 0.0)
    z0: tuple = (0.5, 0.0)
    e0: float = 0.2
    z_bound: float = 3.0
    e_bound: float = 0.2
    xi0: tuple | None = None
    theta_hat0: tuple | None = None
    start: str = "given"

    roots: tuple = (-1.0, -2.0, -3.0)
    lam: float = 10.0
    k: float = 10.0
    ell: float | None = None
    sat_radius: float | None = None
    sat_factor: float = 1.25
    blend_fraction: float = 0.1
    whiten: bool = True

    h: float = 1e-3
    horizon: float = 100.0
    record_every: int = 10

    epsilon: float = 1e-2
    window_fraction: float = 0.2
    transient: float = 10.0
    bound_factor: float = 10.0

    sweep_lambda: tuple = (5.0, 10.0, 20.0, 40.0)
    sweep_k: tuple = (5.0, 10.0, 20.0, 40.0)
    sweep_corners: bool = False
    workers: int = 1

    out_dir: str = "out"

    @property
    def rho(self) -> np.ndarray:
        return np.array([self.omega, self.sigma, self.mu])

    def override(self, **changes) -> "ExperimentConfig":
        changes = {k: v for k, v in changes.items() if v is not None}
        cfg = replace(self, **changes)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        problems = []
        if self.system not in SYSTEMS:
            problems.append(f"system.name must be one of {SYSTEMS}, got {self.system!r}")
        if self.start not in STARTS:
            problems.append(f"initial.start must be one of {STARTS}, got {self.start!r}")
        lo, hi = np.array(self.box_lower), np.array(self.box_upper)
        if lo.shape != (3,) or hi.shape != (3,):
            problems.append("box needs omega, sigma and mu bounds")
        elif np.any(lo > hi):
            problems.append("box lower bound exceeds upper bound")
        elif np.any(self.rho < lo) or np.any(self.rho > hi):
            problems.append(f"parameters {tuple(self.rho)} lie outside the box")
        if not self.omega > 0 or not self.sigma > 0:
            problems.append("omega and sigma must be positive")
        if self.mu == 0:
            problems.append("mu must be nonzero")
        if len(self.w0) != 2:
            problems.append("initial.w needs 2 values")
        if len(self.z0) != 2:
            problems.append("initial.z needs 2 values")
        elif np.max(np.abs(self.z0)) > self.z_bound:
            problems.append(f"initial.z {self.z0} outside the box |z_i| <= {self.z_bound}")
        if abs(self.e0) > self.e_bound:
            problems.append(f"initial.e {self.e0} outside |e| <= {self.e_bound}")
        if self.xi0 is not None and len(self.xi0) != 4:
            problems.append("initial.xi needs 4 values")
        if self.theta_hat0 is not None and len(self.theta_hat0) != 5:
            problems.append("initial.theta_hat needs 5 values")
        if len(self.roots) != 3:
            problems.append("gains.roots needs 3 values")
        elif not all(r < 0 for r in self.roots) or len(set(self.roots)) != len(self.roots):
            problems.append("gains.roots must be distinct and negative")
        if not self.lam > 0:
            problems.append("gains.lambda must be positive")
        if not self.k >= 0:
            problems.append("gains.k must be non-negative")
        if self.ell is not None and not self.ell > 0:
            problems.append("gains.ell must be positive")
        if self.sat_radius is not None and not self.sat_radius > 0:
            problems.append("gains.sat_radius must be positive")
        if not self.h > 0:
            problems.append("integrator.h must be positive")
        if not self.horizon > self.transient:
            problems.append("integrator.horizon must exceed thresholds.transient")
        if self.record_every < 1:
            problems.append("integrator.record_every must be >= 1")
        if not 0 < self.window_fraction <= 1:
            problems.append("thresholds.window_fraction must lie in (0, 1]")
        if not self.epsilon > 0:
            problems.append("thresholds.epsilon must be positive")
        if not self.sweep_lambda:
            problems.append("sweep.lambda grid is empty")
        if not self.sweep_k:
            problems.append("sweep.k grid is empty")
        if self.workers < 1:
            problems.append("sweep.workers must be >= 1")
        if problems:
            raise ConfigError(problems)


# section, key, attribute, kind
_FIELDS = [
    ("system", "name", "system", "str"),
    ("system", "omega", "omega", "float"),
    ("system", "sigma", "sigma", "float"),
    ("system", "mu", "mu", "float"),
    ("system", "coupling_gain", "coupling_gain", "float"),
    ("box", "omega", "box_omega", "pair"),
    ("box", "sigma", "box_sigma", "pair"),
    ("box", "mu", "box_mu", "pair"),
    ("initial", "w", "w0", "floats"),
    ("initial", "z", "z0", "floats"),
    ("initial", "e", "e0", "float"),
    ("initial", "z_bound", "z_bound", "float"),
    ("initial", "e_bound", "e_bound", "float"),
    ("initial", "xi", "xi0", "floats?"),
    ("initial", "theta_hat", "theta_hat0", "floats?"),
    ("initial", "start", "start", "str"),
    ("gains", "roots", "roots", "floats"),
    ("gains", "lambda", "lam", "float"),
    ("gains", "k", "k", "float"),
    ("gains", "ell", "ell", "float?"),
    ("gains", "sat_radius", "sat_radius", "float?"),
    ("gains", "sat_factor", "sat_factor", "float"),
    ("gains", "blend_fraction", "blend_fraction", "float"),
    ("gains", "whiten", "whiten", "bool"),
    ("integrator", "h", "h", "float"),
    ("integrator", "horizon", "horizon", "float"),
    ("integrator", "record_every", "record_every", "int"),
    ("thresholds", "epsilon", "epsilon", "float"),
    ("thresholds", "window_fraction", "window_fraction", "float"),
    ("thresholds", "transient", "transient", "float"),
    ("thresholds", "bound_factor", "bound_factor", "float"),
    ("sweep", "lambda", "sweep_lambda", "floats"),
    ("sweep", "k", "sweep_k", "floats"),
    ("sweep", "corners", "sweep_corners", "bool"),
    ("sweep", "workers", "workers", "int"),
    ("output", "dir", "out_dir", "str"),
]

_BOOLS = {"yes": True, "true": True, "on": True, "1": True,
          "no": False, "false": False, "off": False, "0": False}


def _convert(kind: str, raw: str):
    raw = raw.strip()
    if kind.endswith("?"):
        if raw.lower() in ("", "auto", "none"):
            return None
        kind = kind[:-1]
    if kind == "str":
        return raw
    if kind == "float":
        return float(raw)
    if kind == "int":
        return int(raw)
    if kind == "bool":
        if raw.lower() not in _BOOLS:
            raise ValueError(f"expected yes/no, got {raw!r}")
        return _BOOLS[raw.lower()]
    values = tuple(float(v) for v in raw.replace(",", " ").split())
    if kind == "pair" and len(values) != 2:
        raise ValueError(f"expected two numbers, got {raw!r}")
    return values


def parse_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    problems = []
    try:
        parser.read_string(text)
    except configparser.Error as err:
        raise ConfigError([f"unreadable config: {err}"]) from None

    known = {(sec, key) for sec, key, _, _ in _FIELDS}
    for sec in parser.sections():
        for key in parser[sec]:
            if (sec, key) not in known:
                problems.append(f"unknown key {sec}.{key}")

    values = {}
    for sec, key, attr, kind in _FIELDS:
        if parser.has_option(sec, key):
            try:
                values[attr] = _convert(kind, parser.get(sec, key))
            except ValueError as err:
                problems.append(f"{sec}.{key}: {err}")

    defaults = ExperimentConfig()
    lower, upper = list(defaults.box_lower), list(defaults.box_upper)
    for i, name in enumerate(("box_omega", "box_sigma", "box_mu")):
        if name in values:
            lower[i], upper[i] = values.pop(name)
    values["box_lower"], values["box_upper"] = tuple(lower), tuple(upper)

    if problems:
        raise ConfigError(problems)
    cfg = ExperimentConfig(**values)
    cfg.validate()
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError([f"cannot read {path}: {err.strerror}"]) from None
    return parse_config(text)


def dump_config(cfg: ExperimentConfig) -> str:
    """Config as text that :func:`parse_config` reads back to an equal object."""

    def fmt(v):
        if v is None:
            return "auto"
        if isinstance(v, bool):
            return "yes" if v else "no"
        if isinstance(v, tuple):
            return ", ".join(repr(float(x)) for x in v)
        if isinstance(v, float):
            return repr(v)
        return str(v)

    sections: dict = {}
    for sec, key, attr, _ in _FIELDS:
        if attr.startswith("box_"):
            i = ("box_omega", "box_sigma", "box_mu").index(attr)
            val = (cfg.box_lower[i], cfg.box_upper[i])
        else:
            val = getattr(cfg, attr)
        sections.setdefault(sec, []).append(f"{key} = {fmt(val)}")
    return "\n\n".join(f"[{sec}]\n" + "\n".join(lines) for sec, lines in sections.items()) + "\n"
