"""Experiment configuration: flat key/value text with section headers.

The canonical serialization (sorted sections, sorted keys) makes configs
diffable and round-trippable; unknown sections or keys are rejected.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .models import (
    BUILTIN_MODELS,
    HyperbolicSystem,
    Monomial,
    polynomial_system,
)

__all__ = [
    "RawConfig",
    "parse_config",
    "dump_config",
    "ExperimentSpec",
    "validate_config",
    "parse_monomials",
    "parse_expectations",
]

RawConfig = dict[str, dict[str, str]]

_KNOWN_KEYS = {
    "model": {"name", "dimension", "fields"},  # plus entry_i_j / bound_i_min/max
    "initial": {"preset", "amplitude", "wavenumber", "file"},  # plus const_i
    "grid": {"num_points", "domain_length"},
    "controls": {
        "cfl_number",
        "blowup_threshold",
        "dt_floor",
        "max_time",
        "growth_limit",
        "snapshot_growth",
        "tail_tol",
    },
    "analysis": {
        "fit_decades",
        "xi_max",
        "collapse_snapshots",
        "min_fit_points",
    },
    "output": {"directory"},
    "synth": {
        "t_star",
        "x_star",
        "lambda",
        "c",
        "k",
        "e",
        "f_star",
        "tau_min",
        "tau_max",
        "samples",
        "noise",
        "seed",
    },
}


def _is_dynamic_key(section: str, key: str) -> bool:
    if section == "model":
        if key.startswith("entry_"):
            parts = key.split("_")
            return len(parts) == 3 and parts[1].isdigit() and parts[2].isdigit()
        if key.startswith("bound_"):
            parts = key.split("_")
            return (
                len(parts) == 3
                and parts[1].isdigit()
                and parts[2] in ("min", "max")
            )
    if section == "initial" and key.startswith("const_"):
        return key[len("const_"):].isdigit()
    return False


def parse_config(text: str) -> RawConfig:
    """Parse and strictly validate the key set of a config document."""
    parser = configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=("#", ";"), strict=True
    )
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    raw: RawConfig = {}
    for section in parser.sections():
        if section not in _KNOWN_KEYS:
            raise ConfigError(f"unknown config section [{section}]")
        raw[section] = {}
        for key, value in parser.items(section):
            if key not in _KNOWN_KEYS[section] and not _is_dynamic_key(section, key):
                raise ConfigError(f"unknown key '{key}' in section [{section}]")
            raw[section][key] = value.strip()
    return raw


def dump_config(raw: RawConfig) -> str:
    """Canonical serialization: sorted sections and keys, LF endings."""
    lines = []
    for section in sorted(raw):
        lines.append(f"[{section}]")
        for key in sorted(raw[section]):
            lines.append(f"{key} = {raw[section][key]}")
        lines.append("")
    return "\n".join(lines)


def _get(raw: RawConfig, section: str, key: str, default=None):
    return raw.get(section, {}).get(key, default)


def _float(raw, section, key, default=None, positive=False):
    value = _get(raw, section, key)
    if value is None:
        return default
    try:
        out = float(value)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key} = {value!r} is not a number") from exc
    if positive and not out > 0:
        raise ConfigError(f"[{section}] {key} must be positive, got {value}")
    return out


def _int(raw, section, key, default=None, positive=False):
    value = _get(raw, section, key)
    if value is None:
        return default
    try:
        out = int(value)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key} = {value!r} is not an integer") from exc
    if positive and not out > 0:
        raise ConfigError(f"[{section}] {key} must be positive, got {value}")
    return out


def parse_monomials(text: str, dimension: int) -> list[Monomial]:
    """Parse a polynomial like ``-1*f0 + 0.5*f1^2`` into monomials.

    Terms are separated by + or -; each factor is a number or fK^p.
    Deliberately not a general expression parser: no parentheses.
    """
    cleaned = text.replace("-", "+-").replace("e+-", "e-")  # keep exponents
    terms = [t.strip() for t in cleaned.split("+") if t.strip()]
    out: list[Monomial] = []
    for term in terms:
        coeff = 1.0
        if term.startswith("-"):
            coeff = -1.0
            term = term[1:].strip()
        powers = [0] * dimension
        saw_number = False
        for factor in (f.strip() for f in term.split("*")):
            if not factor:
                raise ConfigError(f"empty factor in polynomial term {term!r}")
            if factor.startswith("f"):
                name, _, exp = factor.partition("^")
                try:
                    idx = int(name[1:])
                    p = int(exp) if exp else 1
                except ValueError as exc:
                    raise ConfigError(f"bad factor {factor!r}") from exc
                if not 0 <= idx < dimension:
                    raise ConfigError(
                        f"factor {factor!r} references component outside 0..{dimension-1}"
                    )
                if p < 0:
                    raise ConfigError(f"negative exponent in {factor!r}")
                powers[idx] += p
            else:
                try:
                    coeff *= float(factor)
                except ValueError as exc:
                    raise ConfigError(f"bad coefficient {factor!r}") from exc
                saw_number = True
        if not saw_number and all(p == 0 for p in powers):
            raise ConfigError(f"term {term!r} has neither coefficient nor variable")
        out.append((coeff, tuple(powers)))
    return out


@dataclass
class ExperimentSpec:
    """Typed view of a validated configuration."""

    raw: RawConfig
    model_name: str
    num_points: int = 4096
    domain_length: float = 1.0
    preset: str = "sine"
    amplitude: float = 1.0
    wavenumber: int = 1
    constants: dict[int, float] = field(default_factory=dict)
    tabulated_file: str | None = None
    cfl_number: float = 0.3
    blowup_threshold: float | None = None
    dt_floor: float = 1e-10
    max_time: float = 10.0
    growth_limit: float = 0.02
    snapshot_growth: float = 1.25
    tail_tol: float = 1e-8
    fit_decades: float = 1.0
    xi_max: float = 10.0
    collapse_snapshots: int = 3
    min_fit_points: int = 8
    directory: str = "out"

    def build_system(self) -> HyperbolicSystem:
        if self.model_name in BUILTIN_MODELS:
            return BUILTIN_MODELS[self.model_name]()
        return _polynomial_from_raw(self.raw)

    def build_initial_fields(self, system: HyperbolicSystem) -> np.ndarray:
        n = self.num_points
        x = np.arange(n) * (self.domain_length / n)
        if self.preset == "sine":
            fields = np.zeros((system.dimension, n))
            fields[0] = self.amplitude * np.sin(
                2.0 * np.pi * self.wavenumber * x / self.domain_length
            )
            for i in range(1, system.dimension):
                fields[i] = self.constants.get(i, 0.0)
            return fields
        if self.preset == "constant":
            fields = np.zeros((system.dimension, n))
            for i in range(system.dimension):
                fields[i] = self.constants.get(i, 0.0)
            return fields
        if self.preset == "tabulated":
            data = np.loadtxt(self.tabulated_file, delimiter=",", skiprows=1)
            if data.ndim != 2 or data.shape != (n, system.dimension + 1):
                raise ConfigError(
                    f"tabulated file must have {n} rows and "
                    f"{system.dimension + 1} columns (x plus fields)"
                )
            if not np.allclose(data[:, 0], x, atol=1e-12 * self.domain_length):
                raise ConfigError("tabulated x column does not match the grid")
            return data[:, 1:].T.copy()
        raise ConfigError(f"unknown initial preset {self.preset!r}")


def _polynomial_from_raw(raw: RawConfig) -> HyperbolicSystem:
    section = raw.get("model", {})
    dim = section.get("dimension")
    if dim is None:
        raise ConfigError("polynomial model requires [model] dimension")
    dim = int(dim)
    if dim < 1 or dim > 8:
        raise ConfigError("polynomial model dimension must be in 1..8")
    names = section.get("fields")
    field_names = names.split() if names else None
    if field_names is not None and len(field_names) != dim:
        raise ConfigError("[model] fields must list one name per component")
    entries = [[[] for _ in range(dim)] for _ in range(dim)]
    for key, value in section.items():
        if key.startswith("entry_"):
            _, i, j = key.split("_")
            i, j = int(i), int(j)
            if not (0 <= i < dim and 0 <= j < dim):
                raise ConfigError(f"{key} outside the {dim}x{dim} matrix")
            entries[i][j] = parse_monomials(value, dim)
    bounds = [[-np.inf, np.inf] for _ in range(dim)]
    for key, value in section.items():
        if key.startswith("bound_"):
            _, i, side = key.split("_")
            i = int(i)
            if not 0 <= i < dim:
                raise ConfigError(f"{key} outside component range")
            bounds[i][0 if side == "min" else 1] = float(value)
    return polynomial_system(
        section.get("name", "polynomial"),
        entries,
        field_names=field_names,
        bounds=[tuple(b) for b in bounds],
    )


def validate_config(raw: RawConfig) -> ExperimentSpec:
    model_name = _get(raw, "model", "name")
    if model_name is None:
        raise ConfigError("config requires [model] name")
    if model_name not in BUILTIN_MODELS and model_name != "polynomial":
        raise ConfigError(
            f"unknown model {model_name!r}; choose from "
            f"{sorted(BUILTIN_MODELS)} or 'polynomial'"
        )

    spec = ExperimentSpec(raw=raw, model_name=model_name)
    spec.num_points = _int(raw, "grid", "num_points", spec.num_points, positive=True)
    if spec.num_points & (spec.num_points - 1):
        raise ConfigError("[grid] num_points must be a power of two")
    spec.domain_length = _float(
        raw, "grid", "domain_length", spec.domain_length, positive=True
    )

    spec.preset = _get(raw, "initial", "preset", "sine")
    if spec.preset not in ("sine", "constant", "tabulated"):
        raise ConfigError(f"unknown initial preset {spec.preset!r}")
    spec.amplitude = _float(raw, "initial", "amplitude", spec.amplitude)
    spec.wavenumber = _int(raw, "initial", "wavenumber", spec.wavenumber, positive=True)
    spec.tabulated_file = _get(raw, "initial", "file")
    if spec.preset == "tabulated" and spec.tabulated_file is None:
        raise ConfigError("tabulated preset requires [initial] file")
    for key, value in raw.get("initial", {}).items():
        if key.startswith("const_"):
            spec.constants[int(key[len("const_"):])] = float(value)

    spec.cfl_number = _float(
        raw, "controls", "cfl_number", spec.cfl_number, positive=True
    )
    spec.blowup_threshold = _float(raw, "controls", "blowup_threshold", None,
                                   positive=True)
    spec.dt_floor = _float(raw, "controls", "dt_floor", spec.dt_floor, positive=True)
    spec.max_time = _float(raw, "controls", "max_time", spec.max_time, positive=True)
    spec.growth_limit = _float(
        raw, "controls", "growth_limit", spec.growth_limit, positive=True
    )
    spec.snapshot_growth = _float(
        raw, "controls", "snapshot_growth", spec.snapshot_growth, positive=True
    )
    spec.tail_tol = _float(raw, "controls", "tail_tol", spec.tail_tol, positive=True)

    spec.fit_decades = _float(
        raw, "analysis", "fit_decades", spec.fit_decades, positive=True
    )
    spec.xi_max = _float(raw, "analysis", "xi_max", spec.xi_max, positive=True)
    spec.collapse_snapshots = _int(
        raw, "analysis", "collapse_snapshots", spec.collapse_snapshots, positive=True
    )
    spec.min_fit_points = _int(
        raw, "analysis", "min_fit_points", spec.min_fit_points, positive=True
    )
    spec.directory = _get(raw, "output", "directory", spec.directory)

    # Force construction errors (bad polynomial entries etc.) to surface now.
    spec.build_system()
    return spec


def parse_expectations(text: str) -> dict[str, tuple[float, float]]:
    """Expectations file: [expectations] with ``path = value tolerance``."""
    parser = configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=("#", ";"), strict=True
    )
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed expectations file: {exc}") from exc
    if parser.sections() != ["expectations"]:
        raise ConfigError("expectations file must contain exactly [expectations]")
    out = {}
    for key, value in parser.items("expectations"):
        parts = value.split()
        if len(parts) != 2:
            raise ConfigError(
                f"expectation {key!r} must be 'value tolerance', got {value!r}"
            )
        try:
            out[key] = (float(parts[0]), float(parts[1]))
        except ValueError as exc:
            raise ConfigError(f"non-numeric expectation for {key!r}") from exc
    return out
