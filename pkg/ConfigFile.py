#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""Flat `key = value` simulation configs.

    n_sources = 2
    grid.count = 1000
    shift.sigma.0 = 1.0          # per-source values are indexed from 0
    peak.1.2.center = 480        # peak 2 of source 1

`#` starts a comment. Unknown keys, duplicates and malformed values are
errors that cite the line they came from.
"""

import os
import re
from typing import Dict, List, Optional, Tuple

from Simulator import PeakSpec, SimConfig
from Spectrum import Grid

PRESET_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'presets')
PRESET_SUFFIX = '.cfg'

SCALAR_KEYS = {
    'n_sources': int,
    'm_observations': int,
    'seed': int,
    'grid.start': float,
    'grid.step': float,
    'grid.count': int,
    'weights.low': float,
    'weights.high': float,
    'shift.model': str,
    'scale.model': str,
    'scale.low': float,
    'scale.high': float,
    'noise.tau': float,
}
INDEXED_KEY = re.compile(r'^(weight|shift\.sigma|shift\.rho)\.(\d+)$')
PEAK_KEY = re.compile(r'^peak\.(\d+)\.(\d+)\.(center|width|height|shape)$')
REQUIRED_KEYS = ('n_sources', 'm_observations', 'grid.start', 'grid.step', 'grid.count')


class ConfigError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None, origin: str = '<config>'):
        self.line = line
        self.origin = origin
        where = f"{origin}:{line}" if line is not None else origin
        super().__init__(f"{where}: {message}")


def _convert(kind, value: str, key: str, line: int, origin: str):
    try:
        return kind(value)
    except ValueError:
        raise ConfigError(f"{key} expects {kind.__name__}, got {value!r}", line, origin)


def _read_entries(text: str, origin: str) -> Dict[str, Tuple[str, int]]:
    entries = {}
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", line_number, origin)
        key, value = (part.strip() for part in line.split('=', 1))
        if not key or not value:
            raise ConfigError(f"empty key or value in {raw.strip()!r}", line_number, origin)
        if key in entries:
            raise ConfigError(f"duplicate key {key!r} (first set on line {entries[key][1]})", line_number, origin)
        entries[key] = (value, line_number)
    return entries


def _indexed(values: Dict[int, float], n: int, name: str, default, origin: str) -> Tuple:
    if any(index >= n for index in values):
        raise ConfigError(f"{name} index {max(values)} is out of range for {n} sources", None, origin)
    return tuple(values.get(j, default) for j in range(n))


def parse_config_text(text: str, origin: str = '<config>') -> SimConfig:
    entries = _read_entries(text, origin)
    scalars = {}
    indexed = {'weight': {}, 'shift.sigma': {}, 'shift.rho': {}}
    peaks: Dict[int, Dict[int, Dict[str, object]]] = {}

    for key, (value, line) in entries.items():
        if key in SCALAR_KEYS:
            scalars[key] = _convert(SCALAR_KEYS[key], value, key, line, origin)
            continue
        match = INDEXED_KEY.match(key)
        if match:
            indexed[match.group(1)][int(match.group(2))] = _convert(float, value, key, line, origin)
            continue
        match = PEAK_KEY.match(key)
        if match:
            source, index, name = int(match.group(1)), int(match.group(2)), match.group(3)
            kind = str if name == 'shape' else float
            peaks.setdefault(source, {}).setdefault(index, {'line': line})[name] = _convert(kind, value, key, line, origin)
            continue
        raise ConfigError(f"unknown key {key!r}", line, origin)

    missing = [key for key in REQUIRED_KEYS if key not in scalars]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}", None, origin)

    n = scalars['n_sources']
    if set(peaks) - set(range(n)):
        raise ConfigError(f"peaks given for sources {sorted(set(peaks) - set(range(n)))} beyond n_sources={n}",
                          None, origin)
    peak_specs: List[Tuple[PeakSpec, ...]] = []
    for j in range(n):
        specs = []
        for index in sorted(peaks.get(j, {})):
            fields = dict(peaks[j][index])
            line = fields.pop('line')
            try:
                specs.append(PeakSpec(**fields))
            except (TypeError, ValueError) as e:
                raise ConfigError(f"peak {j}.{index}: {e}", line, origin)
        peak_specs.append(tuple(specs))

    try:
        return SimConfig(
            n_sources=n,
            m_observations=scalars['m_observations'],
            grid=Grid(scalars['grid.start'], scalars['grid.step'], scalars['grid.count']),
            peaks=tuple(peak_specs),
            weight_low=scalars.get('weights.low', 0.5),
            weight_high=scalars.get('weights.high', 1.5),
            pinned_weights=_indexed(indexed['weight'], n, 'weight', None, origin),
            shift_model=scalars.get('shift.model', 'none'),
            sigma=_indexed(indexed['shift.sigma'], n, 'shift.sigma', 0.0, origin),
            rho=_indexed(indexed['shift.rho'], n, 'shift.rho', 0.0, origin),
            scale_model=scalars.get('scale.model', 'none'),
            scale_low=scalars.get('scale.low', 0.8),
            scale_high=scalars.get('scale.high', 1.2),
            tau=scalars.get('noise.tau', 0.0),
            seed=scalars.get('seed', 0),
        )
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(str(e), None, origin)


def list_presets() -> List[str]:
    if not os.path.isdir(PRESET_DIR):
        return []
    return sorted(name[:-len(PRESET_SUFFIX)] for name in os.listdir(PRESET_DIR) if name.endswith(PRESET_SUFFIX))


def resolve_config_path(name_or_path: str) -> str:
    """A config file path, or the bundled preset of that name."""
    if os.path.isfile(name_or_path):
        return name_or_path
    preset = os.path.join(PRESET_DIR, name_or_path + PRESET_SUFFIX)
    if os.path.isfile(preset):
        return preset
    raise ConfigError(f"no config file or preset named {name_or_path!r} (presets: {', '.join(list_presets())})")


def load_sim_config(name_or_path: str, seed: Optional[int] = None) -> SimConfig:
    path = resolve_config_path(name_or_path)
    with open(path, 'r') as f:
        cfg = parse_config_text(f.read(), origin=path)
    return cfg if seed is None else cfg.with_seed(seed)


def format_sim_config(cfg: SimConfig) -> str:
    """Serialize cfg so that parse_config_text reproduces it exactly."""
    lines = [
        f"n_sources = {cfg.n_sources}",
        f"m_observations = {cfg.m_observations}",
        f"seed = {cfg.seed}",
        f"grid.start = {cfg.grid.start!r}",
        f"grid.step = {cfg.grid.step!r}",
        f"grid.count = {cfg.grid.count}",
        f"weights.low = {cfg.weight_low!r}",
        f"weights.high = {cfg.weight_high!r}",
    ]
    lines += [f"weight.{j} = {float(w)!r}" for j, w in enumerate(cfg.pinned_weights) if w is not None]
    lines.append(f"shift.model = {cfg.shift_model}")
    if cfg.shift_model != 'none':
        lines += [f"shift.sigma.{j} = {s!r}" for j, s in enumerate(cfg.sigma)]
    if cfg.shift_model == 'ar1':
        lines += [f"shift.rho.{j} = {r!r}" for j, r in enumerate(cfg.rho)]
    lines.append(f"scale.model = {cfg.scale_model}")
    if cfg.scale_model != 'none':
        lines += [f"scale.low = {cfg.scale_low!r}", f"scale.high = {cfg.scale_high!r}"]
    lines.append(f"noise.tau = {cfg.tau!r}")
    for j, source in enumerate(cfg.peaks):
        for k, peak in enumerate(source):
            lines += [
                f"peak.{j}.{k}.shape = {peak.shape}",
                f"peak.{j}.{k}.center = {float(peak.center)!r}",
                f"peak.{j}.{k}.width = {float(peak.width)!r}",
                f"peak.{j}.{k}.height = {float(peak.height)!r}",
            ]
    return '\n'.join(lines) + '\n'
