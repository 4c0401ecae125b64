"""Settings overrides from a TOML or JSON file.

Example (TOML)::

    [ga]
    population_size = 128
    generations = 50

    [targets]
    sigma = 0.2
    levels = { High = 0.9 }

    [drums]
    fill_base = 0.05
    beat_table = "my_beats.json"

    [chords]
    omission = 0.2

    [render]
    vary_repeats = true
"""

from __future__ import annotations

import json
import sys
from dataclasses import fields, replace
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .evolution import GaConfig
from .melodic_tracks import TargetParams
from .percussion import BeatTable, DrumParams, FillChain
from .pipeline import Settings


class ConfigError(ValueError):
    pass


_GA_KEYS = {f.name for f in fields(GaConfig)} - {"rng_seed"}
_DRUM_KEYS = {f.name for f in fields(DrumParams)} - {"beat_table", "fill_chain"}


def _check_keys(table: Mapping[str, Any], allowed: set[str], where: str) -> None:
    unknown = sorted(set(table) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(unknown)}")


def _merge_levels(current: dict[str, float], new: Any, where: str) -> dict[str, float]:
    if not isinstance(new, Mapping):
        raise ConfigError(f"[targets] {where} must be a table")
    _check_keys(new, set(current), f"targets.{where}")
    out = dict(current)
    out.update({k: float(v) for k, v in new.items()})
    return out


def settings_from_mapping(doc: Mapping[str, Any], base_dir: Path | None = None) -> Settings:
    _check_keys(doc, {"ga", "targets", "drums", "chords", "render"}, "top level")
    base_dir = base_dir or Path.cwd()
    st = Settings()
    try:
        ga = dict(doc.get("ga", {}))
        _check_keys(ga, _GA_KEYS, "ga")
        if ga:
            st = replace(st, ga=replace(st.ga, **ga))

        tg = dict(doc.get("targets", {}))
        _check_keys(tg, {"sigma", "weight", "harmony_weight", "levels", "ei", "bands"}, "targets")
        tp = st.targets
        changes: dict[str, Any] = {}
        for key in ("sigma", "weight", "harmony_weight"):
            if key in tg:
                changes[key] = float(tg[key])
        if "levels" in tg:
            changes["level_base"] = _merge_levels(tp.level_base, tg["levels"], "levels")
        if "ei" in tg:
            changes["ei_magnitude"] = _merge_levels(tp.ei_magnitude, tg["ei"], "ei")
        if "bands" in tg:
            bands = dict(tp.bands)
            _check_keys(tg["bands"], set(bands), "targets.bands")
            for k, (lo, hi) in tg["bands"].items():
                bands[k] = (int(lo), int(hi))
            changes["bands"] = bands
        if changes:
            st = replace(st, targets=replace(tp, **changes))

        dr = dict(doc.get("drums", {}))
        _check_keys(dr, _DRUM_KEYS | {"beat_table", "fill_chain"}, "drums")
        if "beat_table" in dr:
            dr["beat_table"] = BeatTable.load(base_dir / dr["beat_table"])
        if "fill_chain" in dr:
            dr["fill_chain"] = FillChain.load(base_dir / dr["fill_chain"])
        if dr:
            st = replace(st, drums=replace(st.drums, **dr))

        ch = dict(doc.get("chords", {}))
        _check_keys(ch, {"omission"}, "chords")
        if "omission" in ch:
            st = replace(st, chord_omission=float(ch["omission"]))

        rd = dict(doc.get("render", {}))
        _check_keys(rd, {"vary_repeats"}, "render")
        if "vary_repeats" in rd:
            st = replace(st, vary_repeats=bool(rd["vary_repeats"]))
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError, OSError) as exc:
        raise ConfigError(str(exc)) from exc
    return st


def load_settings(path: str | Path) -> Settings:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix.lower() == ".json":
            doc = json.loads(raw)
        else:
            doc = tomllib.loads(raw.decode("utf-8"))
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(doc, Mapping):
        raise ConfigError("config must be a table/object")
    return settings_from_mapping(doc, path.parent)
