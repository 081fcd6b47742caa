"""INI-style campaign configuration with typed keys and line-level errors.

Every key is optional; unknown sections or keys are errors. Example::

    [campaign]
    execution_budget = 200
    seed = 0

    [driver]
    profile = weak
"""

from __future__ import annotations

import configparser
import dataclasses
import os
import re
from pathlib import Path

from .core import CampaignConfig
from .neural import AnalyzerTrainConfig, GanTrainConfig
from .road import MapSpec
from .sim import PROFILES, get_profile

SEED_ENV = "WOGAN_SEED"

DEFAULT_THRESHOLDS = {"competent": 0.85, "weak": 0.10}


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("\n".join(problems))
        self.problems = problems


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("on", "true", "yes", "1"):
        return True
    if t in ("off", "false", "no", "0"):
        return False
    raise ValueError(f"expected on/off, got {text!r}")


def _choice(*options):
    def parse(text):
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return text
    return parse


# section -> key -> parser; defaults live on the dataclasses
SCHEMA = {
    "campaign": {
        "execution_budget": int, "init_fraction": float, "candidate_pool": int,
        "pre_validate": _bool, "fitness": _choice("bolp", "edge"), "failure_threshold": float,
        "seed": int, "quantile_start": float, "quantile_end": float,
        "method": _choice("wogan", "random"), "cold_start": _bool, "learn_invalid": _bool,
        "max_invalid_streak": int, "wall_clock_cap": float,
    },
    "driver": {
        "profile": _choice(*PROFILES), "lookahead": float, "target_speed": float, "wheelbase": float,
        "max_steer": float, "car_length": float, "car_width": float, "dt": float, "max_sim_time": float,
    },
    "gan": {
        "clip_constant": float, "n_critic": int, "batch_size": int, "rounds": int,
        "noise_dim": int, "learning_rate": float,
    },
    "analyzer": {"epochs": int, "batch_size": int, "learning_rate": float},
    "road": {
        "side_length": float, "start_x": float, "start_y": float,
        "lane_half_width": float, "min_turn_radius": float,
    },
    "metrics": {"coverage_grid_cells": int},
}


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    lines, section = {}, None
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            lines.setdefault((section, ""), n)
            continue
        m = re.match(r"([^=:#;\s][^=:]*?)\s*[=:]", line)
        if m and section is not None:
            lines.setdefault((section, m.group(1).strip().lower()), n)
    return lines


def parse_values(text: str, source: str = "<config>") -> dict[str, dict]:
    """Typed {section: {key: value}} for the keys present in ``text``."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError([f"{source}: {exc}"]) from None
    where = _key_lines(text)
    problems, values = [], {}
    for section in parser.sections():
        if section not in SCHEMA:
            problems.append(f"{source}:{where.get((section, ''), '?')}: unknown section [{section}]")
            continue
        values[section] = {}
        for key, raw in parser.items(section):
            line = where.get((section, key), "?")
            if key not in SCHEMA[section]:
                problems.append(f"{source}:{line}: unknown key {key!r} in [{section}]")
                continue
            try:
                values[section][key] = SCHEMA[section][key](raw)
            except ValueError as exc:
                problems.append(f"{source}:{line}: [{section}] {key}: {exc}")
    if problems:
        raise ConfigError(problems)
    return values


def build_config(values: dict[str, dict], overrides: dict | None = None, source: str = "<config>") -> CampaignConfig:
    """Assemble a validated CampaignConfig; ``overrides`` win over file values."""
    camp = dict(values.get("campaign", {}))
    drv = dict(values.get("driver", {}))
    for k, v in (overrides or {}).items():
        if v is None:
            continue
        if k == "profile":
            drv["profile"] = v
        else:
            camp[k] = v
    env_seed = os.environ.get(SEED_ENV)
    if env_seed is not None and (overrides or {}).get("seed") is None:
        try:
            camp["seed"] = int(env_seed)
        except ValueError:
            raise ConfigError([f"{SEED_ENV}: expected an integer, got {env_seed!r}"]) from None

    try:
        profile = drv.pop("profile", "competent")
        driver = get_profile(profile, **drv)
        road = values.get("road", {})
        default_map = MapSpec()
        map_spec = MapSpec(
            side_length=road.get("side_length", default_map.side_length),
            start_anchor=(road.get("start_x", default_map.start_anchor[0]),
                          road.get("start_y", default_map.start_anchor[1])),
            lane_half_width=road.get("lane_half_width", default_map.lane_half_width),
            min_turn_radius=road.get("min_turn_radius", default_map.min_turn_radius),
            coverage_grid_cells=values.get("metrics", {}).get("coverage_grid_cells",
                                                                default_map.coverage_grid_cells),
        )
        gan = GanTrainConfig(**values.get("gan", {}))
        analyzer = AnalyzerTrainConfig(**values.get("analyzer", {}))
        if "fitness" in camp:
            camp["fitness_kind"] = camp.pop("fitness")
        camp.setdefault("failure_threshold", DEFAULT_THRESHOLDS.get(profile, 0.85))
        return CampaignConfig(driver=driver, gan=gan, analyzer=analyzer, map=map_spec, **camp)
    except (TypeError, ValueError) as exc:
        raise ConfigError([f"{source}: {exc}"]) from None


def load_config(path=None, overrides: dict | None = None) -> CampaignConfig:
    if path is None:
        return build_config({}, overrides)
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError([f"{path}: {exc.strerror}"]) from None
    return build_config(parse_values(text, str(path)), overrides, str(path))


def render_config(cfg: CampaignConfig) -> str:
    """INI text that loads back to ``cfg``."""
    def fmt(v):
        if isinstance(v, bool):
            return "on" if v else "off"
        return repr(v) if isinstance(v, float) else str(v)

    base = get_profile(cfg.driver.profile_name)
    lines = ["[campaign]"]
    for k in SCHEMA["campaign"]:
        attr = "fitness_kind" if k == "fitness" else k
        lines.append(f"{k} = {fmt(getattr(cfg, attr))}")
    lines += ["", "[driver]", f"profile = {cfg.driver.profile_name}"]
    for f in dataclasses.fields(cfg.driver):
        if f.name != "profile_name" and getattr(cfg.driver, f.name) != getattr(base, f.name):
            lines.append(f"{f.name} = {fmt(getattr(cfg.driver, f.name))}")
    lines += ["", "[gan]"] + [f"{k} = {fmt(getattr(cfg.gan, k))}" for k in SCHEMA["gan"]]
    lines += ["", "[analyzer]"] + [f"{k} = {fmt(getattr(cfg.analyzer, k))}" for k in SCHEMA["analyzer"]]
    m = cfg.map
    lines += ["", "[road]", f"side_length = {fmt(m.side_length)}", f"start_x = {fmt(m.start_anchor[0])}",
              f"start_y = {fmt(m.start_anchor[1])}", f"lane_half_width = {fmt(m.lane_half_width)}",
              f"min_turn_radius = {fmt(m.min_turn_radius)}",
              "", "[metrics]", f"coverage_grid_cells = {m.coverage_grid_cells}", ""]
    return "\n".join(lines)
