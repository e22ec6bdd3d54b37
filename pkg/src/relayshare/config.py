"""Scenario files: a sectioned ``key = value`` text format.

Grammar
-------
The file is read with :mod:`configparser` (``#`` and ``;`` start comments).
Every section and key is optional; absent values take the defaults below.
Lists are comma separated.

``[run]``        ``seed``
``[channel]``    ``p_source p_relay noise_var k_omega alpha t_ij log_base``
                 (``log_base`` is a number or ``e``)
``[group.NAME]`` ``size`` and optionally ``y`` (one Y value per MMD,
                 overriding the values derived from the MMD gains)
``[mmd.NAME]``   ``omega price cost omega_cap h_sr h_sd h_rd``; the gains
                 describe the source-relay-destination links of the pairs
                 served through that MMD
``[evo]``        ``delta tau dt prices start``
``[imes]``       ``waiting_time max_rounds mu_omega mu_p delta_t
                 stability_tol utility_tol explore_prob mmd_rule``
``[sim]``        ``area n_omd n_mmd comm_range mmd_bandwidth exponent
                 reference_gain message_size slot_length slots_per_round seeds``

If any ``[group.*]`` (or ``[mmd.*]``) section is present, the groups (or MMDs)
listed in the file replace the default ones instead of being merged.
"""
from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .channel import CapacityParams, ChannelGains, b_factor, tau_factor
from .imes import ImesConfig, ImesScenario, MmdAgent, OmdUtilityModel
from .mmd_game import BANDWIDTH_CAP
from .omd_game import EvoParams, GroupEconomics
from .sim import DEFAULT_REFERENCE_GAIN, RadioParams, SweepSettings, TrafficModel


class ConfigError(ValueError):
    """A scenario file could not be parsed or violates an invariant."""


@dataclass(frozen=True)
class GroupConfig:
    name: str
    size: int
    y: tuple | None = None

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("size >= 1 violated")
        if self.y is not None and any(v < 1 for v in self.y):
            raise ValueError("y >= 1 violated")


@dataclass(frozen=True)
class MmdConfig:
    name: str
    omega: float
    price: float
    cost: float
    h_sr: float
    h_sd: float
    h_rd: float
    omega_cap: float = BANDWIDTH_CAP

    def __post_init__(self):
        if not 0 <= self.omega <= self.omega_cap:
            raise ValueError("0 <= omega <= omega_cap violated")
        if self.price < 0:
            raise ValueError("price >= 0 violated")
        if self.cost < 0:
            raise ValueError("cost >= 0 violated")


@dataclass(frozen=True)
class ChannelConfig:
    p_source: float = 2.0
    p_relay: float = 2.0
    noise_var: float = 1.0
    k_omega: float = 1.0
    alpha: float = 1.0
    t_ij: float = 1.0
    log_base: float = math.e

    def __post_init__(self):
        if self.log_base <= 1:
            raise ValueError("log_base > 1 violated")
        CapacityParams(self.k_omega, self.alpha, self.t_ij)
        ChannelGains(0, 0, 0, self.p_source, self.p_relay, self.noise_var)


@dataclass(frozen=True)
class EvoConfig:
    delta: float = 1.0
    tau: int = 1
    dt: float = 0.01
    prices: tuple = (1.0, 2.0)
    start: tuple = (0.56, 0.21)

    def __post_init__(self):
        EvoParams(self.delta, self.tau, self.dt)
        if any(p < 0 for p in self.prices):
            raise ValueError("prices >= 0 violated")
        if any(not 0 <= s <= 1 for s in self.start):
            raise ValueError("0 <= start <= 1 violated")


@dataclass(frozen=True)
class ImesSection:
    waiting_time: int = 100
    max_rounds: int = 20000
    mu_omega: float = 1.0
    mu_p: float = 0.5
    delta_t: float = 1.0
    stability_tol: float = 1e-4
    utility_tol: float = 1e-6
    explore_prob: float = 0.05
    mmd_rule: str = "marginal"

    def __post_init__(self):
        if self.mu_omega < 0 or self.mu_p < 0:
            raise ValueError("mu_omega >= 0 and mu_p >= 0 violated")
        if self.delta_t <= 0:
            raise ValueError("delta_t > 0 violated")
        if self.max_rounds < 1:
            raise ValueError("max_rounds >= 1 violated")
        ImesConfig(self.waiting_time, self.stability_tol, self.max_rounds, 0,
                   self.mmd_rule, self.utility_tol, self.explore_prob)


@dataclass(frozen=True)
class SimSection:
    area: float = 100.0
    n_omd: int = 40
    n_mmd: int = 3
    comm_range: float = 50.0
    mmd_bandwidth: float = 20.0
    exponent: float = 3.0
    reference_gain: float = DEFAULT_REFERENCE_GAIN
    message_size: float = 100.0
    slot_length: float = 1.0
    slots_per_round: int = 1
    seeds: int = 30

    def __post_init__(self):
        if self.area <= 0 or self.comm_range <= 0:
            raise ValueError("area > 0 and comm_range > 0 violated")
        if self.n_omd < 1 or self.n_mmd < 1:
            raise ValueError("n_omd >= 1 and n_mmd >= 1 violated")
        if self.seeds < 1:
            raise ValueError("seeds >= 1 violated")
        if self.exponent <= 0 or self.reference_gain <= 0:
            raise ValueError("exponent > 0 and reference_gain > 0 violated")
        TrafficModel(self.message_size, self.slot_length, self.slots_per_round)
        RadioParams(self.mmd_bandwidth)


def _default_groups():
    return (GroupConfig("a", 10), GroupConfig("b", 30))


def _default_mmds():
    return (MmdConfig("1", 20.0, 1.0, 0.5, 0.3, 0.25, 0.4),
            MmdConfig("2", 40.0, 1.0, 0.5, 0.25, 0.21, 0.35))


@dataclass(frozen=True)
class ScenarioConfig:
    """Resolved scenario: defaults filled in and every invariant checked."""

    seed: int = 0
    channel: ChannelConfig = ChannelConfig()
    groups: tuple = field(default_factory=_default_groups)
    mmds: tuple = field(default_factory=_default_mmds)
    evo: EvoConfig = EvoConfig()
    imes: ImesSection = ImesSection()
    sim: SimSection = SimSection()

    def __post_init__(self):
        if not self.groups or not self.mmds:
            raise ValueError("at least one group and one MMD required")
        for g in self.groups:
            if g.y is not None and len(g.y) != len(self.mmds):
                raise ValueError(f"group {g.name}: one y value per MMD required")
        if len(self.evo.prices) != len(self.mmds):
            raise ValueError("evo.prices needs one price per MMD")
        if len(self.evo.start) != len(self.groups):
            raise ValueError("evo.start needs one fraction per group")

    # ----- derived model objects -------------------------------------------------
    @property
    def group_sizes(self) -> np.ndarray:
        return np.array([g.size for g in self.groups], dtype=int)

    @property
    def omegas(self) -> np.ndarray:
        return np.array([m.omega for m in self.mmds])

    @property
    def prices(self) -> np.ndarray:
        return np.array([m.price for m in self.mmds])

    @property
    def costs(self) -> np.ndarray:
        return np.array([m.cost for m in self.mmds])

    def mmd_gains(self) -> list[ChannelGains]:
        c = self.channel
        return [ChannelGains(m.h_sr, m.h_sd, m.h_rd, c.p_source, c.p_relay, c.noise_var)
                for m in self.mmds]

    def factor_matrices(self):
        """``(tau, b, y)`` per (group, MMD); explicit ``y`` rows replace derived ones."""
        gains = self.mmd_gains()
        tau_row = np.array([tau_factor(g) for g in gains])
        b_row = np.array([b_factor(g) for g in gains])
        tau = np.tile(tau_row, (len(self.groups), 1))
        b = np.tile(b_row, (len(self.groups), 1))
        for k, g in enumerate(self.groups):
            if g.y is not None:
                tau[k] = g.y
                b[k] = np.minimum(b[k], tau[k])
        return tau, b, np.maximum(tau, b)

    def mmd_y(self) -> np.ndarray:
        """One Y per MMD for the two-leader game (first group's row)."""
        return self.factor_matrices()[2][0]

    def capacity_params(self) -> CapacityParams:
        return CapacityParams(self.channel.k_omega, self.channel.alpha, self.channel.t_ij)

    def economics(self, prices=None, omega=None) -> GroupEconomics:
        tau, b, y = self.factor_matrices()
        return GroupEconomics(y, self.omegas if omega is None else omega,
                              self.evo.prices if prices is None else prices,
                              tau_values=tau, b_values=b, capacity=self.capacity_params(),
                              log_base=self.channel.log_base)

    def evo_params(self) -> EvoParams:
        return EvoParams(self.evo.delta, self.evo.tau, self.evo.dt)

    def imes_config(self, seed=None) -> ImesConfig:
        s = self.imes
        return ImesConfig(s.waiting_time, s.stability_tol, s.max_rounds,
                          self.seed if seed is None else seed, s.mmd_rule, s.utility_tol,
                          s.explore_prob)

    def imes_scenario(self) -> ImesScenario:
        tau, b, _ = self.factor_matrices()
        model = OmdUtilityModel(self.capacity_params(), self.channel.log_base)
        agents = [MmdAgent(m.omega, m.price, m.cost, self.imes.mu_omega, self.imes.mu_p,
                           self.imes.delta_t, m.omega_cap) for m in self.mmds]
        return ImesScenario.from_groups(self.group_sizes, tau, b, agents, model,
                                        tuple(g.name for g in self.groups))

    def sweep_settings(self) -> SweepSettings:
        s, c = self.sim, self.channel
        return SweepSettings(
            s.n_omd, s.n_mmd, s.area, s.comm_range,
            TrafficModel(s.message_size, s.slot_length, s.slots_per_round),
            RadioParams(s.mmd_bandwidth, c.p_source, c.p_relay, c.noise_var, s.exponent,
                        s.reference_gain))


# ----- text format ----------------------------------------------------------------

_SIMPLE = {"channel": ChannelConfig, "evo": EvoConfig, "imes": ImesSection, "sim": SimSection}
_GROUP_KEYS = ("size", "y")
_MMD_KEYS = ("omega", "price", "cost", "omega_cap", "h_sr", "h_sd", "h_rd")


def _fmt(v) -> str:
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return "e" if v == math.e else repr(v)
    return str(v)


def serialize(cfg: ScenarioConfig) -> str:
    """Text form of a fully resolved config; :func:`parse_config` reads it back equal."""
    out = ["[run]", f"seed = {cfg.seed}", ""]
    for sec in ("channel", "evo", "imes", "sim"):
        obj = getattr(cfg, sec)
        out.append(f"[{sec}]")
        out += [f"{f.name} = {_fmt(getattr(obj, f.name))}" for f in fields(obj)]
        out.append("")
    for g in cfg.groups:
        out += [f"[group.{g.name}]", f"size = {g.size}"]
        if g.y is not None:
            out.append(f"y = {_fmt(tuple(g.y))}")
        out.append("")
    for m in cfg.mmds:
        out.append(f"[mmd.{m.name}]")
        out += [f"{k} = {_fmt(getattr(m, k))}" for k in _MMD_KEYS]
        out.append("")
    return "\n".join(out)


def _line_index(text: str) -> dict:
    """Map ``(section, key)`` to the 1-based line where the key is set."""
    where, section = {}, None
    for no, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip()
            where[(section, None)] = no
        elif section and s and s[0] not in "#;":
            key = re.split(r"[=:]", s, maxsplit=1)[0].strip().lower()
            where[(section, key)] = no
    return where


def _convert(raw: str, proto):
    raw = raw.strip()
    if isinstance(proto, tuple) or proto is None:
        return tuple(float(x) for x in raw.split(",") if x.strip())
    if isinstance(proto, bool):
        return raw.lower() in ("1", "true", "yes", "on")
    if isinstance(proto, int):
        return int(raw)
    if isinstance(proto, float):
        return math.e if raw.lower() == "e" else float(raw)
    return raw


def parse_config(text: str, source: str = "<string>") -> ScenarioConfig:
    """Parse scenario text; see the module docstring for the grammar."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        if line is None and getattr(exc, "errors", None):
            line = exc.errors[0][0]
        raise ConfigError(f"{source}:{line}: parse error: {exc.message.splitlines()[0]}") from exc
    lines = _line_index(text)

    def fail(section, key, msg):
        no = lines.get((section, key), lines.get((section, None), "?"))
        where = f"[{section}]" + (f" {key}" if key else "")
        return ConfigError(f"{source}:{no}: {where}: {msg}")

    def build(section, cls, allowed, defaults):
        kw = {}
        for key, raw in parser.items(section):
            if key not in allowed:
                raise fail(section, key, f"unknown key {key!r}")
            try:
                kw[key] = _convert(raw, defaults.get(key))
            except ValueError as exc:
                raise fail(section, key, f"cannot parse {raw!r}: {exc}") from exc
        try:
            return cls(**{**defaults, **kw})
        except (ValueError, TypeError) as exc:
            key = next((k for k in kw if k in str(exc)), None)
            raise fail(section, key, str(exc)) from exc

    top = {}
    groups, mmds = [], []
    for section in parser.sections():
        if section == "run":
            for key, raw in parser.items(section):
                if key != "seed":
                    raise fail(section, key, f"unknown key {key!r}")
                try:
                    top["seed"] = int(raw)
                except ValueError as exc:
                    raise fail(section, key, f"cannot parse {raw!r}: {exc}") from exc
        elif section in _SIMPLE:
            cls = _SIMPLE[section]
            defaults = {f.name: getattr(cls(), f.name) for f in fields(cls)}
            top[section] = build(section, cls, defaults.keys(), defaults)
        elif section.startswith("group."):
            name = section.split(".", 1)[1]
            groups.append(build(section, GroupConfig, _GROUP_KEYS,
                                {"name": name, "size": 1, "y": None}))
        elif section.startswith("mmd."):
            name = section.split(".", 1)[1]
            defaults = {"name": name, "omega": 20.0, "price": 1.0, "cost": 0.5,
                        "omega_cap": BANDWIDTH_CAP, "h_sr": 0.3, "h_sd": 0.25, "h_rd": 0.4}
            mmds.append(build(section, MmdConfig, _MMD_KEYS, defaults))
        else:
            raise fail(section, None, f"unknown section [{section}]")
    if groups:
        top["groups"] = tuple(groups)
    if mmds:
        top["mmds"] = tuple(mmds)
    try:
        return ScenarioConfig(**top)
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def load_config(path) -> ScenarioConfig:
    """Read and validate a scenario file; an empty file yields the defaults."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{path}: no such file")
    return parse_config(p.read_text(), str(p))


def with_seed(cfg: ScenarioConfig, seed: int | None) -> ScenarioConfig:
    return cfg if seed is None else replace(cfg, seed=int(seed))
