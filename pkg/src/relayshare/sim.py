"""Topology generation and TDMA service-delay simulation.

Each source OMD sends one message to its paired destination OMD. Every flow
leases spectrum from one MMD; the MMD serves its attached flows round-robin
with one slot per backlogged flow per round. A flow relays through its MMD
when that beats the direct link, otherwise it transmits directly inside its
slot. Two attachment policies are compared:

``"imes"``
    attachments fixed by the distributed imitation protocol (zero prices,
    fixed bandwidth, utility equal to the per-flow capacity share).
``"rand"``
    each flow picks an MMD uniformly at random.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import CapacityParams
from .imes import ImesConfig, ImesScenario, MmdAgent, OmdUtilityModel, run_imes

#: reference gain placing a 30 m link at amplitude 0.3 for exponent 3
DEFAULT_REFERENCE_GAIN = 0.09 * 30.0**3
POLICIES = ("imes", "rand")
SWEEP_PARAMETERS = ("omds", "mmds", "area")


class TopologyError(ValueError):
    """Raised when too few OMDs can be paired for a meaningful experiment."""


@dataclass(frozen=True)
class Topology:
    area: float  # side length of the square region, meters
    omd_positions: np.ndarray  # (n_omd, 2)
    mmd_positions: np.ndarray  # (n_mmd, 2)
    sd_pairs: tuple  # ((source, destination), ...)
    comm_range: float = 50.0

    @property
    def n_omd(self) -> int:
        return self.omd_positions.shape[0]

    @property
    def n_mmd(self) -> int:
        return self.mmd_positions.shape[0]

    @property
    def paired_fraction(self) -> float:
        return 2 * len(self.sd_pairs) / self.n_omd

    def to_csv(self) -> str:
        """Rows ``node_id, kind, x, y``; OMDs first, then MMDs."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["node_id", "kind", "x", "y"])
        for k, (x, y) in enumerate(self.omd_positions):
            w.writerow([k, "omd", repr(float(x)), repr(float(y))])
        for k, (x, y) in enumerate(self.mmd_positions):
            w.writerow([self.n_omd + k, "mmd", repr(float(x)), repr(float(y))])
        return buf.getvalue()


def _pair_greedy(pos: np.ndarray, comm_range: float) -> list[tuple[int, int]]:
    n = pos.shape[0]
    dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
    np.fill_diagonal(dist, np.inf)
    dist[dist > comm_range] = np.inf
    free = np.ones(n, dtype=bool)
    pairs = []
    for s in range(n):
        if not free[s]:
            continue
        cand = np.where(free, dist[s], np.inf)
        d = int(np.argmin(cand))
        if np.isfinite(cand[d]):
            free[s] = free[d] = False
            pairs.append((s, d))
    return pairs


def generate_topology(area: float, n_omd: int, n_mmd: int, comm_range: float = 50.0,
                      seed: int = 0) -> Topology:
    """Uniform placement in an ``area x area`` square with greedy pairing.

    In index order, every still-unpaired OMD is paired with its nearest
    unpaired OMD lying within ``comm_range``.

    Raises
    ------
    TopologyError
        If more than half of the OMDs are left without a partner.
    """
    if n_omd < 1 or n_mmd < 1:
        raise ValueError("n_omd >= 1 and n_mmd >= 1 violated")
    if area <= 0 or comm_range <= 0:
        raise ValueError("area > 0 and comm_range > 0 violated")
    rng = np.random.default_rng(seed)
    omd = rng.uniform(0.0, area, size=(n_omd, 2))
    mmd = rng.uniform(0.0, area, size=(n_mmd, 2))
    pairs = _pair_greedy(omd, comm_range)
    unpaired = n_omd - 2 * len(pairs)
    if unpaired > n_omd / 2:
        raise TopologyError(
            f"only {2 * len(pairs)} of {n_omd} OMDs could be paired within {comm_range} m")
    return Topology(float(area), omd, mmd, tuple(pairs), float(comm_range))


def channel_from_distance(distance, exponent: float = 3.0,
                          reference_gain: float = DEFAULT_REFERENCE_GAIN):
    """Amplitude gain ``sqrt(g0 * d**-exponent)`` clamped to at most 1."""
    d = np.asarray(distance, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance > 0 violated")
    h = np.minimum(np.sqrt(reference_gain * d ** (-exponent)), 1.0)
    return float(h) if h.ndim == 0 else h


@dataclass(frozen=True)
class TrafficModel:
    message_size: float = 100.0
    slot_length: float = 1.0
    slots_per_round: int = 1  # slots granted to each backlogged flow per round

    def __post_init__(self):
        if self.message_size <= 0 or self.slot_length <= 0 or self.slots_per_round < 1:
            raise ValueError("message_size, slot_length, slots_per_round > 0 violated")


@dataclass(frozen=True)
class RadioParams:
    """Physical-layer constants and per-MMD bandwidth for the delay model."""

    mmd_bandwidth: float = 20.0
    p_source: float = 2.0
    p_relay: float = 2.0
    noise_var: float = 1.0
    exponent: float = 3.0
    reference_gain: float = DEFAULT_REFERENCE_GAIN

    def __post_init__(self):
        if self.mmd_bandwidth <= 0:
            raise ValueError("mmd_bandwidth > 0 violated")
        if self.p_source <= 0 or self.p_relay <= 0 or self.noise_var <= 0:
            raise ValueError("powers and noise_var > 0 violated")


@dataclass
class DelayStats:
    completion: np.ndarray  # per flow, np.inf when the flow can never finish
    mean: float
    p50: float
    p95: float
    infinite_count: int

    @classmethod
    def from_completion(cls, completion) -> "DelayStats":
        c = np.asarray(completion, dtype=float)
        fin = c[np.isfinite(c)]
        if fin.size == 0:
            return cls(c, math.nan, math.nan, math.nan, int(c.size))
        return cls(c, float(fin.mean()), float(np.percentile(fin, 50)),
                   float(np.percentile(fin, 95)), int(c.size - fin.size))


def link_factors(topology: Topology, radio: RadioParams = RadioParams()):
    """SNR factors ``tau`` and ``b`` of every flow towards every MMD, each ``(F, m)``."""
    pairs = np.asarray(topology.sd_pairs, dtype=int).reshape(-1, 2)
    src = topology.omd_positions[pairs[:, 0]]
    dst = topology.omd_positions[pairs[:, 1]]
    mmd = topology.mmd_positions

    def gain(a, b):
        return channel_from_distance(np.maximum(np.linalg.norm(a - b, axis=-1), 1e-9),
                                     radio.exponent, radio.reference_gain)

    h_sd = gain(src, dst)[:, None]
    h_sr = gain(src[:, None, :], mmd[None, :, :])
    h_rd = gain(mmd[None, :, :], dst[:, None, :])
    s2, ps, pr = radio.noise_var, radio.p_source, radio.p_relay
    d = ps * h_sd**2 / s2
    r = ps * pr * h_sr**2 * h_rd**2 / (s2 * (s2 + ps * h_sr**2 + pr * h_rd**2))
    b = np.broadcast_to(1.0 + d, r.shape).copy()
    return 1.0 + d + r, b


def slot_rates(tau, b) -> np.ndarray:
    """Per-unit-bandwidth rate of each flow/MMD option: relay or direct, whichever is higher."""
    return np.maximum(0.5 * np.log2(tau), np.log2(b))


def serve_round_robin(rates, attachment, n_mmd: int, traffic: TrafficModel = TrafficModel()):
    """Completion time of each flow under per-MMD round-robin service.

    ``rates[f]`` is the amount of data flow ``f`` moves per unit time while
    it holds the channel. Every round each MMD grants each of its backlogged
    flows ``slots_per_round`` slots. A flow that finishes part-way through
    its slot releases the channel immediately, so no MMD idles while it still
    has backlog. Flows with zero rate never complete and get ``np.inf``.
    """
    rates = np.asarray(rates, dtype=float)
    attachment = np.asarray(attachment, dtype=int)
    quantum = traffic.slot_length * traffic.slots_per_round
    done = np.full(rates.shape[0], np.inf)
    for j in range(n_mmd):
        flows = np.flatnonzero((attachment == j) & (rates > 0))
        remaining = np.full(flows.size, float(traffic.message_size))
        clock = 0.0
        active = np.arange(flows.size)
        while active.size:
            need = remaining[active] / rates[flows[active]]
            used = np.minimum(need, quantum)
            ends = clock + np.cumsum(used)
            finished = need <= quantum
            done[flows[active[finished]]] = ends[finished]
            remaining[active] -= used * rates[flows[active]]
            clock = float(ends[-1])
            active = active[~finished]
    return done


def imes_attachment(tau, b, topology: Topology, radio: RadioParams, seed: int,
                    waiting_time: int = 100) -> np.ndarray:
    """Attachments reached by the imitation protocol at zero prices.

    Flows are grouped by the MMD nearest to their source; bandwidth and prices
    stay fixed, so one outer round suffices.
    """
    pairs = np.asarray(topology.sd_pairs, dtype=int).reshape(-1, 2)
    src = topology.omd_positions[pairs[:, 0]]
    near = np.argmin(np.linalg.norm(src[:, None, :] - topology.mmd_positions[None], axis=-1), axis=1)
    _, gid = np.unique(near, return_inverse=True)
    model = OmdUtilityModel(CapacityParams(), utility_model="capacity", relay_indicator=False)
    mmds = [MmdAgent(radio.mmd_bandwidth, 0.0, 0.0, mu_omega=0.0, mu_p=0.0)
            for _ in range(topology.n_mmd)]
    scen = ImesScenario(gid.astype(int), np.asarray(tau), np.asarray(b), mmds, model)
    trace = run_imes(ImesConfig(waiting_time=waiting_time, max_rounds=1, seed=seed), scen)
    return trace.final_assignment


def simulate_delay(topology: Topology, policy: str = "imes", traffic: TrafficModel = TrafficModel(),
                   radio: RadioParams = RadioParams(), seed: int = 0) -> DelayStats:
    """Per-flow completion times for one topology and attachment policy."""
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}; expected one of {POLICIES}")
    if not topology.sd_pairs:
        return DelayStats.from_completion([])
    tau, b = link_factors(topology, radio)
    n_flows, m = tau.shape
    if policy == "imes":
        att = imes_attachment(tau, b, topology, radio, seed)
    else:
        att = np.random.default_rng([seed, 1]).integers(0, m, size=n_flows)
    rates = radio.mmd_bandwidth * slot_rates(tau, b)[np.arange(n_flows), att]
    return DelayStats.from_completion(serve_round_robin(rates, att, m, traffic))


@dataclass(frozen=True)
class SweepSettings:
    """Fixed parameters of a delay sweep; the swept one is overridden per cell."""

    n_omd: int = 40
    n_mmd: int = 3
    area: float = 100.0
    comm_range: float = 50.0
    traffic: TrafficModel = TrafficModel()
    radio: RadioParams = RadioParams()

    def with_value(self, parameter: str, value) -> "SweepSettings":
        if parameter == "omds":
            return replace(self, n_omd=int(value))
        if parameter == "mmds":
            return replace(self, n_mmd=int(value))
        if parameter == "area":
            return replace(self, area=float(value))
        raise ValueError(f"unknown sweep parameter {parameter!r}; expected one of {SWEEP_PARAMETERS}")


@dataclass
class SweepCell:
    param_value: float
    policy: str
    seeds: tuple
    seed_means: np.ndarray  # mean delay of each seed
    mean_delay: float
    std_delay: float
    p95_delay: float
    infinite_count: int
    error: str = ""


@dataclass
class SweepResult:
    parameter: str
    cells: list = field(default_factory=list)

    def cell(self, value, policy) -> SweepCell:
        for c in self.cells:
            if c.param_value == value and c.policy == policy:
                return c
        raise KeyError((value, policy))

    def series(self, policy: str, metric: str = "mean_delay"):
        rows = [(c.param_value, getattr(c, metric)) for c in self.cells if c.policy == policy]
        return np.array(rows, dtype=float).reshape(-1, 2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["param_value", "policy", "seed_count", "mean_delay", "std_delay",
                    "p95_delay", "infinite_count", "error"])
        for c in self.cells:
            w.writerow([repr(float(c.param_value)), c.policy, len(c.seeds), repr(c.mean_delay),
                        repr(c.std_delay), repr(c.p95_delay), c.infinite_count, c.error])
        return buf.getvalue()


def _run_seed(args):
    settings, policies, seed = args
    try:
        topo = generate_topology(settings.area, settings.n_omd, settings.n_mmd,
                                 settings.comm_range, seed)
    except TopologyError as exc:
        return {p: exc for p in policies}
    return {p: simulate_delay(topo, p, settings.traffic, settings.radio, seed) for p in policies}


def delay_sweep(parameter: str, values, policies=POLICIES, seeds=range(30),
                settings: SweepSettings = SweepSettings(), jobs: int = 1) -> SweepResult:
    """Mean and spread of the per-seed mean delay over a one-parameter grid.

    Every (value, seed) cell uses the same topology for all policies. Cells
    may run in worker processes (``jobs > 1``); results are merged in grid
    order, so the output does not depend on ``jobs``. A cell whose topology
    cannot be built is reported with its error message and NaN statistics.
    """
    values = list(values)
    seeds = tuple(int(s) for s in seeds)
    if not values:
        raise ValueError("sweep range is empty")
    if not seeds:
        raise ValueError("at least one seed is required")
    tasks = [(settings.with_value(parameter, v), tuple(policies), s) for v in values for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_seed, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        outcomes = [_run_seed(t) for t in tasks]

    result = SweepResult(parameter)
    for vi, v in enumerate(values):
        block = outcomes[vi * len(seeds):(vi + 1) * len(seeds)]
        for p in policies:
            stats = [o[p] for o in block]
            errors = [str(s) for s in stats if isinstance(s, Exception)]
            good = [s for s in stats if not isinstance(s, Exception)]
            means = np.array([s.mean for s in good], dtype=float)
            finite = means[np.isfinite(means)]
            pooled = np.concatenate([s.completion[np.isfinite(s.completion)] for s in good]) \
                if good else np.array([])
            result.cells.append(SweepCell(
                param_value=float(v), policy=p, seeds=seeds, seed_means=means,
                mean_delay=float(finite.mean()) if finite.size else math.nan,
                std_delay=float(finite.std(ddof=1)) if finite.size > 1 else math.nan,
                p95_delay=float(np.percentile(pooled, 95)) if pooled.size else math.nan,
                infinite_count=int(sum(s.infinite_count for s in good)),
                error=f"{len(errors)} seed(s) failed: {errors[0]}" if errors else "",
            ))
    return result
