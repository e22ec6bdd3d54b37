"""Distributed protocol: OMD imitation rounds nested inside MMD strategy updates.

The simulation is synchronous. Within a DAO round every OMD reads the
attachment state published at the end of the previous round, so the
outcome does not depend on agent iteration order.
"""
from __future__ import annotations

import csv
import io
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .channel import CapacityParams
from .mmd_game import BANDWIDTH_CAP

_N_FLOOR = 1e-12


def group_average_utility(utilities, counts) -> float:
    """Attachment-weighted mean utility of a group over its MMD choices."""
    u = np.asarray(utilities, dtype=float)
    n = np.asarray(counts, dtype=float)
    total = n.sum()
    if total <= 0:
        raise ValueError("group average undefined for an empty group")
    return float(np.dot(u, n) / total)


def switch_probability(avg: float, own: float) -> float:
    """Probability that a member earning ``own`` abandons its relay.

    The relative shortfall ``(avg - own) / |avg|`` clamped to ``[0, 1]``;
    zero when ``avg == 0``.
    """
    if avg == 0:
        return 0.0
    return min(max((avg - own) / abs(avg), 0.0), 1.0)


@dataclass
class OmdAgents:
    """Struct-of-arrays view of every OMD: group, attached MMD, last utility.

    ``tau``/``b`` hold per-agent SNR factors towards each MMD, shape ``(N, m)``.
    """

    group_id: np.ndarray
    current_mmd: np.ndarray
    tau: np.ndarray
    b: np.ndarray
    last_utility: np.ndarray = None

    def __post_init__(self):
        self.group_id = np.asarray(self.group_id, dtype=int)
        self.current_mmd = np.asarray(self.current_mmd, dtype=int)
        self.tau = np.atleast_2d(np.asarray(self.tau, dtype=float))
        self.b = np.atleast_2d(np.asarray(self.b, dtype=float))
        if self.last_utility is None:
            self.last_utility = np.zeros(self.group_id.shape[0])

    def __len__(self):
        return self.group_id.shape[0]

    def counts(self, n_mmds: int) -> np.ndarray:
        return np.bincount(self.current_mmd, minlength=n_mmds)

    def group_counts(self, n_groups: int, n_mmds: int) -> np.ndarray:
        out = np.zeros((n_groups, n_mmds), dtype=int)
        np.add.at(out, (self.group_id, self.current_mmd), 1)
        return out


@dataclass
class MmdAgent:
    omega: float
    price: float
    cost: float = 0.0
    mu_omega: float = 1.0
    mu_p: float = 0.5
    delta_t: float = 1.0
    omega_cap: float = BANDWIDTH_CAP
    utility_history: deque = field(default_factory=lambda: deque(maxlen=2))

    def __post_init__(self):
        if self.delta_t <= 0:
            raise ValueError("delta_t > 0 violated")


@dataclass(frozen=True)
class OmdUtilityModel:
    """How an OMD values a relay (mirrors ``GroupEconomics`` settings)."""

    capacity: CapacityParams = CapacityParams()
    log_base: float = math.e
    utility_model: str = "log"
    relay_indicator: bool = True


def _utilities(cur, tau_all, b_all, omega, prices, counts, model: OmdUtilityModel) -> np.ndarray:
    rows = np.arange(cur.shape[0])
    n = np.maximum(counts[cur].astype(float), _N_FLOOR)
    tau = tau_all[rows, cur]
    b = b_all[rows, cur]
    cp = model.capacity
    if model.utility_model == "log":
        scale = cp.k_omega * omega[cur] / n
        lb = math.log(model.log_base)
        c_r = np.log(np.maximum(scale * tau, 1e-300)) / lb
        c_d = np.log(np.maximum(scale * b, 1e-300)) / lb
    else:
        share = omega[cur] / n
        c_r = 0.5 * share * np.log2(tau)
        c_d = share * np.log2(b)
    u = cp.alpha * cp.t_ij * np.maximum(c_r, c_d) - prices[cur]
    if model.relay_indicator:
        u = np.where(c_r > c_d, u, 0.0)
    return u


def agent_utilities(agents: OmdAgents, omega, prices, model: OmdUtilityModel,
                    counts=None) -> np.ndarray:
    """Utility of every OMD on its current MMD given realised loads."""
    omega = np.asarray(omega, dtype=float)
    prices = np.asarray(prices, dtype=float)
    if counts is None:
        counts = agents.counts(omega.shape[0])
    return _utilities(agents.current_mmd, agents.tau, agents.b, omega, prices,
                      np.asarray(counts), model)


@dataclass
class DaoOutcome:
    agents: OmdAgents
    stable: bool
    switches: int


def dao_round(agents: OmdAgents, omega, prices, model: OmdUtilityModel, rng: np.random.Generator,
              n_groups: int, tol: float = 1e-6, explore_prob: float = 0.0) -> DaoOutcome:
    """One synchronous round of the OMD imitation protocol.

    Members earning less than their group average leave with probability
    :func:`switch_probability` and copy the relay of a uniformly drawn group
    member that earns strictly more. With ``explore_prob > 0`` an agent that
    did not imitate also inspects one other MMD's published offer and moves
    there if it would earn strictly more (its own arrival counted in the
    load). Four uniforms are drawn per agent every round regardless of
    outcome, which keeps the random stream aligned.
    """
    omega = np.asarray(omega, dtype=float)
    prices = np.asarray(prices, dtype=float)
    m = omega.shape[0]
    gid = agents.group_id
    cur = agents.current_mmd
    n_agents = gid.shape[0]
    counts = np.bincount(cur, minlength=m)
    u = _utilities(cur, agents.tau, agents.b, omega, prices, counts, model)
    r_leave, r_pick, r_explore, r_target = rng.random((4, n_agents))

    sizes = np.bincount(gid, minlength=n_groups)
    present = sizes > 0
    ubar = np.bincount(gid, weights=u, minlength=n_groups) / np.maximum(sizes, 1)
    # one sort by (group, utility); offsets keep groups in separate bands
    span = float(u.max() - u.min()) + 1.0 if n_agents else 1.0
    key = u + gid * span * 2.0
    order = np.argsort(key, kind="stable")
    sorted_key = key[order]
    ends = np.cumsum(sizes)
    starts = ends - sizes
    g_min = np.where(present, u[order][np.minimum(starts, n_agents - 1)], 0.0)
    g_max = np.where(present, u[order][np.maximum(ends - 1, 0)], 0.0)
    stable = bool(np.all(g_max - g_min <= tol))

    new_mmd = cur.copy()
    if m > 1 and n_agents:
        avg = ubar[gid]
        with np.errstate(divide="ignore", invalid="ignore"):
            psi = np.where(avg != 0, np.clip((avg - u) / np.abs(avg), 0.0, 1.0), 0.0)
        leaving = (u < avg) & (r_leave < psi)
        lo = np.searchsorted(sorted_key, key + tol, side="right")
        n_better = ends[gid] - lo
        leaving &= n_better > 0
        idx = np.flatnonzero(leaving)
        pick = lo[idx] + np.minimum((r_pick[idx] * n_better[idx]).astype(int), n_better[idx] - 1)
        new_mmd[idx] = cur[order[pick]]
        if explore_prob > 0:
            cand = np.flatnonzero(~leaving & (r_explore < explore_prob))
            if cand.size:
                other = (cur[cand] + 1 + (r_target[cand] * (m - 1)).astype(int)) % m
                u_alt = _utilities(other, agents.tau[cand], agents.b[cand], omega, prices,
                                   counts + 1, model)
                better = u_alt > u[cand] + tol
                new_mmd[cand[better]] = other[better]
    switches = int(np.count_nonzero(new_mmd != cur))
    out = OmdAgents(gid, new_mmd, agents.tau, agents.b, u)
    return DaoOutcome(out, stable, switches)


def dam_update(agent: MmdAgent, current_utility: float, previous_utility: float) -> MmdAgent:
    """Utility-difference update of bandwidth and price with the protocol clamps."""
    step = (current_utility - previous_utility) / agent.delta_t
    omega = min(max(agent.omega + agent.mu_omega * step, 0.0), agent.omega_cap)
    price = max(agent.price + agent.mu_p * step, 0.0)
    return _moved(agent, omega, price, current_utility)


def dam_marginal_update(agent: MmdAgent, share: float, n_total: float, log_base: float = math.e) -> MmdAgent:
    """Ascent step on per-OMD utility using the locally observed market share.

    With followers responding as ``s ~ omega * Y * base**(-p)`` (normalised),
    ``d(U/n)/dp = s - p ln(base) s (1 - s)`` and
    ``d(U/n)/d omega = p s (1 - s) / omega - cost / n``; both need only the
    MMD's own share, price and bandwidth.
    """
    lb = math.log(log_base)
    s = min(max(share, 0.0), 1.0)
    g_p = s - agent.price * lb * s * (1.0 - s)
    if agent.omega > 0:
        g_w = agent.price * s * (1.0 - s) / agent.omega - agent.cost / n_total
    else:
        g_w = 1.0
    omega = min(max(agent.omega + agent.mu_omega * g_w, 0.0), agent.omega_cap)
    price = max(agent.price + agent.mu_p * g_p, 0.0)
    return _moved(agent, omega, price, None)


def _moved(agent: MmdAgent, omega: float, price: float, utility) -> MmdAgent:
    hist = deque(agent.utility_history, maxlen=2)
    if utility is not None:
        hist.append(utility)
    return MmdAgent(omega, price, agent.cost, agent.mu_omega, agent.mu_p, agent.delta_t,
                    agent.omega_cap, hist)


@dataclass(frozen=True)
class ImesConfig:
    waiting_time: int = 100
    stability_tol: float = 1e-4
    max_rounds: int = 20000
    seed: int = 0
    mmd_rule: str = "marginal"
    utility_tol: float = 1e-6
    explore_prob: float = 0.05

    def __post_init__(self):
        if self.waiting_time <= 0:
            raise ValueError("waiting_time T > 0 violated")
        if self.stability_tol <= 0:
            raise ValueError("stability_tol > 0 violated")
        if not 0 <= self.explore_prob <= 1:
            raise ValueError("explore_prob in [0, 1] violated")
        if self.mmd_rule not in ("marginal", "difference"):
            raise ValueError(f"unknown mmd_rule {self.mmd_rule!r}")


@dataclass
class ImesScenario:
    """Everything the protocol needs besides its own tuning.

    ``tau``/``b`` are per-agent factor rows ``(N, m)``; use
    :meth:`from_groups` to expand per-group rows.
    """

    group_id: np.ndarray
    tau: np.ndarray
    b: np.ndarray
    mmds: list
    model: OmdUtilityModel = OmdUtilityModel()
    group_names: tuple = ()

    @classmethod
    def from_groups(cls, group_sizes, tau_rows, b_rows, mmds, model=None, group_names=()):
        sizes = [int(s) for s in group_sizes]
        gid = np.repeat(np.arange(len(sizes)), sizes)
        tau = np.asarray(tau_rows, dtype=float)[gid]
        b = np.asarray(b_rows, dtype=float)[gid]
        return cls(gid, tau, b, list(mmds), model or OmdUtilityModel(), tuple(group_names))

    @property
    def n_groups(self) -> int:
        return int(self.group_id.max()) + 1 if self.group_id.size else 0

    @property
    def n_mmds(self) -> int:
        return len(self.mmds)


@dataclass
class SimTrace:
    rounds: np.ndarray
    omegas: np.ndarray  # (R, m) strategy in force during the round
    prices: np.ndarray
    utilities: np.ndarray  # (R, m) realised MMD utility
    attachments: np.ndarray  # (R, G, m) realised counts at the end of the round
    mean_share: np.ndarray  # (R, m) share averaged over the round's DAO steps
    inner_rounds: np.ndarray
    status: str
    final_assignment: np.ndarray
    group_names: tuple = ()

    @property
    def final_prices(self) -> np.ndarray:
        return self.prices[-1]

    @property
    def final_omegas(self) -> np.ndarray:
        return self.omegas[-1]

    @property
    def final_attached(self) -> np.ndarray:
        return self.attachments[-1].sum(axis=0)

    def csv_header(self) -> list[str]:
        g = self.attachments.shape[1]
        names = self.group_names or tuple(str(k) for k in range(g))
        return ["round", "mmd_id", "omega", "price", "utility"] + [f"attached_{n}" for n in names]

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(self.csv_header())
        for r in range(self.rounds.shape[0]):
            for i in range(self.omegas.shape[1]):
                w.writerow([int(self.rounds[r]), i, repr(float(self.omegas[r, i])),
                            repr(float(self.prices[r, i])), repr(float(self.utilities[r, i]))]
                           + [int(c) for c in self.attachments[r, :, i]])

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()


def run_imes(config: ImesConfig, scenario: ImesScenario) -> SimTrace:
    """Alternate OMD imitation (up to ``T`` rounds) with one update per MMD.

    The inner imitation loop ends early once every group has equal utilities
    (within ``utility_tol``) or a round passes with no OMD switching. With
    integer attachment counts exact equality is rarely reachable, so the
    second condition is what usually ends the loop. The run stops when no
    MMD moves its bandwidth or price by ``stability_tol`` or more; otherwise
    the trace is flagged ``"budget-exhausted"`` after ``max_rounds``.
    """
    rng = np.random.default_rng(config.seed)
    m = scenario.n_mmds
    n_groups = scenario.n_groups
    n_total = len(scenario.group_id)
    agents = OmdAgents(scenario.group_id, rng.integers(0, m, size=n_total), scenario.tau, scenario.b)
    mmds = [MmdAgent(**_mmd_fields(x)) if not isinstance(x, MmdAgent) else x for x in scenario.mmds]
    prev_util = np.zeros(m)

    rows = {k: [] for k in ("omega", "price", "util", "att", "share", "inner")}
    status = "budget-exhausted"
    for rnd in range(1, config.max_rounds + 1):
        omega = np.array([a.omega for a in mmds])
        prices = np.array([a.price for a in mmds])
        share_acc = np.zeros(m)
        inner = 0
        for inner in range(1, config.waiting_time + 1):
            out = dao_round(agents, omega, prices, scenario.model, rng, n_groups,
                            config.utility_tol, config.explore_prob)
            agents = out.agents
            share_acc += agents.counts(m)
            if out.stable or out.switches == 0:
                break
        share = share_acc / (inner * max(n_total, 1))
        counts = agents.counts(m)
        util = prices * counts - np.array([a.cost for a in mmds]) * omega
        rows["omega"].append(omega)
        rows["price"].append(prices)
        rows["util"].append(util)
        rows["att"].append(agents.group_counts(n_groups, m))
        rows["share"].append(share)
        rows["inner"].append(inner)

        if config.mmd_rule == "marginal":
            mmds = [dam_marginal_update(a, share[i], n_total, scenario.model.log_base)
                    for i, a in enumerate(mmds)]
        else:
            mmds = [dam_update(a, util[i], prev_util[i]) for i, a in enumerate(mmds)]
        prev_util = util
        d_omega = max(abs(a.omega - omega[i]) for i, a in enumerate(mmds))
        d_price = max(abs(a.price - prices[i]) for i, a in enumerate(mmds))
        if d_omega < config.stability_tol and d_price < config.stability_tol:
            status = "converged"
            break

    return SimTrace(
        rounds=np.arange(1, len(rows["omega"]) + 1),
        omegas=np.array(rows["omega"]),
        prices=np.array(rows["price"]),
        utilities=np.array(rows["util"]),
        attachments=np.array(rows["att"]),
        mean_share=np.array(rows["share"]),
        inner_rounds=np.array(rows["inner"]),
        status=status,
        final_assignment=agents.current_mmd.copy(),
        group_names=scenario.group_names,
    )


def _mmd_fields(x) -> dict:
    if isinstance(x, dict):
        return dict(x)
    return {"omega": x.omega, "price": x.price, "cost": x.cost, "omega_cap": x.omega_cap}
