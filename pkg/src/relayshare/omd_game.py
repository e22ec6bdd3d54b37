"""Evolutionary game among ordinary mobile devices (OMDs).

OMDs are organised in groups; each group's state is the vector of fractions
attached to each relay (MMD). States evolve under delayed replicator
dynamics driven by per-(group, MMD) utilities.

Array conventions: ``fractions`` and ``y_values`` are ``(G, m)`` arrays
(groups x MMDs); ``omega`` and ``prices`` are length ``m``.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import CapacityParams, b_factor, tau_factor

_N_FLOOR = 1e-12
_ARG_FLOOR = 1e-300


@dataclass
class PopulationState:
    fractions: np.ndarray
    group_sizes: np.ndarray

    def __post_init__(self):
        self.fractions = np.atleast_2d(np.asarray(self.fractions, dtype=float))
        self.group_sizes = np.asarray(self.group_sizes, dtype=float).reshape(-1)
        if self.fractions.shape[0] != self.group_sizes.shape[0]:
            raise ValueError("one fraction vector per group required")
        if np.any(self.group_sizes < 1):
            raise ValueError("group_sizes >= 1 violated")
        if np.any(self.fractions < 0) or not np.allclose(self.fractions.sum(axis=1), 1.0, atol=1e-9):
            raise ValueError("each group's fractions must be >= 0 and sum to 1")

    @property
    def attached(self) -> np.ndarray:
        """Expected number of OMDs attached to each MMD, ``n_i``."""
        return self.group_sizes @ self.fractions

    def copy(self) -> "PopulationState":
        return PopulationState(self.fractions.copy(), self.group_sizes.copy())


@dataclass(frozen=True)
class EvoParams:
    delta: float = 1.0
    tau: int = 1
    dt: float = 0.01

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("delta > 0 violated")
        if self.tau < 0 or int(self.tau) != self.tau:
            raise ValueError("tau >= 0 integer violated")
        if self.dt <= 0:
            raise ValueError("dt > 0 violated")


@dataclass
class GroupEconomics:
    """What the followers see: channel factors, offered bandwidth and prices.

    ``tau_values``/``b_values`` are the relayed and direct SNR factors per
    (group, MMD); ``y_values`` is their elementwise max. ``utility_model``
    selects the concave surrogate (``"log"``, default) or the Shannon
    capacities with equal bandwidth split (``"capacity"``).
    """

    y_values: np.ndarray
    omega: np.ndarray
    prices: np.ndarray
    tau_values: np.ndarray | None = None
    b_values: np.ndarray | None = None
    capacity: CapacityParams = field(default_factory=CapacityParams)
    log_base: float = math.e
    utility_model: str = "log"

    def __post_init__(self):
        self.y_values = np.atleast_2d(np.asarray(self.y_values, dtype=float))
        self.omega = np.asarray(self.omega, dtype=float).reshape(-1)
        self.prices = np.asarray(self.prices, dtype=float).reshape(-1)
        m = self.omega.shape[0]
        if self.y_values.shape[1] != m or self.prices.shape[0] != m:
            raise ValueError("y_values, omega and prices disagree on the number of MMDs")
        if np.any(self.y_values < 1):
            raise ValueError("y_values >= 1 violated")
        if np.any(self.omega < 0):
            raise ValueError("omega >= 0 violated")
        if np.any(self.prices < 0):
            raise ValueError("prices >= 0 violated")
        if self.tau_values is None:
            self.tau_values = self.y_values.copy()
        else:
            self.tau_values = np.atleast_2d(np.asarray(self.tau_values, dtype=float))
        if self.b_values is None:
            self.b_values = np.ones_like(self.y_values)
        else:
            self.b_values = np.atleast_2d(np.asarray(self.b_values, dtype=float))
        if self.utility_model not in ("log", "capacity"):
            raise ValueError(f"unknown utility_model {self.utility_model!r}")

    @classmethod
    def from_gains(cls, gains, omega, prices, **kwargs) -> "GroupEconomics":
        """Build from a ``(G, m)`` nested sequence of :class:`ChannelGains`."""
        tau = np.array([[tau_factor(g) for g in row] for row in gains])
        b = np.array([[b_factor(g) for g in row] for row in gains])
        return cls(np.maximum(tau, b), omega, prices, tau_values=tau, b_values=b, **kwargs)

    @property
    def n_groups(self) -> int:
        return self.y_values.shape[0]

    @property
    def n_mmds(self) -> int:
        return self.y_values.shape[1]

    def with_prices(self, prices) -> "GroupEconomics":
        return replace(self, prices=np.asarray(prices, dtype=float))

    def with_omega(self, omega) -> "GroupEconomics":
        return replace(self, omega=np.asarray(omega, dtype=float))


def omd_utility(c_r: float, c_d: float, price: float, params: CapacityParams | None = None) -> float:
    """Utility of an OMD renting a relay; zero unless relaying beats direct."""
    params = params or CapacityParams()
    if not c_r > c_d:
        return 0.0
    return params.alpha * params.t_ij * max(c_r, c_d) - price


def utilities_for_attached(econ: GroupEconomics, attached: np.ndarray) -> np.ndarray:
    """``(G, m)`` utilities of an OMD of group g on MMD i given loads ``n_i``."""
    n = np.maximum(np.asarray(attached, dtype=float), _N_FLOOR)
    cp = econ.capacity
    if econ.utility_model == "log":
        scale = cp.k_omega * econ.omega / n
        log_b = math.log(econ.log_base)
        c_r = np.log(np.maximum(scale * econ.tau_values, _ARG_FLOOR)) / log_b
        c_d = np.log(np.maximum(scale * econ.b_values, _ARG_FLOOR)) / log_b
    else:
        share = econ.omega / n
        c_r = 0.5 * share * np.log2(econ.tau_values)
        c_d = share * np.log2(econ.b_values)
    relay = c_r > c_d
    u = cp.alpha * cp.t_ij * np.maximum(c_r, c_d) - econ.prices
    return np.where(relay, u, 0.0)


def group_utilities(state: PopulationState, econ: GroupEconomics) -> np.ndarray:
    return utilities_for_attached(econ, state.attached)


def mean_utilities(fractions: np.ndarray, utilities: np.ndarray) -> np.ndarray:
    """Population-weighted mean utility per group."""
    return np.sum(fractions * utilities, axis=1)


def replicator_field(state: PopulationState, econ: GroupEconomics, delta: float = 1.0) -> np.ndarray:
    """Undelayed right-hand side ``delta * pi * (u - u_bar)``."""
    u = group_utilities(state, econ)
    ubar = mean_utilities(state.fractions, u)
    return delta * state.fractions * (u - ubar[:, None])


def _project(fractions: np.ndarray, previous: np.ndarray) -> np.ndarray:
    """Clip to ``[0, 1]`` and renormalise each group.

    With a delayed payoff the stale group mean need not balance the current
    fractions, so an oversized step can clip a whole group to zero; such a
    group keeps its previous vector.
    """
    f = np.clip(fractions, 0.0, 1.0)
    s = f.sum(axis=1, keepdims=True)
    dead = s[:, 0] <= 0.0
    if np.any(dead):
        f[dead] = previous[dead]
        s[dead] = 1.0
    return f / s


def replicator_step(state: PopulationState, history, params: EvoParams) -> PopulationState:
    """One explicit Euler step of the delayed replicator dynamics.

    ``history`` is a sequence of ``(u, u_bar)`` pairs ordered oldest first;
    the last entry belongs to the current time, so the delayed payoff is
    ``history[-1 - tau]``.
    """
    if len(history) < params.tau + 1:
        raise ValueError(f"history holds {len(history)} entries, needs tau + 1 = {params.tau + 1}")
    u, ubar = history[-1 - params.tau]
    excess = np.asarray(u) - np.asarray(ubar)[:, None]
    new = state.fractions + params.dt * params.delta * state.fractions * excess
    return PopulationState(_project(new, state.fractions), state.group_sizes)


@dataclass
class EvolutionResult:
    state: PopulationState
    steps: int
    converged: bool
    trajectory: np.ndarray | None = None  # (k, G, m) snapshots


def evolve(state: PopulationState, econ: GroupEconomics, params: EvoParams | None = None,
           tol: float = 1e-8, max_steps: int = 10**6, record_every: int = 0) -> EvolutionResult:
    """Integrate the delayed replicator dynamics until ``max |pi_dot| < tol``.

    The delay buffer is seeded by replaying the initial state.
    """
    params = params or EvoParams()
    buf = deque(maxlen=params.tau + 1)
    u = group_utilities(state, econ)
    first = (u, mean_utilities(state.fractions, u))
    for _ in range(params.tau + 1):
        buf.append(first)
    snaps = [state.fractions.copy()] if record_every else []
    converged = False
    step = 0
    while step < max_steps:
        new = replicator_step(state, buf, params)
        rate = np.max(np.abs(new.fractions - state.fractions)) / params.dt
        state = new
        step += 1
        u = group_utilities(state, econ)
        buf.append((u, mean_utilities(state.fractions, u)))
        if record_every and step % record_every == 0:
            snaps.append(state.fractions.copy())
        if rate < tol:
            converged = True
            break
    traj = np.array(snaps) if record_every else None
    return EvolutionResult(state, step, converged, traj)


def equilibrium_share_quadratic(a: float, b: float, d: float, omega1: float, omega2: float,
                                n: float) -> float:
    """Number of OMDs on MMD 1 where ``omega1*a/X - p1 = omega2*b/(n-X) - p2``.

    ``d`` is the price difference ``p1 - p2``. Returns the root of
    ``d X^2 - (omega1 a + omega2 b + n d) X + omega1 a n = 0`` in ``(0, n)``.
    """
    if n < 1 or omega1 <= 0 or omega2 <= 0 or a <= 0 or b <= 0:
        raise ValueError("need n >= 1, omega > 0, a, b > 0")
    wa, wb = omega1 * a, omega2 * b
    if d == 0:
        root = wa * n / (wa + wb)
        roots = [root]
    else:
        lin = -(wa + wb + n * d)
        disc = lin * lin - 4.0 * d * wa * n
        if disc < 0:
            raise ValueError("no real root")
        sq = math.sqrt(disc)
        # cancellation-free pair of roots
        qv = -0.5 * (lin + math.copysign(sq, lin))
        roots = [qv / d, wa * n / qv] if qv != 0 else [-lin / (2 * d)]
    inside = [r for r in roots if 0.0 < r < n]
    if not inside:
        raise ValueError("no root of the equilibrium quadratic lies in (0, n)")
    return inside[0]


def equilibrium_share_closed(p1: float, p2: float, omega1: float, omega2: float,
                             y1: float, y2: float, n: float, base: float = 2.0) -> float:
    """Closed-form count on MMD 1 at the evolutionary equilibrium of the log utilities."""
    w1, w2 = omega1 * y1, omega2 * y2
    return n * w1 / (w1 + base ** (p1 - p2) * w2)


def fractions_for_share(n1: float, group_sizes) -> np.ndarray:
    """Spread a count on MMD 1 uniformly over groups (two-MMD case)."""
    sizes = np.asarray(group_sizes, dtype=float)
    f1 = n1 / sizes.sum()
    return np.column_stack([np.full(sizes.shape, f1), np.full(sizes.shape, 1.0 - f1)])


def largest_remainder(fractions, total: int) -> np.ndarray:
    """Integer counts summing exactly to ``total`` that best match ``fractions * total``."""
    quota = np.asarray(fractions, dtype=float) * total
    counts = np.floor(quota).astype(int)
    short = int(total - counts.sum())
    if short > 0:
        order = np.argsort(-(quota - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


@dataclass
class JacobianResult:
    matrix: np.ndarray
    eigenvalues: np.ndarray
    classification: str  # "stable", "unstable", "marginal" or "boundary"


def jacobian_eigenvalues(j: np.ndarray) -> np.ndarray:
    """Closed-form eigenvalues of a 2x2 matrix, ``(tr +/- sqrt(disc)) / 2``."""
    disc = complex(4.0 * j[0, 1] * j[1, 0] + (j[0, 0] - j[1, 1]) ** 2)
    root = disc**0.5
    tr = j[0, 0] + j[1, 1]
    return np.array([(tr + root) / 2.0, (tr - root) / 2.0])


def evo_jacobian(state: PopulationState, econ: GroupEconomics, delta: float = 1.0,
                 h: float = 1e-6) -> JacobianResult:
    """Jacobian of the two-group, two-MMD replicator field w.r.t. ``pi_1^g``."""
    if econ.n_groups != 2 or econ.n_mmds != 2:
        raise ValueError("evo_jacobian is defined for two groups and two MMDs")
    pi1 = state.fractions[:, 0].copy()

    def field_at(p):
        fr = np.column_stack([p, 1.0 - p])
        u = utilities_for_attached(econ, state.group_sizes @ fr)
        ubar = mean_utilities(fr, u)
        return delta * p * (u[:, 0] - ubar)

    jac = np.empty((2, 2))
    for col in range(2):
        e = np.zeros(2)
        e[col] = h
        jac[:, col] = (field_at(pi1 + e) - field_at(pi1 - e)) / (2.0 * h)
    eig = jacobian_eigenvalues(jac)
    if np.any(pi1 <= 0.0) or np.any(pi1 >= 1.0):
        label = "boundary"
    elif np.all(eig.real < 0):
        label = "stable"
    elif np.any(eig.real > 0):
        label = "unstable"
    else:
        label = "marginal"
    return JacobianResult(jac, eig, label)


