"""Price and bandwidth competition among relaying MMDs (the leaders).

The closed forms cover the two-MMD game in which OMDs sit at the
equilibrium of the log-utility evolutionary game, so MMD ``i`` attracts
``n * w_i / (w_i + base**(p_i - p_j) * w_j)`` OMDs with ``w = omega * Y``.
With ``base = e`` the price best response has the explicit Lambert-W form
``1 + W(rho * exp(p_j - 1))``; for a general base it is
``(1 + W(rho * exp(ln(base) * p_j - 1))) / ln(base)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lambertw import lambert_w, lambert_w_derivative, lambert_w_iter
from .omd_game import equilibrium_share_closed

BANDWIDTH_CAP = 50.0
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class ConvergenceError(RuntimeError):
    """An iterative solver exhausted its budget."""


@dataclass
class MmdParams:
    omega: float
    cost: float = 0.0
    price: float = 1.0
    omega_cap: float = BANDWIDTH_CAP

    def __post_init__(self):
        if not 0 <= self.omega <= self.omega_cap:
            raise ValueError("0 <= omega <= omega_cap violated")
        if self.cost < 0:
            raise ValueError("cost >= 0 violated")
        if self.price < 0:
            raise ValueError("price >= 0 violated")


@dataclass(frozen=True)
class BestResponseResult:
    price_star: float
    w_argument: float
    iterations: int


def mmd_utility(price: float, attached: float, cost: float, omega: float) -> float:
    return price * attached - cost * omega


def mmd_utility_closed(p_i, p_j, omega_i, omega_j, y_i, y_j, n, cost_i, base: float = 2.0) -> float:
    """MMD utility with the followers at their evolutionary equilibrium."""
    share = equilibrium_share_closed(p_i, p_j, omega_i, omega_j, y_i, y_j, n, base=base)
    return p_i * share - cost_i * omega_i


def best_response_price(p_other, omega_self, omega_other, y_self, y_other,
                        base: float = math.e) -> BestResponseResult:
    """Revenue-maximising price against a fixed rival price."""
    rho = (omega_self * y_self) / (omega_other * y_other)
    lb = math.log(base)
    z = rho * math.exp(lb * p_other - 1.0)
    w, it = lambert_w_iter(z)
    return BestResponseResult((1.0 + w) / lb, z, it)


def price_foc_residual(p_i, p_j, omega_i, omega_j, y_i, y_j, base: float = 2.0) -> float:
    """Stationarity residual ``p_i - (1 + rho * base**(p_j - p_i)) / ln(base)``.

    Zero exactly at the best response for the given exponential base.
    """
    rho = (omega_i * y_i) / (omega_j * y_j)
    lb = math.log(base)
    return p_i - (1.0 + rho * base ** (p_j - p_i)) / lb


def price_foc_residual_printed(p_i, p_j, omega_i, omega_j, y_i, y_j) -> float:
    """Residual of the base-2 stationarity condition in its commonly quoted form
    ``p = 1/ln 2 + rho * 2**(p_j - p_i)``; kept as a diagnostic only."""
    rho = (omega_i * y_i) / (omega_j * y_j)
    return p_i - (1.0 / math.log(2.0) + rho * 2.0 ** (p_j - p_i))


@dataclass
class NashResult:
    prices: tuple[float, float]
    iterations: int
    residuals: tuple[float, float]


def nash_prices(omegas, ys, tol: float = 1e-9, start=(1.0, 1.0), max_iter: int = 10_000,
                base: float = math.e) -> NashResult:
    """Fixed point of the two best-response maps by alternating iteration."""
    if tol <= 0:
        raise ValueError("tol > 0 required")
    (w1, w2), (y1, y2) = omegas, ys
    p1, p2 = float(start[0]), float(start[1])
    for it in range(1, max_iter + 1):
        n1 = best_response_price(p2, w1, w2, y1, y2, base).price_star
        n2 = best_response_price(n1, w2, w1, y2, y1, base).price_star
        change = max(abs(n1 - p1), abs(n2 - p2))
        p1, p2 = n1, n2
        if change < tol:
            r1 = abs(p1 - best_response_price(p2, w1, w2, y1, y2, base).price_star)
            r2 = abs(p2 - best_response_price(p1, w2, w1, y2, y1, base).price_star)
            return NashResult((p1, p2), it, (r1, r2))
    raise ConvergenceError(f"nash_prices: no convergence within {max_iter} iterations")


@dataclass
class SupermodularityReport:
    ok: bool
    min_slope: float
    max_slope: float
    max_lambda: float
    slopes: np.ndarray  # (2, n1, n2): dB_1/dp_2 and dB_2/dp_1


def best_response_slope(p_other, omega_self, omega_other, y_self, y_other,
                        with_ratio: bool = True, form: str = "printed"):
    """Slope diagnostic for the e-base best response.

    ``form="printed"`` evaluates ``W(z) / (z (1 + W(z)))``; ``form="exact"``
    evaluates the derivative of ``1 + W(rho e^(p-1))`` in ``p``, which is
    ``W(z) / (1 + W(z))``. ``with_ratio=False`` drops ``rho`` from ``z``.
    """
    rho = (omega_self * y_self) / (omega_other * y_other) if with_ratio else 1.0
    z = rho * np.exp(np.asarray(p_other, dtype=float) - 1.0)
    if form == "printed":
        return lambert_w_derivative(z)
    if form == "exact":
        w = lambert_w(z)
        return w / (1.0 + w)
    raise ValueError(f"unknown form {form!r}")


def supermodularity_check(p1_grid, p2_grid, omegas, ys, with_ratio: bool = True,
                          form: str = "printed") -> SupermodularityReport:
    """Check best-response slopes lie in (0, 1) on a price grid and the
    contraction modulus ``sqrt(B1' * B2')`` stays below 1."""
    (w1, w2), (y1, y2) = omegas, ys
    g1, g2 = np.meshgrid(np.asarray(p1_grid, float), np.asarray(p2_grid, float), indexing="ij")
    s1 = best_response_slope(g2, w1, w2, y1, y2, with_ratio, form)  # dB_1/dp_2
    s2 = best_response_slope(g1, w2, w1, y2, y1, with_ratio, form)  # dB_2/dp_1
    lam = np.sqrt(s1 * s2)
    slopes = np.stack([s1, s2])
    ok = bool(np.all((slopes > 0) & (slopes < 1)) and np.all(lam < 1))
    return SupermodularityReport(ok, float(slopes.min()), float(slopes.max()),
                                 float(lam.max()), slopes)


def golden_section_max(f, lo: float, hi: float, tol: float = 1e-6, max_iter: int = 500) -> float:
    """Maximiser of a unimodal ``f`` on ``[lo, hi]``; flat functions return ``lo``."""
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    best = max((x, f(x)), (lo, f(lo)), (hi, f(hi)), key=lambda t: t[1])
    if abs(best[1] - f(lo)) <= 1e-15 * max(1.0, abs(best[1])):
        return lo
    return best[0]


def _closed_utility_of_omega(omega_self, price_self, price_other, omega_other, y_self, y_other,
                             n, cost, base):
    w_s = omega_self * y_self
    w_o = omega_other * y_other
    share = n * w_s / (w_s + base ** (price_self - price_other) * w_o) if w_s > 0 else 0.0
    return price_self * share - cost * omega_self


def best_response_bandwidth(prices, omega_other, y_self, y_other, n, cost,
                            omega_cap: float = BANDWIDTH_CAP, tol: float = 1e-6,
                            base: float = math.e) -> float:
    """Utility-maximising offered bandwidth with prices held fixed.

    ``prices`` is ``(own_price, rival_price)``.
    """
    if cost < 0:
        raise ValueError("cost >= 0 required")
    p_self, p_other = prices

    def f(w):
        return _closed_utility_of_omega(w, p_self, p_other, omega_other, y_self, y_other, n, cost, base)

    return golden_section_max(f, 0.0, omega_cap, tol)


@dataclass
class BandwidthEquilibrium:
    omegas: tuple[float, float]
    iterations: int


def bandwidth_equilibrium(prices, ys, n, costs, start=(25.0, 25.0), omega_cap: float = BANDWIDTH_CAP,
                          tol: float = 1e-5, max_iter: int = 1000,
                          base: float = math.e) -> BandwidthEquilibrium:
    """Mutual bandwidth best responses at fixed prices (alternating iteration).

    Each best response is located to ~1e-7 by golden section; utilities are
    flat near the optimum, so ``tol`` much below 1e-6 is not reachable.
    """
    (p1, p2), (y1, y2), (c1, c2) = prices, ys, costs
    w1, w2 = float(start[0]), float(start[1])
    for it in range(1, max_iter + 1):
        n1 = best_response_bandwidth((p1, p2), w2, y1, y2, n, c1, omega_cap, 1e-9, base)
        n2 = best_response_bandwidth((p2, p1), n1, y2, y1, n, c2, omega_cap, 1e-9, base)
        change = max(abs(n1 - w1), abs(n2 - w2))
        w1, w2 = n1, n2
        if change < tol:
            return BandwidthEquilibrium((w1, w2), it)
    raise ConvergenceError(f"bandwidth_equilibrium: no convergence within {max_iter} iterations")


def bandwidth_foc_residual(omega_i, omega_j, p_i, p_j, y_i, y_j, n, cost_i, base: float = math.e) -> float:
    """``dU_i/d omega_i`` of the closed-form utility (zero at an interior optimum)."""
    w_i, w_j = omega_i * y_i, omega_j * y_j
    k = base ** (p_i - p_j)
    return p_i * n * y_i * k * w_j / (w_i + k * w_j) ** 2 - cost_i
