"""Closed-form evaluators for the Gaussian tail, the main tail-ratio bound,
Berry-Esseen terms and the Bernstein-type exponential inequality.

All anonymous theorem constants are explicit parameters defaulting to 1, so
experiments report measured implied constants instead of guessing."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc
from scipy.stats import binom, norm


def gaussian_tail(x: float) -> float:
    """1 - Phi(x) via erfc, accurate in the far tail."""
    return 0.5 * erfc(x / math.sqrt(2.0))


def gaussian_sandwich(x: float) -> tuple[float, float]:
    """Elementary two-sided bound: e^{-x^2/2}/(sqrt(2 pi)(1+x)) below,
    e^{-x^2/2}/(sqrt(pi)(1+x)) above."""
    if x < 0.0:
        raise ValueError("sandwich requires x >= 0")
    core = math.exp(-0.5 * x * x) / (1.0 + x)
    return core / math.sqrt(2.0 * math.pi), core / math.sqrt(math.pi)


@dataclass(frozen=True)
class BoundParams:
    rho: float
    eps_n: float
    delta_n: float
    c: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.rho <= 1.0):
            raise ValueError("rho must lie in (0, 1]")
        if self.eps_n < 0.0 or self.delta_n < 0.0 or self.c <= 0.0:
            raise ValueError("need eps_n, delta_n >= 0 and c > 0")

    @property
    def regime(self) -> str:
        return "rho_eq_1" if self.rho == 1.0 else "rho_lt_1"

    @property
    def eps_tilde(self) -> float:
        """eps^rho for rho < 1; eps |ln eps| for rho = 1 (eps clamped to
        (0, 1/2], the range the moment condition lives on)."""
        if self.eps_n == 0.0:
            return 0.0
        if self.rho < 1.0:
            return self.eps_n ** self.rho
        e = min(self.eps_n, 0.5)
        return e * abs(math.log(e))


def thm21_rhs(x: float, params: BoundParams) -> float:
    """c * (x^{2+rho} eps^rho + x^2 delta^2 + (1+x)(eps_tilde + delta))."""
    if x < 0.0:
        raise ValueError("x must be >= 0")
    eps, delta = params.eps_n, params.delta_n
    return params.c * (x ** (2.0 + params.rho) * eps ** params.rho
                       + x * x * delta * delta
                       + (1.0 + x) * (params.eps_tilde + delta))


def ratio_envelope(x: float, params: BoundParams) -> tuple[float, float]:
    """Multiplicative envelope exp(-rhs), exp(+rhs) for p/(1 - Phi(x))."""
    rhs = thm21_rhs(x, params)
    return math.exp(-rhs), math.exp(rhs)


def berry_esseen_term(params: BoundParams) -> float:
    """CLT rate: c (eps^rho + delta) for rho < 1, c (eps|ln eps| + delta)
    at rho = 1."""
    if params.rho < 1.0:
        core = params.eps_n ** params.rho
    else:
        core = params.eps_tilde
    return params.c * (core + params.delta_n)


def bernstein_tail_bound(x: float, n: int, M: float, L: float) -> float:
    """2 exp{-x^2 / (2 (1 + M/n + x L / (3 sqrt(n))))}."""
    if x < 0.0 or n < 1 or M < 0.0 or L <= 0.0:
        raise ValueError("need x >= 0, n >= 1, M >= 0, L > 0")
    denom = 2.0 * (1.0 + M / n + x * L / (3.0 * math.sqrt(n)))
    return 2.0 * math.exp(-x * x / denom)


# elementary inequalities used in the drift/cumulant proofs; exposed so the
# verification suite can sweep them

def taylor_remainder1(x: float) -> float:
    """x (e^x - 1 - x), evaluated stably near 0."""
    if abs(x) < 1e-4:
        # series: x(x^2/2 + x^3/6 + x^4/24)
        return x * (x * x / 2.0 + x ** 3 / 6.0 + x ** 4 / 24.0)
    return x * (math.expm1(x) - x)


def taylor_remainder2(x: float) -> float:
    """e^x - 1 - x - x^2/2, evaluated stably near 0."""
    if abs(x) < 1e-4:
        return x ** 3 / 6.0 + x ** 4 / 24.0 + x ** 5 / 120.0
    return math.expm1(x) - x - 0.5 * x * x


def rademacher_sup_distance(n: int) -> float:
    """sup_x |F_n(x) - Phi(x)| for the standardized simple random walk,
    computed exactly from the binomial CDF.

    F_n is a step function on the lattice (2k - n)/sqrt(n), so the sup is
    attained at a lattice point, approached from one side or the other."""
    k = np.arange(n + 1)
    lattice = (2.0 * k - n) / math.sqrt(n)
    F = binom.cdf(k, n, 0.5)
    Phi = norm.cdf(lattice)
    left_limits = np.concatenate(([0.0], F[:-1]))
    return float(max(np.abs(F - Phi).max(), np.abs(left_limits - Phi).max()))


def check_remainder_bounds(x: float, rho: float) -> bool:
    """|x(e^x-1-x)| <= 2|x|^{2+rho} e^{x+} and
    |e^x-1-x-x^2/2| <= |x|^{2+rho} e^{x+}."""
    if x == 0.0:
        return True
    envelope = abs(x) ** (2.0 + rho) * math.exp(max(x, 0.0))
    return (abs(taylor_remainder1(x)) <= 2.0 * envelope * (1.0 + 1e-12)
            and abs(taylor_remainder2(x)) <= envelope * (1.0 + 1e-12))
