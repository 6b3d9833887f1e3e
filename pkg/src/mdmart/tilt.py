"""Conjugate-measure (exponential tilt) machinery and saddle-point solvers.

The tilted law reweights atoms by e^{lam*v}; accumulating the per-step log
mgf gives the cumulant process Psi_n(lam) and the exact importance weight
exp(-lam*X_n + Psi_n(lam)) that converts tilted expectations back to the
original measure.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from .models import ConditionalLaw, MartingaleModel, Path, sample_path

RESIDUAL_TOL = 1e-12


class SaddleError(RuntimeError):
    pass


@dataclass(frozen=True)
class TiltedLaw:
    base: ConditionalLaw
    lam: float
    atoms: tuple[tuple[float, float], ...]
    step_log_mgf: float

    @property
    def values(self) -> np.ndarray:
        return np.array([v for v, _ in self.atoms])

    @property
    def probs(self) -> np.ndarray:
        return np.array([p for _, p in self.atoms])

    def mean(self) -> float:
        return math.fsum(p * v for v, p in self.atoms)


@lru_cache(maxsize=4096)
def tilt_law(law: ConditionalLaw, lam: float) -> TiltedLaw:
    """Conjugate law: probs proportional to p * e^{lam*v}, exact renormalization."""
    if not (lam >= 0.0 and math.isfinite(lam)):
        raise ValueError("lambda must be finite and >= 0")
    if lam == 0.0:
        return TiltedLaw(base=law, lam=0.0, atoms=law.atoms, step_log_mgf=0.0)
    # stabilize: factor out the max exponent before normalizing
    shift = max(lam * v for v, _ in law.atoms)
    raw = [(v, p * math.exp(lam * v - shift)) for v, p in law.atoms]
    z = math.fsum(w for _, w in raw)
    atoms = tuple((v, w / z) for v, w in raw)
    return TiltedLaw(base=law, lam=lam, atoms=atoms,
                     step_log_mgf=math.log(z) + shift)


def drift_step(law: ConditionalLaw, lam: float) -> float:
    """b(lam) = E[v e^{lam v}] / E[e^{lam v}], the tilted conditional mean."""
    return tilt_law(law, lam).mean()


@dataclass
class TiltedPath:
    path: Path
    lam: float
    psi_n: float
    b_steps: list
    log_weight: float


def sample_tilted_path(model: MartingaleModel, lam: float,
                       rng: np.random.Generator) -> TiltedPath:
    """Draw one path under P_lam, accumulating Psi_n and the drift steps."""
    n = model.n
    scale = 1.0 / math.sqrt(n)
    state = model.initial_state()
    incs = np.empty(n)
    sums = np.zeros(n + 1)
    bracket = np.zeros(n + 1)
    psi = 0.0
    b_steps = []
    for i in range(n):
        law = model.law_at(state).scaled(scale)
        tl = tilt_law(law, lam)
        k = rng.choice(len(tl.atoms), p=[p for _, p in tl.atoms])
        xi = tl.atoms[k][0]
        incs[i] = xi
        sums[i + 1] = sums[i] + xi
        bracket[i + 1] = bracket[i] + law.second_moment()
        psi += tl.step_log_mgf
        b_steps.append(tl.mean())
        state = model.next_state(state, xi * math.sqrt(n))
    path = Path(increments=incs, partial_sums=sums, bracket=bracket)
    return TiltedPath(path=path, lam=lam, psi_n=psi, b_steps=b_steps,
                      log_weight=-lam * sums[n] + psi)


@dataclass
class SaddleSolution:
    x: float
    lam: float
    equation_residual: float
    c_const: float
    kind: str  # "upper" or "lower"

    def to_dict(self) -> dict:
        return {"x": self.x, "lambda": self.lam,
                "equation_residual": self.equation_residual,
                "c": self.c_const, "kind": self.kind}


def solve_saddle_upper(x: float, rho: float, eps: float, delta: float,
                       c: float = 6.0) -> SaddleSolution:
    """Positive root of lam + lam*delta^2 + c*lam^{1+rho}*eps^rho = x."""
    if x < 0.0 or eps < 0.0 or delta < 0.0 or c <= 0.0:
        raise ValueError("need x, eps, delta >= 0 and c > 0")

    def g(lam):
        return lam * (1.0 + delta * delta) + c * lam ** (1.0 + rho) * eps ** rho - x

    if x == 0.0 or (eps == 0.0 and delta == 0.0):
        lam = x / (1.0 + delta * delta) if delta else x
        return SaddleSolution(x=x, lam=lam, equation_residual=abs(g(lam)),
                              c_const=c, kind="upper")
    # g is increasing, g(0) = -x < 0 and g(x) >= 0: root in (0, x]
    lam = brentq(g, 0.0, x, xtol=1e-300, rtol=8.9e-16, maxiter=200)
    lam = _newton_polish(g, lam, x, rho, eps, delta, c, upper=True)
    res = abs(g(lam))
    if res >= RESIDUAL_TOL * (1.0 + x):
        raise SaddleError(f"upper saddle residual {res:.3g} too large")
    return SaddleSolution(x=x, lam=lam, equation_residual=res, c_const=c,
                          kind="upper")


def solve_saddle_lower(x: float, rho: float, eps: float, delta: float,
                       c: float = 6.0) -> SaddleSolution:
    """Smallest positive root of lam - lam*delta^2 - c*lam^{1+rho}*eps^rho = x.

    The left side increases up to a stationary point and decreases after it,
    so a root exists iff the peak value reaches x; past the peak monotonicity
    is lost and we refuse to extrapolate.
    """
    if x < 0.0 or eps < 0.0 or delta < 0.0 or c <= 0.0:
        raise ValueError("need x, eps, delta >= 0 and c > 0")
    d2 = delta * delta
    if d2 >= 1.0 and x > 0.0:
        raise SaddleError("no positive root: delta^2 >= 1")

    def g(lam):
        return lam * (1.0 - d2) - c * lam ** (1.0 + rho) * eps ** rho - x

    if x == 0.0:
        return SaddleSolution(x=x, lam=0.0, equation_residual=0.0, c_const=c,
                              kind="lower")
    if eps == 0.0:
        lam = x / (1.0 - d2)
        return SaddleSolution(x=x, lam=lam, equation_residual=abs(g(lam)),
                              c_const=c, kind="lower")
    lam_peak = ((1.0 - d2) / (c * (1.0 + rho) * eps ** rho)) ** (1.0 / rho)
    if g(lam_peak) < 0.0:
        raise SaddleError(
            f"no positive root: x={x:.6g} exceeds the equation's maximum "
            f"{g(lam_peak) + x:.6g} at lambda={lam_peak:.6g}")
    lam = brentq(g, 0.0, lam_peak, xtol=1e-300, rtol=8.9e-16, maxiter=200)
    lam = _newton_polish(g, lam, x, rho, eps, delta, c, upper=False)
    res = abs(g(lam))
    if res >= RESIDUAL_TOL * (1.0 + x):
        raise SaddleError(f"lower saddle residual {res:.3g} too large")
    return SaddleSolution(x=x, lam=lam, equation_residual=res, c_const=c,
                          kind="lower")


def _newton_polish(g, lam, x, rho, eps, delta, c, upper, steps=3):
    sign = 1.0 if upper else -1.0
    d2 = delta * delta
    for _ in range(steps):
        dg = (1.0 + sign * d2) + sign * c * (1.0 + rho) * lam ** rho * eps ** rho
        if dg == 0.0:
            break
        step = g(lam) / dg
        nxt = lam - step
        if nxt <= 0.0 or not math.isfinite(nxt):
            break
        lam = nxt
    return lam


@dataclass
class TiltSelection:
    lam: float
    method: str  # "root" or "fallback"
    converged: bool


def choose_tilt(model: MartingaleModel, x: float) -> TiltSelection:
    """Pick lam so the tilted mean of X_n hits x; fallback lam = x flagged.

    For i.i.d. models the total drift is n * b(scaled law, lam), a strictly
    increasing function of lam bounded by sqrt(n) * max atom, so a bracketed
    root either exists or x sits outside the attainable range.
    """
    if x < 0.0:
        raise ValueError("x must be >= 0")
    if x == 0.0:
        return TiltSelection(lam=0.0, method="root", converged=True)
    if not model.iid:
        return TiltSelection(lam=x, method="fallback", converged=False)
    law = model.scaled_law_at(model.initial_state())
    sup_drift = model.n * max(v for v, _ in law.atoms)
    if x >= sup_drift * (1.0 - 1e-12):
        return TiltSelection(lam=x, method="fallback", converged=False)

    def g(lam):
        return model.n * drift_step(law, lam) - x

    hi = max(x, 1.0)
    while g(hi) < 0.0:
        hi *= 2.0
        if hi > 1e12:
            return TiltSelection(lam=x, method="fallback", converged=False)
    lam = brentq(g, 0.0, hi, xtol=1e-300, rtol=8.9e-16, maxiter=200)
    if abs(g(lam)) > 1e-8:
        return TiltSelection(lam=x, method="fallback", converged=False)
    return TiltSelection(lam=float(lam), method="root", converged=True)
