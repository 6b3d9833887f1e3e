"""Martingale-difference models with exact finite-support conditional laws.

Every model generates a standardized martingale X_n = sum_i eta_i / sqrt(n)
from unscaled differences eta_i whose conditional law given the history
summary is a finite atom list.  Finite support keeps tilting, moment checks
and certification exact (finite sums, no quadrature).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

ATOL = 1e-12

# geometric grid on which certificates are searched
DEFAULT_GRID = tuple(2.0 ** j for j in range(-6, 11))


class ModelError(ValueError):
    pass


class CertificationError(RuntimeError):
    """Raised when no grid point satisfies the one-sided moment condition.

    Carries the worst offending law and the inequality numbers so the caller
    can see exactly what failed.
    """

    def __init__(self, message, witness_law=None, log_lhs=None, log_rhs=None):
        super().__init__(message)
        self.witness_law = witness_law
        self.log_lhs = log_lhs
        self.log_rhs = log_rhs


@dataclass(frozen=True)
class ConditionalLaw:
    """Finite-support law of one martingale difference: ((value, prob), ...)."""

    atoms: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if len(self.atoms) < 2:
            raise ModelError("need at least 2 atoms")
        values = [v for v, _ in self.atoms]
        probs = [p for _, p in self.atoms]
        if len(set(values)) != len(values):
            raise ModelError("atom values must be distinct")
        if any(not (0.0 < p <= 1.0) for p in probs):
            raise ModelError("atom probs must lie in (0, 1]")
        if abs(math.fsum(probs) - 1.0) > ATOL:
            raise ModelError("atom probs must sum to 1")
        if abs(math.fsum(p * v for v, p in self.atoms)) > ATOL:
            raise ModelError("law must have mean zero (martingale difference)")

    @property
    def values(self) -> np.ndarray:
        return np.array([v for v, _ in self.atoms])

    @property
    def probs(self) -> np.ndarray:
        return np.array([p for _, p in self.atoms])

    def mean(self) -> float:
        return math.fsum(p * v for v, p in self.atoms)

    def second_moment(self) -> float:
        return math.fsum(p * v * v for v, p in self.atoms)

    def raw_moment(self, k: int) -> float:
        return math.fsum(p * v ** k for v, p in self.atoms)

    def abs_moment(self, r: float) -> float:
        return math.fsum(p * abs(v) ** r for v, p in self.atoms)

    def scaled(self, factor: float) -> "ConditionalLaw":
        return ConditionalLaw(tuple((v * factor, p) for v, p in self.atoms))

    def log_sakhanenko_moment(self, rho: float, K: float, two_sided: bool = False) -> float:
        """log E[|v|^{2+rho} e^{K v+}] (or e^{K|v|} for the two-sided variant).

        Computed in log space so deep negative atoms with enormous
        exponential moments do not overflow.
        """
        terms = []
        for v, p in self.atoms:
            if v == 0.0:
                continue
            exponent = K * (abs(v) if two_sided else max(v, 0.0))
            terms.append(math.log(p) + (2.0 + rho) * math.log(abs(v)) + exponent)
        if not terms:
            return -math.inf
        m = max(terms)
        return m + math.log(math.fsum(math.exp(t - m) for t in terms))

    def log_exp_moment_negative_part(self, c: float) -> float:
        """log E[e^{c|v|} 1{v < 0}]."""
        terms = [math.log(p) + c * (-v) for v, p in self.atoms if v < 0.0]
        if not terms:
            return -math.inf
        m = max(terms)
        return m + math.log(math.fsum(math.exp(t - m) for t in terms))


def check_sakhanenko(law: ConditionalLaw, rho: float, K: float, L: float,
                     two_sided: bool = False):
    """Check E[|v|^{2+rho} e^{K v+}] <= L^rho E[v^2] on one law.

    Returns (ok, log_lhs, log_rhs); comparison done in log space.
    """
    log_lhs = law.log_sakhanenko_moment(rho, K, two_sided=two_sided)
    log_rhs = rho * math.log(L) + math.log(law.second_moment())
    return log_lhs <= log_rhs + ATOL, log_lhs, log_rhs


def check_bernstein(law: ConditionalLaw, k: int, H: float) -> bool:
    """Conditional Bernstein condition |E v^k| <= (1/2) k! H^{k-2} E v^2."""
    return abs(law.raw_moment(k)) <= 0.5 * math.factorial(k) * H ** (k - 2) * law.second_moment()


@dataclass(frozen=True)
class Certificate:
    """Verified constants for the one-sided moment and variance conditions."""

    rho: float
    K: float
    L: float
    N: float
    n: int

    @property
    def eps_n(self) -> float:
        return max(self.K, self.L) / math.sqrt(self.n)

    @property
    def delta_n(self) -> float:
        # default convention: delta from the variance constant N
        return self.N / math.sqrt(self.n)

    @property
    def delta_n_from_L(self) -> float:
        # alternative convention printed in some statements of the result
        return self.L / math.sqrt(self.n)

    def to_json(self) -> str:
        return json.dumps({
            "rho": self.rho, "K": self.K, "L": self.L, "N": self.N, "n": self.n,
            "eps_n": self.eps_n, "delta_n": self.delta_n,
            "delta_n_from_L": self.delta_n_from_L,
        })


@dataclass
class Path:
    """One realized trajectory: increments, partial sums and the bracket."""

    increments: np.ndarray      # xi_1..xi_n (scaled)
    partial_sums: np.ndarray    # X_0..X_n
    bracket: np.ndarray         # <X>_0..<X>_n


@dataclass
class TerminalBatch:
    """Vectorized terminal values of many simulated paths."""

    x: np.ndarray           # X_n per path
    log_weight: np.ndarray  # -lam*X_n + Psi_n per path (zeros when lam == 0)


class MartingaleModel:
    """Base class: a pure state machine over history summaries.

    Subclasses define the unscaled conditional law at each summary; the scaled
    increment is eta / sqrt(n).
    """

    name: str
    n: int
    rho: float

    def initial_state(self):
        raise NotImplementedError

    def law_at(self, state) -> ConditionalLaw:
        """Unscaled conditional law of the next difference eta."""
        raise NotImplementedError

    def next_state(self, state, eta: float):
        raise NotImplementedError

    def reachable_laws(self) -> Iterator[ConditionalLaw]:
        raise NotImplementedError

    def variance_deviation(self) -> float:
        """Exact worst case of |sum_i E[eta_i^2 | F_{i-1}] - n| over paths."""
        raise NotImplementedError

    @property
    def iid(self) -> bool:
        return False

    def params(self) -> dict:
        return {}

    def to_spec(self) -> dict:
        return {"name": self.name, "n": self.n, "params": self.params()}

    def scaled_law_at(self, state) -> ConditionalLaw:
        return self.law_at(state).scaled(1.0 / math.sqrt(self.n))

    # -- simulation -------------------------------------------------------

    def simulate_terminal(self, size: int, rng: np.random.Generator,
                          lam: float = 0.0) -> TerminalBatch:
        if not self.iid:
            raise NotImplementedError(f"{self.name}: no vectorized sampler")
        from .tilt import tilt_law  # local import, avoids a cycle
        law = self.scaled_law_at(self.initial_state())
        tl = tilt_law(law, lam)
        values = tl.values
        cum = np.cumsum(tl.probs)
        cum[-1] = 1.0
        x = np.zeros(size)
        for _ in range(self.n):
            idx = np.searchsorted(cum, rng.random(size), side="right")
            x += values[idx]
        psi = self.n * tl.step_log_mgf
        return TerminalBatch(x=x, log_weight=-lam * x + psi)


def sample_path(model: MartingaleModel, rng: np.random.Generator) -> Path:
    """Draw one path increment by increment; bracket accumulated exactly."""
    n = model.n
    scale = 1.0 / math.sqrt(n)
    state = model.initial_state()
    incs = np.empty(n)
    sums = np.zeros(n + 1)
    bracket = np.zeros(n + 1)
    for i in range(n):
        law = model.law_at(state)
        k = rng.choice(len(law.atoms), p=[p for _, p in law.atoms])
        eta = law.atoms[k][0]
        incs[i] = eta * scale
        sums[i + 1] = sums[i] + incs[i]
        bracket[i + 1] = bracket[i] + law.second_moment() / n
        state = model.next_state(state, eta)
    return Path(increments=incs, partial_sums=sums, bracket=bracket)


def certify(model: MartingaleModel, grid=DEFAULT_GRID) -> Certificate:
    """Search the grid for the smallest (K, L) satisfying the one-sided
    moment condition on every reachable law; compute the exact variance
    constant N.

    'Smallest' means lexicographically smallest (max(K, L), L, K), since the
    theorem range constant is max(K, L)/sqrt(n).
    """
    laws = list(model.reachable_laws())
    if not laws:
        raise CertificationError("model has no reachable laws")
    candidates = sorted(
        ((max(K, L), L, K) for K in grid for L in grid))
    worst = None
    for _, L, K in candidates:
        ok_all = True
        for law in laws:
            ok, log_lhs, log_rhs = check_sakhanenko(law, model.rho, K, L)
            if not ok:
                ok_all = False
                if worst is None or (log_lhs - log_rhs) > (worst[1] - worst[2]):
                    worst = (law, log_lhs, log_rhs, K, L)
                break
        if ok_all:
            n2 = model.variance_deviation()
            return Certificate(rho=model.rho, K=K, L=L, N=math.sqrt(n2), n=model.n)
    law, log_lhs, log_rhs, K, L = worst
    raise CertificationError(
        f"no grid point satisfies the moment condition; worst violation at "
        f"K={K}, L={L}: log LHS {log_lhs:.6g} > log RHS {log_rhs:.6g}",
        witness_law=law, log_lhs=log_lhs, log_rhs=log_rhs)


def verify_certificate(model: MartingaleModel, cert: Certificate) -> bool:
    """Re-verify a certificate exactly against the model's reachable laws."""
    for law in model.reachable_laws():
        ok, _, _ = check_sakhanenko(law, cert.rho, cert.K, cert.L)
        if not ok:
            return False
    return model.variance_deviation() <= cert.N ** 2 + ATOL


# ---------------------------------------------------------------------------
# concrete models


class RademacherModel(MartingaleModel):
    """i.i.d. +-1 differences; the canonical exactly-standardized instance."""

    def __init__(self, n: int, rho: float = 1.0):
        if n < 1:
            raise ModelError("horizon n must be >= 1")
        self.name = "rademacher"
        self.n = n
        self.rho = rho
        self._law = ConditionalLaw(((1.0, 0.5), (-1.0, 0.5)))

    def initial_state(self):
        return None

    def law_at(self, state):
        return self._law

    def next_state(self, state, eta):
        return None

    def reachable_laws(self):
        yield self._law

    def variance_deviation(self):
        return 0.0

    @property
    def iid(self):
        return True

    def params(self):
        return {"rho": self.rho}

    def simulate_terminal(self, size, rng, lam=0.0):
        # X_n = (2 S - n)/sqrt(n) with S binomial under the tilted step law
        a = 1.0 / math.sqrt(self.n)
        p_plus = 1.0 / (1.0 + math.exp(-2.0 * lam * a))
        psi = self.n * (math.log(math.cosh(lam * a)) if lam != 0.0 else 0.0)
        s = rng.binomial(self.n, p_plus, size=size)
        x = (2.0 * s - self.n) * a
        return TerminalBatch(x=x, log_weight=-lam * x + psi)


class HeavyLeftModel(MartingaleModel):
    """i.i.d. differences with one positive atom and a heavy negative tail.

    The negative side carries atoms down to -depth whose (2+rho)-moment stays
    small while any two-sided exponential moment is astronomically large, so
    the one-sided moment condition holds where two-sided conditions (Bernstein,
    two-sided Sakhanenko) fail.
    """

    def __init__(self, n: int, rho: float, tail_atoms: int, depth: float = 1e5):
        if n < 1:
            raise ModelError("horizon n must be >= 1")
        if not (0.0 < rho < 1.0):
            raise ModelError("rho must lie in (0, 1)")
        if tail_atoms < 2:
            raise ModelError("need at least 2 negative tail atoms")
        self.name = "heavy_left"
        self.n = n
        self.rho = rho
        self.tail_atoms = tail_atoms
        self.depth = depth
        self._law = _build_heavy_left_law(rho, tail_atoms, depth)

    def initial_state(self):
        return None

    def law_at(self, state):
        return self._law

    def next_state(self, state, eta):
        return None

    def reachable_laws(self):
        yield self._law

    def variance_deviation(self):
        # i.i.d.: |n E eta^2 - n|, nonzero only through float rounding
        return self.n * abs(self._law.second_moment() - 1.0)

    @property
    def iid(self):
        return True

    def params(self):
        return {"rho": self.rho, "tail_atoms": self.tail_atoms, "depth": self.depth}


def _build_heavy_left_law(rho, tail_atoms, depth):
    """Mean-zero unit-variance law: positive atom +a, negatives at -b_j.

    Shape q_j ~ b_j^-(2+rho) makes every negative atom contribute equally to
    E[|v|^{2+rho}], keeping the one-sided moment small; the deepest atom still
    dominates the 6th moment, which breaks the Bernstein condition.
    """
    b = np.array([2.0 * (depth / 2.0) ** (j / (tail_atoms - 1))
                  for j in range(tail_atoms)])
    shape = b ** -(2.0 + rho)
    Q = math.fsum(shape)
    m = math.fsum(shape * b)       # unscaled negative mean magnitude
    v = math.fsum(shape * b * b)   # unscaled negative second moment
    # scale s on the shape and positive atom (a, p) solve:
    #   p = 1 - s Q,   p a = s m  (mean zero),   p a^2 + s v = 1
    A, B, C = m * m - v * Q, v + Q, -1.0
    disc = B * B - 4.0 * A * C
    if disc < 0.0:
        raise ModelError("heavy-left moment matching infeasible")
    if A == 0.0:
        s = -C / B
    else:
        s = (-B + math.sqrt(disc)) / (2.0 * A)
        if not (0.0 < s < 1.0 / Q):
            s = (-B - math.sqrt(disc)) / (2.0 * A)
    if not (0.0 < s < 1.0 / Q):
        raise ModelError("heavy-left moment matching infeasible: no valid "
                         "probability scale")
    p = 1.0 - s * Q
    a = s * m / p
    atoms = [(a, p)] + [(-float(bj), float(s * qj)) for bj, qj in zip(b, shape)]
    return ConditionalLaw(tuple(atoms))


class RegimeSwitchModel(MartingaleModel):
    """Two-point differences whose variance switches with the last sign.

    The step variance prefers (1+gamma)^2 after a positive increment and
    (1-gamma)^2 after a negative one; whenever the preferred choice would push
    the running variance deficit d = k - sum sigma_i^2 outside
    [-B, B] with B = 2*gamma + gamma^2, the opposite variance is used instead.
    This keeps |<X>_n - 1| <= B/n <= N^2/n with N^2 = (1+g)^2 - (1-g)^2.
    """

    def __init__(self, n: int, gamma: float, rho: float = 1.0):
        if n < 1:
            raise ModelError("horizon n must be >= 1")
        if not (0.0 <= gamma < 0.5):
            raise ModelError("gamma must lie in [0, 1/2)")
        self.name = "regime_switch"
        self.n = n
        self.rho = rho
        self.gamma = gamma
        self._hi2 = (1.0 + gamma) ** 2
        self._lo2 = (1.0 - gamma) ** 2
        self._bound = 2.0 * gamma + gamma * gamma

    # state: (step_index (1-based, next increment), last_sign, deficit)
    def initial_state(self):
        return (1, 0, 0.0)

    def _sigma2_at(self, state):
        step, sign, d = state
        if step == 1 or self.gamma == 0.0:
            return 1.0
        pref = self._hi2 if sign > 0 else self._lo2
        if abs(d + 1.0 - pref) <= self._bound + ATOL:
            return pref
        return self._lo2 if pref == self._hi2 else self._hi2

    def law_at(self, state):
        sigma = math.sqrt(self._sigma2_at(state))
        return ConditionalLaw(((sigma, 0.5), (-sigma, 0.5)))

    def next_state(self, state, eta):
        step, _, d = state
        s2 = self._sigma2_at(state)
        return (step + 1, 1 if eta > 0 else -1, d + 1.0 - s2)

    def reachable_laws(self):
        for s2 in sorted({1.0, self._hi2, self._lo2}):
            sigma = math.sqrt(s2)
            yield ConditionalLaw(((sigma, 0.5), (-sigma, 0.5)))

    def variance_deviation(self):
        """Exact worst-case terminal |sum sigma_i^2 - n| by a reachable-set
        recursion over (sign, deficit)."""
        states = {(1, 0, 0.0)}
        for _ in range(self.n):
            nxt = set()
            for st in states:
                step, _, d = st
                s2 = self._sigma2_at(st)
                d2 = round(d + 1.0 - s2, 12)
                nxt.add((step + 1, 1, d2))
                nxt.add((step + 1, -1, d2))
            states = nxt
        return max(abs(d) for _, _, d in states)

    def params(self):
        return {"gamma": self.gamma, "rho": self.rho}

    def simulate_terminal(self, size, rng, lam=0.0):
        scale = 1.0 / math.sqrt(self.n)
        sig2s = np.array([1.0, self._hi2, self._lo2])
        sigmas = np.sqrt(sig2s)
        p_plus = 1.0 / (1.0 + np.exp(-2.0 * lam * sigmas * scale))
        log_mgf = np.log(np.cosh(lam * sigmas * scale)) if lam != 0.0 else np.zeros(3)

        x = np.zeros(size)
        psi = np.zeros(size)
        # step 1: sigma = 1
        up = rng.random(size) < p_plus[0]
        sign = np.where(up, 1.0, -1.0)
        x += sign * sigmas[0] * scale
        psi += log_mgf[0]
        d = np.full(size, 1.0 - sig2s[0])
        for _ in range(1, self.n):
            pref = np.where(sign > 0, self._hi2, self._lo2)
            ok = np.abs(d + 1.0 - pref) <= self._bound + ATOL
            s2 = np.where(ok, pref, self._hi2 + self._lo2 - pref)
            d = d + 1.0 - s2
            hi = s2 == self._hi2
            up = rng.random(size) < np.where(hi, p_plus[1], p_plus[2])
            sign = np.where(up, 1.0, -1.0)
            x += sign * np.where(hi, sigmas[1], sigmas[2]) * scale
            psi += np.where(hi, log_mgf[1], log_mgf[2])
        return TerminalBatch(x=x, log_weight=-lam * x + psi)


# ---------------------------------------------------------------------------
# factories and serialization


def make_rademacher(n: int, rho: float = 1.0) -> RademacherModel:
    return RademacherModel(n, rho=rho)


def make_heavy_left(n: int, rho: float, tail_atoms: int,
                    depth: float = 1e5) -> HeavyLeftModel:
    return HeavyLeftModel(n, rho, tail_atoms, depth=depth)


def make_regime_switch(n: int, gamma: float, rho: float = 1.0) -> RegimeSwitchModel:
    return RegimeSwitchModel(n, gamma, rho=rho)


_FACTORIES = {
    "rademacher": make_rademacher,
    "heavy_left": make_heavy_left,
    "regime_switch": make_regime_switch,
}


def model_from_spec(doc: dict | str) -> MartingaleModel:
    if isinstance(doc, str):
        doc = json.loads(doc)
    try:
        factory = _FACTORIES[doc["name"]]
    except KeyError as e:
        raise ModelError(f"unknown model {doc.get('name')!r}") from e
    return factory(doc["n"], **doc.get("params", {}))
