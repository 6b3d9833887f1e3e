"""Finite-state Markov chains with exactly computable mixing coefficients,
interlaced block sums, Berbee-style coupling and the associated tail-ratio
experiment.

beta(n) and the dominating psi coefficient come from matrix powers, so every
mixing bound used downstream is exact rather than estimated.  The true
psi-mixing coefficient involves a sup over infinite-future events; for a
finite chain the ratio coefficient psi_bar(n) = max_ij |P^n(i,j)/pi(j) - 1|
dominates it, and all bounds are upper bounds, so substituting psi_bar keeps
every check conservative."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .bounds import BoundParams, gaussian_tail, ratio_envelope
from .montecarlo import RatioReport, RatioRow, clopper_pearson

# block-sum paths are long, so chunks are larger here than in the generic
# engine; the chunk size is a fixed constant, so determinism is unaffected
MIX_CHUNK = 65536


class ChainError(ValueError):
    pass


def stationary_dist(P: np.ndarray) -> np.ndarray:
    """Solve pi P = pi, sum pi = 1 by least squares; rejects reducible or
    periodic chains (the experiments all need a primitive matrix)."""
    P = np.asarray(P, dtype=float)
    S = P.shape[0]
    if P.shape != (S, S):
        raise ChainError("P must be square")
    if np.any(P < -1e-15) or np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-12):
        raise ChainError("P must be row-stochastic")
    if not _is_primitive(P):
        raise ChainError("chain must be irreducible and aperiodic")
    A = np.vstack((P.T - np.eye(S), np.ones((1, S))))
    b = np.zeros(S + 1)
    b[-1] = 1.0
    pi = np.linalg.lstsq(A, b, rcond=None)[0]
    if np.max(np.abs(pi @ P - pi)) > 1e-12:
        raise ChainError("stationary solve residual too large")
    return pi


def _is_primitive(P: np.ndarray) -> bool:
    # Wielandt: a primitive S-state matrix has a strictly positive power by
    # exponent S^2 - 2S + 2
    S = P.shape[0]
    M = (P > 0.0).astype(float)
    power = np.eye(S)
    for _ in range(S * S - 2 * S + 2):
        power = np.minimum(power @ M, 1.0)
    return bool(np.all(power > 0.0))


@dataclass
class MarkovChainSpec:
    states: list
    P: np.ndarray
    f: np.ndarray       # observable per state, centered under pi
    name: str = "chain"

    def __post_init__(self):
        self.P = np.asarray(self.P, dtype=float)
        self.f = np.asarray(self.f, dtype=float)
        self.pi = stationary_dist(self.P)
        if len(self.states) != self.P.shape[0] or self.f.size != self.P.shape[0]:
            raise ChainError("states, P and f sizes disagree")
        if abs(float(self.pi @ self.f)) > 1e-12:
            raise ChainError("observable must be centered under pi")

    @property
    def c3(self) -> float:
        """Upper bound on the observable (one-sided boundedness hypothesis)."""
        return float(self.f.max())

    def to_json(self) -> str:
        return json.dumps({"name": self.name, "states": list(self.states),
                           "P": [float(v) for v in self.P.ravel()],
                           "f": [float(v) for v in self.f]})

    @classmethod
    def from_json(cls, doc) -> "MarkovChainSpec":
        if isinstance(doc, str):
            doc = json.loads(doc)
        S = len(doc["states"])
        P = np.array(doc["P"], dtype=float).reshape(S, S)
        return cls(states=doc["states"], P=P,
                   f=np.array(doc["f"], dtype=float), name=doc.get("name", "chain"))


def two_state_chain(a: float, b: float, name: str = "two_state") -> MarkovChainSpec:
    """Two-state chain [[1-a, a], [b, 1-b]] with a centered unit-variance
    observable."""
    if not (0.0 < a < 1.0 and 0.0 < b < 1.0):
        raise ChainError("need a, b in (0, 1)")
    P = np.array([[1.0 - a, a], [b, 1.0 - b]])
    pi0, pi1 = b / (a + b), a / (a + b)
    t = 1.0 / math.sqrt(pi0 * pi1)
    return MarkovChainSpec(states=[0, 1], P=P,
                           f=np.array([pi1 * t, -pi0 * t]), name=name)


# ---------------------------------------------------------------------------
# mixing coefficients


def beta_coefficient(P: np.ndarray, n: int) -> float:
    """beta(n) = sum_i pi(i) * TV(P^n(i, .), pi), exact via matrix powers."""
    P = np.asarray(P, dtype=float)
    pi = stationary_dist(P)
    Pn = np.linalg.matrix_power(P, n)
    tv = 0.5 * np.abs(Pn - pi[None, :]).sum(axis=1)
    return float(pi @ tv)


def beta_two_state_closed_form(a: float, b: float, n: int) -> float:
    return 2.0 * a * b * abs(1.0 - a - b) ** n / (a + b) ** 2


def psi_bar_coefficient(P: np.ndarray, n: int) -> float:
    """Ratio-mixing dominator: max_ij |P^n(i,j)/pi(j) - 1|."""
    P = np.asarray(P, dtype=float)
    pi = stationary_dist(P)
    Pn = np.linalg.matrix_power(P, n)
    return float(np.max(np.abs(Pn / pi[None, :] - 1.0)))


def beta_by_enumeration(P: np.ndarray, n: int, horizon: int = 2) -> float:
    """Brute-force beta(n): TV between the joint law of a past window and a
    future window separated by n steps and the product of their marginals,
    enumerating every path segment.  Oracle for small chains only."""
    P = np.asarray(P, dtype=float)
    S = P.shape[0]
    pi = stationary_dist(P)
    Pn = np.linalg.matrix_power(P, n)

    def segments():
        # all state paths of length `horizon`, with their transition weight
        paths = [((s,), 1.0) for s in range(S)]
        for _ in range(horizon - 1):
            paths = [(p + (t,), w * P[p[-1], t])
                     for p, w in paths for t in range(S) if P[p[-1], t] > 0]
        return paths

    segs = segments()
    total = 0.0
    for past, w_past in segs:
        p_past = pi[past[0]] * w_past
        for fut, w_fut in segs:
            joint = p_past * Pn[past[-1], fut[0]] * w_fut
            prod = p_past * pi[fut[0]] * w_fut
            total += abs(joint - prod)
    return 0.5 * total


def fit_beta_decay(beta: np.ndarray, taus=(0.5, 0.75, 1.0)):
    """Fit beta(n) ~ a1 exp(-a2 n^tau) by linear regression of ln beta on
    n^tau, picking the tau with the smallest residual."""
    ns = np.arange(1, beta.size + 1, dtype=float)
    mask = beta > 0.0
    if mask.sum() < 2:
        return math.inf, 0.0, 1.0
    best = None
    for tau in taus:
        xs = ns[mask] ** tau
        ys = np.log(beta[mask])
        slope, intercept = np.polyfit(xs, ys, 1)
        resid = float(np.max(np.abs(slope * xs + intercept - ys)))
        if best is None or resid < best[0]:
            best = (resid, math.exp(intercept), -slope, tau)
    _, a1, a2, tau = best
    return a1, a2, tau


@dataclass
class MixingCertificate:
    beta: np.ndarray
    psi_bar: np.ndarray
    a1: float
    a2: float
    tau: float
    c1: float | None = None
    c2: float | None = None


def certify_chain(chain: MarkovChainSpec, n_max: int,
                  m: int | None = None) -> MixingCertificate:
    """Exact beta/psi_bar arrays up to n_max plus the fitted decay; when a
    block length m is supplied, exact block-moment constants c1, c2."""
    beta = np.array([beta_coefficient(chain.P, n) for n in range(1, n_max + 1)])
    psi = np.array([psi_bar_coefficient(chain.P, n) for n in range(1, n_max + 1)])
    a1, a2, tau = fit_beta_decay(beta)
    c1 = c2 = None
    if m is not None:
        rho = 1.0
        m_abs = _block_abs_moment(chain, m, 2.0 + rho)
        m_sq = _block_abs_moment(chain, m, 2.0)
        c1 = (m_abs / m ** (1.0 + rho / 2.0)) ** (1.0 / (2.0 + rho))
        c2 = math.sqrt(m_sq / m)
    return MixingCertificate(beta=beta, psi_bar=psi, a1=a1, a2=a2, tau=tau,
                             c1=c1, c2=c2)


# ---------------------------------------------------------------------------
# block construction


@dataclass
class BlockDecomposition:
    m: int
    k: int
    blocks: np.ndarray   # Y_1..Y_k
    S_n: float
    es2: float | None = None


def block_indices(n: int, alpha: float):
    """(m, k, list of index ranges), indices 0-based [start, start+m)."""
    if not (0.0 < alpha <= 0.5):
        # the theorems want alpha < 1/2; the boundary value is still a valid
        # decomposition and handy for round-number examples
        raise ChainError("alpha must lie in (0, 1/2]")
    m = int(math.floor(n ** alpha))
    k = int(math.floor(n / (2 * m)))
    if k < 1:
        raise ChainError("n too small: no complete block fits")
    return m, k, [(2 * m * j, 2 * m * j + m) for j in range(k)]


def block_decompose(eta: np.ndarray, alpha: float) -> BlockDecomposition:
    """Interlaced blocks of length m = floor(n^alpha) separated by gaps of m."""
    eta = np.asarray(eta, dtype=float)
    m, k, ranges = block_indices(eta.size, alpha)
    blocks = np.array([eta[s:e].sum() for s, e in ranges])
    return BlockDecomposition(m=m, k=k, blocks=blocks, S_n=float(blocks.sum()))


# exact distribution of one block sum: DP over (sum, end state)

def block_sum_distribution(chain: MarkovChainSpec, m: int):
    """Per start state: dict (y, end_state) -> prob of the length-m block sum
    Y = f(X_1) + ... + f(X_m) started at X_1 = start."""
    S = chain.P.shape[0]
    out = []
    for start in range(S):
        dist = {(round(float(chain.f[start]), 12), start): 1.0}
        for _ in range(m - 1):
            nxt = {}
            for (y, s), p in dist.items():
                for t in range(S):
                    pt = chain.P[s, t]
                    if pt > 0.0:
                        key = (round(y + float(chain.f[t]), 12), t)
                        nxt[key] = nxt.get(key, 0.0) + p * pt
            dist = nxt
        out.append(dist)
    return out


def block_marginal(chain: MarkovChainSpec, m: int):
    """Stationary marginal law of a block sum: dict y -> prob."""
    per_start = block_sum_distribution(chain, m)
    marg = {}
    for s, dist in enumerate(per_start):
        for (y, _), p in dist.items():
            marg[y] = marg.get(y, 0.0) + chain.pi[s] * p
    return marg


def _block_abs_moment(chain: MarkovChainSpec, m: int, r: float) -> float:
    marg = block_marginal(chain, m)
    return math.fsum(p * abs(y) ** r for y, p in marg.items())


# ---------------------------------------------------------------------------
# Berbee-style coupling


@dataclass
class BerbeeResult:
    blocks: np.ndarray
    independent: np.ndarray
    mismatch: np.ndarray  # bool per block


class _BerbeeTables:
    """Precomputed maximal-coupling tables for one (chain, m).

    The conditional block law depends on the history only through the
    previous block's end state, so there are S+1 cases: the stationary start
    and one per end state."""

    def __init__(self, chain: MarkovChainSpec, m: int):
        per_start = block_sum_distribution(chain, m)
        self.marg = block_marginal(chain, m)
        hop = np.linalg.matrix_power(chain.P, m + 1)
        S = chain.P.shape[0]
        self.cases = {}
        for case in [None] + list(range(S)):
            start_dist = chain.pi if case is None else hop[case]
            cond = {}
            for s in range(S):
                ws = start_dist[s]
                if ws <= 0.0:
                    continue
                for key, p in per_start[s].items():
                    cond[key] = cond.get(key, 0.0) + ws * p
            cond_y = {}
            for (y, _), p in cond.items():
                cond_y[y] = cond_y.get(y, 0.0) + p
            ys = sorted(set(cond_y) | set(self.marg))
            cy = np.array([cond_y.get(y, 0.0) for y in ys])
            my = np.array([self.marg.get(y, 0.0) for y in ys])
            overlap = np.minimum(cy, my)
            t = float(overlap.sum())
            ends = {}
            for (y, e), p in cond.items():
                ends.setdefault(y, []).append((e, p))
            end_tables = {}
            for y, lst in ends.items():
                probs = np.array([p for _, p in lst])
                end_tables[y] = ([e for e, _ in lst], np.cumsum(probs / probs.sum()))
            self.cases[case] = {
                "ys": ys, "t": t,
                "cum_overlap": np.cumsum(overlap / t) if t > 0 else None,
                "cum_resid_c": _cum_residual(cy, my),
                "cum_resid_m": _cum_residual(my, cy),
                "ends": end_tables,
            }


def _cum_residual(a, b):
    r = np.maximum(a - b, 0.0)
    s = r.sum()
    return np.cumsum(r / s) if s > 0 else None


def berbee_couple(chain: MarkovChainSpec, m: int, k: int,
                  rng: np.random.Generator,
                  tables: _BerbeeTables | None = None) -> BerbeeResult:
    """Sequential maximal coupling of interlaced block sums against i.i.d.
    copies from the stationary block marginal.

    Block 1 starts stationary, so it never mismatches; for later blocks the
    coupling succeeds with probability 1 - TV(conditional law, marginal), and
    averaging over the previous end state bounds the per-block mismatch
    probability by beta(m)."""
    if tables is None:
        tables = _BerbeeTables(chain, m)
    blocks = np.empty(k)
    indep = np.empty(k)
    mismatch = np.zeros(k, dtype=bool)
    case = None
    for j in range(k):
        tab = tables.cases[case]
        ys = tab["ys"]
        if rng.random() < tab["t"]:
            y = ys[int(np.searchsorted(tab["cum_overlap"], rng.random(), side="right"))]
            y_t = y
        else:
            y = ys[int(np.searchsorted(tab["cum_resid_c"], rng.random(), side="right"))]
            y_t = ys[int(np.searchsorted(tab["cum_resid_m"], rng.random(), side="right"))]
            mismatch[j] = True
        blocks[j] = y
        indep[j] = y_t
        end_states, end_cum = tab["ends"][y]
        case = end_states[int(np.searchsorted(end_cum, rng.random(), side="right"))]
    return BerbeeResult(blocks=blocks, independent=indep, mismatch=mismatch)


def berbee_mismatch_probability(chain: MarkovChainSpec, m: int, k: int,
                                reps: int, seed: int):
    """Empirical P(any block mismatches) over `reps` coupled realizations,
    with its standard error."""
    tables = _BerbeeTables(chain, m)
    rng = np.random.Generator(np.random.Philox(key=[seed, 0]))
    hits = 0
    for _ in range(reps):
        if berbee_couple(chain, m, k, rng, tables=tables).mismatch.any():
            hits += 1
    p = hits / reps
    return p, math.sqrt(p * (1.0 - p) / reps)


def _draw(probs: np.ndarray, rng: np.random.Generator) -> int:
    return int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))


# ---------------------------------------------------------------------------
# covariance inequality and tau


def covariance_bound_check(chain: MarkovChainSpec, n: int, f: np.ndarray,
                           g: np.ndarray, p: float):
    """|E f(X_{j+n}) g(X_j) - E f E g| vs 2 psi_bar(n)^{1/p} ||f||_p ||g||_q,
    everything exact by enumeration over state pairs under stationarity."""
    if p <= 1.0:
        raise ChainError("p must exceed 1")
    q = p / (p - 1.0)
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    pi = chain.pi
    Pn = np.linalg.matrix_power(chain.P, n)
    exy = float(np.einsum("s,s,st,t->", pi, g, Pn, f))
    lhs = abs(exy - float(pi @ f) * float(pi @ g))
    psi = psi_bar_coefficient(chain.P, n)
    rhs = (2.0 * psi ** (1.0 / p)
           * float(pi @ np.abs(f) ** p) ** (1.0 / p)
           * float(pi @ np.abs(g) ** q) ** (1.0 / q))
    return lhs, rhs, (lhs / rhs if rhs > 0.0 else math.inf)


def tau_n(psi_m: float, m: int, n: int, k: int) -> float:
    """tau_n with tau_n^2 = psi(m) + n psi(m)^2 + k psi(m)^{1/2}.

    m only labels the gap the coefficient was computed at; it does not enter
    the formula."""
    if psi_m < 0.0:
        raise ChainError("psi must be >= 0")
    return math.sqrt(psi_m + n * psi_m * psi_m + k * math.sqrt(psi_m))


# ---------------------------------------------------------------------------
# tail-ratio experiment on normalized block sums


def exact_block_sum_variance(chain: MarkovChainSpec, n: int, alpha: float) -> float:
    """E S_n^2 for the interlaced sum, exact via the stationary
    autocovariance c(d) and the pair counts of the selected index mask."""
    m, k, ranges = block_indices(n, alpha)
    mask = np.zeros(n)
    for s, e in ranges:
        mask[s:e] = 1.0
    # w(d) = number of selected pairs at lag d
    w = np.correlate(mask, mask, mode="full")[n - 1:]
    max_lag = int(np.max(np.nonzero(w)[0]))
    pi, P, f = chain.pi, chain.P, chain.f
    g = f.copy()
    c = [float(pi @ (f * g))]
    for _ in range(max_lag):
        g = P @ g
        c.append(float(pi @ (f * g)))
    c = np.array(c)
    return float(w[0] * c[0] + 2.0 * np.dot(w[1:max_lag + 1], c[1:max_lag + 1]))


def simulate_block_sums(chain: MarkovChainSpec, n: int, alpha: float,
                        budget: int, seed: int) -> np.ndarray:
    """S_n for `budget` independent stationary realizations, visiting only
    block indices (the gaps are bridged by an (m+1)-step transition)."""
    m, k, _ = block_indices(n, alpha)
    S = chain.P.shape[0]
    hop = np.linalg.matrix_power(chain.P, m + 1)
    cum_step = np.cumsum(chain.P, axis=1)
    cum_hop = np.cumsum(hop, axis=1)
    cum_pi = np.cumsum(chain.pi)
    two_state = S == 2

    def advance(state, u, cum, p_to_1):
        if two_state:
            return (u < p_to_1[state]).astype(np.int64)
        return (u[:, None] >= cum[state]).sum(axis=1)

    out = np.empty(budget)
    done = 0
    j = 0
    while done < budget:
        size = min(MIX_CHUNK, budget - done)
        rng = np.random.Generator(np.random.Philox(key=[seed, j]))
        state = np.searchsorted(cum_pi, rng.random(size), side="right")
        total = chain.f[state].copy()
        for blk in range(k):
            for _ in range(m - 1):
                state = advance(state, rng.random(size), cum_step, chain.P[:, 1])
                total += chain.f[state]
            if blk < k - 1:
                state = advance(state, rng.random(size), cum_hop, hop[:, 1])
                total += chain.f[state]
        out[done:done + size] = total
        done += size
        j += 1
    return out


def mixing_tail_experiment(chain: MarkovChainSpec, n: int, alpha: float,
                           x_grid, budget: int, seed: int,
                           rho: float = 1.0):
    """P(S_n / sqrt(E S_n^2) > x) against 1 - Phi(x), with the block-sum
    theorem envelope attached.

    Returns (RatioReport, info dict).  The envelope uses eps-like scale
    n^{-(1/2 - alpha)} and delta = tau_n from the exact psi_bar(m); it is
    flagged unusable when tau_n >= 1."""
    m, k, _ = block_indices(n, alpha)
    es2 = exact_block_sum_variance(chain, n, alpha)
    scale = math.sqrt(es2)
    psi_m = psi_bar_coefficient(chain.P, m)
    tau = tau_n(psi_m, m, n, k)
    cert = certify_chain(chain, n_max=max(m, 10), m=min(m, 20))
    params = BoundParams(rho=rho, eps_n=n ** -(0.5 - alpha), delta_n=tau, c=1.0)
    sums = simulate_block_sums(chain, n, alpha, budget, seed)
    rows = []
    flags_global = ["envelope_undefined"] if tau >= 1.0 else []
    for x in x_grid:
        hits = int(np.count_nonzero(sums > x * scale))
        p = hits / budget
        se = math.sqrt(p * (1.0 - p) / budget)
        ci = clopper_pearson(hits, budget)
        gt = gaussian_tail(x)
        lo, hi = ratio_envelope(x, params)
        rows.append(RatioRow(
            x=float(x), p_hat=p, se=se, ci_lo=ci[0], ci_hi=ci[1],
            gauss_tail=gt, ratio=p / gt,
            log_ratio=math.log(p / gt) if p > 0 else -math.inf,
            bound_lo=lo, bound_hi=hi, ess=float(budget), n_samples=budget,
            seed=seed, lam=0.0, flags=list(flags_global)))
    info = {"m": m, "k": k, "es2": es2, "tau_n": tau, "psi_bar_m": psi_m,
            "c1": cert.c1, "c2": cert.c2,
            "beta_fit": (cert.a1, cert.a2, cert.tau),
            "envelope_defined": tau < 1.0}
    return RatioReport(rows=rows), info
