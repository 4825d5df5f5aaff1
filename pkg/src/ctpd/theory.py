"""Empirical verification machinery for the concentration bound, the
optimal-reweighting relation, and the importance-sampling identity.

The noise bound treats span rewards of winner and loser responses as
independent bounded random variables and bounds P(mean_w <= mean_l) by
exp(-2*gap^2 / (sum c_w^2/n_w^2 + sum c_l^2/n_l^2)). Monte Carlo estimates
use the counter-based Philox generator so draws are reproducible and
shardable by draw index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateRewards, TargetOutsideSupport


# ---------------------------------------------------------------------------
# Bounded per-span reward distributions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UniformReward:
    """Uniform-continuous reward on [lo, hi]."""

    lo: float
    hi: float

    @property
    def support(self) -> tuple[float, float]:
        return (self.lo, self.hi)

    @property
    def mean(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=n)


@dataclass(frozen=True)
class DiscreteReward:
    """Finite discrete reward with declared support [min, max]."""

    values: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.values) != len(self.probs):
            raise ValueError("values and probs differ in length")
        if abs(math.fsum(self.probs) - 1.0) > 1e-9 or any(p < 0 for p in self.probs):
            raise ValueError("probs must be a simplex vector")

    @property
    def support(self) -> tuple[float, float]:
        return (min(self.values), max(self.values))

    @property
    def mean(self) -> float:
        return math.fsum(v * p for v, p in zip(self.values, self.probs))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        idx = rng.choice(len(self.values), size=n, p=np.asarray(self.probs))
        return np.asarray(self.values, dtype=np.float64)[idx]


RewardDist = UniformReward | DiscreteReward


@dataclass(frozen=True)
class SpanRewardModel:
    """Independent bounded span rewards for a winner and a loser response."""

    winner_spans: tuple[RewardDist, ...]
    loser_spans: tuple[RewardDist, ...]

    def __post_init__(self):
        if not self.winner_spans or not self.loser_spans:
            raise ValueError("both responses need at least one span")

    @property
    def n_w(self) -> int:
        return len(self.winner_spans)

    @property
    def n_l(self) -> int:
        return len(self.loser_spans)

    @property
    def gap(self) -> float:
        """E[mean winner reward] - E[mean loser reward]."""
        ew = math.fsum(d.mean for d in self.winner_spans) / self.n_w
        el = math.fsum(d.mean for d in self.loser_spans) / self.n_l
        return ew - el


@dataclass(frozen=True)
class HoeffdingBound:
    value: float
    vacuous: bool  # true when the gap was non-positive and 1.0 was returned


def hoeffding_noise_bound(
    gap: float,
    ranges_w: Sequence[tuple[float, float]],
    ranges_l: Sequence[tuple[float, float]],
) -> HoeffdingBound:
    """Upper bound on P(S_w <= S_l) for independent bounded span rewards."""
    for a, b in list(ranges_w) + list(ranges_l):
        if b < a:
            raise ValueError(f"range ({a}, {b}) inverted")
    if gap <= 0.0:
        return HoeffdingBound(value=1.0, vacuous=True)
    n_w, n_l = len(ranges_w), len(ranges_l)
    denom = (
        math.fsum((b - a) ** 2 for a, b in ranges_w) / n_w**2
        + math.fsum((b - a) ** 2 for a, b in ranges_l) / n_l**2
    )
    if denom == 0.0:
        return HoeffdingBound(value=0.0, vacuous=False)
    return HoeffdingBound(value=min(1.0, math.exp(-2.0 * gap * gap / denom)), vacuous=False)


def model_noise_bound(model: SpanRewardModel) -> HoeffdingBound:
    return hoeffding_noise_bound(
        model.gap,
        [d.support for d in model.winner_spans],
        [d.support for d in model.loser_spans],
    )


@dataclass(frozen=True)
class McEstimate:
    estimate: float
    std_error: float
    samples: int


def mc_noise_probability(model: SpanRewardModel, samples: int, seed: int) -> McEstimate:
    """Monte Carlo estimate of P(S_w <= S_l), deterministic given the seed."""
    if samples < 10_000:
        raise ValueError(f"need at least 10^4 samples, got {samples}")
    rng = np.random.Generator(np.random.Philox(key=seed))
    s_w = np.zeros(samples)
    for d in model.winner_spans:
        s_w += d.sample(rng, samples)
    s_w /= model.n_w
    s_l = np.zeros(samples)
    for d in model.loser_spans:
        s_l += d.sample(rng, samples)
    s_l /= model.n_l
    p_hat = float(np.mean(s_w <= s_l))
    se = math.sqrt(p_hat * (1.0 - p_hat) / samples)
    return McEstimate(estimate=p_hat, std_error=se, samples=samples)


def random_span_reward_model(rng: np.random.Generator) -> SpanRewardModel:
    """Random bounded model with a strictly positive gap, for soundness sweeps."""
    def spans(shift: float) -> tuple[RewardDist, ...]:
        out: list[RewardDist] = []
        for _ in range(int(rng.integers(1, 7))):
            lo = float(rng.uniform(-1.0, 1.0)) + shift
            width = float(rng.uniform(0.1, 2.0))
            if rng.random() < 0.5:
                out.append(UniformReward(lo, lo + width))
            else:
                k = int(rng.integers(2, 5))
                vals = np.sort(rng.uniform(lo, lo + width, size=k))
                p = rng.dirichlet(np.ones(k))
                out.append(DiscreteReward(tuple(map(float, vals)), tuple(map(float, p))))
        return tuple(out)

    while True:
        shift = float(rng.uniform(0.2, 1.5))
        model = SpanRewardModel(winner_spans=spans(shift), loser_spans=spans(0.0))
        if model.gap > 0.05:
            return model


# ---------------------------------------------------------------------------
# Optimal reweighting (constant expected next-span reward)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ToySpanDistribution:
    """Finite conditional next-span distribution with per-span rewards."""

    context_id: str
    support: tuple[str, ...]
    probs: tuple[float, ...]
    rewards: tuple[float, ...]

    def __post_init__(self):
        if not (len(self.support) == len(self.probs) == len(self.rewards)):
            raise ValueError("support, probs, rewards must have equal length")
        if any(p < 0 for p in self.probs) or abs(math.fsum(self.probs) - 1.0) > 1e-12:
            raise ValueError("probs must sum to 1 within 1e-12")

    @property
    def expected_reward(self) -> float:
        return math.fsum(p * r for p, r in zip(self.probs, self.rewards))


@dataclass(frozen=True)
class ReweightSolution:
    mu: float
    k: float
    d_star: ToySpanDistribution

    def weight(self, reward: float) -> float:
        """w(p) = k * exp(mu * r(p))."""
        return self.k * math.exp(self.mu * reward)


def _reweighted_probs(d: ToySpanDistribution, mu: float) -> np.ndarray:
    # D*(p) proportional to D(p) * exp(-mu * r(p)); shift for stability
    logw = np.log(np.asarray(d.probs, dtype=np.float64).clip(min=1e-300)) - mu * np.asarray(
        d.rewards, dtype=np.float64
    )
    logw -= logw.max()
    w = np.exp(logw)
    return w / w.sum()


def solve_optimal_reweight(
    d: ToySpanDistribution, target: float, mu_bracket: float = 50.0, tol: float = 1e-12
) -> ReweightSolution:
    """Find (mu, k) with D* = D / (k * exp(mu * r)) and E_{D*}[r] = target.

    E over D*(mu) is strictly decreasing in mu, so bracketed bisection on
    g(mu) = E_{D*(mu)}[r] - target converges unconditionally.
    """
    active = [i for i, p in enumerate(d.probs) if p > 0.0]
    rewards = [d.rewards[i] for i in active]
    r_min, r_max = min(rewards), max(rewards)
    if r_min == r_max:
        if abs(target - r_min) > 0.0:
            raise DegenerateRewards(
                f"all rewards equal {r_min}; cannot reach target {target}"
            )
        return ReweightSolution(mu=0.0, k=1.0, d_star=d)
    if not (r_min < target < r_max):
        raise TargetOutsideSupport(
            f"target {target} outside open reward range ({r_min}, {r_max})"
        )

    rewards_arr = np.asarray(d.rewards, dtype=np.float64)

    def g(mu: float) -> float:
        return float(_reweighted_probs(d, mu) @ rewards_arr) - target

    lo, hi = -mu_bracket, mu_bracket
    g_lo, g_hi = g(lo), g(hi)
    # g(lo) > 0 (mass at max reward), g(hi) < 0 (mass at min reward)
    if not (g_lo > 0 > g_hi):
        raise TargetOutsideSupport(
            f"target {target} not bracketed within mu in [-{mu_bracket}, {mu_bracket}]"
        )
    mu = 0.0
    for _ in range(500):
        mu = 0.5 * (lo + hi)
        val = g(mu)
        if abs(val) <= tol:
            break
        if val > 0:
            lo = mu
        else:
            hi = mu

    probs = _reweighted_probs(d, mu)
    # D* = D exp(-mu r) / Z, so w = D/D* = Z exp(mu r): k is the normalizer Z
    k = float(np.exp(-mu * rewards_arr) @ np.asarray(d.probs, dtype=np.float64))
    d_star = ToySpanDistribution(
        context_id=d.context_id,
        support=d.support,
        probs=tuple(float(p) for p in probs),
        rewards=d.rewards,
    )
    return ReweightSolution(mu=mu, k=k, d_star=d_star)


# ---------------------------------------------------------------------------
# Importance-sampling identity on finite supports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ImportanceCheck:
    lhs: float  # E_{D*}[f] with D* = normalized D/w
    rhs: float  # E_D[f / w]
    abs_diff: float
    normalizer: float  # sum of D/w; identity is exact iff this is 1
    normalizable: bool


def importance_sampling_check(
    d: ToySpanDistribution,
    weights: Sequence[float],
    f: Callable[[str], float],
    tolerance: float = 1e-10,
) -> ImportanceCheck:
    """Compare E_{D*}[f] against E_D[f/w] by exact enumeration.

    D* is D/w renormalized; when sum(D/w) is 1 within tolerance the two
    sides agree to enumeration accuracy, otherwise they differ by exactly
    that normalizer (reported, not asserted).
    """
    if len(weights) != len(d.support):
        raise ValueError(f"{len(weights)} weights for {len(d.support)} spans")
    if any(w <= 0 for w in weights):
        raise ValueError("weights must be strictly positive")
    ratio = [p / w for p, w in zip(d.probs, weights)]
    normalizer = math.fsum(ratio)
    f_vals = [f(s) for s in d.support]
    lhs = math.fsum(r / normalizer * fv for r, fv in zip(ratio, f_vals))
    rhs = math.fsum(p * fv / w for p, fv, w in zip(d.probs, f_vals, weights))
    return ImportanceCheck(
        lhs=lhs,
        rhs=rhs,
        abs_diff=abs(lhs - rhs),
        normalizer=normalizer,
        normalizable=abs(normalizer - 1.0) <= tolerance,
    )
