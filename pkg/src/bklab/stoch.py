"""Seeded Monte Carlo engine and exact-enumeration probability checkers.

Estimates are produced by counter-based streams so that replicate r of any
experiment draws from stream r and totals combine by indexed reduction: the
result is a pure function of (seed, samples) no matter how work is scheduled.
The enumeration side covers the order-statistic laws and conditioned laws
behind the coupling arguments: first-order stochastic dominance, positive
correlation of the winner's virtual value with the runner-up, and the
max-with-fresh-samples comparison.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .dist import DiscreteDist, Distribution, ProductDist
from .mech import ConstrainedVcg, Profile, vcg_additive_revenue_batch, vcg_ud
from .setsys import Full, SetSystem

__all__ = [
    "RandomStream",
    "Estimate",
    "estimate_vcg_revenue",
    "exact_fosd",
    "order_stat_law",
    "top_two_law",
    "conditioned_second_law",
    "check_pos_corr",
    "check_claim_max_fresh",
    "bundle_pricing_revenue",
    "cc_search",
]

CHUNK = 32768
LawLike = Union[DiscreteDist, Mapping[float, float]]


@dataclass(frozen=True)
class RandomStream:
    """Counter-based generator family keyed by (seed, stream index)."""

    seed: int
    stream: int = 0

    def __post_init__(self):
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "stream", int(self.stream))

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed % 2**64, self.stream % 2**64], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def substream(self, index: int) -> "RandomStream":
        return RandomStream(self.seed, index)


@dataclass(frozen=True)
class Estimate:
    """A mean with its standard error; stderr 0 for exact enumeration.

    Degenerate Monte Carlo estimates (point-mass inputs) also report zero
    stderr while keeping method "mc", so stderr alone does not identify the
    method.
    """

    mean: float
    stderr: float
    samples: int
    method: str = "mc"

    def __post_init__(self):
        if self.method not in ("exact", "mc"):
            raise ValueError(f"unknown estimate method {self.method!r}")
        if not (self.stderr >= 0.0):
            raise ValueError("stderr must be nonnegative")
        if self.method == "exact" and self.stderr != 0.0:
            raise ValueError("exact estimates carry zero stderr")
        if self.samples < 1:
            raise ValueError("samples must be positive")

    def to_json(self) -> dict:
        return {
            "value": self.mean,
            "stderr": self.stderr,
            "samples": self.samples,
            "method": self.method,
        }


def sample_profiles(F: ProductDist, rng: np.random.Generator, batch: int, n: int) -> np.ndarray:
    """(batch, n, m) value draws, item by item so consumption order is fixed."""
    vals = np.empty((batch, n, len(F.items)))
    for j, d in enumerate(F.items):
        vals[:, :, j] = d.sample(rng, size=(batch, n))
    return vals


def _revenue_fn(F: ProductDist, n: int, constraints, mech: str):
    m = len(F.items)
    if mech == "additive":
        if constraints is not None and any(not isinstance(c, Full) for c in constraints):
            raise ValueError("additive mechanism expects Full (or omitted) constraints")
        return vcg_additive_revenue_batch
    if mech == "constrained":
        if constraints is None:
            raise ValueError("constrained mechanism needs per-bidder set systems")
        if len(constraints) != n:
            raise ValueError(f"need {n} constraint systems, got {len(constraints)}")
        kernel = ConstrainedVcg(constraints)
        return kernel.revenue_batch
    if mech == "ud":
        if constraints is not None and any(not isinstance(c, Full) for c in constraints):
            raise ValueError("unit-demand mechanism expects Full (or omitted) constraints")
        if (n + 1) ** m <= 200_000:
            kernel = ConstrainedVcg([Full(m)] * n, matching_only=True)
            return kernel.revenue_batch

        def by_rows(vals: np.ndarray) -> np.ndarray:
            systems = (Full(m),) * n
            out = np.empty(len(vals))
            for i, row in enumerate(vals):
                out[i] = vcg_ud(Profile(row, systems)).revenue()
            return out

        return by_rows
    raise ValueError(f"unknown mechanism selector {mech!r}")


def estimate_vcg_revenue(
    F: ProductDist,
    n: int,
    constraints: Optional[Sequence[SetSystem]] = None,
    mech: str = "additive",
    samples: int = 100_000,
    seed: int = 0,
) -> Estimate:
    """Mean VCG revenue over i.i.d. profiles, deterministic given (seed, samples)."""
    if n < 1:
        raise ValueError("need at least one bidder")
    if samples < 1:
        raise ValueError("need at least one sample")
    revenue = _revenue_fn(F, n, constraints, mech)
    base = RandomStream(seed)
    total = 0.0
    total_sq = 0.0
    done = 0
    index = 0
    while done < samples:
        take = min(CHUNK, samples - done)
        rng = base.substream(index).generator()
        rev = revenue(sample_profiles(F, rng, take, n))
        total += float(rev.sum())
        total_sq += float((rev * rev).sum())
        done += take
        index += 1
    mean = total / samples
    var = max(total_sq / samples - mean * mean, 0.0)
    if samples > 1:
        var *= samples / (samples - 1)
    return Estimate(mean, math.sqrt(var / samples), samples, "mc")


def _as_law(x: LawLike) -> dict:
    if isinstance(x, DiscreteDist):
        return dict(zip(x.values.tolist(), x.probs.tolist()))
    law = {float(v): float(p) for v, p in x.items()}
    if any(p < -1e-12 for p in law.values()):
        raise ValueError("law has negative mass")
    total = sum(law.values())
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"law mass {total} is not 1")
    return law


def exact_fosd(x: LawLike, y: LawLike, atol: float = 1e-12) -> bool:
    """True when Pr[X > t] >= Pr[Y > t] at every support point of either law."""
    law_x, law_y = _as_law(x), _as_law(y)
    for t in sorted(set(law_x) | set(law_y)):
        tail_x = sum(p for v, p in law_x.items() if v > t)
        tail_y = sum(p for v, p in law_y.items() if v > t)
        if tail_x < tail_y - atol:
            return False
    return True


def order_stat_law(d: DiscreteDist, draws: int, rank: int) -> dict:
    """Law of the rank-th highest of `draws` i.i.d. samples (rank 1 = max)."""
    if not (1 <= rank <= draws):
        raise ValueError("rank must lie in [1, draws]")
    cum = np.concatenate([[0.0], np.cumsum(d.probs)])

    def cdf_rank(F: float) -> float:
        # at most rank-1 draws strictly above the threshold
        return sum(
            math.comb(draws, i) * (1.0 - F) ** i * F ** (draws - i) for i in range(rank)
        )

    law = {}
    for t, v in enumerate(d.values):
        mass = cdf_rank(cum[t + 1]) - cdf_rank(cum[t])
        if mass > 0.0:
            law[float(v)] = mass
    return law


def top_two_law(d: DiscreteDist, draws: int) -> dict:
    """Joint law of (max, second-highest) of `draws` i.i.d. samples.

    With a single draw the second entry is the 0.0 price floor.
    """
    if draws < 1:
        raise ValueError("need at least one draw")
    law = {}
    for profile in itertools.product(range(d.size), repeat=draws):
        p = float(np.prod(d.probs[list(profile)]))
        vals = sorted((float(d.values[i]) for i in profile), reverse=True)
        second = vals[1] if draws >= 2 else 0.0
        key = (vals[0], second)
        law[key] = law.get(key, 0.0) + p
    return law


def conditioned_second_law(d: DiscreteDist, l: int, k: int) -> dict:
    """Law of a_(2) given a_(1) > b_(1), for a ~ F^l and b ~ F^k.

    a_(2) is 0.0 when l = 1. Raises if the conditioning event is null.
    """
    joint = _conditioned_top_two(d, l, k)
    law = {}
    for (_, a2), p in joint.items():
        law[a2] = law.get(a2, 0.0) + p
    return law


def _conditioned_top_two(d: DiscreteDist, l: int, k: int) -> dict:
    """Joint law of (a_(1), a_(2)) given a_(1) > b_(1); b_(1) integrated out."""
    if k < 1:
        raise ValueError("need at least one rival draw")
    weighted = {}
    total = 0.0
    for (a1, a2), p in top_two_law(d, l).items():
        # Pr[all k rival draws < a1] through the left cdf limit
        idx = int(np.searchsorted(d.values, a1, side="left"))
        below = float(np.cumsum(d.probs)[idx - 1]) if idx > 0 else 0.0
        w = p * below**k
        if w > 0.0:
            weighted[(a1, a2)] = weighted.get((a1, a2), 0.0) + w
            total += w
    if total <= 0.0:
        raise ValueError("conditioning event a_(1) > b_(1) has probability zero")
    return {key: w / total for key, w in weighted.items()}


def check_pos_corr(d: DiscreteDist, l: int, k: int) -> bool:
    """Exact check that the conditioned winner's virtual value and runner-up
    are positively correlated: Pr[phi(a_(1)) > x | a_(2) > y] >= Pr[phi(a_(1)) > x]
    under the conditioning a_(1) > b_(1), for every grid pair (x, y)."""
    if not d.is_regular():
        raise ValueError("positive-correlation check expects a regular distribution")
    joint = _conditioned_top_two(d, l, k)
    entries = [(d.virtual_value(a1), a2, p) for (a1, a2), p in joint.items()]
    xs = sorted({phi for phi, _, _ in entries})
    ys = [0.0] + [float(v) for v in d.values]
    for x in xs:
        base = sum(p for phi, _, p in entries if phi > x)
        for y in ys:
            cond_mass = sum(p for _, a2, p in entries if a2 > y)
            if cond_mass <= 0.0:
                continue
            both = sum(p for phi, a2, p in entries if phi > x and a2 > y)
            if both / cond_mass < base - 1e-12:
                return False
    return True


def check_claim_max_fresh(d: DiscreteDist, l: int, k: int):
    """Exact comparison of E[max{phi(a_(1)), a_(2)}] against the fresh-sample
    variant E[max{phi(a_(1)), c_(2)}], both conditioned on a_(1) > b_(1), with
    c ~ F^(l+k) independent. Returns (lhs, rhs, holds)."""
    if not d.is_regular():
        raise ValueError("claim check expects a regular distribution")
    joint = _conditioned_top_two(d, l, k)
    fresh = order_stat_law(d, l + k, 2)
    lhs = 0.0
    rhs = 0.0
    for (a1, a2), p in joint.items():
        phi = d.virtual_value(a1)
        lhs += p * max(phi, a2)
        rhs += p * sum(q * max(phi, c2) for c2, q in fresh.items())
    return lhs, rhs, lhs <= rhs + 1e-12


def bundle_pricing_revenue(
    item: Distribution,
    m: int,
    price_grid: Sequence[float],
    samples: int = 200_000,
    seed: int = 0,
):
    """Grand-bundle posted pricing: estimate p * Pr[sum of m item values >= p]
    for each grid price on a common sample of bundle sums, and return the
    maximizer with its estimate."""
    prices = [float(p) for p in price_grid]
    if not prices:
        raise ValueError("price grid is empty")
    if samples < 1:
        raise ValueError("need at least one sample")
    base = RandomStream(seed)
    hits = np.zeros(len(prices))
    done = 0
    index = 0
    arr = np.array(prices)
    while done < samples:
        take = min(CHUNK, samples - done)
        rng = base.substream(index).generator()
        sums = item.sample(rng, size=(take, m)).sum(axis=1)
        hits += (sums[:, None] >= arr[None, :]).sum(axis=0)
        done += take
        index += 1
    phat = hits / samples
    revs = arr * phat
    best = int(np.argmax(revs))
    stderr = arr[best] * math.sqrt(phat[best] * (1.0 - phat[best]) / samples)
    return prices[best], Estimate(float(revs[best]), stderr, samples, "mc")


def cc_search(
    F: ProductDist,
    n: int,
    constraints: Optional[Union[SetSystem, Sequence[SetSystem]]],
    benchmark: Union[float, Estimate],
    c_max: int,
    samples: int = 100_000,
    seed: int = 0,
    mech: str = "additive",
) -> Optional[int]:
    """Smallest c <= c_max whose (n+c)-bidder VCG revenue clears the benchmark
    with a 4-standard-error guard band on both sides; None if none does."""
    if c_max < 0:
        raise ValueError("c_max must be nonnegative")
    if isinstance(benchmark, Estimate):
        target = benchmark.mean + 4.0 * benchmark.stderr
    else:
        target = float(benchmark)
    for c in range(c_max + 1):
        bidders = n + c
        if constraints is None:
            per_bidder = None
        elif isinstance(constraints, SetSystem):
            per_bidder = [constraints] * bidders
        else:
            per_bidder = list(constraints)[:bidders]
        est = estimate_vcg_revenue(F, bidders, per_bidder, mech, samples, seed)
        if est.mean - 4.0 * est.stderr >= target:
            return c
    return None
