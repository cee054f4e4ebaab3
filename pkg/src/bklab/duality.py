"""Region partitions, canonical flows, and duality-based revenue bounds.

The type space of one additive buyer over m independent items is partitioned
into one region per item, by highest value or by highest quantile (ties to
the smallest item index). Each region induces a flow on the type graph: a
type in region j passes its source mass plus inherited flow to the type just
below it in coordinate j when that type shares the region, and to the sink
otherwise. Regions are upward-closed in their own coordinate, so the chains
never re-enter a region from below, conservation holds type by type, and the
induced virtual transform equals the per-item Myerson virtual value inside a
region while leaving the remaining coordinates untouched. Expectations of the
clamped transform then upper-bound the optimal revenue, for one buyer or
many.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate

from .dist import DiscreteDist, Distribution, EqualRevenueCapped, ProductDist, ShiftedEqualRevenue
from .stoch import Estimate, RandomStream, sample_profiles

__all__ = [
    "RegionMode",
    "FlowNetwork",
    "VirtualTransform",
    "region_of",
    "region_index_table",
    "build_region_flow",
    "check_flow_conservation",
    "virtual_transform",
    "single_bidder_bound",
    "multi_bidder_bound",
    "rev_j_bound",
]

SINK = -1
CONSERVATION_TOL = 1e-10
ENUM_LIMIT = 1_000_000


class RegionMode(str, enum.Enum):
    """How a type is attributed to an item: by raw value or by quantile."""

    VALUE = "value"
    QUANTILE = "quantile"


def _mode(mode: Union[str, RegionMode]) -> RegionMode:
    return RegionMode(mode)


def region_of(v: Sequence[float], F: ProductDist, mode: Union[str, RegionMode] = RegionMode.VALUE) -> int:
    """Index of the item with the highest value (or quantile), ties to the
    smallest index."""
    v = np.asarray(v, dtype=float)
    if _mode(mode) is RegionMode.VALUE:
        keys = v
    else:
        keys = np.array([d.cdf(x) for d, x in zip(F.items, v)])
    return int(np.argmax(keys))


def _discrete_items(F: ProductDist) -> Tuple[DiscreteDist, ...]:
    items = tuple(F.items)
    if any(not isinstance(d, DiscreteDist) for d in items):
        raise ValueError("finite type space needed; discretize analytic items first")
    return items


def _type_grid(items: Sequence[DiscreteDist]) -> np.ndarray:
    """All type vectors in lexicographic order, matching the LP type space."""
    axes = [d.values for d in items]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.reshape(-1) for g in mesh], axis=1)


def _type_probs(items: Sequence[DiscreteDist]) -> np.ndarray:
    axes = [d.probs for d in items]
    mesh = np.meshgrid(*axes, indexing="ij")
    out = np.ones(mesh[0].size)
    for g in mesh:
        out = out * g.reshape(-1)
    return out


def region_index_table(F: ProductDist, mode: Union[str, RegionMode] = RegionMode.VALUE) -> np.ndarray:
    """Region of every type in the lexicographic type grid."""
    items = _discrete_items(F)
    types = _type_grid(items)
    if _mode(mode) is RegionMode.VALUE:
        keys = types
    else:
        keys = np.stack([d.cdf_array(types[:, j]) for j, d in enumerate(items)], axis=1)
    return np.argmax(keys, axis=1)


@dataclass(frozen=True)
class FlowNetwork:
    """Nonnegative flow on a finite product type space.

    ``lam`` maps (type index, type index) edges to weights; the sink is the
    pseudo-index -1. ``types`` lists type vectors in lexicographic order.
    """

    types: np.ndarray
    lam: Dict[Tuple[int, int], float]

    def __post_init__(self):
        types = np.asarray(self.types, dtype=float)
        object.__setattr__(self, "types", types)
        for (src, dst), w in self.lam.items():
            if w < 0:
                raise ValueError(f"negative flow weight on edge {(src, dst)}")
            if not (0 <= src < len(types)) or not (dst == SINK or 0 <= dst < len(types)):
                raise IndexError(f"edge {(src, dst)} leaves the type space")

    def inflow(self) -> np.ndarray:
        into = np.zeros(len(self.types))
        for (_, dst), w in self.lam.items():
            if dst != SINK:
                into[dst] += w
        return into

    def outflow(self) -> np.ndarray:
        out = np.zeros(len(self.types))
        for (src, _), w in self.lam.items():
            out[src] += w
        return out


@dataclass(frozen=True)
class VirtualTransform:
    """Per-type m-vector virtual values induced by a flow."""

    types: np.ndarray
    phi: np.ndarray

    def of(self, v: Sequence[float]) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        hit = np.flatnonzero((self.types == v).all(axis=1))
        if hit.size == 0:
            raise KeyError(f"type {v.tolist()} is not in the table")
        return self.phi[hit[0]]


def build_region_flow(
    F: ProductDist,
    mode: Union[str, RegionMode] = RegionMode.VALUE,
    regions: Optional[np.ndarray] = None,
) -> FlowNetwork:
    """Canonical conserving flow for the region partition.

    Chains run down each region's own item coordinate; every type forwards
    its source mass plus inherited flow to the next-lower type when that type
    is in the same region, and to the sink otherwise. A custom ``regions``
    array may replace the partition, but must stay upward-closed in each
    region's coordinate.
    """
    items = _discrete_items(F)
    if regions is None:
        regions = region_index_table(F, mode)
    regions = np.asarray(regions, dtype=int)
    types = _type_grid(items)
    probs = _type_probs(items)
    if regions.shape != (len(types),):
        raise ValueError("region table does not match the type grid")
    m = len(items)
    if regions.size and (regions.min() < 0 or regions.max() >= m):
        raise ValueError("region table points at a nonexistent item")

    sizes = [d.size for d in items]
    strides = np.ones(m, dtype=int)
    for j in range(m - 2, -1, -1):
        strides[j] = strides[j + 1] * sizes[j + 1]

    # each type forwards mass exactly once: inside its own region's chain scan
    lam: Dict[Tuple[int, int], float] = {}
    for j in range(m):
        others = [range(sizes[jj]) for jj in range(m) if jj != j]
        for combo in itertools.product(*others):
            base = 0
            pos = 0
            for jj in range(m):
                if jj != j:
                    base += combo[pos] * strides[jj]
                    pos += 1
            chain = [base + t * strides[j] for t in range(sizes[j])]
            carry = 0.0
            left_region = False
            for t in range(sizes[j] - 1, -1, -1):
                idx = chain[t]
                if regions[idx] != j:
                    left_region = True
                    continue
                if left_region:
                    raise ValueError(
                        f"region {j} is not upward-closed in its item coordinate at type {idx}"
                    )
                push = probs[idx] + carry
                if t > 0 and regions[chain[t - 1]] == j:
                    lam[(idx, chain[t - 1])] = push
                    carry = push
                else:
                    lam[(idx, SINK)] = lam.get((idx, SINK), 0.0) + push
                    carry = 0.0
    return FlowNetwork(types, lam)


def check_flow_conservation(fn: FlowNetwork, F: ProductDist, atol: float = CONSERVATION_TOL) -> bool:
    """True when source mass plus inflow equals outflow at every type."""
    probs = _type_probs(_discrete_items(F))
    if len(probs) != len(fn.types):
        raise ValueError("network and distribution disagree on the type space")
    gap = probs + fn.inflow() - fn.outflow()
    return bool(np.max(np.abs(gap)) <= atol)


def virtual_transform(fn: FlowNetwork, F: ProductDist) -> VirtualTransform:
    """Phi(v) = v - (1/f(v)) * sum of lam(v', v) * (v' - v) over incoming edges."""
    probs = _type_probs(_discrete_items(F))
    phi = fn.types.copy()
    for (src, dst), w in fn.lam.items():
        if dst == SINK or w == 0.0:
            continue
        phi[dst] -= w * (fn.types[src] - fn.types[dst]) / probs[dst]
    return VirtualTransform(fn.types, phi)


def _win_prob(d: Distribution, key: float, strict: bool, quantile_keys: bool) -> float:
    """Pr[this rival's key loses to `key`]; strict demands a strict loss."""
    if quantile_keys:
        if isinstance(d, DiscreteDist):
            cum = np.cumsum(d.probs)
            if strict:
                hit = np.searchsorted(cum, key - 1e-12, side="right")
            else:
                hit = np.searchsorted(cum, key + 1e-12, side="right")
            return float(cum[hit - 1]) if hit > 0 else 0.0
        if isinstance(d, EqualRevenueCapped):
            # attained cdf levels: [0, 1-1/k] continuously, then the atom at 1
            body = 1.0 - 1.0 / d.k
            if key >= 1.0 and not strict:
                return 1.0
            return min(max(key, 0.0), body)
        if isinstance(d, ShiftedEqualRevenue):
            # attained cdf levels fill [0, 1); mass at any single level is zero
            return min(max(key, 0.0), 1.0)
        raise ValueError(f"no quantile comparison rule for {type(d).__name__}")
    below = d.cdf(key)
    if strict:
        below -= _mass_at(d, key)
    return max(0.0, min(1.0, below))


def _mass_at(d: Distribution, x: float) -> float:
    if isinstance(d, DiscreteDist):
        idx = np.searchsorted(d.values, x)
        if idx < d.size and d.values[idx] == x:
            return float(d.probs[idx])
        return 0.0
    if isinstance(d, EqualRevenueCapped):
        return 1.0 / d.k if x == d.k else 0.0
    return 0.0


def _region_prob_given_value(F: ProductDist, j: int, vj: float, mode: RegionMode) -> float:
    """Pr[type falls in region j | item j's value is vj], by independence."""
    if mode is RegionMode.VALUE:
        key = vj
    else:
        key = F.items[j].cdf(vj)
    p = 1.0
    for jj, d in enumerate(F.items):
        if jj == j:
            continue
        # rivals before j must lose strictly; later ones may tie
        p *= _win_prob(d, key, strict=jj < j, quantile_keys=mode is RegionMode.QUANTILE)
    return p


def single_bidder_bound(F: ProductDist, mode: Union[str, RegionMode] = RegionMode.VALUE) -> float:
    """Sum over items of E[phi_j(v_j)+ inside region j, v_j outside].

    Discrete items are summed exactly; analytic ones are integrated with
    quadrature between their breakpoints, with a divergence guard for
    infinite-mean tails that keep positive mass outside their region.
    """
    mode = _mode(mode)
    total = 0.0
    for j, d in enumerate(F.items):
        if isinstance(d, DiscreteDist):
            for vj, fj, phi in zip(d.values, d.probs, d.virtual_values):
                p_in = _region_prob_given_value(F, j, float(vj), mode)
                total += fj * (max(phi, 0.0) * p_in + vj * (1.0 - p_in))
        else:
            total += _analytic_item_term(F, j, mode)
    return total


def _analytic_item_term(F: ProductDist, j: int, mode: RegionMode) -> float:
    d = F.items[j]
    if isinstance(d, EqualRevenueCapped):
        lo, hi, atom = 1.0, d.k, d.k
    elif isinstance(d, ShiftedEqualRevenue):
        lo, hi, atom = d.k, math.inf, None
        # limiting win probability against each rival as this key tends to 1
        limit_in = 1.0
        if mode is RegionMode.QUANTILE:
            for jj, dd in enumerate(F.items):
                if jj != j:
                    limit_in *= _win_prob(dd, 1.0, strict=True, quantile_keys=True)
        if limit_in < 1.0 - 1e-12:
            return math.inf  # infinite mean keeps a constant out-of-region share
    else:
        raise ValueError(f"no integration rule for {type(d).__name__}")

    def integrand(x: float) -> float:
        fx = _density(d, x)
        p_in = _region_prob_given_value(F, j, x, mode)
        return fx * (max(d.virtual_value(x), 0.0) * p_in + x * (1.0 - p_in))

    points = sorted(
        {lo}
        | {c for dd in F.items if isinstance(dd, EqualRevenueCapped) for c in (1.0, dd.k)}
        | {dd.k for dd in F.items if isinstance(dd, ShiftedEqualRevenue)}
    )
    points = [p for p in points if lo < p < hi]
    value, _ = integrate.quad(integrand, lo, hi, points=points or None, limit=200)
    if atom is not None:
        f_atom = _mass_at(d, atom)
        p_in = _region_prob_given_value(F, j, atom, mode)
        value += f_atom * (max(d.virtual_value(atom), 0.0) * p_in + atom * (1.0 - p_in))
    return value


def _density(d: Distribution, x: float) -> float:
    if isinstance(d, EqualRevenueCapped):
        return 1.0 / x**2 if 1.0 <= x < d.k else 0.0
    if isinstance(d, ShiftedEqualRevenue):
        return 1.0 / (x - d.k + 1.0) ** 2 if x >= d.k else 0.0
    raise ValueError(f"no density for {type(d).__name__}")


def _clamped_region_scores(F: ProductDist, mode: RegionMode) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per type: probability and the per-item score phi_j+ inside / v_j outside."""
    items = _discrete_items(F)
    types = _type_grid(items)
    probs = _type_probs(items)
    regions = region_index_table(F, mode)
    scores = types.copy()
    for j, d in enumerate(items):
        inside = regions == j
        phi_col = d.virtual_values[np.searchsorted(d.values, types[:, j])]
        scores[inside, j] = np.maximum(phi_col[inside], 0.0)
    return probs, scores, regions


def multi_bidder_bound(
    F: ProductDist,
    n: int,
    mode: Union[str, RegionMode] = RegionMode.VALUE,
    budget: int = 200_000,
    seed: int = 0,
) -> Estimate:
    """Sum over items of E[max over bidders of the region score], where a
    bidder scores phi_j(v_j)+ inside region j and v_j outside.

    Exact for discrete items within the enumeration limit (the per-item max
    law only needs one bidder's score law and n-th powers of its cdf), Monte
    Carlo with standard error otherwise.
    """
    if n < 1:
        raise ValueError("need at least one bidder")
    mode = _mode(mode)
    items = tuple(F.items)
    discrete = all(isinstance(d, DiscreteDist) for d in items)
    joint = math.prod(d.size for d in items) ** n if discrete else math.inf
    if discrete and joint <= ENUM_LIMIT:
        probs, scores, _ = _clamped_region_scores(F, mode)
        total = 0.0
        for j in range(len(items)):
            law: Dict[float, float] = {}
            for p, s in zip(probs, scores[:, j]):
                law[float(s)] = law.get(float(s), 0.0) + p
            vals = np.array(sorted(law))
            pmf = np.array([law[v] for v in vals])
            cdf = np.cumsum(pmf)
            below = np.concatenate([[0.0], cdf[:-1]])
            total += float(vals @ (cdf**n - below**n))
        return Estimate(total, 0.0, 1, "exact")

    total = 0.0
    total_sq = 0.0
    done = 0
    index = 0
    while done < budget:
        take = min(32768, budget - done)
        rng = RandomStream(seed, index).generator()
        vals = sample_profiles(F, rng, take, n)
        if mode is RegionMode.VALUE:
            keys = vals
        else:
            keys = np.stack(
                [items[jj].cdf_array(vals[:, :, jj]) for jj in range(len(items))], axis=2
            )
        region = np.argmax(keys, axis=2)
        per_profile = np.zeros(take)
        for j, d in enumerate(items):
            phi = np.vectorize(d.virtual_value, otypes=[float])(vals[:, :, j])
            score = np.where(region == j, np.maximum(phi, 0.0), vals[:, :, j])
            per_profile += score.max(axis=1)
        total += float(per_profile.sum())
        total_sq += float((per_profile**2).sum())
        done += take
        index += 1
    mean = total / budget
    var = max(total_sq / budget - mean * mean, 0.0)
    if budget > 1:
        var *= budget / (budget - 1)
    return Estimate(mean, math.sqrt(var / budget), budget, "mc")


def rev_j_bound(F: ProductDist, n: int, j: int, budget: int = 200_000, seed: int = 0) -> Estimate:
    """Upper bound on item j's revenue share with n bidders: the top-value
    bidder contributes max{phi_j of her value, second-highest value} inside
    the quantile region of item j, and her raw value outside. The runner-up
    value is 0 when n = 1."""
    if n < 1:
        raise ValueError("need at least one bidder")
    items = tuple(F.items)
    if not (0 <= j < len(items)):
        raise IndexError("item index out of range")
    discrete = all(isinstance(d, DiscreteDist) for d in items)
    joint = math.prod(d.size for d in items) ** n if discrete else math.inf
    if discrete and joint <= ENUM_LIMIT:
        probs = _type_probs(items)
        types = _type_grid(items)
        regions = region_index_table(F, RegionMode.QUANTILE)
        d = items[j]
        phis = d.virtual_values[np.searchsorted(d.values, types[:, j])]
        grids = np.meshgrid(*([np.arange(len(types))] * n), indexing="ij")
        combos = np.stack([g.reshape(-1) for g in grids], axis=1)  # (K, n)
        p = probs[combos].prod(axis=1)
        vj = types[combos, j]
        top = np.argmax(vj, axis=1)
        rows = np.arange(len(combos))
        top_type = combos[rows, top]
        top_v = vj[rows, top]
        second = np.partition(vj, -2, axis=1)[:, -2] if n >= 2 else np.zeros(len(combos))
        contrib = np.where(
            regions[top_type] == j, np.maximum(phis[top_type], second), top_v
        )
        return Estimate(float(p @ contrib), 0.0, 1, "exact")

    total = 0.0
    total_sq = 0.0
    done = 0
    index = 0
    while done < budget:
        take = min(32768, budget - done)
        rng = RandomStream(seed, index).generator()
        vals = sample_profiles(F, rng, take, n)
        keys = np.stack([items[jj].cdf_array(vals[:, :, jj]) for jj in range(len(items))], axis=2)
        in_j = np.argmax(keys, axis=2) == j
        vj = vals[:, :, j]
        top = np.argmax(vj, axis=1)
        rows = np.arange(take)
        top_v = vj[rows, top]
        second = np.partition(vj, -2, axis=1)[:, -2] if n >= 2 else np.zeros(take)
        phi_top = np.vectorize(items[j].virtual_value, otypes=[float])(top_v)
        contrib = np.where(in_j[rows, top], np.maximum(phi_top, second), top_v)
        total += float(contrib.sum())
        total_sq += float((contrib**2).sum())
        done += take
        index += 1
    mean = total / budget
    var = max(total_sq / budget - mean * mean, 0.0)
    if budget > 1:
        var *= budget / (budget - 1)
    return Estimate(mean, math.sqrt(var / budget), budget, "mc")
