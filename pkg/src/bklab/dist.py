"""Value distributions: discrete and analytic families, virtual values, regularity.

Every distribution exposes the same small interface: right-continuous ``cdf``,
generalized inverse ``quantile`` (min{x : F(x) >= q}), inverse-transform
``sample``, Myerson ``virtual_value``, ``is_regular``, ``monopoly_reserve``.
Analytic families additionally support ``discretize`` onto a quantile grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Distribution",
    "DiscreteDist",
    "EqualRevenueCapped",
    "ShiftedEqualRevenue",
    "ProductDist",
    "dist_from_json",
    "dist_to_json",
    "product_from_json",
    "product_to_json",
]


class Distribution:
    """Common interface; concrete classes implement the scalar hooks."""

    def cdf(self, x: float) -> float:
        raise NotImplementedError

    def quantile(self, q: float) -> float:
        raise NotImplementedError

    def quantile_array(self, q: np.ndarray) -> np.ndarray:
        return np.vectorize(self.quantile, otypes=[float])(q)

    def cdf_array(self, x: np.ndarray) -> np.ndarray:
        return np.vectorize(self.cdf, otypes=[float])(x)

    def sample(self, rng: np.random.Generator, size=None):
        """Inverse-transform sampling; output always lies in the support."""
        u = rng.random(size)
        if size is None:
            return self.quantile(float(u))
        return self.quantile_array(u)

    def virtual_value(self, v: float) -> float:
        raise NotImplementedError

    def virtual_floor(self, t: float) -> float:
        """Virtual value of the largest support point not exceeding t.

        Step extension used by threshold scans; -inf below the support.
        """
        raise NotImplementedError

    def is_regular(self) -> bool:
        raise NotImplementedError

    def monopoly_reserve(self) -> float:
        """Smallest support value with nonnegative virtual value."""
        raise NotImplementedError

    def mean(self) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class DiscreteDist(Distribution):
    """Finite-support distribution given by ascending values and their masses."""

    values: np.ndarray
    probs: np.ndarray
    _cum: np.ndarray = field(init=False, repr=False, compare=False)
    _phi: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        probs = np.asarray(self.probs, dtype=float)
        if values.ndim != 1 or values.shape != probs.shape or len(values) == 0:
            raise ValueError("values and probs must be equal-length 1-d arrays")
        if not np.all(np.diff(values) > 0):
            raise ValueError("values must be strictly ascending")
        if not np.all(probs > 0):
            raise ValueError("probs must be positive")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError("probs must sum to 1 within 1e-12")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "probs", probs)
        cum = np.cumsum(probs)
        cum[-1] = 1.0  # absorb cumsum roundoff so quantile(1) is exact
        object.__setattr__(self, "_cum", cum)
        # phi(v_t) = v_t - (v_{t+1} - v_t) (1 - F(v_t)) / f(v_t), top type keeps its value
        phi = values.copy()
        if len(values) > 1:
            gaps = np.diff(values)
            tail = 1.0 - cum[:-1]
            phi[:-1] = values[:-1] - gaps * tail / probs[:-1]
        object.__setattr__(self, "_phi", phi)

    @property
    def size(self) -> int:
        return len(self.values)

    def cdf(self, x: float) -> float:
        idx = np.searchsorted(self.values, x, side="right")
        return 0.0 if idx == 0 else float(self._cum[idx - 1])

    def cdf_array(self, x: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.values, x, side="right")
        out = np.where(idx > 0, self._cum[np.maximum(idx - 1, 0)], 0.0)
        return out

    def quantile(self, q: float) -> float:
        return float(self.values[self._qindex(q)])

    def quantile_array(self, q: np.ndarray) -> np.ndarray:
        idx = np.minimum(np.searchsorted(self._cum, q, side="left"), self.size - 1)
        return self.values[idx]

    def _qindex(self, q: float) -> int:
        return int(min(np.searchsorted(self._cum, q, side="left"), self.size - 1))

    def sample(self, rng: np.random.Generator, size=None):
        u = rng.random(size)
        if size is None:
            return float(self.quantile_array(np.array([u]))[0])
        return self.quantile_array(u)

    def support_index(self, v: float) -> int:
        idx = int(np.searchsorted(self.values, v))
        if idx >= self.size or self.values[idx] != v:
            raise ValueError(f"{v} is not a support value")
        return idx

    def virtual_value(self, v: float) -> float:
        return float(self._phi[self.support_index(v)])

    def virtual_floor(self, t: float) -> float:
        i = int(np.searchsorted(self.values, t, side="right")) - 1
        return -math.inf if i < 0 else float(self._phi[i])

    @property
    def virtual_values(self) -> np.ndarray:
        """phi at every atom, in support order."""
        return self._phi

    def is_regular(self) -> bool:
        return bool(np.all(np.diff(self._phi) >= -1e-12))

    def monopoly_reserve(self) -> float:
        nonneg = np.nonzero(self._phi >= -1e-12)[0]
        if len(nonneg) == 0:
            raise ValueError("no support value has nonnegative virtual value")
        return float(self.values[nonneg[0]])

    def mean(self) -> float:
        return float(self.values @ self.probs)


@dataclass(frozen=True)
class EqualRevenueCapped(Distribution):
    """Equal-revenue distribution capped at k: F(x) = 1 - 1/x on [1, k), atom 1/k at k.

    Every posted price in [1, k] earns revenue exactly 1.
    """

    k: float

    def __post_init__(self):
        if not self.k > 1:
            raise ValueError("k must exceed 1")

    def cdf(self, x: float) -> float:
        if x < 1:
            return 0.0
        if x < self.k:
            return 1.0 - 1.0 / x
        return 1.0

    def quantile(self, q: float) -> float:
        if q >= 1.0 - 1.0 / self.k:
            return self.k
        return max(1.0, 1.0 / (1.0 - q))

    def quantile_array(self, q: np.ndarray) -> np.ndarray:
        body = 1.0 / np.maximum(1.0 - q, 1.0 / self.k)
        return np.minimum(np.maximum(body, 1.0), self.k)

    def cdf_array(self, x: np.ndarray) -> np.ndarray:
        return np.where(x < 1.0, 0.0, np.where(x < self.k, 1.0 - 1.0 / np.maximum(x, 1.0), 1.0))

    def virtual_value(self, v: float) -> float:
        if v < 1 or v > self.k:
            raise ValueError(f"{v} is outside the support [1, {self.k}]")
        # hazard-rate formula on the continuous part; the cap atom is the top type
        return self.k if v == self.k else 0.0

    def virtual_floor(self, t: float) -> float:
        if t < 1.0:
            return -math.inf
        return self.k if t >= self.k else 0.0

    def is_regular(self) -> bool:
        return True

    def monopoly_reserve(self) -> float:
        return 1.0

    def mean(self) -> float:
        return 1.0 + math.log(self.k)

    def discretize(self, grid_size: int, tail_mass: float = 1e-6) -> DiscreteDist:
        return _quantile_grid(self, grid_size, tail_mass)


@dataclass(frozen=True)
class ShiftedEqualRevenue(Distribution):
    """Equal-revenue distribution shifted to start at k: F(x) = 1 - 1/(x-k+1) on [k, inf).

    Infinite mean; estimator uses must discretize with an explicit tail mass.
    """

    k: float

    def __post_init__(self):
        if not self.k >= 1:
            raise ValueError("k must be at least 1")

    def cdf(self, x: float) -> float:
        if x < self.k:
            return 0.0
        return 1.0 - 1.0 / (x - self.k + 1.0)

    def quantile(self, q: float) -> float:
        if q >= 1.0:
            return math.inf
        return self.k - 1.0 + 1.0 / (1.0 - q)

    def quantile_array(self, q: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return self.k - 1.0 + 1.0 / (1.0 - q)

    def cdf_array(self, x: np.ndarray) -> np.ndarray:
        shifted = np.maximum(x - self.k + 1.0, 1.0)
        return np.where(x < self.k, 0.0, 1.0 - 1.0 / shifted)

    def virtual_value(self, v: float) -> float:
        if v < self.k:
            raise ValueError(f"{v} is below the support minimum {self.k}")
        return self.k - 1.0  # x - (x - k + 1), constant

    def virtual_floor(self, t: float) -> float:
        return self.k - 1.0 if t >= self.k else -math.inf

    def is_regular(self) -> bool:
        return True

    def monopoly_reserve(self) -> float:
        return self.k

    def mean(self) -> float:
        return math.inf

    def discretize(self, grid_size: int, tail_mass: float = 1e-6) -> DiscreteDist:
        return _quantile_grid(self, grid_size, tail_mass)


def _quantile_grid(d: Distribution, grid_size: int, tail_mass: float) -> DiscreteDist:
    """Atoms at quantile(i/G) for i = 1..G, mass 1/G each; unbounded supports are
    truncated at quantile(1 - tail_mass) first. Duplicate atoms are merged."""
    if grid_size < 2:
        raise ValueError("grid_size must be at least 2")
    qs = np.arange(1, grid_size + 1) / grid_size
    cap = d.quantile(1.0 - tail_mass)
    atoms = np.minimum(d.quantile_array(qs), cap)
    values, inverse = np.unique(atoms, return_inverse=True)
    probs = np.zeros(len(values))
    np.add.at(probs, inverse, 1.0 / grid_size)
    return DiscreteDist(values, probs)


AnalyticDist = (EqualRevenueCapped, ShiftedEqualRevenue)


@dataclass(frozen=True)
class ProductDist:
    """Independent product of per-item distributions."""

    items: tuple

    def __post_init__(self):
        items = tuple(self.items)
        if len(items) < 1:
            raise ValueError("need at least one item")
        object.__setattr__(self, "items", items)

    @property
    def m(self) -> int:
        return len(self.items)

    def is_discrete(self) -> bool:
        return all(isinstance(d, DiscreteDist) for d in self.items)

    def supports(self):
        """Per-item support arrays (discrete products only)."""
        if not self.is_discrete():
            raise ValueError("supports() requires an all-discrete product")
        return [d.values for d in self.items]

    def type_count(self) -> int:
        return int(np.prod([d.size for d in self.items]))

    def sample_profile(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """n x m matrix of independent draws, one column per item."""
        cols = [d.sample(rng, size=n) for d in self.items]
        return np.column_stack(cols)


def dist_to_json(d: Distribution) -> dict:
    if isinstance(d, DiscreteDist):
        return {"kind": "discrete", "values": d.values.tolist(), "probs": d.probs.tolist()}
    if isinstance(d, EqualRevenueCapped):
        return {"kind": "equal_revenue_capped", "k": d.k}
    if isinstance(d, ShiftedEqualRevenue):
        return {"kind": "shifted_equal_revenue", "k": d.k}
    raise TypeError(f"unknown distribution type {type(d)!r}")


def dist_from_json(obj: dict) -> Distribution:
    kind = obj.get("kind")
    if kind == "discrete":
        return DiscreteDist(np.asarray(obj["values"], float), np.asarray(obj["probs"], float))
    if kind == "equal_revenue_capped":
        return EqualRevenueCapped(float(obj["k"]))
    if kind == "shifted_equal_revenue":
        return ShiftedEqualRevenue(float(obj["k"]))
    raise ValueError(f"unknown distribution kind {kind!r}")


def product_to_json(f: ProductDist) -> dict:
    return {"items": [dist_to_json(d) for d in f.items]}


def product_from_json(obj: dict) -> ProductDist:
    return ProductDist(tuple(dist_from_json(it) for it in obj["items"]))
