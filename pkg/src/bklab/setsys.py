"""Downward-closed feasibility families over m items, with matroid specializations.

Item subsets are handled as bitmasks internally; the public methods accept
either an integer bitmask or an iterable of 0-based item indices. Four kinds:

* ``Full``      every subset is feasible (additive bidders)
* ``Uniform``   subsets of size at most k (unit demand at k = 1)
* ``Partition`` per-block capacity caps
* ``Explicit``  an explicitly listed downward-closed family

``rank``/``spans`` follow the matroid rank function; ``Explicit`` systems are
admitted to those operations only after a brute-force exchange-axiom check.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SetSystem",
    "Full",
    "Uniform",
    "Partition",
    "Explicit",
    "disjoint_spanning_number",
    "is_matroid",
    "system_from_json",
    "system_to_json",
]

EXPLICIT_ITEM_LIMIT = 20
RHO_ITEM_LIMIT = 12


def as_mask(S, m: int) -> int:
    if isinstance(S, (int, np.integer)):
        mask = int(S)
        if mask < 0 or mask >= (1 << m):
            raise ValueError(f"mask {mask} out of range for m={m}")
        return mask
    mask = 0
    for j in S:
        if not 0 <= j < m:
            raise ValueError(f"item {j} out of range for m={m}")
        mask |= 1 << j
    return mask


def mask_items(mask: int):
    items = []
    j = 0
    while mask:
        if mask & 1:
            items.append(j)
        mask >>= 1
        j += 1
    return items


class SetSystem:
    m: int

    def is_feasible(self, S) -> bool:
        return self._feasible_mask(as_mask(S, self.m))

    def _feasible_mask(self, mask: int) -> bool:
        raise NotImplementedError

    def value_of(self, weights, S) -> float:
        """Maximum total weight of a feasible subset of S."""
        mask = as_mask(S, self.m)
        w = np.asarray(weights, dtype=float)
        if len(w) != self.m:
            raise ValueError("need one weight per item")
        return self._value_mask(w, mask)

    def _value_mask(self, w: np.ndarray, mask: int) -> float:
        raise NotImplementedError

    def rank(self, S) -> int:
        """Size of a maximum-cardinality feasible subset of S (matroid kinds only)."""
        self._require_matroid()
        return self._rank_mask(as_mask(S, self.m))

    def _rank_mask(self, mask: int) -> int:
        raise NotImplementedError

    def spans(self, S, j: int) -> bool:
        mask = as_mask(S, self.m)
        if not 0 <= j < self.m or (mask >> j) & 1:
            raise ValueError("j must be an item outside S")
        self._require_matroid()
        return self._rank_mask(mask | (1 << j)) == self._rank_mask(mask)

    def _require_matroid(self):
        pass  # closed-form kinds are matroids by construction

    def value_table(self, weights) -> np.ndarray:
        """value_of for every subset mask 0..2^m-1 (used by winner determination)."""
        if self.m > 16:
            raise ValueError("value_table limited to m <= 16")
        w = np.asarray(weights, dtype=float)
        return np.array([self._value_mask(w, mask) for mask in range(1 << self.m)])


@dataclass(frozen=True)
class Full(SetSystem):
    m: int

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be positive")

    def _feasible_mask(self, mask: int) -> bool:
        return True

    def _value_mask(self, w: np.ndarray, mask: int) -> float:
        return float(sum(w[j] for j in mask_items(mask) if w[j] > 0))

    def _rank_mask(self, mask: int) -> int:
        return bin(mask).count("1")


@dataclass(frozen=True)
class Uniform(SetSystem):
    m: int
    k: int

    def __post_init__(self):
        if self.m < 1 or not 0 <= self.k:
            raise ValueError("need m >= 1 and k >= 0")

    def _feasible_mask(self, mask: int) -> bool:
        return bin(mask).count("1") <= self.k

    def _value_mask(self, w: np.ndarray, mask: int) -> float:
        ws = sorted((w[j] for j in mask_items(mask) if w[j] > 0), reverse=True)
        return float(sum(ws[: self.k]))

    def _rank_mask(self, mask: int) -> int:
        return min(bin(mask).count("1"), self.k)


@dataclass(frozen=True)
class Partition(SetSystem):
    blocks: tuple
    caps: tuple

    def __post_init__(self):
        blocks = tuple(tuple(sorted(b)) for b in self.blocks)
        caps = tuple(int(c) for c in self.caps)
        if len(blocks) != len(caps) or not blocks:
            raise ValueError("need one cap per block")
        if any(c < 0 for c in caps):
            raise ValueError("caps must be nonnegative")
        flat = sorted(itertools.chain.from_iterable(blocks))
        if flat != list(range(len(flat))):
            raise ValueError("blocks must partition the items 0..m-1")
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "caps", caps)
        object.__setattr__(self, "_block_masks", tuple(as_mask(b, len(flat)) for b in blocks))

    @property
    def m(self) -> int:
        return sum(len(b) for b in self.blocks)

    def _feasible_mask(self, mask: int) -> bool:
        return all(
            bin(mask & bm).count("1") <= c for bm, c in zip(self._block_masks, self.caps)
        )

    def _value_mask(self, w: np.ndarray, mask: int) -> float:
        total = 0.0
        for bm, c in zip(self._block_masks, self.caps):
            ws = sorted((w[j] for j in mask_items(mask & bm) if w[j] > 0), reverse=True)
            total += sum(ws[:c])
        return float(total)

    def _rank_mask(self, mask: int) -> int:
        return sum(
            min(bin(mask & bm).count("1"), c) for bm, c in zip(self._block_masks, self.caps)
        )


class Explicit(SetSystem):
    """A downward-closed family listed outright, stored as a set of bitmasks.

    Must contain the empty set and every singleton. ``rank``/``spans`` raise
    unless the family passes the exchange-axiom check.
    """

    def __init__(self, m: int, feasible):
        if not 1 <= m <= EXPLICIT_ITEM_LIMIT:
            raise ValueError(f"Explicit systems support 1 <= m <= {EXPLICIT_ITEM_LIMIT}")
        self.m = m
        masks = frozenset(as_mask(S, m) for S in feasible)
        if 0 not in masks:
            raise ValueError("family must contain the empty set")
        for j in range(m):
            if (1 << j) not in masks:
                raise ValueError(f"family must contain the singleton {{{j}}}")
        for mask in masks:
            for j in mask_items(mask):
                if (mask & ~(1 << j)) not in masks:
                    raise ValueError("family must be downward-closed")
        self.feasible_masks = masks
        self._matroid = None

    def __eq__(self, other):
        return (
            isinstance(other, Explicit)
            and other.m == self.m
            and other.feasible_masks == self.feasible_masks
        )

    def __hash__(self):
        return hash((self.m, self.feasible_masks))

    def __repr__(self):
        return f"Explicit(m={self.m}, {len(self.feasible_masks)} feasible sets)"

    def _feasible_mask(self, mask: int) -> bool:
        return mask in self.feasible_masks

    def _value_mask(self, w: np.ndarray, mask: int) -> float:
        best = 0.0
        for fm in self.feasible_masks:
            if fm & ~mask:
                continue
            best = max(best, sum(w[j] for j in mask_items(fm)))
        return float(best)

    def _rank_mask(self, mask: int) -> int:
        return max(
            bin(fm).count("1") for fm in self.feasible_masks if not fm & ~mask
        )

    def _require_matroid(self):
        if not is_matroid(self):
            raise ValueError("rank/spans require a matroid; exchange axiom fails")

    def check_exchange_axiom(self) -> bool:
        for a in self.feasible_masks:
            ca = bin(a).count("1")
            for b in self.feasible_masks:
                if ca <= bin(b).count("1"):
                    continue
                extra = a & ~b
                if not any(
                    (b | (1 << j)) in self.feasible_masks for j in mask_items(extra)
                ):
                    return False
        return True


def is_matroid(s: SetSystem) -> bool:
    """Exchange-axiom check for Explicit families; closed-form kinds always pass."""
    if not isinstance(s, Explicit):
        return True
    if s._matroid is None:
        s._matroid = s.check_exchange_axiom()
    return s._matroid


def _minimal_spanning_sets(s: SetSystem, j: int):
    """Feasible sets avoiding j that span j and have no spanning proper subset."""
    others = [i for i in range(s.m) if i != j]
    jbit = 1 << j
    spanning = []
    for r in range(len(others) + 1):
        for combo in itertools.combinations(others, r):
            mask = as_mask(combo, s.m)
            if not s._feasible_mask(mask):
                continue
            if s._rank_mask(mask | jbit) == s._rank_mask(mask):
                spanning.append(mask)
    spanning_set = set(spanning)
    minimal = []
    for mask in spanning:
        items = mask_items(mask)
        if not any((mask & ~(1 << i)) in spanning_set for i in items):
            minimal.append(mask)
    return minimal


def _max_disjoint_packing(candidates) -> int:
    # depth-first packing over minimal spanning sets, largest-first pruning bound
    candidates = sorted(candidates, key=lambda mask: bin(mask).count("1"))
    best = 0

    def dfs(start: int, used: int, count: int):
        nonlocal best
        best = max(best, count)
        if count + len(candidates) - start <= best:
            return
        for idx in range(start, len(candidates)):
            mask = candidates[idx]
            if mask & used:
                continue
            dfs(idx + 1, used | mask, count + 1)

    dfs(0, 0, 0)
    return best


def disjoint_spanning_number(s: SetSystem) -> int:
    """max_j of the maximum number of pairwise-disjoint feasible sets spanning j."""
    if s.m > RHO_ITEM_LIMIT:
        raise ValueError(f"disjoint_spanning_number limited to m <= {RHO_ITEM_LIMIT}")
    if not is_matroid(s):
        raise ValueError("disjoint_spanning_number requires a matroid")
    return max(
        _max_disjoint_packing(_minimal_spanning_sets(s, j)) for j in range(s.m)
    )


def system_to_json(s: SetSystem) -> dict:
    if isinstance(s, Uniform):
        return {"kind": "uniform", "m": s.m, "k": s.k}
    if isinstance(s, Partition):
        return {
            "kind": "partition",
            "blocks": [list(b) for b in s.blocks],
            "caps": list(s.caps),
        }
    if isinstance(s, Full):
        return {"kind": "full", "m": s.m}
    if isinstance(s, Explicit):
        return {
            "kind": "explicit",
            "m": s.m,
            "feasible": sorted(mask_items(mask) for mask in s.feasible_masks),
        }
    raise TypeError(f"unknown set system type {type(s)!r}")


def system_from_json(obj: dict) -> SetSystem:
    kind = obj.get("kind")
    if kind == "uniform":
        return Uniform(int(obj["m"]), int(obj["k"]))
    if kind == "partition":
        return Partition(tuple(map(tuple, obj["blocks"])), tuple(obj["caps"]))
    if kind == "full":
        return Full(int(obj["m"]))
    if kind == "explicit":
        return Explicit(int(obj["m"]), obj["feasible"])
    raise ValueError(f"unknown set system kind {kind!r}")
