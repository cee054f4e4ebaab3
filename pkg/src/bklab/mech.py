"""Auction mechanisms: winner determination, payments, revenue certificates.

Single-item formats (second price with reserves, the threshold auction behind
the per-item revenue bound) and multi-item VCG variants (additive, constrained
by a per-bidder set system, matching-restricted). Every tie-break is
deterministic: the highest bid wins with the smallest index first, and welfare
ties among assignment vectors resolve to the lexicographically smallest
vector, with 0 standing for "unassigned".
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .dist import DiscreteDist, Distribution, EqualRevenueCapped, ShiftedEqualRevenue
from .setsys import Full, SetSystem, system_from_json, system_to_json

ASSIGNMENT_LIMIT = 10_000_000
# above this many assignment vectors, vcg_ud switches to an assignment solver
EXHAUSTIVE_MATCHING_LIMIT = 200_000


@dataclass(frozen=True)
class Profile:
    """A nonnegative value matrix plus one feasibility constraint per bidder."""

    values: np.ndarray
    constraints: tuple

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("values must be an n x m matrix")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("values must be finite and nonnegative")
        object.__setattr__(self, "values", v)
        cs = tuple(self.constraints)
        if len(cs) != v.shape[0]:
            raise ValueError("need one constraint per bidder")
        for c in cs:
            if c.m != v.shape[1]:
                raise ValueError("constraint item count must match the value matrix")
        object.__setattr__(self, "constraints", cs)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class Outcome:
    """Assignment per item (None = unsold), payment per bidder, total welfare."""

    assignment: tuple
    payments: np.ndarray
    welfare: float

    def __post_init__(self):
        object.__setattr__(self, "assignment", tuple(self.assignment))
        object.__setattr__(self, "payments", np.asarray(self.payments, dtype=float))

    def revenue(self) -> float:
        return float(self.payments.sum())

    def items_of(self, i: int) -> tuple:
        return tuple(j for j, a in enumerate(self.assignment) if a == i)


def profile_to_json(p: Profile) -> dict:
    return {
        "values": [[float(x) for x in row] for row in p.values],
        "constraints": [system_to_json(c) for c in p.constraints],
    }


def profile_from_json(obj: dict) -> Profile:
    return Profile(
        np.asarray(obj["values"], dtype=float),
        tuple(system_from_json(c) for c in obj["constraints"]),
    )


def outcome_to_json(o: Outcome) -> dict:
    return {
        "assignment": [None if a is None else int(a) for a in o.assignment],
        "payments": [float(x) for x in o.payments],
        "welfare": float(o.welfare),
        "revenue": o.revenue(),
    }


# ---------------------------------------------------------------------------
# single-item formats


def spa_lazy(bids, reserves) -> Outcome:
    """Second-price auction with bidder-specific lazy reserves.

    The highest bidder (smallest index on ties) is selected first and wins iff
    their bid meets their own reserve; the price is the larger of the
    second-highest bid and the winner's reserve. With a single bidder the
    second-highest bid is taken to be 0.
    """
    b = np.asarray(bids, dtype=float)
    r = np.asarray(reserves, dtype=float)
    if b.ndim != 1 or b.shape != r.shape:
        raise ValueError("bids and reserves must be 1-d arrays of the same length")
    win = int(np.argmax(b))
    payments = np.zeros(len(b))
    if b[win] < r[win]:
        return Outcome((None,), payments, 0.0)
    second = float(np.partition(b, -2)[-2]) if len(b) >= 2 else 0.0
    payments[win] = max(second, float(r[win]))
    return Outcome((win,), payments, float(b[win]))


def _check_support(b: np.ndarray, d: Distribution) -> None:
    if isinstance(d, DiscreteDist):
        for x in b:
            d.support_index(float(x))
    elif isinstance(d, EqualRevenueCapped):
        if np.any(b < 1.0) or np.any(b > d.k):
            raise ValueError("bid outside the support")
    elif isinstance(d, ShiftedEqualRevenue):
        if np.any(b < d.k):
            raise ValueError("bid outside the support")


def myerson_single(bids, d: Distribution) -> Outcome:
    """Second-price auction with the monopoly reserve applied to everyone.

    Revenue-optimal for iid regular bidders up to how value ties are broken;
    the smallest-index rule here keeps it deterministic.
    """
    if not d.is_regular():
        raise ValueError("requires a regular distribution")
    b = np.asarray(bids, dtype=float)
    _check_support(b, d)
    return spa_lazy(b, np.full(len(b), d.monopoly_reserve()))


def mechanism_m(bids, j_star: int, d: Distribution) -> Outcome:
    """Second-price auction where only bidder ``j_star`` faces the reserve.

    The reserve is the monopoly reserve of ``d``; every other bidder is free.
    """
    if not d.is_regular():
        raise ValueError("requires a regular distribution")
    b = np.asarray(bids, dtype=float)
    if not 0 <= j_star < len(b):
        raise ValueError("j_star out of range")
    r = np.zeros(len(b))
    r[j_star] = d.monopoly_reserve()
    return spa_lazy(b, r)


# ---------------------------------------------------------------------------
# multi-item VCG


def vcg_additive(p: Profile) -> Outcome:
    """Per-item second-price auction, the welfare optimum for additive bidders.

    Items whose best value is 0 stay unsold, matching the lexicographic
    convention of the exhaustive solver.
    """
    if any(not isinstance(c, Full) for c in p.constraints):
        raise ValueError("additive winner determination needs Full constraints")
    v = p.values
    winner = np.argmax(v, axis=0)
    top = v[winner, np.arange(p.m)]
    second = np.partition(v, -2, axis=0)[-2] if p.n >= 2 else np.zeros(p.m)
    assignment = tuple(int(w) if top[j] > 0 else None for j, w in enumerate(winner))
    payments = np.zeros(p.n)
    for j, a in enumerate(assignment):
        if a is not None:
            payments[a] += second[j]
    return Outcome(assignment, payments, float(top.sum()))


class ConstrainedVcg:
    """Exhaustive VCG over assignment vectors, reusable across value profiles.

    Assignment vectors live in {0,..,n}^m with 0 meaning "unassigned" and are
    enumerated in lexicographic order, so the first welfare maximizer found is
    the lexicographically smallest. That never hands a bidder an item adding
    no value (dropping it is lexicographically smaller at equal welfare), so
    the winning sets are feasible outright.
    """

    def __init__(self, constraints: Sequence[SetSystem], matching_only: bool = False):
        cs = tuple(constraints)
        if not cs:
            raise ValueError("need at least one bidder")
        m = cs[0].m
        if any(c.m != m for c in cs):
            raise ValueError("constraints must agree on the item count")
        n = len(cs)
        if (n + 1) ** m > ASSIGNMENT_LIMIT:
            raise ValueError("assignment space too large for exhaustive search")
        self.constraints = cs
        self.n = n
        self.m = m
        grids = np.meshgrid(*[np.arange(n + 1)] * m, indexing="ij")
        rows = np.stack([g.ravel() for g in grids], axis=1).astype(np.int64)
        if matching_only:
            counts = (rows[:, :, None] == np.arange(1, n + 1)).sum(axis=1)
            rows = rows[(counts <= 1).all(axis=1)]
        self.rows = rows
        bit = 1 << np.arange(m, dtype=np.int64)
        self.row_masks = np.stack(
            [((rows == i + 1) * bit).sum(axis=1) for i in range(n)], axis=1
        )
        self.rows_excl = [
            np.nonzero(~(rows == i + 1).any(axis=1))[0] for i in range(n)
        ]
        # per bidder: feasible sets as bit columns plus mask -> subset incidence
        self._fm_bits = []
        self._inc = []
        all_masks = np.arange(1 << m, dtype=np.int64)
        for c in cs:
            fm = np.array([s for s in all_masks if c._feasible_mask(int(s))])
            bits = ((fm[None, :] >> np.arange(m)[:, None]) & 1).astype(float)
            self._fm_bits.append(bits)
            self._inc.append((fm[None, :] & ~all_masks[:, None]) == 0)

    def _tables(self, values: np.ndarray) -> list:
        # values (B, n, m) -> per bidder (B, 2^m) best-feasible-subset values
        out = []
        for i in range(self.n):
            ss = values[:, i, :] @ self._fm_bits[i]
            tab = np.empty((values.shape[0], 1 << self.m))
            for mask in range(1 << self.m):
                tab[:, mask] = ss[:, self._inc[i][mask]].max(axis=1)
            out.append(tab)
        return out

    def _welfare(self, tables: list) -> np.ndarray:
        w = tables[0][:, self.row_masks[:, 0]]
        for i in range(1, self.n):
            w = w + tables[i][:, self.row_masks[:, i]]
        return w

    def outcome(self, values) -> Outcome:
        v = np.asarray(values, dtype=float)[None]
        tables = self._tables(v)
        welf = self._welfare(tables)[0]
        best = int(np.argmax(welf))
        w_star = float(welf[best])
        payments = np.zeros(self.n)
        for i in range(self.n):
            w_noi = float(welf[self.rows_excl[i]].max())
            v_is = float(tables[i][0, self.row_masks[best, i]])
            payments[i] = max(0.0, w_noi - (w_star - v_is))
        assignment = tuple(int(a) - 1 if a else None for a in self.rows[best])
        return Outcome(assignment, payments, w_star)

    def revenue_batch(self, values) -> np.ndarray:
        """Total VCG revenue for each profile in a (B, n, m) batch."""
        v = np.asarray(values, dtype=float)
        tables = self._tables(v)
        welf = self._welfare(tables)
        best = np.argmax(welf, axis=1)
        w_star = np.take_along_axis(welf, best[:, None], axis=1)[:, 0]
        rev = np.zeros(len(v))
        rows_idx = np.arange(len(v))
        for i in range(self.n):
            w_noi = welf[:, self.rows_excl[i]].max(axis=1)
            v_is = tables[i][rows_idx, self.row_masks[best, i]]
            rev += np.maximum(0.0, w_noi - (w_star - v_is))
        return rev


def vcg_constrained(p: Profile) -> Outcome:
    """VCG over every constraint-respecting assignment of items to bidders."""
    return ConstrainedVcg(p.constraints).outcome(p.values)


def vcg_ud(p: Profile) -> Outcome:
    """VCG restricted to matchings: each bidder receives at most one item.

    The welfare of a matching is the sum of matched values. Small instances
    are solved exhaustively with the lexicographic tie-break; larger ones go
    through an assignment solver, which preserves welfare, payments and
    revenue but may pick a different tied matching.
    """
    v = p.values
    n, m = v.shape
    if (n + 1) ** m <= EXHAUSTIVE_MATCHING_LIMIT:
        return ConstrainedVcg([Full(m)] * n, matching_only=True).outcome(v)
    return _matching_vcg_lsa(v)


def _matching_vcg_lsa(v: np.ndarray) -> Outcome:
    from scipy.optimize import linear_sum_assignment

    n, m = v.shape

    def solve(rows):
        sub = v[rows]
        ri, ci = linear_sum_assignment(sub, maximize=True)
        pairs = [(rows[a], int(b)) for a, b in zip(ri, ci) if sub[a, b] > 0]
        return pairs, float(sum(v[i, j] for i, j in pairs))

    pairs, w_star = solve(list(range(n)))
    assignment: list = [None] * m
    won = {}
    for i, j in pairs:
        assignment[j] = i
        won[i] = float(v[i, j])
    payments = np.zeros(n)
    for i, gain in won.items():
        _, w_noi = solve([a for a in range(n) if a != i])
        payments[i] = max(0.0, w_noi - (w_star - gain))
    return Outcome(tuple(assignment), payments, w_star)


# ---------------------------------------------------------------------------
# the item-j threshold auction


def _spj_groups(bids: np.ndarray, n: int, m: int):
    if bids.ndim != 1 or len(bids) != 2 * n + 2 * m - 2:
        raise ValueError("expected 2n + 2m - 2 bids")
    return bids[:n], bids[n : n + m - 1], bids[n + m - 1 :]


def spj_winner(bids, d_j: Distribution, n: int, m: int) -> int:
    """Winner index under the item-j allocation rule.

    The first n bids compete as regulars, the next m-1 act as stand-ins for
    the other items, and the last n+m-1 form the fresh reference crowd. The
    best stand-in beats the regulars outright; otherwise the top regular wins
    iff their floor-extended virtual value strictly exceeds the second-highest
    reference bid, and the top reference bidder takes the remaining case.
    """
    b = np.asarray(bids, dtype=float)
    u, ext, w = _spj_groups(b, n, m)
    u_idx = int(np.argmax(u))
    if len(ext) and ext.max() > u[u_idx]:
        return n + int(np.argmax(ext))
    w2 = float(np.partition(w, -2)[-2]) if len(w) >= 2 else 0.0
    if d_j.virtual_floor(float(u[u_idx])) > w2:
        return u_idx
    return n + m - 1 + int(np.argmax(w))


def _phi_candidates(d: Distribution) -> tuple:
    if isinstance(d, DiscreteDist):
        return tuple(float(x) for x in d.values)
    if isinstance(d, EqualRevenueCapped):
        return (1.0, d.k)
    if isinstance(d, ShiftedEqualRevenue):
        return (d.k,)
    return ()


def sp_j(bids, j: int, d_j: Distribution, n: int, m: int) -> Outcome:
    """Single-item auction backing the per-item revenue bound.

    Allocates by ``spj_winner`` (the item always sells) and charges the winner
    their critical bid, so truthful bidding is dominant in every group.
    """
    if not d_j.is_regular():
        raise ValueError("requires a regular distribution")
    if not 0 <= j < m:
        raise ValueError("item index out of range")
    b = np.asarray(bids, dtype=float)

    def rule(bb):
        return spj_winner(bb, d_j, n, m)

    win = rule(b)
    pay = critical_payment(rule, b, win, candidates=_phi_candidates(d_j))
    payments = np.zeros(len(b))
    payments[win] = pay
    return Outcome((win,), payments, float(b[win]))


def critical_payment(
    rule: Callable,
    bids,
    winner: int,
    candidates=(),
    continuous: bool = False,
    tol: float = 1e-9,
) -> float:
    """Infimum bid at which ``winner`` still wins under ``rule``.

    ``rule`` maps a bid vector to the winning index. The scan assumes the rule
    is monotone in the winner's own bid and that decision boundaries lie on
    the candidate grid (0, the other bids, plus any supplied thresholds);
    with ``continuous=True`` the bracketing interval is bisected down to
    ``tol`` instead. Raises if the winning region is not upward-closed on the
    scan grid.
    """
    b = np.asarray(bids, dtype=float).copy()
    if rule(b) != winner:
        raise ValueError("winner does not win at the submitted bids")

    def wins(t: float) -> bool:
        trial = b.copy()
        trial[winner] = t
        return rule(trial) == winner

    others = np.delete(b, winner)
    cand = np.unique(
        np.concatenate([[0.0], others, np.asarray(candidates, dtype=float), [b[winner]]])
    )
    pts = []
    for i, c in enumerate(cand):
        pts.append(float(c))
        hi = float(cand[i + 1]) if i + 1 < len(cand) else float(c) + 1.0
        pts.append((float(c) + hi) / 2.0)
    flags = [wins(t) for t in pts]
    if not any(flags):
        raise ValueError("rule never selects the winner on the scan grid")
    first = flags.index(True)
    if not all(flags[first:]):
        raise ValueError("winning region is not upward-closed in the winner's bid")
    if continuous and first > 0:
        lo, hi = pts[first - 1], pts[first]
        while hi - lo > tol:
            mid = (lo + hi) / 2.0
            if wins(mid):
                hi = mid
            else:
                lo = mid
        return max(0.0, hi)
    if first % 2 == 0:
        return float(pts[first])  # the boundary candidate itself wins
    return float(pts[first - 1])  # open boundary: infimum is the candidate below


# ---------------------------------------------------------------------------
# revenue certificates


def vcg_lower_bound_cert(p: Profile, o: Outcome) -> float:
    """Sum over items of the best losing value.

    Lower-bounds VCG revenue when every bidder shares the same constraint:
    each winner must at least beat the displaced externality.
    """
    if any(c != p.constraints[0] for c in p.constraints[1:]):
        raise ValueError("requires identical constraints")
    losers = [i for i in range(p.n) if not o.items_of(i)]
    if not losers:
        return 0.0
    return float(p.values[losers].max(axis=0).sum())


def r_chain(S, values):
    """Greedy price chain over the bidder set S.

    Item by item, the best remaining bidder is recorded and removed; ties
    follow ascending bidder id. Returns (winners, prices).
    """
    v = np.asarray(values, dtype=float)
    order = sorted(S)
    m = v.shape[1]
    if len(order) < m:
        raise ValueError("need at least one bidder per item")
    if len(set(order)) != len(order):
        raise ValueError("duplicate bidders in S")
    winners = []
    prices = np.zeros(m)
    remaining = list(order)
    for j in range(m):
        col = v[remaining, j]
        pick = int(np.argmax(col))
        winners.append(remaining[pick])
        prices[j] = col[pick]
        remaining.pop(pick)
    return tuple(winners), prices


def vcg_asym_lower_bound_cert(p: Profile, o: Outcome) -> float:
    """Chain certificate built from the bidders left empty-handed.

    Needs n >= 2m so that at least m losers remain to price every item.
    """
    if p.n < 2 * p.m:
        raise ValueError("requires n >= 2m")
    losers = [i for i in range(p.n) if not o.items_of(i)]
    _, prices = r_chain(losers, p.values)
    return float(prices.sum())


# ---------------------------------------------------------------------------
# exact expected revenues for iid discrete bidders


def _order_stat_tails(d: DiscreteDist, n: int):
    # P(max >= v_t) and P(second-highest >= v_t) at every atom
    below = np.concatenate([[0.0], d._cum[:-1]])
    p_max = 1.0 - below**n
    p_second = 1.0 - below**n - n * (1.0 - below) * below ** (n - 1)
    return p_max, p_second


def exact_second_price_revenue(d: DiscreteDist, n: int) -> float:
    """E[second-highest of n iid draws], the reserve-free auction revenue."""
    if n < 2:
        return 0.0
    _, p2 = _order_stat_tails(d, n)
    gaps = np.diff(d.values, prepend=0.0)
    return float(gaps @ p2)


def exact_myerson_revenue(d: DiscreteDist, n: int) -> float:
    """Expected revenue of ``myerson_single`` under n iid draws.

    Uses order-statistic tails: the winner pays the reserve plus the part of
    the second-highest value above it, whenever the maximum clears the
    reserve.
    """
    if not d.is_regular():
        raise ValueError("requires a regular distribution")
    r = d.monopoly_reserve()
    p_max, p2 = _order_stat_tails(d, n)
    i_r = d.support_index(r)
    rev = r * p_max[i_r]
    for t in range(i_r + 1, len(d.values)):
        rev += (d.values[t] - max(d.values[t - 1], r)) * p2[t]
    return float(rev)


def exact_additive_vcg_revenue(dists: Sequence[DiscreteDist], n: int) -> float:
    """Additive-VCG revenue: the per-item second-price revenues summed."""
    return float(sum(exact_second_price_revenue(d, n) for d in dists))


def additive_item_prices(values):
    """Per-item winner and clearing price across a (B, n, m) batch."""
    v = np.asarray(values, dtype=float)
    winner = np.argmax(v, axis=1)
    if v.shape[1] >= 2:
        price = np.partition(v, -2, axis=1)[:, -2, :]
    else:
        price = np.zeros((v.shape[0], v.shape[2]))
    return winner, price


def vcg_additive_revenue_batch(values) -> np.ndarray:
    """Total additive-VCG revenue for each profile in a (B, n, m) batch."""
    _, price = additive_item_prices(values)
    return price.sum(axis=1)
