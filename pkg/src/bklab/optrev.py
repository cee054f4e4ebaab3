"""Optimal single-bidder revenue via linear programming.

The LP searches over interim allocation/payment rules for one additive bidder
with independent item values: variables pi_j(v) in [0,1] and p(v) >= 0 for
every product type v, rows for truthfulness between every ordered pair of
types including the opt-out type (report nothing, pay nothing). A small dense
two-phase simplex solves the models; ``opt_rev_single`` adds violated
truthfulness rows lazily, which keeps the tableaus tiny even when the full
model has thousands of rows.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .dist import DiscreteDist

PIVOT_TOL = 1e-11
RATIO_TOL = 1e-9  # smallest pivot magnitude the ratio test will accept
SOLVE_TOL = 1e-9
REFRESH_EVERY = 512  # rebuild the tableau from pristine data this often
STALL_BASE = 100  # iterations without objective progress before Bland mode
PERTURB = 1e-8  # relative rhs anti-degeneracy jitter, stripped on extraction
MAX_TYPES = 4096


@dataclass(frozen=True)
class Constraint:
    """coeffs . x (rel) bound, with rel one of "<=", ">=", "==" """

    coeffs: np.ndarray
    rel: str
    bound: float

    def __post_init__(self):
        object.__setattr__(self, "coeffs", np.asarray(self.coeffs, dtype=float))
        if self.rel not in ("<=", ">=", "=="):
            raise ValueError(f"unknown relation {self.rel!r}")


@dataclass(frozen=True)
class LPModel:
    """Maximize objective . x subject to constraints and per-variable bounds."""

    objective: np.ndarray
    constraints: tuple
    bounds: tuple

    def __post_init__(self):
        c = np.asarray(self.objective, dtype=float)
        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "constraints", tuple(self.constraints))
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        if len(bounds) != len(c):
            raise ValueError("need one (lo, hi) bound per variable")
        for lo, hi in bounds:
            if lo > hi:
                raise ValueError("empty variable bound")
        object.__setattr__(self, "bounds", bounds)
        for row in self.constraints:
            if len(row.coeffs) != len(c):
                raise ValueError("constraint width must match the variable count")


@dataclass(frozen=True)
class LPResult:
    status: str  # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray
    value: float


def _pivot(T: np.ndarray, basis: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    factors = T[:, col].copy()
    factors[row] = 0.0
    T -= np.outer(factors, T[row])
    basis[row] = col


def _price_out(raw_obj: np.ndarray, body: np.ndarray, basis: np.ndarray) -> np.ndarray:
    out = raw_obj.copy()
    coef = out[basis].copy()
    if np.any(coef != 0.0):
        out -= coef @ body
    return out


def _refresh(T: np.ndarray, basis: np.ndarray, T0: np.ndarray) -> bool:
    """Rebuild the tableau for the current basis from the pristine data.

    Long pivot sequences accumulate roundoff in the dense tableau; solving
    B body = T0 restores it to working precision. Returns False when the
    basis matrix is numerically singular (caller keeps the live tableau).
    """
    m = len(basis)
    B = T0[:m, basis]
    try:
        body = np.linalg.solve(B, T0[:m])
    except np.linalg.LinAlgError:
        return False
    if not np.all(np.isfinite(body)):
        return False
    # a usable refactorization must reproduce the identity on basic columns
    if np.abs(body[:, basis] - np.eye(m)).max() > 1e-6:
        return False
    T[:m] = body
    T[-1] = _price_out(T0[-1], body, basis)
    return True


def _simplex_core(T: np.ndarray, basis: np.ndarray, T0: np.ndarray,
                  blocked: np.ndarray, max_iter: int) -> str:
    """Primal simplex on a tableau whose last row is the objective and last
    column the rhs. Dantzig pricing until the objective plateaus, then Bland's
    rule for guaranteed termination; the tableau is refactorized from ``T0``
    periodically and before declaring optimality, so roundoff cannot freeze
    the iteration or corrupt the result. ``blocked`` marks columns that must
    never enter the basis."""
    m = len(basis)
    stall_limit = STALL_BASE + 3 * m
    bland = False
    stall = 0
    best = -np.inf
    it = 0
    refreshed_at = -1
    while it < max_iter:
        value = float(T[-1, -1])
        if value > best + 1e-12:
            best = value
            stall = 0
        elif not bland:
            stall += 1
            if stall > stall_limit:
                bland = True  # degenerate plateau: trade speed for termination
        costs = T[-1, :-1].copy()
        costs[blocked] = 0.0
        costs[basis] = 0.0  # basic columns price to zero; drift must not re-admit them
        if bland:
            neg = np.nonzero(costs < -SOLVE_TOL)[0]
            entering = len(neg) > 0
            col = int(neg[0]) if entering else 0
        else:
            col = int(np.argmin(costs))
            entering = costs[col] < -SOLVE_TOL
        if not entering:
            if _refresh(T, basis, T0):
                costs = T[-1, :-1].copy()
                costs[blocked] = 0.0
                costs[basis] = 0.0
                if float(costs.min()) < -SOLVE_TOL:
                    it += 1  # drift was hiding real work; keep pivoting
                    continue
            return "optimal"
        colvals = T[:m, col]
        positive = colvals > RATIO_TOL
        if not np.any(positive):
            # looks unbounded: refresh to tell noise from structure
            if refreshed_at != it:
                refreshed_at = it
                if _refresh(T, basis, T0):
                    continue
                raise RuntimeError("simplex basis numerically singular")
            small = colvals > PIVOT_TOL
            if not np.any(small):
                return "unbounded"
            positive = small  # refreshed, so real structure: take what exists
        ratios = np.full(m, np.inf)
        ratios[positive] = np.maximum(T[:m, -1][positive], 0.0) / colvals[positive]
        least = float(ratios.min())
        if not np.isfinite(least):
            return "unbounded"
        tied = np.nonzero(ratios <= least + 1e-9 * (1.0 + least))[0]
        if bland:
            # Bland needs the smallest basis index among tied leaving rows
            row = int(tied[np.argmin(basis[tied])])
        else:
            row = int(tied[np.argmax(colvals[tied])])  # largest pivot for stability
        _pivot(T, basis, row, col)
        it += 1
        if it % REFRESH_EVERY == 0:
            _refresh(T, basis, T0)
    raise RuntimeError("simplex iteration limit reached")


def _dual_core(T: np.ndarray, basis: np.ndarray, T0: np.ndarray, max_iter: int) -> str:
    """Dual simplex on a dual-feasible tableau (costs >= 0, rhs may dip below
    zero after new rows are appended). Same safeguards as the primal core:
    plateau-triggered Bland, refactorization before any verdict."""
    m = len(basis)
    stall_limit = STALL_BASE + 3 * m
    bland = False
    stall = 0
    best = np.inf  # dual steps walk the objective down toward the optimum
    it = 0
    refreshed_at = -1
    while it < max_iter:
        value = float(T[-1, -1])
        if value < best - 1e-12:
            best = value
            stall = 0
        elif not bland:
            stall += 1
            if stall > stall_limit:
                bland = True
        rhs = T[:m, -1]
        if bland:
            neg = np.nonzero(rhs < -SOLVE_TOL)[0]
            r = int(neg[np.argmin(basis[neg])]) if len(neg) else -1
        else:
            r = int(np.argmin(rhs))
            if rhs[r] >= -SOLVE_TOL:
                r = -1
        if r < 0:
            if _refresh(T, basis, T0) and float(T[:m, -1].min()) < -SOLVE_TOL:
                it += 1  # drift was hiding real work; keep pivoting
                continue
            return "optimal"
        row = T[r, :-1]
        cand = row < -RATIO_TOL
        cand[basis] = False
        if not np.any(cand):
            # leaving row has no eligible column: refresh to rule out noise
            if refreshed_at != it:
                refreshed_at = it
                if _refresh(T, basis, T0):
                    continue
                raise RuntimeError("simplex basis numerically singular")
            return "infeasible"
        cols = np.nonzero(cand)[0]
        ratios = np.maximum(T[-1, cols], 0.0) / -row[cols]
        least = float(ratios.min())
        tied = ratios <= least + 1e-9 * (1.0 + least)
        if bland:
            col = int(cols[tied].min())
        else:
            sub = cols[tied]
            col = int(sub[np.argmax(-row[sub])])  # largest pivot for stability
        _pivot(T, basis, r, col)
        it += 1
        if it % REFRESH_EVERY == 0:
            _refresh(T, basis, T0)
    raise RuntimeError("simplex iteration limit reached")


class _WarmLp:
    """Incremental `max c.x, A x <= b, x >= 0` with all-nonnegative rhs.

    Rows arrive in batches (cutting planes); the optimal tableau is kept
    across additions and re-optimized by dual simplex, so only the first
    solve pays for a cold start. The working tableau carries a relax-only
    graded rhs perturbation against degenerate cycling; extraction always
    refactorizes against the true data and polishes both feasibility and
    optimality there before reading out the solution."""

    def __init__(self, c: np.ndarray):
        self.c = np.asarray(c, dtype=float)
        self.n = len(self.c)
        self.A = np.zeros((0, self.n))
        self.b = np.zeros(0)
        self.T: Optional[np.ndarray] = None
        self.basis: Optional[np.ndarray] = None

    def _delta(self, start: int, rhs: np.ndarray) -> np.ndarray:
        return PERTURB * (1.0 + start + np.arange(len(rhs))) * (1.0 + np.abs(rhs))

    def _pristine(self, perturbed: bool) -> np.ndarray:
        m = len(self.b)
        T0 = np.zeros((m + 1, self.n + m + 1))
        T0[:m, : self.n] = self.A
        T0[:m, self.n : self.n + m] = np.eye(m)
        T0[:m, -1] = self.b + self._delta(0, self.b) if perturbed else self.b
        T0[-1, : self.n] = -self.c
        return T0

    def add_rows(self, R: np.ndarray, rhs: np.ndarray) -> None:
        R = np.atleast_2d(np.asarray(R, dtype=float))
        rhs = np.asarray(rhs, dtype=float)
        if np.any(rhs < 0):
            raise ValueError("warm-start rows need nonnegative rhs")
        k, m_old = len(R), len(self.b)
        start = m_old
        self.A = np.vstack([self.A, R])
        self.b = np.concatenate([self.b, rhs])
        if self.T is None:
            return
        n, m = self.n, m_old + k
        grown = np.zeros((m + 1, n + m + 1))
        grown[:m_old, : n + m_old] = self.T[:m_old, :-1]
        grown[:m_old, -1] = self.T[:m_old, -1]
        grown[-1, : n + m_old] = self.T[-1, :-1]
        grown[-1, -1] = self.T[-1, -1]
        fresh = np.zeros((k, n + m + 1))
        fresh[:, :n] = R
        fresh[:, n + m_old : n + m] = np.eye(k)
        fresh[:, -1] = rhs + self._delta(start, rhs)
        # express the new rows in the current basis before adopting them
        fresh -= fresh[:, self.basis] @ grown[:m_old]
        grown[m_old:m] = fresh
        self.T = grown
        self.basis = np.concatenate([self.basis, n + m_old + np.arange(k)])

    def solve(self, polish: bool = True) -> Tuple[np.ndarray, float]:
        """Re-optimize and read out (x, value).

        With ``polish`` the solution is settled on the true (unperturbed)
        data, which costs a refactorization; intermediate cutting rounds can
        skip it because any row violated at the jittered optimum is a valid
        cut for the true problem too.
        """
        m = len(self.b)
        max_iter = 200 * (m + self.n + 10)
        blocked = np.zeros(self.n + m, dtype=bool)
        pert = self._pristine(True)
        if self.T is None:
            self.T = pert.copy()
            self.basis = self.n + np.arange(m)
            status = _simplex_core(self.T, self.basis, pert, blocked, max_iter)
        else:
            status = _dual_core(self.T, self.basis, pert, max_iter)
        if status != "optimal":
            raise RuntimeError(f"revenue LP came back {status}")
        if polish:
            true0 = self._pristine(False)
            for _ in range(4):  # strip the perturbation, then settle there
                if not _refresh(self.T, self.basis, true0):
                    raise RuntimeError("simplex basis numerically singular")
                if float(self.T[:m, -1].min()) < -SOLVE_TOL:
                    status = _dual_core(self.T, self.basis, true0, max_iter)
                elif float(self.T[-1, :-1].min()) < -SOLVE_TOL:
                    status = _simplex_core(self.T, self.basis, true0, blocked, max_iter)
                else:
                    break
                if status != "optimal":
                    raise RuntimeError(f"revenue LP came back {status}")
        x = np.zeros(self.n + m)
        x[self.basis] = np.maximum(self.T[:m, -1], 0.0)
        return x[: self.n], float(x[: self.n] @ self.c)


def _solve_standard(c: np.ndarray, A: np.ndarray, b: np.ndarray) -> LPResult:
    """Maximize c.x s.t. A x <= b, x >= 0. Two-phase dense tableau."""
    m, n = A.shape
    if m == 0:
        if np.any(c > SOLVE_TOL):
            return LPResult("unbounded", np.zeros(n), float("inf"))
        return LPResult("optimal", np.zeros(n), 0.0)
    flip = b < 0  # rows needing an artificial after sign flip
    A = np.where(flip[:, None], -A, A)
    b = np.where(flip, -b, b)
    slack_sign = np.where(flip, -1.0, 1.0)
    art_rows = np.nonzero(flip)[0]
    n_art = len(art_rows)
    total = n + m + n_art
    base = np.zeros((m + 1, total + 1))
    base[:m, :n] = A
    base[:m, n : n + m] = np.diag(slack_sign)
    base[:m, -1] = b
    basis = n + np.arange(m)
    art_cols = n + m + np.arange(n_art)
    for k, i in enumerate(art_rows):
        base[i, n + m + k] = 1.0
        basis[i] = n + m + k
    max_iter = 200 * (m + n + 10)
    blocked = np.zeros(total, dtype=bool)
    # iterate on a graded-perturbed rhs so degenerate vertices cannot cycle;
    # each row is perturbed in the relaxing direction only, and the jitter is
    # stripped by refactorizing against the true rhs before extraction
    pert = base.copy()
    delta = PERTURB * (1.0 + np.arange(m)) / m * (1.0 + np.abs(b))
    delta *= slack_sign
    np.maximum(pert[:m, -1] + delta, 0.0, out=pert[:m, -1])
    T = pert.copy()
    if n_art:
        T0 = pert.copy()
        T0[-1, art_cols] = 1.0  # phase 1: minimize total artificial mass
        T[-1] = _price_out(T0[-1], T[:m], basis)
        status = _simplex_core(T, basis, T0, blocked, max_iter)
        if status != "optimal" or T[-1, -1] < -1e-7:
            return LPResult("infeasible", np.zeros(n), float("nan"))
        for i in range(m):  # clear leftover degenerate artificials where possible
            if basis[i] in art_cols:
                pivots = np.nonzero(np.abs(T[i, : n + m]) > PIVOT_TOL)[0]
                if len(pivots):
                    _pivot(T, basis, i, int(pivots[0]))
        blocked[art_cols] = True
        np.maximum(T[: m, -1], 0.0, out=T[: m, -1])
    T0 = pert.copy()
    T0[-1, :n] = -c
    T[-1] = _price_out(T0[-1], T[:m], basis)
    status = _simplex_core(T, basis, T0, blocked, max_iter)
    if status == "unbounded":
        return LPResult("unbounded", np.zeros(n), float("inf"))
    true0 = base.copy()
    true0[-1, :n] = -c
    if not _refresh(T, basis, true0):
        raise RuntimeError("simplex basis numerically singular")
    x = np.zeros(total)
    x[basis] = np.maximum(T[:m, -1], 0.0)
    return LPResult("optimal", x[:n], float(x[:n] @ c))


def solve_lp(model: LPModel) -> LPResult:
    """Solve an LPModel with the built-in simplex.

    Variables are shifted/split internally so the core only sees x >= 0;
    finite upper bounds become rows.
    """
    c = model.objective
    n = len(c)
    # x_j = y_j + lo_j for finite lo, or y+ - y- when lo = -inf
    cols = []  # (var, sign, shift) per core column
    for j, (lo, hi) in enumerate(model.bounds):
        if np.isinf(lo) and lo < 0:
            cols.append((j, 1.0, 0.0))
            cols.append((j, -1.0, 0.0))
        else:
            cols.append((j, 1.0, lo))
    shift = np.zeros(n)
    for j, sign, off in cols:
        if sign > 0:
            shift[j] += off
    widths = len(cols)
    core_c = np.array([c[j] * sign for j, sign, _ in cols])
    rows = []
    rhs = []

    def add_row(coeffs: np.ndarray, bound: float) -> None:
        row = np.array([coeffs[j] * sign for j, sign, _ in cols])
        rows.append(row)
        rhs.append(bound - float(coeffs @ shift))

    for con in model.constraints:
        if con.rel in ("<=", "=="):
            add_row(con.coeffs, con.bound)
        if con.rel in (">=", "=="):
            add_row(-con.coeffs, -con.bound)
    for j, (lo, hi) in enumerate(model.bounds):
        if np.isfinite(hi):
            e = np.zeros(n)
            e[j] = 1.0
            add_row(e, hi)
    A = np.array(rows) if rows else np.zeros((0, widths))
    b = np.array(rhs)
    res = _solve_standard(core_c, A, b)
    if res.status != "optimal":
        return LPResult(res.status, np.full(n, np.nan), res.value)
    x = shift.copy()
    for (j, sign, _), y in zip(cols, res.x):
        x[j] += sign * y
    return LPResult("optimal", x, float(c @ x))


# ---------------------------------------------------------------------------
# the single-bidder revenue LP


@dataclass(frozen=True)
class ReducedForm:
    """Interim menu for one bidder: per type, item probabilities and a price."""

    types: np.ndarray  # (|T|, m) value vectors, lexicographic over item supports
    probs: np.ndarray  # (|T|,)
    alloc: np.ndarray  # (|T|, m)
    price: np.ndarray  # (|T|,)

    def __post_init__(self):
        for name in ("types", "probs", "alloc", "price"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))

    def expected_revenue(self) -> float:
        return float(self.probs @ self.price)


def type_space(dists: Sequence[DiscreteDist]):
    """Product types and their probabilities, lexicographic in the item order."""
    values = [d.values for d in dists]
    probs = [d.probs for d in dists]
    count = int(np.prod([len(v) for v in values]))
    if count > MAX_TYPES:
        raise ValueError("type space too large")
    types = np.array(list(itertools.product(*values)), dtype=float)
    weights = np.array(
        [float(np.prod(combo)) for combo in itertools.product(*probs)]
    )
    return types, weights


def build_single_bidder_lp(dists: Sequence[DiscreteDist]) -> LPModel:
    """Revenue LP for one additive bidder over independent item values.

    Variable layout: pi_j of type t at column t*m + j, then p of type t at
    column |T|*m + t. One row per ordered pair of distinct types in T plus
    the opt-out type (zero allocation, zero payment) on either side.
    """
    types, weights = type_space(dists)
    tcount, m = types.shape
    n_var = tcount * m + tcount

    def utility_row(truth: int, report) -> np.ndarray:
        # u(report | truth) as a linear form in the variables
        row = np.zeros(n_var)
        if report is not None:
            row[report * m : report * m + m] = types[truth]
            row[tcount * m + report] = -1.0
        return row

    rows = []
    labels = list(range(tcount)) + [None]
    for truth in range(tcount):
        own = utility_row(truth, truth)
        for report in labels:
            if report == truth:
                continue
            # deviation utility must not beat truth: (dev - own) . x <= 0
            rows.append(Constraint(utility_row(truth, report) - own, "<=", 0.0))
    for report in range(tcount):  # opt-out type must not gain: p(report) >= 0
        row = np.zeros(n_var)
        row[tcount * m + report] = -1.0
        rows.append(Constraint(row, "<=", 0.0))
    objective = np.zeros(n_var)
    objective[tcount * m :] = weights
    bounds = [(0.0, 1.0)] * (tcount * m) + [(0.0, np.inf)] * tcount
    return LPModel(objective, tuple(rows), tuple(bounds))


def _price_row(n_var: int, tcount: int, m: int, t: int) -> np.ndarray:
    row = np.zeros(n_var)
    row[tcount * m + t] = 1.0
    return row


def opt_rev_single(dists: Sequence[DiscreteDist]):
    """Optimal truthful revenue for one additive bidder. Returns (value, menu).

    Solves the LP of ``build_single_bidder_lp`` by lazy row generation: start
    from the participation rows, then repeatedly add the most violated
    truthfulness rows until none are violated beyond 1e-10.
    """
    types, weights = type_space(dists)
    tcount, m = types.shape
    n_var = tcount * m + tcount
    objective = np.zeros(n_var)
    objective[tcount * m :] = weights

    def pair_coeffs(truth: int, report) -> np.ndarray:
        row = np.zeros(n_var)
        row[truth * m : truth * m + m] -= types[truth]
        row[tcount * m + truth] += 1.0
        if report is not None:
            row[report * m : report * m + m] += types[truth]
            row[tcount * m + report] -= 1.0
        return row

    state = _WarmLp(objective)
    active = {(t, None) for t in range(tcount)}
    seed_rows = [pair_coeffs(t, None) for t in range(tcount)]
    seed_rows.extend(np.eye(n_var)[j] for j in range(tcount * m))  # pi <= 1
    # one-step item misreports carry most of the binding truthfulness rows
    sizes = [d.size for d in dists]
    strides = np.array([int(np.prod(sizes[j + 1 :])) for j in range(m)])
    for t, multi in enumerate(itertools.product(*[range(s) for s in sizes])):
        for j in range(m):
            for r in (t - strides[j], t + strides[j]):
                near = (multi[j] > 0) if r < t else (multi[j] < sizes[j] - 1)
                if near and (t, int(r)) not in active:
                    active.add((t, int(r)))
                    seed_rows.append(pair_coeffs(t, int(r)))
    rhs0 = np.zeros(len(seed_rows))
    rhs0[tcount : tcount + tcount * m] = 1.0
    state.add_rows(np.array(seed_rows), rhs0)
    polish = False
    for _ in range(300):
        x, value = state.solve(polish=polish)
        alloc = x[: tcount * m].reshape(tcount, m)
        price = x[tcount * m :]
        own = (alloc * types).sum(axis=1) - price
        gain = types @ alloc.T - price[None, :]  # gain[truth, report]
        np.fill_diagonal(gain, -np.inf)
        slack = gain - own[:, None]
        worst = max(float(slack.max()), float((-own).max()))
        if worst <= 1e-10:
            if polish:
                return float(value), ReducedForm(types, weights, alloc, price)
            polish = True  # jittered data looks done: settle on true data
            continue
        fresh = []
        floor = max(1e-10, 1e-3 * worst)
        for t in range(tcount):
            order = np.argsort(slack[t])[::-1]
            for r in order[:8]:
                if slack[t, r] > floor and (t, int(r)) not in active:
                    active.add((t, int(r)))
                    fresh.append(pair_coeffs(t, int(r)))
        if not fresh:
            if not polish:
                polish = True  # judge the residual on true data before bailing
                continue
            if worst <= SOLVE_TOL:  # residual is solver tolerance, not a cut
                return float(value), ReducedForm(types, weights, alloc, price)
            raise RuntimeError(f"revenue LP stalled with residual {worst:.3e}")
        polish = False
        state.add_rows(np.array(fresh), np.zeros(len(fresh)))
    raise RuntimeError("row generation failed to converge")


def verify_bic(rf: ReducedForm, atol: float = SOLVE_TOL) -> bool:
    """Check a menu for truthfulness, participation, and box feasibility."""
    if np.any(rf.alloc < -atol) or np.any(rf.alloc > 1 + atol):
        return False
    if np.any(rf.price < -atol):
        return False
    own = (rf.alloc * rf.types).sum(axis=1) - rf.price
    if np.any(own < -atol):
        return False
    gain = rf.types @ rf.alloc.T - rf.price[None, :]
    np.fill_diagonal(gain, -np.inf)
    return bool(np.all(gain - own[:, None] <= atol))


def lagrangian_value(probs, virtuals) -> float:
    """Upper bound from a virtual-value transform: sum_v f(v) sum_j Phi_j(v)+.

    Any transform coming from a conservation-respecting flow makes this an
    upper bound on the optimal revenue.
    """
    f = np.asarray(probs, dtype=float)
    phi = np.asarray(virtuals, dtype=float)
    return float(f @ np.clip(phi, 0.0, None).sum(axis=1))
