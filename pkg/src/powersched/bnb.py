"""Branch-and-bound over per-link rate vectors.

The search space is the box between zero and the interference-free (utopia)
rates.  Boxes are kept in a max-heap on their utility upper bound; each
iteration splits the best box along its longest side, tightens both halves
against the incumbent (``reduce``), and shrinks their bounds by bisecting
along the diagonal towards the feasibility frontier (``bound``).

Feasibility in rate space is downward closed: lowering any target rate, or
switching a link off, never makes a feasible target infeasible.  Every pruning
rule below relies on that.
"""

from __future__ import annotations

import heapq
import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from .feasibility import can_coexist, power_jacobian, solve_powers, solve_powers_batch
from .rate_model import (
    RateCurve,
    UtilityConfig,
    rate_from_sinr,
    sinr_vector,
    system_utility,
    utility,
    utility_inverse,
)

__all__ = [
    "Box",
    "CutPool",
    "SolverState",
    "SolverResult",
    "TraceRow",
    "DegenerateBoxError",
    "OPTIMAL",
    "ITERATION_LIMIT",
    "utopia_point",
    "initialize",
    "branch",
    "reduce",
    "bound",
    "solve",
]

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
ITERATION_LIMIT = "iteration_limit"

# boxes thinner than this on every side are bounded by U(q) and never split
MIN_SIDE = 1e-6
_MAX_BISECTIONS = 200
# frontier probes per segment per round, tangents per utility term, LP rounds per box
_PROBES = 8
_TANGENTS = 12
_CUT_ROUNDS = 4
# slack on log-power cuts; covers the feasibility test's own tolerance
_CUT_SLACK = 1e-8
# cuts from constraints this far below their limit (log scale) are too weak to keep
_CUT_KEEP = -0.1


class DegenerateBoxError(ValueError):
    pass


@dataclass
class Box:
    p: np.ndarray
    q: np.ndarray
    u_max: float
    insertion_id: int = 0

    @property
    def widths(self) -> np.ndarray:
        return self.q - self.p

    def contains(self, r, atol: float = 0.0) -> bool:
        r = np.asarray(r)
        return bool(np.all(r >= self.p - atol) and np.all(r <= self.q + atol))


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    live_boxes: int
    u_best_eqrate: float
    u_max_eqrate: float


@dataclass
class SolverState:
    instance: object
    curve: RateCurve
    config: UtilityConfig
    epsilon: float
    best_rates: np.ndarray
    best_powers: np.ndarray
    u_best: float
    heap: list = field(default_factory=list)
    iterations: int = 0
    status: str | None = None
    feasibility_checks: int = 0
    trace: list[TraceRow] = field(default_factory=list)
    tighten: bool = True
    cuts: CutPool | None = None
    _ids: itertools.count = field(default_factory=itertools.count)

    def eq(self, u: float) -> float:
        """Equivalent rate of utility ``u``."""
        return utility_inverse(u, self.config.alpha, self.config.rate_floor)

    def next_id(self) -> int:
        return next(self._ids)

    def push(self, box: Box) -> None:
        heapq.heappush(self.heap, (-box.u_max, box.insertion_id, box))

    @property
    def boxes(self) -> list[Box]:
        return [entry[2] for entry in self.heap]

    @property
    def upper_bound(self) -> float:
        """Best utility any unexplored point could still reach."""
        if not self.heap:
            return self.u_best
        return max(self.u_best, self.heap[0][2].u_max)

    def check(self, rates):
        self.feasibility_checks += 1
        return solve_powers(rates, self.instance, self.curve)

    def check_batch(self, rates):
        rates = np.atleast_2d(rates)
        self.feasibility_checks += rates.shape[0]
        return solve_powers_batch(rates, self.instance, self.curve)

    def offer(self, rates, powers) -> bool:
        u = system_utility(rates, self.config)
        if u > self.u_best:
            self.best_rates = np.array(rates, dtype=float)
            self.best_powers = np.array(powers, dtype=float)
            self.u_best = u
            if self.tighten:
                _saturate(self)
            return True
        return False


@dataclass
class SolverResult:
    rates: np.ndarray
    powers: np.ndarray
    utility: float
    status: str
    iterations: int
    upper_bound: float
    equivalent_rate: float
    bound_equivalent_rate: float
    feasibility_checks: int = 0
    trace: list[TraceRow] = field(default_factory=list)

    @property
    def gap(self) -> float:
        return max(0.0, self.bound_equivalent_rate - self.equivalent_rate)


def utopia_point(instance, curve: RateCurve) -> np.ndarray:
    """Per-link rates with every link at full power and no interference."""
    snr = np.diag(instance.gain_rx) * instance.max_power / instance.noise
    return np.atleast_1d(rate_from_sinr(snr, curve))


def initialize(instance, curve: RateCurve, config: UtilityConfig, epsilon: float = 0.1,
               tighten: bool = True, cuts: CutPool | None = None) -> SolverState:
    """Start state: terminal if the utopia point is feasible, else one box [0, utopia].

    ``tighten`` enables the frontier tightening and incumbent saturation on
    top of the utility-based reduction.
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    n = instance.n_pairs
    if config.weights.shape != (n,):
        raise ValueError(f"need {n} utility weights, got {config.weights.shape[0]}")
    zeros = np.zeros(n)
    state = SolverState(instance, curve, config, float(epsilon),
                        best_rates=zeros.copy(), best_powers=zeros.copy(),
                        u_best=system_utility(zeros, config), tighten=tighten)
    top = utopia_point(instance, curve)
    if cuts is not None:
        if cuts.instance is not instance or cuts.curve != curve:
            raise ValueError("cut pool was built for a different instance or rate curve")
        state.cuts = cuts
    sol = state.check(top)
    if sol.feasible:
        state.best_rates, state.best_powers = top, sol.powers
        state.u_best = system_utility(top, config)
        state.status = OPTIMAL
        return state
    state.push(Box(zeros.copy(), top, system_utility(top, config), state.next_id()))
    return state


def branch(box: Box, next_id: Callable[[], int] | None = None) -> tuple[Box, Box]:
    """Split ``box`` at the midpoint of its longest side (lowest index on ties)."""
    widths = box.widths
    k = int(np.argmax(widths))
    if not widths[k] > 0:
        raise DegenerateBoxError("cannot branch a box with zero extent in every dimension")
    ids = next_id or (lambda: 0)
    mid = 0.5 * (box.p[k] + box.q[k])
    q_lo = box.q.copy()
    q_lo[k] = mid
    p_hi = box.p.copy()
    p_hi[k] = mid
    return (Box(box.p.copy(), q_lo, box.u_max, ids()),
            Box(p_hi, box.q.copy(), box.u_max, ids()))


def _utility_limits(alpha: float, floor: float) -> tuple[float, float]:
    lo = utility(0.0, alpha, floor)
    hi = 0.0 if alpha > 1 else np.inf
    return lo, hi


def _solve_component(residual: float, alpha: float, floor: float) -> float:
    """Smallest r >= 0 with U(r) >= residual; ``inf`` if U never gets there."""
    lo, hi = _utility_limits(alpha, floor)
    if residual <= lo:
        return 0.0
    if residual >= hi:
        return np.inf
    return utility_inverse(residual, alpha, floor)


def _sums_except(wu: np.ndarray) -> np.ndarray:
    """Entry k: sum of ``wu`` without entry k.  Handles infinite entries."""
    if np.all(np.isfinite(wu)):
        return wu.sum() - wu
    return np.array([np.delete(wu, k).sum() for k in range(wu.size)])


def _weighted_utilities(rates, config: UtilityConfig) -> np.ndarray:
    w = config.weights
    u = utility(np.asarray(rates, dtype=float), config.alpha, config.rate_floor)
    return np.where(w > 0, w * np.atleast_1d(u), 0.0)


def reduce(box: Box, u_best: float, config: UtilityConfig) -> Box | None:
    """Shrink ``box`` to the part that could beat ``u_best`` without exceeding
    ``box.u_max``.  Returns ``None`` when nothing is left."""
    alpha, floor, w = config.alpha, config.rate_floor, config.weights
    p, q = box.p.copy(), box.q.copy()
    if box.u_max == -np.inf:
        return None

    if u_best > -np.inf:
        others = _sums_except(_weighted_utilities(q, config))
        for k in np.flatnonzero(w > 0):
            r_k = _solve_component((u_best - others[k]) / w[k], alpha, floor)
            if r_k == np.inf:
                return None
            if r_k > p[k]:
                p[k] = r_k

    lo, _ = _utility_limits(alpha, floor)
    others = _sums_except(_weighted_utilities(p, config))
    for k in np.flatnonzero(w > 0):
        residual = (box.u_max - others[k]) / w[k]
        if residual < lo and lo - residual > 1e-12 * max(1.0, abs(lo)):
            return None
        r_k = _solve_component(residual, alpha, floor)
        if r_k < q[k]:
            q[k] = r_k

    slack = 1e-12 * (1.0 + np.abs(q))
    if np.any(p > q + slack):
        return None
    p = np.minimum(p, q)
    return Box(p, q, box.u_max, box.insertion_id)


def _corner_bound(p, q, h, config: UtilityConfig) -> float:
    """Max utility over the points q with one coordinate lowered to h_k.

    Slabs ``r_k < h_k`` that miss the box (``h_k <= p_k``) are skipped.
    """
    wq = _weighted_utilities(q, config)
    wh = _weighted_utilities(h, config)
    others = _sums_except(wq)
    candidates = [others[k] + wh[k] for k in range(q.size) if h[k] > p[k]]
    return max(candidates) if candidates else -np.inf


def bound(box: Box, state: SolverState) -> Box | None:
    """Tighten ``box.u_max`` and update the incumbent.  ``None`` if the box is empty."""
    config = state.config
    sol_q = state.check(box.q)
    if sol_q.feasible:
        u_q = system_utility(box.q, config)
        state.offer(box.q, sol_q.powers)
        box.u_max = min(box.u_max, u_q)
        return box

    # nothing above an infeasible lower corner is feasible
    sol_p = state.check(box.p)
    if not sol_p.feasible:
        return None
    state.offer(box.p, sol_p.powers)

    if np.all(box.widths < MIN_SIDE):
        box.u_max = min(box.u_max, system_utility(box.q, config))
        return box

    if state.tighten:
        _tighten_upper(box, state)
        box.u_max = min(box.u_max, system_utility(box.q, config))

    eps = state.epsilon
    lo, hi, lo_x = _frontier(state, box.p[None], box.q[None], sol_p.powers[None],
                             _eq_gap_below(state, eps))
    l, h = lo[0], hi[0]
    state.offer(l, lo_x[0])
    box.u_max = min(box.u_max, _corner_bound(box.p, box.q, h, config))
    if state.tighten and box.u_max > state.u_best:
        box.u_max = min(box.u_max, _cut_bound(box, state, sol_p.powers))
    if box.u_max == -np.inf:
        return None
    return box


def _eq_gap_below(state: SolverState, tol: float):
    def done(lo, hi):
        return np.array([state.eq(system_utility(h, state.config))
                         - state.eq(system_utility(l, state.config)) < tol
                         for l, h in zip(lo, hi)])
    return done


def _frontier(state: SolverState, starts, ends, start_powers, done, probes: int = _PROBES):
    """Bracket the feasibility frontier on the segments ``starts[s] -> ends[s]``.

    ``starts`` must be feasible and ``ends >= starts``, so feasibility is
    monotone along each segment.  Probes ``probes`` evenly spaced points per
    segment per round until ``done(lo, hi)`` holds for every segment still
    open.  Returns ``(lo, hi, lo_powers)``: the last feasible and first
    infeasible points found (``hi`` is the end point when it is feasible).
    """
    starts = np.asarray(starts, dtype=float)
    ends = np.asarray(ends, dtype=float)
    n_seg, n = starts.shape
    lo, hi, lo_x = starts.copy(), ends.copy(), np.array(start_powers, dtype=float)
    x_end, codes = state.check_batch(ends)
    end_ok = codes == 0
    lo[end_ok], lo_x[end_ok] = ends[end_ok], x_end[end_ok]
    t_lo, t_hi = np.zeros(n_seg), np.ones(n_seg)
    open_ = ~end_ok
    frac = np.arange(1, probes + 1) / (probes + 1.0)
    for _ in range(_MAX_BISECTIONS):
        if np.any(open_):
            open_[open_] = ~done(lo[open_], hi[open_]) & (t_hi[open_] - t_lo[open_] > 1e-13)
        idx = np.flatnonzero(open_)
        if idx.size == 0:
            break
        t = t_lo[idx, None] + (t_hi - t_lo)[idx, None] * frac[None, :]
        d = ends[idx] - starts[idx]
        pts = starts[idx, None, :] + t[:, :, None] * d[:, None, :]
        x, codes = state.check_batch(pts.reshape(-1, n))
        ok = (codes == 0).reshape(idx.size, probes)
        x = x.reshape(idx.size, probes, n)
        bad = ~ok
        first_bad = np.where(bad.any(axis=1), bad.argmax(axis=1), probes)
        for row, s, j in zip(range(idx.size), idx, first_bad):
            if j > 0:
                t_lo[s], lo[s], lo_x[s] = t[row, j - 1], pts[row, j - 1], x[row, j - 1]
            if j < probes:
                t_hi[s], hi[s] = t[row, j], pts[row, j]
    return lo, hi, lo_x


def _tighten_upper(box: Box, state: SolverState) -> None:
    """Lower each ``q_k`` to the feasibility frontier seen from ``p``.

    Any feasible point r of the box dominates ``(p_-k, r_k)``, so ``r_k`` can
    be no larger than the smallest infeasible ``r_k`` along that axis.  Needs
    ``box.p`` feasible.
    """
    p, q = box.p, box.q
    tol = 0.25 * state.epsilon
    axes = np.flatnonzero(q - p > tol)
    if axes.size == 0:
        return
    ends = np.repeat(p[None], axes.size, axis=0)
    ends[np.arange(axes.size), axes] = q[axes]
    starts = np.repeat(p[None], axes.size, axis=0)
    x0 = np.zeros_like(starts)

    def done(lo, hi):
        return np.max(hi - lo, axis=1) <= tol

    lo, hi, lo_x = _frontier(state, starts, ends, x0, done)
    q[axes] = hi[np.arange(axes.size), axes]
    for r, x in zip(lo, lo_x):
        state.offer(r, x)


def _tangent_points(a: float, b: float, config: UtilityConfig, count: int = _TANGENTS):
    """Tangent abscissae on [a, b], evenly spaced in log(r + rate_floor)."""
    if config.alpha == 0:
        return np.array([b])
    shift = max(config.rate_floor, 1e-9)
    return np.geomspace(a + shift, max(b, a) + shift, count) - shift


def _tangent_rows(points, config: UtilityConfig):
    """Slopes and intercepts of tangents to U at ``points``; U lies below each."""
    alpha, floor = config.alpha, config.rate_floor
    t = np.maximum(points, 1e-9 - floor) if floor < 1e-9 else points
    slope = (t + floor) ** (-alpha)
    return slope, np.atleast_1d(utility(t, alpha, floor)) - slope * t


class CutPool:
    """Tangent half-spaces of the power and carrier-sense limits, shared by all boxes.

    A cut taken with active set S reads ``a.r <= b`` and holds at every
    feasible rate vector whose active set contains S: switching the other
    links off keeps the point feasible, and with S fixed the log of each
    minimal power and of each sensed power is convex in the rates (the powers
    are log-convex in log-SINR and the rate curve is concave in dB).  In the
    relaxation the cut is enforced through a big-M term only when every link
    of S is switched on.

    The pool also keeps sets of links that cannot all be active together
    (see :func:`can_coexist`); at most ``|S| - 1`` of them may be switched on.
    """

    def __init__(self, instance, curve: RateCurve):
        self.instance = instance
        self.curve = curve
        self.top = utopia_point(instance, curve)
        self._a: list[np.ndarray] = []
        self._b: list[float] = []
        self._m: list[float] = []
        self._s: list[np.ndarray] = []
        self._cache = None
        self.excluded: list[np.ndarray] = []
        self._coexist: dict[tuple[int, ...], bool] = {}

    def __len__(self):
        return len(self._b)

    def add(self, rates, state: SolverState) -> int:
        """Add the cuts at the feasible point ``rates``; returns how many were kept."""
        inst = state.instance
        res = power_jacobian(rates, inst, state.curve)
        if res is None:
            return 0
        x, jac = res
        act = rates > 0
        added = 0
        for i in np.flatnonzero(act):
            sensed = inst.gain_tx[i] @ x
            for level, limit, grad in ((x[i], inst.max_power[i], jac[i]),
                                       (sensed, inst.cst, inst.gain_tx[i] @ jac)):
                if not level > 0:
                    continue
                h = np.log(level / limit)
                if h < _CUT_KEEP:
                    continue
                g = grad / level
                b = g @ rates - h + _CUT_SLACK
                self._a.append(g)
                self._b.append(b)
                self._m.append(max(0.0, g @ self.top - b) + 1.0)
                self._s.append(act.copy())
                added += 1
        if added:
            self._cache = None
        return added

    def coexist(self, links) -> bool:
        key = tuple(int(i) for i in links)
        if key not in self._coexist:
            self._coexist[key] = bool(can_coexist(key, self.instance, self.curve))
        return self._coexist[key]

    def exclude(self, mask) -> bool:
        """Record a minimal non-coexisting subset of ``mask``.

        Returns False if the links can coexist or the subset is already known.
        """
        links = [int(i) for i in np.flatnonzero(mask)]
        if self.coexist(links):
            return False
        for i in list(links):
            rest = [j for j in links if j != i]
            if rest and not self.coexist(rest):
                links = rest
        new = np.zeros(self.top.size, dtype=bool)
        new[links] = True
        if any(np.array_equal(new, e) for e in self.excluded):
            return False
        self.excluded.append(new)
        return True

    def arrays(self):
        if self._cache is None:
            self._cache = (np.array(self._a), np.array(self._b), np.array(self._m),
                           np.array(self._s))
        return self._cache


def _prune_level(state: SolverState) -> float:
    """Utility below which a box cannot raise the equivalent rate by epsilon."""
    target = state.eq(state.u_best) + state.epsilon
    return utility(target, state.config.alpha, state.config.rate_floor)


def _cut_bound(box: Box, state: SolverState, p_powers) -> float:
    """Upper bound on the utility of feasible points of ``box`` by outer approximation.

    Links with ``p_k > 0`` are on at every point of the box, links with
    ``q_k = 0`` are off, the rest get a binary switch.  The relaxation keeps
    the pooled cuts (see :class:`CutPool`) and over-estimates the concave
    utility by tangents.  Each round adds cuts at the frontier point towards
    the relaxation optimum.
    """
    curve, config = state.curve, state.config
    if not curve.concave_in_db:
        return np.inf
    if state.cuts is None:
        state.cuts = CutPool(state.instance, curve)
    pool = state.cuts
    p, q = box.p, box.q
    n = p.size
    w = config.weights
    y_lo = (p > 0).astype(float)
    y_hi = (q > 0).astype(float)
    # variables: r (n), z (n), y (n); maximise w.z
    lb = np.concatenate([p, np.full(n, -np.inf), y_lo])
    ub = np.concatenate([q, np.full(n, np.inf), y_hi])
    cost = np.concatenate([np.zeros(n), -w, np.zeros(n)])
    integrality = np.concatenate([np.zeros(2 * n), np.ones(n)])
    switch_rows = np.hstack([np.eye(n), np.zeros((n, n)), -np.diag(q)])
    points = [_tangent_points(p[i], q[i], config) for i in range(n)]
    best = np.inf
    u_p = system_utility(p, config)
    rounds = 0
    while rounds < _CUT_ROUNDS:
        rounds += 1
        rows, rhs = [switch_rows], [np.zeros(n)]
        if len(pool):
            a, b, _, sets = pool.arrays()
            # within the box r <= q, so a cut is idle unless a.q > b
            m = a @ q - b
            keep = ~np.any(sets & (q <= 0), axis=1) & (m > 0)
            a, b, m, sets = a[keep], b[keep], m[keep] * (1.0 + 1e-9) + 1e-9, sets[keep] & (p <= 0)
            rows.append(np.hstack([a, np.zeros_like(a), m[:, None] * sets]))
            rhs.append(b + m * sets.sum(axis=1))
        if pool.excluded:
            ex = np.array(pool.excluded, dtype=float)
            rows.append(np.hstack([np.zeros((len(ex), 2 * n)), ex]))
            rhs.append(ex.sum(axis=1) - 1.0)
        for i in range(n):
            slope, icpt = _tangent_rows(points[i], config)
            t_rows = np.zeros((slope.size, 3 * n))
            t_rows[:, i] = -slope
            t_rows[:, n + i] = 1.0
            rows.append(t_rows)
            rhs.append(icpt)
        a_ub, b_ub = np.vstack(rows), np.concatenate(rhs)
        # the continuous relaxation is cheap and often prunes on its own
        res = linprog(cost, A_ub=a_ub, b_ub=b_ub, bounds=np.column_stack([lb, ub]),
                      method="highs")
        if res.status != 0:
            break
        if -res.fun < _prune_level(state):
            best = min(best, -res.fun)
            break
        res = milp(cost, integrality=integrality, bounds=Bounds(lb, ub),
                   constraints=LinearConstraint(a_ub, -np.inf, b_ub))
        if res.status != 0:
            break
        best = min(best, -res.fun)
        x = res.x
        if best <= state.u_best or state.eq(best) < state.eq(state.u_best) + state.epsilon:
            break
        on = x[2 * n:] > 0.5
        if pool.exclude(on):
            # a free round: the next relaxation can no longer pick this set
            rounds -= 1
            continue
        r_star = np.clip(x[:n], p, q)
        if config.alpha > 0:
            points = [np.append(pt, r) for pt, r in zip(points, r_star)]
        target = np.where(on, r_star, 0.0)
        lo, _, lo_x = _frontier(state, p[None], target[None], np.asarray(p_powers)[None],
                                _eq_gap_below(state, 0.05 * state.epsilon))
        f = lo[0]
        state.offer(f, lo_x[0])
        if np.array_equal(f, target):
            if config.alpha == 0:
                break
            continue
        if np.any(f > 0):
            pool.add(f, state)
    return max(best, u_p)


def _saturate(state: SolverState) -> None:
    """Scale the incumbent's powers up until a cap or carrier-sense limit binds.

    Every active SINR rises with a common power scale, so the utility cannot
    drop; the incumbent is replaced only on a strict gain.
    """
    inst = state.instance
    x = state.best_powers
    act = x > 0
    if not np.any(act):
        return
    limits = list(inst.max_power[act] / x[act])
    sensed = (inst.gain_tx @ x)[act]
    limits += list(inst.cst / sensed[sensed > 0])
    t = min(limits)
    if not t > 1.0 + 1e-12:
        return
    y = x * t
    at_cap = act & np.isclose(y, inst.max_power, rtol=1e-12, atol=0.0)
    y[at_cap] = inst.max_power[at_cap]
    rates = np.where(act, rate_from_sinr(sinr_vector(y, inst), state.curve), 0.0)
    try:
        sol = solve_powers(rates, inst, state.curve)
    except ValueError:
        return
    if sol.feasible:
        state.offer(rates, sol.powers)


def solve(instance, curve: RateCurve, config: UtilityConfig, epsilon: float = 0.1,
          max_iterations: int = 100_000,
          on_iteration: Callable[[SolverState], None] | None = None,
          record_trace: bool = False, tighten: bool = True,
          cuts: CutPool | None = None) -> SolverResult:
    """Maximise the weighted alpha-fair utility of link rates.

    Stops with status ``"optimal"`` once no box can raise the equivalent rate
    of the incumbent by ``epsilon`` Mbit/s or more, or ``"iteration_limit"``
    after ``max_iterations`` branchings (the incumbent is still returned).
    ``on_iteration`` is called with the live state after every iteration.
    Passing a :class:`CutPool` built for the same instance lets repeated
    solves (e.g. with different weights) share and extend its cuts.
    """
    state = initialize(instance, curve, config, epsilon, tighten=tighten, cuts=cuts)
    if state.status is None:
        _run(state, max_iterations, on_iteration, record_trace)
        _saturate(state)
    elif record_trace:
        _trace(state)
    bound_u = state.upper_bound
    return SolverResult(
        rates=state.best_rates,
        powers=state.best_powers,
        utility=state.u_best,
        status=state.status,
        iterations=state.iterations,
        upper_bound=bound_u,
        equivalent_rate=state.eq(state.u_best),
        bound_equivalent_rate=state.eq(bound_u),
        feasibility_checks=state.feasibility_checks,
        trace=state.trace,
    )


def _trace(state):
    state.trace.append(TraceRow(state.iterations, len(state.heap),
                                state.eq(state.u_best), state.eq(state.upper_bound)))


def _run(state, max_iterations, on_iteration, record_trace):
    eps = state.epsilon
    if state.tighten and len(state.heap) == 1 and state.iterations == 0:
        # bound the initial box once; with a warm cut pool this often settles the run
        root = heapq.heappop(state.heap)[2]
        root = reduce(root, state.u_best, state.config)
        if root is not None:
            root = bound(root, state)
        if root is not None:
            root = reduce(root, state.u_best, state.config)
        if root is not None and root.u_max > state.u_best:
            state.push(root)
    if record_trace:
        _trace(state)
    while True:
        if not state.heap:
            state.status = OPTIMAL
            return
        top = state.heap[0][2]
        if state.eq(top.u_max) < state.eq(state.u_best) + eps:
            state.status = OPTIMAL
            return
        if state.iterations >= max_iterations:
            state.status = ITERATION_LIMIT
            log.warning("branch-and-bound stopped at the iteration limit (%d)", max_iterations)
            return
        heapq.heappop(state.heap)
        state.iterations += 1
        if np.all(top.widths < MIN_SIDE):
            continue
        for child in branch(top, state.next_id):
            child = reduce(child, state.u_best, state.config)
            if child is None:
                continue
            child = bound(child, state)
            if child is not None and state.tighten:
                child = reduce(child, state.u_best, state.config)
            if child is None or child.u_max <= state.u_best:
                continue
            state.push(child)
        if record_trace:
            _trace(state)
        if on_iteration is not None:
            on_iteration(state)
