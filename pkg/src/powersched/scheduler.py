"""Dynamic time division: one power-control solve per slot, weighted by rate history.

Each slot maximises the weighted sum of instantaneous rates with weights
``w_i ~ 1 / R_i**alpha``, where ``R_i`` is user i's average rate over the
past slots.  Links that the solver leaves at zero rate stay silent for the
slot, so time sharing emerges without a fixed schedule.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .bnb import CutPool, solve
from .rate_model import RateCurve, UtilityConfig
from .topology import mw_to_dbm

__all__ = [
    "SolverConfig",
    "ScheduleState",
    "SlotRecord",
    "ScheduleResult",
    "compute_weights",
    "step",
    "run",
    "write_slot_trace",
]


@dataclass(frozen=True)
class SolverConfig:
    """Branch-and-bound settings shared by single solves and scheduler slots."""

    alpha: float = 1.0
    epsilon: float = 0.1
    rate_floor: float = 1e-3
    max_iterations: int = 100_000

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not self.rate_floor >= 0:
            raise ValueError(f"rate_floor must be >= 0, got {self.rate_floor}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")


def compute_weights(avg_rates, alpha: float, weight_floor: float = 1e-3) -> np.ndarray:
    """Normalised weights ``(1/S_i**alpha) / sum_j (1/S_j**alpha)`` with ``S = max(R, floor)``.

    For ``R = (1, 3)`` and ``alpha = 1`` this gives ``(0.75, 0.25)``.
    """
    r = np.asarray(avg_rates, dtype=float)
    if np.any(r < 0) or not np.all(np.isfinite(r)):
        raise ValueError("average rates must be finite and non-negative")
    if not weight_floor > 0:
        raise ValueError(f"weight_floor must be positive, got {weight_floor}")
    s = np.maximum(r, weight_floor)
    # divide by the smallest S first so the powers cannot overflow
    inv = (s.min() / s) ** alpha
    return inv / inv.sum()


@dataclass(frozen=True)
class ScheduleState:
    avg_rates: np.ndarray
    slot: int = 0
    alpha: float = 1.0
    weight_floor: float = 1e-3

    def __post_init__(self):
        r = np.array(self.avg_rates, dtype=float)
        if r.ndim != 1 or np.any(r < 0):
            raise ValueError("avg_rates must be a non-negative vector")
        if self.slot < 0:
            raise ValueError("slot must be >= 0")
        r.setflags(write=False)
        object.__setattr__(self, "avg_rates", r)

    @classmethod
    def start(cls, n: int, alpha: float = 1.0, weight_floor: float = 1e-3) -> ScheduleState:
        return cls(np.zeros(n), 0, alpha, weight_floor)

    def weights(self) -> np.ndarray:
        return compute_weights(self.avg_rates, self.alpha, self.weight_floor)


@dataclass(frozen=True)
class SlotRecord:
    slot: int
    weights: np.ndarray
    rates: np.ndarray
    powers: np.ndarray
    status: str
    iterations: int

    @property
    def active(self) -> np.ndarray:
        return np.flatnonzero(self.powers > 0)


@dataclass
class ScheduleResult:
    avg_rates: np.ndarray
    slots: list[SlotRecord] = field(default_factory=list)
    state: ScheduleState | None = None

    @property
    def statuses(self) -> set[str]:
        return {s.status for s in self.slots}


def step(state: ScheduleState, instance, curve: RateCurve, solver: SolverConfig = SolverConfig(),
         cuts: CutPool | None = None) -> tuple[SlotRecord, ScheduleState]:
    """Solve one slot and fold its rates into the running averages.

    ``solver.alpha`` is not used here: the slot objective is always the
    weighted rate sum, and the history weights carry ``state.alpha``.
    """
    w = state.weights()
    config = UtilityConfig(alpha=0.0, weights=w, rate_floor=solver.rate_floor)
    res = solve(instance, curve, config, epsilon=solver.epsilon,
                max_iterations=solver.max_iterations, cuts=cuts)
    t = state.slot
    avg = (t * state.avg_rates + res.rates) / (t + 1)
    record = SlotRecord(t, w, np.array(res.rates), np.array(res.powers), res.status, res.iterations)
    return record, replace(state, avg_rates=avg, slot=t + 1)


def run(instance, curve: RateCurve, solver: SolverConfig = SolverConfig(), alpha: float = 1.0,
        slots: int = 70, weight_floor: float = 1e-3, on_slot=None) -> ScheduleResult:
    """Run ``slots`` consecutive slots from an empty history.

    All slots share one cut pool, since the feasible rate region does not
    depend on the weights.
    """
    if slots < 1:
        raise ValueError(f"slots must be >= 1, got {slots}")
    state = ScheduleState.start(instance.n_pairs, alpha, weight_floor)
    cuts = CutPool(instance, curve) if curve.concave_in_db else None
    result = ScheduleResult(state.avg_rates)
    for _ in range(slots):
        record, state = step(state, instance, curve, solver, cuts)
        result.slots.append(record)
        if on_slot is not None:
            on_slot(record)
    result.avg_rates = np.array(state.avg_rates)
    result.state = state
    return result


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def write_slot_trace(slots, fh) -> None:
    """CSV rows ``slot,user,rate_mbps,power_dbm_or_off,weight``, one per user per slot."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["slot", "user", "rate_mbps", "power_dbm_or_off", "weight"])
    for rec in slots:
        for i, (r, x, wt) in enumerate(zip(rec.rates, rec.powers, rec.weights)):
            power = _fmt(float(mw_to_dbm(x))) if x > 0 else "off"
            w.writerow([rec.slot, i, _fmt(r), power, _fmt(wt)])
