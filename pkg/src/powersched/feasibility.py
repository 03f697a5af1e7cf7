"""Power vectors realising target rates under power caps and carrier sensing."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rate_model import RateCurve, rate_slope, sinr_from_rate, sinr_vector

__all__ = [
    "PowerSolution",
    "Violation",
    "VerifyReport",
    "solve_powers",
    "solve_powers_batch",
    "solve_sinr_batch",
    "can_coexist",
    "is_feasible",
    "power_jacobian",
    "verify",
    "COND_LIMIT",
    "REASONS",
]

COND_LIMIT = 1e12
# relative slack on the power and CST comparisons; absorbs rounding in f^-1(f(x))
CONSTRAINT_RTOL = 1e-9

REASONS = ("feasible", "singular", "negative_power", "power_cap", "cst")


@dataclass(frozen=True)
class PowerSolution:
    """Outcome of :func:`solve_powers`.

    ``reason`` is ``"feasible"`` or one of ``"singular"``, ``"negative_power"``,
    ``"power_cap"``, ``"cst"``.  On infeasible verdicts ``powers`` holds the
    rejected system solution when there is one, zeros otherwise.
    """

    powers: np.ndarray
    active: tuple[int, ...]
    reason: str = "feasible"

    @property
    def feasible(self) -> bool:
        return self.reason == "feasible"

    def __bool__(self) -> bool:
        return self.feasible


def _target_sinrs(rates: np.ndarray, curve: RateCurve) -> np.ndarray:
    gamma = np.zeros_like(rates)
    active = rates > 0
    if np.any(active):
        gamma[active] = sinr_from_rate(rates[active], curve)
    return gamma


def solve_powers_batch(rates, instance, curve: RateCurve) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`solve_powers` over the rows of ``rates``.

    Returns ``(powers, codes)`` where ``codes[b]`` indexes :data:`REASONS`.
    Silent links get a zero SINR target, which pins their power to zero and
    removes them from everyone else's interference.
    """
    r = np.atleast_2d(np.asarray(rates, dtype=float))
    n = instance.n_pairs
    if r.shape[1] != n:
        raise ValueError(f"expected {n} target rates per row, got {r.shape[1]}")
    if np.any(r < 0):
        raise ValueError("target rates must be non-negative")
    return solve_sinr_batch(_target_sinrs(r, curve), instance)


def solve_sinr_batch(gamma, instance) -> tuple[np.ndarray, np.ndarray]:
    """Like :func:`solve_powers_batch` but with SINR targets given directly.

    A link is active where its target is positive.
    """
    gamma = np.atleast_2d(np.asarray(gamma, dtype=float))
    active = gamma > 0
    m = np.eye(instance.n_pairs) - gamma[:, :, None] * instance.coupling
    rhs = gamma * instance.noise_to_gain
    try:
        inv = np.linalg.inv(m)
    except np.linalg.LinAlgError:
        inv = np.full_like(m, np.nan)
        for b in range(m.shape[0]):
            try:
                inv[b] = np.linalg.inv(m[b])
            except np.linalg.LinAlgError:
                pass
    with np.errstate(invalid="ignore", over="ignore"):
        cond = np.abs(m).sum(axis=1).max(axis=-1) * np.abs(inv).sum(axis=1).max(axis=-1)
        x = np.einsum("bij,bj->bi", inv, rhs)
        sensed = x @ instance.gain_tx.T
    singular = ~np.isfinite(cond) | (cond > COND_LIMIT)
    # x = rhs + gamma*C x with C >= 0, so a genuine positive solution never
    # drops below rhs; a relative test keeps tiny but valid powers feasible
    floor = rhs * (1.0 - CONSTRAINT_RTOL)
    negative = np.any(active & ~((x > 0) & (x >= floor)), axis=1)
    cap = np.any(active & (x > instance.max_power * (1.0 + CONSTRAINT_RTOL)), axis=1)
    cst = np.any(active & (sensed > instance.cst * (1.0 + CONSTRAINT_RTOL)), axis=1)
    codes = np.select([singular, negative, cap, cst], [1, 2, 3, 4], 0)
    x = np.where(active & ~singular[:, None], x, 0.0)
    return x, codes


def can_coexist(links, instance, curve: RateCurve) -> bool:
    """Whether the links in ``links`` can all carry some positive rate at once.

    Any positive rate needs an SINR above the level where the rate curve hits
    zero; if the links cannot reach that level together, no rate vector whose
    active set contains ``links`` is feasible.
    """
    gamma = np.zeros(instance.n_pairs)
    gamma[list(links)] = 10.0 ** (curve.zero_rate_db / 10.0)
    return solve_sinr_batch(gamma[None, :], instance)[1][0] == 0


def solve_powers(target_rates, instance, curve: RateCurve) -> PowerSolution:
    """Minimal power vector meeting every target rate, or the reason none exists.

    Links with zero target stay silent and are left out of both the SINR
    system and the carrier-sense check.
    """
    r = np.asarray(target_rates, dtype=float)
    if r.shape != (instance.n_pairs,):
        raise ValueError(f"expected {instance.n_pairs} target rates, got shape {r.shape}")
    x, codes = solve_powers_batch(r[None, :], instance, curve)
    active = tuple(int(i) for i in np.flatnonzero(r > 0))
    return PowerSolution(x[0], active, REASONS[codes[0]])


def is_feasible(target_rates, instance, curve: RateCurve) -> bool:
    return solve_powers(target_rates, instance, curve).feasible


def power_jacobian(target_rates, instance, curve: RateCurve):
    """Minimal powers and their sensitivities to the target rates.

    Only links with positive target take part.  Returns ``(x, jac)`` with
    ``jac[i, k] = d x_i / d r_k`` (zero rows/columns for silent links), or
    ``None`` if the equality system has no positive solution.
    """
    r = np.asarray(target_rates, dtype=float)
    n = instance.n_pairs
    idx = np.flatnonzero(r > 0)
    if idx.size == 0:
        return None
    gamma = np.atleast_1d(sinr_from_rate(r[idx], curve))
    m = np.eye(idx.size) - gamma[:, None] * instance.coupling[np.ix_(idx, idx)]
    try:
        inv = np.linalg.inv(m)
    except np.linalg.LinAlgError:
        return None
    xs = inv @ (gamma * instance.noise_to_gain[idx])
    if np.any(~(xs > 0)):
        return None
    # M dx/dgamma_k = e_k x_k / gamma_k
    dgamma_dr = 1.0 / np.atleast_1d(rate_slope(gamma, curve))
    jac_s = inv * (xs / gamma * dgamma_dr)[None, :]
    x = np.zeros(n)
    x[idx] = xs
    jac = np.zeros((n, n))
    jac[np.ix_(idx, idx)] = jac_s
    return x, jac


@dataclass(frozen=True)
class Violation:
    constraint: str
    link: int
    margin: float

    def __str__(self):
        return f"{self.constraint} violated at link {self.link} (margin {self.margin:.6g})"


@dataclass
class VerifyReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok

    def constraints(self) -> set[str]:
        return {v.constraint for v in self.violations}

    def __str__(self):
        if self.ok:
            return "OK: all constraints satisfied"
        return "\n".join(["FAIL: %d violation(s)" % len(self.violations)]
                         + ["  " + str(v) for v in self.violations])


def verify(powers, target_rates, instance, curve: RateCurve, tol: float = 1e-9,
           mode: str = "equal", check_cst: bool = True) -> VerifyReport:
    """Independently re-check a power vector against target rates.

    Recomputes SINRs from the gain matrices and reports every violated
    constraint.  Margins are relative for ``power_cap``, ``cst`` and ``sinr``
    and absolute otherwise.

    ``mode="equal"`` requires each active link's SINR to match its target
    within ``tol`` relative; ``mode="meet"`` only requires meeting or
    exceeding it.
    """
    if mode not in ("equal", "meet"):
        raise ValueError(f"unknown mode {mode!r}")
    x = np.asarray(powers, dtype=float)
    r = np.asarray(target_rates, dtype=float)
    n = instance.n_pairs
    if x.shape != (n,) or r.shape != (n,):
        raise ValueError(f"powers and rates must have length {n}")
    report = VerifyReport()
    add = report.violations.append

    for i in range(n):
        if x[i] < 0:
            add(Violation("negative_power", i, float(-x[i])))
        if x[i] > instance.max_power[i] * (1.0 + tol):
            add(Violation("power_cap", i, float(x[i] / instance.max_power[i] - 1.0)))
        if r[i] <= 0 and x[i] != 0:
            add(Violation("inactive_power", i, float(x[i])))
        if r[i] > 0 and x[i] <= 0:
            add(Violation("active_silent", i, float(r[i])))

    active = r > 0
    if check_cst:
        sensed = instance.gain_tx @ x
        for i in np.flatnonzero(active):
            if sensed[i] > instance.cst * (1.0 + tol):
                add(Violation("cst", int(i), float(sensed[i] / instance.cst - 1.0)))

    if np.any(active):
        out_of_range = active & (r >= curve.L)
        for i in np.flatnonzero(out_of_range):
            add(Violation("rate_range", int(i), float(r[i] - curve.L)))
        ok = active & ~out_of_range
        if np.any(ok):
            target = np.atleast_1d(sinr_from_rate(r[ok], curve))
            achieved = sinr_vector(x, instance)[ok]
            rel = achieved / target - 1.0
            for i, d in zip(np.flatnonzero(ok), rel):
                if (mode == "equal" and abs(d) > tol) or (mode == "meet" and d < -tol):
                    add(Violation("sinr", int(i), float(d)))
    return report
