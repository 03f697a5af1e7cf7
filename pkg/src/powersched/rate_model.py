"""SINR, the SINR-to-rate curve, and alpha-fair utility algebra.

Rates are in Mbit/s, SINR values are linear (dimensionless) unless a name
says ``_db``.  Every function accepts scalars or numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "RateCurve",
    "UtilityConfig",
    "InfeasibleRateError",
    "sinr",
    "sinr_vector",
    "rate_from_sinr",
    "sinr_from_rate",
    "rate_slope",
    "utility",
    "system_utility",
    "utility_inverse",
    "equivalent_rate",
]


class InfeasibleRateError(ValueError):
    """Raised when a rate at or above the curve's saturation is requested."""


@dataclass(frozen=True)
class RateCurve:
    """Logistic SINR-to-rate curve with a linear tail below the midpoint.

    Parameters
    ----------
    L : float
        Saturation rate, Mbit/s.
    y0 : float
        Midpoint SINR in dB; ``f(y0) = L/2``.
    k : float
        Logistic slope per dB.
    linear_slope : float, optional
        Slope of the linear branch below ``y0`` in Mbit/s per dB.  Defaults to
        ``L*k/4``, the logistic derivative at ``y0``, which makes the curve
        continuously differentiable and drops to zero rate at ``y0 - 2/k`` dB.
        Pass ``k/4`` to get the bare ``L/2 + (k/4)(y - y0)`` tail.
    """

    L: float = 51.8
    y0: float = 10.0
    k: float = 0.17
    linear_slope: float | None = None

    def __post_init__(self):
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")
        if not self.k > 0:
            raise ValueError(f"k must be positive, got {self.k}")
        if self.linear_slope is not None and not self.linear_slope > 0:
            raise ValueError(f"linear_slope must be positive, got {self.linear_slope}")

    @property
    def slope(self) -> float:
        if self.linear_slope is None:
            return self.L * self.k / 4.0
        return self.linear_slope

    @property
    def concave_in_db(self) -> bool:
        """True when the rate is a concave function of SINR in dB where positive."""
        return self.slope >= self.L * self.k / 4.0 * (1.0 - 1e-12)

    @property
    def zero_rate_db(self) -> float:
        """SINR (dB) at and below which the rate is clamped to zero."""
        return self.y0 - self.L / (2.0 * self.slope)


@dataclass(frozen=True)
class UtilityConfig:
    """Weighted alpha-fair system utility ``sum_i w_i U(r_i + rate_floor)``."""

    alpha: float
    weights: np.ndarray
    rate_floor: float = 1e-3

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a non-empty vector")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and non-negative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {w.sum()!r}")
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if not self.rate_floor >= 0:
            raise ValueError(f"rate_floor must be >= 0, got {self.rate_floor}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def equal(cls, n: int, alpha: float = 1.0, rate_floor: float = 1e-3) -> UtilityConfig:
        return cls(alpha=alpha, weights=np.full(n, 1.0 / n), rate_floor=rate_floor)


def sinr(powers, instance, i: int) -> float:
    """SINR at receiver ``i`` for transmit powers ``powers`` (mW)."""
    x = np.asarray(powers, dtype=float)
    a = instance.gain_rx
    interference = a[i] @ x - a[i, i] * x[i]
    return float(a[i, i] * x[i] / (instance.noise[i] + interference))


def sinr_vector(powers, instance) -> np.ndarray:
    """SINR at every receiver."""
    x = np.asarray(powers, dtype=float)
    a = instance.gain_rx
    signal = np.diag(a) * x
    interference = a @ x - signal
    return signal / (instance.noise + interference)


def rate_from_sinr(gamma, curve: RateCurve):
    """Data rate (Mbit/s) delivered at linear SINR ``gamma``."""
    g = np.asarray(gamma, dtype=float)
    with np.errstate(divide="ignore"):
        y = 10.0 * np.log10(g)
    upper = curve.L / (1.0 + np.exp(-curve.k * (np.maximum(y, curve.y0) - curve.y0)))
    lower = np.maximum(0.0, curve.L / 2.0 + curve.slope * (y - curve.y0))
    r = np.where(y >= curve.y0, upper, lower)
    return float(r) if r.ndim == 0 else r


def sinr_from_rate(r, curve: RateCurve):
    """Linear SINR needed for rate ``r``; inverse of :func:`rate_from_sinr` on (0, L).

    Raises
    ------
    ValueError
        If any rate is not strictly positive.
    InfeasibleRateError
        If any rate is at or above the saturation rate ``L``.
    """
    r = np.asarray(r, dtype=float)
    if np.any(~(r > 0)):
        raise ValueError("rates must be strictly positive to invert the rate curve")
    if np.any(r >= curve.L):
        raise InfeasibleRateError(f"rate {np.max(r)} is not below the saturation rate {curve.L}")
    half = curve.L / 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        y_up = curve.y0 - np.log(curve.L / r - 1.0) / curve.k
    y_low = curve.y0 + (r - half) / curve.slope
    y = np.where(r >= half, y_up, y_low)
    g = 10.0 ** (y / 10.0)
    return float(g) if g.ndim == 0 else g


def rate_slope(gamma, curve: RateCurve):
    """Derivative of :func:`rate_from_sinr` with respect to linear SINR."""
    g = np.asarray(gamma, dtype=float)
    with np.errstate(divide="ignore"):
        y = 10.0 * np.log10(g)
    r = curve.L / (1.0 + np.exp(-curve.k * (np.maximum(y, curve.y0) - curve.y0)))
    per_db = np.where(y >= curve.y0, curve.k * r * (1.0 - r / curve.L),
                      np.where(y > curve.zero_rate_db, curve.slope, 0.0))
    d = per_db * 10.0 / (np.log(10.0) * g)
    return float(d) if d.ndim == 0 else d


def utility(r, alpha: float, rate_floor: float = 0.0):
    """Alpha-fair utility of rate ``r`` shifted by ``rate_floor``; may be ``-inf``."""
    s = np.asarray(r, dtype=float) + rate_floor
    with np.errstate(divide="ignore"):
        if alpha == 1:
            u = np.log(s)
        elif alpha > 1:
            u = np.where(s > 0, np.power(np.where(s > 0, s, 1.0), 1.0 - alpha), np.inf) / (1.0 - alpha)
        else:
            u = np.power(s, 1.0 - alpha) / (1.0 - alpha)
    return float(u) if u.ndim == 0 else u


def system_utility(rates, config: UtilityConfig) -> float:
    """Weighted sum of per-user utilities.  Zero-weight users are ignored."""
    w = config.weights
    mask = w > 0
    u = utility(np.asarray(rates, dtype=float)[mask], config.alpha, config.rate_floor)
    return float(np.dot(w[mask], u))


def _utility_range_error(u, alpha):
    return ValueError(f"utility value {u!r} is outside the range of U for alpha={alpha}")


def utility_inverse(u: float, alpha: float, rate_floor: float = 0.0) -> float:
    """Rate whose utility is ``u``; exact inverse of :func:`utility`.

    Values that fall below ``U(0)`` by no more than rounding noise map to 0.
    """
    u = float(u)
    if alpha == 1:
        s = np.exp(u)
    elif u == -np.inf and alpha > 1:
        s = 0.0
    else:
        base = (1.0 - alpha) * u
        if np.isnan(base) or base < 0 or (alpha > 1 and base == 0):
            raise _utility_range_error(u, alpha)
        s = base ** (1.0 / (1.0 - alpha))
    r = s - rate_floor
    if r < 0:
        if r < -1e-9 * max(1.0, rate_floor):
            raise _utility_range_error(u, alpha)
        r = 0.0
    return float(r)


def equivalent_rate(u: float, config: UtilityConfig) -> float:
    """Rate that, given to every user, yields system utility ``u``."""
    return utility_inverse(u, config.alpha, config.rate_floor)
