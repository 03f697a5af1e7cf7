"""Node placement, pathloss and link-gain matrices.

All power quantities inside a :class:`NetworkInstance` are linear milliwatts;
dB/dBm appear only in the constructors' arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "NodePlacement",
    "NetworkInstance",
    "dbm_to_mw",
    "mw_to_dbm",
    "pathloss_db",
    "hex7_placement",
    "build_instance",
]


def dbm_to_mw(dbm):
    return 10.0 ** (np.asarray(dbm, dtype=float) / 10.0)


def mw_to_dbm(mw):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(np.asarray(mw, dtype=float))


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class NodePlacement:
    """Transmitter and receiver positions, one row per pair, meters (x, y, z)."""

    tx: np.ndarray
    rx: np.ndarray

    def __post_init__(self):
        tx, rx = _frozen(self.tx), _frozen(self.rx)
        if tx.ndim != 2 or tx.shape[1] != 3 or tx.shape != rx.shape:
            raise ValueError(f"tx and rx must both be (N, 3); got {tx.shape} and {rx.shape}")
        if not (np.all(np.isfinite(tx)) and np.all(np.isfinite(rx))):
            raise ValueError("positions must be finite")
        if np.any(np.all(tx == rx, axis=1)):
            raise ValueError("a transmitter coincides with its own receiver")
        object.__setattr__(self, "tx", tx)
        object.__setattr__(self, "rx", rx)

    @property
    def n_pairs(self) -> int:
        return self.tx.shape[0]


@dataclass(frozen=True)
class NetworkInstance:
    """Problem input: gains, noise, power caps and the carrier-sense threshold.

    ``gain_rx[i, j]`` is the linear gain from transmitter j to receiver i and
    ``gain_tx[i, j]`` the gain from transmitter j to transmitter i.  Gains may
    exceed 1 (repeaters).
    """

    gain_rx: np.ndarray
    gain_tx: np.ndarray
    noise: np.ndarray
    max_power: np.ndarray
    cst: float
    # derived: gain_rx[i, j] / gain_rx[i, i] off the diagonal, and noise / gain_rx[i, i]
    coupling: np.ndarray = field(init=False, repr=False, compare=False)
    noise_to_gain: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        a, b = _frozen(self.gain_rx), _frozen(self.gain_tx)
        n = a.shape[0] if a.ndim == 2 else -1
        if a.shape != (n, n) or b.shape != (n, n) or n < 1:
            raise ValueError(f"gain matrices must be square and equal-shaped; got {a.shape}, {b.shape}")
        noise = _frozen(np.broadcast_to(np.asarray(self.noise, dtype=float), (n,)))
        max_power = _frozen(np.broadcast_to(np.asarray(self.max_power, dtype=float), (n,)))
        for name, arr in (("gain_rx", a), ("gain_tx", b), ("noise", noise), ("max_power", max_power)):
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise ValueError(f"{name} must be finite and non-negative")
        if np.any(np.diag(a) <= 0):
            raise ValueError("direct gains gain_rx[i, i] must be positive")
        if np.any(np.diag(b) != 0):
            raise ValueError("gain_tx[i, i] must be zero")
        if np.any(noise <= 0) or np.any(max_power <= 0):
            raise ValueError("noise and max_power must be positive")
        if not (math.isfinite(self.cst) and self.cst > 0):
            raise ValueError(f"cst must be positive, got {self.cst}")
        object.__setattr__(self, "gain_rx", a)
        object.__setattr__(self, "gain_tx", b)
        object.__setattr__(self, "noise", noise)
        object.__setattr__(self, "max_power", max_power)
        object.__setattr__(self, "cst", float(self.cst))
        coupling = a / np.diag(a)[:, None]
        np.fill_diagonal(coupling, 0.0)
        object.__setattr__(self, "coupling", _frozen(coupling))
        object.__setattr__(self, "noise_to_gain", _frozen(noise / np.diag(a)))

    @property
    def n_pairs(self) -> int:
        return self.gain_rx.shape[0]

    @classmethod
    def from_dbm(cls, gain_rx, gain_tx, noise_dbm, max_power_dbm, cst_dbm) -> NetworkInstance:
        b = np.array(gain_tx, dtype=float)
        np.fill_diagonal(b, 0.0)
        return cls(gain_rx, b, dbm_to_mw(noise_dbm), dbm_to_mw(max_power_dbm), float(dbm_to_mw(cst_dbm)))


def pathloss_db(distance, carrier_ghz: float = 5.21):
    """Indoor pathloss in dB: free-space up to 10 m, slope 35 dB/decade beyond.

    >>> round(pathloss_db(10.0, 2.4), 2)
    60.05
    """
    r = np.asarray(distance, dtype=float)
    if np.any(~(r > 0)):
        raise ValueError("distance must be positive")
    if not carrier_ghz > 0:
        raise ValueError("carrier frequency must be positive")
    d = (40.05 + 20.0 * np.log10(carrier_ghz / 2.4) + 20.0 * np.log10(np.minimum(r, 10.0))
         + np.where(r > 10.0, 35.0 * np.log10(0.1 * r), 0.0))
    return float(d) if d.ndim == 0 else d


def hex7_placement(isd: float, ap_height: float = 6.0, sta_height: float = 1.0,
                   sta_offset: float = 5.0, seed: int = 0) -> NodePlacement:
    """Seven APs on a hexagon (centre plus six at distance ``isd``), one STA each.

    Each STA sits ``sta_offset`` meters horizontally from its AP at a uniform
    random bearing drawn from ``numpy.random.default_rng(seed)``.
    """
    if not isd > 0:
        raise ValueError(f"isd must be positive, got {isd}")
    if ap_height < 0 or sta_height < 0 or sta_offset < 0:
        raise ValueError("heights and sta_offset must be non-negative")
    angles = np.deg2rad(60.0 * np.arange(6))
    xy = np.vstack([[0.0, 0.0], isd * np.column_stack([np.cos(angles), np.sin(angles)])])
    tx = np.column_stack([xy, np.full(7, float(ap_height))])
    bearing = np.random.default_rng(seed).uniform(0.0, 2.0 * np.pi, size=7)
    rx_xy = xy + sta_offset * np.column_stack([np.cos(bearing), np.sin(bearing)])
    rx = np.column_stack([rx_xy, np.full(7, float(sta_height))])
    return NodePlacement(tx, rx)


def _distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise 3-D distances; entry (i, j) = |a_i - b_j|."""
    return np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1)


def build_instance(placement: NodePlacement, carrier_ghz: float = 5.21, noise_dbm: float = -94.0,
                   max_power_dbm: float = 20.0, cst_dbm: float = -82.0) -> NetworkInstance:
    """Gain matrices for ``placement`` under :func:`pathloss_db`."""
    n = placement.n_pairs
    d_rx = _distances(placement.rx, placement.tx)
    if np.any(d_rx == 0):
        i, j = np.argwhere(d_rx == 0)[0]
        raise ValueError(f"transmitter {j} coincides with receiver {i}")
    a = 10.0 ** (-pathloss_db(d_rx, carrier_ghz) / 10.0)

    d_tx = _distances(placement.tx, placement.tx)
    off = ~np.eye(n, dtype=bool)
    if np.any(d_tx[off] == 0):
        raise ValueError("two transmitters share a position")
    b = np.zeros((n, n))
    b[off] = 10.0 ** (-pathloss_db(d_tx[off], carrier_ghz) / 10.0)

    return NetworkInstance(
        gain_rx=a,
        gain_tx=b,
        noise=np.full(n, float(dbm_to_mw(noise_dbm))),
        max_power=np.full(n, float(dbm_to_mw(max_power_dbm))),
        cst=float(dbm_to_mw(cst_dbm)),
    )
