"""Hexagonal-grid scenario harness: config parsing, operating modes and ISD sweeps.

Three modes are compared per inter-site distance:

``baseline-maxpower``
    every transmitter on at full power, carrier sensing ignored (a stand-in
    for legacy Wi-Fi without power control; MAC contention is not modelled)
``pure-pc``
    one branch-and-bound solve with equal weights
``pc-sched``
    the slotted scheduler, reporting average rates
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import re
from dataclasses import dataclass, field

import numpy as np

from . import scheduler
from .bnb import solve
from .feasibility import verify
from .rate_model import RateCurve, UtilityConfig, rate_from_sinr, sinr_vector
from .scheduler import SolverConfig
from .topology import NetworkInstance, NodePlacement, build_instance, hex7_placement

__all__ = [
    "MODES",
    "DEFAULT_ISDS",
    "ConfigError",
    "TopologyConfig",
    "RadioConfig",
    "CurveConfig",
    "SchedulerConfig",
    "SweepConfig",
    "ExperimentConfig",
    "ModeResult",
    "SweepRow",
    "parse_config",
    "load_config",
    "build_network",
    "run_mode",
    "run_sweep",
    "write_sweep_csv",
    "geo_mean",
]

log = logging.getLogger(__name__)

MODES = ("baseline-maxpower", "pure-pc", "pc-sched")
DEFAULT_ISDS = (2.0, 5.0, 10.0, 15.0, 20.0, 30.0, 40.0, 60.0, 80.0)


class ConfigError(ValueError):
    """Malformed experiment configuration; ``field`` is a dotted path, ``line`` 1-based or None."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        where = ""
        if line is not None:
            where += f"line {line}: "
        if field:
            where += f"{field}: "
        super().__init__(where + message)


@dataclass(frozen=True)
class TopologyConfig:
    """``kind`` is ``hex7``, ``positions`` (tx/rx coordinates) or ``matrices`` (linear gains)."""

    kind: str = "hex7"
    isd_m: float | None = None
    ap_height_m: float = 6.0
    sta_height_m: float = 1.0
    sta_offset_m: float = 5.0
    tx: list | None = None
    rx: list | None = None
    gain_rx: list | None = None
    gain_tx: list | None = None


@dataclass(frozen=True)
class RadioConfig:
    noise_dbm: float = -94.0
    max_power_dbm: float = 20.0
    cst_dbm: float = -82.0


@dataclass(frozen=True)
class CurveConfig:
    L: float = 51.8
    y0: float = 10.0
    k: float = 0.17
    linear_slope: float | None = None
    carrier_ghz: float = 5.21

    def curve(self) -> RateCurve:
        return RateCurve(self.L, self.y0, self.k, self.linear_slope)


@dataclass(frozen=True)
class SchedulerConfig:
    slots: int = 70
    weight_floor: float = 1e-3


@dataclass(frozen=True)
class SweepConfig:
    isd_m: tuple = DEFAULT_ISDS
    modes: tuple = MODES
    seed: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    topology: TopologyConfig = TopologyConfig()
    radio: RadioConfig = RadioConfig()
    rate_curve: CurveConfig = CurveConfig()
    solver: SolverConfig = SolverConfig()
    scheduler: SchedulerConfig = SchedulerConfig()
    sweep: SweepConfig = SweepConfig()

    @property
    def curve(self) -> RateCurve:
        return self.rate_curve.curve()

    def with_seed(self, seed: int) -> ExperimentConfig:
        return dataclasses.replace(self, sweep=dataclasses.replace(self.sweep, seed=int(seed)))


_BLOCKS = {
    "topology": TopologyConfig,
    "radio": RadioConfig,
    "rate_curve": CurveConfig,
    "solver": SolverConfig,
    "scheduler": SchedulerConfig,
    "sweep": SweepConfig,
}
_INT_FIELDS = {("solver", "max_iterations"), ("scheduler", "slots"), ("sweep", "seed")}
_LIST_FIELDS = {("topology", "tx"), ("topology", "rx"), ("topology", "gain_rx"),
                ("topology", "gain_tx"), ("sweep", "isd_m"), ("sweep", "modes")}
_STR_FIELDS = {("topology", "kind")}
_NULLABLE = {("topology", "isd_m"), ("rate_curve", "linear_slope")}


def _key_line(text: str | None, path: list[str]) -> int | None:
    """Line of the last key in ``path``, searching forward from each parent key."""
    if text is None:
        return None
    pos = 0
    for key in path:
        m = re.compile(r'"%s"\s*:' % re.escape(key)).search(text, pos)
        if m is None:
            return None
        pos = m.start()
    return text.count("\n", 0, pos) + 1


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _check_value(name: tuple[str, str], v, err):
    if name in _STR_FIELDS:
        if not isinstance(v, str):
            raise err("expected a string")
        return v
    if name in _LIST_FIELDS:
        if not isinstance(v, list):
            raise err("expected a list")
        return v
    if name in _INT_FIELDS:
        if not isinstance(v, int) or isinstance(v, bool):
            raise err("expected an integer")
        return v
    if v is None and name in _NULLABLE:
        return None
    if not _is_number(v) or not math.isfinite(v):
        raise err("expected a finite number")
    return float(v)


def _parse_block(name: str, data, cls, text):
    if not isinstance(data, dict):
        raise ConfigError("expected an object", name, _key_line(text, [name]))
    fields = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, v in data.items():
        path = f"{name}.{key}"

        def err(msg, path=path, key=key):
            return ConfigError(msg, path, _key_line(text, [name, key]))

        if key not in fields:
            raise err("unknown key")
        kwargs[key] = _check_value((name, key), v, err)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e), name, _key_line(text, [name])) from None


def _validate(cfg: ExperimentConfig, text) -> None:
    def err(msg, block, key=None):
        path = [block] + ([key] if key else [])
        return ConfigError(msg, ".".join(path), _key_line(text, path))

    t = cfg.topology
    if t.kind not in ("hex7", "positions", "matrices"):
        raise err(f"unknown topology kind {t.kind!r}", "topology", "kind")
    if t.kind == "hex7":
        if t.isd_m is not None and not t.isd_m > 0:
            raise err("isd_m must be positive", "topology", "isd_m")
        for key in ("ap_height_m", "sta_height_m", "sta_offset_m"):
            if getattr(t, key) < 0:
                raise err("must be non-negative", "topology", key)
    elif t.kind == "positions":
        if t.tx is None or t.rx is None:
            raise err("positions topology needs tx and rx", "topology")
    elif t.gain_rx is None or t.gain_tx is None:
        raise err("matrices topology needs gain_rx and gain_tx", "topology")
    if not cfg.rate_curve.carrier_ghz > 0:
        raise err("must be positive", "rate_curve", "carrier_ghz")
    if cfg.scheduler.slots < 1:
        raise err("must be >= 1", "scheduler", "slots")
    if not cfg.scheduler.weight_floor > 0:
        raise err("must be positive", "scheduler", "weight_floor")
    isds = cfg.sweep.isd_m
    if not isds or not all(_is_number(v) and v > 0 for v in isds):
        raise err("must be a non-empty list of positive distances", "sweep", "isd_m")
    if not cfg.sweep.modes or any(m not in MODES for m in cfg.sweep.modes):
        raise err(f"modes must be a non-empty subset of {list(MODES)}", "sweep", "modes")


def parse_config(data, text: str | None = None) -> ExperimentConfig:
    """Build an :class:`ExperimentConfig` from decoded JSON; unknown keys are errors.

    ``text`` is the raw document, used only to attach line numbers to errors.
    """
    if not isinstance(data, dict):
        raise ConfigError("top level must be an object", None, 1)
    blocks = {}
    for name, v in data.items():
        if name not in _BLOCKS:
            raise ConfigError("unknown block", name, _key_line(text, [name]))
        blocks[name] = _parse_block(name, v, _BLOCKS[name], text)
    if "topology" not in blocks:
        raise ConfigError("missing required block", "topology", None)
    if "sweep" in blocks:
        sw = blocks["sweep"]
        blocks["sweep"] = dataclasses.replace(sw, isd_m=tuple(sw.isd_m), modes=tuple(sw.modes))
    cfg = ExperimentConfig(**blocks)
    _validate(cfg, text)
    return cfg


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(e.msg, None, e.lineno) from None
    return parse_config(data, text)


def build_network(cfg: ExperimentConfig, isd: float | None = None) -> NetworkInstance:
    """Network instance for the configured topology; ``isd`` overrides the hex spacing."""
    t, radio = cfg.topology, cfg.radio
    if t.kind == "matrices":
        try:
            return NetworkInstance.from_dbm(t.gain_rx, t.gain_tx, radio.noise_dbm,
                                            radio.max_power_dbm, radio.cst_dbm)
        except ValueError as e:
            raise ConfigError(str(e), "topology") from None
    if t.kind == "positions":
        try:
            placement = NodePlacement(np.array(t.tx, dtype=float), np.array(t.rx, dtype=float))
        except ValueError as e:
            raise ConfigError(str(e), "topology") from None
    else:
        d = isd if isd is not None else t.isd_m
        if d is None:
            raise ConfigError("hex7 topology needs isd_m", "topology.isd_m")
        placement = hex7_placement(d, t.ap_height_m, t.sta_height_m, t.sta_offset_m,
                                   seed=cfg.sweep.seed)
    return build_instance(placement, cfg.rate_curve.carrier_ghz, radio.noise_dbm,
                          radio.max_power_dbm, radio.cst_dbm)


@dataclass
class ModeResult:
    """Per-user rates of one mode.  ``powers`` is set for single-shot modes,
    ``slots`` for the scheduler."""

    mode: str
    rates: np.ndarray
    status: str
    powers: np.ndarray | None = None
    slots: list = field(default_factory=list)


def run_mode(instance, curve: RateCurve, cfg: ExperimentConfig, mode: str) -> ModeResult:
    if mode == "baseline-maxpower":
        x = np.array(instance.max_power)
        rates = np.atleast_1d(rate_from_sinr(sinr_vector(x, instance), curve))
        return ModeResult(mode, rates, "n/a", powers=x)
    s = cfg.solver
    if mode == "pure-pc":
        config = UtilityConfig.equal(instance.n_pairs, s.alpha, s.rate_floor)
        res = solve(instance, curve, config, epsilon=s.epsilon, max_iterations=s.max_iterations)
        return ModeResult(mode, np.array(res.rates), res.status, powers=np.array(res.powers))
    if mode == "pc-sched":
        res = scheduler.run(instance, curve, s, alpha=s.alpha, slots=cfg.scheduler.slots,
                            weight_floor=cfg.scheduler.weight_floor)
        status = "iteration_limit" if "iteration_limit" in res.statuses else "optimal"
        return ModeResult(mode, res.avg_rates, status, slots=res.slots)
    raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")


def geo_mean(rates, rate_floor: float) -> float:
    r = np.maximum(np.asarray(rates, dtype=float), rate_floor)
    return float(np.exp(np.mean(np.log(r))))


@dataclass
class SweepRow:
    isd: float
    mode: str
    geo_mean: float
    arith_mean: float
    per_user_rates: np.ndarray
    status: str
    result: ModeResult | None = field(default=None, repr=False)


def run_sweep(cfg: ExperimentConfig, check: bool = True) -> list[SweepRow]:
    """Every ISD x mode cell, ordered by ISD then by the order of :data:`MODES`.

    With ``check`` set, every returned power vector is re-verified and a
    failure raises ``AssertionError``.
    """
    if cfg.topology.kind != "hex7":
        raise ConfigError("sweep needs a hex7 topology", "topology.kind")
    curve = cfg.curve
    floor = cfg.solver.rate_floor
    modes = [m for m in MODES if m in cfg.sweep.modes]
    rows = []
    for isd in sorted(float(d) for d in cfg.sweep.isd_m):
        instance = build_network(cfg, isd)
        for mode in modes:
            log.info("isd=%g mode=%s", isd, mode)
            res = run_mode(instance, curve, cfg, mode)
            if check:
                _check_powers(res, instance, curve)
            if res.status == "iteration_limit":
                log.warning("isd=%g mode=%s hit the iteration limit", isd, mode)
            rows.append(SweepRow(isd, mode, geo_mean(res.rates, floor), float(np.mean(res.rates)),
                                 np.array(res.rates), res.status, res))
    return rows


def _check_powers(res: ModeResult, instance, curve) -> None:
    if res.mode == "baseline-maxpower":
        # carrier sensing is ignored by construction, and links drowned to
        # zero rate still radiate; only the caps and the SINR-rate match apply
        on = res.rates > 0
        rep = verify(np.where(on, res.powers, 0.0), res.rates, instance, curve, check_cst=False)
        bad = {v.constraint for v in rep.violations} - {"sinr"}
        if bad or np.any(res.powers > instance.max_power):
            raise AssertionError(f"baseline power vector failed verification: {rep}")
        return
    vectors = [(res.powers, res.rates)] if res.powers is not None else [
        (s.powers, s.rates) for s in res.slots]
    for x, r in vectors:
        rep = verify(x, r, instance, curve)
        if not rep.ok:
            raise AssertionError(f"{res.mode} power vector failed verification:\n{rep}")


def _fmt(v: float) -> str:
    return f"{v:.6g}"


SWEEP_HEADER = ["isd_m", "mode", "geo_mean_mbps", "arith_mean_mbps", "user_rates_mbps", "status"]


def write_sweep_csv(rows, fh, rate_floor: float) -> None:
    """CSV with a ``# rate_floor=...`` comment line, a header and one row per cell."""
    fh.write(f"# rate_floor={_fmt(rate_floor)} (geometric means use max(rate, rate_floor))\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for row in rows:
        w.writerow([_fmt(row.isd), row.mode, _fmt(row.geo_mean), _fmt(row.arith_mean),
                    ";".join(_fmt(r) for r in row.per_user_rates), row.status])


def sweep_csv_text(rows, rate_floor: float) -> str:
    buf = io.StringIO()
    write_sweep_csv(rows, buf, rate_floor)
    return buf.getvalue()
