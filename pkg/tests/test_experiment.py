import csv
import io
import json

import numpy as np
import pytest

from powersched.bnb import utopia_point
from powersched.cli import main
from powersched.experiment import (
    DEFAULT_ISDS,
    MODES,
    SWEEP_HEADER,
    ConfigError,
    ExperimentConfig,
    build_network,
    geo_mean,
    load_config,
    parse_config,
    run_mode,
    run_sweep,
    sweep_csv_text,
)
from powersched.rate_model import rate_from_sinr


def write(tmp_path, name, data):
    path = tmp_path / name
    path.write_text(data if isinstance(data, str) else json.dumps(data, indent=2))
    return path


ISOLATED = {
    "topology": {"kind": "matrices",
                 "gain_rx": [[1e-6, 0, 0], [0, 2e-6, 0], [0, 0, 5e-7]],
                 "gain_tx": [[0, 0, 0], [0, 0, 0], [0, 0, 0]]},
}

PAIR = {
    "topology": {"kind": "matrices",
                 "gain_rx": [[1e-6, 2e-9], [3e-9, 1e-6]],
                 "gain_tx": [[0, 1e-9], [1e-9, 0]]},
}


def test_defaults():
    cfg = parse_config({"topology": {"kind": "hex7"}})
    assert cfg.sweep.isd_m == DEFAULT_ISDS
    assert cfg.sweep.modes == MODES
    assert cfg.solver.epsilon == 0.1 and cfg.solver.rate_floor == 1e-3
    assert cfg.radio.cst_dbm == -82.0
    assert cfg.scheduler.slots == 70


def test_topology_block_required():
    with pytest.raises(ConfigError):
        parse_config({"solver": {}})


@pytest.mark.parametrize("text, field, line", [
    ('{\n "topology": {"kind": "hex7"},\n "solver": {"alpah": 1}\n}', "solver.alpah", 3),
    ('{\n "topology": {"kind": "hex7"},\n "sweep": {\n  "isd_m": [10, -5]\n }\n}', "sweep.isd_m", 4),
    ('{\n "topology": {"kind": "hex7"},\n "sweep": {"modes": ["legacy"]}\n}', "sweep.modes", 3),
    ('{\n "topology": {"kind": "hex7"},\n "scheduler": {"slots": 2.5}\n}', "scheduler.slots", 3),
    ('{\n "topology": {"kind": "hex7"},\n "radio": {"noise_dbm": "loud"}\n}', "radio.noise_dbm", 3),
    ('{\n "topology": {"kind": "ring"}\n}', "topology.kind", 2),
    ('{\n "topology": {"kind": "matrices"}\n}', "topology", 2),
    ('{\n "topology": {"kind": "hex7"},\n "extra": {}\n}', "extra", 3),
])
def test_config_errors_name_field_and_line(tmp_path, text, field, line):
    path = write(tmp_path, "bad.json", text)
    with pytest.raises(ConfigError) as err:
        load_config(path)
    assert err.value.field == field
    assert err.value.line == line


def test_json_syntax_error_has_line(tmp_path):
    path = write(tmp_path, "bad.json", '{\n "topology": {"kind": "hex7",}\n}')
    with pytest.raises(ConfigError) as err:
        load_config(path)
    assert err.value.line == 2


def test_solver_value_errors_are_config_errors():
    with pytest.raises(ConfigError):
        parse_config({"topology": {"kind": "hex7"}, "solver": {"epsilon": 0}})


def test_positions_topology():
    cfg = parse_config({"topology": {"kind": "positions",
                                     "tx": [[0, 0, 6], [30, 0, 6]],
                                     "rx": [[3, 0, 1], [27, 0, 1]]}})
    inst = build_network(cfg)
    assert inst.n_pairs == 2
    assert inst.gain_rx[0, 1] == pytest.approx(inst.gain_rx[1, 0])


def test_matrices_topology_uses_radio_block():
    cfg = parse_config({**PAIR, "radio": {"max_power_dbm": 10.0}})
    inst = build_network(cfg)
    assert inst.max_power[0] == pytest.approx(10.0)
    assert inst.gain_rx[0, 1] == 2e-9


def test_hex_seed_comes_from_sweep_block():
    cfg = parse_config({"topology": {"kind": "hex7", "isd_m": 20}, "sweep": {"seed": 3}})
    other = cfg.with_seed(4)
    assert not np.array_equal(build_network(cfg).gain_rx, build_network(other).gain_rx)
    assert np.array_equal(build_network(cfg).gain_rx, build_network(cfg.with_seed(3)).gain_rx)


def test_isolated_links_all_modes_reach_utopia():
    cfg = parse_config({**ISOLATED, "scheduler": {"slots": 3}})
    inst = build_network(cfg)
    top = utopia_point(inst, cfg.curve)
    for mode in MODES:
        res = run_mode(inst, cfg.curve, cfg, mode)
        assert np.allclose(res.rates, top, rtol=1e-12), mode


def test_baseline_is_all_on_at_full_power():
    cfg = parse_config(PAIR)
    inst = build_network(cfg)
    res = run_mode(inst, cfg.curve, cfg, "baseline-maxpower")
    x = inst.max_power
    a, n = inst.gain_rx, inst.noise
    sinr0 = a[0, 0] * x[0] / (n[0] + a[0, 1] * x[1])
    assert res.rates[0] == pytest.approx(rate_from_sinr(sinr0, cfg.curve))
    assert np.array_equal(res.powers, x)


def test_unknown_mode():
    cfg = parse_config(PAIR)
    with pytest.raises(ValueError):
        run_mode(build_network(cfg), cfg.curve, cfg, "legacy")


def test_geo_mean_uses_floor():
    assert geo_mean([4.0, 9.0], 1e-3) == pytest.approx(6.0)
    assert geo_mean([0.0, 10.0], 1e-3) == pytest.approx(0.1)


def small_sweep_config(**sweep):
    return parse_config({"topology": {"kind": "hex7"},
                         "scheduler": {"slots": 4},
                         "sweep": {"isd_m": [80, 40], **sweep}})


def test_sweep_rows_and_csv():
    cfg = small_sweep_config()
    rows = run_sweep(cfg)
    assert [(r.isd, r.mode) for r in rows] == [(i, m) for i in (40.0, 80.0) for m in MODES]
    for row in rows:
        assert row.geo_mean <= row.arith_mean * (1 + 1e-12)
        assert np.all(row.per_user_rates >= 0)
    text = sweep_csv_text(rows, cfg.solver.rate_floor)
    lines = text.splitlines()
    assert lines[0].startswith("# rate_floor=0.001")
    parsed = list(csv.reader(io.StringIO("\n".join(lines[1:]))))
    assert parsed[0] == SWEEP_HEADER
    assert parsed[0][:5] == ["isd_m", "mode", "geo_mean_mbps", "arith_mean_mbps", "user_rates_mbps"]
    assert parsed[1][:2] == ["40", "baseline-maxpower"]
    assert len(parsed[1][4].split(";")) == 7
    assert parsed[2][2] == f"{rows[1].geo_mean:.6g}"


def test_sweep_mode_subset_keeps_fixed_order():
    cfg = small_sweep_config(modes=["pc-sched", "baseline-maxpower"])
    rows = run_sweep(cfg)
    assert [r.mode for r in rows[:2]] == ["baseline-maxpower", "pc-sched"]


def test_sweep_needs_hex_topology():
    with pytest.raises(ConfigError):
        run_sweep(parse_config(PAIR))


def test_cli_solve_and_verify_roundtrip(tmp_path, capsys):
    cfg = write(tmp_path, "pair.json", PAIR)
    sol = tmp_path / "sol.json"
    trace = tmp_path / "trace.csv"
    assert main(["solve", "--config", str(cfg), "--output", str(sol), "--trace", str(trace),
                 "--quiet"]) == 0
    record = json.loads(sol.read_text())
    assert record["status"] == "optimal"
    assert len(record["rates_mbps"]) == 2
    assert trace.read_text().splitlines()[0] == "iteration,live_boxes,u_best_eqrate,u_max_eqrate"
    assert main(["verify", "--config", str(cfg), "--solution", str(sol)]) == 0
    assert "OK" in capsys.readouterr().out


def test_cli_verify_tampered_solution(tmp_path, capsys):
    cfg = write(tmp_path, "pair.json", PAIR)
    sol = tmp_path / "sol.json"
    main(["solve", "--config", str(cfg), "--output", str(sol), "--quiet"])
    record = json.loads(sol.read_text())
    record["powers_mw"][0] = 1000.0
    write(tmp_path, "bad.json", record)
    code = main(["verify", "--config", str(cfg), "--solution", str(tmp_path / "bad.json")])
    assert code == 1
    assert "power_cap" in capsys.readouterr().out


def test_cli_config_error_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, "bad.json", '{\n "topology": {"kind": "hex7"},\n "solver": {"alpah": 1}\n}')
    assert main(["sweep", "--config", str(cfg)]) == 2
    err = capsys.readouterr().err
    assert "line 3" in err and "solver.alpah" in err


def test_cli_missing_file_exit_code(tmp_path):
    assert main(["solve", "--config", str(tmp_path / "nope.json")]) == 2


def test_cli_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["launch"])
    assert exc.value.code == 2


def test_cli_schedule_trace(tmp_path):
    cfg = write(tmp_path, "pair.json", {**PAIR, "scheduler": {"slots": 3}})
    out, trace = tmp_path / "s.json", tmp_path / "slots.csv"
    assert main(["schedule", "--config", str(cfg), "--output", str(out), "--trace", str(trace),
                 "--quiet"]) == 0
    assert json.loads(out.read_text())["slots"] == 3
    rows = trace.read_text().splitlines()
    assert rows[0] == "slot,user,rate_mbps,power_dbm_or_off,weight"
    assert len(rows) == 1 + 3 * 2


def test_cli_sweep_is_deterministic(tmp_path):
    cfg = write(tmp_path, "hex.json", {"topology": {"kind": "hex7"}, "scheduler": {"slots": 3},
                                       "sweep": {"isd_m": [60], "seed": 1}})
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["sweep", "--config", str(cfg), "--output", str(a), "--quiet"]) == 0
    assert main(["sweep", "--config", str(cfg), "--output", str(b), "--quiet", "--seed", "1"]) == 0
    assert a.read_bytes() == b.read_bytes()
    c = tmp_path / "c.csv"
    main(["sweep", "--config", str(cfg), "--output", str(c), "--quiet", "--seed", "2"])
    assert c.read_bytes() != a.read_bytes()


def test_default_config_object():
    cfg = ExperimentConfig()
    assert cfg.curve.L == 51.8
