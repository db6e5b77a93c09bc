import json
from pathlib import Path

import numpy as np
import pytest

import pncrelay.sim as sim_mod
from pncrelay.channel import MeasuredCir, write_cir
from pncrelay.cli import CSV_COLUMNS, ConfigError, main, parse_config, resolved_config
from pncrelay.receiver import ReceiverConfig
from pncrelay.sim import SimConfig

FIXTURES = Path(__file__).parent / "fixtures"


def write_config(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


TINY = {
    "master_seed": 3,
    "receiver": {"outer_iterations": 1},
    "sweep": {"snr_grid_db": [4.0], "sigma_u_grid": [0.1], "frames_per_point": 2},
}


def data_lines(path):
    return [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]


# -- parsing -----------------------------------------------------------------


def test_minimal_config_gets_defaults(tmp_path):
    spec = parse_config(write_config(tmp_path, {"master_seed": 42}))
    assert spec.master_seed == 42
    assert spec.sim.receiver == ReceiverConfig()
    d = SimConfig()
    assert (spec.sim.ofdm, spec.sim.channel, spec.sim.code) == (d.ofdm, d.channel, d.code)
    assert spec.sim.frames_per_point == 500 and spec.output.format == "csv"
    assert spec.output.workers == 1


def test_eta_out_of_range_names_key(tmp_path):
    with pytest.raises(ConfigError, match="eta"):
        parse_config(write_config(tmp_path, {"receiver": {"eta": 1.5}}))
    assert main(["ber-sweep", "--config", str(write_config(tmp_path, {"receiver": {"eta": 1.5}}))]) == 2


@pytest.mark.parametrize("cfg, key", [
    ({"receiver": {"etta": 0.9}}, "receiver.etta"),
    ({"bogus": 1}, "bogus"),
    ({"sweep": {"frames_per_point": "many"}}, "frames_per_point"),
    ({"sweep": {"snr_grid_db": 8}}, "snr_grid_db"),
    ({"output": {"workers": 0}}, "workers"),
    ({"output": {"format": "xml"}}, "format"),
])
def test_bad_keys_and_types_are_named(tmp_path, cfg, key):
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        parse_config(write_config(tmp_path, cfg))


def test_fixture_golden_snapshot():
    spec = parse_config(FIXTURES / "experiment.json")
    golden = json.loads((FIXTURES / "experiment.resolved.json").read_text())
    assert resolved_config(spec) == golden


def test_resolved_config_round_trips():
    spec = parse_config(FIXTURES / "experiment.json")
    again = parse_config(resolved_config(spec))
    assert resolved_config(again) == resolved_config(spec)
    assert again.sim == spec.sim


def test_flag_overrides(tmp_path):
    spec = parse_config(write_config(tmp_path, TINY), seed=9, frames=7, workers=2, fmt="jsonl", out="x")
    assert (spec.master_seed, spec.sim.frames_per_point, spec.output.workers) == (9, 7, 2)
    assert spec.output.format == "jsonl" and str(spec.out_path) == "x"


# -- running -----------------------------------------------------------------


def test_tiny_run_writes_one_row_and_header(tmp_path):
    out = tmp_path / "r.csv"
    assert main(["ber-sweep", "--config", str(write_config(tmp_path, TINY)), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("# pncrelay 0.1.0 ber-sweep")
    assert lines[1] == "# master_seed: 3"
    assert lines[2].startswith("# config: ")
    assert data_lines(out)[0] == ",".join(CSV_COLUMNS)
    rows = data_lines(out)[1:]
    assert len(rows) == 1
    fields = dict(zip(CSV_COLUMNS, rows[0].split(",")))
    assert fields["scheme"] == "aca_fgd" and fields["frames"] == "2" and fields["bits"] == "672"
    assert fields["wall_time_s"] == ""


def test_header_config_reruns_bit_identically(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["ber-sweep", "--config", str(write_config(tmp_path, TINY)), "--out", str(a)])
    embedded = json.loads(a.read_text().splitlines()[2][len("# config: "):])
    main(["ber-sweep", "--config", str(write_config(tmp_path, embedded, "e.json")), "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()


def test_jsonl_output(tmp_path):
    out = tmp_path / "r.jsonl"
    cfg = dict(TINY, sweep=dict(TINY["sweep"], snr_grid_db=[2.0, 4.0]))
    assert main(["ber-sweep", "--config", str(write_config(tmp_path, cfg)), "--out", str(out),
                 "--format", "jsonl"]) == 0
    rows = [json.loads(ln) for ln in data_lines(out)]
    assert [r["snr_db"] for r in rows] == [2.0, 4.0]
    assert list(rows[0]) == list(CSV_COLUMNS)


def test_failed_point_gives_nonzero_exit(tmp_path, monkeypatch):
    def broken(*a, **k):
        raise RuntimeError("detector exploded")

    monkeypatch.setattr(sim_mod, "run_multihop_trial", broken)
    out = tmp_path / "r.csv"
    assert main(["ber-sweep", "--config", str(write_config(tmp_path, TINY)), "--out", str(out)]) == 1
    text = out.read_text()
    assert "# failed:" in text and "detector exploded" in text
    assert len(data_lines(out)) == 2


def test_energy_table_subcommand(tmp_path):
    out = tmp_path / "e.csv"
    cfg = {"master_seed": 1, "energy_table": {"sigma_u_list": [0.0, 1.5], "depth_list": [0, 2],
                                              "realizations": 3}}
    assert main(["energy-table", "--config", str(write_config(tmp_path, cfg)), "--out", str(out)]) == 0
    rows = data_lines(out)
    assert rows[0] == "sigma_u,depth,energy_pct,realizations"
    assert len(rows) == 5
    static = [r.split(",") for r in rows[1:3]]
    assert all(float(r[2]) == pytest.approx(100.0) for r in static)


def test_cir_convert_subcommand(tmp_path):
    n_f = 64
    samples = np.zeros((n_f, 4), complex)
    samples[:, 2] = 1.0  # static two-sample delay
    src = tmp_path / "m.cir"
    write_cir(src, MeasuredCir(samples, 1000.0, 1000.0))
    out = tmp_path / "m.npz"
    assert main(["cir-convert", "--input", str(src), "--out", str(out)]) == 0
    with np.load(out) as z:
        H, bins = z["H"], z["bins"]
        assert "cir-convert" in str(z["header"])
    assert H.shape == (n_f, n_f) and np.array_equal(bins, np.arange(n_f))
    k = np.arange(n_f)
    assert np.allclose(np.diag(H), np.exp(-2j * np.pi * k * 2 / n_f), atol=1e-12)
    assert np.allclose(H - np.diag(np.diag(H)), 0, atol=1e-12)


def test_missing_file_and_bad_output(tmp_path):
    assert main(["ber-sweep", "--config", str(tmp_path / "nope.json")]) == 2
    cfg = write_config(tmp_path, TINY)
    assert main(["ber-sweep", "--config", str(cfg), "--out", str(tmp_path / "no" / "dir.csv")]) == 2
