import csv
import json

import numpy as np
import pytest

from rsmajam.channels import ScenarioConfig, channel_set_for
from rsmajam.harness import (BerSpec, ExperimentSpec, ber_au, ber_pu, desk_scenario, emit_reports,
                             qos_floor, run_sweep, solve_schemes)
from rsmajam.harness.ber import qpsk_awgn_ber, qpsk_rayleigh_ber, stream_gains
from rsmajam.harness.cli import main
from rsmajam.harness.experiments import power_for_snr, scenario_at
from rsmajam.harness.reports import (interference_profile, jamming_profile, load_precoders,
                                     precoder_rows, save_precoders, write_table)
from rsmajam.metrics import PrecoderSet
from rsmajam.thresholds import assemble_thresholds

from conftest import crandn

TINY = dict(Nt=2, K=2, L=1, M=1, Nr=[1], N=2, Sp=[[1]], Pt_bar=10.0, N0=0.1, saa_samples=8,
            zeta=3.0, max_inner=10, max_outer=5, delay_spread=1e-7)


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------- experiment plumbing

def test_qos_preset():
    assert qos_floor(0.0) == 0.0
    assert qos_floor(5.0) == 0.25
    assert qos_floor(15.0) == 0.5 and qos_floor(20.0) == 0.5
    assert qos_floor(25.0) == 1.0 and qos_floor(30.0) == 1.0


def test_scenario_at_grid_points():
    cfg = desk_scenario()
    snr = scenario_at(cfg, "snr", 10.0)
    assert snr.Pt_bar == pytest.approx(10 * cfg.N0 * cfg.N)
    assert snr.mu / snr.Pt_bar == pytest.approx(cfg.mu / cfg.Pt_bar)
    assert scenario_at(cfg, "qos", 25.0).Rth == 1.0
    assert scenario_at(cfg, "rho", 0.9).rho == 0.9
    a = scenario_at(cfg, "csit_alpha", 0.3)
    assert a.alpha_i == a.alpha_p == 0.3
    assert scenario_at(cfg, "none", None) is cfg
    assert power_for_snr(cfg, 0.0) == pytest.approx(cfg.N0 * cfg.N)


def test_experiment_spec_validation():
    cfg = desk_scenario()
    with pytest.raises(ValueError):
        ExperimentSpec(cfg, sweep="bogus")
    with pytest.raises(ValueError):
        ExperimentSpec(cfg, sweep="rho", grid=[])
    with pytest.raises(ValueError):
        ExperimentSpec(cfg, realizations=0)
    with pytest.raises(ValueError):
        ExperimentSpec(cfg, schemes=("OMA",))
    spec = ExperimentSpec(cfg, jamming_mode="barrage", interference_constraints=False)
    assert spec.base_scenario().jamming == "barrage"
    assert not spec.base_scenario().interference_constraints


def test_run_sweep_rows_and_summary():
    cfg = ScenarioConfig(**TINY)
    spec = ExperimentSpec(cfg, sweep="rho", grid=[0.45, 0.9], realizations=2, schemes=("SDMA",))
    res = run_sweep(spec)
    assert len(res.rows) == 4 and len(res.summary) == 2
    assert all(r["error"] == "" and r["power_ok"] for r in res.rows)
    m = np.mean([r["R_sum"] for r in res.rows if r["value"] == 0.45])
    assert res.mean_rate(0.45, "SDMA") == pytest.approx(m)
    with pytest.raises(KeyError):
        res.mean_rate(0.5, "SDMA")


def test_solve_schemes_reports_infeasible_domain():
    cfg = ScenarioConfig(**{**TINY, "Rth": 50.0})
    cs = channel_set_for(cfg)
    out = solve_schemes(cfg, cs, assemble_thresholds(cfg, cs), ("SDMA",))
    assert "constraint family" in out["SDMA"]["error"]


# ---------------------------------------------------------------- BER oracles

def ber_cfg(**kw):
    return ScenarioConfig(**{**TINY, "N": 4, "Sp": [[1, 3]], **kw})


@pytest.mark.parametrize("Es", [0.4, 1.2, 2.0])
def test_awgn_ber_matches_closed_form(Es):
    cfg = ber_cfg()
    spec = BerSpec([Es], 200_000, "AU", channel="awgn", perfect_csi=True)
    c = ber_au(spec, None, np.zeros((cfg.N, cfg.Nt)), cfg)
    ref = qpsk_awgn_ber(Es / cfg.N / cfg.N0)
    assert abs(c.ber[0] - ref) <= 4 * np.sqrt(ref * (1 - ref) / c.bits[0])


@pytest.mark.parametrize("Es", [1.0, 10.0])
def test_rayleigh_ber_matches_closed_form(Es):
    cfg = ber_cfg()
    spec = BerSpec([Es], 200_000, "PU")
    c = ber_pu(spec, None, np.zeros((cfg.N, cfg.Nt)), cfg)
    ref = qpsk_rayleigh_ber(Es / cfg.N / cfg.N0)
    assert abs(c.ber[0] - ref) <= 4 * c.stderr_block[0]


def test_closed_form_values():
    assert qpsk_awgn_ber(0.0) == pytest.approx(0.5)
    assert qpsk_rayleigh_ber(0.0) == pytest.approx(0.5)
    assert qpsk_awgn_ber(3.090232 ** 2) == pytest.approx(1.0e-3, rel=1e-5)   # Q(3.090232) = 1e-3
    assert qpsk_rayleigh_ber(1e6) < 1e-6


def test_overwhelming_jamming_gives_coin_flips():
    cfg = ber_cfg()
    pre = PrecoderSet.zeros(cfg.K, cfg.L, cfg.N, cfg.Nt)
    pre.f[0] = 1e4
    g = np.ones((cfg.N, cfg.Nt))
    c = ber_au(BerSpec([10.0], 100_000, "AU"), pre, g, cfg)
    assert abs(c.ber[0] - 0.5) <= 4 * c.stderr[0]


def test_common_random_numbers_and_silence(rng):
    cfg = ber_cfg()
    g = crandn(rng, cfg.N, cfg.Nt)
    spec = BerSpec([5.0, 50.0], 20_000, "AU")
    a = ber_au(spec, None, g, cfg)
    b = ber_au(spec, PrecoderSet.zeros(cfg.K, cfg.L, cfg.N, cfg.Nt), g, cfg)
    assert np.array_equal(a.errors, b.errors)
    assert np.all(stream_gains(None, g, cfg.N, 4) == 0)


def test_ber_spec_validation():
    for bad in (dict(Es_grid=[]), dict(Es_grid=[2.0, 1.0]), dict(Es_grid=[-1.0]),
                dict(Es_grid=[1.0], bits_per_point=0), dict(Es_grid=[1.0], victim="SU"),
                dict(Es_grid=[1.0], channel="rician")):
        with pytest.raises(ValueError):
            BerSpec(**bad)
    cfg = ber_cfg()
    with pytest.raises(ValueError):
        ber_au(BerSpec([1.0], victim="PU"), None, np.zeros((4, 2)), cfg)
    with pytest.raises(ValueError):
        ber_pu(BerSpec([1.0], victim="AU"), None, np.zeros((4, 2)), cfg)


# ---------------------------------------------------------------- reports

def test_write_table_formatting(tmp_path):
    path = write_table([{"a": 0.1, "b": True, "c": [1.0, 2.5], "d": None, "e": np.int64(3)}], tmp_path / "t.csv")
    assert path.read_text() == "a,b,c,d,e\n0.1,true,1;2.5,,3\n"
    with pytest.raises(ValueError):
        write_table([], tmp_path / "x.csv")


def test_emit_reports_manifest(tmp_path):
    files = emit_reports({"one": [{"x": 1.0}], "two": (["y", "x"], [{"x": 2, "y": np.nan}])},
                         tmp_path / "out", {"seed": np.int64(4), "value": np.inf})
    assert [f.name for f in files] == ["one.csv", "two.csv", "manifest.json"]
    man = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert man == {"seed": 4, "value": "inf", "files": ["one.csv", "two.csv"]}
    assert (tmp_path / "out" / "two.csv").read_text() == "y,x\nnan,2\n"
    with pytest.raises(ValueError):
        emit_reports({}, tmp_path)


def test_profiles_and_precoder_artifacts(tmp_path):
    cfg = ScenarioConfig(**TINY)
    cs = channel_set_for(cfg)
    th = assemble_thresholds(cfg, cs)
    res = solve_schemes(cfg, cs, th, ("SDMA",))
    pre = res["SDMA"]["pre"]
    intf = interference_profile(cfg, cs, th, pre, "SDMA")
    jam = jamming_profile(cfg, cs, th, pre, "SDMA")
    assert len(intf) == cfg.M * cfg.N and all(r["within"] for r in intf)
    assert len(jam) == cfg.L * cfg.N and all(r["within"] for r in jam)
    assert [r["jammed"] for r in jam] == [True, False]
    rows = precoder_rows(pre, "SDMA")
    assert len(rows) == (1 + cfg.K + cfg.L) * cfg.N * cfg.Nt
    save_precoders(pre, tmp_path / "p.npz")
    back = load_precoders(tmp_path / "p.npz")
    assert np.array_equal(back.stacked(), pre.stacked()) and np.array_equal(back.c_bar, pre.c_bar)


# ---------------------------------------------------------------- command line

@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(ScenarioConfig(**TINY).to_dict()))
    return path


def test_cli_thresholds_default_scenario(tmp_path, capsys):
    assert main(["thresholds", "--out", str(tmp_path / "t")]) == 0
    rows = read_csv(tmp_path / "t" / "thresholds.csv")
    kinds = {r["kind"] for r in rows}
    assert kinds == {"J", "psi", "I"}
    man = json.loads((tmp_path / "t" / "manifest.json").read_text())
    assert man["scenario"] == desk_scenario().to_dict()


def test_cli_optimize_outputs(tmp_path, tiny_config):
    out = tmp_path / "o"
    code = main(["optimize", "--config", str(tiny_config), "--scheme", "SDMA,RSMA", "--out", str(out)])
    assert code == 0
    names = sorted(p.name for p in out.iterdir())
    for s in ("SDMA", "RSMA"):
        assert f"rates_{s}.csv" in names and f"trace_{s}.csv" in names and f"precoders_{s}.npz" in names
    summary = read_csv(out / "summary.csv")
    assert [r["scheme"] for r in summary] == ["SDMA", "RSMA"]
    assert all(r["audit_ok"] == "true" for r in summary)
    assert float(summary[1]["R_sum"]) >= float(summary[0]["R_sum"]) - 1e-9


def test_cli_sweep_and_flags(tmp_path, tiny_config):
    out = tmp_path / "s"
    code = main(["sweep", "--config", str(tiny_config), "--scheme", "SDMA", "--sweep", "rho",
                 "--grid", "0.45,0.9", "--realizations", "1", "--jamming", "barrage",
                 "--no-interference-constraints", "--seed", "9", "--out", str(out)])
    assert code == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["scenario"]["jamming"] == "barrage" and man["seed"] == 9
    assert man["scenario"]["interference_constraints"] is False
    assert len(read_csv(out / "results.csv")) == 2


def test_cli_ber_au(tmp_path, tiny_config):
    out = tmp_path / "b"
    code = main(["ber-au", "--config", str(tiny_config), "--jamming", "off", "--es-grid", "1,10",
                 "--bits", "2000", "--out", str(out)])
    assert code == 0
    rows = read_csv(out / "ber_au.csv")
    assert [r["label"] for r in rows] == ["off", "off"]


def test_cli_run_options_in_config(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"scenario": ScenarioConfig(**TINY).to_dict(), "Es_grid": [3.0],
                                "bits_per_point": 1000}))
    assert main(["ber-pu", "--config", str(path), "--out", str(tmp_path / "p")]) == 0
    rows = read_csv(tmp_path / "p" / "ber_pu.csv")
    assert [r["label"] for r in rows] == ["none", "constrained", "unconstrained"]
    assert {r["Es"] for r in rows} == {"3"}


def test_cli_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"Nt": 4, "bogus": 1}))
    assert main(["thresholds", "--config", str(bad), "--out", str(tmp_path)]) == 2
    bad.write_text(json.dumps({"scenario": {}, "colour": 1}))
    assert main(["thresholds", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert main(["thresholds", "--config", str(tmp_path / "missing.json")]) == 2
    assert "config error" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["optimize", "--scheme", "OMA"])
