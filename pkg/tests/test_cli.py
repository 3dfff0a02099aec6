import math
import json

import numpy as np
import pandas as pd
import pytest

from mcvd.controllers.experimentController import build_config, flag_degradation, list_experiments, validate
from mcvd.database import ArtifactStore, checksum, json_safe, read_csv, read_manifest
from mcvd.exceptions import ArtifactError, ConfigError, DomainError
from mcvd.main import main
from mcvd.routes.cliRoutes import dispatch, parse_pairs
from mcvd.schema.experimentSchema import EXPERIMENTS
from mcvd.utils.channelUtils import degradation_rate_from_half_life

SMALL_FIG1 = ["--set", "n_molecules=40", "--set", "step_dt=1e-5", "--set", "horizon=0.02",
              "--set", "half_lives=inf,0.016", "--set", "workers=1"]


def run_dir(tmp_path, experiment):
    return tmp_path / experiment


class TestConfigParsing:

    def test_pairs_and_comments(self):
        values = parse_pairs(["# header", "n1 = 500  # molecules", "", "half_life=inf"])
        assert values == {"n1": "500", "half_life": "inf"}

    def test_bad_line(self):
        with pytest.raises(ConfigError, match="expected key=value"):
            parse_pairs(["n1 500"])

    def test_defaults_then_values(self):
        cfg = build_config({"n1": "500"}, experiment="fig4-pe-vs-tau")
        assert cfg.n1 == 500
        assert cfg.half_life == 0.016
        assert cfg.symbol_duration == 0.06

    def test_list_values(self):
        cfg = build_config({"half_lives": "inf, 0.016", "windows": "4:4.2,0:0.4", "threshold": "auto"})
        assert math.isinf(cfg.half_lives[0]) and cfg.half_lives[1] == 0.016
        assert cfg.windows == [(4.0, 4.2), (0.0, 0.4)]
        assert cfg.threshold is None

    def test_unknown_key(self):
        with pytest.raises(ConfigError) as excinfo:
            build_config({"bogus": "1"})
        assert any("bogus" in v for v in excinfo.value.violations)

    def test_receiver_enclosing_transmitter(self):
        with pytest.raises(ConfigError, match="tx_center_distance"):
            build_config({"tx_center_distance": "5"})

    def test_tx_center_distance_overrides_distance(self):
        cfg = build_config({"tx_center_distance": "20"})
        assert cfg.channel().distance == pytest.approx(10.0)

    def test_channel_rates_follow_half_lives(self):
        cfg = build_config({})
        assert cfg.channel(half_life=0.016).degradation_rate == degradation_rate_from_half_life(0.016)
        assert cfg.channel(half_life=math.inf).degradation_rate == 0.0
        with pytest.raises(DomainError):
            cfg.channel(half_life=-1.0)


class TestValidate:

    def test_defaults_are_clean(self):
        assert validate({}) == []

    def test_errors_name_the_key(self):
        diagnostics = validate({"half_life": "-1"})
        assert [d.level for d in diagnostics] == ["error"]
        assert diagnostics[0].key == "half_life"

    def test_coarse_step_is_a_warning(self):
        diagnostics = validate({"step_dt": "1e-2"})
        assert [(d.level, d.key) for d in diagnostics] == [("warning", "step_dt")]

    def test_endless_memory_is_a_warning(self):
        diagnostics = validate({"half_life": "inf"})
        assert [(d.level, d.key) for d in diagnostics] == [("warning", "allow_truncation")]

    def test_sweep_points_are_checked(self):
        diagnostics = validate({"experiment": "fig9-ber", "half_lives": "inf,0.016", "ts_grid": "0.03,0.06"})
        assert [(d.level, d.key) for d in diagnostics] == [("warning", "allow_truncation")] * 2
        assert "half_life=inf, ts=0.03" in diagnostics[0].message
        assert "half_life=inf, ts=0.06" in diagnostics[1].message

    def test_sweep_warning_precedes_failing_run(self, tmp_path):
        values = {"experiment": "fig9-ber", "half_lives": "inf", "ts_grid": "0.06"}
        assert validate(values)
        assert dispatch(["run", "fig9-ber", "--set", "half_lives=inf", "--set", "ts_grid=0.06",
                         "--out", str(tmp_path)]) == 3

    def test_distance_grid_is_checked(self):
        diagnostics = validate({"experiment": "fig11-capacity-distance", "allow_truncation": "false",
                                "half_lives": "1.024", "distances": "1,50", "ts_grid": "0.0005"})
        assert len(diagnostics) == 2
        assert "distance=50" in diagnostics[1].message

    def test_command_exit_codes(self, tmp_path, capsys):
        good = tmp_path / "good.cfg"
        good.write_text("experiment = custom\nhalf_life = 0.016  # 16 ms\n")
        assert dispatch(["validate", str(good)]) == 0
        bad = tmp_path / "bad.cfg"
        bad.write_text("half_life = -1\n")
        assert dispatch(["validate", str(bad)]) == 2
        assert "error: half_life" in capsys.readouterr().out
        assert dispatch(["validate", str(tmp_path / "missing.cfg")]) == 2


def test_list(capsys):
    assert dispatch(["list"]) == 0
    out = capsys.readouterr().out
    for name in EXPERIMENTS:
        assert f"{name}:" in out
    assert len(list_experiments()) == len(EXPERIMENTS)


class TestRun:

    def test_itr_table(self, tmp_path, capsys):
        assert main(["run", "fig8-itr", "--out", str(tmp_path)]) == 0
        out_dir = run_dir(tmp_path, "fig8-itr")
        frame = read_csv(out_dir / "itr.csv")
        assert list(frame.columns) == ["half_life", "degrades", "t", "itr"]
        assert np.all(np.isfinite(frame[["half_life", "t", "itr"]].to_numpy()))
        assert frame.loc[frame["degrades"], "half_life"].min() > 0
        row = frame[~frame["degrades"] & np.isclose(frame["t"], 0.2)]
        assert len(row) == 1
        assert row["itr"].iloc[0] == pytest.approx(0.5222, abs=5e-4)
        manifest = read_manifest(out_dir / "manifest.json")
        assert manifest.experiment == "fig8-itr"
        assert manifest.outputs["itr.csv"] == checksum(out_dir / "itr.csv")
        assert "inf" in manifest.config["half_lives"]
        assert f"itr.csv  sha256:{manifest.outputs['itr.csv']}" in capsys.readouterr().out

    def test_same_seed_same_bytes(self, tmp_path):
        first, second = tmp_path / "a", tmp_path / "b"
        assert dispatch(["run", "fig1-hitmap", "--out", str(first), "--seed", "4"] + SMALL_FIG1) == 0
        assert dispatch(["run", "fig1-hitmap", "--out", str(second), "--seed", "4"] + SMALL_FIG1[:-2]
                        + ["--set", "workers=2"]) == 0
        a = read_manifest(run_dir(first, "fig1-hitmap") / "manifest.json").outputs
        b = read_manifest(run_dir(second, "fig1-hitmap") / "manifest.json").outputs
        assert set(a) == {"fig1-hitmap.csv", "fig1-hits.csv", "fig1-summary.csv"}
        assert a == b

    def test_hitmap_columns(self, tmp_path):
        assert dispatch(["run", "fig1-hitmap", "--out", str(tmp_path)] + SMALL_FIG1) == 0
        out_dir = run_dir(tmp_path, "fig1-hitmap")
        hitmap = read_csv(out_dir / "fig1-hitmap.csv")
        assert {"half_life", "bin_start_s", "count", "expected", "lower", "upper"} <= set(hitmap.columns)
        summary = read_csv(out_dir / "fig1-summary.csv")
        assert (summary["absorbed"] + summary["degraded"] + summary["alive"] == 40).all()
        hits = read_csv(out_dir / "fig1-hits.csv")
        assert hits.groupby("half_life").size().sum() == summary["absorbed"].sum()

    def test_config_file_then_set(self, tmp_path):
        config = tmp_path / "peak.cfg"
        config.write_text("distances = 1,2,3\nhalf_lives = inf\n")
        assert dispatch(["run", "fig5-peak-time", "--config", str(config), "--set", "distances=4,8",
                         "--out", str(tmp_path)]) == 0
        frame = read_csv(run_dir(tmp_path, "fig5-peak-time") / "peak-time.csv")
        assert frame["distance"].tolist() == [4.0, 8.0]
        assert frame["t_peak"].tolist() == pytest.approx([16 / (6 * 79.4), 64 / (6 * 79.4)])

    def test_custom_threshold(self, tmp_path):
        assert dispatch(["run", "custom", "--set", "threshold=13", "--out", str(tmp_path)]) == 0
        out_dir = run_dir(tmp_path, "custom")
        profile = read_csv(out_dir / "pe-vs-tau.csv")
        assert profile["tau"].tolist() == [13]
        assert profile["pe"].iloc[0] < 1e-3
        channel = read_csv(out_dir / "channel.csv")
        assert channel["total_fraction"].iloc[0] == pytest.approx(0.03726, abs=1e-4)
        assert channel["diffusion_coeff"].iloc[0] == 79.4
        assert channel["stokes_einstein_diffusion"].iloc[0] == pytest.approx(88.70, abs=0.01)
        assert channel["half_life"].iloc[0] == pytest.approx(0.016)
        config = read_manifest(out_dir / "manifest.json").config
        assert (config["viscosity"], config["molecule_radius"], config["temperature"]) == (1e-3, 2.56e-9, 310.0)

    def test_invalid_geometry_exits_2(self, tmp_path):
        assert dispatch(["run", "custom", "--set", "tx_center_distance=5", "--out", str(tmp_path)]) == 2

    def test_endless_memory_exits_3(self, tmp_path):
        assert dispatch(["run", "custom", "--set", "half_life=inf", "--out", str(tmp_path)]) == 3

    def test_unwritable_output_exits_4(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        assert dispatch(["run", "fig8-itr", "--out", str(blocker)]) == 4


class TestArtifacts:

    def test_half_life_flag(self):
        frame = flag_degradation(pd.DataFrame({"half_life": [math.inf, 0.016], "ber": [0.1, 0.2]}))
        assert list(frame.columns) == ["half_life", "degrades", "ber"]
        assert frame["half_life"].tolist() == [0.0, 0.016]
        assert frame["degrades"].tolist() == [False, True]
        untouched = pd.DataFrame({"t": [0.1]})
        assert flag_degradation(untouched) is untouched

    def test_json_safe(self):
        assert json_safe({"a": [math.inf, 1.0], "b": -math.inf}) == {"a": ["inf", 1.0], "b": "-inf"}

    def test_write_is_stable(self, tmp_path):
        store = ArtifactStore(str(tmp_path)).open()
        frame = pd.DataFrame({"x": [0.1, 1 / 3], "y": [1, 2]})
        digest = store.write_csv("t.csv", frame)
        assert digest == store.write_csv("t.csv", frame)
        assert read_csv(tmp_path / "t.csv")["x"].tolist() == [0.1, 1 / 3]
        assert not list(tmp_path.glob("*.tmp*"))

    def test_unreadable_manifest(self, tmp_path):
        broken = tmp_path / "manifest.json"
        broken.write_text(json.dumps({"experiment": "x"}))
        with pytest.raises(ArtifactError):
            read_manifest(broken)
        with pytest.raises(ArtifactError):
            read_csv(tmp_path / "nope.csv")
