import json

import numpy as np
import pytest

from diffadvect.cli import main
from diffadvect.config import RunConfig, apply_setting, parse_config_text
from diffadvect.errors import ConfigError

FAST = [
    "field = abc",
    "resolution = 16",
    "grid = 2,1,1",
    "scheduler = lma",
    "stride = 4,4,4",
    "max_iterations = 10",
    "particles_per_round = 1000",
]


def write_config(tmp_path, lines, name="run.cfg"):
    path = tmp_path / name
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def rounds_without_wall_clock(path):
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    keep = [i for i, col in enumerate(header) if not col.endswith("_s")]
    return [",".join(row.split(",")[i] for i in keep) for row in lines]


class TestConfigParsing:
    def test_file_roundtrip_with_comments(self):
        cfg = parse_config_text(
            """
            # experiment
            field = toroidal
            param.kappa = 0.75
            resolution = 32,32,16
            scheduler = gllma  # inline comment
            aabb_scale = 0.5
            export_curves = false
            """
        )
        assert cfg.field == "toroidal"
        assert cfg.field_params == {"kappa": 0.75}
        assert cfg.resolution == (32, 32, 16)
        assert cfg.scheduler == "gllma"
        assert cfg.export_curves is False

    def test_unknown_key_reports_line(self):
        with pytest.raises(ConfigError) as err:
            parse_config_text("fields = abc\nstep = 0.001\n")
        assert any("line 1" in e for e in err.value.errors)

    def test_all_errors_collected(self):
        cfg = RunConfig(field="abc", scheduler="magic", aabb_scale=2.0,
                        stride=(0, 4, 4), step=-1.0, max_iterations=5000)
        errors = cfg.validate()
        assert len(errors) >= 4
        joined = "\n".join(errors)
        for word in ("scheduler", "aabb_scale", "stride", "step", "max_iterations"):
            assert word in joined

    def test_grid_nodes_consistency(self):
        assert RunConfig(grid=(4, 2, 2), nodes=16).validate() == []
        assert RunConfig(grid=(4, 2, 2), nodes=8).validate() != []
        assert RunConfig(nodes=16).grid_dims() == (4, 2, 2)

    def test_apply_setting_rejects_bad_values(self):
        with pytest.raises(ConfigError):
            apply_setting(RunConfig(), "step", "fast")
        with pytest.raises(ConfigError):
            apply_setting(RunConfig(), "warp", "9")

    def test_hash_is_stable_and_output_independent(self):
        a = RunConfig(output="x")
        b = RunConfig(output="y")
        assert a.config_hash() == b.config_hash()
        assert a.config_hash() != RunConfig(scheduler="lma").config_hash()


class TestRunCommand:
    def test_run_writes_artifacts(self, tmp_path):
        cfg = write_config(tmp_path, FAST)
        out = tmp_path / "out"
        assert main(["run", "--config", str(cfg), "--output", str(out)]) == 0
        for name in ("rounds.csv", "lif.csv", "summary.json", "config.txt", "curves.bin"):
            assert (out / name).exists(), name
        summary = json.loads((out / "summary.json").read_text())
        assert summary["node_count"] == 2
        assert summary["config"]["scheduler"] == "lma"

    def test_bad_config_exits_2_listing_everything(self, tmp_path, capsys):
        cfg = write_config(tmp_path, ["scheduler = magic", "aabb_scale = 7"])
        assert main(["run", "--config", str(cfg)]) == 2
        err = capsys.readouterr().err
        assert "scheduler" in err and "aabb_scale" in err

    def test_flags_override_file(self, tmp_path):
        cfg = write_config(tmp_path, FAST)
        out = tmp_path / "out"
        assert main(["run", "--config", str(cfg), "--scheduler", "none",
                     "--output", str(out)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["config"]["scheduler"] == "none"

    def test_determinism_byte_identical(self, tmp_path):
        cfg = write_config(tmp_path, FAST + ["field = toroidal", "aabb_scale = 0.5"])
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["run", "--config", str(cfg), "--output", str(out1)]) == 0
        assert main(["run", "--config", str(cfg), "--output", str(out2)]) == 0
        assert (out1 / "lif.csv").read_bytes() == (out2 / "lif.csv").read_bytes()
        assert (out1 / "curves.bin").read_bytes() == (out2 / "curves.bin").read_bytes()
        assert rounds_without_wall_clock(out1 / "rounds.csv") == rounds_without_wall_clock(out2 / "rounds.csv")

    def test_provenance_block_reproduces_the_run(self, tmp_path):
        cfg = write_config(tmp_path, FAST + ["param.A = 1.5"])
        out1 = tmp_path / "orig"
        assert main(["run", "--config", str(cfg), "--output", str(out1)]) == 0
        # re-run purely from the emitted provenance block
        out2 = tmp_path / "replay"
        assert main(["run", "--config", str(out1 / "config.txt"), "--output", str(out2)]) == 0
        assert (out1 / "lif.csv").read_bytes() == (out2 / "lif.csv").read_bytes()
        assert (out1 / "curves.bin").read_bytes() == (out2 / "curves.bin").read_bytes()
        s1 = json.loads((out1 / "summary.json").read_text())
        s2 = json.loads((out2 / "summary.json").read_text())
        assert s1["config_hash"] == s2["config_hash"]


class TestCompareCommand:
    def _summary(self, path, scheduler, nodes, total):
        data = {
            "config": {"scheduler": scheduler},
            "node_count": nodes,
            "total_advection_s": total,
        }
        path.write_text(json.dumps(data), encoding="utf-8")
        return path

    def test_speedup_table(self, tmp_path, capsys):
        files = [
            self._summary(tmp_path / "a.json", "none", 16, 100.0),
            self._summary(tmp_path / "b.json", "none", 32, 50.0),
        ]
        assert main(["compare"] + [str(f) for f in files]) == 0
        out = capsys.readouterr().out.splitlines()
        assert out[0] == "scheduler,node_count,total_advection_s,speedup"
        assert out[1] == "none,16,100,1"
        assert out[2] == "none,32,50,2"


class TestExportCurves:
    def test_roundtrip(self, tmp_path):
        cfg = write_config(tmp_path, FAST)
        out = tmp_path / "out"
        assert main(["run", "--config", str(cfg), "--output", str(out)]) == 0
        dest = tmp_path / "lines.bin"
        assert main(["export-curves", "--run", str(out), "--out", str(dest)]) == 0
        from diffadvect.advect import read_curves

        h1, c1 = read_curves(out / "curves.bin")
        h2, c2 = read_curves(dest)
        assert h1["particle_ids"] == h2["particle_ids"]
        for pid in c1:
            np.testing.assert_array_equal(c1[pid], c2[pid])

    def test_missing_run_dir_is_config_error(self, tmp_path):
        assert main(["export-curves", "--run", str(tmp_path), "--out", str(tmp_path / "x.bin")]) == 2


class TestExitCodes:
    def test_round_cap_maps_to_4(self, tmp_path, monkeypatch):
        from diffadvect import cli
        from diffadvect.errors import RoundLimitError

        class Exploding:
            def __init__(self, *a, **k):
                pass

            def run(self):
                raise RoundLimitError("synthetic")

        monkeypatch.setattr(cli, "Simulator", Exploding)
        cfg = write_config(tmp_path, FAST)
        assert main(["run", "--config", str(cfg)]) == 4

    def test_invariant_violation_maps_to_3(self, tmp_path, monkeypatch):
        from diffadvect import cli
        from diffadvect.errors import InvariantError

        class Exploding:
            def __init__(self, *a, **k):
                pass

            def run(self):
                raise InvariantError("synthetic")

        monkeypatch.setattr(cli, "Simulator", Exploding)
        cfg = write_config(tmp_path, FAST)
        assert main(["run", "--config", str(cfg)]) == 3


class TestSweepCommand:
    def test_strong_sweep_structure(self, tmp_path):
        cfg = write_config(tmp_path, [
            "field = abc",
            "resolution = 8",
            "stride = 4,4,4",
            "max_iterations = 5",
            "particles_per_round = 1000",
            "export_curves = false",
        ])
        out = tmp_path / "sweep"
        assert main(["sweep", "--kind", "strong", "--config", str(cfg),
                     "--output", str(out)]) == 0
        run_dirs = [p for p in out.iterdir() if p.is_dir()]
        assert len(run_dirs) == 16  # 4 node counts x 4 schedulers
        table = (out / "speedup.csv").read_text().splitlines()
        assert table[0] == "scheduler,node_count,total_advection_s,speedup"
        assert len(table) == 1 + 16

    def test_param_sweep_aabb_axis(self, tmp_path):
        cfg = write_config(tmp_path, [
            "field = abc",
            "resolution = 8",
            "grid = 2,1,1",
            "stride = 4,4,4",
            "max_iterations = 5",
            "export_curves = false",
        ])
        out = tmp_path / "sweep"
        assert main(["sweep", "--kind", "param", "--axis", "aabb_scale",
                     "--config", str(cfg), "--output", str(out)]) == 0
        assert (out / "comparison.csv").exists()
        run_dirs = [p.name for p in out.iterdir() if p.is_dir()]
        assert len(run_dirs) == 12  # 3 scales x 4 schedulers
