"""Config parsing, normalization round trip, CLI subcommands, artifacts."""

import hashlib
import json

import numpy as np
import pytest

from stochqg.cli import build_runtime, main
from stochqg.config import (
    ConfigError,
    SimConfig,
    config_hash,
    normalize_config,
    parse_config,
)
from stochqg.forcing import load_noise_path


FAST = [
    "--set", "physics.nu=2.0",
    "--set", "time.dt=0.125",
    "--set", "noise.dt_noise=0.125",
    "--set", "noise.t_min=-32",
    "--set", "noise.t_max=8",
]


class TestParseConfig:
    def test_minimal_document_fills_defaults(self):
        cfg = parse_config("grid.nx = 16\n")
        assert cfg.nx == 16
        assert cfg.ny == SimConfig().ny
        norm = normalize_config(cfg)
        assert "grid.nx = 16" in norm
        assert "physics.nu = 0.5" in norm

    def test_zero_viscosity_rejected(self):
        with pytest.raises(ConfigError) as err:
            parse_config("physics.nu = 0\n")
        assert any("viscosity must be positive" in v for v in err.value.violations)

    def test_dt_alignment_rejected(self):
        with pytest.raises(ConfigError) as err:
            parse_config("time.dt = 0.03\n")
        assert any("divide" in v for v in err.value.violations)

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError) as err:
            parse_config("grid.nx = 16\nbogus.key = 1\n")
        assert any("unknown key" in v for v in err.value.violations)

    def test_all_violations_enumerated(self):
        with pytest.raises(ConfigError) as err:
            parse_config("physics.nu = -1\ngrid.nz = 2\nnope = 3\n")
        assert len(err.value.violations) >= 3

    def test_comments_and_blank_lines(self):
        cfg = parse_config("# a comment\n\ngrid.nx = 16  # trailing\n")
        assert cfg.nx == 16

    def test_duplicate_key_rejected(self):
        with pytest.raises(ConfigError):
            parse_config("grid.nx = 16\ngrid.nx = 32\n")

    def test_n_table_validation(self):
        with pytest.raises(ConfigError) as err:
            parse_config("physics.N = 1.0,2.0\n")
        assert any("physics.N" in v for v in err.value.violations)

    def test_round_trip(self):
        cfg = parse_config("grid.nx = 16\nphysics.nu = 1.25\nnoise.q0 = 0.125\n"
                           "init.kind = eigenmode\ntime.linear_only = true\n")
        again = parse_config(normalize_config(cfg))
        assert again == cfg
        assert config_hash(again) == config_hash(cfg)

    def test_hash_changes_with_content(self):
        a = parse_config("grid.nx = 16\n")
        b = parse_config("grid.nx = 32\n")
        assert config_hash(a) != config_hash(b)


class TestBuildRuntime:
    def test_noise_file_mismatch(self, tmp_path):
        cfg = parse_config("")
        rtdir = tmp_path / "o"
        cfg.out_dir = str(rtdir)
        cfg.noise_file = str(tmp_path / "n.bin")
        cfg.noise_t_min, cfg.noise_t_max = -1.0, 1.0
        from stochqg.forcing import make_noise_path, save_noise_path
        save_noise_path(make_noise_path(1, 3, cfg.dt_noise, -1.0, 1.0), cfg.noise_file)
        with pytest.raises(ConfigError):
            build_runtime(cfg)  # 3 modes in file vs 8 in config


class TestCLI:
    def test_validate_defaults(self, capsys, tmp_path):
        rc = main(["validate", "--set", f"output.dir={tmp_path}",
                   "--set", "noise.t_min=-4", "--set", "noise.t_max=4"])
        out = capsys.readouterr().out
        assert rc == 0
        assert "checks passed" in out
        assert "FAIL" not in out

    def test_spectrum_reports_lambda1(self, capsys):
        rc = main(["spectrum"])
        out = capsys.readouterr().out
        assert rc == 0
        lam = float(out.splitlines()[0].split("=")[1])
        assert abs(lam - 0.25) < 5e-3

    def test_simulate_deterministic_checksums(self, tmp_path, capsys):
        # Identical (seed, config) runs produce bitwise-identical artifacts.
        out = tmp_path / "run"
        sums = []
        for _ in range(2):
            rc = main(["simulate", "--set", f"output.dir={out}",
                       "--set", "time.t1=1.0", "--set", "init.kind=random",
                       "--set", "noise.t_min=-2", "--set", "noise.t_max=2",
                       "--set", "time.snapshot_every=8"])
            assert rc == 0
            h = hashlib.sha256()
            for f in sorted(out.iterdir()):
                h.update(f.name.encode())
                h.update(f.read_bytes())
            sums.append(h.hexdigest())
        assert sums[0] == sums[1]

    def test_simulate_artifacts(self, tmp_path, capsys):
        out = tmp_path / "run"
        rc = main(["simulate", "--set", f"output.dir={out}",
                   "--set", "time.t1=0.5",
                   "--set", "noise.t_min=-2", "--set", "noise.t_max=2"])
        assert rc == 0
        diag = (out / "diagnostics.csv").read_text().splitlines()
        assert diag[1] == "t,H,V,Vdual_liftx,xi,residual,dt"
        assert diag[0].startswith("# config=")
        assert (out / "config.txt").exists()
        assert (out / "snapshot_00000.bin").exists()

    def test_bad_config_exit_one(self, tmp_path, capsys):
        f = tmp_path / "bad.cfg"
        f.write_text("physics.nu = 0\n")
        rc = main(["simulate", str(f)])
        err = capsys.readouterr().err
        assert rc == 1
        record = json.loads(err.strip().splitlines()[-1])
        assert record["error"] == "config"
        assert "viscosity" in record["message"]

    def test_numerical_abort_exit_two(self, tmp_path, capsys):
        rc = main(["simulate", "--set", f"output.dir={tmp_path}",
                   "--set", "init.kind=eigenmode", "--set", "init.amplitude=500",
                   "--set", "time.t1=1.0",
                   "--set", "noise.t_min=-2", "--set", "noise.t_max=2"])
        err = capsys.readouterr().err
        assert rc == 2
        record = json.loads(err.strip().splitlines()[-1])
        assert record["error"] == "numerical"

    def test_gen_noise_round_trip_and_extend(self, tmp_path, capsys):
        target = tmp_path / "noise.bin"
        rc = main(["gen-noise", "--set", f"output.dir={tmp_path}",
                   "--set", f"noise.file={target}",
                   "--set", "noise.t_min=-2", "--set", "noise.t_max=2"])
        assert rc == 0
        p1 = load_noise_path(target)
        rc = main(["gen-noise", "--set", f"output.dir={tmp_path}",
                   "--set", f"noise.file={target}",
                   "--set", "noise.t_min=-4", "--set", "noise.t_max=4"])
        assert rc == 0
        p2 = load_noise_path(target)
        lo = p1.i0_abs - p2.i0_abs
        assert np.array_equal(p2.increments[:, lo:lo + p1.n_steps], p1.increments)

    def test_simulate_from_noise_file_matches_seeded(self, tmp_path, capsys):
        target = tmp_path / "noise.bin"
        common = ["--set", "time.t1=1.0",
                  "--set", "noise.t_min=-2", "--set", "noise.t_max=2"]
        rc = main(["gen-noise", "--set", f"output.dir={tmp_path/'g'}",
                   "--set", f"noise.file={target}"] + common)
        assert rc == 0
        outs = []
        for sub, extra in (("s1", []), ("s2", ["--set", f"noise.file={target}"])):
            out = tmp_path / sub
            rc = main(["simulate", "--set", f"output.dir={out}"] + common + extra)
            assert rc == 0
            outs.append((out / "diagnostics.csv").read_bytes().split(b"\n", 1)[1])
        assert outs[0] == outs[1]

    def test_cocycle_check_passes(self, tmp_path, capsys):
        rc = main(["cocycle-check", "--set", f"output.dir={tmp_path}",
                   "--set", "init.kind=random", "--set", "init.amplitude=0.1",
                   "--set", "noise.q0=0.02", "--set", "periodic.amplitude=0.3"] + FAST)
        out = capsys.readouterr().out
        assert rc == 0
        assert "deviation=0.000e+00" in out

    def test_pullback_report(self, tmp_path, capsys):
        out = tmp_path / "pb"
        rc = main(["pullback", "--set", f"output.dir={out}",
                   "--set", "pullback.horizons=1,2",
                   "--set", "pullback.leading_modes=6",
                   "--set", "pullback.quad_horizon=24",
                   "--set", "noise.q0=0.02", "--set", "periodic.amplitude=0.3"] + FAST)
        assert rc == 0
        lines = (out / "attractor_report.csv").read_text().splitlines()
        assert lines[1] == "T,diameter,hausdorff_prev,xi_star,slope"
        assert len(lines) == 4
        assert (out / "endpoint_T2_000.bin").exists()
        row = lines[3].split(",")
        assert float(row[1]) >= 0.0 and float(row[3]) > 0.0
