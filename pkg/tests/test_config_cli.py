import math

import pytest

from stalesgd.cli import main
from stalesgd.config import DEFAULTS, ConfigError, parse_config

FAST = ["--set", "data.n=256", "--set", "run.eval_size=64", "--set", "run.lipschitz_probes=4"]


class TestConfig:
    def test_defaults(self):
        cfg = parse_config()
        assert (cfg.S, cfg.K, cfg.B, cfg.T) == (1, 1, 32, 1000)
        assert cfg.schedule(0) == 0.1
        assert set(cfg.values) == set(DEFAULTS)

    def test_file_then_overrides(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text("# comment\nrun.k = 3\nrun.s=2  # trailing\n\n")
        assert parse_config(p).K == 3
        assert parse_config(p, {"run.k": "2"}).K == 2

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown"):
            parse_config(overrides={"run.bogus": "1"})

    def test_type_error(self):
        with pytest.raises(ConfigError, match="integer"):
            parse_config(overrides={"run.s": "two"})

    def test_alpha_above_degree_limit(self):
        with pytest.raises(ConfigError):
            parse_config(overrides={"run.s": "4", "run.topology": "complete", "run.alpha": "0.9"})

    def test_missing_cifar(self, tmp_path):
        with pytest.raises(ConfigError, match="does not exist"):
            parse_config(overrides={"data.kind": "cifar10", "data.path": str(tmp_path / "nope")})

    def test_too_many_modules(self):
        with pytest.raises(ConfigError, match="exceeds"):
            parse_config(overrides={"run.k": "4", "net.hidden": "8,8"})

    def test_malformed_line(self, tmp_path):
        p = tmp_path / "bad.cfg"
        p.write_text("run.s 2\n")
        with pytest.raises(ConfigError, match="bad.cfg:1"):
            parse_config(p)


class TestCli:
    def test_train_writes_outputs(self, tmp_path, capsys):
        out = tmp_path / "run"
        code = main(["train", "--s", "2", "--k", "2", "--iters", "30", "--out", str(out),
                     "--set", "run.eval_interval=7", *FAST])
        assert code == 0
        lines = (out / "metrics.csv").read_text().splitlines()
        assert len(lines) == 1 + math.ceil(30 / 7) + 1
        assert "gamma=" in (out / "diagnostics.txt").read_text()
        assert "final loss" in capsys.readouterr().out

    def test_flag_beats_config(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("run.iters = 500\n")
        out = tmp_path / "o"
        assert main(["train", "--config", str(cfg), "--iters", "4", "--out", str(out), *FAST]) == 0
        assert (out / "metrics.csv").read_text().splitlines()[-1].startswith("4,")

    def test_reruns_byte_identical(self, tmp_path):
        args = ["train", "--s", "4", "--k", "2", "--iters", "40", *FAST]
        main([*args, "--out", str(tmp_path / "a")])
        main([*args, "--out", str(tmp_path / "b")])
        for name in ("metrics.csv", "diagnostics.txt"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_fault_injection_fails(self, tmp_path, capsys):
        code = main(["train", "--k", "2", "--iters", "10", "--out", str(tmp_path),
                     "--set", "run.inject_fault_at=3", *FAST])
        assert code != 0
        assert "error" in capsys.readouterr().err

    def test_bad_config_exit_two(self, capsys):
        assert main(["train", "--set", "run.nope=1"]) == 2

    def test_compare(self, tmp_path, capsys):
        assert main(["compare", "--iters", "20", "--out", str(tmp_path), *FAST]) == 0
        names = {p.name for p in tmp_path.iterdir()}
        assert {"merged.csv", "summary.csv"} <= names
        assert len([n for n in names if n.startswith("metrics_")]) == 4
        summary = (tmp_path / "summary.csv").read_text()
        for label in ("centralized", "decoupled", "data_parallel", "distributed"):
            assert label in summary

    @pytest.mark.parametrize("which", ["topology", "grad", "bound", "all"])
    def test_check_suites_pass(self, which, capsys):
        assert main(["check", "--check", which, "--s", "4", "--k", "2", "--iters", "50", *FAST]) == 0
        out = capsys.readouterr().out
        assert "PASS" in out and "FAIL" not in out

    def test_check_disconnected_topology(self, capsys):
        code = main(["check", "--check", "topology", "--s", "3", "--set", "run.edges=1 2", "--set", "run.alpha=0.3"])
        assert code == 1
        assert "FAIL" in capsys.readouterr().out
