"""Tests for dotenv run configurations."""
from pathlib import Path

import pytest

from app.core.config import (
    PROJECT_ROOT,
    WORKERS_ENV,
    ConfigError,
    RunConfig,
    load_config,
    parse_values,
    resolve_workers,
)
from app.core.device import RegimeError

CONFIGS = PROJECT_ROOT / "configs"


def _write(tmp_path: Path, text: str) -> Path:
    path = tmp_path / "run.env"
    path.write_text(text, encoding="utf-8")
    return path


class TestLoadConfig:
    def test_defaults_are_the_gate_point(self):
        config = load_config()
        assert config.experiment == "gate"
        assert config.resolved_mu_mhz == pytest.approx(342.0, rel=0.01)
        params = config.device_params()
        assert params.g_ab == pytest.approx(5.0)
        assert params.kappa_a == pytest.approx(0.05)

    @pytest.mark.parametrize("name", ["gate.env", "heatmap.env", "cat.env", "validate.env"])
    def test_shipped_configs_load(self, name):
        config = load_config(CONFIGS / name)
        assert config.experiment == name.split(".")[0]

    def test_cat_config(self):
        config = load_config(CONFIGS / "cat.env")
        assert config.d_list == (8.48,)
        assert config.m_list == (4, 5, 6, 7)
        assert config.mu_mhz == 200.0
        assert config.device_params().gamma_eg == pytest.approx(1 / 0.3)

    def test_unknown_key(self, tmp_path):
        with pytest.raises(ConfigError, match="omega_c_ghz"):
            load_config(_write(tmp_path, "omega_c_ghz=5\n"))

    @pytest.mark.parametrize("line", ["g_mhz=fifty", "dim_a=3.5", "plot=maybe", "m_list=4,x"])
    def test_bad_values(self, tmp_path, line):
        with pytest.raises(ConfigError):
            load_config(_write(tmp_path, line + "\n"))

    @pytest.mark.parametrize("line", ["dim_a=1", "workers=0", "experiment=bell", "scales=1,-2", "dt_ns=0"])
    def test_rejected_settings(self, tmp_path, line):
        with pytest.raises(ConfigError):
            load_config(_write(tmp_path, line + "\n"))

    def test_regime_violation(self, tmp_path):
        with pytest.raises(RegimeError):
            load_config(_write(tmp_path, "delta_a_ghz=-0.3\ndelta_b_ghz=0.2\nmu_mhz=100\n"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "absent.env")


class TestOverrides:
    def test_none_means_not_given(self):
        config = RunConfig().with_overrides(dim_a=None, dt_ns=0.5, experiment="cat")
        assert config.dim_a == 4
        assert config.dt_us == pytest.approx(5e-4)
        assert config.experiment == "cat"

    def test_overrides_are_checked(self):
        with pytest.raises(ConfigError):
            RunConfig().with_overrides(dim_b=1)

    def test_as_dict_is_json_ready(self):
        document = RunConfig().as_dict()
        assert document["out_dir"] == "outputs"
        assert document["scales"] == [1.0, 2.0, 4.0]
        assert document["mu_mhz_resolved"] == pytest.approx(342.0, rel=0.01)


class TestWorkers:
    def test_flag_wins(self, monkeypatch):
        monkeypatch.setenv(WORKERS_ENV, "3")
        assert resolve_workers(2, RunConfig(workers=4)) == 2

    def test_environment_before_config(self, monkeypatch):
        monkeypatch.setenv(WORKERS_ENV, "3")
        assert resolve_workers(None, RunConfig(workers=4)) == 3

    def test_config_fallback(self, monkeypatch):
        monkeypatch.delenv(WORKERS_ENV, raising=False)
        assert resolve_workers(None, RunConfig(workers=4)) == 4

    def test_invalid_environment(self, monkeypatch):
        monkeypatch.setenv(WORKERS_ENV, "many")
        with pytest.raises(ConfigError):
            resolve_workers(None, RunConfig())


def test_parse_values_types():
    parsed = parse_values({"mu_mhz": "", "scales": "1, 2", "plot": "yes", "k": "2"})
    assert parsed == {"mu_mhz": None, "scales": (1.0, 2.0), "plot": True, "k": 2}
