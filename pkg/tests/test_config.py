import pytest

from dynslam.config import Settings, load_settings, read_config_file
from dynslam.defs.errors import ConfigError


def test_defaults():
    settings = Settings()
    assert settings.thresholds().tau_a == 5e-6
    assert settings.MASK_MODE == "full"
    assert settings.resample_config().epochs == 100


def test_precedence_flags_over_file_over_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("DYNSLAM_SEED", "3")
    monkeypatch.setenv("DYNSLAM_EPOCHS", "20")
    monkeypatch.setenv("DYNSLAM_VOXEL", "0.05")
    path = tmp_path / "run.cfg"
    path.write_text("# overrides\nseed=5\nepochs = 30\n")
    settings = load_settings(str(path), SEED=7, EPOCHS=None)
    assert settings.SEED == 7
    assert settings.EPOCHS == 30
    assert settings.VOXEL == 0.05


def test_yaml_config(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("tau_d: 0.25\nrobust_loss: false\n")
    settings = load_settings(str(path))
    assert settings.TAU_D == 0.25
    assert settings.ROBUST_LOSS is False


def test_yaml_config_must_be_a_mapping(tmp_path):
    path = tmp_path / "run.yml"
    path.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        read_config_file(str(path))


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_settings(str(tmp_path / "absent.cfg"))


@pytest.mark.parametrize("overrides", [
    {"TAU_A": 1e-4, "TAU_B": 1e-5},
    {"TAU_D": 0.0},
    {"MASK_MODE": "sometimes"},
    {"THREADS": 0},
    {"VOXEL": -0.1},
    {"LOG_LEVEL_CONSOLE": "chatty"},
    {"NOT_A_SETTING": 1},
])
def test_invalid_settings(overrides):
    with pytest.raises(ConfigError):
        load_settings(**overrides)


def test_log_level_is_upper_cased():
    assert load_settings(LOG_LEVEL_CONSOLE="debug").LOG_LEVEL_CONSOLE == "DEBUG"


def test_camera_needs_intrinsics(tmp_path):
    with pytest.raises(ConfigError):
        Settings().camera()
    path = tmp_path / "intrinsics.txt"
    path.write_text("# fx fy cx cy\n525 525 319.5 239.5\n")
    assert Settings().camera(fallback=str(path)).cx == 319.5
