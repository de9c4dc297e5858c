import pytest

from src.core.config import Settings, load_config_file


def test_default_settings_are_valid():
    Settings().validate_settings()


@pytest.mark.parametrize(
    "name,value",
    [
        ("NEWTON_TOL", 0.0),
        ("NEWTON_MAX_ITER", 0),
        ("CONVEXITY_TOL", -1.0),
        ("DIVERGENCE_FACTOR", 1.0),
        ("DEFAULT_PERTURB", 0.3),
        ("TRIANGLE_QUADRATURE_ORDER", 4),
        ("EDGE_QUADRATURE_POINTS", 2),
        ("LOG_LEVEL", "LOUD"),
    ],
)
def test_invalid_settings(name, value):
    settings = Settings()
    setattr(settings, name, value)
    with pytest.raises(ValueError):
        settings.validate_settings()


def test_config_file_keys_are_normalized(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# sweep\nHalf-Width=0.57\nmax_iter=30\n")
    assert load_config_file(path) == {"half_width": "0.57", "max_iter": "30"}


def test_missing_config_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config_file(tmp_path / "nope.cfg")
