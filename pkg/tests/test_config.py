"""Tests for smilansky.config."""

import json

import numpy
import pytest

from smilansky import config
from smilansky.config import ConfigInvalid


def test_defaults():
    """Every key falls back to its default."""
    resolved = config.resolve("channels", {"model.alpha": 1.3})
    assert resolved.params.alpha == 1.3
    assert resolved.params.omega == 1.0
    assert resolved["channels.n_max"] == 10
    assert resolved["recursion.energies"] == [1.7, 2.0, 2.3]
    assert resolved.out == "smilansky-out"


def test_config_hash():
    """The hash follows the resolved settings but not the output directory."""
    first = config.resolve("bands", {"model.alpha": 1.3}, out="a")
    second = config.resolve("bands", {"model.alpha": 1.3}, out="b")
    third = config.resolve("bands", {"model.alpha": 1.3, "bands.count": 5})
    assert first.config_hash == second.config_hash
    assert first.config_hash != third.config_hash
    assert len(first.config_hash) == 64
    json_config = config.resolve("bands", {"model.alpha": 1.3}, fmt="json")
    assert json_config.config_hash != first.config_hash


def test_flags_override_file():
    """Flags win over the file, and the file wins over defaults."""
    document = {"model.alpha": 0.8, "channels.n_max": 3, "model.omega": 2.0}
    resolved = config.resolve("channels", {"model.alpha": 1.3}, document)
    assert resolved.params.alpha == 1.3
    assert resolved.params.omega == 2.0
    assert resolved["channels.n_max"] == 3


@pytest.mark.parametrize(
    "command, flags, document",
    [
        (None, {"model.alpha": 1.3}, None),
        ("channels", {}, None),
        ("channels", {}, {"model.alpha": 1.3, "model.beta": 1.0}),
        ("channels", {"model.alpha": 1.3, "bands.gamma": 1}, None),
        ("channels", {"model.alpha": 1.3, "bands.count": 2.5}, None),
        ("channels", {"model.alpha": 1.3, "bands.count": "two"}, None),
        ("channels", {"model.alpha": float("nan")}, None),
        ("channels", {"model.alpha": -1.0}, None),
        ("channels", {"model.alpha": 1.3, "grid.q": "1:0:5"}, None),
        ("channels", {"model.alpha": 1.3, "run.dt": 0.0}, None),
        ("channels", {"model.alpha": 1.3, "evolve.n_channels": 1}, None),
        ("recursion", {"model.alpha": 0.8}, None),
        ("recursion", {"model.alpha": 1.3, "recursion.energies": [2.5]}, None),
        ("recursion", {"model.alpha": 1.3, "recursion.precision_bits": 32}, None),
        ("spectral-check", {"model.alpha": 1.3, "spectral.e_min": 2.2}, None),
        ("evolve", {"model.alpha": 0.8}, None),
        ("evolve", {"model.alpha": 1.3, "evolve.initial": "random"}, None),
        ("transition-scan", {"model.alpha": 1.3, "transition.oscillators": 3}, None),
        ("sweep", {"model.alpha": 1.3}, None),
    ],
)
def test_invalid(command, flags, document):
    """Invalid settings are rejected before any computation."""
    with pytest.raises(ConfigInvalid):
        config.resolve(command, flags, document)


def test_integers_are_coerced():
    """Integral floats are accepted for integer keys."""
    resolved = config.resolve("bands", {"model.alpha": 1.3, "bands.count": 3.0})
    assert resolved["bands.count"] == 3
    assert isinstance(resolved["bands.count"], int)


def test_parse_q_grid():
    """Grids are MIN:MAX:COUNT."""
    numpy.testing.assert_allclose(config.parse_q_grid("-1:1:5"), [-1, -0.5, 0, 0.5, 1])
    for text in ("-1:1", "a:b:c", "0:1:1"):
        with pytest.raises(ConfigInvalid):
            config.parse_q_grid(text)


def test_read_config_file(tmp_path):
    """Config files hold a flat JSON object."""
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"model.alpha": 1.3}))
    assert config.read_config_file(str(path)) == {"model.alpha": 1.3}
    path.write_text("[1, 2]")
    with pytest.raises(ConfigInvalid):
        config.read_config_file(str(path))
    path.write_text("{")
    with pytest.raises(ConfigInvalid):
        config.read_config_file(str(path))
    with pytest.raises(ConfigInvalid):
        config.read_config_file(str(tmp_path / "missing.json"))


def test_product_start_allows_subcritical():
    """Only the spectral start of evolve needs alpha > omega."""
    resolved = config.resolve(
        "evolve",
        {"model.alpha": 0.8, "evolve.initial": "product"},
    )
    assert resolved["evolve.initial"] == "product"
    assert resolved["spectral.normalization"] == "isometric"
