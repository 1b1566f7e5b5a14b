"""Tests for smilansky.output."""

import json
import math

import numpy

from smilansky import config, output


def test_write_csv(tmp_path):
    """CSV files start with the config hash and the column names."""
    path = tmp_path / "table.csv"
    name = output.write_csv(str(path), ["a", "b"], [[1.0, 0.1], [2.0, 1e-20]], "abc")
    assert name == "table.csv"
    lines = path.read_text().splitlines()
    assert lines[0] == "# config_hash=abc"
    assert lines[1] == "# a,b"
    values = numpy.loadtxt(str(path), delimiter=",")
    assert values[1, 1] == 1e-20
    assert values[0, 1] == 0.1


def test_write_json(tmp_path):
    """JSON documents carry the config hash and plain values."""
    path = tmp_path / "doc.json"
    document = {"x": numpy.arange(3), "y": numpy.float64(math.inf), "z": True}
    output.write_json(str(path), document, "abc")
    loaded = json.loads(path.read_text())
    assert loaded == {"x": [0, 1, 2], "y": "inf", "z": True, "config_hash": "abc"}


def test_write_manifest(tmp_path):
    """The manifest records the outcome and the root cause of a failure."""
    resolved = config.resolve("channels", {"model.alpha": 1.3}, out=str(tmp_path))
    try:
        try:
            raise ZeroDivisionError("boom")
        except ZeroDivisionError as cause:
            raise RuntimeError("wrapped") from cause
    except RuntimeError as error:
        path = output.write_manifest(resolved, [], 1, error)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert path == str(tmp_path / "manifest.json")
    assert manifest["status"] == 1
    assert manifest["error"] == {"type": "ZeroDivisionError", "message": "boom"}
    assert manifest["config_hash"] == resolved.config_hash
    assert manifest["seeds"] == []
    assert set(manifest["versions"]) == {
        "smilansky",
        "numpy",
        "scipy",
        "mpmath",
        "python",
    }


def test_write_manifest_seeds(tmp_path):
    """Seeds drawn by a run are listed in the manifest."""
    resolved = config.resolve("channels", {"model.alpha": 1.3}, out=str(tmp_path))
    output.write_manifest(resolved, ["a.csv"], 0, seeds=[7, 11])
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["seeds"] == [7, 11]
    assert manifest["error"] is None
