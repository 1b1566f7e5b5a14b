"""Tests for smilansky/__init__.py"""


import smilansky


def test_version():
    """Ensure smilansky.__version__ is defined."""
    assert hasattr(smilansky, "__version__")
    assert isinstance(smilansky.__version__, str)
