"""Tests for smilansky.channels."""

import math

import numpy
import pytest

from smilansky import channels
from smilansky.channels import Kind
from smilansky.model import ExceptionalEnergy, ModelParams, ThresholdEnergy

PARAMS = ModelParams(alpha=1.3, omega=1.0)


def _circle_norm(channel):
    x = numpy.linspace(-math.pi, math.pi, 40001)
    values = channels.v_at(channel, x) ** 2
    return float((values.sum() - (values[0] + values[-1]) / 2) * (x[1] - x[0]))


def test_mode_kinds():
    """Channels below the energy oscillate and channels above it decay."""
    first = channels.mode(0, 2.0, PARAMS)
    assert first.kind is Kind.OSCILLATORY
    assert first.k_or_chi == pytest.approx(math.sqrt(3))
    third = channels.mode(2, 2.0, PARAMS)
    assert third.kind is Kind.EVANESCENT
    assert third.k_or_chi == pytest.approx(1.0)


@pytest.mark.parametrize("n", [0, 1, 2, 5])
def test_mode_normalized(n):
    """Every channel function has unit norm on the circle."""
    assert _circle_norm(channels.mode(n, 2.0, PARAMS)) == pytest.approx(1, abs=1e-7)


@pytest.mark.parametrize("n", [0, 3])
def test_boundary_values(n):
    """v(0) and v'(0+) match the function near the coupling point."""
    channel = channels.mode(n, 2.3, PARAMS)
    value, slope = channels.v_boundary(channel)
    assert channels.v_at(channel, 0.0) == pytest.approx(value)
    step = 1e-6
    estimate = (channels.v_at(channel, 2 * step) - channels.v_at(channel, step)) / step
    assert estimate == pytest.approx(slope, rel=1e-4, abs=1e-8)


def test_threshold_energy():
    """A channel exactly at its threshold is rejected."""
    with pytest.raises(ThresholdEnergy):
        channels.mode(1, 1.5, PARAMS)


def test_v_at_outside_circle():
    """Points beyond pi are rejected."""
    with pytest.raises(ValueError):
        channels.v_at(channels.mode(0, 2.0, PARAMS), 4.0)


def test_coeff_triple():
    """The coefficients come from boundary values of three channels."""
    triple = channels.coeff_triple(0, 2.0, PARAMS)
    v0, _ = channels.v_boundary(channels.mode(0, 2.0, PARAMS))
    _, dv1 = channels.v_boundary(channels.mode(1, 2.0, PARAMS))
    v2, _ = channels.v_boundary(channels.mode(2, 2.0, PARAMS))
    assert triple.h0 == pytest.approx(1.3 * v0)
    assert triple.h1 == pytest.approx(math.sqrt(2) * dv1)
    assert triple.h2 == pytest.approx(1.3 * math.sqrt(2) * v2)
    assert channels.coeff_triple(-1, 2.0, PARAMS).h0 is None


def test_coeff_triple_vanishing_boundary_value():
    """v_2(0) vanishes when k_2 = 1/2."""
    with pytest.raises(ExceptionalEnergy):
        channels.coeff_triple(0, 2.625, PARAMS)


def test_coefficient_arrays_precision():
    """Extended precision agrees with double precision at small n."""
    fast = channels.coefficient_arrays(30, 2.0, PARAMS)
    slow = channels.coefficient_arrays(30, 2.0, PARAMS, precision_bits=128)
    for left, right in zip(fast, slow):
        numpy.testing.assert_allclose(
            numpy.asarray(left, dtype=float),
            numpy.array([float(value) for value in right]),
            rtol=1e-12,
            atol=1e-300,
        )


def test_coefficient_arrays_match_triples():
    """Position i of the arrays holds index n = i - 1."""
    h0, h1, h2 = channels.coefficient_arrays(10, 2.3, PARAMS)
    triple = channels.coeff_triple(3, 2.3, PARAMS)
    assert h0[4] == pytest.approx(triple.h0)
    assert h1[4] == pytest.approx(triple.h1)
    assert h2[4] == pytest.approx(triple.h2)
    assert h0[0] == 0


def test_ratio_limits():
    """p and q are the normalized coefficients of the recursion."""
    p, q = channels.ratio_limits(2.3, PARAMS, [3, 50])
    triple = channels.coeff_triple(3, 2.3, PARAMS)
    assert p[0] == pytest.approx(-triple.h1 / triple.h2)
    assert q[0] == pytest.approx(-triple.h0 / triple.h2)
    assert numpy.all(numpy.isfinite(p)) and numpy.all(numpy.isfinite(q))


def test_mode_values_rows():
    """Each row is the corresponding channel function."""
    x = numpy.linspace(-math.pi, math.pi, 11)
    table = channels.mode_values(4, 2.0, PARAMS, x)
    for n in range(5):
        numpy.testing.assert_allclose(
            table[n],
            channels.v_at(channels.mode(n, 2.0, PARAMS), x),
            rtol=1e-12,
            atol=1e-14,
        )


def test_zero_wavenumber():
    """k = 0 gives the constant function 1/sqrt(2 pi)."""
    rho, value, slope = channels.boundary_from_k2([0.0])
    assert rho[0] == pytest.approx(1 / math.sqrt(2 * math.pi))
    assert value[0] == pytest.approx(1 / math.sqrt(2 * math.pi))
    assert slope[0] == 0
    assert channels.wavenumbers(2, 2.0, PARAMS) == pytest.approx(
        [math.sqrt(3), 1.0, 1.0],
    )
