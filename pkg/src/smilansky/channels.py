"""Channel Functions and Recursion Coefficients"""

import enum
import math
from typing import Any, List, Optional, Sequence, Tuple

import attr
import mpmath
import numpy

from smilansky.model import (
    DEFAULT_GUARD,
    THRESHOLD_GUARD,
    ExceptionalEnergy,
    FloatArray,
    ModelParams,
    ThresholdEnergy,
)


class Kind(enum.Enum):
    """Behavior of a channel at a given energy."""

    OSCILLATORY = "oscillatory"
    EVANESCENT = "evanescent"


@attr.s(auto_attribs=True, kw_only=True, frozen=True)
class ChannelMode:  # pylint: disable=too-few-public-methods
    """Normalized Even Solution of One Channel"""

    n: int
    E: float  # pylint: disable=invalid-name
    kind: Kind
    k_or_chi: float
    rho: float


@attr.s(auto_attribs=True, kw_only=True, frozen=True)
class CoeffTriple:  # pylint: disable=too-few-public-methods
    """Coefficients of the Channel Recursion at One Index"""

    n: int
    E: float  # pylint: disable=invalid-name
    h0: Optional[float]
    h1: float
    h2: float


def _oscillatory(k: FloatArray) -> Tuple[FloatArray, FloatArray, FloatArray]:
    """Return rho, v(0) and v'(0+) for real wavenumbers."""
    with numpy.errstate(divide="ignore", invalid="ignore"):
        ratio = numpy.where(
            k > 0,
            numpy.sin(2 * math.pi * k) / (2 * numpy.where(k > 0, k, 1.0)),
            math.pi,
        )
    rho = 1 / numpy.sqrt(math.pi + ratio)
    return rho, rho * numpy.cos(k * math.pi), rho * k * numpy.sin(k * math.pi)


def _evanescent_root(chi: FloatArray) -> FloatArray:
    """Return rho e^(chi pi), finite for every chi >= 0."""
    safe = numpy.where(chi > 0, chi, 1.0)
    scale = numpy.where(
        chi > 0,
        math.pi * numpy.exp(-2 * math.pi * chi)
        - numpy.expm1(-4 * math.pi * chi) / (4 * safe),
        2 * math.pi,
    )
    return 1 / numpy.sqrt(scale)


def _evanescent(chi: FloatArray) -> Tuple[FloatArray, FloatArray, FloatArray]:
    """Return rho, v(0) and v'(0+) with e^(chi pi) factored out analytically."""
    decay = numpy.exp(-2 * math.pi * chi)
    root = _evanescent_root(chi)
    rho = numpy.exp(-math.pi * chi) * root
    v0 = (1 + decay) / 2 * root
    dv0 = chi * numpy.expm1(-2 * math.pi * chi) / 2 * root
    return rho, v0, dv0


def _boundary_mp(k2: Any) -> Tuple[Any, Any]:
    """Extended precision v(0) and v'(0+) from k**2 = 2E - (2n+1)omega."""
    if k2 > 0:
        k = mpmath.sqrt(k2)
        rho = 1 / mpmath.sqrt(mpmath.pi + mpmath.sin(2 * k * mpmath.pi) / (2 * k))
        return rho * mpmath.cos(k * mpmath.pi), rho * k * mpmath.sin(k * mpmath.pi)
    chi = mpmath.sqrt(-k2)
    decay = mpmath.exp(-2 * chi * mpmath.pi)
    root = 1 / mpmath.sqrt(
        mpmath.pi * decay - mpmath.expm1(-4 * chi * mpmath.pi) / (4 * chi),
    )
    return (1 + decay) / 2 * root, chi * mpmath.expm1(-2 * chi * mpmath.pi) / 2 * root


def _squared_wavenumbers(n: FloatArray, energy: float, omega: float) -> FloatArray:
    k2 = 2 * energy - (2 * n + 1) * omega
    at_threshold = numpy.abs(k2) < THRESHOLD_GUARD
    if numpy.any(at_threshold):
        index = int(numpy.asarray(n)[at_threshold].flat[0])
        raise ThresholdEnergy(f"E={energy} is the threshold of channel {index}")
    return k2


def _boundary_values(k2: FloatArray) -> Tuple[FloatArray, FloatArray, FloatArray]:
    k = numpy.sqrt(numpy.abs(k2))
    rho_o, v0_o, dv0_o = _oscillatory(numpy.where(k2 > 0, k, 0.0))
    rho_e, v0_e, dv0_e = _evanescent(numpy.where(k2 < 0, k, 0.0))
    oscillatory = k2 > 0
    return (
        numpy.where(oscillatory, rho_o, rho_e),
        numpy.where(oscillatory, v0_o, v0_e),
        numpy.where(oscillatory, dv0_o, dv0_e),
    )


def boundary_from_k2(k2: Any) -> Tuple[FloatArray, FloatArray, FloatArray]:
    """Get rho, v(0) and v'(0+) for an array of squared wavenumbers."""
    return _boundary_values(numpy.asarray(k2, dtype=float))


def mode_from_k2(n: int, energy: float, k2: float) -> ChannelMode:
    """Build the normalized even function with squared wavenumber k2."""
    rho, _, _ = _boundary_values(numpy.array([k2]))
    return ChannelMode(
        n=n,
        E=energy,
        kind=Kind.OSCILLATORY if k2 > 0 else Kind.EVANESCENT,
        k_or_chi=math.sqrt(abs(k2)),
        rho=float(rho[0]),
    )


def mode(n: int, energy: float, params: ModelParams) -> ChannelMode:
    """Build the normalized channel function of channel n at energy E."""
    k2 = float(_squared_wavenumbers(numpy.array([n]), energy, params.omega)[0])
    return mode_from_k2(n, energy, k2)


def v_boundary(channel: ChannelMode) -> Tuple[float, float]:
    """Get v(0) and v'(0+)."""
    value = channel.k_or_chi
    if channel.kind is Kind.OSCILLATORY:
        _, v0, dv0 = _oscillatory(numpy.array([value]))
    else:
        _, v0, dv0 = _evanescent(numpy.array([value]))
    return float(v0[0]), float(dv0[0])


def v_at(channel: ChannelMode, x: Any) -> Any:
    """Evaluate the even channel function on [-pi, pi]."""
    distance = numpy.abs(numpy.asarray(x, dtype=float))
    if numpy.any(distance > math.pi * (1 + 1e-12)):
        raise ValueError("x must lie in [-pi, pi].")
    value = channel.k_or_chi
    if channel.kind is Kind.OSCILLATORY:
        return channel.rho * numpy.cos(value * (distance - math.pi))
    root = float(_evanescent_root(numpy.array([value]))[0])
    return (
        root
        * (numpy.exp(-value * distance) + numpy.exp(-value * (2 * math.pi - distance)))
        / 2
    )


def _check_vanishing(n: int, energy: float, omega: float, guard: float) -> None:
    """Reject energies where v_n(0) = 0, i.e. k_n = r + 1/2."""
    k2 = 2 * energy - (2 * n + 1) * omega
    if k2 <= 0:
        return
    half = max(round(math.sqrt(k2) - 0.5), 0) + 0.5
    exceptional = ((2 * n + 1) * omega + half**2) / 2
    if abs(energy - exceptional) < guard:
        raise ExceptionalEnergy(
            f"v_{n}(0) vanishes at E={exceptional} (within {guard} of E={energy})",
        )


def coeff_triple(
    n: int,
    energy: float,
    params: ModelParams,
    guard: float = DEFAULT_GUARD,
) -> CoeffTriple:
    """Evaluate h0, h1 and h2 at index n >= -1."""
    if n < -1:
        raise ValueError(f"n must be at least -1, not {n}.")
    for index in range(max(n, 0), n + 3):
        mode(index, energy, params)
    _check_vanishing(n + 2, energy, params.omega, guard)
    if n >= 0:
        _check_vanishing(n, energy, params.omega, guard)
    _, dv1 = v_boundary(mode(n + 1, energy, params))
    v2, _ = v_boundary(mode(n + 2, energy, params))
    h0 = None
    if n >= 0:
        v0, _ = v_boundary(mode(n, energy, params))
        h0 = params.alpha * math.sqrt(n + 1) * v0
    return CoeffTriple(
        n=n,
        E=energy,
        h0=h0,
        h1=math.sqrt(2 * params.omega) * dv1,
        h2=params.alpha * math.sqrt(n + 2) * v2,
    )


def boundary_arrays(
    n_max: int,
    energy: float,
    params: ModelParams,
    precision_bits: Optional[int] = None,
) -> Tuple[Sequence[Any], Sequence[Any]]:
    """
    Tabulate v_m(0) and v_m'(0+) for channels m = 0..n_max.

    With precision_bits the values are mpmath numbers computed at that
    working precision; otherwise they are float64 arrays.
    """
    indices = numpy.arange(n_max + 1, dtype=float)
    k2 = _squared_wavenumbers(indices, energy, params.omega)
    if precision_bits is None or precision_bits <= 53:
        _, v0, dv0 = _boundary_values(k2)
        return v0, dv0
    values: List[Any] = []
    slopes: List[Any] = []
    with mpmath.workprec(precision_bits):
        two_e = 2 * mpmath.mpf(energy)
        omega = mpmath.mpf(params.omega)
        for m in range(n_max + 1):
            value, slope = _boundary_mp(two_e - (2 * m + 1) * omega)
            values.append(value)
            slopes.append(slope)
    return values, slopes


def coefficient_arrays(
    n_max: int,
    energy: float,
    params: ModelParams,
    precision_bits: Optional[int] = None,
) -> Tuple[Sequence[Any], Sequence[Any], Sequence[Any]]:
    """
    Tabulate h0, h1 and h2 for n = -1..n_max-2.

    Position i holds index n = i - 1; h0 at n = -1 is zero.
    """
    v0, dv0 = boundary_arrays(n_max, energy, params, precision_bits)
    if precision_bits is None or precision_bits <= 53:
        n = numpy.arange(-1, n_max - 1, dtype=float)
        v0_array = numpy.asarray(v0)
        h0 = params.alpha * numpy.sqrt(n + 1) * numpy.concatenate(([0.0], v0_array))[
            : n_max
        ]
        h1 = math.sqrt(2 * params.omega) * numpy.asarray(dv0)[:n_max]
        h2 = params.alpha * numpy.sqrt(n + 2) * v0_array[1 : n_max + 1]
        return h0, h1, h2
    with mpmath.workprec(precision_bits):
        alpha = mpmath.mpf(params.alpha)
        root = mpmath.sqrt(2 * mpmath.mpf(params.omega))
        h0_mp = [mpmath.mpf(0)] + [
            alpha * mpmath.sqrt(i) * v0[i - 1] for i in range(1, n_max)
        ]
        h1_mp = [root * dv0[i] for i in range(n_max)]
        h2_mp = [alpha * mpmath.sqrt(i + 1) * v0[i + 1] for i in range(n_max)]
    return h0_mp, h1_mp, h2_mp


def ratio_limits(
    energy: float,
    params: ModelParams,
    n_values: Sequence[int],
) -> Tuple[FloatArray, FloatArray]:
    """Evaluate p(n) = -h1/h2 and q(n) = -h0/h2 at selected indices."""
    n = numpy.asarray(n_values, dtype=float)
    omega = params.omega
    _, v_n, _ = _boundary_values(_squared_wavenumbers(n, energy, omega))
    _, _, dv_n1 = _boundary_values(_squared_wavenumbers(n + 1, energy, omega))
    _, v_n2, _ = _boundary_values(_squared_wavenumbers(n + 2, energy, omega))
    h2 = params.alpha * numpy.sqrt(n + 2) * v_n2
    h1 = math.sqrt(2 * omega) * dv_n1
    h0 = params.alpha * numpy.sqrt(n + 1) * v_n
    return -h1 / h2, -h0 / h2


def mode_values(n_max: int, energy: float, params: ModelParams, x: Any) -> FloatArray:
    """
    Evaluate v_0..v_n_max at the points x.

    Rows are channels; evanescent channels keep e^(chi pi) factored out so
    that no row overflows.
    """
    distance = numpy.abs(numpy.asarray(x, dtype=float))
    if numpy.any(distance > math.pi * (1 + 1e-12)):
        raise ValueError("x must lie in [-pi, pi].")
    indices = numpy.arange(n_max + 1, dtype=float)
    k2 = _squared_wavenumbers(indices, energy, params.omega)
    k = numpy.sqrt(numpy.abs(k2))[:, None]
    oscillatory = (k2 > 0)[:, None]
    rho, _, _ = _boundary_values(k2)
    root = _evanescent_root(numpy.where(k2 < 0, k[:, 0], 0.0))[:, None]
    wave = rho[:, None] * numpy.cos(k * (distance - math.pi))
    decay = (
        root
        * (numpy.exp(-k * distance) + numpy.exp(-k * (2 * math.pi - distance)))
        / 2
    )
    return numpy.where(oscillatory, wave, decay)


def wavenumbers(n_max: int, energy: float, params: ModelParams) -> FloatArray:
    """Get k_n or chi_n for channels 0..n_max."""
    indices = numpy.arange(n_max + 1, dtype=float)
    k2 = _squared_wavenumbers(indices, energy, params.omega)
    return numpy.sqrt(numpy.abs(k2))
