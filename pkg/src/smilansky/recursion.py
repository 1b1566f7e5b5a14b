"""Channel Recursion and Its Asymptotics"""

import cmath
import concurrent.futures
import logging
import math
from typing import Any, List, Optional, Sequence, Tuple

import attr
import mpmath
import numpy
from scipy import optimize

from smilansky.channels import coefficient_arrays
from smilansky.channels import ratio_limits
from smilansky.model import (
    DEFAULT_GUARD,
    FloatArray,
    ModelParams,
    Regime,
    SmilanskyError,
    check_energy,
    max_workers,
)

NATIVE_BITS = 53

# Significant bits below which a solution is rejected.
MIN_SIGNIFICANT_BITS = 10


class PrecisionLoss(SmilanskyError):
    """The recursion lost too many significant bits."""


class FitDiverged(SmilanskyError):
    """The asymptotic fit does not describe the solution."""


@attr.s(auto_attribs=True, kw_only=True, frozen=True)
class RecursionSolution:  # pylint: disable=too-few-public-methods
    """Solution C(0..n_max) of the Channel Recursion at One Energy"""

    E: float  # pylint: disable=invalid-name
    params: ModelParams
    C: FloatArray  # pylint: disable=invalid-name
    precision_bits: int
    c0: float = 1.0
    significant_bits: float = float(NATIVE_BITS)

    @property
    def n_max(self) -> int:
        """Get the last index."""
        return len(self.C) - 1


@attr.s(auto_attribs=True, kw_only=True, frozen=True)
class AsymptoticFit:  # pylint: disable=too-few-public-methods
    """
    Fitted Large-n Form of a Recursion Solution

    Over the window, C(n) ~ amplitude n^(-1/2) cos(n theta - s lambda E ln n + zeta)
    where s is the chirality.
    """

    theta_fit: float
    lambda_fit: float
    zeta_fit: float
    amplitude_fit: float
    residual_rms: float
    window: Tuple[int, int]
    chirality: int
    c0: float
    log_phase: float
    correction: Optional[Tuple[float, float]] = None


@attr.s(auto_attribs=True, kw_only=True, frozen=True)
class CharacteristicData:  # pylint: disable=too-few-public-methods
    """Coefficient Limits, Characteristic Roots and Exponents"""

    a0: float
    a1: float
    b0: float
    b1: float
    sigma_plus: complex
    sigma_minus: complex
    exponent_plus: complex
    exponent_minus: complex
    numeric_a0: float
    numeric_a1: float
    numeric_b0: float
    numeric_b1: float
    gauge: str
    theta: float
    lam: float


@attr.s(auto_attribs=True, kw_only=True, frozen=True)
class ZetaScan:  # pylint: disable=too-few-public-methods
    """Unwrapped Asymptotic Phase Across an Energy Grid"""

    energies: FloatArray
    zeta: FloatArray
    derivative: FloatArray
    max_jump_ratio: float
    smooth: bool


def _require_overcritical(params: ModelParams) -> None:
    if params.regime is not Regime.OVERCRITICAL:
        raise ValueError(f"The recursion needs alpha > omega, not {params}.")


def _lost_bits(terms: Tuple[Any, Any], scale: Any) -> float:
    """Bits cancelled when combining two terms, relative to the local scale."""
    largest = max(abs(terms[0]), abs(terms[1]))
    if largest == 0:
        return 0.0
    if scale == 0:
        return math.inf
    ratio = float(largest / scale)
    return math.log2(ratio) if ratio > 1 else 0.0


def solve_recursion(
    energy: float,
    n_max: int,
    params: ModelParams,
    precision_bits: Optional[int] = None,
    guard: float = DEFAULT_GUARD,
) -> RecursionSolution:
    """
    Solve h2 C(n+2) + h1 C(n+1) + h0 C(n) = 0 forward from C(0) = 1.

    Without precision_bits, 256-bit arithmetic is used when n_max > 10**4.
    """
    _require_overcritical(params)
    if n_max < 10:
        raise ValueError(f"n_max must be at least 10, not {n_max}.")
    check_energy(energy, params.omega, guard)
    if precision_bits is None:
        precision_bits = 256 if n_max > 10**4 else NATIVE_BITS
    logging.info(
        "Solving the recursion at E=%s up to n=%d with %d bits...",
        energy,
        n_max,
        precision_bits,
    )
    h0, h1, h2 = coefficient_arrays(n_max, energy, params, precision_bits)
    lost = 0.0
    if precision_bits <= NATIVE_BITS:
        values: List[Any] = [1.0, 0.0]
        h0_list, h1_list, h2_list = (
            numpy.asarray(h).tolist() for h in (h0, h1, h2)
        )
        values[1] = -h1_list[0] * values[0] / h2_list[0]
        for i in range(1, n_max):
            first = h1_list[i] * values[i]
            second = h0_list[i] * values[i - 1]
            total = first + second
            value = -total / h2_list[i]
            scale = abs(h2_list[i]) * max(
                abs(values[i]),
                abs(values[i - 1]),
                abs(value),
            )
            lost = max(lost, _lost_bits((first, second), scale))
            values.append(value)
    else:
        with mpmath.workprec(precision_bits):
            values = [mpmath.mpf(1), -h1[0] / h2[0]]
            for i in range(1, n_max):
                first = h1[i] * values[i]
                second = h0[i] * values[i - 1]
                total = first + second
                value = -total / h2[i]
                scale = abs(h2[i]) * max(
                    abs(values[i]),
                    abs(values[i - 1]),
                    abs(value),
                )
                lost = max(lost, _lost_bits((first, second), scale))
                values.append(value)
    coefficients = numpy.array([float(value) for value in values])
    significant = precision_bits - lost
    finite = bool(numpy.all(numpy.isfinite(coefficients)))
    if not finite or significant < MIN_SIGNIFICANT_BITS:
        raise PrecisionLoss(
            f"Only {significant:.1f} significant bits remain at E={energy}.",
        )
    return RecursionSolution(
        E=energy,
        params=params,
        C=coefficients,
        precision_bits=precision_bits,
        significant_bits=significant,
    )


def solve_recursion_batch(
    energies: Sequence[float],
    n_max: int,
    params: ModelParams,
    guard: float = DEFAULT_GUARD,
) -> FloatArray:
    """Solve the recursion in double precision for many energies at once."""
    _require_overcritical(params)
    for energy in energies:
        check_energy(energy, params.omega, guard)
    logging.info(
        "Solving the recursion at %d energies up to n=%d...",
        len(energies),
        n_max,
    )
    rows = [coefficient_arrays(n_max, energy, params) for energy in energies]
    h0 = numpy.array([row[0] for row in rows])
    h1 = numpy.array([row[1] for row in rows])
    h2 = numpy.array([row[2] for row in rows])
    values = numpy.empty((len(energies), n_max + 1))
    values[:, 0] = 1.0
    values[:, 1] = -h1[:, 0] / h2[:, 0]
    for i in range(1, n_max):
        values[:, i + 1] = -(h1[:, i] * values[:, i] + h0[:, i] * values[:, i - 1]) / (
            h2[:, i]
        )
    if not numpy.all(numpy.isfinite(values)):
        raise PrecisionLoss("The batched recursion produced non-finite values.")
    return values


def recursion_residuals(solution: RecursionSolution) -> FloatArray:
    """Relative residuals of the recursion at n = -1..n_max-2."""
    h0, h1, h2 = (
        numpy.asarray(h, dtype=float)
        for h in coefficient_arrays(solution.n_max, solution.E, solution.params)
    )
    values = solution.C
    previous = numpy.concatenate(([0.0], values[:-2]))
    residual = h2 * values[1:] + h1 * values[:-1] + h0 * previous
    scale = numpy.maximum(
        numpy.maximum(numpy.abs(values[1:]), numpy.abs(values[:-1])),
        numpy.abs(previous),
    )
    return numpy.abs(residual) / scale


def solve_backward(solution: RecursionSolution, n0: int) -> FloatArray:
    """Rebuild C(0..n0+1) from C(n0) and C(n0+1) by running the recursion down."""
    if not 1 <= n0 < solution.n_max:
        raise ValueError(f"n0 must lie in [1, {solution.n_max - 1}], not {n0}.")
    h0, h1, h2 = (
        numpy.asarray(h, dtype=float)
        for h in coefficient_arrays(solution.n_max, solution.E, solution.params)
    )
    values = numpy.zeros(n0 + 2)
    values[n0] = solution.C[n0]
    values[n0 + 1] = solution.C[n0 + 1]
    for n in range(n0 - 1, -1, -1):
        i = n + 1
        values[n] = -(h2[i] * values[n + 2] + h1[i] * values[n + 1]) / h0[i]
    return values


def characteristic_data(
    energy: float,
    params: ModelParams,
    n_values: Optional[Sequence[int]] = None,
) -> CharacteristicData:
    """
    Compare the closed-form coefficient limits with the computed coefficients.

    The computed expansion uses the normalized form
    C(n+2) + a(n) C(n+1) + b(n) C(n) = 0 with a = h1/h2 and b = h0/h2.
    """
    _require_overcritical(params)
    alpha, omega = params.alpha, params.omega
    a0, a1 = 2 * omega / alpha, -(omega / alpha) * (1 + energy / omega)
    b0, b1 = 1.0, -1.0
    root = cmath.sqrt(a0**2 - 4 * b0)
    sigma_plus, sigma_minus = (-a0 + root) / 2, (-a0 - root) / 2

    def exponent(sigma: complex) -> complex:
        return (a1 * sigma + b1) / (a0 * sigma + 2 * b0)

    if n_values is None:
        n_values = numpy.unique(numpy.geomspace(1e3, 1e5, 9).astype(int)).tolist()
    p, q = ratio_limits(energy, params, n_values)
    inverse = 1 / numpy.asarray(n_values, dtype=float)
    fit_a = numpy.polyfit(inverse, -p, 2)
    fit_b = numpy.polyfit(inverse, -q, 2)
    numeric_a0, numeric_a1 = float(fit_a[2]), float(fit_a[1])
    numeric_b0, numeric_b1 = float(fit_b[2]), float(fit_b[1])
    gauge = "direct" if numeric_a0 * a0 > 0 else "alternating"
    logging.info("The computed recursion is in the %s gauge.", gauge)
    return CharacteristicData(
        a0=a0,
        a1=a1,
        b0=b0,
        b1=b1,
        sigma_plus=sigma_plus,
        sigma_minus=sigma_minus,
        exponent_plus=exponent(sigma_plus),
        exponent_minus=exponent(sigma_minus),
        numeric_a0=numeric_a0,
        numeric_a1=numeric_a1,
        numeric_b0=numeric_b0,
        numeric_b1=numeric_b1,
        gauge=gauge,
        theta=math.acos(omega / alpha),
        lam=1 / (2 * math.sqrt(alpha**2 - omega**2)),
    )


def _initial_frequency(samples: FloatArray) -> float:
    """Locate the carrier frequency in (0, pi) from the windowed spectrum."""
    size = len(samples)
    padded = 8 * size
    spectrum = numpy.abs(
        numpy.fft.rfft((samples - samples.mean()) * numpy.hanning(size), padded),
    )
    peak = int(numpy.argmax(spectrum[1:-1])) + 1
    left, middle, right = spectrum[peak - 1 : peak + 2]
    shift = 0.5 * (left - right) / (left - 2 * middle + right)
    return float(2 * math.pi * (peak + shift) / padded)


def _demodulate(
    n: FloatArray,
    samples: FloatArray,
    theta: float,
) -> Tuple[float, float, float, float]:
    """Estimate theta, the log-phase coefficient, zeta and amplitude."""
    width = int(min(512, len(n) // 4))
    baseband = samples * numpy.exp(-1j * n * theta)
    smooth = numpy.convolve(baseband, numpy.ones(width) / width, mode="valid")
    centers = n[(width - 1) // 2 : (width - 1) // 2 + len(smooth)] + (
        0.5 if width % 2 == 0 else 0.0
    )
    phase = numpy.unwrap(numpy.angle(smooth))
    design = numpy.column_stack(
        [centers - centers[0], numpy.log(centers), numpy.ones_like(centers)],
    )
    (slope, log_phase, offset), *_ = numpy.linalg.lstsq(design, phase, rcond=None)
    zeta = offset - slope * centers[0]
    return theta + slope, log_phase, zeta, 2 * float(numpy.mean(numpy.abs(smooth)))


def fit_asymptotics(
    solution: RecursionSolution,
    window: Optional[Tuple[int, int]] = None,
    with_correction: bool = False,
) -> AsymptoticFit:
    """
    Fit amplitude, theta, lambda E and zeta over a window of large n.

    The returned c0 rescales the solution to amplitude pi^(-1/2).
    """
    n_max = solution.n_max
    if window is None:
        window = (n_max // 2, n_max)
    low, high = window
    if low < n_max / 10 or high > n_max or high - low < 1000:
        raise ValueError(
            f"The window must lie in [{n_max / 10}, {n_max}] and span at least "
            f"1000 indices, not {window}.",
        )
    n = numpy.arange(low, high + 1, dtype=float)
    samples = numpy.sqrt(n) * solution.C[low : high + 1]
    theta, log_phase, zeta, amplitude = _demodulate(
        n,
        samples,
        _initial_frequency(samples),
    )
    reference = float(n[len(n) // 2])
    offset = n - reference
    logs = numpy.log(n / reference)

    def model(parameters: FloatArray) -> FloatArray:
        phase = parameters[1] * offset + parameters[2] * logs + parameters[3]
        values = parameters[0] * numpy.cos(phase)
        if with_correction:
            values = values + parameters[4] / n * numpy.cos(
                parameters[1] * offset + parameters[5],
            )
        return values

    start = [
        amplitude,
        theta,
        log_phase,
        zeta + theta * reference + log_phase * math.log(reference),
    ]
    if with_correction:
        start += [0.0, 0.0]
    result = optimize.least_squares(
        lambda parameters: model(parameters) - samples,
        numpy.array(start),
        method="lm",
        x_scale="jac",
    )
    amplitude, theta, log_phase, phase_ref = (float(value) for value in result.x[:4])
    residual_rms = float(numpy.sqrt(numpy.mean(result.fun**2)))
    if not residual_rms <= 0.1 * abs(amplitude):
        raise FitDiverged(
            f"Residual {residual_rms:.3g} exceeds a tenth of "
            f"amplitude {amplitude:.3g}.",
        )
    zeta = phase_ref - theta * reference - log_phase * math.log(reference)
    if amplitude < 0:
        amplitude, zeta = -amplitude, zeta + math.pi
    theta = theta % (2 * math.pi)
    if theta > math.pi:
        theta, log_phase, zeta = 2 * math.pi - theta, -log_phase, -zeta
    energy = solution.E
    chirality = -1 if log_phase * energy > 0 else 1
    fit = AsymptoticFit(
        theta_fit=theta,
        lambda_fit=abs(log_phase / energy) if energy else math.nan,
        zeta_fit=zeta % (2 * math.pi),
        amplitude_fit=amplitude,
        residual_rms=residual_rms,
        window=(low, high),
        chirality=chirality,
        c0=1 / (math.sqrt(math.pi) * amplitude),
        log_phase=log_phase,
        correction=(
            (float(result.x[4]), float(result.x[5])) if with_correction else None
        ),
    )
    logging.info(
        "Fitted theta=%.6f, lambda=%.6f, zeta=%.6f (chirality %+d) at E=%s.",
        fit.theta_fit,
        fit.lambda_fit,
        fit.zeta_fit,
        fit.chirality,
        energy,
    )
    return fit


def normalize(solution: RecursionSolution, fit: AsymptoticFit) -> RecursionSolution:
    """Rescale a solution so that its asymptotic amplitude is pi^(-1/2)."""
    return attr.evolve(solution, C=solution.C * fit.c0, c0=solution.c0 * fit.c0)


def partial_sum_growth(
    solution: RecursionSolution,
    n_values: Optional[Sequence[int]] = None,
) -> Tuple[float, FloatArray]:
    """Fit the partial sums of C(n)**2 against ln N."""
    sums = numpy.cumsum(solution.C**2)
    if n_values is None:
        n_values = [n for n in (10**3, 10**4, 10**5, 10**6) if n <= solution.n_max]
        if len(n_values) < 2:
            n_values = [solution.n_max // 4, solution.n_max // 2, solution.n_max]
    table = numpy.array([[n, sums[n]] for n in n_values], dtype=float)
    slope, _ = numpy.polyfit(numpy.log(table[:, 0]), table[:, 1], 1)
    return float(slope), table


def unwrap_phases(values: Sequence[float]) -> FloatArray:
    """Continue phases along a grid, anchoring the first one in [0, 2 pi)."""
    phases = numpy.asarray(values, dtype=float)
    unwrapped = numpy.empty_like(phases)
    unwrapped[0] = phases[0] % (2 * math.pi)
    for i in range(1, len(phases)):
        step = (phases[i] - phases[i - 1] + math.pi) % (2 * math.pi) - math.pi
        unwrapped[i] = unwrapped[i - 1] + step
    return unwrapped


def zeta_smoothness_scan(
    energies: Sequence[float],
    params: ModelParams,
    n_max: int = 4000,
    guard: float = DEFAULT_GUARD,
) -> ZetaScan:
    """Track zeta(E) across a fine energy grid and test it for jumps."""
    grid = numpy.asarray(energies, dtype=float)
    if len(grid) < 3:
        raise ValueError("The grid needs at least three energies.")
    spacing = numpy.diff(grid)
    if numpy.any(spacing <= 0) or numpy.max(spacing) > 1e-3 + 1e-12:
        raise ValueError("The grid must increase in steps of at most 1e-3.")
    coefficients = solve_recursion_batch(grid.tolist(), n_max, params, guard)

    def _zeta(index: int) -> float:
        solution = RecursionSolution(
            E=float(grid[index]),
            params=params,
            C=coefficients[index],
            precision_bits=NATIVE_BITS,
        )
        return fit_asymptotics(solution).zeta_fit

    logging.info("Fitting zeta at %d energies...", len(grid))
    with concurrent.futures.ThreadPoolExecutor(max_workers=max_workers()) as pool:
        zeta = unwrap_phases(list(pool.map(_zeta, range(len(grid)))))
    increments = numpy.abs(numpy.diff(zeta))
    local = numpy.array(
        [
            numpy.median(increments[max(i - 5, 0) : i + 6])
            for i in range(len(increments))
        ],
    )
    ratio = float(numpy.max(increments / numpy.maximum(local, 1e-9)))
    return ZetaScan(
        energies=grid,
        zeta=zeta,
        derivative=numpy.gradient(zeta, grid),
        max_jump_ratio=ratio,
        smooth=ratio <= 10,
    )
