"""Model Parameters and Shared Utilities"""

import enum
import math
import os
from typing import List, Tuple

import attr
import numpy
from numpy.typing import NDArray

FloatArray = NDArray[numpy.float64]
ComplexArray = NDArray[numpy.complex128]
Interval = Tuple[float, float]

# Distance from an exceptional energy below which coefficients are treated as
# degenerate.
DEFAULT_GUARD = 1e-6

# Distance 2E - (2n+1)omega below which a channel sits on its threshold.
THRESHOLD_GUARD = 1e-12


class SmilanskyError(Exception):
    """A computation could not be carried out."""


class ThresholdEnergy(SmilanskyError):
    """The energy sits on a channel threshold."""


class ExceptionalEnergy(SmilanskyError):
    """The energy is (too close to) an exceptional energy."""


class RecurrenceOverflow(SmilanskyError):
    """A three-term recurrence produced non-finite values."""


class Regime(enum.Enum):
    """Coupling regime relative to the oscillator frequency."""

    SUBCRITICAL = "subcritical"
    CRITICAL = "critical"
    OVERCRITICAL = "overcritical"


def _positive(
    instance: object,  # pylint: disable=unused-argument
    attribute: "attr.Attribute[float]",
    value: float,
) -> None:
    if not value > 0:
        raise ValueError(f"{attribute.name} must be positive, not {value}.")


@attr.s(auto_attribs=True, kw_only=True, frozen=True)
class ModelParams:
    """Coupling and Frequency of the Model"""

    alpha: float = attr.ib(converter=float, validator=_positive)
    omega: float = attr.ib(converter=float, validator=_positive)

    @property
    def box_half_width(self) -> float:
        """Get the half circumference of the circle."""
        return math.pi

    @property
    def regime(self) -> Regime:
        """Get the coupling regime."""
        return classify_regime(self)


@attr.s(auto_attribs=True, kw_only=True, frozen=True)
class ScalingTransform:
    """Unitary Dilation of Both Coordinates"""

    lam: float = attr.ib(converter=float, validator=_positive)

    def apply(self, params: ModelParams) -> Tuple[ModelParams, float]:
        """Map parameters and return the factor multiplying energies."""
        factor = self.lam**2
        return (
            ModelParams(alpha=params.alpha / factor, omega=params.omega / factor),
            factor,
        )

    def energy(self, energy: float) -> float:
        """Map an energy of the original model to the rescaled one."""
        return energy / self.lam**2


@attr.s(auto_attribs=True, kw_only=True, frozen=True)
class ExceptionalSet:  # pylint: disable=too-few-public-methods
    """Exceptional Energies Inside an Interval"""

    omega: float
    interval: Interval
    points: Tuple[float, ...]
    thresholds: Tuple[float, ...] = ()

    def __contains__(self, energy: object) -> bool:
        """Check exact membership."""
        return energy in self.points


def classify_regime(params: ModelParams) -> Regime:
    """Compare alpha and omega exactly."""
    if params.alpha < params.omega:
        return Regime.SUBCRITICAL
    if params.alpha == params.omega:
        return Regime.CRITICAL
    return Regime.OVERCRITICAL


def rescale(params: ModelParams, lam: float) -> Tuple[ModelParams, float]:
    """Rescale the model by lam, returning the energy factor lam**2."""
    return ScalingTransform(lam=lam).apply(params)


def _dedupe(values: List[float]) -> Tuple[float, ...]:
    points: List[float] = []
    for value in sorted(values):
        if not points or value - points[-1] > 1e-12 * max(1.0, abs(value)):
            points.append(value)
    return tuple(points)


def exceptional_energies(omega: float, interval: Interval) -> ExceptionalSet:
    """
    Enumerate the exceptional energies inside a closed interval.

    These are the channel thresholds (n+1/2)omega and the energies with
    2E = (2n+1)omega + (r+1/2)**2 at which a boundary value v_n(0) vanishes.
    """
    low, high = float(interval[0]), float(interval[1])
    if not math.isfinite(low) or not math.isfinite(high) or low > high:
        raise ValueError(f"Invalid interval: {interval}")
    if not omega > 0:
        raise ValueError(f"omega must be positive, not {omega}.")
    thresholds: List[float] = []
    points: List[float] = []
    n = 0
    while (n + 0.5) * omega <= high:
        threshold = (n + 0.5) * omega
        if threshold >= low:
            thresholds.append(threshold)
        r = 0
        while True:
            energy = ((2 * n + 1) * omega + (r + 0.5) ** 2) / 2
            if energy > high:
                break
            if energy >= low:
                points.append(energy)
            r += 1
        n += 1
    return ExceptionalSet(
        omega=omega,
        interval=(low, high),
        points=_dedupe(points + thresholds),
        thresholds=_dedupe(thresholds),
    )


def nearest_exceptional(energy: float, omega: float) -> Tuple[float, bool]:
    """Find the closest exceptional energy and whether it is a threshold."""
    width = 1.0
    while True:
        found = exceptional_energies(omega, (energy - width, energy + width))
        if found.points:
            point = min(found.points, key=lambda point: abs(point - energy))
            return point, point in found.thresholds
        width *= 2


def check_energy(energy: float, omega: float, guard: float = DEFAULT_GUARD) -> None:
    """Reject energies within guard of the exceptional set."""
    point, is_threshold = nearest_exceptional(energy, omega)
    if abs(point - energy) < guard:
        if is_threshold:
            raise ThresholdEnergy(f"E={energy} is within {guard} of threshold {point}")
        raise ExceptionalEnergy(
            f"E={energy} is within {guard} of exceptional energy {point}",
        )


def exceptional_free_windows(omega: float, interval: Interval) -> List[Interval]:
    """Split an interval into the open windows between exceptional energies."""
    points = exceptional_energies(omega, interval).points
    edges = [interval[0], *points, interval[1]]
    return [
        (float(left), float(right))
        for left, right in zip(edges[:-1], edges[1:])
        if right > left
    ]


def oscillator_matrix_elements(n_max: int, omega: float) -> FloatArray:
    """Tabulate <n|q|n'> for 0 <= n, n' <= n_max."""
    if n_max < 1:
        raise ValueError(f"n_max must be at least 1, not {n_max}.")
    upper = numpy.sqrt(numpy.arange(1, n_max + 1) / (2.0 * omega))
    return numpy.diag(upper, 1) + numpy.diag(upper, -1)


def hermite_functions(n_max: int, q: FloatArray, omega: float) -> FloatArray:
    """
    Evaluate the normalized Hermite functions h_0..h_n_max of the oscillator.

    The rows are generated by the normalized three-term recurrence
    h_{n+1} = sqrt(2 omega/(n+1)) q h_n - sqrt(n/(n+1)) h_{n-1}.
    """
    q = numpy.asarray(q, dtype=float)
    values = numpy.empty((n_max + 1,) + q.shape)
    values[0] = (omega / math.pi) ** 0.25 * numpy.exp(-omega * q**2 / 2)
    if n_max >= 1:
        values[1] = math.sqrt(2 * omega) * q * values[0]
    for n in range(1, n_max):
        values[n + 1] = (
            math.sqrt(2 * omega / (n + 1)) * q * values[n]
            - math.sqrt(n / (n + 1)) * values[n - 1]
        )
    if not numpy.all(numpy.isfinite(values)):
        raise RecurrenceOverflow(f"Hermite recurrence overflowed below n={n_max}.")
    return values


def max_workers() -> int:
    """Read the worker cap from SMILANSKY_THREADS."""
    value = os.environ.get("SMILANSKY_THREADS")
    if value is None:
        return os.cpu_count() or 1
    try:
        workers = int(value)
    except ValueError as exc:
        raise ValueError(f"SMILANSKY_THREADS is not an integer: {value}") from exc
    if workers < 1:
        raise ValueError(f"SMILANSKY_THREADS must be positive, not {workers}.")
    return workers
