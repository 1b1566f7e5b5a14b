"""Delta Normalization, Spectral Synthesis and the Spectral Propagator"""

import concurrent.futures
import logging
import math
from typing import Callable, List, Optional, Sequence, Tuple

import attr
import numpy
from scipy import optimize
from scipy import special

from smilansky.channels import mode, mode_values, v_at, wavenumbers
from smilansky.channels import boundary_arrays
from smilansky.dynamics import (
    ChannelState,
    Grid,
    Propagator,
    PropagatorConfig,
    build_hamiltonian_action,
    distance,
)
from smilansky.model import (
    DEFAULT_GUARD,
    ComplexArray,
    FloatArray,
    Interval,
    ModelParams,
    SmilanskyError,
    check_energy,
    exceptional_energies,
    max_workers,
)
from smilansky.recursion import (
    AsymptoticFit,
    RecursionSolution,
    fit_asymptotics,
    solve_recursion_batch,
)

NORMALIZATIONS = ("amplitude", "isometric")

# Largest share of the synthesized norm allowed in the highest channel.
TAIL_TOLERANCE = 1e-2

# Evanescent decay chi pi beyond which a channel no longer matters.
EVANESCENT_CUTOFF = 40.0


class QuadratureUnderResolved(SmilanskyError):
    """The x quadrature is too coarse for a channel function."""


class SupportViolation(SmilanskyError):
    """A spectral profile touches an exceptional energy or leaves its table."""


class TailNotConverged(SmilanskyError):
    """Too much of a synthesized state sits in the highest channel."""


class PhaseUnderResolved(SmilanskyError):
    """exp(-iEt) varies too fast across one energy cell."""


@attr.s(auto_attribs=True, kw_only=True, frozen=True)
class GaussLegendreRule:  # pylint: disable=too-few-public-methods
    """Composite Gauss-Legendre Rule on a Closed Interval"""

    interval: Interval
    panels: int
    order: int
    nodes: FloatArray
    weights: FloatArray


def gauss_legendre_rule(
    interval: Interval,
    panels: int = 1,
    order: int = 64,
) -> GaussLegendreRule:
    """Split an interval into equal panels with order Gauss points each."""
    low, high = float(interval[0]), float(interval[1])
    if not high > low:
        raise ValueError(f"Invalid interval: {interval}")
    if panels < 1 or order < 1:
        raise ValueError("panels and order must be positive.")
    roots, weights = special.roots_legendre(order)
    edges = numpy.linspace(low, high, panels + 1)
    half = (edges[1:] - edges[:-1])[:, None] / 2
    middle = (edges[1:] + edges[:-1])[:, None] / 2
    return GaussLegendreRule(
        interval=(low, high),
        panels=panels,
        order=order,
        nodes=(middle + half * roots).reshape(-1),
        weights=(half * weights).reshape(-1),
    )


@attr.s(auto_attribs=True, kw_only=True, frozen=True)
class SpectralProfile:
    """Spectral Representative Psi(E) Sampled on a Quadrature Rule"""

    support: Interval
    nodes: FloatArray
    weights: FloatArray
    samples: ComplexArray

    def norm(self) -> float:
        """Get the integral of |Psi|**2."""
        return float(self.weights @ numpy.abs(self.samples) ** 2)

    def evolved(self, time: float) -> "SpectralProfile":
        """Multiply by exp(-i E t)."""
        phase = numpy.exp(-1j * self.nodes * time)
        return attr.evolve(self, samples=self.samples * phase)


def _check_support(support: Interval, omega: float, guard: float) -> None:
    low, high = support
    inside = exceptional_energies(omega, (low - guard, high + guard)).points
    if inside:
        raise SupportViolation(
            f"The support [{low}, {high}] meets exceptional energies {list(inside)}.",
        )


def make_profile(  # pylint: disable=too-many-arguments
    params: ModelParams,
    support: Interval,
    function: Callable[[FloatArray], FloatArray],
    panels: int = 1,
    order: int = 64,
    guard: float = DEFAULT_GUARD,
) -> SpectralProfile:
    """Sample a profile on a Gauss-Legendre rule over its support."""
    _check_support(support, params.omega, guard)
    rule = gauss_legendre_rule(support, panels, order)
    return SpectralProfile(
        support=rule.interval,
        nodes=rule.nodes,
        weights=rule.weights,
        samples=numpy.asarray(function(rule.nodes), dtype=complex),
    )


def bump_profile(
    params: ModelParams,
    support: Interval = (1.8, 2.2),
    panels: int = 1,
    order: int = 64,
    guard: float = DEFAULT_GUARD,
) -> SpectralProfile:
    """Build the normalized smooth bump exp(-1/(1 - s**2)) on a support."""
    low, high = support

    def bump(energies: FloatArray) -> FloatArray:
        s = (2 * energies - low - high) / (high - low)
        inside = numpy.abs(s) < 1
        values = numpy.zeros_like(energies)
        values[inside] = numpy.exp(-1 / (1 - s[inside] ** 2))
        return values

    profile = make_profile(params, support, bump, panels, order, guard)
    return attr.evolve(profile, samples=profile.samples / math.sqrt(profile.norm()))


@attr.s(auto_attribs=True, kw_only=True, frozen=True)
class EigenfunctionTable:  # pylint: disable=too-many-instance-attributes
    """
    Formal Eigenfunctions u_n(x, E) = C(n, E) v_n(x, E) on an Energy Grid

    C carries the sign (-1)**n, under which u_n obeys the matching
    condition of the point coupling.  The x rule covers [0, pi] with weights
    doubled for the whole circle.
    """

    params: ModelParams
    energies: FloatArray
    C: FloatArray  # pylint: disable=invalid-name
    v0: FloatArray
    x_nodes: FloatArray
    x_weights: FloatArray
    normalization: str
    fits: Tuple[AsymptoticFit, ...] = ()

    @property
    def n_max(self) -> int:
        """Get the last tabulated channel."""
        return int(self.C.shape[1]) - 1

    @property
    def u0(self) -> FloatArray:
        """Get u_n(0, E) for every energy and channel."""
        return numpy.asarray(self.C * self.v0)

    def index(self, energy: float) -> int:
        """Find the row of an energy."""
        close = numpy.isclose(self.energies, energy, rtol=0, atol=1e-12)
        matches = numpy.flatnonzero(close)
        if not len(matches):
            raise ValueError(f"E={energy} is not on the table grid.")
        return int(matches[0])

    def scale(self) -> float:
        """Get the factor that turns the table kernel into a unit delta."""
        alpha, omega = self.params.alpha, self.params.omega
        weight = math.sqrt(alpha**2 - omega**2)
        return 1.0 if self.normalization == "isometric" else 1 / weight


def default_n_max(e_max: float, omega: float) -> int:
    """Smallest channel beyond which all channels decay with chi pi > 40."""
    chi = EVANESCENT_CUTOFF / math.pi
    return max(int(math.ceil((chi**2 + 2 * e_max) / (2 * omega) - 0.5)), 1)


def build_table(  # pylint: disable=too-many-arguments,too-many-locals
    energies: Sequence[float],
    params: ModelParams,
    n_max: Optional[int] = None,
    normalization: str = "isometric",
    x_panels: int = 64,
    x_order: int = 16,
    fit_n: int = 4000,
    guard: float = DEFAULT_GUARD,
) -> EigenfunctionTable:
    """
    Tabulate normalized formal eigenfunctions at the given energies.

    The recursion runs to max(n_max, fit_n) so that the asymptotic amplitude
    can be fitted.  "amplitude" fixes the tail amplitude of C at pi^(-1/2);
    "isometric" rescales further by sqrt(2 lambda) so that the kernel tends
    to a unit delta.
    """
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"Unknown normalization: {normalization}")
    grid = numpy.asarray(energies, dtype=float)
    for energy in grid:
        check_energy(float(energy), params.omega, guard)
    if n_max is None:
        n_max = default_n_max(float(grid.max()), params.omega)
    length = max(n_max, fit_n)
    coefficients = solve_recursion_batch(grid.tolist(), length, params, guard)

    def _fit(index: int) -> AsymptoticFit:
        solution = RecursionSolution(
            E=float(grid[index]),
            params=params,
            C=coefficients[index],
            precision_bits=53,
        )
        return fit_asymptotics(solution)

    logging.info("Normalizing %d formal eigenfunctions...", len(grid))
    with concurrent.futures.ThreadPoolExecutor(max_workers=max_workers()) as pool:
        fits = tuple(pool.map(_fit, range(len(grid))))
    scale = numpy.array([fit.c0 for fit in fits])
    if normalization == "isometric":
        lam = 1 / (2 * math.sqrt(params.alpha**2 - params.omega**2))
        scale = scale * math.sqrt(2 * lam)
    signs = (-1.0) ** numpy.arange(n_max + 1)
    rule = gauss_legendre_rule((0.0, math.pi), x_panels, x_order)
    return EigenfunctionTable(
        params=params,
        energies=grid,
        C=coefficients[:, : n_max + 1] * scale[:, None] * signs,
        v0=numpy.array(
            [boundary_arrays(n_max, float(energy), params)[0] for energy in grid],
        ),
        x_nodes=rule.nodes,
        x_weights=2 * rule.weights,
        normalization=normalization,
        fits=fits,
    )


def _check_resolution(
    table: EigenfunctionTable,
    rows: Sequence[int],
    n_stop: int,
) -> None:
    edges = numpy.concatenate(([0.0], table.x_nodes, [math.pi]))
    spacing = float(numpy.max(numpy.diff(edges)))
    for row in rows:
        energy = float(table.energies[row])
        fastest = float(numpy.max(wavenumbers(n_stop, energy, table.params)))
        if fastest * spacing > 0.5:
            raise QuadratureUnderResolved(
                f"Wavenumber {fastest:.3g} at spacing {spacing:.3g} "
                f"(E={table.energies[row]}).",
            )


def overlap_pn(n: int, e1: float, e2: float, table: EigenfunctionTable) -> float:
    """Get P_n(E1, E2) = (u_n(E1), u_n(E2)) by quadrature over the circle."""
    if not 0 <= n <= table.n_max:
        raise ValueError(f"n must lie in [0, {table.n_max}], not {n}.")
    first, second = table.index(e1), table.index(e2)
    edges = numpy.concatenate(([0.0], table.x_nodes, [math.pi]))
    spacing = float(numpy.max(numpy.diff(edges)))
    for energy in (e1, e2):
        channel = mode(n, energy, table.params)
        if channel.k_or_chi * spacing > 0.5:
            raise QuadratureUnderResolved(
                f"Channel {n} at E={energy} needs a finer x quadrature.",
            )
    values = [
        v_at(mode(n, energy, table.params), table.x_nodes) for energy in (e1, e2)
    ]
    integral = float(table.x_weights @ (values[0] * values[1]))
    return float(table.C[first, n] * table.C[second, n] * integral)


def wronskian(e1: float, e2: float, table: EigenfunctionTable) -> FloatArray:
    """Get W_n(E1, E2) for n = 0..n_max, with W_0 = 0."""
    a = table.u0[table.index(e1)]
    b = table.u0[table.index(e2)]
    values = numpy.zeros(table.n_max + 1)
    n = numpy.arange(1, table.n_max + 1)
    values[1:] = numpy.sqrt(n) * (a[1:] * b[:-1] - a[:-1] * b[1:])
    return values


@attr.s(auto_attribs=True, kw_only=True, frozen=True)
class OverlapAccumulator:  # pylint: disable=too-few-public-methods
    """Partial Sums of P_n(E1, E2) Next to the W-Values"""

    e1: float
    e2: float
    partial_sums: FloatArray
    w_values: FloatArray


def accumulate_overlaps(
    e1: float,
    e2: float,
    n_stop: int,
    table: EigenfunctionTable,
) -> OverlapAccumulator:
    """Sum P_n by quadrature for n <= n_stop."""
    if not 0 <= n_stop < table.n_max:
        raise ValueError(f"N must lie in [0, {table.n_max - 1}], not {n_stop}.")
    rows = [table.index(e1), table.index(e2)]
    _check_resolution(table, rows, n_stop)
    first, second = (
        mode_values(n_stop, float(table.energies[row]), table.params, table.x_nodes)
        for row in rows
    )
    integrals = (first * second) @ table.x_weights
    terms = table.C[rows[0], : n_stop + 1] * table.C[rows[1], : n_stop + 1] * integrals
    return OverlapAccumulator(
        e1=e1,
        e2=e2,
        partial_sums=numpy.cumsum(terms),
        w_values=wronskian(e1, e2, table)[: n_stop + 2],
    )


def telescoping_check(
    e1: float,
    e2: float,
    n_stop: int,
    table: EigenfunctionTable,
) -> Tuple[float, float, float]:
    """Compare the quadrature sum of P_n with alpha W_{N+1} / (sqrt(2 omega) dE)."""
    if e1 == e2:
        raise ValueError("The telescoping identity needs E1 != E2.")
    accumulator = accumulate_overlaps(e1, e2, n_stop, table)
    lhs = float(accumulator.partial_sums[-1])
    factor = table.params.alpha / math.sqrt(2 * table.params.omega)
    rhs = float(factor * accumulator.w_values[n_stop + 1] / (e1 - e2))
    return lhs, rhs, abs(lhs - rhs)


def kernel_matrix(table: EigenfunctionTable, n_stop: int) -> FloatArray:
    """
    Get sum_{n <= N} P_n on all pairs of table energies.

    Off the diagonal the telescoped W form is used; the diagonal is the
    partial sum of C**2.
    """
    if not 0 <= n_stop < table.n_max:
        raise ValueError(f"N must lie in [0, {table.n_max - 1}], not {n_stop}.")
    upper = table.u0[:, n_stop + 1]
    lower = table.u0[:, n_stop]
    w_values = math.sqrt(n_stop + 1) * (
        numpy.outer(upper, lower) - numpy.outer(lower, upper)
    )
    gaps = table.energies[:, None] - table.energies[None, :]
    factor = table.params.alpha / math.sqrt(2 * table.params.omega)
    with numpy.errstate(divide="ignore", invalid="ignore"):
        kernel = factor * w_values / gaps
    diagonal = numpy.sum(table.C[:, : n_stop + 1] ** 2, axis=1)
    kernel[numpy.diag_indices_from(kernel)] = diagonal
    return numpy.asarray(kernel)


@attr.s(auto_attribs=True, kw_only=True, frozen=True)
class DeltaKernel:  # pylint: disable=too-few-public-methods
    """Partial-Sum Kernel at a Fixed E1 Against an E2 Grid"""

    e1: float
    e2: FloatArray
    n_values: FloatArray
    kernel: FloatArray
    envelope: FloatArray
    bound_ratio: float


def delta_kernel_profile(
    e1: float,
    e2_grid: Sequence[float],
    n_values: Sequence[int],
    table: EigenfunctionTable,
) -> DeltaKernel:
    """
    Evaluate sum_{n <= N} P_n(E1, E2) for every E2 and N.

    The envelope is the leading-order amplitude alpha sin(theta) / (pi |dE|)
    in table units; bound_ratio is the largest |kernel| over N >= 1000 in
    units of twice that amplitude.
    """
    alpha, omega = table.params.alpha, table.params.omega
    row = table.index(e1)
    columns = [table.index(energy) for energy in e2_grid]
    counts = numpy.asarray(n_values, dtype=int)
    if numpy.any(counts < 0) or numpy.any(counts >= table.n_max):
        raise ValueError(f"N must lie in [0, {table.n_max - 1}].")
    targets = table.energies[columns]
    gaps = e1 - targets
    factor = alpha / math.sqrt(2 * omega)
    u0 = table.u0
    kernel = numpy.empty((len(counts), len(columns)))
    for position, count in enumerate(counts):
        upper, lower = u0[:, count + 1], u0[:, count]
        values = math.sqrt(count + 1) * (
            upper[row] * lower[columns] - lower[row] * upper[columns]
        )
        with numpy.errstate(divide="ignore", invalid="ignore"):
            kernel[position] = numpy.where(
                gaps != 0,
                factor * values / numpy.where(gaps != 0, gaps, 1.0),
                numpy.sum(table.C[row, : count + 1] ** 2),
            )
    sine = math.sqrt(1 - (omega / alpha) ** 2)
    with numpy.errstate(divide="ignore"):
        envelope = alpha * sine / (math.pi * numpy.abs(gaps))
    if table.normalization == "isometric":
        envelope = envelope / (alpha * sine)
    late = counts >= 1000
    off = gaps != 0
    bound_ratio = math.nan
    if numpy.any(late) and numpy.any(off):
        ratios = numpy.abs(kernel[numpy.ix_(late, off)]) / (2 * envelope[off])
        bound_ratio = float(numpy.max(ratios))
    return DeltaKernel(
        e1=e1,
        e2=targets,
        n_values=counts.astype(float),
        kernel=kernel,
        envelope=envelope,
        bound_ratio=bound_ratio,
    )


def fit_log_frequency(
    n_values: Sequence[float],
    values: Sequence[float],
    guess: float,
) -> Tuple[float, float, float]:
    """Fit values ~ amplitude sin(frequency ln N + phase), returning all three."""
    logs = numpy.log(numpy.asarray(n_values, dtype=float))
    samples = numpy.asarray(values, dtype=float)
    scale = float(numpy.max(numpy.abs(samples))) or 1.0
    phases = numpy.linspace(0, 2 * math.pi, 8, endpoint=False)

    def residual(parameters: FloatArray) -> FloatArray:
        amplitude, frequency, phase = parameters
        return amplitude * numpy.sin(frequency * logs + phase) - samples / scale

    best = min(
        (
            optimize.least_squares(residual, [1.0, guess, phase], method="lm")
            for phase in phases
        ),
        key=lambda result: float(result.cost),
    )
    amplitude, frequency, phase = (float(value) for value in best.x)
    if frequency < 0:
        amplitude, frequency, phase = -amplitude, -frequency, -phase
    if amplitude < 0:
        amplitude, phase = -amplitude, phase + math.pi
    return frequency, phase % (2 * math.pi), amplitude * scale


def _check_profile(profile: SpectralProfile, table: EigenfunctionTable) -> None:
    same = len(profile.nodes) == len(table.energies) and numpy.allclose(
        profile.nodes,
        table.energies,
        rtol=0,
        atol=1e-12,
    )
    if not same:
        raise SupportViolation("The profile nodes differ from the table energies.")
    _check_support(profile.support, table.params.omega, 0.0)


def isometry_table(
    profile: SpectralProfile,
    table: EigenfunctionTable,
    n_values: Sequence[int],
) -> FloatArray:
    """
    Get rows (N, ||iota_N Psi||**2, ratio to the profile norm).

    The ratio includes the table's delta scale so that it tends to 1.
    """
    _check_profile(profile, table)
    weighted = profile.weights * profile.samples
    norm = profile.norm()
    rows: List[Tuple[float, float, float]] = []
    for count in n_values:
        kernel = kernel_matrix(table, int(count))
        value = float(numpy.real(weighted.conj() @ kernel @ weighted))
        ratio = value * table.scale() / norm if norm else math.nan
        rows.append((float(count), value, ratio))
    logging.info("Isometry ratios: %s", [round(row[2], 6) for row in rows])
    return numpy.array(rows)


def synthesize(
    profile: SpectralProfile,
    table: EigenfunctionTable,
    grid: Optional[Grid] = None,
    n_channels: Optional[int] = None,
    tail_tolerance: float = TAIL_TOLERANCE,
) -> ChannelState:
    """Build psi_n(x) = int Psi(E) u_n(x, E) dE on a channel grid."""
    _check_profile(profile, table)
    grid = grid or Grid(points=512)
    if n_channels is None:
        n_channels = table.n_max + 1
    if not 2 <= n_channels <= table.n_max + 1:
        raise ValueError(f"n_channels must lie in [2, {table.n_max + 1}].")
    psi = numpy.zeros((n_channels, grid.points + 1), dtype=complex)
    for row, energy in enumerate(table.energies):
        weight = profile.weights[row] * profile.samples[row]
        if weight == 0:
            continue
        values = mode_values(n_channels - 1, float(energy), table.params, grid.x)
        psi += weight * table.C[row, :n_channels, None] * values
    state = ChannelState(grid=grid, psi=psi, label="spectral")
    norms = state.channel_norms()
    total = float(norms.sum())
    if total > 0:
        tail = float(norms[-1]) / total
        if tail > tail_tolerance:
            raise TailNotConverged(
                f"Channel {n_channels - 1} holds {tail:.3g} of the norm "
                f"(tolerance {tail_tolerance:.3g}).",
            )
    return state


def _check_phase(profile: SpectralProfile, time: float) -> None:
    low, high = profile.support
    edges = numpy.concatenate(([low], profile.nodes, [high]))
    cell = float(numpy.max(numpy.diff(edges)))
    if cell * abs(time) > 0.5:
        raise PhaseUnderResolved(
            f"The phase turns {cell * abs(time):.3g} rad per energy cell at t={time}.",
        )


def spectral_propagate(  # pylint: disable=too-many-arguments
    profile: SpectralProfile,
    time: float,
    table: EigenfunctionTable,
    grid: Optional[Grid] = None,
    n_channels: Optional[int] = None,
    tail_tolerance: float = TAIL_TOLERANCE,
) -> ChannelState:
    """Synthesize exp(-i E t) Psi, the exact evolution of iota(Psi)."""
    _check_phase(profile, time)
    state = synthesize(profile.evolved(time), table, grid, n_channels, tail_tolerance)
    return attr.evolve(state, time=time)


def origin_amplitude(
    profile: SpectralProfile,
    table: EigenfunctionTable,
    channel: int,
    time: float,
) -> complex:
    """Get psi_channel(0, t) = int Psi(E) exp(-i E t) u_channel(0, E) dE."""
    _check_profile(profile, table)
    if not 0 <= channel <= table.n_max:
        raise ValueError(f"channel must lie in [0, {table.n_max}], not {channel}.")
    weighted = profile.weights * profile.evolved(time).samples
    return complex(weighted @ table.u0[:, channel])


def spectral_boundary(
    profile: SpectralProfile,
    table: EigenfunctionTable,
    n_channels: int,
    t_end: float,
) -> Callable[[float], complex]:
    """
    Get t -> psi_N(0, t) of the first channel a grid run with n_channels drops.

    The phase resolution is checked once for the whole run.
    """
    _check_profile(profile, table)
    if n_channels > table.n_max:
        raise ValueError(
            f"A driven run with {n_channels} channels needs a table up to "
            f"channel {n_channels}, not {table.n_max}.",
        )
    _check_phase(profile, t_end)
    weighted = profile.weights * profile.samples * table.u0[:, n_channels]

    def boundary(time: float) -> complex:
        return complex(weighted @ numpy.exp(-1j * profile.nodes * time))

    return boundary


def autocorrelation(
    profile: SpectralProfile,
    table: EigenfunctionTable,
    times: Sequence[float],
    n_stop: Optional[int] = None,
) -> Tuple[ComplexArray, ComplexArray]:
    """
    Compare (iota_N Psi, iota_N exp(-iEt) Psi) with the transform of |Psi|**2.

    The spectral side is returned in delta units, so both sides agree as N
    grows.
    """
    _check_profile(profile, table)
    if n_stop is None:
        n_stop = table.n_max - 1
    kernel = kernel_matrix(table, n_stop) * table.scale()
    weighted = profile.weights * profile.samples
    spectral = []
    fourier = []
    for time in times:
        phase = numpy.exp(-1j * profile.nodes * time)
        spectral.append(weighted.conj() @ kernel @ (weighted * phase))
        density = profile.weights * numpy.abs(profile.samples) ** 2
        fourier.append(numpy.sum(density * phase))
    return numpy.array(spectral), numpy.array(fourier)


def energy_distribution(
    profile: SpectralProfile,
    table: EigenfunctionTable,
) -> FloatArray:
    """Get P(n, E) = |Psi(E)|**2 C(n, E)**2 with rows indexed by E."""
    _check_profile(profile, table)
    return numpy.asarray(numpy.abs(profile.samples[:, None]) ** 2 * table.C**2)


def spectral_vs_grid(  # pylint: disable=too-many-arguments,too-many-locals
    profile: SpectralProfile,
    table: EigenfunctionTable,
    grid: Grid,
    n_channels: int,
    dt: float,
    times: Sequence[float],
    driven: bool = True,
) -> FloatArray:
    """
    Evolve iota(Psi) on the grid and compare with the spectral propagator.

    A driven run feeds the top retained channel the exact psi_N(0, t), so
    the gap measures the grid and time step alone.  Returns rows (t, L2
    distance, distance relative to the initial norm).
    """
    action = build_hamiltonian_action(table.params, grid, n_channels)
    config = PropagatorConfig(dt=dt, truncation_threshold=math.inf)
    boundary = None
    if driven:
        boundary = spectral_boundary(profile, table, n_channels, max(times))
    propagator = Propagator(action, config, boundary)
    state = synthesize(profile, table, grid, n_channels, math.inf)
    scale = math.sqrt(state.norm())
    rows = []
    for time in sorted(times):
        steps = int(round(time / dt)) - int(round(state.time / dt))
        for _ in range(steps):
            state = propagator(state)
        exact = spectral_propagate(profile, time, table, grid, n_channels, math.inf)
        gap = distance(state, exact)
        logging.info("Grid and spectral states differ by %.3g at t=%s.", gap, time)
        rows.append((time, gap, gap / scale))
    return numpy.array(rows)


def oracle_convergence(  # pylint: disable=too-many-arguments
    profile: SpectralProfile,
    table: EigenfunctionTable,
    grid: Grid,
    n_channels: int,
    dt: float,
    times: Sequence[float],
) -> FloatArray:
    """
    Repeat the driven comparison with dx and dt halved together.

    Returns rows (t, relative gap, refined relative gap, their ratio); a
    second order scheme shows ratios near 4.
    """
    coarse = spectral_vs_grid(profile, table, grid, n_channels, dt, times)
    fine = spectral_vs_grid(
        profile,
        table,
        Grid(points=2 * grid.points),
        n_channels,
        dt / 2,
        times,
    )
    with numpy.errstate(divide="ignore", invalid="ignore"):
        ratio = coarse[:, 2] / fine[:, 2]
    logging.info("Refinement ratios: %s", numpy.round(ratio, 3).tolist())
    return numpy.column_stack((coarse[:, 0], coarse[:, 2], fine[:, 2], ratio))
