"""Time Evolution in the Channel and Band Representations"""

import enum
import logging
import math
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import attr
import numpy
from scipy import linalg
from scipy import sparse
from scipy.sparse import linalg as sparse_linalg

from smilansky.model import (
    ComplexArray,
    FloatArray,
    ModelParams,
    SmilanskyError,
    hermite_functions,
    oscillator_matrix_elements,
)

# Bound on |h_n(q)| for n >= 1 at omega = 1.
HERMITE_BOUND = 0.816

OBSERVABLES = ("e_osc", "tail_prob", "q_mean", "coherence", "band_pops")

AC_UNKNOWN = "ac-projection unknown"


class GridMisaligned(SmilanskyError):
    """The particle grid has no node at x = 0."""


class SolveFailed(SmilanskyError):
    """A linear solve of the implicit step failed."""


class TruncationLeak(SmilanskyError):
    """Too much mass reached the highest retained channel."""


class QGridTooCoarse(SmilanskyError):
    """The oscillator grid cannot resolve the retained Hermite functions."""


class BoundaryLeak(SmilanskyError):
    """A band wave packet reached the edge of its domain."""


class Scheme(enum.Enum):
    """Time stepping scheme."""

    CRANK_NICOLSON = "crank_nicolson"


def _at_least(minimum: int) -> Any:
    def validate(
        instance: object,  # pylint: disable=unused-argument
        attribute: "attr.Attribute[int]",
        value: int,
    ) -> None:
        if value < minimum:
            raise ValueError(f"{attribute.name} must be at least {minimum}.")

    return validate


@attr.s(auto_attribs=True, kw_only=True, frozen=True)
class Grid:
    """
    Uniform Half Grid x_j = j pi / points of an Even Function on the Circle

    The weights (1, 2, ..., 2, 1) dx integrate over the whole circle.
    """

    points: int = attr.ib(validator=_at_least(2))

    @property
    def dx(self) -> float:
        """Get the node spacing."""
        return math.pi / self.points

    @property
    def x(self) -> FloatArray:
        """Get the nodes on [0, pi]."""
        return numpy.linspace(0.0, math.pi, self.points + 1)

    @property
    def weights(self) -> FloatArray:
        """Get the full circle trapezoid weights."""
        weights = numpy.full(self.points + 1, 2 * self.dx)
        weights[0] = weights[-1] = self.dx
        return weights


def grid_from_nodes(nodes: Sequence[float]) -> Grid:
    """Build a Grid from uniform nodes on [0, pi] or [-pi, pi)."""
    x = numpy.asarray(nodes, dtype=float)
    if len(x) < 3:
        raise GridMisaligned("A grid needs at least three nodes.")
    spacing = numpy.diff(x)
    dx = float(spacing[0])
    if dx <= 0 or not numpy.allclose(spacing, dx, rtol=1e-9, atol=0):
        raise GridMisaligned("Grid nodes must be uniformly spaced.")
    offset = x[0] / dx
    if abs(offset - round(offset)) > 1e-9:
        raise GridMisaligned(f"No node at x=0 with spacing {dx}.")
    points = math.pi / dx
    if abs(points - round(points)) > 1e-6:
        raise GridMisaligned(f"Spacing {dx} does not divide pi.")
    return Grid(points=int(round(points)))


@attr.s(auto_attribs=True, kw_only=True, frozen=True)
class ChannelState:
    """Channel Amplitudes psi_n(x_j) of an Even State"""

    grid: Grid
    psi: ComplexArray
    time: float = 0.0
    label: str = ""

    @property
    def n_channels(self) -> int:
        """Get the number of retained channels."""
        return int(self.psi.shape[0])

    def channel_norms(self) -> FloatArray:
        """Get ||psi_n||**2 for every channel."""
        return numpy.asarray(numpy.abs(self.psi) ** 2 @ self.grid.weights)

    def norm(self) -> float:
        """Get ||psi||**2."""
        return float(self.channel_norms().sum())


def inner(left: ChannelState, right: ChannelState) -> complex:
    """Get the inner product of two states on the same grid."""
    return complex(numpy.sum(left.psi.conj() * right.psi * left.grid.weights))


def distance(left: ChannelState, right: ChannelState) -> float:
    """Get the L2 distance between two states on the same grid."""
    channels = min(left.n_channels, right.n_channels)
    difference = left.psi[:channels] - right.psi[:channels]
    extra = sum(state.channel_norms()[channels:].sum() for state in (left, right))
    squared = numpy.sum(numpy.abs(difference) ** 2 * left.grid.weights)
    return math.sqrt(float(squared) + float(extra))


@attr.s(auto_attribs=True, kw_only=True, frozen=True)
class PropagatorConfig:  # pylint: disable=too-few-public-methods
    """Settings of the Implicit Time Step"""

    dt: float = attr.ib(converter=float)
    scheme: Scheme = Scheme.CRANK_NICOLSON
    delta_discretization: str = attr.ib(default="on-node")
    truncation_threshold: float = 1e-6
    stride: int = attr.ib(default=1, validator=_at_least(1))

    @dt.validator
    def _check_dt(
        self,
        attribute: "attr.Attribute[float]",  # pylint: disable=unused-argument
        value: float,
    ) -> None:
        if not value > 0:
            raise ValueError(f"dt must be positive, not {value}.")

    @delta_discretization.validator
    def _check_delta(
        self,
        attribute: "attr.Attribute[str]",  # pylint: disable=unused-argument
        value: str,
    ) -> None:
        if value != "on-node":
            raise ValueError(f"Unsupported delta discretization: {value}")


@attr.s(auto_attribs=True, kw_only=True, frozen=True)
class HamiltonianAction:
    """
    Discrete Hamiltonian H = W^-1 K on the Flattened Channel Grid

    Entry (n, j) sits at index n * (points + 1) + j.  K is real symmetric and
    W holds the quadrature weights, so H is self-adjoint in the weighted
    inner product.
    """

    params: ModelParams
    grid: Grid
    n_channels: int
    coupling: float
    stiffness: Any
    weights: FloatArray

    @property
    def size(self) -> int:
        """Get the dimension of the flattened state."""
        return len(self.weights)

    def __call__(self, psi: ComplexArray) -> ComplexArray:
        """Apply H to channel amplitudes of shape (n_channels, points + 1)."""
        flat = numpy.asarray(psi).reshape(-1)
        return numpy.asarray(self.stiffness @ flat / self.weights).reshape(
            numpy.shape(psi),
        )

    def matrix(self) -> Any:
        """Get H as a sparse matrix."""
        return sparse.diags(1 / self.weights) @ self.stiffness

    def energy(self, state: ChannelState) -> float:
        """Get <H> of a state."""
        flat = state.psi.reshape(-1)
        value = numpy.vdot(flat, self.stiffness @ flat).real
        return float(value / state.norm())

    def drive(self, value: complex) -> ComplexArray:
        """
        Get the source that the first dropped channel exerts on the top one.

        value is psi_N(0, t) with N = n_channels; the source enters K psi at
        x = 0 of channel N - 1 with the ladder element sqrt(N / (2 omega)).
        """
        source = numpy.zeros(self.size, dtype=complex)
        ladder = math.sqrt(self.n_channels / (2 * self.params.omega))
        source[(self.n_channels - 1) * (self.grid.points + 1)] = (
            self.coupling * ladder * value
        )
        return source


def _free_stiffness(grid: Grid) -> Any:
    """Neumann graph Laplacian over dx, the kinetic form on the half grid."""
    size = grid.points + 1
    diagonal = numpy.full(size, 2.0)
    diagonal[0] = diagonal[-1] = 1.0
    off = -numpy.ones(size - 1)
    return sparse.diags([off, diagonal, off], [-1, 0, 1]) / grid.dx


def build_hamiltonian_action(
    params: ModelParams,
    grid: Grid,
    n_channels: int,
    coupling: Optional[float] = None,
) -> HamiltonianAction:
    """
    Assemble the channel Hamiltonian with the point coupling at x = 0.

    The coupling defaults to alpha; zero decouples the channels.
    """
    if not isinstance(grid, Grid):
        grid = grid_from_nodes(grid)
    if n_channels < 2:
        raise ValueError(f"n_channels must be at least 2, not {n_channels}.")
    alpha = params.alpha if coupling is None else float(coupling)
    size = grid.points + 1
    levels = (numpy.arange(n_channels) + 0.5) * params.omega
    free = sparse.kron(sparse.identity(n_channels), _free_stiffness(grid))
    ladder = sparse.kron(sparse.diags(levels), sparse.diags(grid.weights))
    q = oscillator_matrix_elements(n_channels - 1, params.omega)
    rows, cols = numpy.nonzero(q)
    point = sparse.coo_matrix(
        (alpha * q[rows, cols], (rows * size, cols * size)),
        shape=(n_channels * size, n_channels * size),
    )
    stiffness = (free + ladder + point).tocsc()
    logging.debug(
        "Assembled a Hamiltonian with %d channels on %d nodes.",
        n_channels,
        size,
    )
    return HamiltonianAction(
        params=params,
        grid=grid,
        n_channels=n_channels,
        coupling=alpha,
        stiffness=stiffness,
        weights=numpy.tile(grid.weights, n_channels),
    )


class Propagator:
    """
    Factorized Crank-Nicolson Step (W + i dt/2 K) psi' = (W - i dt/2 K) psi

    A boundary b(t) = psi_N(0, t) drives the top channel; the right side
    then loses i dt/2 (f(t) + f(t + dt)) with f = action.drive(b).
    """

    def __init__(
        self,
        action: HamiltonianAction,
        config: PropagatorConfig,
        boundary: Optional[Callable[[float], complex]] = None,
    ):
        self.action = action
        self.config = config
        self.boundary = boundary
        half = 0.5j * config.dt * action.stiffness
        mass = sparse.diags(action.weights.astype(complex))
        self._explicit = (mass - half).tocsr()
        try:
            self._solver = sparse_linalg.splu((mass + half).tocsc())
        except RuntimeError as exc:
            raise SolveFailed("Could not factorize the implicit matrix.") from exc

    def __call__(self, state: ChannelState) -> ChannelState:
        """Advance a state by one time step."""
        flat = state.psi.reshape(-1)
        right = self._explicit @ flat
        if self.boundary is not None:
            dt = self.config.dt
            value = self.boundary(state.time) + self.boundary(state.time + dt)
            right = right - 0.5j * dt * self.action.drive(value)
        updated = self._solver.solve(right)
        if not numpy.all(numpy.isfinite(updated)):
            raise SolveFailed(f"The implicit solve failed at t={state.time}.")
        advanced = attr.evolve(
            state,
            psi=updated.reshape(state.psi.shape),
            time=state.time + self.config.dt,
        )
        norms = advanced.channel_norms()
        top = float(norms[-1] / norms.sum())
        if top > self.config.truncation_threshold:
            raise TruncationLeak(
                f"The top channel holds {top:.3g} of the mass at "
                f"t={advanced.time:.6g}.",
            )
        return advanced


def step(
    state: ChannelState,
    config: PropagatorConfig,
    action: HamiltonianAction,
) -> ChannelState:
    """Advance a state by one Crank-Nicolson step."""
    return Propagator(action, config)(state)


def exact_propagate(
    state: ChannelState,
    action: HamiltonianAction,
    time: float,
) -> ChannelState:
    """Apply exp(-i H t) of the discrete Hamiltonian with expm_multiply."""
    flat = state.psi.reshape(-1)
    evolved = sparse_linalg.expm_multiply(-1j * time * action.matrix(), flat)
    return attr.evolve(
        state,
        psi=numpy.asarray(evolved).reshape(state.psi.shape),
        time=state.time + time,
    )


def rayleigh_variance(state: ChannelState, action: HamiltonianAction) -> float:
    """Get <H**2> - <H>**2 of a state."""
    applied = action(state.psi)
    norm = state.norm()
    mean = action.energy(state)
    square = float(numpy.sum(numpy.abs(applied) ** 2 * state.grid.weights)) / norm
    return square - mean**2


def product_state(
    grid: Grid,
    n_channels: int,
    width: float = 0.5,
    channel: int = 0,
) -> ChannelState:
    """Gaussian profile centered at x = 0 in a single oscillator level."""
    if not 0 <= channel < n_channels:
        raise ValueError(f"channel must lie in [0, {n_channels}), not {channel}.")
    profile = numpy.exp(-(grid.x**2) / (2 * width**2))
    profile /= math.sqrt(float(profile**2 @ grid.weights))
    psi = numpy.zeros((n_channels, grid.points + 1), dtype=complex)
    psi[channel] = profile
    return ChannelState(grid=grid, psi=psi, label=AC_UNKNOWN)


def oscillator_energy(state: ChannelState, omega: float) -> float:
    """Get E_osc = sum_n (n + 1/2) omega ||psi_n||**2."""
    levels = (numpy.arange(state.n_channels) + 0.5) * omega
    return float(levels @ state.channel_norms())


def tail_probability(state: ChannelState, eta: float) -> float:
    """Get the fraction of the mass in eta < |x| < pi."""
    weights = numpy.where(state.grid.x > eta, state.grid.weights, 0.0)
    return float(numpy.sum(numpy.abs(state.psi) ** 2 @ weights) / state.norm())


def q_mean(state: ChannelState, omega: float) -> float:
    """Get <q> from the ladder matrix elements."""
    overlaps = numpy.sum(
        state.psi[:-1].conj() * state.psi[1:] * state.grid.weights,
        axis=1,
    ).real
    ladder = numpy.sqrt(numpy.arange(1, state.n_channels) / (2 * omega))
    return float(2 * ladder @ overlaps / state.norm())


def particle_density(state: ChannelState) -> FloatArray:
    """Get sum_n |psi_n(x)|**2 on the half grid."""
    return numpy.asarray(numpy.sum(numpy.abs(state.psi) ** 2, axis=0))


def _full_circle(state: ChannelState) -> Tuple[FloatArray, ComplexArray]:
    """Unfold the half grid onto x_k = -pi + k dx, k < 2 points."""
    points = state.grid.points
    x = -math.pi + state.grid.dx * numpy.arange(2 * points)
    index = numpy.rint(numpy.abs(x) / state.grid.dx).astype(int)
    return x, state.psi[:, index]


def coherence_dictionary(grid: Grid, size: int = 10) -> FloatArray:
    """Orthonormal even functions 1/sqrt(2 pi) and cos(k x)/sqrt(pi)."""
    rows = [numpy.full(grid.points + 1, 1 / math.sqrt(2 * math.pi))]
    rows += [numpy.cos(k * grid.x) / math.sqrt(math.pi) for k in range(1, size)]
    return numpy.array(rows)


def reduced_coherence(state: ChannelState, eta: float = 0.5) -> Tuple[float, float]:
    """
    Measure the reduced particle operator S(x, x') = sum_n psi_n(x) psi_n(x')*.

    Returns the largest |(phi, S phi')| over the test dictionary and the mass
    sum |S|**2 dx**2 over pairs further apart than eta on the circle.
    """
    dictionary = coherence_dictionary(state.grid)
    projections = (state.psi * state.grid.weights) @ dictionary.T
    gram = projections.T @ projections.conj()
    coherence = float(numpy.max(numpy.abs(gram)))
    x, unfolded = _full_circle(state)
    kernel = unfolded.T @ unfolded.conj()
    separation = numpy.abs(x[:, None] - x[None, :])
    separation = numpy.minimum(separation, 2 * math.pi - separation)
    mass = numpy.sum(numpy.abs(kernel[separation > eta]) ** 2) * state.grid.dx**2
    return coherence, float(mass)


def grid_bands(
    params: ModelParams,
    grid: Grid,
    q: float,
    n_bands: int,
) -> Tuple[FloatArray, FloatArray]:
    """
    Lowest bands of the discrete particle Hamiltonian at a frozen q.

    Returns the energies and the band functions, orthonormal in the
    weighted inner product of the grid.
    """
    stiffness = _free_stiffness(grid).toarray()
    stiffness[0, 0] += params.alpha * q
    scale = 1 / numpy.sqrt(grid.weights)
    diagonal = numpy.diag(stiffness) * scale**2
    off = numpy.diag(stiffness, 1) * scale[:-1] * scale[1:]
    energies, vectors = linalg.eigh_tridiagonal(
        diagonal,
        off,
        select="i",
        select_range=(0, n_bands - 1),
    )
    functions = (vectors * scale[:, None]).T
    signs = numpy.sign(functions[:, -1])
    signs[signs == 0] = 1.0
    return energies, functions * signs[:, None]


def _check_q_grid(q_grid: FloatArray, n_channels: int, omega: float) -> float:
    spacing = numpy.diff(q_grid)
    dq = float(spacing[0])
    if dq <= 0 or not numpy.allclose(spacing, dq, rtol=1e-9, atol=0):
        raise QGridTooCoarse("The q grid must be uniform.")
    wavenumber = math.sqrt((2 * n_channels - 1) * omega)
    turning = wavenumber / omega
    margin = 3 / math.sqrt(omega)
    if dq * wavenumber > 0.5:
        raise QGridTooCoarse(
            f"Spacing {dq} cannot resolve h_{n_channels - 1} (wavenumber "
            f"{wavenumber:.3g}).",
        )
    if q_grid[0] > -turning - margin or q_grid[-1] < turning + margin:
        raise QGridTooCoarse(
            f"The q grid must cover [-{turning + margin:.3g}, {turning + margin:.3g}].",
        )
    return dq


def reconstruct(
    state: ChannelState,
    q_grid: Sequence[float],
    omega: float,
) -> ComplexArray:
    """Sum psi(x, q) = sum_n psi_n(x) h_n(q), with rows indexed by q."""
    q = numpy.asarray(q_grid, dtype=float)
    hermite = hermite_functions(state.n_channels - 1, q, omega)
    bound = HERMITE_BOUND * omega**0.25
    if state.n_channels > 1 and numpy.max(numpy.abs(hermite[1:])) > bound:
        logging.warning("Hermite functions exceed the uniform bound %.3f.", bound)
    return numpy.asarray(hermite.T @ state.psi)


def band_populations(
    state: ChannelState,
    params: ModelParams,
    q_grid: Sequence[float],
    n_bands: int,
) -> FloatArray:
    """Get ||Pi_n psi||**2 = int |Q_n(q)|**2 dq for the lowest bands."""
    q = numpy.asarray(q_grid, dtype=float)
    dq = _check_q_grid(q, state.n_channels, params.omega)
    values = reconstruct(state, q, params.omega)
    populations = numpy.zeros(n_bands)
    for index, point in enumerate(q):
        _, functions = grid_bands(params, state.grid, float(point), n_bands)
        amplitudes = functions @ (state.grid.weights * values[index])
        populations += numpy.abs(amplitudes) ** 2 * dq
    return populations


def band_state(
    params: ModelParams,
    grid: Grid,
    n_channels: int,
    q_grid: Sequence[float],
    amplitudes: Sequence[complex],
) -> ChannelState:
    """
    Lift a ground band wave function Q(q) to channel amplitudes.

    psi_n(x) = sum_j dq h_n(q_j) Q(q_j) phi_0(x; q_j), with each band
    function signed so that its integral is positive.
    """
    q = numpy.asarray(q_grid, dtype=float)
    values = numpy.asarray(amplitudes, dtype=complex)
    if len(q) != len(values):
        raise ValueError("The q grid and the amplitudes differ in length.")
    dq = _check_q_grid(q, n_channels, params.omega)
    magnitude = numpy.abs(values)
    active = numpy.flatnonzero(magnitude > 1e-16 * numpy.max(magnitude))
    hermite = hermite_functions(n_channels - 1, q[active], params.omega)
    psi = numpy.zeros((n_channels, grid.points + 1), dtype=complex)
    for column, index in enumerate(active):
        _, functions = grid_bands(params, grid, float(q[index]), 1)
        ground = functions[0]
        if ground @ grid.weights < 0:
            ground = -ground
        psi += dq * values[index] * hermite[:, column, None] * ground
    return ChannelState(grid=grid, psi=psi, label="ground band")


@attr.s(auto_attribs=True, kw_only=True)
class ObservableTrace:  # pylint: disable=too-many-instance-attributes
    """Observables Sampled Along a Channel Evolution"""

    times: List[float] = attr.ib(factory=list)
    norm: List[float] = attr.ib(factory=list)
    energy: List[float] = attr.ib(factory=list)
    e_osc: List[float] = attr.ib(factory=list)
    tail_prob: List[float] = attr.ib(factory=list)
    q_mean: List[float] = attr.ib(factory=list)
    coherence: List[float] = attr.ib(factory=list)
    band_pops: List[List[float]] = attr.ib(factory=list)
    e_osc_average: float = math.nan
    occupation_average: Optional[FloatArray] = None
    truncated: bool = False
    leak_time: Optional[float] = None
    label: str = ""

    def columns(self) -> Dict[str, FloatArray]:
        """Get the recorded series as named columns."""
        columns = {
            "t": numpy.array(self.times),
            "norm": numpy.array(self.norm),
            "energy": numpy.array(self.energy),
        }
        for name in OBSERVABLES[:-1]:
            values = getattr(self, name)
            if values:
                columns[name] = numpy.array(values)
        if self.band_pops:
            pops = numpy.array(self.band_pops)
            for band in range(pops.shape[1]):
                columns[f"band_pop_{band}"] = pops[:, band]
        return columns


def evolve_and_trace(  # pylint: disable=too-many-arguments,too-many-locals
    state: ChannelState,
    config: PropagatorConfig,
    action: HamiltonianAction,
    t_end: float,
    observables: Sequence[str] = OBSERVABLES[:-1],
    eta: float = 0.5,
    n_bands: int = 4,
    q_grid: Optional[Sequence[float]] = None,
    boundary: Optional[Callable[[float], complex]] = None,
) -> ObservableTrace:
    """
    Evolve a state and sample observables every config.stride steps.

    A TruncationLeak ends the run early and marks the trace as truncated.
    A boundary drives the top channel as in Propagator.
    """
    unknown = set(observables) - set(OBSERVABLES)
    if unknown:
        raise ValueError(f"Unknown observables: {sorted(unknown)}")
    if "band_pops" in observables and q_grid is None:
        raise ValueError("Band populations need a q grid.")
    omega = action.params.omega
    propagator = Propagator(action, config, boundary)
    trace = ObservableTrace(label=state.label)
    occupation = numpy.zeros(state.n_channels)
    e_osc_integral = 0.0
    previous = state.channel_norms()

    def record(current: ChannelState) -> None:
        trace.times.append(current.time)
        trace.norm.append(current.norm())
        trace.energy.append(action.energy(current))
        if "e_osc" in observables:
            trace.e_osc.append(oscillator_energy(current, omega))
        if "tail_prob" in observables:
            trace.tail_prob.append(tail_probability(current, eta))
        if "q_mean" in observables:
            trace.q_mean.append(q_mean(current, omega))
        if "coherence" in observables:
            trace.coherence.append(reduced_coherence(current, eta)[0])
        if "band_pops" in observables and q_grid is not None:
            pops = band_populations(current, action.params, q_grid, n_bands)
            trace.band_pops.append(pops.tolist())

    steps = int(round(t_end / config.dt))
    logging.info("Evolving %d channels for %d steps...", state.n_channels, steps)
    record(state)
    for index in range(1, steps + 1):
        try:
            state = propagator(state)
        except TruncationLeak as exc:
            logging.warning("Stopping the run: %s", exc)
            trace.truncated = True
            trace.leak_time = state.time + config.dt
            break
        norms = state.channel_norms()
        occupation += 0.5 * config.dt * (previous + norms)
        levels = (numpy.arange(state.n_channels) + 0.5) * omega
        e_osc_integral += 0.5 * config.dt * float(levels @ (previous + norms))
        previous = norms
        if index % config.stride == 0 or index == steps:
            record(state)
    elapsed = state.time - trace.times[0]
    if elapsed > 0:
        trace.e_osc_average = e_osc_integral / elapsed
        trace.occupation_average = occupation / elapsed
    logging.info("Recorded %d samples up to t=%.6g.", len(trace.times), state.time)
    return trace


def growth_rate(
    times: Sequence[float],
    values: Sequence[float],
    t_min: float = 1.0,
    t_max: Optional[float] = None,
) -> float:
    """Fit the exponential rate of a positive series over [t_min, t_max]."""
    t = numpy.asarray(times, dtype=float)
    y = numpy.asarray(values, dtype=float)
    upper = t[-1] if t_max is None else t_max
    window = (t >= t_min) & (t <= upper) & (y > 0)
    if numpy.count_nonzero(window) < 2:
        raise ValueError(f"Fewer than two samples in [{t_min}, {upper}].")
    slope, _ = numpy.polyfit(t[window], numpy.log(y[window]), 1)
    return float(slope)


@attr.s(auto_attribs=True, kw_only=True, frozen=True)
class BandState:  # pylint: disable=too-few-public-methods
    """Ground Band Wave Function Q_0(q_j)"""

    q_grid: FloatArray
    Q0: ComplexArray  # pylint: disable=invalid-name
    potential: FloatArray
    time: float = 0.0

    def norm(self) -> float:
        """Get the discrete L2 norm squared."""
        dq = float(self.q_grid[1] - self.q_grid[0])
        return float(numpy.sum(numpy.abs(self.Q0) ** 2) * dq)


@attr.s(auto_attribs=True, kw_only=True)
class BandTrace:  # pylint: disable=too-few-public-methods
    """Moments Sampled Along a Band-Reduced Evolution"""

    times: List[float] = attr.ib(factory=list)
    norm: List[float] = attr.ib(factory=list)
    q_mean: List[float] = attr.ib(factory=list)
    q2_mean: List[float] = attr.ib(factory=list)
    energy: List[float] = attr.ib(factory=list)
    sponge: bool = False
    final: Optional[BandState] = None

    def columns(self) -> Dict[str, FloatArray]:
        """Get the recorded series as named columns."""
        return {
            "t": numpy.array(self.times),
            "norm": numpy.array(self.norm),
            "q_mean": numpy.array(self.q_mean),
            "q2_mean": numpy.array(self.q2_mean),
            "energy": numpy.array(self.energy),
        }


def coherent_state(
    q_grid: Sequence[float],
    q0: float,
    p0: float = 0.0,
    omega: float = 1.0,
) -> ComplexArray:
    """Gaussian of the oscillator ground width centered at (q0, p0)."""
    q = numpy.asarray(q_grid, dtype=float)
    values = numpy.exp(-omega * (q - q0) ** 2 / 2 + 1j * p0 * (q - q0))
    dq = float(q[1] - q[0])
    return numpy.asarray(values / math.sqrt(numpy.sum(numpy.abs(values) ** 2) * dq))


def _band_hamiltonian(q: FloatArray, potential: FloatArray) -> Any:
    dq = float(q[1] - q[0])
    size = len(q)
    kinetic = sparse.diags(
        [-numpy.ones(size - 1), 2 * numpy.ones(size), -numpy.ones(size - 1)],
        [-1, 0, 1],
    ) / (2 * dq**2)
    return (kinetic + sparse.diags(potential)).tocsc()


def band_reduced_evolve(  # pylint: disable=too-many-arguments,too-many-locals
    initial: Sequence[complex],
    q_grid: Sequence[float],
    potential: Sequence[float],
    dt: float,
    t_end: float,
    sponge: bool = False,
    stride: int = 1,
    leak_tolerance: float = 1e-8,
) -> BandTrace:
    """
    Evolve Q_0 under -1/2 d2/dq2 + V(q) with Dirichlet ends.

    Mass in the outer 5% of the domain raises BoundaryLeak unless an
    absorbing sponge is switched on; sponge runs are flagged.
    """
    q = numpy.asarray(q_grid, dtype=float)
    values = numpy.asarray(initial, dtype=complex)
    samples = numpy.asarray(potential, dtype=float)
    if not dt > 0:
        raise ValueError(f"dt must be positive, not {dt}.")
    if not len(q) == len(values) == len(samples):
        raise ValueError("Grid, wave function and potential differ in length.")
    dq = float(q[1] - q[0])
    hamiltonian = _band_hamiltonian(q, samples)
    span = q[-1] - q[0]
    strip = (q < q[0] + 0.05 * span) | (q > q[-1] - 0.05 * span)
    if sponge:
        logging.warning("An absorbing sponge is active; the norm is not conserved.")
        depth = numpy.where(
            strip,
            numpy.minimum(q - q[0], q[-1] - q) / (0.05 * span),
            1.0,
        )
        hamiltonian = hamiltonian - 1j * sparse.diags(
            numpy.where(strip, (1 - depth) ** 2, 0.0),
        )
    identity = sparse.identity(len(q), format="csc")
    half = 0.5j * dt * hamiltonian
    explicit = (identity - half).tocsr()
    try:
        solver = sparse_linalg.splu((identity + half).tocsc())
    except RuntimeError as exc:
        raise SolveFailed("Could not factorize the band propagator.") from exc
    energy_operator = _band_hamiltonian(q, samples)
    trace = BandTrace(sponge=sponge)

    def record(time: float, current: ComplexArray) -> None:
        density = numpy.abs(current) ** 2 * dq
        norm = float(density.sum())
        trace.times.append(time)
        trace.norm.append(norm)
        trace.q_mean.append(float(density @ q / norm))
        trace.q2_mean.append(float(density @ q**2 / norm))
        trace.energy.append(
            float(numpy.vdot(current, energy_operator @ current).real * dq / norm),
        )

    steps = int(round(t_end / dt))
    logging.info("Evolving the band wave function for %d steps...", steps)
    record(0.0, values)
    for index in range(1, steps + 1):
        values = solver.solve(explicit @ values)
        if not sponge:
            leaked = float(numpy.sum(numpy.abs(values[strip]) ** 2) * dq)
            if leaked > leak_tolerance:
                raise BoundaryLeak(
                    f"Mass {leaked:.3g} reached the domain edge at t={index * dt:.6g}.",
                )
        if index % stride == 0 or index == steps:
            record(index * dt, values)
    trace.final = BandState(
        q_grid=q,
        Q0=values,
        potential=samples,
        time=steps * dt,
    )
    return trace
