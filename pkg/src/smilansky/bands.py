"""Adiabatic Bands of One and Two Oscillators"""

import concurrent.futures
import logging
import math
from typing import Callable, List, Sequence, Tuple

import attr
import numpy
from scipy import linalg
from scipy import optimize
from scipy import special

from smilansky.channels import (
    ChannelMode,
    boundary_from_k2,
    mode_from_k2,
    v_boundary,
)
from smilansky.model import FloatArray, ModelParams, SmilanskyError, max_workers

# Relative residual of the cleared band equation accepted at a root.
ROOT_TOLERANCE = 1e-10

# Sampling step used to bracket the real roots of the two-oscillator equation.
SAMPLING_STEP = 1 / 128

# Relative size of the last retained term of the correction series.
SERIES_TOLERANCE = 1e-8

BOUNDED_BELOW = "bounded-below"
MARGINAL = "marginal"
INVERTED = "inverted"
VALLEYS_AND_CREST = "valleys-and-crest"
UNBOUNDED = "unbounded"


class RootNotConverged(SmilanskyError):
    """A band root does not satisfy its equation."""


class SeriesNotConverged(SmilanskyError):
    """The band correction series has not converged."""


class NotBracketed(SmilanskyError):
    """A bisection interval does not contain a sign change."""


@attr.s(auto_attribs=True, kw_only=True, frozen=True)
class BandPoint:
    """Root of the Single-Oscillator Band Equation"""

    q: float
    n: int
    xi: float
    imaginary: bool
    W: float  # pylint: disable=invalid-name
    A: float  # pylint: disable=invalid-name

    @property
    def k2(self) -> float:
        """Get the signed squared wavenumber."""
        return -self.xi**2 if self.imaginary else self.xi**2


@attr.s(auto_attribs=True, kw_only=True, frozen=True)
class BandPotential:
    """Born-Oppenheimer Potential of the Lowest Band at One Point"""

    q: float
    harmonic: float
    W0: float  # pylint: disable=invalid-name
    gamma_term: float = 0.0
    tail_bound: float = 0.0

    @property
    def value(self) -> float:
        """Get the total potential."""
        return self.harmonic + self.W0 + self.gamma_term


@attr.s(auto_attribs=True, kw_only=True, frozen=True)
class BandPoint2:  # pylint: disable=too-few-public-methods
    """Root of the Two-Oscillator Band Equation"""

    q1: float
    q2: float
    n: int
    xi: float
    imaginary: bool
    W: float  # pylint: disable=invalid-name
    E: float  # pylint: disable=invalid-name


@attr.s(auto_attribs=True, kw_only=True)
class BandSurface2:  # pylint: disable=too-few-public-methods
    """Band Energy E_n(q1, q2) Tabulated on a Grid"""

    n: int
    q1: FloatArray
    q2: FloatArray
    energy: FloatArray
    xi: FloatArray
    imaginary: FloatArray
    region_r: FloatArray
    classification: str = ""


def _bisect(
    function: Callable[[FloatArray], FloatArray],
    low: FloatArray,
    high: FloatArray,
    iterations: int = 100,
) -> FloatArray:
    """Bisect elementwise, assuming a sign change on every interval."""
    low = numpy.array(low, dtype=float)
    high = numpy.array(high, dtype=float)
    sign = numpy.sign(function(low))
    for _ in range(iterations):
        middle = (low + high) / 2
        same = numpy.sign(function(middle)) == sign
        low = numpy.where(same, middle, low)
        high = numpy.where(same, high, middle)
    return (low + high) / 2


def _real_residual(xi: float, coupling: float) -> float:
    sin, cos = math.sin(math.pi * xi), math.cos(math.pi * xi)
    scale = abs(xi) + abs(coupling)
    return abs(xi * sin - coupling * cos) / max(scale, 1e-300)


def _brentq(function: Callable[[float], float], low: float, high: float) -> float:
    try:
        return float(optimize.brentq(function, low, high, xtol=1e-15, maxiter=500))
    except (RuntimeError, ValueError) as exc:
        raise RootNotConverged(f"No root on [{low}, {high}]: {exc}") from exc


def solve_xi(q: float, n: int, params: ModelParams) -> BandPoint:
    """
    Find the n-th root of xi sin(pi xi) = alpha q cos(pi xi).

    The roots are ordered by W.
    For n >= 1 the root lies in (n - 1/2, n + 1/2).
    The ground root is real in (0, 1/2) for q > 0 and zero at q = 0.
    For q < 0 it is imaginary, xi = i chi with chi tanh(pi chi) = -alpha q.
    """
    if n < 0:
        raise ValueError(f"n must be non-negative, not {n}.")
    coupling = params.alpha * q
    imaginary = False
    if n == 0 and coupling == 0:
        xi = 0.0
    elif n == 0 and coupling < 0:
        imaginary = True
        xi = _brentq(
            lambda chi: chi * math.tanh(math.pi * chi) + coupling,
            0.0,
            abs(coupling) + 2,
        )
        residual = abs(xi * math.tanh(math.pi * xi) + coupling) / abs(coupling)
        if residual > ROOT_TOLERANCE:
            raise RootNotConverged(f"Residual {residual} at q={q}, n={n}")
    else:
        low, high = (0.0, 0.5) if n == 0 else (n - 0.5, n + 0.5)
        xi = _brentq(
            lambda x: x * math.sin(math.pi * x) - coupling * math.cos(math.pi * x),
            low,
            high,
        )
        residual = _real_residual(xi, coupling)
        if residual > ROOT_TOLERANCE:
            raise RootNotConverged(f"Residual {residual} at q={q}, n={n}")
    k2 = -(xi**2) if imaginary else xi**2
    channel = mode_from_k2(n, k2 / 2, k2)
    return BandPoint(q=q, n=n, xi=xi, imaginary=imaginary, W=k2 / 2, A=channel.rho)


def band_eigenfunction(point: BandPoint) -> ChannelMode:
    """Get the normalized eigenfunction of the band point, positive at x = pi."""
    return mode_from_k2(point.n, point.W, point.k2)


def dW_dq(q: float, n: int, params: ModelParams) -> float:  # pylint: disable=C0103
    """Differentiate W_n(q) by Feynman-Hellmann: alpha phi_n(0)**2."""
    value, _ = v_boundary(band_eigenfunction(solve_xi(q, n, params)))
    return params.alpha * value**2


def _ground_xi(coupling: FloatArray) -> Tuple[FloatArray, FloatArray]:
    """Solve the ground band equation for an array of alpha q."""
    coupling = numpy.asarray(coupling, dtype=float)
    positive = numpy.where(coupling > 0, coupling, 0.0)
    negative = numpy.where(coupling < 0, -coupling, 0.0)
    xi = _bisect(
        lambda x: x * numpy.sin(math.pi * x) - positive * numpy.cos(math.pi * x),
        numpy.zeros_like(coupling),
        numpy.full_like(coupling, 0.5),
    )
    chi = _bisect(
        lambda x: x * numpy.tanh(math.pi * x) - negative,
        numpy.zeros_like(coupling),
        negative + 2,
    )
    k2 = numpy.where(coupling > 0, xi**2, numpy.where(coupling < 0, -(chi**2), 0.0))
    return k2, numpy.where(coupling < 0, chi, numpy.where(coupling > 0, xi, 0.0))


def band_potential(
    q: float,
    params: ModelParams,
    l_max: int = 200,
    include_gamma: bool = True,
) -> BandPotential:
    """
    Evaluate the lowest-band potential at q.

    The correction term is half the squared norm of d phi_0/dq,
    summed over the excited bands l = 1..l_max.
    The series is rejected when its last term is not negligible.
    """
    ground = solve_xi(q, 0, params)
    harmonic = params.omega**2 * q**2 / 2
    if not include_gamma:
        return BandPotential(q=q, harmonic=harmonic, W0=ground.W)
    phi0, _ = v_boundary(band_eigenfunction(ground))
    coupling = params.alpha * q
    index = numpy.arange(1, l_max + 1, dtype=float)
    xi = _bisect(
        lambda x: x * numpy.sin(math.pi * x) - coupling * numpy.cos(math.pi * x),
        index - 0.5,
        index + 0.5,
    )
    _, phi, _ = boundary_from_k2(xi**2)
    gamma = params.alpha * phi * phi0 / (ground.W - xi**2 / 2)
    terms = gamma**2 / 2
    total = float(numpy.sum(terms))
    scale = abs(harmonic) + abs(ground.W) + total
    if terms[-1] > SERIES_TOLERANCE * max(scale, 1e-300):
        raise SeriesNotConverged(
            f"Last of {l_max} terms is {terms[-1]:.3g} at q={q}",
        )
    tail = 2 * params.alpha**2 * phi0**2 / (3 * math.pi * l_max**3)
    return BandPotential(
        q=q,
        harmonic=harmonic,
        W0=ground.W,
        gamma_term=total,
        tail_bound=tail,
    )


def _profile_derivative(
    point: BandPoint,
    y: FloatArray,
) -> Tuple[FloatArray, FloatArray]:
    """Get an unnormalized ground profile and its W derivative, y = |x| - pi."""
    distance = y + math.pi
    if point.xi < 1e-6:
        return numpy.ones_like(y), -(y**2)
    if not point.imaginary:
        return (
            numpy.cos(point.xi * y),
            -y * numpy.sin(point.xi * y) / point.xi,
        )
    chi = point.xi
    near = numpy.exp(-chi * distance)
    far = numpy.exp(-chi * (2 * math.pi - distance))
    denominator = 1 + math.exp(-2 * math.pi * chi)
    profile = (near + far) / denominator
    d_numerator = -distance * near - (2 * math.pi - distance) * far
    d_denominator = -2 * math.pi * math.exp(-2 * math.pi * chi)
    d_chi = (d_numerator * denominator - (near + far) * d_denominator) / (
        denominator**2
    )
    return profile, -d_chi / chi


def gamma_term_direct(
    q: float,
    params: ModelParams,
    panels: int = 16,
    order: int = 32,
) -> float:
    """
    Evaluate the correction term without summing over bands.

    It is (dW/dq)**2 / 2 times the squared norm of the W derivative of the
    normalized ground profile, integrated by Gauss-Legendre quadrature.
    """
    point = solve_xi(q, 0, params)
    nodes, weights = special.roots_legendre(order)
    edges = numpy.linspace(0.0, math.pi, panels + 1)
    half = numpy.diff(edges) / 2
    x = (edges[:-1, None] + half[:, None] * (nodes[None, :] + 1)).ravel()
    w = (half[:, None] * weights[None, :]).ravel()
    profile, derivative = _profile_derivative(point, x - math.pi)
    norm = float(numpy.sum(w * profile**2))
    d_norm = float(numpy.sum(w * derivative**2))
    cross = float(numpy.sum(w * profile * derivative))
    squared = (d_norm * norm - cross**2) / norm**2
    slope = dW_dq(q, 0, params)
    return slope**2 * squared / 2


def _curve_row(q: float, params: ModelParams, l_max: int) -> float:
    return band_potential(q, params, l_max=l_max).gamma_term


def band_potential_curve(
    q_grid: Sequence[float],
    params: ModelParams,
    with_gamma: bool = False,
    l_max: int = 200,
) -> FloatArray:
    """Tabulate columns q, harmonic, W0, gamma and V over a q grid."""
    q = numpy.asarray(q_grid, dtype=float)
    k2, _ = _ground_xi(params.alpha * q)
    harmonic = params.omega**2 * q**2 / 2
    gamma = numpy.zeros_like(q)
    if with_gamma:
        logging.info("Summing correction series at %d points...", len(q))
        with concurrent.futures.ThreadPoolExecutor(max_workers=max_workers()) as pool:
            gamma = numpy.array(
                list(pool.map(lambda value: _curve_row(value, params, l_max), q)),
            )
    return numpy.column_stack([q, harmonic, k2 / 2, gamma, harmonic + k2 / 2 + gamma])


def classify_band_potential(
    q_grid: Sequence[float],
    potential: Sequence[float],
    tolerance: float = 1e-3,
) -> Tuple[str, float]:
    """Classify the potential from V/q**2 at the most negative q."""
    q = numpy.asarray(q_grid, dtype=float)
    values = numpy.asarray(potential, dtype=float)
    index = int(numpy.argmin(q))
    if q[index] >= 0:
        raise ValueError("The q grid must reach negative values.")
    kappa = float(values[index] / q[index] ** 2)
    if abs(kappa) < tolerance:
        return MARGINAL, kappa
    return (BOUNDED_BELOW if kappa > 0 else INVERTED), kappa


def _band_function2(xi: FloatArray, q1: float, q2: float, alpha: float) -> FloatArray:
    """Evaluate F(xi)/xi, extended continuously to xi = 0."""
    xi = numpy.asarray(xi, dtype=float)
    product = alpha**2 * q1 * q2
    safe = numpy.where(xi > 0, xi, 1.0)
    sinc = numpy.where(xi > 0, numpy.sin(math.pi * xi) / safe, math.pi)
    return (
        xi * numpy.sin(math.pi * xi)
        - product * sinc
        - alpha * (q1 + q2) * numpy.cos(math.pi * xi)
    )


def _mu(chi: float, c: float, d: float, sign: float) -> float:
    """Evaluate one eigenvalue branch whose zeros are the imaginary roots."""
    decay = math.exp(-math.pi * chi)
    tail = -math.expm1(-2 * math.pi * chi)
    coth = (1 + decay**2) / tail
    ratio = 2 * chi * decay / tail
    return chi * coth + c + sign * math.sqrt(d**2 + ratio**2)


def _imaginary_roots2(q1: float, q2: float, alpha: float) -> List[float]:
    """Find chi for every imaginary root, largest first."""
    c = alpha * (q1 + q2) / 2
    d = alpha * (q1 - q2) / 2
    roots = []
    for sign, q in ((-1.0, min(q1, q2)), (1.0, max(q1, q2))):
        start = 1 / math.pi + c + sign * math.sqrt(d**2 + 1 / math.pi**2)
        if start >= 0 or _mu(1e-12, c, d, sign) >= 0:
            continue
        chi = _brentq(
            lambda x, s=sign: _mu(x, c, d, s),  # type: ignore[misc]
            1e-12,
            max(-alpha * q, 0.0) + 2,
        )
        roots.append(chi)
    return sorted(roots, reverse=True)


def _real_roots2(q1: float, q2: float, alpha: float, count: int) -> List[float]:
    """
    Find the lowest real roots by sampling F/xi and refining with brentq.

    Pairs of roots closer than the sampling step are not resolved.
    """
    high = float(count + 2)
    for _ in range(60):
        xi = numpy.arange(0.0, high + SAMPLING_STEP / 2, SAMPLING_STEP)
        values = _band_function2(xi, q1, q2, alpha)
        roots = [float(x) for x, value in zip(xi, values) if value == 0]
        changes = numpy.nonzero(values[:-1] * values[1:] < 0)[0]
        for index in changes:
            roots.append(
                _brentq(
                    lambda x: float(_band_function2(numpy.array(x), q1, q2, alpha)),
                    float(xi[index]),
                    float(xi[index + 1]),
                ),
            )
        if len(roots) >= count:
            return sorted(roots)[:count]
        high *= 2
    raise RootNotConverged(f"Fewer than {count} real roots at q=({q1}, {q2})")


def band_roots2(
    q1: float,
    q2: float,
    count: int,
    params: ModelParams,
) -> List[Tuple[float, bool]]:
    """List the lowest roots (xi or chi, imaginary) in order of increasing W."""
    alpha = params.alpha
    imaginary = _imaginary_roots2(q1, q2, alpha)
    roots = [(chi, True) for chi in imaginary[:count]]
    needed = count - len(roots)
    if needed > 0:
        real = _real_roots2(q1, q2, alpha, needed)
        for xi in real:
            scale = abs(xi**2 - alpha**2 * q1 * q2) + abs(alpha * xi * (q1 + q2))
            residual = abs(float(_band_function2(numpy.array(xi), q1, q2, alpha)))
            if xi > 0 and residual * xi > ROOT_TOLERANCE * max(scale, 1e-300):
                raise RootNotConverged(f"Residual {residual} at q=({q1}, {q2})")
        roots.extend((xi, False) for xi in real)
    return roots


def solve_xi2(q1: float, q2: float, n: int, params: ModelParams) -> BandPoint2:
    """Find the n-th band of two oscillators coupled at opposite points."""
    if n < 0:
        raise ValueError(f"n must be non-negative, not {n}.")
    xi, imaginary = band_roots2(q1, q2, n + 1, params)[n]
    band = -(xi**2) / 2 if imaginary else xi**2 / 2
    return BandPoint2(
        q1=q1,
        q2=q2,
        n=n,
        xi=xi,
        imaginary=imaginary,
        W=band,
        E=params.omega**2 * (q1**2 + q2**2) / 2 + band,
    )


def region_r(q1: FloatArray, q2: FloatArray) -> FloatArray:
    """Test q_- < -q_+ / (1 + pi q_+) elementwise."""
    upper = numpy.maximum(q1, q2)
    lower = numpy.minimum(q1, q2)
    with numpy.errstate(divide="ignore", invalid="ignore"):
        bound = numpy.where(
            1 + math.pi * upper == 0,
            numpy.inf,
            -upper / (1 + math.pi * upper),
        )
    return numpy.asarray(lower < bound)


def radial_energy(angle: float, radius: float, n: int, params: ModelParams) -> float:
    """Evaluate E_n at radius R along the direction (cos angle, sin angle)."""
    return solve_xi2(radius * math.cos(angle), radius * math.sin(angle), n, params).E


def band_surface(
    q1_grid: Sequence[float],
    q2_grid: Sequence[float],
    n: int,
    params: ModelParams,
) -> BandSurface2:
    """Tabulate E_n on a grid with rows indexed by q1."""
    q1 = numpy.asarray(q1_grid, dtype=float)
    q2 = numpy.asarray(q2_grid, dtype=float)

    def row(value: float) -> List[BandPoint2]:
        return [solve_xi2(value, other, n, params) for other in q2]

    logging.info("Solving band %d on a %dx%d grid...", n, len(q1), len(q2))
    with concurrent.futures.ThreadPoolExecutor(max_workers=max_workers()) as pool:
        rows = list(pool.map(row, q1))
    surface = BandSurface2(
        n=n,
        q1=q1,
        q2=q2,
        energy=numpy.array([[point.E for point in points] for points in rows]),
        xi=numpy.array([[point.xi for point in points] for points in rows]),
        imaginary=numpy.array(
            [[point.imaginary for point in points] for points in rows],
        ),
        region_r=region_r(q1[:, None], q2[None, :]),
    )
    surface.classification = classify_surface(surface)
    return surface


def classify_surface(surface: BandSurface2) -> str:
    """
    Classify a surface by where its minimum sits.

    An interior minimum means bounded below.
    A boundary minimum with both negative half axes lower than the diagonal
    corner means two valleys separated by a crest.
    """
    energy = surface.energy
    i, j = numpy.unravel_index(int(numpy.argmin(energy)), energy.shape)
    if 0 < i < energy.shape[0] - 1 and 0 < j < energy.shape[1] - 1:
        return BOUNDED_BELOW
    first = int(numpy.argmin(surface.q1))
    second = int(numpy.argmin(surface.q2))
    zero1 = int(numpy.argmin(numpy.abs(surface.q1)))
    zero2 = int(numpy.argmin(numpy.abs(surface.q2)))
    corner = energy[first, second]
    if energy[first, zero2] < corner and energy[zero1, second] < corner:
        return VALLEYS_AND_CREST
    return UNBOUNDED


def crest_half_width(params: ModelParams, radius: float = 1e3) -> float:
    """
    Measure the angular half width of the crest along the negative diagonal.

    The ground energy is positive on the crest and negative in the valleys.
    """

    def energy(offset: float) -> float:
        return radial_energy(5 * math.pi / 4 + offset, radius, 0, params)

    low, high = energy(0.0), energy(math.pi / 4)
    if not low > 0 > high:
        raise NotBracketed(
            f"No crest at alpha={params.alpha}, omega={params.omega}",
        )
    return float(optimize.brentq(energy, 0.0, math.pi / 4, xtol=1e-12))


def detect_band_transition(
    n: int,
    omega: float,
    alpha_range: Tuple[float, float],
    oscillators: int = 1,
    radius: float = 1e3,
    tolerance: float = 1e-4,
    angles: int = 360,
    iterations: int = 40,
) -> float:
    """
    Find the coupling at which band n stops being bounded below.

    A band diverges when E_n(R u)/R**2 < -tolerance for some direction u.
    The coupling is bisected inside alpha_range.
    """
    if oscillators == 1:
        directions = [0.0, math.pi]
    elif oscillators == 2:
        directions = list(2 * math.pi * numpy.arange(angles) / angles)
    else:
        raise ValueError(f"oscillators must be 1 or 2, not {oscillators}.")

    def lowest(alpha: float, angle: float) -> float:
        params = ModelParams(alpha=alpha, omega=omega)
        if oscillators == 1:
            q = radius * math.cos(angle)
            return omega**2 * q**2 / 2 + solve_xi(q, n, params).W
        return radial_energy(angle, radius, n, params)

    def diverges(alpha: float) -> bool:
        with concurrent.futures.ThreadPoolExecutor(max_workers=max_workers()) as pool:
            values = list(pool.map(lambda angle: lowest(alpha, angle), directions))
        return min(values) / radius**2 < -tolerance

    low, high = alpha_range
    if diverges(low) or not diverges(high):
        raise NotBracketed(f"Band {n} does not change on alpha in {alpha_range}")
    logging.info("Bisecting the transition of band %d...", n)
    for _ in range(iterations):
        middle = (low + high) / 2
        if diverges(middle):
            high = middle
        else:
            low = middle
    return (low + high) / 2


def subcritical_ground_energy(
    params: ModelParams,
    q_range: Tuple[float, float] = (-15.0, 15.0),
    points: int = 1501,
    with_gamma: bool = False,
) -> float:
    """Get the lowest eigenvalue of -1/2 d^2/dq^2 + V(q) with Dirichlet walls."""
    q = numpy.linspace(q_range[0], q_range[1], points)
    step = q[1] - q[0]
    potential = band_potential_curve(q, params, with_gamma=with_gamma)[:, 4]
    diagonal = 1 / step**2 + potential
    off = numpy.full(points - 1, -1 / (2 * step**2))
    values = linalg.eigh_tridiagonal(
        diagonal,
        off,
        eigvals_only=True,
        select="i",
        select_range=(0, 0),
    )
    energy = float(values[0])
    if params.alpha < params.omega:
        bound = math.sqrt(params.omega**2 - params.alpha**2) / 2
        if energy < bound - 0.02:
            logging.warning("Ground energy %.6g is below %.6g.", energy, bound)
    return energy


def band_rows(points: Sequence[BandPoint]) -> List[Tuple[float, ...]]:
    """Flatten band points into CSV rows q, n, xi, imaginary, W, A."""
    return [
        (point.q, point.n, point.xi, float(point.imaginary), point.W, point.A)
        for point in points
    ]


def band_table(
    q_grid: Sequence[float],
    n_bands: int,
    params: ModelParams,
    dw_dq: bool = False,
) -> FloatArray:
    """Tabulate every band below n_bands over a q grid."""
    rows = []
    for q in q_grid:
        for n in range(n_bands):
            point = solve_xi(float(q), n, params)
            row = band_rows([point])[0]
            if dw_dq:
                row = row + (dW_dq(float(q), n, params),)
            rows.append(row)
    return numpy.array(rows)
