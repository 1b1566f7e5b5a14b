"""Tests for smilansky.spectral."""

import itertools
import math

import numpy
import pytest

from smilansky import spectral
from smilansky.dynamics import Grid
from smilansky.model import ModelParams

PARAMS = ModelParams(alpha=1.3, omega=1.0)
LAMBDA = 1 / (2 * math.sqrt(1.3**2 - 1))


@pytest.fixture(name="profile", scope="module")
def fixture_profile():
    """Sample the smooth bump on (1.8, 2.2)."""
    return spectral.bump_profile(PARAMS, (1.8, 2.2), order=32)


@pytest.fixture(name="table", scope="module")
def fixture_table(profile):
    """Tabulate eigenfunctions on the profile nodes."""
    return spectral.build_table(profile.nodes, PARAMS, n_max=200, x_panels=16)


def test_gauss_legendre_rule():
    """Composite rules integrate polynomials exactly."""
    rule = spectral.gauss_legendre_rule((0.0, 2.0), panels=2, order=4)
    assert len(rule.nodes) == 8
    assert rule.weights @ rule.nodes**5 == pytest.approx(64 / 6)
    with pytest.raises(ValueError):
        spectral.gauss_legendre_rule((1.0, 1.0))


def test_bump_profile(profile):
    """The bump is normalized and vanishes at its ends."""
    assert profile.norm() == pytest.approx(1)
    assert profile.support == (1.8, 2.2)
    assert abs(profile.evolved(3.0).norm() - 1) < 1e-12
    with pytest.raises(spectral.SupportViolation):
        spectral.bump_profile(PARAMS, (2.4, 2.6))


def test_telescoping_identity():
    """Quadrature sums of P_n equal the telescoped W form."""
    rng = numpy.random.default_rng(7)
    energies = numpy.sort(rng.uniform(1.7, 2.3, 6))
    table = spectral.build_table(energies, PARAMS, n_max=1001)
    for e1, e2 in itertools.combinations(energies, 2):
        for n_stop in (10, 1000):
            lhs, rhs, gap = spectral.telescoping_check(e1, e2, n_stop, table)
            assert gap <= 1e-8 * abs(lhs)
            assert rhs == pytest.approx(lhs, rel=1e-8)
    with pytest.raises(ValueError):
        spectral.telescoping_check(energies[0], energies[0], 10, table)


def test_overlap_pn_matches_accumulator(table):
    """Single overlaps add up to the accumulated partial sums."""
    e1, e2 = table.energies[3], table.energies[20]
    accumulator = spectral.accumulate_overlaps(e1, e2, 5, table)
    terms = [spectral.overlap_pn(n, e1, e2, table) for n in range(6)]
    numpy.testing.assert_allclose(
        numpy.cumsum(terms),
        accumulator.partial_sums,
        rtol=1e-10,
        atol=1e-14,
    )
    assert accumulator.w_values[0] == 0


def test_kernel_matrix(table):
    """The kernel is symmetric with the partial sums of C**2 on its diagonal."""
    kernel = spectral.kernel_matrix(table, 150)
    numpy.testing.assert_allclose(kernel, kernel.T, rtol=1e-12, atol=1e-15)
    numpy.testing.assert_allclose(
        numpy.diag(kernel),
        numpy.sum(table.C[:, :151] ** 2, axis=1),
    )
    with pytest.raises(ValueError):
        spectral.kernel_matrix(table, 200)


def test_isometric_normalization(profile):
    """The default isometric table is the amplitude table times sqrt(2 lambda)."""
    amplitude = spectral.build_table(
        profile.nodes[:4],
        PARAMS,
        n_max=50,
        normalization="amplitude",
    )
    isometric = spectral.build_table(profile.nodes[:4], PARAMS, n_max=50)
    numpy.testing.assert_allclose(isometric.C, amplitude.C * math.sqrt(2 * LAMBDA))
    assert isometric.scale() == 1
    assert amplitude.scale() == pytest.approx(2 * LAMBDA)
    with pytest.raises(ValueError):
        spectral.build_table(profile.nodes[:4], PARAMS, normalization="unit")


def test_delta_kernel_log_frequency():
    """The partial-sum kernel oscillates in ln N at lambda (E1 - E2)."""
    table = spectral.build_table([2.0, 3.2], PARAMS, n_max=100001)
    counts = numpy.unique(numpy.geomspace(1e3, 1e5, 80).astype(int))
    kernel = spectral.delta_kernel_profile(2.0, [3.2], counts, table)
    frequency, _, amplitude = spectral.fit_log_frequency(
        counts,
        kernel.kernel[:, 0],
        guess=LAMBDA * 1.2,
    )
    assert frequency == pytest.approx(LAMBDA * 1.2, rel=0.05)
    assert amplitude > 0
    assert kernel.bound_ratio < 1


def test_fit_log_frequency():
    """A clean log-periodic signal is fitted exactly."""
    counts = numpy.geomspace(1e3, 1e5, 60)
    values = 0.3 * numpy.sin(0.8 * numpy.log(counts) + 1.0)
    frequency, phase, amplitude = spectral.fit_log_frequency(counts, values, 0.75)
    assert frequency == pytest.approx(0.8, rel=1e-6)
    assert phase == pytest.approx(1.0, abs=1e-6)
    assert amplitude == pytest.approx(0.3, rel=1e-6)


def test_isometry_table(profile, table):
    """Partial norms are reported with their delta-scaled ratio."""
    rows = spectral.isometry_table(profile, table, [10, 100, 199])
    assert rows.shape == (3, 3)
    assert rows[:, 0].tolist() == [10, 100, 199]
    assert numpy.all(rows[:, 1] > 0)
    numpy.testing.assert_allclose(rows[:, 2], rows[:, 1] * table.scale())


def test_profile_must_match_table(profile):
    """A table on other energies is rejected."""
    table = spectral.build_table([1.9, 2.1], PARAMS, n_max=20)
    with pytest.raises(spectral.SupportViolation):
        spectral.isometry_table(profile, table, [10])


def test_synthesize(profile, table):
    """Synthesis fills every channel and flags an unconverged tail."""
    grid = Grid(points=128)
    state = spectral.synthesize(profile, table, grid, 12, tail_tolerance=math.inf)
    assert state.psi.shape == (12, 129)
    assert state.label == "spectral"
    assert state.norm() > 0
    with pytest.raises(spectral.TailNotConverged):
        spectral.synthesize(profile, table, grid, 12, tail_tolerance=1e-8)


def test_spectral_propagate(profile, table):
    """Propagation multiplies the profile by a phase."""
    grid = Grid(points=64)
    state = spectral.spectral_propagate(profile, 0.5, table, grid, 8, math.inf)
    assert state.time == 0.5
    with pytest.raises(spectral.PhaseUnderResolved):
        spectral.spectral_propagate(profile, 100.0, table, grid, 8, math.inf)


def test_autocorrelation(profile, table):
    """The Fourier side starts at the profile norm."""
    spectral_side, fourier = spectral.autocorrelation(profile, table, [0.0, 1.0])
    assert fourier[0] == pytest.approx(1)
    assert abs(fourier[1]) < 1
    assert spectral_side.shape == (2,)
    assert numpy.all(numpy.isfinite(spectral_side))


def test_energy_distribution(profile, table):
    """P(n, E) has one row per node and no negative entries."""
    values = spectral.energy_distribution(profile, table)
    assert values.shape == (32, 201)
    assert numpy.all(values >= 0)


def test_synthesized_norm_is_truncated_isometry(profile, table):
    """A synthesized state carries the partial norm of its retained channels."""
    state = spectral.synthesize(profile, table, Grid(points=512), 40, math.inf)
    rows = spectral.isometry_table(profile, table, [39])
    assert state.norm() == pytest.approx(rows[0, 1], rel=2e-2)


def test_isometry_shortfall(profile, table):
    """Partial norms grow with N and stay below the profile norm."""
    rows = spectral.isometry_table(profile, table, [20, 199])
    assert rows[0, 2] < rows[1, 2] < 1
    assert rows[1, 2] > 0.3


def test_tail_tolerance(profile, table):
    """The default tolerance bounds the share of the highest channel."""
    assert spectral.TAIL_TOLERANCE == 1e-2
    with pytest.raises(spectral.TailNotConverged):
        spectral.synthesize(profile, table, Grid(points=64), 3)


def test_origin_amplitude(profile, table):
    """The amplitude at x = 0 matches the synthesized channel."""
    grid = Grid(points=64)
    state = spectral.spectral_propagate(profile, 0.7, table, grid, 8, math.inf)
    value = spectral.origin_amplitude(profile, table, 5, 0.7)
    assert value == pytest.approx(state.psi[5, 0], rel=1e-8)
    boundary = spectral.spectral_boundary(profile, table, 5, 1.0)
    assert boundary(0.7) == pytest.approx(value, rel=1e-8)
    with pytest.raises(ValueError):
        spectral.spectral_boundary(profile, table, 201, 1.0)
    with pytest.raises(spectral.PhaseUnderResolved):
        spectral.spectral_boundary(profile, table, 5, 100.0)


def test_spectral_vs_grid(profile):
    """A driven grid run follows the spectral propagator."""
    table = spectral.build_table(profile.nodes, PARAMS, n_max=20)
    rows = spectral.spectral_vs_grid(profile, table, Grid(points=64), 6, 1e-3, [0.01])
    assert rows.shape == (1, 3)
    assert rows[0, 0] == 0.01
    assert rows[0, 2] < 1e-2
    with pytest.raises(ValueError):
        spectral.spectral_vs_grid(profile, table, Grid(points=64), 21, 1e-3, [0.01])


@pytest.mark.slow
def test_oracle_convergence():
    """The grid gap stays small and shrinks when dx and dt are halved."""
    profile = spectral.bump_profile(PARAMS, (1.8, 2.2), order=64)
    table = spectral.build_table(profile.nodes, PARAMS, n_max=20)
    rows = spectral.oracle_convergence(
        profile,
        table,
        Grid(points=256),
        8,
        2e-3,
        [1.0, 3.0, 5.0],
    )
    assert rows[:, 0].tolist() == [1.0, 3.0, 5.0]
    assert numpy.all(rows[:, 1] <= 5e-2)
    assert numpy.all(rows[:, 2] <= 5e-2)
    assert numpy.all(rows[:, 3] >= 2)
