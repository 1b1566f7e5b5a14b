"""Tests for smilansky.dynamics."""

import math

import numpy
import pytest

from smilansky import bands
from smilansky import dynamics
from smilansky.model import ModelParams

PARAMS = ModelParams(alpha=1.3, omega=1.0)


def flat_state(grid, n_channels, channel):
    """Put the normalized constant profile into one channel."""
    psi = numpy.zeros((n_channels, grid.points + 1), dtype=complex)
    psi[channel] = 1 / math.sqrt(2 * math.pi)
    return dynamics.ChannelState(grid=grid, psi=psi)


def test_grid():
    """The half grid integrates constants over the whole circle."""
    grid = dynamics.Grid(points=64)
    assert grid.x[0] == 0
    assert grid.x[-1] == pytest.approx(math.pi)
    assert numpy.sum(grid.weights) == pytest.approx(2 * math.pi)
    with pytest.raises(ValueError):
        dynamics.Grid(points=1)


def test_grid_from_nodes():
    """Uniform nodes through x = 0 that divide pi are accepted."""
    assert dynamics.grid_from_nodes(numpy.linspace(0, math.pi, 65)).points == 64
    full = -math.pi + math.pi / 32 * numpy.arange(64)
    assert dynamics.grid_from_nodes(full).points == 32
    with pytest.raises(dynamics.GridMisaligned):
        dynamics.grid_from_nodes(numpy.linspace(0.01, math.pi, 65))
    with pytest.raises(dynamics.GridMisaligned):
        dynamics.grid_from_nodes([0.0, 0.1, 0.3, 0.4])
    with pytest.raises(dynamics.GridMisaligned):
        dynamics.grid_from_nodes(numpy.arange(0, 3, 0.3))


def test_propagator_config():
    """Only positive steps and on-node couplings are accepted."""
    assert dynamics.PropagatorConfig(dt=1).dt == 1.0
    with pytest.raises(ValueError):
        dynamics.PropagatorConfig(dt=0)
    with pytest.raises(ValueError):
        dynamics.PropagatorConfig(dt=1e-3, delta_discretization="smeared")
    with pytest.raises(ValueError):
        dynamics.PropagatorConfig(dt=1e-3, stride=0)


def test_hamiltonian_action():
    """The action needs two channels and is self-adjoint in the weights."""
    grid = dynamics.Grid(points=32)
    with pytest.raises(ValueError):
        dynamics.build_hamiltonian_action(PARAMS, grid, 1)
    action = dynamics.build_hamiltonian_action(PARAMS, grid.x, 4)
    assert action.grid == grid
    assert action.size == 4 * 33
    stiffness = action.stiffness.toarray()
    numpy.testing.assert_allclose(stiffness, stiffness.T)
    state = flat_state(grid, 4, 2)
    assert action.energy(state) == pytest.approx(2.5)


def test_decoupled_phase():
    """A flat profile without coupling only picks up exp(-i E t)."""
    grid = dynamics.Grid(points=32)
    action = dynamics.build_hamiltonian_action(PARAMS, grid, 3, coupling=0.0)
    config = dynamics.PropagatorConfig(dt=1e-3, truncation_threshold=math.inf)
    state = flat_state(grid, 3, 1)
    initial = state.psi.copy()
    propagator = dynamics.Propagator(action, config)
    for _ in range(1000):
        state = propagator(state)
    assert state.time == pytest.approx(1.0)
    numpy.testing.assert_allclose(state.psi, initial * numpy.exp(-1.5j), atol=1e-4)
    exact = dynamics.exact_propagate(flat_state(grid, 3, 1), action, 1.0)
    numpy.testing.assert_allclose(exact.psi, initial * numpy.exp(-1.5j), atol=1e-10)


def test_norm_conservation():
    """Crank-Nicolson steps are unitary in the weighted norm."""
    grid = dynamics.Grid(points=64)
    action = dynamics.build_hamiltonian_action(PARAMS, grid, 8)
    config = dynamics.PropagatorConfig(dt=1e-3, truncation_threshold=math.inf)
    state = dynamics.product_state(grid, 8)
    assert state.norm() == pytest.approx(1)
    assert state.label == dynamics.AC_UNKNOWN
    energy = action.energy(state)
    for _ in range(100):
        state = dynamics.step(state, config, action)
    assert state.norm() == pytest.approx(1, abs=1e-10)
    assert action.energy(state) == pytest.approx(energy, rel=1e-8)


def test_exact_propagate_conserves():
    """The matrix exponential keeps the norm and the energy."""
    grid = dynamics.Grid(points=32)
    action = dynamics.build_hamiltonian_action(PARAMS, grid, 4)
    state = dynamics.product_state(grid, 4)
    evolved = dynamics.exact_propagate(state, action, 0.2)
    assert evolved.time == pytest.approx(0.2)
    assert evolved.norm() == pytest.approx(1, abs=1e-8)
    assert action.energy(evolved) == pytest.approx(action.energy(state), rel=1e-6)
    assert dynamics.distance(state, state) == 0
    assert dynamics.inner(state, state) == pytest.approx(1)


def test_truncation_leak():
    """Mass reaching the top channel stops the step."""
    grid = dynamics.Grid(points=32)
    action = dynamics.build_hamiltonian_action(PARAMS, grid, 2)
    config = dynamics.PropagatorConfig(dt=1e-2, truncation_threshold=1e-30)
    with pytest.raises(dynamics.TruncationLeak):
        dynamics.step(dynamics.product_state(grid, 2), config, action)


def test_product_state_observables():
    """A product state sits in one oscillator level with <q> = 0."""
    grid = dynamics.Grid(points=128)
    state = dynamics.product_state(grid, 6, width=0.3, channel=2)
    assert dynamics.oscillator_energy(state, 1.0) == pytest.approx(2.5)
    assert dynamics.q_mean(state, 1.0) == 0
    assert 0 < dynamics.tail_probability(state, 0.5) < 0.5
    assert dynamics.particle_density(state).shape == (129,)
    with pytest.raises(ValueError):
        dynamics.product_state(grid, 6, channel=6)


def test_reduced_coherence():
    """A flat profile is fully coherent and spread over the whole circle."""
    grid = dynamics.Grid(points=64)
    coherence, mass = dynamics.reduced_coherence(flat_state(grid, 3, 0))
    assert coherence == pytest.approx(1)
    assert mass > 0
    dictionary = dynamics.coherence_dictionary(grid)
    gram = (dictionary * grid.weights) @ dictionary.T
    numpy.testing.assert_allclose(gram, numpy.identity(10), atol=1e-12)


@pytest.mark.parametrize("n", [0, 1, 2])
def test_grid_bands(n):
    """The frozen-q grid bands approach the band equation roots."""
    grid = dynamics.Grid(points=512)
    energies, functions = dynamics.grid_bands(PARAMS, grid, 0.5, 3)
    assert energies[n] == pytest.approx(bands.solve_xi(0.5, n, PARAMS).W, rel=1e-2)
    assert functions[n] ** 2 @ grid.weights == pytest.approx(1)


def test_band_populations():
    """All grid bands together hold the whole norm."""
    grid = dynamics.Grid(points=64)
    state = dynamics.product_state(grid, 4)
    q_grid = numpy.linspace(-8.0, 8.0, 161)
    populations = dynamics.band_populations(state, PARAMS, q_grid, 65)
    assert numpy.all(populations >= 0)
    assert populations.sum() == pytest.approx(1, rel=1e-6)
    with pytest.raises(dynamics.QGridTooCoarse):
        dynamics.band_populations(state, PARAMS, numpy.linspace(-8, 8, 11), 2)
    with pytest.raises(dynamics.QGridTooCoarse):
        dynamics.band_populations(state, PARAMS, numpy.linspace(-3, 3, 61), 2)


def test_evolve_and_trace():
    """Samples are taken every stride steps and at the end."""
    grid = dynamics.Grid(points=32)
    action = dynamics.build_hamiltonian_action(PARAMS, grid, 4)
    config = dynamics.PropagatorConfig(
        dt=1e-3,
        stride=10,
        truncation_threshold=math.inf,
    )
    initial = dynamics.product_state(grid, 4)
    trace = dynamics.evolve_and_trace(initial, config, action, 0.05)
    columns = trace.columns()
    assert list(columns) == ["t", "norm", "energy", *dynamics.OBSERVABLES[:-1]]
    assert len(columns["t"]) == 6
    assert not trace.truncated
    assert trace.occupation_average.sum() == pytest.approx(1, rel=1e-8)
    assert trace.e_osc_average > 0.5
    with pytest.raises(ValueError):
        dynamics.evolve_and_trace(initial, config, action, 0.01, ["spin"])
    with pytest.raises(ValueError):
        dynamics.evolve_and_trace(
            initial,
            config,
            action,
            0.01,
            ["band_pops"],
        )


def test_evolve_and_trace_truncates():
    """A leak into the top channel ends the run early."""
    grid = dynamics.Grid(points=32)
    action = dynamics.build_hamiltonian_action(PARAMS, grid, 2)
    config = dynamics.PropagatorConfig(dt=1e-3, truncation_threshold=1e-30)
    initial = dynamics.product_state(grid, 2)
    trace = dynamics.evolve_and_trace(initial, config, action, 0.01)
    assert trace.truncated
    assert trace.leak_time == pytest.approx(1e-3)
    assert len(trace.times) == 1


def test_growth_rate():
    """The rate of a clean exponential is recovered."""
    times = numpy.linspace(0, 5, 51)
    assert dynamics.growth_rate(times, numpy.exp(0.7 * times)) == pytest.approx(0.7)
    with pytest.raises(ValueError):
        dynamics.growth_rate(times, numpy.exp(times), t_min=10.0)


def test_coherent_state():
    """Coherent states are normalized on the grid."""
    q_grid = numpy.linspace(-10, 10, 401)
    values = dynamics.coherent_state(q_grid, -2.0, 1.0)
    assert numpy.sum(numpy.abs(values) ** 2) * 0.05 == pytest.approx(1)


def test_band_reduced_harmonic():
    """In a harmonic well the mean position oscillates as q0 cos(t)."""
    q_grid = numpy.linspace(-15.0, 15.0, 1201)
    initial = dynamics.coherent_state(q_grid, -2.0)
    trace = dynamics.band_reduced_evolve(
        initial,
        q_grid,
        q_grid**2 / 2,
        dt=1e-3,
        t_end=math.pi,
        stride=100,
    )
    columns = trace.columns()
    assert columns["norm"][-1] == pytest.approx(1, abs=1e-10)
    assert columns["q_mean"][-1] == pytest.approx(2.0, abs=1e-2)
    numpy.testing.assert_allclose(columns["energy"], columns["energy"][0], rtol=1e-8)
    assert trace.final.time == pytest.approx(math.pi, abs=1e-3)
    assert not trace.sponge


def test_band_reduced_inverted():
    """An inverted band potential makes <q**2> grow at 2 sqrt(-2 kappa)."""
    kappa = -0.345
    q_grid = numpy.linspace(-80.0, 80.0, 4001)
    trace = dynamics.band_reduced_evolve(
        dynamics.coherent_state(q_grid, 0.0),
        q_grid,
        kappa * q_grid**2,
        dt=1e-3,
        t_end=3.5,
        stride=50,
    )
    columns = trace.columns()
    rate = dynamics.growth_rate(columns["t"], columns["q2_mean"], t_min=2.0)
    assert rate == pytest.approx(2 * math.sqrt(-2 * kappa), rel=0.05)


def test_band_reduced_leak():
    """Mass reaching the edge is an error unless a sponge absorbs it."""
    q_grid = numpy.linspace(-5.0, 5.0, 201)
    initial = dynamics.coherent_state(q_grid, 0.0)
    with pytest.raises(dynamics.BoundaryLeak):
        dynamics.band_reduced_evolve(initial, q_grid, -(q_grid**2), 1e-2, 3.0)
    trace = dynamics.band_reduced_evolve(
        initial,
        q_grid,
        -(q_grid**2),
        1e-2,
        3.0,
        sponge=True,
    )
    assert trace.sponge
    assert trace.norm[-1] < trace.norm[0]
    with pytest.raises(ValueError):
        dynamics.band_reduced_evolve(initial, q_grid, q_grid, 0.0, 1.0)
    with pytest.raises(ValueError):
        dynamics.band_reduced_evolve(initial[:-1], q_grid, q_grid, 1e-2, 1.0)


def test_drive():
    """The boundary source sits at x = 0 of the top channel."""
    grid = dynamics.Grid(points=16)
    action = dynamics.build_hamiltonian_action(PARAMS, grid, 3)
    source = action.drive(2.0)
    index = 2 * 17
    assert numpy.flatnonzero(source).tolist() == [index]
    assert source[index] == pytest.approx(2.0 * 1.3 * math.sqrt(3 / 2))


def test_zero_boundary_is_undriven():
    """A vanishing boundary value leaves the step unchanged."""
    grid = dynamics.Grid(points=32)
    action = dynamics.build_hamiltonian_action(PARAMS, grid, 4)
    config = dynamics.PropagatorConfig(dt=1e-2, truncation_threshold=math.inf)
    state = dynamics.product_state(grid, 4)
    free = dynamics.Propagator(action, config)(state)
    driven = dynamics.Propagator(action, config, lambda time: 0.0)(state)
    numpy.testing.assert_allclose(driven.psi, free.psi, rtol=0, atol=1e-15)
    pushed = dynamics.Propagator(action, config, lambda time: 1.0)(state)
    assert dynamics.distance(pushed, free) > 0


def test_band_state():
    """A lifted ground band packet populates the ground band only."""
    grid = dynamics.Grid(points=64)
    q_grid = numpy.linspace(-12.0, 12.0, 481)
    amplitudes = dynamics.coherent_state(q_grid, -2.0)
    state = dynamics.band_state(PARAMS, grid, 40, q_grid, amplitudes)
    assert state.label == "ground band"
    assert state.norm() == pytest.approx(1, rel=1e-3)
    assert dynamics.q_mean(state, 1.0) == pytest.approx(-2.0, abs=1e-2)
    populations = dynamics.band_populations(state, PARAMS, q_grid, 4)
    assert populations[0] > 0.99
    assert populations[1:].sum() < 1e-2
    with pytest.raises(dynamics.QGridTooCoarse):
        dynamics.band_state(PARAMS, grid, 40, q_grid[::8], amplitudes[::8])
    with pytest.raises(ValueError):
        dynamics.band_state(PARAMS, grid, 40, q_grid, amplitudes[:-1])


def test_band_reduced_harmonic_mean():
    """The harmonic benchmark tracks q0 cos(t) over a full period."""
    q_grid = numpy.linspace(-10.0, 10.0, 8001)
    trace = dynamics.band_reduced_evolve(
        dynamics.coherent_state(q_grid, -2.0),
        q_grid,
        q_grid**2 / 2,
        dt=1e-3,
        t_end=2 * math.pi,
        stride=100,
    )
    columns = trace.columns()
    numpy.testing.assert_allclose(
        columns["q_mean"],
        -2.0 * numpy.cos(columns["t"]),
        rtol=0,
        atol=1e-4,
    )


def test_norm_drift_over_many_steps():
    """Ten thousand steps keep the norm to rounding."""
    grid = dynamics.Grid(points=32)
    action = dynamics.build_hamiltonian_action(PARAMS, grid, 4)
    config = dynamics.PropagatorConfig(dt=1e-3, truncation_threshold=math.inf)
    propagator = dynamics.Propagator(action, config)
    state = dynamics.product_state(grid, 4)
    norms = [state.norm()]
    for _ in range(10000):
        state = propagator(state)
        norms.append(state.norm())
    assert numpy.max(numpy.abs(numpy.diff(norms))) < 1e-10
    assert norms[-1] == pytest.approx(norms[0], abs=1e-8)


@pytest.mark.slow
def test_overcritical_escape():
    """A ground band packet escapes with E_osc growing at 2 sqrt(alpha**2 - 1)."""
    grid = dynamics.Grid(points=256)
    n_channels = 400
    q_grid = numpy.linspace(-32.0, 32.0, 3841)
    state = dynamics.band_state(
        PARAMS,
        grid,
        n_channels,
        q_grid,
        dynamics.coherent_state(q_grid, -3.0),
    )
    action = dynamics.build_hamiltonian_action(PARAMS, grid, n_channels)
    config = dynamics.PropagatorConfig(
        dt=5e-3,
        stride=10,
        truncation_threshold=math.inf,
    )
    trace = dynamics.evolve_and_trace(
        state,
        config,
        action,
        2.0,
        observables=("e_osc", "tail_prob", "coherence"),
    )
    rate = dynamics.growth_rate(trace.times, trace.e_osc, t_min=1.0)
    assert rate == pytest.approx(2 * math.sqrt(1.3**2 - 1), rel=0.15)
    assert trace.tail_prob[-1] < trace.tail_prob[0] / 2
    assert trace.coherence[-1] < trace.coherence[0] / 2
    assert trace.norm[-1] == pytest.approx(trace.norm[0], rel=1e-6)


@pytest.mark.slow
def test_subcritical_bounded():
    """Below the critical coupling the oscillator energy stays bounded."""
    params = ModelParams(alpha=0.8, omega=1.0)
    grid = dynamics.Grid(points=64)
    action = dynamics.build_hamiltonian_action(params, grid, 40)
    config = dynamics.PropagatorConfig(
        dt=0.05,
        stride=20,
        truncation_threshold=math.inf,
    )
    trace = dynamics.evolve_and_trace(
        dynamics.product_state(grid, 40),
        config,
        action,
        50.0,
        observables=("e_osc",),
    )
    assert len(trace.times) == 51
    assert max(trace.e_osc) < 20
