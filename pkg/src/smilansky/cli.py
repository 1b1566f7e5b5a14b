"""Command-line Interface"""

import argparse
import logging
import math
import os
import sys
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy

import smilansky
from smilansky import bands, channels, dynamics, recursion, spectral
from smilansky.config import (
    FORMATS,
    INITIAL_STATES,
    KEYS,
    ConfigInvalid,
    RunConfig,
    parse_q_grid,
    read_config_file,
    resolve,
)
from smilansky.model import Regime, SmilanskyError
from smilansky.output import write_csv, write_json, write_manifest

# Flag destination -> dotted key, shared by every command.
SHARED_FLAGS = {
    "alpha": "model.alpha",
    "omega": "model.omega",
    "e": "recursion.energies",
    "e_min": "spectral.e_min",
    "e_max": "spectral.e_max",
    "dt": "run.dt",
    "t_end": "run.t_end",
    "precision_bits": "recursion.precision_bits",
}

# Flag destination -> dotted key, for flags only some commands define.
COMMAND_FLAGS = {
    "gamma": "bands.gamma",
    "count": "bands.count",
    "band": "bands.band",
    "normalization": "spectral.normalization",
    "oracle": "spectral.oracle",
    "points": "evolve.points",
    "width": "evolve.width",
    "initial": "evolve.initial",
    "stride": "run.stride",
    "q0": "band_evolve.q0",
    "p0": "band_evolve.p0",
    "sponge": "band_evolve.sponge",
    "oscillators": "transition.oscillators",
    "alpha_min": "transition.alpha_min",
    "alpha_max": "transition.alpha_max",
}

N_MAX_KEYS = {
    "recursion": "recursion.n_max",
    "channels": "channels.n_max",
    "spectral-check": "spectral.n_max",
    "evolve": "evolve.n_channels",
}

Artifacts = List[str]


class ComputeFailed(SmilanskyError):
    """A command could not complete its computation."""


def _path(config: RunConfig, name: str) -> str:
    return os.path.join(config.out, name)


def _table(config: RunConfig, name: str, columns: Dict[str, Any]) -> str:
    """Write named columns in the configured format."""
    if config.fmt == "json":
        return write_json(
            _path(config, name + ".json"),
            {"columns": columns},
            config.config_hash,
        )
    return write_csv(
        _path(config, name + ".csv"),
        list(columns),
        numpy.column_stack([numpy.asarray(value) for value in columns.values()]),
        config.config_hash,
    )


def _summary(config: RunConfig, summary: Dict[str, Any]) -> str:
    return write_json(_path(config, "summary.json"), summary, config.config_hash)


def bands_handler(config: RunConfig, artifacts: Artifacts) -> None:
    """Tabulate single-oscillator bands and the lowest-band potential."""
    params = config.params
    q = parse_q_grid(config["grid.q"])
    table = bands.band_table(q, config["bands.count"], params, dw_dq=True)
    artifacts.append(
        _table(
            config,
            "bands",
            dict(zip(("q", "n", "xi", "imaginary", "W", "A", "dW_dq"), table.T)),
        ),
    )
    curve = bands.band_potential_curve(q, params, with_gamma=config["bands.gamma"])
    artifacts.append(
        _table(
            config,
            "band_potential",
            dict(zip(("q", "harmonic", "W0", "gamma", "V"), curve.T)),
        ),
    )
    summary: Dict[str, Any] = {"regime": params.regime.value}
    if q.min() < 0:
        label, kappa = bands.classify_band_potential(curve[:, 0], curve[:, 4])
        summary.update(classification=label, kappa=kappa)
    if params.regime is Regime.SUBCRITICAL:
        summary["ground_energy"] = bands.subcritical_ground_energy(
            params,
            with_gamma=config["bands.gamma"],
        )
        summary["ground_energy_bound"] = (
            math.sqrt(params.omega**2 - params.alpha**2) / 2
        )
    artifacts.append(_summary(config, summary))


def bands2d_handler(config: RunConfig, artifacts: Artifacts) -> None:
    """Tabulate a band of two oscillators on a square grid."""
    params = config.params
    q = parse_q_grid(config["grid.q2"])
    surface = bands.band_surface(q, q, config["bands.band"], params)
    document: Dict[str, Any] = {
        "band": surface.n,
        "q1": surface.q1,
        "q2": surface.q2,
        "energy": surface.energy,
        "xi": surface.xi,
        "imaginary": surface.imaginary,
        "region_r": surface.region_r,
        "classification": surface.classification,
    }
    if surface.n == 0 and params.omega < params.alpha < math.sqrt(2) * params.omega:
        document["crest_half_width"] = bands.crest_half_width(params)
    if config.fmt == "json":
        artifacts.append(
            write_json(_path(config, "surface.json"), document, config.config_hash),
        )
        return
    grid1, grid2 = numpy.meshgrid(surface.q1, surface.q2, indexing="ij")
    columns = {
        "q1": grid1.ravel(),
        "q2": grid2.ravel(),
        "E": surface.energy.ravel(),
        "xi": surface.xi.ravel(),
        "imaginary": surface.imaginary.ravel().astype(float),
        "region_r": surface.region_r.ravel().astype(float),
    }
    artifacts.append(_table(config, "surface", columns))
    summary = {
        key: document[key]
        for key in ("band", "classification", "crest_half_width")
        if key in document
    }
    artifacts.append(_summary(config, summary))


def recursion_handler(config: RunConfig, artifacts: Artifacts) -> None:
    """Solve the channel recursion and fit its large-n form."""
    params = config.params
    rows = []
    coefficients = {}
    for energy in config["recursion.energies"]:
        solution = recursion.solve_recursion(
            energy,
            config["recursion.n_max"],
            params,
            config["recursion.precision_bits"],
        )
        fit = recursion.fit_asymptotics(solution)
        normalized = recursion.normalize(solution, fit)
        slope, _ = recursion.partial_sum_growth(normalized)
        data = recursion.characteristic_data(energy, params)
        rows.append(
            (
                energy,
                fit.theta_fit,
                data.theta,
                fit.lambda_fit,
                data.lam,
                fit.zeta_fit,
                fit.amplitude_fit,
                fit.residual_rms,
                fit.chirality,
                fit.c0,
                slope,
            ),
        )
        coefficients[f"C_{energy:g}"] = normalized.C
    names = (
        "E",
        "theta_fit",
        "theta",
        "lambda_fit",
        "lambda",
        "zeta_fit",
        "amplitude_fit",
        "residual_rms",
        "chirality",
        "c0",
        "partial_sum_slope",
    )
    artifacts.append(_table(config, "fits", dict(zip(names, numpy.array(rows).T))))
    columns = {"n": numpy.arange(config["recursion.n_max"] + 1)}
    columns.update(coefficients)
    artifacts.append(_table(config, "coefficients", columns))


def channels_handler(config: RunConfig, artifacts: Artifacts) -> None:
    """Dump the channel functions at one energy."""
    energy = config["recursion.energies"][0]
    rows = []
    for n in range(config["channels.n_max"] + 1):
        channel = channels.mode(n, energy, config.params)
        v0, dv0 = channels.v_boundary(channel)
        oscillatory = float(channel.kind is channels.Kind.OSCILLATORY)
        rows.append((n, energy, oscillatory, channel.k_or_chi, channel.rho, v0, dv0))
    names = ("n", "E", "oscillatory", "k_or_chi", "rho", "v0", "dv0")
    artifacts.append(_table(config, "channels", dict(zip(names, numpy.array(rows).T))))


def spectral_check_handler(config: RunConfig, artifacts: Artifacts) -> None:
    """Check the overlap identities and the spectral propagator."""
    params = config.params
    support = (config["spectral.e_min"], config["spectral.e_max"])
    profile = spectral.bump_profile(params, support)
    n_max = config["spectral.n_max"]
    table = spectral.build_table(
        profile.nodes,
        params,
        n_max=n_max,
        normalization=config["spectral.normalization"],
    )
    energies = profile.nodes
    pairs = [(energies[0], energy) for energy in energies[1 : min(len(energies), 11)]]
    telescoping = numpy.array(
        [
            (e1, e2, *spectral.telescoping_check(e1, e2, n_max - 1, table))
            for e1, e2 in pairs
        ],
    )
    artifacts.append(
        _table(
            config,
            "telescoping",
            dict(zip(("E1", "E2", "sum", "wronskian", "gap"), telescoping.T)),
        ),
    )
    n_values = numpy.unique(numpy.geomspace(10, n_max - 1, 12).astype(int))
    isometry = spectral.isometry_table(profile, table, n_values)
    artifacts.append(
        _table(config, "isometry", dict(zip(("N", "norm", "ratio"), isometry.T))),
    )
    times = numpy.linspace(0.0, config["run.t_end"], 11)
    computed, expected = spectral.autocorrelation(profile, table, times)
    artifacts.append(
        _table(
            config,
            "autocorrelation",
            {
                "t": times,
                "spectral_re": computed.real,
                "spectral_im": computed.imag,
                "fourier_re": expected.real,
                "fourier_im": expected.imag,
            },
        ),
    )
    if config["spectral.oracle"]:
        rows = spectral.oracle_convergence(
            profile,
            table,
            dynamics.Grid(points=config["evolve.points"]),
            config["evolve.n_channels"],
            config["run.dt"],
            times[1:],
        )
        artifacts.append(
            _table(
                config,
                "oracle",
                dict(zip(("t", "relative", "refined", "ratio"), rows.T)),
            ),
        )


def _initial_state(
    config: RunConfig,
    grid: dynamics.Grid,
) -> Tuple[dynamics.ChannelState, Optional[Callable[[float], complex]]]:
    """Build the configured initial state and the boundary that drives it."""
    params = config.params
    n_channels = config["evolve.n_channels"]
    initial = config["evolve.initial"]
    if initial == "product":
        state = dynamics.product_state(grid, n_channels, width=config["evolve.width"])
        return state, None
    if initial == "band":
        q = parse_q_grid(config["grid.q"])
        amplitudes = dynamics.coherent_state(
            q,
            config["band_evolve.q0"],
            config["band_evolve.p0"],
            params.omega,
        )
        return dynamics.band_state(params, grid, n_channels, q, amplitudes), None
    support = (config["spectral.e_min"], config["spectral.e_max"])
    profile = spectral.bump_profile(params, support)
    table = spectral.build_table(
        profile.nodes,
        params,
        n_max=n_channels,
        normalization=config["spectral.normalization"],
    )
    state = spectral.synthesize(profile, table, grid, n_channels, math.inf)
    boundary = spectral.spectral_boundary(
        profile,
        table,
        n_channels,
        config["run.t_end"],
    )
    return state, boundary


def evolve_handler(config: RunConfig, artifacts: Artifacts) -> None:
    """Evolve a spectral, product or ground band state in the channel basis."""
    params = config.params
    grid = dynamics.Grid(points=config["evolve.points"])
    n_channels = config["evolve.n_channels"]
    action = dynamics.build_hamiltonian_action(params, grid, n_channels)
    state, boundary = _initial_state(config, grid)
    propagator = dynamics.PropagatorConfig(
        dt=config["run.dt"],
        stride=config["run.stride"],
        truncation_threshold=1e-6 if boundary is None else math.inf,
    )
    trace = dynamics.evolve_and_trace(
        state,
        propagator,
        action,
        config["run.t_end"],
        boundary=boundary,
    )
    artifacts.append(_table(config, "trace", trace.columns()))
    summary: Dict[str, Any] = {
        "initial": config["evolve.initial"],
        "label": trace.label,
        "driven": boundary is not None,
        "e_osc_average": trace.e_osc_average,
        "occupation_average": trace.occupation_average,
        "truncated": trace.truncated,
        "leak_time": trace.leak_time,
    }
    try:
        summary["e_osc_rate"] = dynamics.growth_rate(trace.times, trace.e_osc)
    except ValueError as exc:
        logging.info("No growth rate was fitted: %s", exc)
    artifacts.append(_summary(config, summary))


def band_evolve_handler(config: RunConfig, artifacts: Artifacts) -> None:
    """Evolve a coherent state on the lowest-band potential."""
    params = config.params
    q = parse_q_grid(config["grid.q"])
    curve = bands.band_potential_curve(q, params, with_gamma=config["bands.gamma"])
    initial = dynamics.coherent_state(
        q,
        config["band_evolve.q0"],
        config["band_evolve.p0"],
        params.omega,
    )
    trace = dynamics.band_reduced_evolve(
        initial,
        q,
        curve[:, 4],
        config["run.dt"],
        config["run.t_end"],
        sponge=config["band_evolve.sponge"],
        stride=config["run.stride"],
    )
    artifacts.append(_table(config, "band_trace", trace.columns()))
    summary: Dict[str, Any] = {"sponge": trace.sponge}
    if q.min() < 0:
        label, kappa = bands.classify_band_potential(q, curve[:, 4])
        summary.update(classification=label, kappa=kappa)
        if kappa < 0:
            summary["predicted_q2_rate"] = 2 * math.sqrt(-2 * kappa)
    try:
        summary["q2_rate"] = dynamics.growth_rate(
            trace.times,
            trace.q2_mean,
            t_min=config["run.t_end"] / 4,
        )
    except ValueError as exc:
        logging.info("No growth rate was fitted: %s", exc)
    artifacts.append(_summary(config, summary))


def transition_scan_handler(config: RunConfig, artifacts: Artifacts) -> None:
    """Bisect the coupling at which a band stops being bounded below."""
    band = config["bands.band"]
    oscillators = config["transition.oscillators"]
    summary: Dict[str, Any] = {"band": band, "oscillators": oscillators}
    try:
        summary["alpha_c"] = bands.detect_band_transition(
            band,
            config.params.omega,
            (config["transition.alpha_min"], config["transition.alpha_max"]),
            oscillators=oscillators,
        )
        summary["bracketed"] = True
    except bands.NotBracketed as exc:
        logging.warning("No transition was found: %s", exc)
        summary.update(alpha_c=None, bracketed=False)
    artifacts.append(_summary(config, summary))


HANDLERS: Dict[str, Callable[[RunConfig, Artifacts], None]] = {
    "bands": bands_handler,
    "bands2d": bands2d_handler,
    "recursion": recursion_handler,
    "channels": channels_handler,
    "spectral-check": spectral_check_handler,
    "evolve": evolve_handler,
    "band-evolve": band_evolve_handler,
    "transition-scan": transition_scan_handler,
}


def _compute(config: RunConfig, artifacts: Artifacts) -> None:
    try:
        HANDLERS[config.command](config, artifacts)
    except (SmilanskyError, ValueError, ArithmeticError) as exc:
        raise ComputeFailed(f"{config.command} failed: {exc}") from exc


def run(config: RunConfig) -> int:
    """Execute a command and record its manifest."""
    os.makedirs(config.out, exist_ok=True)
    artifacts: Artifacts = []
    status, error = 0, None
    logging.info("Running %s (config %s)...", config.command, config.config_hash)
    try:
        _compute(config, artifacts)
    except ComputeFailed as exc:
        logging.warning("%s failed: %s", config.command, exc.__cause__)
        print(f"{config.command} failed:", exc.__cause__, file=sys.stderr)
        status, error = 1, exc
    write_manifest(config, artifacts, status, error)
    return status


def _shared_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--alpha", type=float, help="Specify the coupling.")
    parser.add_argument("--omega", type=float, help="Specify the frequency.")
    parser.add_argument("--n-max", type=int, help="Specify the last channel.")
    parser.add_argument(
        "--e",
        type=float,
        action="append",
        help="Specify an energy (repeatable).",
    )
    parser.add_argument("--e-min", type=float, help="Specify the lowest energy.")
    parser.add_argument("--e-max", type=float, help="Specify the highest energy.")
    parser.add_argument("--q-grid", help="Specify a q grid as MIN:MAX:COUNT.")
    parser.add_argument("--dt", type=float, help="Specify the time step.")
    parser.add_argument("--t-end", type=float, help="Specify the final time.")
    parser.add_argument(
        "--precision-bits",
        type=int,
        help="Specify the working precision of the recursion.",
    )
    return parser


def _flag(parser: argparse.ArgumentParser, name: str, **kwargs: Any) -> None:
    if kwargs.get("action") == "store_true":
        kwargs.update(action="store_const", const=True)
    parser.add_argument(name, **kwargs)


def cli(parser: Optional[argparse.ArgumentParser] = None) -> argparse.ArgumentParser:
    """Parse CLI arguments and options."""
    if parser is None:
        parser = argparse.ArgumentParser(
            formatter_class=argparse.ArgumentDefaultsHelpFormatter,
        )

    parser.add_argument("--config", help="Specify a JSON file of dotted keys.")
    parser.add_argument(
        "--out",
        help="Specify the directory to write artifacts to.",
        default="smilansky-out",
    )
    parser.add_argument("--format", choices=FORMATS, default="csv")
    parser.add_argument(
        "--log-file",
        help="Specify the file to log to (standard error by default).",
        default=None,
    )
    parser.add_argument(
        "--log-level",
        help="Specify a log-level (DEBUG, INFO, WARNING, ERROR, CRITICAL).",
        default="INFO",
    )
    parser.add_argument("--version", action="version", version=smilansky.__version__)

    shared = _shared_parser()
    subparsers = parser.add_subparsers(dest="command")

    def add(name: str, handler: Callable[..., None]) -> argparse.ArgumentParser:
        subparser = subparsers.add_parser(
            name,
            help=handler.__doc__,
            parents=[shared],
            formatter_class=argparse.ArgumentDefaultsHelpFormatter,
        )
        subparser.set_defaults(func=handler)
        return subparser

    bands_parser = add("bands", bands_handler)
    _flag(bands_parser, "--q-min", type=float, help="Replace the q grid minimum.")
    _flag(bands_parser, "--q-max", type=float, help="Replace the q grid maximum.")
    _flag(bands_parser, "--count", type=int, help="Specify the number of bands.")
    _flag(bands_parser, "--gamma", action="store_true", help="Add the correction.")

    bands2d_parser = add("bands2d", bands2d_handler)
    _flag(bands2d_parser, "--band", type=int, help="Specify the band index.")

    add("recursion", recursion_handler)
    add("channels", channels_handler)

    spectral_parser = add("spectral-check", spectral_check_handler)
    _flag(spectral_parser, "--normalization", choices=spectral.NORMALIZATIONS)
    _flag(spectral_parser, "--oracle", action="store_true", help="Run the grid.")
    _flag(spectral_parser, "--points", type=int, help="Specify the x grid size.")

    evolve_parser = add("evolve", evolve_handler)
    _flag(evolve_parser, "--points", type=int, help="Specify the x grid size.")
    _flag(evolve_parser, "--width", type=float, help="Specify the packet width.")
    _flag(evolve_parser, "--stride", type=int, help="Sample every so many steps.")
    _flag(evolve_parser, "--initial", choices=INITIAL_STATES, help="Pick the start.")
    _flag(evolve_parser, "--q0", type=float, help="Center a ground band start.")

    band_evolve_parser = add("band-evolve", band_evolve_handler)
    _flag(band_evolve_parser, "--q0", type=float, help="Specify the initial q.")
    _flag(band_evolve_parser, "--p0", type=float, help="Specify the initial p.")
    _flag(band_evolve_parser, "--sponge", action="store_true", help="Absorb.")
    _flag(band_evolve_parser, "--gamma", action="store_true", help="Correct V.")
    _flag(band_evolve_parser, "--stride", type=int, help="Sample every so often.")

    scan_parser = add("transition-scan", transition_scan_handler)
    _flag(scan_parser, "--band", type=int, help="Specify the band index.")
    _flag(scan_parser, "--oscillators", type=int, choices=(1, 2))
    _flag(scan_parser, "--alpha-min", type=float, help="Specify the lower end.")
    _flag(scan_parser, "--alpha-max", type=float, help="Specify the upper end.")

    return parser


def flags_from_args(args: argparse.Namespace) -> Dict[str, Any]:
    """Map parsed flags onto dotted keys, skipping the ones not given."""
    command = getattr(args, "command", None)
    flags: Dict[str, Any] = {}
    for name, key in {**SHARED_FLAGS, **COMMAND_FLAGS}.items():
        value = getattr(args, name, None)
        if value is not None:
            flags[key] = value
    if getattr(args, "n_max", None) is not None and command in N_MAX_KEYS:
        flags[N_MAX_KEYS[command]] = args.n_max
    grid_key = "grid.q2" if command == "bands2d" else "grid.q"
    if getattr(args, "q_grid", None) is not None:
        flags[grid_key] = args.q_grid
    q_min, q_max = getattr(args, "q_min", None), getattr(args, "q_max", None)
    if q_min is not None or q_max is not None:
        low, high, count = flags.get(grid_key, KEYS[grid_key][1]).split(":")
        low = low if q_min is None else repr(q_min)
        high = high if q_max is None else repr(q_max)
        flags[grid_key] = ":".join((low, high, count))
    return flags


def config_from_args(args: argparse.Namespace) -> RunConfig:
    """Resolve a run configuration from flags and an optional file."""
    document = read_config_file(args.config) if args.config else None
    return resolve(
        getattr(args, "command", None),
        flags_from_args(args),
        document,
        out=args.out,
        fmt=args.format,
    )


def main(args: Optional[argparse.Namespace] = None) -> int:
    """Execute CLI commands."""
    if args is None:
        args = cli().parse_args()

    log_level = getattr(logging, args.log_level.upper(), None)
    if not isinstance(log_level, int):
        raise ValueError("Invalid log level: %s" % args.log_level)
    logging.basicConfig(
        filename=args.log_file,
        level=log_level,
        format="%(asctime)s [%(levelname)s] %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )

    try:
        config = config_from_args(args)
    except ConfigInvalid as exc:
        logging.warning("The configuration is invalid: %s", exc)
        print("Invalid configuration:", exc, file=sys.stderr)
        return 2
    return int(run(config) or 0)
