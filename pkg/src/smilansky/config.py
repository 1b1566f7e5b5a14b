"""Run Configuration"""

import hashlib
import json
import math
from typing import Any, Dict, Mapping, Optional, Tuple

import attr
import numpy

from smilansky.model import (
    FloatArray,
    ModelParams,
    SmilanskyError,
    check_energy,
)

COMMANDS = (
    "bands",
    "bands2d",
    "recursion",
    "channels",
    "spectral-check",
    "evolve",
    "band-evolve",
    "transition-scan",
)
FORMATS = ("csv", "json")
INITIAL_STATES = ("spectral", "product", "band")

# Dotted key -> (type, default). A default of None means the key is optional.
KEYS: Dict[str, Tuple[type, Any]] = {
    "model.alpha": (float, None),
    "model.omega": (float, 1.0),
    "grid.q": (str, "-10:2:601"),
    "grid.q2": (str, "-10:10:41"),
    "bands.count": (int, 4),
    "bands.band": (int, 0),
    "bands.gamma": (bool, False),
    "recursion.energies": (list, [1.7, 2.0, 2.3]),
    "recursion.n_max": (int, 20000),
    "recursion.precision_bits": (int, None),
    "channels.n_max": (int, 10),
    "spectral.e_min": (float, 1.8),
    "spectral.e_max": (float, 2.2),
    "spectral.n_max": (int, 2000),
    "spectral.normalization": (str, "isometric"),
    "spectral.oracle": (bool, False),
    "run.dt": (float, 1e-3),
    "run.t_end": (float, 1.0),
    "run.stride": (int, 10),
    "evolve.n_channels": (int, 8),
    "evolve.points": (int, 256),
    "evolve.width": (float, 0.5),
    "evolve.initial": (str, "spectral"),
    "band_evolve.q0": (float, -4.0),
    "band_evolve.p0": (float, 0.0),
    "band_evolve.sponge": (bool, False),
    "transition.oscillators": (int, 1),
    "transition.alpha_min": (float, 0.5),
    "transition.alpha_max": (float, 2.0),
}


class ConfigInvalid(SmilanskyError):
    """The run configuration is invalid."""


@attr.s(auto_attribs=True, kw_only=True, frozen=True)
class RunConfig:
    """Fully Resolved Settings of One Run"""

    command: str = attr.ib(validator=attr.validators.in_(COMMANDS))
    params: ModelParams
    settings: Dict[str, Any]
    out: str
    fmt: str = attr.ib(default="csv", validator=attr.validators.in_(FORMATS))

    def canonical(self) -> Dict[str, Any]:
        """Get the resolved configuration as plain JSON data."""
        return {
            "command": self.command,
            "format": self.fmt,
            "settings": dict(sorted(self.settings.items())),
        }

    @property
    def config_hash(self) -> str:
        """Get the SHA-256 of the canonical configuration."""
        text = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def __getitem__(self, key: str) -> Any:
        return self.settings[key]


def parse_q_grid(text: str) -> FloatArray:
    """Parse MIN:MAX:COUNT into evenly spaced points."""
    try:
        low, high, count = text.split(":")
        grid = numpy.linspace(float(low), float(high), int(count))
    except ValueError as exc:
        raise ConfigInvalid(f"Expected MIN:MAX:COUNT, not {text!r}") from exc
    if len(grid) < 2 or not grid[0] < grid[-1]:
        raise ConfigInvalid(f"The grid {text!r} needs MIN < MAX and COUNT >= 2.")
    return grid


def read_config_file(path: str) -> Dict[str, Any]:
    """Read a flat JSON object of dotted keys."""
    try:
        with open(path, encoding="utf-8") as config_file:
            document = json.load(config_file)
    except (OSError, ValueError) as exc:
        raise ConfigInvalid(f"{path} could not be read: {exc}") from exc
    if not isinstance(document, dict):
        raise ConfigInvalid(f"{path} must hold a JSON object.")
    return document


def _coerce(key: str, value: Any) -> Any:
    kind, _ = KEYS[key]
    if value is None:
        return None
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigInvalid(f"{key} must be true or false, not {value!r}")
        return value
    if kind is list:
        if not isinstance(value, (list, tuple)) or not value:
            raise ConfigInvalid(f"{key} must be a non-empty list, not {value!r}")
        return [_number(key, item) for item in value]
    if kind is str:
        if not isinstance(value, str):
            raise ConfigInvalid(f"{key} must be a string, not {value!r}")
        return value
    if kind is int:
        if not _number(key, value).is_integer():
            raise ConfigInvalid(f"{key} must be an integer, not {value!r}")
        return int(value)
    return _number(key, value)


def _number(key: str, value: Any) -> float:
    if isinstance(value, bool):
        raise ConfigInvalid(f"{key} must be a number, not {value!r}")
    try:
        number = float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(f"{key} must be a number, not {value!r}") from exc
    if not math.isfinite(number):
        raise ConfigInvalid(f"{key} must be finite, not {value!r}")
    return number


def _positive(settings: Mapping[str, Any], *keys: str) -> None:
    for key in keys:
        if not settings[key] > 0:
            raise ConfigInvalid(f"{key} must be positive, not {settings[key]}")


def _validate(command: str, params: ModelParams, settings: Dict[str, Any]) -> None:
    """Check module preconditions before anything is computed."""
    parse_q_grid(settings["grid.q"])
    if command == "bands2d":
        parse_q_grid(settings["grid.q2"])
    _positive(settings, "run.dt", "run.t_end", "run.stride", "evolve.points")
    if settings["bands.count"] < 1 or settings["bands.band"] < 0:
        raise ConfigInvalid("bands.count must be positive and bands.band >= 0.")
    if settings["evolve.n_channels"] < 2:
        raise ConfigInvalid("evolve.n_channels must be at least 2.")
    if settings["spectral.normalization"] not in ("amplitude", "isometric"):
        raise ConfigInvalid(
            f"Unknown normalization {settings['spectral.normalization']!r}",
        )
    if settings["transition.oscillators"] not in (1, 2):
        raise ConfigInvalid("transition.oscillators must be 1 or 2.")
    if not settings["transition.alpha_min"] < settings["transition.alpha_max"]:
        raise ConfigInvalid("transition.alpha_min must be below alpha_max.")
    bits = settings["recursion.precision_bits"]
    if bits is not None and bits < 53:
        raise ConfigInvalid(f"recursion.precision_bits must be >= 53, not {bits}")
    if settings["evolve.initial"] not in INITIAL_STATES:
        raise ConfigInvalid(f"Unknown initial state {settings['evolve.initial']!r}")
    spectral = command == "spectral-check" or (
        command == "evolve" and settings["evolve.initial"] == "spectral"
    )
    if (command == "recursion" or spectral) and not params.alpha > params.omega:
        raise ConfigInvalid(f"{command} needs alpha > omega, not {params}")
    if spectral and not settings["spectral.e_min"] < settings["spectral.e_max"]:
        raise ConfigInvalid("spectral.e_min must be below spectral.e_max.")
    if command == "recursion":
        _positive(settings, "recursion.n_max")
        for energy in settings["recursion.energies"]:
            try:
                check_energy(energy, params.omega)
            except SmilanskyError as exc:
                raise ConfigInvalid(str(exc)) from exc
    if command == "channels" and settings["channels.n_max"] < 0:
        raise ConfigInvalid("channels.n_max must be non-negative.")
    if command == "spectral-check":
        _positive(settings, "spectral.n_max")


def resolve(
    command: Optional[str],
    flags: Mapping[str, Any],
    document: Optional[Mapping[str, Any]] = None,
    out: str = "smilansky-out",
    fmt: str = "csv",
) -> RunConfig:
    """Merge file values, flags and defaults, then validate the result."""
    if command is None:
        raise ConfigInvalid("No command was given.")
    document = dict(document or {})
    unknown = sorted(set(document) - set(KEYS))
    if unknown:
        raise ConfigInvalid(f"Unknown configuration keys: {', '.join(unknown)}")
    settings: Dict[str, Any] = {}
    for key, (_, default) in KEYS.items():
        value = flags.get(key)
        if value is None:
            value = document.get(key, default)
        settings[key] = _coerce(key, value)
    if settings["model.alpha"] is None:
        raise ConfigInvalid("model.alpha (--alpha) is required.")
    try:
        params = ModelParams(
            alpha=settings["model.alpha"],
            omega=settings["model.omega"],
        )
        config = RunConfig(
            command=command,
            params=params,
            settings=settings,
            out=out,
            fmt=fmt,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(str(exc)) from exc
    _validate(command, params, settings)
    return config
