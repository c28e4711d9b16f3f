"""Experiment configuration files.

A config is a TOML file with four optional tables; every key is optional and
unknown keys are rejected::

    [source]
    image = "scene.ppm"          # PGM or PPM; omit for the synthetic scene
    mask = "mask.pgm"            # PGM, pixel value = segment id
    profile = "weights.txt"      # key = value profile file
    segment_weights = [0.4975, 0.4975, 0.005]
    bit_weights = [1, 4, 16, 64, 256, 1024, 4096, 16384]
    synthetic_height = 64
    synthetic_width = 64

    [link]
    coding_rate = 0.5
    modulation_order = 16
    alpha = 0.5123
    beta = -0.2862
    noise_var = 1.0

    [codec]
    constraint_length = 7
    generators = ["133", "171"]  # octal strings (or 0o133 literals)
    decision = "hard"            # or "soft"

    [sim]
    channel = "rayleigh"         # or "awgn"
    phy = "analytic"             # or "full"
    snr_db = [0, 2, 4, 6, 8, 10, 12, 14, 16]
    realizations = 100
    strategies = ["proposed", "ma", "equal"]
    seed = 0
    interleaver = true
    tolerance = 1e-6

Relative paths are resolved against the config file's directory. Overrides
use dotted keys, e.g. ``sim.realizations=10``; values are TOML literals, and
a bare word is taken as a string.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any, Callable, Sequence

try:
    import tomllib as tomli
except ModuleNotFoundError:  # Python < 3.11
    import tomli

from .links import BepParams, LinkConfig
from .phy.conv import CodecConfig
from .sim import ExperimentConfig

__all__ = ["ConfigError", "SCHEMA", "load_config", "build_config", "parse_override"]


class ConfigError(ValueError):
    pass


def _num(v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise TypeError("expected a number")
    return float(v)


def _int(v):
    if isinstance(v, bool) or not isinstance(v, int):
        raise TypeError("expected an integer")
    return v


def _bool(v):
    if not isinstance(v, bool):
        raise TypeError("expected true or false")
    return v


def _str(v):
    if not isinstance(v, str):
        raise TypeError("expected a string")
    return v


def _list(item: Callable) -> Callable:
    def check(v):
        if not isinstance(v, list):
            v = [v]
        return tuple(item(x) for x in v)

    return check


def _octal(v):
    if isinstance(v, str):
        return int(v, 8)
    return _int(v)


SCHEMA: dict[str, Callable[[Any], Any]] = {
    "source.image": _str,
    "source.mask": _str,
    "source.profile": _str,
    "source.segment_weights": _list(_num),
    "source.bit_weights": _list(_num),
    "source.synthetic_height": _int,
    "source.synthetic_width": _int,
    "link.coding_rate": _num,
    "link.modulation_order": _int,
    "link.alpha": _num,
    "link.beta": _num,
    "link.noise_var": _num,
    "codec.constraint_length": _int,
    "codec.generators": _list(_octal),
    "codec.decision": _str,
    "sim.channel": _str,
    "sim.phy": _str,
    "sim.snr_db": _list(_num),
    "sim.realizations": _int,
    "sim.strategies": _list(_str),
    "sim.seed": _int,
    "sim.interleaver": _bool,
    "sim.tolerance": _num,
}

_PATH_KEYS = ("source.image", "source.mask", "source.profile")


def _flatten(doc: dict, prefix: str = "") -> dict[str, Any]:
    flat = {}
    for k, v in doc.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            flat.update(_flatten(v, key + "."))
        else:
            flat[key] = v
    return flat


def parse_override(text: str) -> tuple[str, Any]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not key=value")
    key, raw = (part.strip() for part in text.split("=", 1))
    try:
        value = tomli.loads(f"v = {raw}")["v"]
    except tomli.TOMLDecodeError:
        value = raw
    return key, value


def _checked(flat: dict[str, Any], origin: str) -> dict[str, Any]:
    out = {}
    for key, value in flat.items():
        if key not in SCHEMA:
            raise ConfigError(f"{origin}: unknown key {key!r}")
        try:
            out[key] = SCHEMA[key](value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{origin}: {key}: {exc} (got {value!r})") from None
    return out


def build_config(values: dict[str, Any]) -> ExperimentConfig:
    """Build an :class:`ExperimentConfig` from checked dotted-key values."""
    v = dict(values)
    link_defaults = LinkConfig()
    kwargs: dict[str, Any] = {}
    try:
        bep = BepParams(v.get("link.alpha", link_defaults.bep.alpha), v.get("link.beta", link_defaults.bep.beta))
        kwargs["link"] = LinkConfig(
            v.get("link.coding_rate", link_defaults.coding_rate),
            v.get("link.modulation_order", link_defaults.modulation_order),
            bep,
        )
        codec_defaults = CodecConfig()
        kwargs["codec"] = CodecConfig(
            v.get("codec.constraint_length", codec_defaults.constraint_length),
            v.get("codec.generators", codec_defaults.generators),
            v.get("codec.decision", codec_defaults.decision),
        )
        for key, attr in [
            ("source.image", "image"),
            ("source.mask", "mask"),
            ("source.profile", "profile"),
            ("source.segment_weights", "segment_weights"),
            ("source.bit_weights", "bit_weights"),
            ("source.synthetic_height", "synthetic_height"),
            ("source.synthetic_width", "synthetic_width"),
            ("link.noise_var", "noise_var"),
            ("sim.channel", "channel"),
            ("sim.phy", "phy"),
            ("sim.snr_db", "snr_db"),
            ("sim.realizations", "realizations"),
            ("sim.strategies", "strategies"),
            ("sim.seed", "seed"),
            ("sim.interleaver", "interleaver"),
            ("sim.tolerance", "tolerance"),
        ]:
            if key in v:
                kwargs[attr] = v[key]
        return ExperimentConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path=None, overrides: Sequence[str] = ()) -> ExperimentConfig:
    values: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        try:
            doc = tomli.loads(path.read_text())
        except OSError as exc:
            raise ConfigError(f"{path}: {exc.strerror}") from None
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        values = _checked(_flatten(doc), str(path))
        for key in _PATH_KEYS:
            if key in values and not Path(values[key]).is_absolute():
                values[key] = str(path.parent / values[key])
    for text in overrides:
        key, value = parse_override(text)
        values.update(_checked({key: value}, "--set"))
    return build_config(values)
