"""INI-style run configuration.

Four sections map one-to-one onto the model dataclasses::

    [geometry]   -> DeviceSpec
    [materials]  -> MaterialParams
    [bias]       -> BiasPoint
    [numerics]   -> Numerics

Keys are the dataclass field names. Unknown sections or keys raise
``ConfigError`` so a typo never silently falls back to a default.
"""

from __future__ import annotations

import configparser
import dataclasses
import typing
from dataclasses import dataclass, field, fields, replace

from .core import BiasPoint, DeviceSpec, MaterialParams, Numerics

SECTIONS = {
    "geometry": DeviceSpec,
    "materials": MaterialParams,
    "bias": BiasPoint,
    "numerics": Numerics,
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    geometry: DeviceSpec = field(default_factory=DeviceSpec)
    materials: MaterialParams = field(default_factory=MaterialParams)
    bias: BiasPoint = field(default_factory=BiasPoint)
    numerics: Numerics = field(default_factory=Numerics)

    def override(self, section: str, **values) -> "RunConfig":
        """Return a copy with non-None ``values`` applied to one section."""
        values = {k: v for k, v in values.items() if v is not None}
        if not values:
            return self
        cls = SECTIONS[section]
        _check_keys(section, cls, values)
        try:
            new = replace(getattr(self, section), **values)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{section}] {exc}") from exc
        return replace(self, **{section: new})

    def as_dict(self) -> dict:
        return {name: dataclasses.asdict(getattr(self, name)) for name in SECTIONS}

    def to_ini(self) -> str:
        lines = []
        for name, sec in self.as_dict().items():
            lines.append(f"[{name}]")
            lines.extend(f"{k} = {'none' if v is None else v}" for k, v in sec.items())
            lines.append("")
        return "\n".join(lines)


def _check_keys(section, cls, keys):
    known = {f.name for f in fields(cls)}
    bad = sorted(set(keys) - known)
    if bad:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(bad)}")


def _convert(cls, name: str, text: str):
    hint = typing.get_type_hints(cls)[name]
    text = text.strip()
    args = typing.get_args(hint)
    optional = type(None) in args
    if optional and text.lower() in ("none", ""):
        return None
    base = next((a for a in args if a is not type(None)), hint) if args else hint
    if base is bool:
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {text!r}")
    try:
        return base(float(text)) if base is int and "e" in text.lower() else base(text)
    except ValueError as exc:
        raise ConfigError(f"{name}: cannot parse {text!r} as {base.__name__}") from exc


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    cfg = RunConfig()
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        cls = SECTIONS[section]
        raw = dict(parser.items(section))
        _check_keys(section, cls, raw)
        cfg = cfg.override(section, **{k: _convert(cls, k, v) for k, v in raw.items()})
    return cfg


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
