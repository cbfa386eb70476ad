"""Strict dataclass <-> dict conversion for JSON configs."""

from __future__ import annotations

import dataclasses
import typing

from .errors import ConfigError

FORMAT_VERSION = 1


def _dataclass_arg(tp):
    """The dataclass inside ``tp`` (directly, Optional[...] or list[...]), and whether it is a list."""
    if dataclasses.is_dataclass(tp):
        return tp, False
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin in (list, tuple) and args and dataclasses.is_dataclass(args[0]):
        return args[0], True
    if args and origin is not None:
        for a in args:
            if a is type(None):
                continue
            inner, many = _dataclass_arg(a)
            if inner is not None:
                return inner, many
    return None, False


def from_dict(cls, d: dict, where: str = ""):
    if not isinstance(d, dict):
        raise ConfigError(f"{where or cls.__name__}: expected an object, got {type(d).__name__}")
    hints = typing.get_type_hints(cls)
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(d) - set(fields)
    if unknown:
        raise ConfigError(f"{where or cls.__name__}: unknown field(s) {sorted(unknown)}")
    kwargs = {}
    for name, value in d.items():
        inner, many = _dataclass_arg(hints[name])
        path = f"{where}.{name}" if where else name
        if inner is not None and value is not None:
            if many:
                value = [v if isinstance(v, inner) else from_dict(inner, v, f"{path}[{i}]") for i, v in enumerate(value)]
            elif isinstance(value, dict):
                value = from_dict(inner, value, path)
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as e:
        raise ConfigError(f"{where or cls.__name__}: {e}") from None


def to_dict(obj) -> typing.Any:
    if dataclasses.is_dataclass(obj):
        return {f.name: to_dict(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [to_dict(v) for v in obj]
    if isinstance(obj, dict):
        return {k: to_dict(v) for k, v in obj.items()}
    return obj
