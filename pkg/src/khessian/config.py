"""YAML run configurations with line-anchored validation errors.

A configuration file is a mapping with the keys ``command`` (required),
``seed``, ``out``, ``tolerances`` and ``params``.  :func:`load_config`
parses it, keeps the source line of every key and wraps the result in
:class:`RunConfig`.  Command handlers read their parameters through
:class:`Section`, whose errors carry ``file:line: key.path`` anchors.
"""

from __future__ import annotations

import hashlib
import math
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np
import yaml

from .errors import DomainError, IntegrityError, PreconditionError

COMMANDS = ("symfunc", "cone", "fieldop", "measure", "estimate", "dirichlet", "suite")
REQUIRED = object()


class ConfigError(Exception):
    """A configuration value is missing, malformed or outside its domain."""

    def __init__(self, message: str, where: str | None = None):
        super().__init__(message)
        self.message = message
        self.where = where

    def __str__(self) -> str:
        return f"{self.where}: {self.message}" if self.where else self.message


def dotted(path) -> str:
    out = ""
    for part in path:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else str(part))
    return out


class Source:
    """Parsed YAML text plus the line number of every key and list item."""

    def __init__(self, name: str, text: str):
        self.name = name
        self.lines: dict = {}
        try:
            node = yaml.compose(text, Loader=yaml.SafeLoader)
            self.data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f"{name}:{mark.line + 1}" if mark is not None else name
            problem = getattr(exc, "problem", None) or str(exc)
            raise ConfigError(f"invalid YAML: {problem}", where) from None
        if node is not None:
            self._index(node, ())

    def _index(self, node, path):
        self.lines.setdefault(path, node.start_mark.line + 1)
        if isinstance(node, yaml.MappingNode):
            for key, value in node.value:
                child = path + (str(key.value),)
                self.lines[child] = key.start_mark.line + 1
                self._index(value, child)
        elif isinstance(node, yaml.SequenceNode):
            for i, value in enumerate(node.value):
                self._index(value, path + (i,))

    def line(self, path) -> int | None:
        path = tuple(path)
        while path not in self.lines and path:
            path = path[:-1]
        return self.lines.get(path)

    def where(self, path) -> str:
        line = self.line(path)
        loc = f"{self.name}:{line}" if line is not None else self.name
        return f"{loc}: {dotted(path)}" if path else loc


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


class Section:
    """Typed, tracked access to one mapping of a configuration.

    Every read key is remembered so that :meth:`finish` can reject the
    unknown ones.  Kinds accepted by :meth:`get`: ``int``, ``float``,
    ``bool``, ``str``, ``floats`` (list of numbers), ``ints``, ``matrix``
    (list of equal-length number lists), ``box`` (list of ``[a, b]`` with
    ``a < b``), ``list``, ``dict`` and ``any``.
    """

    def __init__(self, source: Source, data, path=()):
        self.source = source
        self.path = tuple(path)
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError("expected a mapping", source.where(self.path))
        self.data = data
        self.used: set = set()

    def error(self, key, message: str) -> ConfigError:
        path = self.path if key is None else self.path + (key,)
        return ConfigError(message, self.source.where(path))

    def has(self, key: str) -> bool:
        return self.data.get(key) is not None

    def get(self, key: str, kind: str = "any", default=REQUIRED, minimum=None, maximum=None,
            choices=None, strict_minimum: bool = False):
        self.used.add(key)
        if self.data.get(key) is None:
            if default is REQUIRED:
                raise self.error(key, "missing required key")
            return default
        value = self._convert(key, self.data[key], kind)
        if choices is not None and value not in choices:
            raise self.error(key, f"must be one of {', '.join(map(str, choices))}; got {value!r}")
        for v in np.ravel(value) if kind in ("floats", "ints", "matrix") else [value]:
            if minimum is not None and (v < minimum or (strict_minimum and v == minimum)):
                rel = ">" if strict_minimum else ">="
                raise self.error(key, f"must be {rel} {minimum}; got {v}")
            if maximum is not None and v > maximum:
                raise self.error(key, f"must be <= {maximum}; got {v}")
        return value

    def _convert(self, key, v, kind):
        bad = lambda what: self.error(key, f"expected {what}; got {v!r}")
        if kind == "any":
            return v
        if kind == "int":
            if isinstance(v, bool) or not (isinstance(v, int) or (isinstance(v, float) and v.is_integer())):
                raise bad("an integer")
            return int(v)
        if kind == "float":
            if not _is_number(v) or not math.isfinite(v):
                raise bad("a finite number")
            return float(v)
        if kind == "bool":
            if not isinstance(v, bool):
                raise bad("true or false")
            return v
        if kind == "str":
            if not isinstance(v, str):
                raise bad("a string")
            return v
        if kind == "list":
            if not isinstance(v, list):
                raise bad("a list")
            return v
        if kind == "dict":
            if not isinstance(v, dict):
                raise bad("a mapping")
            return v
        if kind in ("floats", "ints"):
            if _is_number(v):
                v = [v]
            if not isinstance(v, list) or not v or not all(_is_number(x) for x in v):
                raise bad("a non-empty list of numbers")
            if kind == "ints":
                if not all(float(x).is_integer() for x in v):
                    raise bad("a list of integers")
                return tuple(int(x) for x in v)
            if not all(math.isfinite(x) for x in v):
                raise bad("finite numbers")
            return tuple(float(x) for x in v)
        if kind == "matrix":
            ok = (isinstance(v, list) and v and all(isinstance(r, list) and r for r in v)
                  and len({len(r) for r in v}) == 1
                  and all(_is_number(x) and math.isfinite(x) for r in v for x in r))
            if not ok:
                raise bad("a list of equal-length number lists")
            return np.array(v, dtype=float)
        if kind == "box":
            ok = (isinstance(v, list) and v and all(isinstance(r, list) and len(r) == 2 for r in v)
                  and all(_is_number(x) for r in v for x in r) and all(a < b for a, b in v))
            if not ok:
                raise bad("a list of [low, high] pairs with low < high")
            return tuple((float(a), float(b)) for a, b in v)
        raise ValueError(f"unknown kind {kind!r}")

    def section(self, key: str, default=REQUIRED) -> "Section":
        self.used.add(key)
        if self.data.get(key) is None:
            if default is REQUIRED:
                raise self.error(key, "missing required section")
            return Section(self.source, {}, self.path + (key,))
        return Section(self.source, self.data[key], self.path + (key,))

    def sections(self, key: str, default=REQUIRED) -> list:
        """Sub-sections of a list-of-mappings value."""
        items = self.get(key, "list", default)
        if items is None:
            return []
        return [Section(self.source, item, self.path + (key, i)) for i, item in enumerate(items)]

    def order(self, key: str, n: int, default=REQUIRED, low: int = 1) -> int:
        """An order such as ``k``: an integer in ``[low, n]``."""
        k = self.get(key, "int", default)
        if k is None:
            return None
        if not low <= k <= n:
            raise self.error(key, f"order {key} = {k} outside [{low}, {n}] for n = {n}")
        return k

    def finish(self) -> None:
        unknown = [key for key in self.data if key not in self.used]
        if unknown:
            known = ", ".join(sorted(self.used)) or "none"
            raise self.error(str(unknown[0]), f"unknown key (expected one of: {known})")

    @contextmanager
    def anchored(self, key=None):
        """Turn domain errors raised while building objects into anchored config errors."""
        try:
            yield
        except ConfigError:
            raise
        except (DomainError, PreconditionError, IntegrityError, KeyError, TypeError,
                ValueError) as exc:
            msg = f"missing key {exc}" if isinstance(exc, KeyError) else str(exc)
            raise self.error(key, msg) from None


@dataclass
class RunConfig:
    path: str
    sha256: str
    command: str
    seed: int
    out: str | None
    params: Section
    tolerances: Section

    def tolerance(self, name: str, default: float) -> float:
        return self.tolerances.get(name, "float", default, minimum=0.0)


def load_config(path, command: str | None = None, seed: int | None = None) -> RunConfig:
    """Read and check the top level of a configuration file.

    ``command`` and ``seed`` come from the command line; a command given
    there must agree with the file, and the seed overrides the file's.
    """
    path = str(path)
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration: {exc.strerror}", path) from None
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError:
        raise ConfigError("configuration is not UTF-8 text", path) from None
    src = Source(path, text)
    if src.data is None:
        raise ConfigError("configuration is empty", path)
    top = Section(src, src.data)
    cmd = top.get("command", "str", command, choices=COMMANDS)
    if command is not None and cmd != command:
        raise top.error("command", f"file says {cmd!r} but {command!r} was requested")
    file_seed = top.get("seed", "int", 0, minimum=0)
    out = top.get("out", "str", None)
    params = top.section("params", default=None)
    tolerances = top.section("tolerances", default=None)
    top.finish()
    return RunConfig(path, hashlib.sha256(raw).hexdigest(), cmd,
                     file_seed if seed is None else int(seed), out, params, tolerances)
