"""INI experiment configs: `[section]` headers, `key = value` lines, `#` comments.

Values are parsed on demand by typed getters that report the key and line of
any malformed entry. Every value read (including defaults) is recorded so the
run can echo a fully resolved config.
"""
from __future__ import annotations

import configparser
import math
import re

import numpy as np

from .errors import ConfigError

SECTIONS = ("model", "rate", "bound", "mc", "coverage", "output")
MODEL_KINDS = ("gaussian", "exponential", "lad", "change_point")

_MISSING = object()


class ExperimentConfig:
    def __init__(self, text, path="<string>"):
        self.path = path
        self._parser = configparser.ConfigParser(
            comment_prefixes=("#",), inline_comment_prefixes=("#",), interpolation=None,
            delimiters=("=",))
        self._parser.optionxform = str
        try:
            self._parser.read_string(text, source=path)
        except configparser.Error as exc:
            line = getattr(exc, "lineno", None)
            raise ConfigError(f"cannot parse config: {exc.message if hasattr(exc, 'message') else exc}",
                              None, line) from None
        self._lines = _line_index(text)
        unknown = [s for s in self._parser.sections() if s not in SECTIONS]
        if unknown:
            raise ConfigError(f"unknown section {unknown[0]!r}", unknown[0],
                              self._lines.get((unknown[0], None)))
        if not self._parser.has_section("model"):
            raise ConfigError("exactly one [model] section is required", "model")
        self.resolved = {}

    @classmethod
    def read(cls, path):
        try:
            with open(path) as fh:
                return cls(fh.read(), str(path))
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None

    def has(self, section):
        return self._parser.has_section(section)

    def keys(self, section):
        return list(self._parser[section].keys()) if self.has(section) else []

    def _raw(self, section, key, default):
        if self.has(section) and key in self._parser[section]:
            return self._parser[section][key].strip(), True
        if default is _MISSING:
            raise ConfigError("missing required key", f"{section}.{key}")
        return default, False

    def _err(self, section, key, msg):
        return ConfigError(msg, f"{section}.{key}", self._lines.get((section, key)))

    def _record(self, section, key, value):
        self.resolved.setdefault(section, {})[key] = value
        return value

    def get_str(self, section, key, default=_MISSING, choices=None):
        v, _ = self._raw(section, key, default)
        if v is not None and choices is not None and v not in choices:
            raise self._err(section, key, f"must be one of {', '.join(choices)}, got {v!r}")
        return self._record(section, key, v)

    def get_float(self, section, key, default=_MISSING, lo=None, hi=None, lo_open=False):
        v, given = self._raw(section, key, default)
        if v is None:
            return self._record(section, key, None)
        if given:
            try:
                v = float(v)
            except ValueError:
                raise self._err(section, key, f"not a number: {v!r}") from None
        v = float(v)
        if not math.isfinite(v):
            raise self._err(section, key, "must be finite")
        if lo is not None and (v < lo or (lo_open and v == lo)):
            raise self._err(section, key, f"must be {'>' if lo_open else '>='} {lo:g}")
        if hi is not None and v > hi:
            raise self._err(section, key, f"must be <= {hi:g}")
        return self._record(section, key, v)

    def get_int(self, section, key, default=_MISSING, lo=None):
        v, given = self._raw(section, key, default)
        if v is None:
            return self._record(section, key, None)
        if given:
            try:
                f = float(v)
            except ValueError:
                raise self._err(section, key, f"not a number: {v!r}") from None
            if not f.is_integer():
                raise self._err(section, key, f"must be an integer, got {v!r}")
            v = int(f) if abs(f) < 2 ** 53 else int(v)
        if lo is not None and v < lo:
            raise self._err(section, key, f"must be >= {lo}")
        return self._record(section, key, int(v))

    def get_list(self, section, key, default=_MISSING):
        v, given = self._raw(section, key, default)
        if not given:
            return self._record(section, key, tuple(v) if v is not None else None)
        try:
            out = tuple(float(x) for x in re.split(r"[,\s]+", v) if x)
        except ValueError:
            raise self._err(section, key, f"not a list of numbers: {v!r}") from None
        return self._record(section, key, out)

    def get_names(self, section, key, default=_MISSING, choices=None):
        v, given = self._raw(section, key, default)
        out = tuple(x for x in re.split(r"[,\s]+", v) if x) if given else tuple(v)
        if choices is not None:
            for x in out:
                if x not in choices:
                    raise self._err(section, key, f"unknown entry {x!r}")
        return self._record(section, key, out)

    def grid(self, section):
        """Explicit `grid = ...` or `start`, `stop`, `step` (stop included when hit within 1e-9)."""
        if self.has(section) and "grid" in self._parser[section]:
            g = self.get_list(section, "grid")
            if not g:
                raise self._err(section, "grid", "empty grid")
            return np.array(g)
        start = self.get_float(section, "start")
        stop = self.get_float(section, "stop")
        step = self.get_float(section, "step")
        if not step > 0:
            raise self._err(section, "step", "step must be positive")
        if stop < start:
            raise self._err(section, "stop", "stop must be >= start")
        m = int(math.floor((stop - start) / step + 1e-9))
        return start + step * np.arange(m + 1)

    def resolved_text(self, extra=None):
        out = []
        data = {k: dict(v) for k, v in self.resolved.items()}
        for sec, kv in (extra or {}).items():
            data.setdefault(sec, {}).update(kv)
        for sec in SECTIONS:
            if sec not in data:
                continue
            out.append(f"[{sec}]")
            for k, v in data[sec].items():
                if v is None:
                    continue
                out.append(f"{k} = {_fmt(v)}")
            out.append("")
        return "\n".join(out)


def _fmt(v):
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


def _line_index(text):
    idx, sec = {}, None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[([^\]]+)\]", s)
        if m:
            sec = m.group(1).strip()
            idx[(sec, None)] = i
            continue
        m = re.match(r"([^=#]+?)\s*=", s)
        if m and sec is not None:
            idx[(sec, m.group(1).strip())] = i
    return idx
