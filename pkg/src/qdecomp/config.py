"""Run configuration.

A config file is a list of ``key = value`` lines.  Blank lines and lines
starting with ``#`` or ``;`` are ignored, and an optional ``[section]``
header is accepted and ignored too.  Recognised keys::

    lexicon        path of a lexicon file or directory
    combinations   path of a combination table (JSON)
    c_min c_unique c_seq c_exact c_ref d_max    alignment weights
    k_dum k_dup    number of [DUM] and [DUP] tokens
    time_limit_ms  solver time limit per example
    jobs           worker processes
    seed           accepted and recorded, has no effect

Command-line flags override values from the file.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace

from .alignment import AlignmentWeights


class ConfigError(ValueError):
    pass


_WEIGHT_KEYS = tuple(f.name for f in fields(AlignmentWeights))
_INT_KEYS = ("k_dum", "k_dup", "time_limit_ms", "jobs", "seed")
_PATH_KEYS = ("lexicon", "combinations")


@dataclass(frozen=True)
class Config:
    lexicon: str | None = None
    combinations: str | None = None
    weights: AlignmentWeights = field(default_factory=AlignmentWeights)
    k_dum: int = 4
    k_dup: int = 4
    time_limit_ms: int = 10_000
    jobs: int = 1
    seed: int = 0

    def override(self, **kw) -> "Config":
        """Copy with every non-None keyword applied."""
        kw = {k: v for k, v in kw.items() if v is not None}
        w = {k: kw.pop(k) for k in list(kw) if k in _WEIGHT_KEYS}
        cfg = replace(self, **kw)
        if w:
            cfg = replace(cfg, weights=replace(cfg.weights, **w))
        return cfg


def parse_config(text: str, source: str = "<config>") -> Config:
    body = text
    first = next((ln.strip() for ln in text.splitlines() if ln.strip() and ln.strip()[0] not in "#;"), "")
    if not first.startswith("["):
        body = "[qdecomp]\n" + text
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"),
                                   inline_comment_prefixes=("#",))
    try:
        cp.read_string(body, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    values: dict = {}
    for section in cp.sections():
        for key, raw in cp.items(section):
            key = key.strip().lower()
            raw = raw.strip()
            if key in _PATH_KEYS:
                values[key] = raw or None
            elif key in _INT_KEYS or key in _WEIGHT_KEYS:
                try:
                    values[key] = int(raw)
                except ValueError:
                    raise ConfigError(f"{source}: {key} must be an integer, got {raw!r}") from None
            else:
                raise ConfigError(f"{source}: unknown key {key!r}")
    for key in ("k_dum", "k_dup", "jobs", "time_limit_ms"):
        if key in values and values[key] < (0 if key.startswith("k_") else 1):
            raise ConfigError(f"{source}: {key} is out of range")
    return Config().override(**values)


def load_config(path) -> Config:
    if path is None:
        return Config()
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read(), str(path))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
