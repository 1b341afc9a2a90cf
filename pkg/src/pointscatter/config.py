"""Run configuration: one TOML file with six sections, parsed into dataclasses.

Sections: [manifold], [points], [frame], [ranges], [tolerances], [symbols].
Only [manifold], [points] and [frame] are mandatory; every range and tolerance
has the module default and can be overridden key by key.  All validation
failures raise ConfigError carrying the dotted field path, so a bad file can
be fixed without reading this source.

Complex matrices (explicit frames, Hermitian coupling matrices) are written
as row-major lists of [re, im] pairs; a nested row-of-rows layout is accepted
too since it is easier to line up by eye.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # 3.10
    import tomli as tomllib

from .backends import ManifoldSpec, PointSet, make_backend
from .errors import ConfigError
from .frames import (
    LagrangianFrame,
    frame_from_hermitian,
    isotropic_frame,
    trivial_frame,
    validate_frame,
)
from .measures import RadialBump, default_symbol_family

_SECTIONS = ("manifold", "points", "frame", "ranges", "tolerances", "symbols")
_FRAME_KINDS = ("trivial", "isotropic", "hermitian", "explicit")


@dataclass(frozen=True)
class Ranges:
    """Scan grids; every subcommand reads only the keys it needs."""

    shell_x: float = 10.0
    lambda_sq: tuple = (30.0, 80.0)
    x_values: tuple = (10.0, 20.0, 40.0)
    gamma_values: tuple = (1.0,)
    upsilon_values: tuple = (4.0, 16.0, 64.0)
    h_inverse_values: tuple = (20.0, 40.0)
    delta_grid: tuple = (0.05, 0.1, 0.2)


@dataclass(frozen=True)
class Tolerances:
    green_tail: float = 1e-8
    secular_grid: int = 41
    refine_rel: float = 1e-13
    combination_cutoff: float | None = None


@dataclass(frozen=True)
class SymbolsConfig:
    max_norm: int = 3
    chi_center: float = 1.0
    chi_width: float = 0.5

    def bump(self):
        return RadialBump(self.chi_center, self.chi_width)


@dataclass(frozen=True)
class RunConfig:
    manifold: ManifoldSpec
    coords: tuple
    frame_kind: str
    frame_data: tuple            # kind-specific payload, hashable
    ranges: Ranges = field(default_factory=Ranges)
    tolerances: Tolerances = field(default_factory=Tolerances)
    symbols: SymbolsConfig = field(default_factory=SymbolsConfig)
    sha256: str = ""

    def backend(self):
        return make_backend(self.manifold)

    def points(self, backend):
        try:
            return PointSet(backend, [list(c) for c in self.coords])
        except ValueError as exc:
            raise ConfigError("points.coords", str(exc)) from None

    def frame(self):
        return _build_frame(self.frame_kind, self.frame_data, len(self.coords))

    def symbol_family(self, dimension):
        return default_symbol_family(dimension, self.symbols.max_norm,
                                     chi=self.symbols.bump())


# -- typed scalar extraction --------------------------------------------------

def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _get_number(table, path, key, default=None, minimum=None, strict_min=None):
    if key not in table:
        if default is not None:
            return default
        raise ConfigError(f"{path}.{key}", "required key is missing")
    v = table[key]
    if not _is_number(v):
        raise ConfigError(f"{path}.{key}", f"expected a number, got {v!r}")
    v = float(v)
    if minimum is not None and v < minimum:
        raise ConfigError(f"{path}.{key}", f"must be >= {minimum}, got {v}")
    if strict_min is not None and v <= strict_min:
        raise ConfigError(f"{path}.{key}", f"must be > {strict_min}, got {v}")
    return v


def _get_int(table, path, key, default, minimum):
    if key not in table:
        return default
    v = table[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{path}.{key}", f"expected an integer, got {v!r}")
    if v < minimum:
        raise ConfigError(f"{path}.{key}", f"must be >= {minimum}, got {v}")
    return v


def _get_number_list(table, path, key, default, strict_min=None):
    if key not in table:
        return default
    v = table[key]
    if not isinstance(v, list) or not v or not all(_is_number(x) for x in v):
        raise ConfigError(f"{path}.{key}", "expected a non-empty list of numbers")
    out = tuple(float(x) for x in v)
    if strict_min is not None and any(x <= strict_min for x in out):
        raise ConfigError(f"{path}.{key}", f"every entry must be > {strict_min}")
    return out


def _reject_unknown(table, path, known):
    for key in table:
        if key not in known:
            raise ConfigError(f"{path}.{key}", "unknown key")


# -- complex matrices ---------------------------------------------------------

def _parse_complex_matrix(value, n, path):
    """Row-major [re, im] pairs, flat (n*n entries) or nested (n rows)."""

    def pair(x, where):
        if (not isinstance(x, list) or len(x) != 2
                or not all(_is_number(c) for c in x)):
            raise ConfigError(where, f"expected an [re, im] pair, got {x!r}")
        return complex(float(x[0]), float(x[1]))

    def looks_like_pair(x):
        return isinstance(x, list) and len(x) == 2 and all(_is_number(c) for c in x)

    if not isinstance(value, list):
        raise ConfigError(path, "expected a list of [re, im] pairs")
    if len(value) == n * n and all(looks_like_pair(x) for x in value):
        flat = [pair(x, f"{path}[{i}]") for i, x in enumerate(value)]
        return np.array(flat, dtype=complex).reshape(n, n)
    if len(value) == n:
        rows = []
        for i, row in enumerate(value):
            if not isinstance(row, list) or len(row) != n:
                raise ConfigError(f"{path}[{i}]", f"expected a row of {n} pairs")
            rows.append([pair(x, f"{path}[{i}][{j}]") for j, x in enumerate(row)])
        return np.array(rows, dtype=complex)
    raise ConfigError(path, f"expected {n}x{n} entries (flat row-major or nested)")


def _matrix_to_data(m):
    return tuple((float(z.real), float(z.imag)) for z in np.asarray(m).ravel())


def _data_to_matrix(data, n):
    flat = np.array([complex(re, im) for re, im in data])
    return flat.reshape(n, n)


def _build_frame(kind, data, n):
    if kind == "trivial":
        return trivial_frame(n)
    if kind == "isotropic":
        return isotropic_frame(data[0], n)
    if kind == "hermitian":
        try:
            return frame_from_hermitian(_data_to_matrix(data, n))
        except ValueError as exc:
            raise ConfigError("frame.entries", str(exc)) from None
    # explicit: FrameValidationError propagates so the message names the
    # violated Lagrangian identity
    c = _data_to_matrix(data[: n * n], n)
    s = _data_to_matrix(data[n * n:], n)
    return validate_frame(c, s)


# -- section parsers ----------------------------------------------------------

def _parse_manifold(table):
    _reject_unknown(table, "manifold", ("kind",))
    kind = table.get("kind")
    if not isinstance(kind, str):
        raise ConfigError("manifold.kind", "required key is missing or not a string")
    try:
        return ManifoldSpec(kind)
    except ValueError as exc:
        raise ConfigError("manifold.kind", str(exc)) from None


def _parse_points(table, spec):
    _reject_unknown(table, "points", ("coords",))
    coords = table.get("coords")
    if not isinstance(coords, list) or not coords:
        raise ConfigError("points.coords", "required: a non-empty list of coordinate lists")
    want = 2 if spec.kind == "sphere2" else spec.dimension
    parsed = []
    for i, c in enumerate(coords):
        if not isinstance(c, list) or len(c) != want or not all(_is_number(x) for x in c):
            raise ConfigError(f"points.coords[{i}]",
                              f"expected {want} numbers for {spec.kind}")
        parsed.append(tuple(float(x) for x in c))
    return tuple(parsed)


def _parse_frame(table, n):
    kind = table.get("kind")
    if kind not in _FRAME_KINDS:
        raise ConfigError("frame.kind", f"expected one of {_FRAME_KINDS}, got {kind!r}")
    if kind == "trivial":
        _reject_unknown(table, "frame", ("kind",))
        data = ()
    elif kind == "isotropic":
        _reject_unknown(table, "frame", ("kind", "theta"))
        data = (_get_number(table, "frame", "theta"),)
    elif kind == "hermitian":
        _reject_unknown(table, "frame", ("kind", "entries"))
        if "entries" not in table:
            raise ConfigError("frame.entries", "required key is missing")
        data = _matrix_to_data(_parse_complex_matrix(table["entries"], n, "frame.entries"))
    else:
        _reject_unknown(table, "frame", ("kind", "c", "s"))
        for key in ("c", "s"):
            if key not in table:
                raise ConfigError(f"frame.{key}", "required key is missing")
        c = _parse_complex_matrix(table["c"], n, "frame.c")
        s = _parse_complex_matrix(table["s"], n, "frame.s")
        data = _matrix_to_data(c) + _matrix_to_data(s)
    _build_frame(kind, data, n)   # fail at load time, not mid-run
    return kind, data


def _parse_ranges(table):
    _reject_unknown(table, "ranges", (
        "shell_x", "lambda_sq", "x_values", "gamma_values",
        "upsilon_values", "h_inverse_values", "delta_grid",
    ))
    d = Ranges()
    lam = _get_number_list(table, "ranges", "lambda_sq", d.lambda_sq)
    if len(lam) != 2 or not lam[0] < lam[1]:
        raise ConfigError("ranges.lambda_sq", f"expected [lo, hi] with lo < hi, got {list(lam)}")
    return Ranges(
        shell_x=_get_number(table, "ranges", "shell_x", d.shell_x, strict_min=0.0),
        lambda_sq=lam,
        x_values=_get_number_list(table, "ranges", "x_values", d.x_values, strict_min=0.0),
        gamma_values=_get_number_list(table, "ranges", "gamma_values", d.gamma_values,
                                      strict_min=0.0),
        upsilon_values=_get_number_list(table, "ranges", "upsilon_values",
                                        d.upsilon_values, strict_min=0.0),
        h_inverse_values=_get_number_list(table, "ranges", "h_inverse_values",
                                          d.h_inverse_values, strict_min=0.0),
        delta_grid=_get_number_list(table, "ranges", "delta_grid", d.delta_grid,
                                    strict_min=0.0),
    )


def _parse_tolerances(table):
    _reject_unknown(table, "tolerances", (
        "green_tail", "secular_grid", "refine_rel", "combination_cutoff",
    ))
    d = Tolerances()
    cutoff = None
    if "combination_cutoff" in table:
        cutoff = _get_number(table, "tolerances", "combination_cutoff", strict_min=0.0)
    return Tolerances(
        green_tail=_get_number(table, "tolerances", "green_tail", d.green_tail,
                               strict_min=0.0),
        secular_grid=_get_int(table, "tolerances", "secular_grid", d.secular_grid, 5),
        refine_rel=_get_number(table, "tolerances", "refine_rel", d.refine_rel,
                               strict_min=0.0),
        combination_cutoff=cutoff,
    )


def _parse_symbols(table):
    _reject_unknown(table, "symbols", ("max_norm", "chi_center", "chi_width"))
    d = SymbolsConfig()
    return SymbolsConfig(
        max_norm=_get_int(table, "symbols", "max_norm", d.max_norm, 0),
        chi_center=_get_number(table, "symbols", "chi_center", d.chi_center,
                               strict_min=0.0),
        chi_width=_get_number(table, "symbols", "chi_width", d.chi_width,
                              strict_min=0.0),
    )


def load_config(path):
    """Parse and fully validate a config file; any defect raises ConfigError."""
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        doc = tomllib.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(str(path), f"not valid TOML: {exc}") from None
    for section in doc:
        if section not in _SECTIONS:
            raise ConfigError(section, "unknown section")

    def section(name):
        if name not in doc:
            raise ConfigError(name, "required section is missing")
        if not isinstance(doc[name], dict):
            raise ConfigError(name, "expected a table")
        return doc[name]

    spec = _parse_manifold(section("manifold"))
    coords = _parse_points(section("points"), spec)
    frame_kind, frame_data = _parse_frame(section("frame"), len(coords))
    cfg = RunConfig(
        manifold=spec,
        coords=coords,
        frame_kind=frame_kind,
        frame_data=frame_data,
        ranges=_parse_ranges(doc.get("ranges", {})),
        tolerances=_parse_tolerances(doc.get("tolerances", {})),
        symbols=_parse_symbols(doc.get("symbols", {})),
        sha256=hashlib.sha256(raw).hexdigest(),
    )
    cfg.points(cfg.backend())   # distinctness / domain checks
    return cfg
