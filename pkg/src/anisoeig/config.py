"""Scenario files: INI text with ``[grid]``, ``[coefficients]``, ``[sweep]``,
optional ``[qsd]`` and ``[output]`` sections. See ``configs/schema.ini``.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Union

from .errors import ConfigError, EvaluationError
from .grid import Grid2D, Kind
from .operator import CoefficientSet

__all__ = ["QsdConfig", "ScenarioConfig", "load_config", "parse_config"]

_SECTIONS = {
    "grid": {"y_domain", "z_domain", "ny", "nz"},
    "coefficients": {"A", "B", "a", "b", "c"},
    "sweep": {"eps_list", "tol", "limit_tol", "tv_tol", "hj_tol", "hj_refine"},
    "qsd": {"eps", "n_particles", "dt", "t_checkpoints", "seed", "initial", "resample", "ny", "nz"},
    "output": {"dir"},
}
_REQUIRED = {"grid": {"y_domain", "z_domain", "ny", "nz"}, "coefficients": {"A", "B", "a", "b", "c"},
             "sweep": {"eps_list"}}


@dataclass(frozen=True)
class QsdConfig:
    eps: float
    n_particles: int
    t_checkpoints: tuple[float, ...]
    seed: int
    dt: Optional[float] = None  # None: the largest step allowed by the stability guard
    initial: Union[str, tuple] = "uniform"
    resample: bool = False
    ny: Optional[int] = None  # grid override for the particle run
    nz: Optional[int] = None


@dataclass(frozen=True)
class ScenarioConfig:
    y_domain: Kind
    z_domain: Kind
    ny: int
    nz: int
    coefficients: dict
    eps_list: tuple[float, ...]
    tol: float = 1e-10
    limit_tol: float = 2e-2
    tv_tol: float = 5e-2
    hj_tol: float = 1e-6
    hj_refine: int = 4
    qsd: Optional[QsdConfig] = None
    output_dir: Path = Path("out")
    source: str = field(default="<string>", compare=False)

    @property
    def coeffs(self) -> CoefficientSet:
        return CoefficientSet.from_strings(**self.coefficients)

    @property
    def grid(self) -> Grid2D:
        return Grid2D.build(self.y_domain, self.ny, self.z_domain, self.nz)

    @property
    def qsd_grid(self) -> Grid2D:
        q = self.qsd
        if q is None:
            raise ConfigError(f"{self.source}: missing [qsd] section")
        return Grid2D.build(self.y_domain, q.ny or self.ny, self.z_domain, q.nz or self.nz)

    def with_seed(self, seed: int) -> "ScenarioConfig":
        if self.qsd is None:
            return self
        return replace(self, qsd=replace(self.qsd, seed=int(seed)))

    def with_output(self, path: Union[str, Path]) -> "ScenarioConfig":
        return replace(self, output_dir=Path(path))


class _Reader:
    """Typed access to a parsed file, with line numbers in error messages."""

    def __init__(self, parser: configparser.ConfigParser, text: str, source: str):
        self.parser = parser
        self.source = source
        self.lines: dict[tuple[str, str], int] = {}
        section = None
        for no, line in enumerate(text.splitlines(), start=1):
            m = re.match(r"\s*\[([^\]]+)\]", line)
            if m:
                section = m.group(1).strip()
                continue
            m = re.match(r"([^=:#;\s][^=:]*?)\s*[=:]", line)
            if m and section is not None:
                self.lines.setdefault((section, m.group(1).strip()), no)

    def where(self, section: str, key: str) -> str:
        no = self.lines.get((section, key))
        return f"{self.source}:{no}" if no else self.source

    def fail(self, section: str, key: str, msg: str):
        raise ConfigError(f"{self.where(section, key)}: [{section}] {key}: {msg}")

    def has(self, section: str, key: str) -> bool:
        return self.parser.has_option(section, key)

    def text(self, section: str, key: str, default=None) -> str:
        if not self.has(section, key):
            if default is None:
                raise ConfigError(f"{self.source}: [{section}] is missing required key {key!r}")
            return default
        value = self.parser.get(section, key).strip()
        if not value:
            self.fail(section, key, "empty value")
        return value

    def number(self, section: str, key: str, kind=float, default=None):
        if default is not None and not self.has(section, key):
            return default
        raw = self.text(section, key)
        try:
            return kind(raw)
        except ValueError:
            self.fail(section, key, f"expected {kind.__name__}, got {raw!r}")

    def floats(self, section: str, key: str) -> tuple[float, ...]:
        raw = self.text(section, key)
        try:
            return tuple(float(x) for x in raw.split(","))
        except ValueError:
            self.fail(section, key, f"expected a comma-separated list of numbers, got {raw!r}")

    def boolean(self, section: str, key: str, default: bool) -> bool:
        if not self.has(section, key):
            return default
        try:
            return self.parser.getboolean(section, key)
        except ValueError:
            self.fail(section, key, f"expected true/false, got {self.parser.get(section, key)!r}")


def load_config(path: Union[str, Path]) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err.strerror}") from err
    return parse_config(text, str(path))


def parse_config(text: str, source: str = "<string>") -> ScenarioConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # coefficient names are case-sensitive (A vs a)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as err:
        raise ConfigError(f"{source}: parse error: {err}") from err
    r = _Reader(parser, text, source)

    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"{source}: unknown section [{section}]")
        for key in parser.options(section):
            if key not in _SECTIONS[section]:
                r.fail(section, key, "unknown key")
    for section, keys in _REQUIRED.items():
        if not parser.has_section(section):
            raise ConfigError(f"{source}: missing section [{section}]")
        for key in sorted(keys):
            r.text(section, key)

    kinds = {}
    for key in ("y_domain", "z_domain"):
        try:
            kinds[key] = Kind.parse(r.text("grid", key))
        except ConfigError as err:
            r.fail("grid", key, str(err))
    sizes = {key: r.number("grid", key, int) for key in ("ny", "nz")}
    for key, n in sizes.items():
        if n < 4:
            r.fail("grid", key, f"need at least 4 nodes, got {n}")
    if kinds["y_domain"] is Kind.INTERVAL and kinds["z_domain"] is Kind.INTERVAL:
        r.fail("grid", "z_domain", "at least one of the two domains must be a torus")

    coefficients = {name: r.text("coefficients", name) for name in "ABabc"}

    eps_list = r.floats("sweep", "eps_list")
    if any(not e > 0 for e in eps_list):
        r.fail("sweep", "eps_list", f"every eps must be positive, got {list(eps_list)}")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        r.fail("sweep", "eps_list", f"not strictly decreasing: {list(eps_list)}")
    tols = {}
    for key, default in (("tol", 1e-10), ("limit_tol", 2e-2), ("tv_tol", 5e-2), ("hj_tol", 1e-6)):
        tols[key] = r.number("sweep", key, float, default)
        if not tols[key] > 0:
            r.fail("sweep", key, "must be positive")
    hj_refine = r.number("sweep", "hj_refine", int, 4)
    if hj_refine < 1:
        r.fail("sweep", "hj_refine", "must be at least 1")

    qsd = _read_qsd(r) if parser.has_section("qsd") else None
    out_dir = Path(r.text("output", "dir", "out")) if parser.has_section("output") else Path("out")

    cfg = ScenarioConfig(kinds["y_domain"], kinds["z_domain"], sizes["ny"], sizes["nz"], coefficients,
                         eps_list, tols["tol"], tols["limit_tol"], tols["tv_tol"], tols["hj_tol"],
                         hj_refine, qsd, out_dir, source)
    _validate_coefficients(cfg, r)
    return cfg


def _read_qsd(r: _Reader) -> QsdConfig:
    eps = r.number("qsd", "eps", float)
    if not eps > 0:
        r.fail("qsd", "eps", "must be positive")
    n = r.number("qsd", "n_particles", int)
    if n < 100:
        r.fail("qsd", "n_particles", f"need at least 100 particles, got {n}")
    ts = r.floats("qsd", "t_checkpoints")
    if any(t < 0 for t in ts) or any(b <= a for a, b in zip(ts, ts[1:])):
        r.fail("qsd", "t_checkpoints", f"must be nonnegative and increasing, got {list(ts)}")
    seed = r.number("qsd", "seed", int, 0)
    if seed < 0:
        r.fail("qsd", "seed", "must be nonnegative")
    dt = r.number("qsd", "dt", float) if r.has("qsd", "dt") else None
    if dt is not None and not dt > 0:
        r.fail("qsd", "dt", "must be positive")
    initial_text = r.text("qsd", "initial", "uniform")
    m = re.fullmatch(r"cell\(\s*(\d+)\s*,\s*(\d+)\s*\)", initial_text)
    if m:
        initial: Union[str, tuple] = ("cell", int(m.group(1)), int(m.group(2)))
    elif initial_text in ("uniform", "phi"):
        initial = initial_text
    else:
        r.fail("qsd", "initial", f"expected uniform, phi or cell(i, j), got {initial_text!r}")
    sizes = {}
    for key in ("ny", "nz"):
        sizes[key] = r.number("qsd", key, int) if r.has("qsd", key) else None
        if sizes[key] is not None and sizes[key] < 4:
            r.fail("qsd", key, f"need at least 4 nodes, got {sizes[key]}")
    return QsdConfig(eps, n, ts, seed, dt, initial, r.boolean("qsd", "resample", False),
                     sizes["ny"], sizes["nz"])


def _validate_coefficients(cfg: ScenarioConfig, r: _Reader) -> None:
    try:
        coeffs = cfg.coeffs
    except ConfigError as err:
        name = str(err).split()[1] if str(err).startswith("coefficient ") else "c"
        raise ConfigError(f"{r.where('coefficients', name)}: {err}") from err
    try:
        coeffs.validate(cfg.grid)
    except EvaluationError as err:
        raise ConfigError(f"{r.where('coefficients', 'A')}: coefficient evaluation failed: {err}") from err
    except ConfigError as err:
        msg = str(err)
        key = next((k for k in "ABab" if f"coefficient {k} " in msg), "A")
        raise ConfigError(f"{r.where('coefficients', key)}: {msg}") from err
    if cfg.qsd is not None and isinstance(cfg.qsd.initial, tuple):
        _, i, j = cfg.qsd.initial
        g = cfg.qsd_grid
        if not (i < g.gy.n and j < g.gz.n):
            r.fail("qsd", "initial", f"cell ({i}, {j}) is outside the {g.gy.n}x{g.gz.n} grid")
