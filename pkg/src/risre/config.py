"""System constants, phase-shifter constraint sets and the YAML config format.

Powers may be given in the config file either in watts (plain key) or in
dBm (key suffixed with ``_dbm``).  Internally everything is stored in watts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

import yaml

__all__ = [
    "ConfigError",
    "PhaseConstraint",
    "SystemConfig",
    "ChannelParams",
    "dbm_to_watt",
    "watt_to_dbm",
    "default_config",
    "load_config",
    "parse_config",
    "dump_config",
]

CPS_KEY = "cps"


class ConfigError(ValueError):
    """Malformed or inconsistent configuration.

    ``field`` names the offending key and ``line`` the 1-based line in the
    source file when known.
    """

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


def dbm_to_watt(p_dbm: float) -> float:
    """Convert a power in dBm to watts."""
    if not math.isfinite(p_dbm):
        raise ValueError(f"power must be finite, got {p_dbm}")
    return 10.0 ** ((p_dbm - 30.0) / 10.0)


def watt_to_dbm(p_watt: float) -> float:
    if p_watt <= 0:
        raise ValueError(f"power must be positive to express in dBm, got {p_watt}")
    return 10.0 * math.log10(p_watt) + 30.0


@dataclass(frozen=True)
class PhaseConstraint:
    """Feasible set of one RIS reflection coefficient.

    ``mode="cps"`` is the unit circle.  ``mode="dps"`` is the set of
    ``tau = 2**bits`` points ``exp(1j*(2*pi*m + pi)/tau)``, m = 0..tau-1.
    """

    mode: str = "cps"
    bits: int | None = None

    def __post_init__(self):
        if self.mode not in ("cps", "dps"):
            raise ConfigError(f"unknown phase mode {self.mode!r}", field="phase_mode")
        if self.mode == "dps":
            if self.bits is None or int(self.bits) != self.bits or self.bits < 1:
                raise ConfigError("DPS needs an integer bit resolution >= 1", field="bits")
        elif self.bits is not None:
            object.__setattr__(self, "bits", None)

    @property
    def is_discrete(self) -> bool:
        return self.mode == "dps"

    @property
    def tau(self) -> int:
        """Number of discrete levels (0 for CPS)."""
        return 2 ** self.bits if self.is_discrete else 0

    def points(self):
        """The tau discrete levels, ordered by m (DPS only)."""
        import numpy as np

        if not self.is_discrete:
            raise ValueError("continuous phase set has no finite point list")
        m = np.arange(self.tau)
        return np.exp(1j * (2.0 * np.pi * m + np.pi) / self.tau)

    @classmethod
    def cps(cls) -> "PhaseConstraint":
        return cls("cps", None)

    @classmethod
    def dps(cls, bits: int) -> "PhaseConstraint":
        return cls("dps", bits)

    def __str__(self):
        return "CPS" if not self.is_discrete else f"DPS({self.bits}-bit, tau={self.tau})"


def _as_tuple(value, n: int, name: str, cast=float) -> tuple:
    if isinstance(value, (list, tuple)):
        if len(value) != n:
            raise ConfigError(f"expected {n} entries, got {len(value)}", field=name)
        return tuple(cast(v) for v in value)
    return tuple(cast(value) for _ in range(n))


@dataclass(frozen=True)
class SystemConfig:
    """All scalar system constants; powers in watts, bandwidth in Hz.

    Per-UT quantities (``N_k``, ``xi``, ``P_c``, ``P_max``) are tuples of
    length ``K``; scalars passed to the constructor are broadcast.
    ``P_s_of_b`` maps the phase-shifter resolution in bits to the per-element
    RIS static power; the key ``"cps"`` holds the infinite-resolution value.
    """

    K: int
    N_k: Sequence[int]
    M: int
    N_R: int
    W: float
    sigma2: float
    xi: Sequence[float]
    P_c: Sequence[float]
    P_BS: float
    P_s_of_b: Mapping[Any, float]
    P_max: Sequence[float]
    beta: float = 0.0
    phase: PhaseConstraint = field(default_factory=PhaseConstraint.cps)

    def __post_init__(self):
        for name in ("K", "M", "N_R"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ConfigError(f"must be a positive integer, got {v}", field=name)
        K = int(self.K)
        object.__setattr__(self, "N_k", _as_tuple(self.N_k, K, "N_k", int))
        object.__setattr__(self, "xi", _as_tuple(self.xi, K, "xi"))
        object.__setattr__(self, "P_c", _as_tuple(self.P_c, K, "P_c"))
        object.__setattr__(self, "P_max", _as_tuple(self.P_max, K, "P_max"))
        object.__setattr__(self, "P_s_of_b", dict(self.P_s_of_b))
        if any(n < 1 for n in self.N_k):
            raise ConfigError("antenna counts must be >= 1", field="N_k")
        for name in ("W", "sigma2", "P_BS"):
            if not getattr(self, name) > 0:
                raise ConfigError("must be strictly positive", field=name)
        # xi = 0 is only used internally by the SE-max specialisation
        if any(x < 0 for x in self.xi):
            raise ConfigError("amplifier inefficiency must be >= 0", field="xi")
        if any(not p > 0 for p in self.P_c):
            raise ConfigError("must be strictly positive", field="P_c")
        if any(not p > 0 for p in self.P_max):
            raise ConfigError("must be strictly positive", field="P_max")
        if any(not p > 0 for p in self.P_s_of_b.values()):
            raise ConfigError("must be strictly positive", field="P_s")
        if not self.beta >= 0:
            raise ConfigError("weighting factor must be >= 0", field="beta")
        # fail early if the current phase mode has no static-power entry
        self.P_s

    @property
    def P_s(self) -> float:
        """Per-element RIS static power for the configured phase mode."""
        key = self.phase.bits if self.phase.is_discrete else CPS_KEY
        try:
            return float(self.P_s_of_b[key])
        except KeyError:
            raise ConfigError(f"no RIS static power given for resolution {key!r}",
                              field="P_s") from None

    @property
    def N_total(self) -> int:
        return int(sum(self.N_k))

    @property
    def P_static(self) -> float:
        """Transmit-independent part of the consumed power."""
        return float(sum(self.P_c) + self.P_BS + self.N_R * self.P_s)

    @property
    def P_tot(self) -> float:
        """Overall available power budget (all UTs at full power)."""
        return float(sum(self.P_max) + self.P_static)

    def with_pmax_dbm(self, p_dbm: float) -> "SystemConfig":
        return replace(self, P_max=(dbm_to_watt(p_dbm),) * self.K)

    def with_phase(self, phase: PhaseConstraint) -> "SystemConfig":
        return replace(self, phase=phase)

    def with_beta_over_ptot(self, ratio: float) -> "SystemConfig":
        return replace(self, beta=float(ratio) * self.P_tot)

    def replace(self, **changes) -> "SystemConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class ChannelParams:
    """Synthetic channel generator settings."""

    rho_min: float = 0.3
    rho_max: float = 0.9
    path_loss_db: float = -120.0

    def __post_init__(self):
        if not (0.0 <= self.rho_min <= self.rho_max < 1.0):
            raise ConfigError("need 0 <= rho_min <= rho_max < 1", field="rho_min")

    @property
    def rho_range(self) -> tuple[float, float]:
        return (self.rho_min, self.rho_max)


def default_config(pmax_dbm: float = 20.0, phase: PhaseConstraint | None = None,
                   beta: float = 0.0) -> SystemConfig:
    """The default simulation setup (K=4, N_k=2, M=8, N_R=32, 10 MHz)."""
    return SystemConfig(
        K=4, N_k=2, M=8, N_R=32,
        W=10e6,
        sigma2=dbm_to_watt(-96.0),
        xi=1.0 / 0.3,
        P_c=dbm_to_watt(10.0),
        P_BS=dbm_to_watt(39.0),
        P_s_of_b={1: dbm_to_watt(5.0), 2: dbm_to_watt(15.0), CPS_KEY: dbm_to_watt(25.0)},
        P_max=dbm_to_watt(pmax_dbm),
        beta=beta,
        phase=phase or PhaseConstraint.cps(),
    )


# ---------------------------------------------------------------------------
# YAML format
# ---------------------------------------------------------------------------

# key -> SystemConfig field; value is (field, is_power, per_ut)
_POWER_KEYS = {
    "sigma2": ("sigma2", False),
    "P_c": ("P_c", True),
    "P_BS": ("P_BS", False),
    "P_max": ("P_max", True),
}
_PLAIN_KEYS = {"K", "N_k", "M", "N_R", "W", "xi", "beta", "beta_over_ptot",
               "phase_mode", "bits", "P_s", "P_s_dbm",
               "rho_min", "rho_max", "path_loss_db"}


class _LineLoader(yaml.SafeLoader):
    """SafeLoader that remembers the source line of every top-level key."""

    def construct_mapping(self, node, deep=False):
        mapping = super().construct_mapping(node, deep=deep)
        lines = {}
        for key_node, _ in node.value:
            lines[key_node.value] = key_node.start_mark.line + 1
        mapping["__lines__"] = lines
        return mapping


def _strip_lines(obj):
    if isinstance(obj, dict):
        return {k: _strip_lines(v) for k, v in obj.items() if k != "__lines__"}
    return obj


def _power(raw, key, lines):
    """Convert a scalar or list given in dBm to watts."""
    try:
        if isinstance(raw, list):
            return [dbm_to_watt(float(v)) for v in raw]
        return dbm_to_watt(float(raw))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), field=key, line=lines.get(key)) from None


def parse_config(text: str) -> tuple[SystemConfig, ChannelParams]:
    """Parse YAML config text into a system and a channel-generator config."""
    try:
        raw = yaml.load(text, Loader=_LineLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {getattr(exc, 'problem', exc)}",
                          line=mark.line + 1 if mark else None) from None
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a mapping")
    lines = raw.pop("__lines__", {})
    raw = _strip_lines(raw)

    kwargs: dict[str, Any] = {}
    for key, value in raw.items():
        base = key[:-4] if key.endswith("_dbm") else key
        if base in _POWER_KEYS:
            target, _ = _POWER_KEYS[base]
            if target in kwargs:
                raise ConfigError("given twice (watts and dBm)", field=key, line=lines.get(key))
            kwargs[target] = _power(value, key, lines) if key.endswith("_dbm") else value
        elif key not in _PLAIN_KEYS:
            raise ConfigError("unknown key", field=key, line=lines.get(key))

    for key in ("P_s", "P_s_dbm"):
        if key in raw:
            table = raw[key]
            if not isinstance(table, dict):
                raise ConfigError("must map bit resolution (or 'cps') to a power",
                                  field=key, line=lines.get(key))
            ps = {}
            for b, v in table.items():
                b = CPS_KEY if str(b).lower() in (CPS_KEY, "inf") else int(b)
                ps[b] = _power(v, key, lines) if key == "P_s_dbm" else float(v)
            kwargs["P_s_of_b"] = ps

    mode = str(raw.get("phase_mode", "cps")).lower()
    try:
        phase = PhaseConstraint(mode, raw.get("bits") if mode == "dps" else None)
    except ConfigError as exc:
        raise ConfigError(str(exc).split(": ", 1)[-1], field=exc.field,
                          line=lines.get(exc.field or "phase_mode")) from None

    for key, value in raw.items():
        if key in ("P_s", "P_s_dbm", "phase_mode"):
            continue
        ok_int = key in ("K", "M", "N_R", "N_k", "bits")
        items = value if (isinstance(value, list) and key in ("N_k", "xi", "P_c", "P_max",
                                                              "P_c_dbm", "P_max_dbm")) else [value]
        for v in items:
            if isinstance(v, bool) or not isinstance(v, (int, float)) or (ok_int and v != int(v)):
                kind = "an integer" if ok_int else "a number"
                raise ConfigError(f"must be {kind}, got {v!r}", field=key, line=lines.get(key))
    required = ("K", "N_k", "M", "N_R", "W", "xi")
    for key in required:
        if key not in raw:
            raise ConfigError("missing required key", field=key)
        kwargs[key] = raw[key]
    for target in ("sigma2", "P_c", "P_BS", "P_max", "P_s_of_b"):
        if target not in kwargs:
            raise ConfigError("missing required key", field=target)

    xi = kwargs["xi"] if isinstance(kwargs["xi"], list) else [kwargs["xi"]]
    if any(x < 1 for x in xi):
        raise ConfigError("amplifier inefficiency must be >= 1", field="xi", line=lines.get("xi"))
    try:
        cfg = SystemConfig(phase=phase, **kwargs)
        if "beta_over_ptot" in raw:
            if "beta" in raw:
                raise ConfigError("give either beta or beta_over_ptot", field="beta")
            cfg = cfg.with_beta_over_ptot(float(raw["beta_over_ptot"]))
        elif "beta" in raw:
            cfg = cfg.replace(beta=float(raw["beta"]))
        chan = ChannelParams(
            rho_min=float(raw.get("rho_min", 0.3)),
            rho_max=float(raw.get("rho_max", 0.9)),
            path_loss_db=float(raw.get("path_loss_db", -120.0)),
        )
    except ConfigError as exc:
        if exc.line is None and exc.field is not None:
            line = lines.get(exc.field) or lines.get(exc.field + "_dbm")
            raise ConfigError(str(exc).split(": ", 1)[-1], field=exc.field, line=line) from None
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return cfg, chan


def load_config(path: str | Path) -> tuple[SystemConfig, ChannelParams]:
    return parse_config(Path(path).read_text())


def _dbm_repr(p: float) -> float:
    return round(watt_to_dbm(p), 10)


def _collapse(values: Sequence, conv=lambda v: v):
    out = [conv(v) for v in values]
    return out[0] if all(v == out[0] for v in out) else out


def dump_config(cfg: SystemConfig, chan: ChannelParams | None = None) -> str:
    """Serialize to the YAML format read by :func:`parse_config` (powers in dBm)."""
    chan = chan or ChannelParams()
    doc: dict[str, Any] = {
        "K": cfg.K,
        "N_k": _collapse(cfg.N_k),
        "M": cfg.M,
        "N_R": cfg.N_R,
        "W": cfg.W,
        "sigma2_dbm": _dbm_repr(cfg.sigma2),
        "xi": _collapse(cfg.xi),
        "P_c_dbm": _collapse(cfg.P_c, _dbm_repr),
        "P_BS_dbm": _dbm_repr(cfg.P_BS),
        "P_s_dbm": {k: _dbm_repr(v) for k, v in cfg.P_s_of_b.items()},
        "P_max_dbm": _collapse(cfg.P_max, _dbm_repr),
        "beta": cfg.beta,
        "phase_mode": cfg.phase.mode,
    }
    if cfg.phase.is_discrete:
        doc["bits"] = cfg.phase.bits
    doc.update(rho_min=chan.rho_min, rho_max=chan.rho_max, path_loss_db=chan.path_loss_db)
    return yaml.safe_dump(doc, sort_keys=False)
