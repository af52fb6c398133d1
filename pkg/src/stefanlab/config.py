"""Sectioned key=value run configuration with canonical round-trip text.

Sections [grid], [solver], [analysis], [example]; unknown sections or keys
are errors.  Every value has a default, and the canonical text (sorted
sections and keys, 17-significant-digit floats) is echoed into output
sidecars so a run can always be reproduced from its artifacts.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field


class ConfigError(ValueError):
    pass


_SCHEMA: dict[str, dict[str, tuple]] = {
    # section -> key -> (type, default); type in {int, float, str, bool}
    "grid": {
        "dim": (int, 1),
        "n1": (int, 257),
        "n2": (int, 0),  # 0 means unused
        "nt": (int, 301),
        "dx": (float, 0.0),  # 0 means derive from domain/n1
        "dt": (float, 0.0),  # 0 means dx^2/2
        "origin_x1": (float, -1.0),
        "origin_x2": (float, 0.0),
        "origin_t": (float, 0.0),
        "extent": (float, 2.0),
    },
    "solver": {
        "boundary": (str, "neumann"),
        "psor_omega": (float, 1.5),
        "psor_tol": (float, 1e-10),
        "psor_max_iter": (int, 10000),
        "enforce_monotone": (bool, True),
        "radial_dim": (int, 0),  # 0 means Cartesian
    },
    "analysis": {
        "gamma": (float, 4.0),
        "rank_tol": (float, 0.05),
        "m_tol": (float, 0.05),
        "residual_tol": (float, 0.1),
        "drift_tol": (float, 0.05),
        "jump_threshold": (float, 0.1),
        "plateau_margin": (float, 0.5),
        "flatness_tol": (float, 0.3),
        "beta": (float, 0.6),
        "taylor_k": (int, 4),
    },
    "example": {
        "name": (str, "planar"),
        "t0": (float, 0.25),
        "eps": (float, 1e-3),
        "order": (int, 8),
        "d": (int, 2),
        "amp": (float, 0.1),
        "support": (float, 1.0),
        "n_max": (int, 2),
    },
}


@dataclass
class RunConfig:
    values: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        full = {}
        for sec, keys in _SCHEMA.items():
            full[sec] = {k: spec[1] for k, spec in keys.items()}
        for sec, kv in self.values.items():
            if sec not in full:
                raise ConfigError(f"unknown section [{sec}]")
            for k, v in kv.items():
                if k not in full[sec]:
                    raise ConfigError(f"unknown key '{k}' in section [{sec}]")
                full[sec][k] = _coerce(_SCHEMA[sec][k][0], v, sec, k)
        self.values = full

    def get(self, section: str, key: str):
        return self.values[section][key]

    def set(self, section: str, key: str, value) -> None:
        if section not in _SCHEMA or key not in _SCHEMA[section]:
            raise ConfigError(f"unknown key '{key}' in section [{section}]")
        self.values[section][key] = _coerce(_SCHEMA[section][key][0], value, section, key)

    def to_text(self) -> str:
        lines = []
        for sec in sorted(self.values):
            lines.append(f"[{sec}]")
            for k in sorted(self.values[sec]):
                lines.append(f"{k}={_fmt(self.values[sec][k])}")
            lines.append("")
        return "\n".join(lines)

    @staticmethod
    def parse(text: str) -> "RunConfig":
        values: dict[str, dict] = {}
        section = None
        for ln_no, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                section = line[1:-1].strip()
                if section not in _SCHEMA:
                    raise ConfigError(f"line {ln_no}: unknown section [{section}]")
                values.setdefault(section, {})
                continue
            if "=" not in line:
                raise ConfigError(f"line {ln_no}: expected key=value, got {raw!r}")
            if section is None:
                raise ConfigError(f"line {ln_no}: key outside any section")
            k, v = (part.strip() for part in line.split("=", 1))
            values[section][k] = v
        return RunConfig(values)


def _coerce(typ, v, sec, key):
    if typ is bool:
        if isinstance(v, bool):
            return v
        s = str(v).strip().lower()
        if s in ("true", "1", "yes", "on"):
            return True
        if s in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"[{sec}] {key}: cannot parse boolean from {v!r}")
    try:
        return typ(v)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{sec}] {key}: {exc}") from None


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)
