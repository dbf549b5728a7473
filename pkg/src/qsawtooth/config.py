"""Run configuration in a flat ``key = value`` text format with typed keys.

Blank lines and ``#`` comments are ignored. Lists are comma-separated,
``none`` marks an unset optional value, booleans are ``true``/``false`` and
floats are written with ``repr`` so every value reads back exactly.
"""

from __future__ import annotations

import dataclasses
import math
import typing
from dataclasses import dataclass, field, fields
from pathlib import Path

from .hardware import MODES, NONE, STATIC, ErrorMode
from .state import SawtoothParams

PRESETS = ("oracle-check", "husimi-panel", "fidelity-trace", "tf-scaling", "classical-diffusion")


class ConfigError(ValueError):
    """Invalid configuration text or field value."""


@dataclass(frozen=True)
class RunConfig:
    experiment: str = "oracle-check"
    # map
    n_q: int = 9
    K: float = -0.1
    n0: int | None = None
    # error model
    mode: str = STATIC
    epsilon: float = 1e-4
    tau_g: float = 1.0
    coupling: float = 0.0
    all_qubits: bool = False
    # sweeps; empty means "use the preset default"
    qubits: tuple[int, ...] = ()
    epsilons: tuple[float, ...] = ()
    couplings: tuple[float, ...] = ()
    # evolution and analysis
    t_max: int = 1000
    threshold: float = 0.9
    grid_theta: int = 64
    grid_p: int = 64
    window_start: int = 950
    window_stop: int = 1000
    fit_low: float = 0.5
    fit_high: float = 0.999
    # classical ensembles
    trajectories: int = 100000
    classical_K: float = 2.0
    p0: float | None = 0.0
    noise_amplitude: float = 0.0
    fit_t_min: int = 10
    fit_t_max: int = 1000
    # seeds and output
    seed: int = 0
    realizations: int = 20
    out_dir: str = "qsawtooth-out"

    def __post_init__(self):
        if self.experiment not in PRESETS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; expected one of {PRESETS}")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        checks = [
            (self.n_q >= 1, "n_q must be >= 1"),
            (all(q >= 1 for q in self.qubits), "qubits must be >= 1"),
            (self.epsilon >= 0 and all(e >= 0 for e in self.epsilons), "epsilon must be >= 0"),
            (self.coupling >= 0 and all(c >= 0 for c in self.couplings), "coupling must be >= 0"),
            (self.tau_g > 0, "tau_g must be > 0"),
            (self.t_max >= 0, "t_max must be >= 0"),
            (0 < self.threshold < 1, "threshold must lie in (0, 1)"),
            (self.grid_theta >= 2 and self.grid_p >= 2, "grids need at least 2 cells per axis"),
            (0 <= self.window_start <= self.window_stop, "window must satisfy 0 <= start <= stop"),
            (0 < self.fit_low < self.fit_high <= 1, "fit window must satisfy 0 < low < high <= 1"),
            (self.trajectories >= 1, "trajectories must be >= 1"),
            (self.noise_amplitude >= 0, "noise_amplitude must be >= 0"),
            (1 <= self.fit_t_min < self.fit_t_max, "need 1 <= fit_t_min < fit_t_max"),
            (self.seed >= 0, "seed must be >= 0"),
            (self.realizations >= 1, "realizations must be >= 1"),
            (bool(self.out_dir), "out_dir must not be empty"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        for name in ("K", "epsilon", "tau_g", "coupling", "classical_K", "noise_amplitude"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")
        if self.mode == "noisy-detuning" and self.coupling != 0:
            raise ConfigError("noisy-detuning runs with coupling = 0")
        try:
            self.params()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def params(self, n_q: int | None = None) -> SawtoothParams:
        n_q = self.n_q if n_q is None else n_q
        return SawtoothParams(n_q, self.K, self.n0 if n_q == self.n_q else None)

    def error_mode(self, epsilon: float | None = None, coupling: float | None = None) -> ErrorMode:
        eps = self.epsilon if epsilon is None else epsilon
        if self.mode == NONE:
            return ErrorMode()
        cpl = self.coupling if coupling is None else coupling
        if self.mode != STATIC:
            cpl = 0.0
        return ErrorMode(self.mode, eps, self.tau_g, cpl, self.all_qubits)

    def replace(self, **changes) -> RunConfig:
        return dataclasses.replace(self, **changes)


_HINTS = typing.get_type_hints(RunConfig)


def _kind(name: str):
    """``(base type, optional, is_list)`` for a RunConfig field."""
    hint = _HINTS[name]
    origin = typing.get_origin(hint)
    if origin is tuple:
        return typing.get_args(hint)[0], False, True
    args = typing.get_args(hint)
    if args and type(None) in args:
        return next(a for a in args if a is not type(None)), True, False
    return hint, False, False


def _emit_scalar(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_scalar(text: str, base, name: str):
    try:
        if base is bool:
            low = text.lower()
            if low not in ("true", "false"):
                raise ValueError(text)
            return low == "true"
        if base is int:
            return int(text)
        if base is float:
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"{name}: cannot read {text!r} as {base.__name__}") from None


def emit(cfg: RunConfig) -> str:
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            text = ", ".join(_emit_scalar(x) for x in v)
        else:
            text = _emit_scalar(v)
        lines.append(f"{f.name} = {text}")
    return "\n".join(lines) + "\n"


def parse(text: str, base: RunConfig | None = None) -> RunConfig:
    """Read config text; keys not mentioned keep their value in ``base`` (or the defaults)."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _HINTS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        typ, optional, is_list = _kind(key)
        if is_list:
            values[key] = tuple(_parse_scalar(x.strip(), typ, key) for x in val.split(",") if x.strip())
        elif optional and val.lower() == "none":
            values[key] = None
        else:
            values[key] = _parse_scalar(val, typ, key)
    base = base or RunConfig()
    try:
        return dataclasses.replace(base, **values)
    except TypeError as exc:  # pragma: no cover - keys are checked above
        raise ConfigError(str(exc)) from exc


def load(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse(text)


def dump(cfg: RunConfig, path) -> Path:
    path = Path(path)
    path.write_text(emit(cfg), encoding="utf-8")
    return path


PRESET_DEFAULTS: dict[str, dict] = {
    "oracle-check": {"qubits": (8,), "t_max": 100, "mode": NONE},
    "husimi-panel": {"qubits": (6, 9), "mode": STATIC, "coupling": 0.0, "t_max": 1000},
    "fidelity-trace": {
        "n_q": 9,
        "epsilons": (1e-5, 3e-5, 1e-4, 3e-4, 1e-3),
        "couplings": (1.0, 0.0),
        "t_max": 1000,
        "realizations": 1,
    },
    "tf-scaling": {"epsilons": (1e-5, 2e-5, 5e-5, 1e-4), "t_max": 5000},
    "classical-diffusion": {"t_max": 1000},
}


def preset_config(name: str, **overrides) -> RunConfig:
    """Defaults for ``name`` with ``overrides`` applied on top."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; expected one of {PRESETS}")
    values = dict(PRESET_DEFAULTS[name])
    values.update(overrides)
    return RunConfig(experiment=name, **values)
