"""Data-only scenario descriptions, their TOML file format and named signal registries.

A scenario file looks like::

    name = "example1"
    mode = "state_feedback"
    initial_state = [-1.0, 0.0, 1.0]

    [plant]
    n = 3
    a_coeffs = [0.0, 0.0, 0.0]
    c_coeffs = [1.0, 0.0, 0.0]
    disturbance = "zero"

    [controller]
    a = 1.0
    b = 1.0
    k = 6.0
    r = 1
    t_p = 6.0

    [sim]
    dt = 6e-4

Optional sections are ``[observer]`` (T, m0, r_vec, use_measured_output)
and ``[smc]`` (l_coeffs, boundary_layer).  Unknown keys are errors.
"""

import dataclasses
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np
import tomli
import tomli_w

from .errors import ConfigurationError, ParameterError, PTControlError
from .observer import ObserverParams
from .scalarmath import ShapeParams, TimeGain
from .sim import MODES, ClosedLoop, SimSettings, _zero_noise
from .smc import SmcParams
from .synthesis import CanonicalSystem, ControllerParams, _zero_disturbance

# --------------------------------------------------------------------------
# registries
# --------------------------------------------------------------------------
# Entries are small frozen dataclasses so they compare equal, pickle for the
# batch worker pool, and print back to the name they were parsed from.


@dataclass(frozen=True)
class Constant:
    c: float

    def __call__(self, *args):
        return self.c


@dataclass(frozen=True)
class Sinusoid:
    """amp * sin(freq * t) as a disturbance ``(x, t)`` or a noise ``(t)``."""

    amp: float
    freq: float

    def __call__(self, *args):
        return self.amp * math.sin(self.freq * args[-1])


@dataclass(frozen=True)
class LinearX1:
    gain: float

    def __call__(self, x, t):
        return self.gain * x[0]


@dataclass(frozen=True)
class Example3Disturbance:
    def __call__(self, x, t):
        return 0.03 * x[0] + 0.01 * math.sin(x[1]) + 0.02 * math.sin(2.0 * t)


@dataclass(frozen=True)
class AbsX1Bound:
    """gain * (|x_1| + offset)."""

    gain: float
    offset: float

    def __call__(self, x):
        return self.gain * (abs(x[0]) + self.offset)


DISTURBANCES = {
    "zero": (0, lambda: _zero_disturbance),
    "constant": (1, Constant),
    "sin": (2, Sinusoid),
    "linear_x1": (1, LinearX1),
    "example3_F": (0, Example3Disturbance),
}
BOUNDS = {
    "constant": (1, Constant),
    "abs_x1": (2, AbsX1Bound),
    "example3_dbar": (0, lambda: AbsX1Bound(0.03, 1.0)),
}
NOISES = {
    "zero": (0, lambda: _zero_noise),
    "constant": (1, Constant),
    "sin_noise": (2, Sinusoid),
}

_CALL = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*(?:\((.*)\))?\s*$")


def resolve_signal(spec, registry, path):
    """Turn ``"name"`` or ``"name(arg, ...)"`` into a callable from ``registry``."""
    m = _CALL.match(spec)
    if not m or m.group(1) not in registry:
        known = ", ".join(sorted(registry))
        raise ConfigurationError(f"unknown entry {spec!r} (known: {known})", path)
    arity, make = registry[m.group(1)]
    raw = m.group(2)
    args = [] if raw is None or not raw.strip() else [a.strip() for a in raw.split(",")]
    if len(args) != arity:
        raise ConfigurationError(f"{m.group(1)} takes {arity} argument(s), got {len(args)}", path)
    try:
        vals = [float(a) for a in args]
    except ValueError:
        raise ConfigurationError(f"arguments of {spec!r} must be numbers", path) from None
    if not all(math.isfinite(v) for v in vals):
        raise ConfigurationError(f"arguments of {spec!r} must be finite", path)
    return make(*vals)


# --------------------------------------------------------------------------
# scenario sections
# --------------------------------------------------------------------------


def _floats(v):
    return tuple(float(e) for e in v)


@dataclass(frozen=True)
class PlantSpec:
    n: int
    a_coeffs: tuple = None
    c_coeffs: tuple = None
    disturbance: str = "zero"
    disturbance_bound: Optional[str] = None
    noise: str = "zero"

    def __post_init__(self):
        n = self.n
        if self.a_coeffs is None:
            object.__setattr__(self, "a_coeffs", (0.0,) * n)
        if self.c_coeffs is None:
            object.__setattr__(self, "c_coeffs", (1.0,) + (0.0,) * (n - 1))


@dataclass(frozen=True)
class ControllerSpec:
    a: float
    b: float
    k: float
    r: int
    t_p: float
    post_k: float = 1.0


@dataclass(frozen=True)
class ObserverSpec:
    T: float
    m0: int
    r_vec: tuple
    use_measured_output: bool = False


@dataclass(frozen=True)
class SmcSpec:
    l_coeffs: tuple
    boundary_layer: float = 1e-3


@dataclass(frozen=True)
class SimSpec:
    dt: Optional[float] = None
    epsilon_stop: Optional[float] = None
    refine_factor: int = 16
    t_end: Optional[float] = None
    mu_max: Optional[float] = None
    observer_epsilon: Optional[float] = None


# expected python type per field; tuples are float vectors
_TYPES = {
    PlantSpec: {"n": int, "a_coeffs": tuple, "c_coeffs": tuple, "disturbance": str,
                "disturbance_bound": str, "noise": str},
    ControllerSpec: {"a": float, "b": float, "k": float, "r": int, "t_p": float, "post_k": float},
    ObserverSpec: {"T": float, "m0": int, "r_vec": tuple, "use_measured_output": bool},
    SmcSpec: {"l_coeffs": tuple, "boundary_layer": float},
    SimSpec: {"dt": float, "epsilon_stop": float, "refine_factor": int, "t_end": float,
              "mu_max": float, "observer_epsilon": float},
}


def _coerce(value, kind, path):
    if kind is bool:
        if isinstance(value, bool):
            return value
    elif kind is int:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
    elif kind is float:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
    elif kind is str:
        if isinstance(value, str):
            return value
    elif kind is tuple:
        if isinstance(value, list) and all(
            isinstance(e, (int, float)) and not isinstance(e, bool) for e in value
        ):
            return _floats(value)
        raise ConfigurationError("must be an array of numbers", path)
    raise ConfigurationError(f"must be of type {kind.__name__}, got {type(value).__name__}", path)


def _section(cls, table, path):
    if not isinstance(table, dict):
        raise ConfigurationError("must be a table", path)
    types = _TYPES[cls]
    unknown = sorted(set(table) - set(types))
    if unknown:
        raise ConfigurationError(f"unknown key {unknown[0]!r}", f"{path}.{unknown[0]}")
    required = [f.name for f in dataclasses.fields(cls)
                if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING]
    for name in required:
        if name not in table:
            raise ConfigurationError("is required", f"{path}.{name}")
    kwargs = {k: _coerce(v, types[k], f"{path}.{k}") for k, v in table.items()}
    return cls(**kwargs)


def _section_dict(obj):
    # None means "use the default" and TOML has no null
    return {f.name: list(v) if isinstance(v, tuple) else v
            for f in dataclasses.fields(obj)
            if (v := getattr(obj, f.name)) is not None}


# --------------------------------------------------------------------------
# scenario
# --------------------------------------------------------------------------

_TOP_KEYS = ("name", "mode", "initial_state", "initial_estimate",
             "plant", "controller", "observer", "smc", "sim")


@dataclass(frozen=True)
class Scenario:
    name: str
    mode: str
    plant: PlantSpec
    controller: ControllerSpec
    initial_state: tuple
    sim: SimSpec = field(default_factory=SimSpec)
    observer: Optional[ObserverSpec] = None
    smc: Optional[SmcSpec] = None
    initial_estimate: Optional[tuple] = None

    def with_overrides(self, dt=None, t_p=None):
        """Copy with the base step and/or prescribed time replaced."""
        out = self
        if dt is not None:
            out = dataclasses.replace(out, sim=dataclasses.replace(out.sim, dt=float(dt)))
        if t_p is not None:
            out = dataclasses.replace(
                out, controller=dataclasses.replace(out.controller, t_p=float(t_p))
            )
        return out

    def validate(self):
        """Check every parameter rule; errors name the offending field."""
        self.build().validate()

    def build(self, check=True):
        """Bind the data to library objects (a :class:`ClosedLoop`).

        With ``check=False`` the gain-admissibility rules (k > n and friends)
        are not enforced; constructor-level rules still are.
        """
        p = self.plant
        if self.mode not in MODES:
            raise ConfigurationError(f"must be one of {', '.join(MODES)}, got {self.mode!r}", "mode")
        if p.n < 1:
            raise ConfigurationError(f"must be >= 1, got {p.n}", "plant.n")
        for key in ("a_coeffs", "c_coeffs"):
            if len(getattr(p, key)) != p.n:
                raise ConfigurationError(f"must have plant.n={p.n} entries", f"plant.{key}")
        if len(self.initial_state) != p.n:
            raise ConfigurationError(f"must have plant.n={p.n} entries", "initial_state")
        if self.initial_estimate is not None and len(self.initial_estimate) != p.n:
            raise ConfigurationError(f"must have plant.n={p.n} entries", "initial_estimate")

        dist = resolve_signal(p.disturbance, DISTURBANCES, "plant.disturbance")
        bound = (None if p.disturbance_bound is None
                 else resolve_signal(p.disturbance_bound, BOUNDS, "plant.disturbance_bound"))
        noise = resolve_signal(p.noise, NOISES, "plant.noise")
        with _at("plant"):
            system = CanonicalSystem(p.n, p.a_coeffs, p.c_coeffs, dist, bound)

        c = self.controller
        with _at("controller"):
            shape = ShapeParams(c.a, c.b)
            if not (math.isfinite(c.t_p) and c.t_p > 0):
                raise ConfigurationError(f"must be positive, got {c.t_p}", "controller.t_p")
            cp = ControllerParams(shape, c.k, c.r, TimeGain(c.t_p), c.post_k)
        if check and c.r == 1 and not c.k > p.n:
            raise ConfigurationError(
                f"must exceed plant.n for r=1 (k > n is required for prescribed-time "
                f"convergence), got k={c.k}, n={p.n}",
                "controller.k",
            )

        observer = None
        if self.mode == "output_feedback":
            if self.observer is None:
                raise ConfigurationError("is required when mode = output_feedback", "observer")
            o = self.observer
            if len(o.r_vec) != p.n:
                raise ConfigurationError(f"must have plant.n={p.n} entries", "observer.r_vec")
            with _at("observer"):
                observer = ObserverParams(o.T, o.m0, o.r_vec)
            if check and o.T > c.t_p:
                raise ConfigurationError(
                    f"must not exceed controller.t_p={c.t_p}, got {o.T}", "observer.T"
                )

        smc = None
        if self.mode == "smc":
            if self.smc is None:
                raise ConfigurationError("is required when mode = smc", "smc")
            if bound is None:
                raise ConfigurationError("is required when mode = smc", "plant.disturbance_bound")
            if len(self.smc.l_coeffs) != p.n - 1:
                raise ConfigurationError(f"must have plant.n-1={p.n - 1} entries", "smc.l_coeffs")
            with _at("smc"):
                smc = SmcParams(cp, self.smc.l_coeffs, self.smc.boundary_layer)

        with _at("sim"):
            s = self.sim
            settings = SimSettings(s.dt, s.epsilon_stop, s.refine_factor, s.t_end, s.mu_max,
                                   s.observer_epsilon)
            settings.resolve(c.t_p, None if observer is None else observer.T)

        loop = ClosedLoop(
            system, self.mode, cp, settings, _floats_array(self.initial_state),
            observer=observer, smc=smc,
            xhat0=None if self.initial_estimate is None else _floats_array(self.initial_estimate),
            noise=noise,
            measured_output=bool(self.observer and self.observer.use_measured_output),
        )
        if check:
            with _at("controller"):
                loop.validate()
        return loop

    def to_dict(self):
        d = {"name": self.name, "mode": self.mode, "initial_state": list(self.initial_state)}
        if self.initial_estimate is not None:
            d["initial_estimate"] = list(self.initial_estimate)
        d["plant"] = _section_dict(self.plant)
        d["controller"] = _section_dict(self.controller)
        if self.observer is not None:
            d["observer"] = _section_dict(self.observer)
        if self.smc is not None:
            d["smc"] = _section_dict(self.smc)
        d["sim"] = _section_dict(self.sim)
        return d

    @classmethod
    def from_dict(cls, data):
        unknown = sorted(set(data) - set(_TOP_KEYS))
        if unknown:
            raise ConfigurationError(f"unknown key {unknown[0]!r}", unknown[0])
        for key in ("name", "mode", "initial_state", "plant", "controller"):
            if key not in data:
                raise ConfigurationError("is required", key)
        opt = {}
        if "initial_estimate" in data:
            opt["initial_estimate"] = _coerce(data["initial_estimate"], tuple, "initial_estimate")
        if "observer" in data:
            opt["observer"] = _section(ObserverSpec, data["observer"], "observer")
        if "smc" in data:
            opt["smc"] = _section(SmcSpec, data["smc"], "smc")
        if "sim" in data:
            opt["sim"] = _section(SimSpec, data["sim"], "sim")
        return cls(
            name=_coerce(data["name"], str, "name"),
            mode=_coerce(data["mode"], str, "mode"),
            plant=_section(PlantSpec, data["plant"], "plant"),
            controller=_section(ControllerSpec, data["controller"], "controller"),
            initial_state=_coerce(data["initial_state"], tuple, "initial_state"),
            **opt,
        )


def _floats_array(v):
    return np.array(v, dtype=np.float64)


class _at:
    """Re-raise library parameter errors as configuration errors under ``path``."""

    def __init__(self, path):
        self.path = path

    def __enter__(self):
        return self

    def __exit__(self, kind, exc, tb):
        if exc is None or isinstance(exc, ConfigurationError):
            return False
        if isinstance(exc, (ParameterError, PTControlError, ValueError)):
            raise ConfigurationError(str(exc), self.path) from exc
        return False


# --------------------------------------------------------------------------
# file I/O
# --------------------------------------------------------------------------


def parse_scenario(text, source="<string>", check=True):
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        # tomli's message already ends with "(at line L, column C)"
        raise ConfigurationError(f"parse error: {exc}", source) from None
    sc = Scenario.from_dict(data)
    sc.build(check=check)
    return sc


def load_scenario(path, check=True):
    """Read, parse and validate a scenario file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read file: {exc.strerror}", str(path)) from None
    return parse_scenario(text, str(path), check)


def dump_scenario(scenario):
    """TOML text that :func:`parse_scenario` turns back into an equal scenario."""
    return tomli_w.dumps(scenario.to_dict())


BUNDLED = ("example1", "example1_guas", "example2", "example2_noise", "example3")


def bundled_text(name):
    try:
        res = resources.files("ptcontrol.scenarios").joinpath(f"{name}.scenario")
        return res.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigurationError(
            f"no bundled scenario {name!r} (known: {', '.join(BUNDLED)})", "name"
        ) from None


def bundled_scenario(name):
    return parse_scenario(bundled_text(name), f"{name}.scenario")
