"""Time-indexed setpoint and disturbance schedules, constraint sets and the
scenario file format.

A scenario file is a single YAML document with setpoints, disturbances,
bounds, constraints, reward selection and oracle settings. Schedules may
be given as plain arrays of length T or as a list of
``{value: v, steps: n}`` segments that are expanded in order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import yaml

from .errors import ConfigurationError
from .models import ModelDescriptor

SENSES = ("<=", ">=")


@dataclass(frozen=True)
class SetpointSchedule:
    """Target value per step for each controlled state, in schedule order."""

    targets: dict[str, np.ndarray]
    T: int

    @classmethod
    def create(cls, targets: Mapping[str, Sequence[float]], T: int,
               model: ModelDescriptor) -> "SetpointSchedule":
        out: dict[str, np.ndarray] = {}
        for name, values in targets.items():
            if name not in model.state_names:
                raise ConfigurationError(
                    "setpoints", f"{name!r} is not a state of model {model.name!r}")
            arr = np.asarray(values, dtype=float)
            if arr.shape != (T,):
                raise ConfigurationError(
                    "setpoints", f"schedule for {name!r} has length {arr.size}, expected {T}")
            if not np.all(np.isfinite(arr)):
                raise ConfigurationError("setpoints", f"schedule for {name!r} is not finite")
            out[name] = arr
        return cls(targets=out, T=T)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self.targets)

    def setpoint_at(self, t: int) -> dict[str, float]:
        if not 0 <= t < self.T:
            raise IndexError(f"step index {t} outside [0, {self.T})")
        return {name: float(arr[t]) for name, arr in self.targets.items()}


@dataclass(frozen=True)
class DisturbanceSchedule:
    """Scheduled disturbance values plus bounds that extend the observation."""

    values: dict[str, np.ndarray]
    bounds: dict[str, tuple[float, float]]
    T: int

    @classmethod
    def create(cls, values: Mapping[str, Sequence[float]] | None,
               bounds: Mapping[str, Sequence[float]] | None,
               T: int, model: ModelDescriptor) -> "DisturbanceSchedule":
        values = dict(values or {})
        bounds = dict(bounds or {})
        for name in list(values) + list(bounds):
            if name not in model.disturbance_names:
                raise ConfigurationError(
                    "disturbances",
                    f"{name!r} is not a disturbance of model {model.name!r} "
                    f"(has: {list(model.disturbance_names)})")
        vals: dict[str, np.ndarray] = {}
        for name, seq in values.items():
            arr = np.asarray(seq, dtype=float)
            if arr.shape != (T,):
                raise ConfigurationError(
                    "disturbances", f"schedule for {name!r} has length {arr.size}, expected {T}")
            if not np.all(np.isfinite(arr)):
                raise ConfigurationError("disturbances", f"schedule for {name!r} is not finite")
            vals[name] = arr
        bnds: dict[str, tuple[float, float]] = {}
        for name, pair in bounds.items():
            lo, hi = float(pair[0]), float(pair[1])
            if not lo < hi:
                raise ConfigurationError(
                    "disturbance_bounds", f"{name!r} bounds must satisfy low < high")
            bnds[name] = (lo, hi)
        for name, (lo, hi) in bnds.items():
            arr = vals.get(name)
            if arr is not None and (arr.min() < lo or arr.max() > hi):
                raise ConfigurationError(
                    "disturbances", f"scheduled values for {name!r} leave bounds [{lo}, {hi}]")
        return cls(values=vals, bounds=bnds, T=T)

    @property
    def bounded_names(self) -> tuple[str, ...]:
        return tuple(self.bounds)

    def disturbance_at(self, model: ModelDescriptor, t: int) -> np.ndarray:
        """Full disturbance vector at step t; unscheduled names take defaults."""
        if not 0 <= t < self.T:
            raise IndexError(f"step index {t} outside [0, {self.T})")
        return np.array([
            float(self.values[n][t]) if n in self.values else model.default_disturbances[n]
            for n in model.disturbance_names
        ])


def disturbance_at(schedule: DisturbanceSchedule, model: ModelDescriptor,
                   t: int) -> np.ndarray:
    return schedule.disturbance_at(model, t)


def setpoint_at(schedule: SetpointSchedule, t: int) -> dict[str, float]:
    return schedule.setpoint_at(t)


@dataclass(frozen=True)
class Constraint:
    state: str
    bound: float
    sense: str  # "<=" or ">="


@dataclass(frozen=True)
class ConstraintSet:
    """Scalar state constraints; g(x) > 0 means violated."""

    constraints: tuple[Constraint, ...]
    _indices: tuple[int, ...] = field(default=(), repr=False)

    @classmethod
    def create(cls, constraints: Sequence[Constraint | Mapping],
               model: ModelDescriptor) -> "ConstraintSet":
        parsed: list[Constraint] = []
        indices: list[int] = []
        for c in constraints:
            if isinstance(c, Mapping):
                c = Constraint(state=str(c["state"]), bound=float(c["bound"]),
                               sense=str(c["sense"]))
            if c.sense not in SENSES:
                raise ConfigurationError("constraints", f"sense must be one of {SENSES}")
            if c.state not in model.state_names:
                raise ConfigurationError(
                    "constraints", f"{c.state!r} is not a state of model {model.name!r}")
            parsed.append(c)
            indices.append(model.state_names.index(c.state))
        return cls(constraints=tuple(parsed), _indices=tuple(indices))

    def __len__(self) -> int:
        return len(self.constraints)

    def values(self, x: np.ndarray) -> np.ndarray:
        """Constraint function g(x), one entry per constraint; positive = violated.

        Vectorized over leading axes of x.
        """
        x = np.asarray(x, dtype=float)
        if len(self.constraints) == 0:
            return np.zeros(x.shape[:-1] + (0,))
        cols = []
        for c, i in zip(self.constraints, self._indices):
            if c.sense == "<=":
                cols.append(x[..., i] - c.bound)
            else:
                cols.append(c.bound - x[..., i])
        return np.stack(cols, axis=-1)


def constraint_values(cs: ConstraintSet, x) -> np.ndarray:
    return cs.values(x)


# ---------------------------------------------------------------------------
# Scenario files
# ---------------------------------------------------------------------------

@dataclass
class Scenario:
    """Parsed scenario document (plain data, validated on environment build)."""

    name: str
    model: str
    T: int
    tsim: float
    x0: np.ndarray
    a_space: tuple[np.ndarray, np.ndarray]
    o_space: tuple[np.ndarray, np.ndarray]
    setpoints: dict[str, np.ndarray]
    noise_percentage: float = 0.0
    disturbances: dict[str, np.ndarray] = field(default_factory=dict)
    disturbance_bounds: dict[str, tuple[float, float]] = field(default_factory=dict)
    constraints: list[Constraint] = field(default_factory=list)
    reward: dict = field(default_factory=dict)
    integrator: dict = field(default_factory=dict)
    oracle: dict = field(default_factory=dict)
    path: str | None = None
    document: dict = field(default_factory=dict)


def _expand_schedule(entry, T: int, where: str) -> np.ndarray:
    """A schedule is either a flat list of T numbers or value/steps segments."""
    if isinstance(entry, (list, tuple)) and entry and isinstance(entry[0], Mapping):
        values: list[float] = []
        for seg in entry:
            values.extend([float(seg["value"])] * int(seg["steps"]))
        arr = np.asarray(values, dtype=float)
    else:
        arr = np.asarray(entry, dtype=float)
    if arr.shape != (T,):
        raise ConfigurationError(where, f"schedule expands to length {arr.size}, expected {T}")
    return arr


def _space(doc, key: str) -> tuple[np.ndarray, np.ndarray]:
    try:
        spec = doc[key]
        low = np.asarray(spec["low"], dtype=float)
        high = np.asarray(spec["high"], dtype=float)
    except (KeyError, TypeError) as exc:
        raise ConfigurationError(key, f"missing or malformed: {exc}") from exc
    return low, high


def parse_scenario(doc: dict, path: str | None = None) -> Scenario:
    for key in ("name", "model", "T", "tsim", "x0", "action_space",
                "observation_space", "setpoints"):
        if key not in doc:
            raise ConfigurationError(key, "missing from scenario document")
    T = int(doc["T"])
    if T < 1:
        raise ConfigurationError("T", "step count must be >= 1")
    setpoints = {str(k): _expand_schedule(v, T, f"setpoints.{k}")
                 for k, v in doc["setpoints"].items()}
    disturbances = {str(k): _expand_schedule(v, T, f"disturbances.{k}")
                    for k, v in (doc.get("disturbances") or {}).items()}
    bounds = {str(k): (float(v[0]), float(v[1]))
              for k, v in (doc.get("disturbance_bounds") or {}).items()}
    constraints = [Constraint(state=str(c["state"]), bound=float(c["bound"]),
                              sense=str(c["sense"]))
                   for c in (doc.get("constraints") or [])]
    return Scenario(
        name=str(doc["name"]),
        model=str(doc["model"]),
        T=T,
        tsim=float(doc["tsim"]),
        x0=np.asarray(doc["x0"], dtype=float),
        a_space=_space(doc, "action_space"),
        o_space=_space(doc, "observation_space"),
        setpoints=setpoints,
        noise_percentage=float(doc.get("noise_percentage", 0.0)),
        disturbances=disturbances,
        disturbance_bounds=bounds,
        constraints=constraints,
        reward=dict(doc.get("reward") or {}),
        integrator=dict(doc.get("integrator") or {}),
        oracle=dict(doc.get("oracle") or {}),
        path=path,
        document=doc,
    )


def load_scenario(path: str | Path) -> Scenario:
    """Load a scenario YAML file from disk or by bundled name."""
    p = Path(path)
    if not p.exists() and p.suffix == "" and str(p) == p.name:
        return load_bundled_scenario(p.name)
    doc = yaml.safe_load(p.read_text())
    if not isinstance(doc, dict):
        raise ConfigurationError("scenario", f"{path}: not a mapping document")
    return parse_scenario(doc, path=str(p))


def bundled_scenarios() -> tuple[str, ...]:
    names = []
    for ref in resources.files("procbench.data.scenarios").iterdir():
        if ref.name.endswith(".yaml"):
            names.append(ref.name[:-5])
    return tuple(sorted(names))


def load_bundled_scenario(name: str) -> Scenario:
    ref = resources.files("procbench.data.scenarios").joinpath(f"{name}.yaml")
    try:
        text = ref.read_text()
    except FileNotFoundError:
        raise ConfigurationError(
            "scenario",
            f"no bundled scenario {name!r}; available: {', '.join(bundled_scenarios())}")
    return parse_scenario(yaml.safe_load(text), path=f"bundled:{name}")
