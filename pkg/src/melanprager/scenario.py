"""Problem definitions, the run driver, the 0D driver and convergence studies.

Scenarios are TOML files with the sections ``mesh``, ``material``,
``time``, ``data``, ``initial`` and ``output``.  Data fields are sums of
separable terms ``amplitude * time_factor(t) * space_factor(x)``::

    [[data.traction]]
    amplitude = [0.0, 0.05]
    time = { kind = "sinusoid", freq = 1.0 }
    space = { kind = "side", sides = ["right"] }

Time factors: ``constant``, ``linear`` (``c0 + c1 t``), ``polynomial``
(``coeffs``), ``ramp`` (``t0, t1, v0, v1``, clamped), ``sinusoid``
(``offset + amplitude sin(2 pi freq t + phase)``) and ``piecewise_linear``
(``times, values``).  Space factors: ``uniform``, ``linear`` (``c + grad.x``),
``box`` (``lower, upper, inside, outside``; piecewise constant) and
``side`` (indicator of named sides of the bounding box).

Vector amplitudes have ``d`` entries, tensor amplitudes are full symmetric
``d x d`` lists, yield bounds are scalars.  ``g = "unbounded"`` (the
default) switches the plastic constraint off.
"""
from __future__ import annotations

import csv
import logging
import time as _time
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from .constitutive import return_map
from .fem import DofMap, field_norm_S_sq, field_norm_sq, load_vector, time_average, velocity_inner
from .mesh import TRACTION, Mesh, load_mesh, unit_square_mesh, write_vtk
from .monitor import EnergyLedger, aggregate, initial_row, record_step
from .step import State, StepData, Stepper, constraint_excess, trace_drift
from .tensor import MaterialParams, apply_C, deviator, dim_of, frobenius_weights, ncomp, norm, pack

__all__ = [
    "ScenarioError",
    "Scenario",
    "ProblemData",
    "RunResult",
    "MaterialPointResult",
    "ConvergenceTable",
    "load_scenario",
    "save_scenario",
    "builtin_scenarios",
    "resolve_scenario",
    "run",
    "material_point",
    "compare_runs",
    "converge",
]

log = logging.getLogger(__name__)

DATA_KEYS = {"F": "vector", "traction": "vector", "h": "tensor", "g": "scalar"}
INITIAL_KEYS = {"v0": "vector", "sigma0": "tensor", "alpha0": "tensor"}
SIDE_NAMES = ("left", "right", "bottom", "top", "front", "back")
ALIASES = {"flagship": "shear-yield"}


class ScenarioError(ValueError):
    """Malformed or inconsistent scenario input."""


# -- analytic descriptors ----------------------------------------------------

_TIME_PARAMS = {
    "constant": {},
    "linear": {"c0": 0.0, "c1": 1.0},
    "polynomial": {"coeffs": None},
    "ramp": {"t0": 0.0, "t1": 1.0, "v0": 0.0, "v1": 1.0},
    "sinusoid": {"freq": 1.0, "phase": 0.0, "amplitude": 1.0, "offset": 0.0},
    "piecewise_linear": {"times": None, "values": None},
}
_SPACE_PARAMS = {
    "uniform": {},
    "linear": {"c": 0.0, "grad": None},
    "box": {"lower": None, "upper": None, "inside": 1.0, "outside": 0.0},
    "side": {"sides": None, "tol": 1e-9},
}


def _normalize_factor(desc, table, what):
    if desc is None:
        desc = {"kind": next(iter(table))}
    if not isinstance(desc, dict) or "kind" not in desc:
        raise ScenarioError(f"{what} factor must be a table with a 'kind' key")
    kind = desc["kind"]
    if kind not in table:
        raise ScenarioError(f"unknown {what} kind {kind!r}; choose from {sorted(table)}")
    unknown = set(desc) - set(table[kind]) - {"kind"}
    if unknown:
        raise ScenarioError(f"unexpected keys {sorted(unknown)} for {what} kind {kind!r}")
    out = {"kind": kind}
    for key, default in table[kind].items():
        value = desc.get(key, default)
        if value is None:
            raise ScenarioError(f"{what} kind {kind!r} requires {key!r}")
        out[key] = value
    return out


def _time_function(desc):
    kind = desc["kind"]
    if kind == "constant":
        return lambda t: 1.0
    if kind == "linear":
        return lambda t: desc["c0"] + desc["c1"] * t
    if kind == "polynomial":
        coeffs = np.asarray(desc["coeffs"], dtype=float)[::-1]
        return lambda t: float(np.polyval(coeffs, t))
    if kind == "ramp":
        t0, t1, v0, v1 = (float(desc[k]) for k in ("t0", "t1", "v0", "v1"))
        if not t1 > t0:
            raise ScenarioError("ramp requires t1 > t0")
        return lambda t: v0 + (v1 - v0) * min(max((t - t0) / (t1 - t0), 0.0), 1.0)
    if kind == "sinusoid":
        f, ph, amp, off = (float(desc[k]) for k in ("freq", "phase", "amplitude", "offset"))
        return lambda t: off + amp * np.sin(2.0 * np.pi * f * t + ph)
    if kind == "piecewise_linear":
        ts = np.asarray(desc["times"], dtype=float)
        vs = np.asarray(desc["values"], dtype=float)
        if ts.shape != vs.shape or ts.size < 2 or np.any(np.diff(ts) <= 0):
            raise ScenarioError("piecewise_linear needs increasing times and matching values")
        return lambda t: float(np.interp(t, ts, vs))
    raise AssertionError(kind)


def _space_function(desc, dim):
    kind = desc["kind"]
    if kind == "uniform":
        return lambda x: np.ones(len(x))
    if kind == "linear":
        grad = np.asarray(desc["grad"], dtype=float)
        if grad.shape != (dim,):
            raise ScenarioError(f"linear space factor needs a gradient with {dim} entries")
        return lambda x: desc["c"] + x @ grad
    if kind == "box":
        lo, hi = np.asarray(desc["lower"], dtype=float), np.asarray(desc["upper"], dtype=float)
        if lo.shape != (dim,) or hi.shape != (dim,):
            raise ScenarioError(f"box corners need {dim} entries")
        inside, outside = float(desc["inside"]), float(desc["outside"])
        return lambda x: np.where(np.all((x >= lo) & (x <= hi), axis=1), inside, outside)
    if kind == "side":
        sides = desc["sides"]
        sides = [sides] if isinstance(sides, str) else list(sides)
        bad = set(sides) - set(SIDE_NAMES[: 2 * dim])
        if bad:
            raise ScenarioError(f"unknown side(s) {sorted(bad)}")
        tol = float(desc["tol"])

        def indicator(x, lo=None, hi=None):
            hit = np.zeros(len(x), dtype=bool)
            for s in sides:
                axis, upper = divmod(SIDE_NAMES.index(s), 2)
                target = indicator.hi[axis] if upper else indicator.lo[axis]
                hit |= np.abs(x[:, axis] - target) <= tol
            return hit.astype(float)

        indicator.lo, indicator.hi = np.zeros(dim), np.ones(dim)
        return indicator
    raise AssertionError(kind)


def _normalize_amplitude(value, kind, dim, where):
    if kind == "scalar":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ScenarioError(f"{where}: amplitude must be a number")
        if value < 0:
            raise ScenarioError(f"{where}: yield bound amplitude must be non-negative")
        return float(value)
    arr = np.asarray(value, dtype=float)
    if kind == "vector":
        if arr.shape != (dim,):
            raise ScenarioError(f"{where}: amplitude must have {dim} entries")
        return [float(x) for x in arr]
    if arr.shape != (dim, dim):
        raise ScenarioError(f"{where}: tensor amplitude must be a {dim}x{dim} list")
    if not np.allclose(arr, arr.T, rtol=0, atol=0):
        raise ScenarioError(f"{where}: tensor amplitude must be symmetric")
    return [[float(x) for x in row] for row in arr]


def _normalize_terms(terms, kind, dim, where):
    if kind == "scalar" and terms == "unbounded":
        return "unbounded"
    if isinstance(terms, dict):
        terms = [terms]
    if not isinstance(terms, list):
        raise ScenarioError(f"{where} must be a list of terms")
    out = []
    for k, term in enumerate(terms):
        if not isinstance(term, dict) or "amplitude" not in term:
            raise ScenarioError(f"{where}[{k}] needs an 'amplitude'")
        extra = set(term) - {"amplitude", "time", "space"}
        if extra:
            raise ScenarioError(f"{where}[{k}]: unexpected keys {sorted(extra)}")
        out.append({
            "amplitude": _normalize_amplitude(term["amplitude"], kind, dim, f"{where}[{k}]"),
            "time": _normalize_factor(term.get("time"), _TIME_PARAMS, "time"),
            "space": _normalize_factor(term.get("space"), _SPACE_PARAMS, "space"),
        })
    return out


class Field:
    """Evaluable sum of separable terms (see module docstring)."""

    def __init__(self, terms, kind: str, dim: int, bounds=None):
        self.kind = kind
        self.dim = dim
        self.terms = []
        for term in _normalize_terms(list(terms), kind, dim, "field"):
            amp = term["amplitude"]
            if kind == "tensor":
                amp = pack(np.asarray(amp, dtype=float))
            space = _space_function(term["space"], dim)
            if bounds is not None and hasattr(space, "lo"):
                space.lo, space.hi = bounds
            self.terms.append((np.asarray(amp, dtype=float), _time_function(term["time"]), space))

    @property
    def width(self) -> int:
        return {"scalar": 1, "vector": self.dim, "tensor": ncomp(self.dim)}[self.kind]

    def __call__(self, t: float, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros((len(x), self.width))
        for amp, tf, sf in self.terms:
            out += np.reshape(amp, (1, -1)) * (tf(t) * sf(x))[:, None]
        return out[:, 0] if self.kind == "scalar" else out


# -- scenario ----------------------------------------------------------------


@dataclass
class Scenario:
    """Validated problem definition; descriptors stay in plain-data form."""

    name: str
    mesh: dict
    material: MaterialParams
    T: float
    N: int
    data: dict
    initial: dict
    output: dict = field(default_factory=dict)
    base_dir: Path | None = field(default=None, compare=False, repr=False)

    @property
    def dt(self) -> float:
        return self.T / self.N

    @classmethod
    def from_dict(cls, raw: dict, base_dir=None) -> "Scenario":
        raw = dict(raw)
        unknown = set(raw) - {"name", "mesh", "material", "time", "data", "initial", "output"}
        if unknown:
            raise ScenarioError(f"unknown top-level keys {sorted(unknown)}")
        for section in ("mesh", "material", "time"):
            if section not in raw:
                raise ScenarioError(f"missing [{section}] section")
        mesh = _normalize_mesh(raw["mesh"])
        dim = 2 if mesh["kind"] == "unit_square" else int(raw["material"].get("dim", 2))
        mat = dict(raw["material"])
        missing = {"E", "nu", "eta", "a"} - set(mat)
        if missing:
            raise ScenarioError(f"[material] is missing {sorted(missing)}")
        extra = set(mat) - {"E", "nu", "eta", "a", "dim"}
        if extra:
            raise ScenarioError(f"[material] has unknown keys {sorted(extra)}")
        try:
            material = MaterialParams(float(mat["E"]), float(mat["nu"]), float(mat["eta"]),
                                      float(mat["a"]), dim)
        except ValueError as exc:
            raise ScenarioError(f"[material]: {exc}") from None
        tsec = raw["time"]
        try:
            T, N = float(tsec["T"]), int(tsec["N"])
        except (KeyError, TypeError, ValueError):
            raise ScenarioError("[time] needs numeric 'T' and integer 'N'") from None
        if not T > 0 or N < 1:
            raise ScenarioError("[time] requires T > 0 and N >= 1")

        data_raw = dict(raw.get("data", {}))
        bad = set(data_raw) - set(DATA_KEYS)
        if bad:
            raise ScenarioError(f"[data] has unknown fields {sorted(bad)}; expected {sorted(DATA_KEYS)}")
        data = {k: _normalize_terms(data_raw.get(k, []), kind, dim, f"data.{k}")
                for k, kind in DATA_KEYS.items()}
        if data["g"] == []:
            data["g"] = "unbounded"
        init_raw = dict(raw.get("initial", {}))
        bad = set(init_raw) - set(INITIAL_KEYS)
        if bad:
            raise ScenarioError(f"[initial] has unknown fields {sorted(bad)}")
        initial = {k: _normalize_terms(init_raw.get(k, []), kind, dim, f"initial.{k}")
                   for k, kind in INITIAL_KEYS.items()}
        output = _normalize_output(raw.get("output", {}))
        return cls(str(raw.get("name", "scenario")), mesh, material, T, N, data, initial, output,
                   Path(base_dir) if base_dir is not None else None)

    def to_dict(self) -> dict:
        p = self.material
        material = {"E": p.youngs, "nu": p.poisson, "eta": p.viscosity, "a": p.hardening}
        if self.mesh["kind"] != "unit_square":
            material["dim"] = p.dim
        data = {k: v for k, v in self.data.items() if v != []}
        initial = {k: v for k, v in self.initial.items() if v != []}
        return {
            "name": self.name,
            "mesh": dict(self.mesh),
            "material": material,
            "time": {"T": self.T, "N": self.N},
            "data": data,
            "initial": initial,
            "output": dict(self.output),
        }

    def with_steps(self, N: int) -> "Scenario":
        return replace(self, N=int(N))

    def build_mesh(self) -> Mesh:
        if self.mesh["kind"] == "unit_square":
            return unit_square_mesh(self.mesh["nx"], self.mesh["ny"], self.mesh["gamma1"], self.mesh["pattern"])
        path = Path(self.mesh["path"])
        if not path.is_absolute() and self.base_dir is not None:
            path = self.base_dir / path
        if not path.exists():
            raise ScenarioError(f"mesh file {path} not found")
        return load_mesh(path)


def _normalize_mesh(raw):
    if not isinstance(raw, dict):
        raise ScenarioError("[mesh] must be a table")
    kind = raw.get("kind", "unit_square")
    if kind == "unit_square":
        extra = set(raw) - {"kind", "nx", "ny", "gamma1", "pattern"}
        if extra:
            raise ScenarioError(f"[mesh] has unknown keys {sorted(extra)}")
        try:
            nx, ny = int(raw.get("nx", 8)), int(raw.get("ny", raw.get("nx", 8)))
        except (TypeError, ValueError):
            raise ScenarioError("[mesh] nx and ny must be integers") from None
        if nx < 1 or ny < 1:
            raise ScenarioError("[mesh] nx and ny must be at least 1")
        gamma1 = raw.get("gamma1", "left")
        pattern = raw.get("pattern", "crossed")
        if pattern not in ("crossed", "alternating"):
            raise ScenarioError(f"[mesh] unknown pattern {pattern!r}")
        return {"kind": kind, "nx": nx, "ny": ny, "gamma1": gamma1, "pattern": pattern}
    if kind == "file":
        if "path" not in raw:
            raise ScenarioError("[mesh] kind 'file' needs a 'path'")
        return {"kind": kind, "path": str(raw["path"])}
    raise ScenarioError(f"unknown mesh kind {kind!r}")


def _normalize_output(raw):
    if not isinstance(raw, dict):
        raise ScenarioError("[output] must be a table")
    extra = set(raw) - {"snapshots", "vtk", "energy_csv"}
    if extra:
        raise ScenarioError(f"[output] has unknown keys {sorted(extra)}")
    snaps = [float(t) for t in raw.get("snapshots", [])]
    return {"snapshots": snaps, "vtk": bool(raw.get("vtk", True)), "energy_csv": bool(raw.get("energy_csv", True))}


def _to_toml_ready(obj):
    # TOML has no null; floats such as inf are native
    if isinstance(obj, dict):
        return {k: _to_toml_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_toml_ready(v) for v in obj]
    return obj


def load_scenario(path) -> Scenario:
    path = Path(path)
    if not path.is_file():
        raise ScenarioError(f"scenario file {path} not found")
    try:
        raw = tomli.loads(path.read_text())
    except tomli.TOMLDecodeError as exc:
        raise ScenarioError(f"{path}: {exc}") from None
    return Scenario.from_dict(raw, base_dir=path.parent)


def save_scenario(scenario: Scenario, path) -> None:
    Path(path).write_text(tomli_w.dumps(_to_toml_ready(scenario.to_dict())))


def builtin_scenarios() -> list[str]:
    root = resources.files("melanprager") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def resolve_scenario(name_or_path) -> Scenario:
    """Load a scenario file, or a shipped scenario by name."""
    path = Path(str(name_or_path))
    if path.is_file():
        return load_scenario(path)
    name = ALIASES.get(str(name_or_path), str(name_or_path))
    if name in builtin_scenarios():
        ref = resources.files("melanprager") / "scenarios" / f"{name}.toml"
        with resources.as_file(ref) as p:
            return load_scenario(p)
    raise ScenarioError(f"no scenario file or built-in scenario named {name!r}")


# -- spatial data ------------------------------------------------------------


def _cell_average(fn, mesh: Mesh, t):
    """Cell averages of ``fn(t, x)`` with a degree-2 simplex rule."""
    x = mesh.vertices[mesh.cells]
    if mesh.dim == 2:
        pts = [(x[:, i] + x[:, j]) / 2 for i, j in ((0, 1), (1, 2), (2, 0))]
    else:
        a, b = 0.5854101966249685, 0.1381966011250105
        pts = [a * x[:, i] + b * (x.sum(axis=1) - x[:, i]) for i in range(4)]
    return sum(np.asarray(fn(t, pt)) for pt in pts) / len(pts)


class ProblemData:
    """Data of a scenario discretized on a mesh."""

    def __init__(self, scenario: Scenario, mesh: Mesh, dofmap: DofMap | None = None):
        d = mesh.dim
        self.scenario = scenario
        self.mesh = mesh
        self.dofmap = dofmap if dofmap is not None else DofMap.from_mesh(mesh)
        bounds = (mesh.vertices.min(axis=0), mesh.vertices.max(axis=0))

        def make(terms, kind):
            return Field(terms, kind, d, bounds) if terms not in ([], "unbounded") else None

        self.F = make(scenario.data["F"], "vector")
        self.traction = make(scenario.data["traction"], "vector")
        self.h = make(scenario.data["h"], "tensor")
        self.g = make(scenario.data["g"], "scalar")
        self.v0 = make(scenario.initial["v0"], "vector")
        self.sigma0 = make(scenario.initial["sigma0"], "tensor")
        self.alpha0 = make(scenario.initial["alpha0"], "tensor")
        self.centroids = mesh.centroids
        facets = mesh.facets(TRACTION)
        self.traction_points = mesh.vertices[facets].mean(axis=1) if len(facets) else np.zeros((0, d))

    def yield_bound(self, t: float) -> np.ndarray:
        if self.g is None:
            return np.full(self.mesh.n_cells, np.inf)
        return self.g(t, self.centroids)

    def slab(self, t0: float, t1: float) -> StepData:
        mesh, m = self.mesh, ncomp(self.mesh.dim)
        body = time_average(lambda t: self.F(t, self.centroids), t0, t1) if self.F else None
        trac = None
        if self.traction is not None and len(self.traction_points):
            trac = time_average(lambda t: self.traction(t, self.traction_points), t0, t1)
        load = load_vector(mesh, self.dofmap, body, trac)
        if self.h is not None:
            h = time_average(lambda t: self.h(t, self.centroids), t0, t1)
        else:
            h = np.zeros((mesh.n_cells, m))
        return StepData(t0=t0, t1=t1, load=load, h=h, g=self.yield_bound(t1))

    def initial_state(self) -> State:
        mesh, m = self.mesh, ncomp(self.mesh.dim)
        v0 = np.zeros(self.dofmap.ndof)
        if self.v0 is not None:
            v0 = self.v0(0.0, mesh.vertices).reshape(-1)
            v0[self.dofmap.constrained] = 0.0
        sigma0 = _cell_average(self.sigma0, mesh, 0.0) if self.sigma0 else np.zeros((mesh.n_cells, m))
        alpha0 = _cell_average(self.alpha0, mesh, 0.0) if self.alpha0 else np.zeros((mesh.n_cells, m))
        g0 = self.yield_bound(0.0)
        excess = constraint_excess(sigma0, alpha0, g0)
        if np.any(excess > 1e-10):
            cell = int(np.argmax(excess))
            raise ScenarioError(f"initial stress is not admissible: cell {cell} exceeds the yield bound "
                                f"by {excess[cell]:.3e} (relative)")
        return State.initial(v0, sigma0, alpha0, g0)


# -- driver ------------------------------------------------------------------


@dataclass
class RunResult:
    scenario: Scenario
    mesh: Mesh
    params: MaterialParams
    dt: float
    times: np.ndarray
    final: State
    ledger: EnergyLedger
    v: np.ndarray | None = None
    sigma: np.ndarray | None = None
    alpha: np.ndarray | None = None
    files: list = field(default_factory=list)
    max_constraint_excess: float = -np.inf
    max_trace_drift: float = 0.0
    cg_iterations: int = 0
    wall_time: float = 0.0

    def summary(self) -> dict:
        return aggregate(self.ledger)


def _utilization(state: State) -> np.ndarray:
    dev = norm(deviator(state.sigma - state.alpha))
    g = state.g
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(np.isinf(g), 0.0, np.where(g > 0, dev / g, 1.0))
    return ratio


def _write_snapshot(path, mesh, state: State):
    write_vtk(
        path, mesh,
        point_data={"velocity": state.v.reshape(mesh.n_vertices, mesh.dim)},
        cell_data={"sigma": state.sigma, "alpha": state.alpha, "utilization": _utilization(state)},
        title=f"t={state.t:.6g}",
    )


def run(scenario: Scenario, output_dir=None, keep_history: bool = True, progress=None,
        mesh: Mesh | None = None) -> RunResult:
    """Advance a scenario through all ``N`` steps.

    Writes the energy CSV and VTK snapshots into ``output_dir`` when one is
    given.  ``progress`` is called as ``progress(n, state, row)`` after
    every step.  Raises :class:`ScenarioError` for inadmissible initial
    data, and propagates solver failures and constraint violations.
    """
    start = _time.perf_counter()
    mesh = mesh if mesh is not None else scenario.build_mesh()
    params = scenario.material
    if params.dim != mesh.dim:
        raise ScenarioError(f"material dimension {params.dim} does not match mesh dimension {mesh.dim}")
    dt = scenario.dt
    problem = ProblemData(scenario, mesh)
    stepper = Stepper(mesh, params, dt, problem.dofmap)
    state = problem.initial_state()
    ledger = EnergyLedger(params, dt)
    ledger.append(initial_row(mesh, params, state))

    N = scenario.N
    times = dt * np.arange(N + 1)
    hist_v = hist_s = hist_a = None
    if keep_history:
        hist_v = np.empty((N + 1,) + state.v.shape)
        hist_s = np.empty((N + 1,) + state.sigma.shape)
        hist_a = np.empty((N + 1,) + state.alpha.shape)
        hist_v[0], hist_s[0], hist_a[0] = state.v, state.sigma, state.alpha

    out_dir = Path(output_dir) if output_dir is not None else None
    files = []
    snap_steps = {}
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        if scenario.output.get("vtk", True):
            for t in scenario.output.get("snapshots", []):
                snap_steps.setdefault(int(round(min(max(t, 0.0), scenario.T) / dt)), t)
            if 0 in snap_steps:
                files.append(out_dir / "snapshot_0000.vtk")
                _write_snapshot(files[-1], mesh, state)

    worst_excess, worst_drift, iterations = -np.inf, 0.0, 0
    for n in range(1, N + 1):
        data = problem.slab(times[n - 1], times[n])
        new = stepper.advance(state, data, step=n)
        iterations += stepper.last_iterations
        row = record_step(mesh, params, dt, n, state, new, data)
        ledger.append(row)
        worst_excess = max(worst_excess, float(np.max(constraint_excess(new.sigma, new.alpha, new.g))))
        worst_drift = max(worst_drift, trace_drift(state, new))
        state = new
        if keep_history:
            hist_v[n], hist_s[n], hist_a[n] = state.v, state.sigma, state.alpha
        if n in snap_steps:
            files.append(out_dir / f"snapshot_{n:04d}.vtk")
            _write_snapshot(files[-1], mesh, state)
        if progress is not None:
            progress(n, state, row)

    if out_dir is not None and scenario.output.get("energy_csv", True):
        files.append(out_dir / "energy.csv")
        ledger.to_csv(files[-1])
    return RunResult(
        scenario=scenario, mesh=mesh, params=params, dt=dt, times=times, final=state, ledger=ledger,
        v=hist_v, sigma=hist_s, alpha=hist_a, files=files, max_constraint_excess=worst_excess,
        max_trace_drift=worst_drift, cg_iterations=iterations, wall_time=_time.perf_counter() - start,
    )


# -- material point ----------------------------------------------------------


@dataclass
class MaterialPointResult:
    """Time series of the 0D driver; tensors are packed."""

    params: MaterialParams
    t: np.ndarray
    strain: np.ndarray
    sigma: np.ndarray
    sigma_star: np.ndarray
    alpha: np.ndarray
    xi: np.ndarray
    g: np.ndarray
    plastic: np.ndarray

    def to_csv(self, path) -> None:
        m = self.sigma.shape[1]
        names = ["t"] + [f"{q}_{k}" for q in ("strain", "sigma", "alpha", "xi") for k in range(m)]
        names += ["g", "plastic"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names)
            for n in range(len(self.t)):
                vals = [self.t[n], *self.strain[n], *self.sigma[n], *self.alpha[n], *self.xi[n], self.g[n]]
                w.writerow([repr(float(x)) for x in vals] + [int(self.plastic[n])])


def material_point(params: MaterialParams, path, g, N: int, T: float = 1.0,
                   sigma0=None, alpha0=None) -> MaterialPointResult:
    """Drive one material point with a prescribed strain-rate path.

    ``path(t)`` returns the packed tensor ``E(v) + h`` at time ``t``; its
    slab averages feed the trial stress ``sigma_{n-1} + dt C(...)``
    before the return map.  ``g`` is a number or a function of time.
    """
    m = ncomp(params.dim)
    dt = T / N
    g_fn = g if callable(g) else (lambda t, _g=float(g): _g)
    sigma = np.zeros(m) if sigma0 is None else np.asarray(sigma0, dtype=float)
    alpha = np.zeros(m) if alpha0 is None else np.asarray(alpha0, dtype=float)
    if constraint_excess(sigma, alpha, g_fn(0.0)) > 1e-10:
        raise ScenarioError("initial stress is not admissible")
    t = dt * np.arange(N + 1)
    out = {k: np.zeros((N + 1, m)) for k in ("strain", "sigma", "sigma_star", "alpha", "xi")}
    gs = np.zeros(N + 1)
    plastic = np.zeros(N + 1, dtype=bool)
    out["sigma"][0], out["sigma_star"][0], out["alpha"][0], gs[0] = sigma, sigma, alpha, g_fn(0.0)
    for n in range(1, N + 1):
        rate = time_average(path, t[n - 1], t[n])
        sigma_star = sigma + dt * apply_C(params, rate)
        gs[n] = g_fn(t[n])
        rm = return_map(params, dt, sigma_star, alpha, gs[n])
        sigma, alpha = rm.sigma, rm.alpha
        out["strain"][n] = out["strain"][n - 1] + dt * rate
        out["sigma"][n], out["sigma_star"][n], out["alpha"][n], out["xi"][n] = sigma, sigma_star, alpha, rm.xi
        plastic[n] = bool(rm.plastic)
    return MaterialPointResult(params, t, out["strain"], out["sigma"], out["sigma_star"], out["alpha"],
                               out["xi"], gs, plastic)


@dataclass(frozen=True)
class YieldEvents:
    """Yield points of a forward-reverse material-point history.

    Stresses are deviatoric and packed.  ``reverse_gap`` is the Frobenius
    distance between the stress at the load reversal and the stress at
    which the reversed loading yields again.
    """

    forward_yield: np.ndarray
    reversal: np.ndarray
    reverse_yield: np.ndarray
    reversal_step: int
    reverse_yield_step: int

    @property
    def reverse_gap(self) -> float:
        return float(norm(self.reversal - self.reverse_yield))


def _elastic_crossing(sigma_prev, sigma_star, alpha, g):
    """Point on the segment ``sigma_prev -> sigma_star`` where the yield surface is hit."""
    x0 = deviator(sigma_prev - alpha)
    dx = deviator(sigma_star - sigma_prev)
    # |x0 + s dx|^2 = g^2, root in [0, 1]
    A, B, C = float(np.sum(_w(dx) * dx * dx)), float(np.sum(_w(dx) * x0 * dx)), float(np.sum(_w(dx) * x0 * x0)) - g * g
    s = 1.0 if A == 0 else (-B + np.sqrt(max(B * B - A * C, 0.0))) / A
    return deviator(sigma_prev + min(max(s, 0.0), 1.0) * (sigma_star - sigma_prev))


def _w(a):
    return frobenius_weights(dim_of(a))


def yield_events(res: MaterialPointResult) -> YieldEvents:
    """Locate first yield, the load reversal and the reverse yield point.

    The reversal is the first step whose strain increment points against
    the previous one.  Yield points are interpolated linearly inside the
    step that first becomes plastic, using the elastic trial segment, so
    they carry no ``O(dt)`` bias from the step boundaries.
    """
    inc = np.diff(res.strain, axis=0)
    turn = np.flatnonzero(np.sum(_w(inc) * inc[1:] * inc[:-1], axis=1) < 0)
    plastic = np.flatnonzero(res.plastic)
    if not len(plastic) or not len(turn):
        raise ValueError("history has no plastic step or no load reversal")
    n_rev = int(turn[0]) + 1  # last step before the increments reverse
    n_fwd = int(plastic[0])
    later = plastic[plastic > n_rev]
    if n_fwd > n_rev or not len(later):
        raise ValueError("history does not yield both before and after the reversal")
    n_back = int(later[0])
    fwd = _elastic_crossing(res.sigma[n_fwd - 1], res.sigma_star[n_fwd], res.alpha[n_fwd - 1], res.g[n_fwd])
    back = _elastic_crossing(res.sigma[n_back - 1], res.sigma_star[n_back], res.alpha[n_back - 1], res.g[n_back])
    return YieldEvents(fwd, deviator(res.sigma[n_rev]), back, n_rev, n_back)


def scenario_material_point(scenario: Scenario) -> MaterialPointResult:
    """0D run of a scenario: its ``h`` and ``g`` sampled at the origin."""
    d = scenario.material.dim
    origin = np.zeros((1, d))
    h = Field(scenario.data["h"], "tensor", d) if scenario.data["h"] else None
    g = Field(scenario.data["g"], "scalar", d) if scenario.data["g"] != "unbounded" else None
    s0 = Field(scenario.initial["sigma0"], "tensor", d)(0.0, origin)[0]
    a0 = Field(scenario.initial["alpha0"], "tensor", d)(0.0, origin)[0]
    path = (lambda t: h(t, origin)[0]) if h is not None else (lambda t: np.zeros(ncomp(d)))
    g_fn = (lambda t: float(g(t, origin)[0])) if g is not None else np.inf
    return material_point(scenario.material, path, g_fn, scenario.N, scenario.T, s0, a0)


__all__ += ["scenario_material_point", "YieldEvents", "yield_events"]


# -- convergence -------------------------------------------------------------


def compare_runs(coarse: RunResult, fine: RunResult) -> dict:
    """Discrete ``L2(0,T)`` differences at the coarse time levels.

    ``fine`` must use an integer multiple of the coarse step count.  The
    velocity is measured in L2, the stress in the compliance norm and the
    backstress in the Frobenius ``L2`` norm, each weighted by the coarse
    ``dt`` and summed over ``t_1 .. t_N``.
    """
    if coarse.v is None or fine.v is None:
        raise ValueError("runs need stored histories")
    nc, nf = len(coarse.times) - 1, len(fine.times) - 1
    if nf % nc:
        raise ValueError("fine step count must be a multiple of the coarse one")
    r = nf // nc
    mesh, p, dt = coarse.mesh, coarse.params, coarse.dt
    dv = ds = da = 0.0
    for k in range(1, nc + 1):
        ev = coarse.v[k] - fine.v[r * k]
        dv += velocity_inner(mesh, ev, ev)
        ds += field_norm_S_sq(mesh, p, coarse.sigma[k] - fine.sigma[r * k])
        da += field_norm_sq(mesh, coarse.alpha[k] - fine.alpha[r * k])
    return {"diff_v": float(np.sqrt(dt * dv)), "diff_sigma": float(np.sqrt(dt * ds)),
            "diff_alpha": float(np.sqrt(dt * da))}


CONVERGENCE_COLUMNS = ("level", "dt", "diff_v", "diff_sigma", "diff_alpha", "sigma_gap")


@dataclass
class ConvergenceTable:
    """One row per time-step level; differences compare a level with the next."""

    rows: list

    def column(self, name) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=CONVERGENCE_COLUMNS)
            w.writeheader()
            for r in self.rows:
                w.writerow({k: (r[k] if k == "level" else repr(float(r[k]))) for k in CONVERGENCE_COLUMNS})


def converge(scenario: Scenario, levels: int, progress=None) -> ConvergenceTable:
    """Run ``levels`` step counts ``N, 2N, 4N, ...`` and tabulate differences.

    Row ``l`` holds ``dt_l``, the differences between levels ``l`` and
    ``l + 1`` (NaN on the last row) and the stress gap of level ``l``.
    """
    if levels < 2:
        raise ScenarioError("a convergence study needs at least two levels")
    mesh = scenario.build_mesh()
    rows, prev = [], None
    for level in range(levels):
        res = run(scenario.with_steps(scenario.N * 2**level), mesh=mesh)
        if prev is not None:
            rows[-1].update(compare_runs(prev, res))
        rows.append({"level": level, "dt": res.dt, "diff_v": np.nan, "diff_sigma": np.nan,
                     "diff_alpha": np.nan, "sigma_gap": res.summary()["sigma_gap"]})
        if progress is not None:
            progress(level, res)
        prev = res
    return ConvergenceTable(rows)
