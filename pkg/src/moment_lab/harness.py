"""Experiment orchestration: configuration, engines, output files, verify suites."""
from __future__ import annotations

import copy
import csv
import io
import json
import logging
import math
import os
from fractions import Fraction
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .classical import FrequencyProfile, SystemParams, solve_classical, uniform_steps
from .errors import ConfigError, NumericalGuardError
from .gaussian import GaussianState, PotentialSpec, evolve_gaussian, gaussian_moments
from .moments import (MomentSeries, MomentState, closed_form_evolution,
                      ermakov_invariant, evolve_layers, higher_invariant, invariant_scale, uncertainty_product,
                      verify_closed_form)
from .oracle import (GRID_DOMAIN_DEFAULT, GRID_N_DEFAULT, ORACLE_N_MAX, GridWavefunction,
                     grid_moments, init_gaussian, run_oracle)
from .weyl import SL2Triple, casimir, commutator, verify_ladder, WeylElement

logger = logging.getLogger(__name__)

ENGINES = ("hierarchy", "closed_form", "gaussian", "pde")
FORMATS = ("csv", "json")
DEFAULT_OUT = "moment_lab_out"


@dataclass
class SimulationConfig:
    params: SystemParams
    potential: PotentialSpec
    initial: object  # GaussianState | MomentState | GridWavefunction
    t0: float
    t1: float
    dt: float
    n_max: int
    sample_stride: int
    engines: list
    out_dir: str | None = None
    formats: list = field(default_factory=lambda: ["csv"])
    pde_grid: tuple = (GRID_DOMAIN_DEFAULT[0], GRID_DOMAIN_DEFAULT[1], GRID_N_DEFAULT)
    pde_dt: float | None = None
    seed: int = 0
    raw: dict = field(default_factory=dict)

    @property
    def interval(self):
        return self.t0, self.t1


def _get(d, key, default=None, *, where=""):
    if key in d:
        return d[key]
    if default is None:
        raise ConfigError(f"{where}{key} is required")
    return default


def _num(v, name):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{name} must be a finite number, got {v!r}")
    return float(v)


def parse_config(raw: dict, *, base_dir: Path | str = ".", allow_inverted: bool = False) -> SimulationConfig:
    """Validate a configuration mapping; raises ``ConfigError`` naming the offending key."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    base_dir = Path(base_dir)
    system = raw.get("system", {})
    params = SystemParams(_num(system.get("m", 1.0), "system.m"),
                          _num(system.get("hbar", 1.0), "system.hbar"))

    pot_raw = _get(raw, "potential", where="")
    prof_raw = _get(pot_raw, "profile", where="potential.")
    allow = allow_inverted or bool(pot_raw.get("allow_inverted", False))
    profile = FrequencyProfile.from_dict(prof_raw, allow_inverted=allow)
    potential = PotentialSpec(profile, _num(pot_raw.get("V0", 0.0), "potential.V0"),
                              _num(pot_raw.get("V4", 0.0), "potential.V4"))

    run = _get(raw, "run", where="")
    t0 = _num(run.get("t0", 0.0), "run.t0")
    t1 = _num(_get(run, "t1", where="run."), "run.t1")
    dt = _num(_get(run, "dt", where="run."), "run.dt")
    if not dt > 0:
        raise ConfigError("run.dt must be positive")
    if not t1 > t0:
        raise ConfigError("run.t1 must exceed run.t0")
    n_max = run.get("n_max", 4)
    stride = run.get("sample_stride", 1)
    if not isinstance(n_max, int) or not 0 <= n_max <= 12:
        raise ConfigError("run.n_max must be an integer in [0, 12]")
    if not isinstance(stride, int) or stride < 1:
        raise ConfigError("run.sample_stride must be a positive integer")

    engines = raw.get("engines", ["hierarchy"])
    if not isinstance(engines, list) or not engines:
        raise ConfigError("engines must be a non-empty list")
    for e in engines:
        if e not in ENGINES:
            raise ConfigError(f"unknown engine {e!r}; choose from {ENGINES}")

    init_raw = _get(raw, "initial", where="")
    pde_raw = raw.get("pde", {})
    grid = (_num(pde_raw.get("x_min", GRID_DOMAIN_DEFAULT[0]), "pde.x_min"),
            _num(pde_raw.get("x_max", GRID_DOMAIN_DEFAULT[1]), "pde.x_max"),
            pde_raw.get("N", GRID_N_DEFAULT))
    if "gaussian" in init_raw:
        g = init_raw["gaussian"]
        try:
            initial = GaussianState(float(g["q"]), float(g["p"]), float(g["alpha"]), float(g["beta"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"initial.gaussian needs numeric q, p, alpha, beta ({exc})") from exc
    elif "moments" in init_raw:
        layers = init_raw["moments"]
        try:
            initial = MomentState([np.asarray(l, dtype=float) for l in layers])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"initial.moments malformed: {exc}") from exc
        if initial.n_max < n_max:
            raise ConfigError(f"initial.moments has n_max={initial.n_max} < run.n_max={n_max}")
        initial = MomentState(initial.layers[:n_max + 1])
    elif "wavefunction" in init_raw:
        path = base_dir / init_raw["wavefunction"]
        if not path.exists():
            raise ConfigError(f"initial.wavefunction file {path} does not exist")
        initial = load_wavefunction(path)
    else:
        raise ConfigError("initial must contain one of: gaussian, moments, wavefunction")

    harmonic_only = {"hierarchy", "closed_form"} & set(engines)
    if potential.V4 != 0 and harmonic_only:
        raise ConfigError(f"engines {sorted(harmonic_only)} require V4 = 0 (harmonic potential)")
    if "gaussian" in engines and not isinstance(initial, GaussianState):
        raise ConfigError("engine 'gaussian' requires initial.gaussian")
    if "pde" in engines and isinstance(initial, MomentState):
        raise ConfigError("engine 'pde' requires a gaussian or wavefunction initial state")
    if ({"pde", "gaussian"} & set(engines) or isinstance(initial, GridWavefunction)) and n_max > ORACLE_N_MAX:
        raise ConfigError(f"run.n_max must be <= {ORACLE_N_MAX} for gaussian/pde engines")

    pde_dt = pde_raw.get("dt")
    if pde_dt is not None:
        pde_dt = _num(pde_dt, "pde.dt")
        if not pde_dt > 0:
            raise ConfigError("pde.dt must be positive")
        ratio = dt * stride / pde_dt
        if abs(ratio - round(ratio)) > 1e-9 * ratio:
            raise ConfigError("pde.dt must divide run.dt * run.sample_stride")

    out = raw.get("output", {})
    formats = out.get("formats", ["csv"])
    for f in formats:
        if f not in FORMATS:
            raise ConfigError(f"unknown output format {f!r}")
    return SimulationConfig(params, potential, initial, t0, t1, dt, n_max, stride, list(engines),
                            out.get("directory"), list(formats), grid, pde_dt,
                            int(raw.get("seed", 0)), copy.deepcopy(raw))


def load_config(path, *, allow_inverted: bool = False) -> SimulationConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(raw, base_dir=path.parent, allow_inverted=allow_inverted)


def load_wavefunction(path) -> GridWavefunction:
    """Read an ``.npz`` holding ``x_min``, ``x_max`` and complex ``psi``."""
    try:
        with np.load(path) as f:
            return GridWavefunction(float(f["x_min"]), float(f["x_max"]), np.asarray(f["psi"], dtype=complex))
    except (KeyError, OSError, ValueError) as exc:
        raise ConfigError(f"cannot read wavefunction file {path}: {exc}") from exc


def save_wavefunction(path, w: GridWavefunction):
    np.savez(path, x_min=w.x_min, x_max=w.x_max, psi=w.psi)


# --- engines -----------------------------------------------------------------

def initial_moments(cfg: SimulationConfig) -> MomentState:
    init = cfg.initial
    if isinstance(init, GaussianState):
        return gaussian_moments(init, cfg.params, cfg.n_max)
    if isinstance(init, GridWavefunction):
        return grid_moments(init, cfg.params, cfg.n_max)
    return init


def run_engine(name: str, cfg: SimulationConfig) -> MomentSeries:
    prof = cfg.potential.omega_profile
    if name == "hierarchy":
        return evolve_layers(initial_moments(cfg), prof, cfg.params, cfg.interval, cfg.dt, cfg.sample_stride)
    if name == "closed_form":
        pair = solve_classical(prof, cfg.params, cfg.interval, cfg.dt)
        times = pair.times[::cfg.sample_stride]
        return closed_form_evolution(initial_moments(cfg), pair, cfg.params.m, times)
    if name == "gaussian":
        gs = evolve_gaussian(cfg.initial, cfg.potential, cfg.params, cfg.interval, cfg.dt, cfg.sample_stride)
        return gs.moments(cfg.params, cfg.n_max)
    if name == "pde":
        if isinstance(cfg.initial, GaussianState):
            w0 = init_gaussian(cfg.initial, cfg.pde_grid, cfg.params)
        else:
            w0 = cfg.initial
        dt, _ = uniform_steps(cfg.interval, cfg.dt)
        pde_dt = cfg.pde_dt or dt
        stride = int(round(dt * cfg.sample_stride / pde_dt))
        return run_oracle(w0, cfg.potential, cfg.params, cfg.interval, pde_dt, stride, cfg.n_max).series
    raise ConfigError(f"unknown engine {name!r}")


# --- output ------------------------------------------------------------------

def columns(n_max: int) -> list[str]:
    """Column names; derivable from ``n_max`` alone."""
    cols = ["t"] + [f"O_{n}_{l}" for n in range(n_max + 1) for l in range(n + 1)]
    if n_max >= 2:
        cols += ["C", "Delta"]
    cols += [f"C{n}" for n in (2, 4, 6) if n <= n_max]
    return cols


def column_units(n_max: int) -> list[str]:
    units = ["time"]
    for n in range(n_max + 1):
        for l in range(n + 1):
            units.append(f"length^{n - l}*momentum^{l}")
    if n_max >= 2:
        units += ["action^2", "action^2"]
    units += [f"action^{n}" for n in (2, 4, 6) if n <= n_max]
    return units


def table(series: MomentSeries) -> np.ndarray:
    n = series.n_max
    cols = [series.times[:, None], series.flat()]
    if n >= 2:
        cols.append(ermakov_invariant(series.layer(2))[:, None])
        cols.append(uncertainty_product(series)[:, None])
    for k in (2, 4, 6):
        if k <= n:
            cols.append(higher_invariant(series.layer(k))[:, None])
    return np.hstack(cols)


def _fmt(v: float) -> str:
    return repr(float(v))


def write_series(path: Path, series: MomentSeries, meta: dict):
    n = series.n_max
    buf = io.StringIO()
    for k in sorted(meta):
        buf.write(f"# {k}: {json.dumps(meta[k], sort_keys=True)}\n")
    buf.write(f"# units: {json.dumps(dict(zip(columns(n), column_units(n))))}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns(n))
    for row in table(series):
        w.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue(), encoding="utf-8")


def read_series(path) -> tuple[list[str], np.ndarray]:
    lines = [l for l in Path(path).read_text(encoding="utf-8").splitlines() if not l.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], np.array(rows[1:], dtype=float)


def compare(results: dict) -> dict:
    """Max absolute deviation per column for each engine pair."""
    names = sorted(results)
    report = {"pairs": {}, "max_deviation": 0.0}
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            ta, tb = table(results[a]), table(results[b])
            n = min(results[a].n_max, results[b].n_max)
            ca, cb = columns(results[a].n_max), columns(results[b].n_max)
            common = [c for c in columns(n) if c != "t"]
            if ta.shape[0] != tb.shape[0] or not np.allclose(ta[:, 0], tb[:, 0], rtol=0, atol=1e-9):
                raise ConfigError(f"engines {a} and {b} sampled at different times")
            dev = {c: float(np.max(np.abs(ta[:, ca.index(c)] - tb[:, cb.index(c)]))) for c in common}
            report["pairs"][f"{a}-vs-{b}"] = dev
            report["max_deviation"] = max(report["max_deviation"], max(dev.values()))
    return report


def resolve_out_dir(cli_out: str | None, cfg: SimulationConfig | None) -> Path:
    if cli_out:
        return Path(cli_out)
    if cfg is not None and cfg.out_dir:
        return Path(cfg.out_dir)
    return Path(os.environ.get("MOMENT_LAB_OUT", DEFAULT_OUT))


def execute(cfg: SimulationConfig, out_dir: Path, threads: int = 1) -> dict:
    """Run every selected engine and write results; returns the comparison report (or {})."""
    out_dir.mkdir(parents=True, exist_ok=True)
    if threads > 1 and len(cfg.engines) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {e: pool.submit(run_engine, e, cfg) for e in cfg.engines}
            results = {e: f.result() for e, f in futures.items()}
    else:
        results = {e: run_engine(e, cfg) for e in cfg.engines}
    for name in cfg.engines:
        meta = {"engine": name, "code_version": __version__, "config": cfg.raw}
        write_series(out_dir / f"{name}.csv", results[name], meta)
        if "json" in cfg.formats:
            side = dict(meta, columns=columns(results[name].n_max),
                        units=column_units(results[name].n_max), rows=len(results[name]))
            (out_dir / f"{name}.json").write_text(json.dumps(side, indent=2, sort_keys=True) + "\n",
                                                  encoding="utf-8")
    report = {}
    if len(cfg.engines) >= 2:
        report = compare(results)
        (out_dir / "comparison.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n",
                                                 encoding="utf-8")
    return report


def set_dotted(raw: dict, key: str, value):
    parts = key.split(".")
    d = raw
    for p in parts[:-1]:
        d = d.setdefault(p, {})
        if not isinstance(d, dict):
            raise ConfigError(f"cannot set {key}: {p} is not an object")
    d[parts[-1]] = value


# --- verify suites -----------------------------------------------------------

@dataclass
class Case:
    name: str
    value: float
    tol: float
    passed: bool
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f"  {self.detail}" if self.detail else ""
        return f"[{status}] {self.name}: {self.value:.3e} (tol {self.tol:.1e}){extra}"


def profile_matrix() -> dict:
    return {
        "constant": FrequencyProfile.constant(1.0),
        "sinusoidal": FrequencyProfile.sinusoidal(1.0, 0.3, 2.0),
        "piecewise": FrequencyProfile.piecewise([(0.0, 1.0), (5.0, 2.0)]),
    }


SQUEEZED = GaussianState(1.0, 0.5, 0.5, 0.3)


def suite_algebra(n_max: int = 8) -> list[Case]:
    t = SL2Triple.standard()
    ih = WeylElement.scalar(1j, 1)
    cases = []
    for name, res in (("[D,x2] = -2ih x2", commutator(t.D, t.x2) + 2 * ih * t.x2),
                      ("[D,p2] = +2ih p2", commutator(t.D, t.p2) - 2 * ih * t.p2),
                      ("[x2,p2] = +4ih D", commutator(t.x2, t.p2) - 4 * ih * t.D)):
        cases.append(Case(name, len(res), 0, not res, "" if not res else str(res)))
    res = casimir(t) + WeylElement.scalar(Fraction(3, 4), 2)
    cases.append(Case("Casimir = -3h^2/4", len(res), 0, not res))
    for n in range(n_max + 1):
        for l in range(n + 1):
            rep = verify_ladder(n, l)
            bad = rep.failures()
            cases.append(Case(f"ladder n={n} l={l}", len(bad), 0, not bad,
                              "; ".join(f"{k}: {v}" for k, v in bad.items())))
    return cases


def suite_closed_form(n_max: int = 6, t1: float = 10.0, dt: float = 1e-3) -> list[Case]:
    params = SystemParams()
    cases = []
    for pname, prof in profile_matrix().items():
        pair = solve_classical(prof, params, (0.0, t1), dt)
        for n in range(n_max + 1):
            rep = verify_closed_form(n, prof, params, (0.0, t1), pair=pair)
            l, r = rep.worst() if rep.residuals else (0, 0)
            cases.append(Case(f"closed-form residual {pname} n={n}", rep.max_residual, 1e-6,
                              rep.max_residual < 1e-6, f"(profile={pname}, n={n}, l={l}, r={r})"))
        init = gaussian_moments(SQUEEZED, params, n_max)
        hier = evolve_layers(init, prof, params, (0.0, t1), dt, stride=10)
        cf = closed_form_evolution(init, pair, params.m, hier.times)
        for n in range(n_max + 1):
            scale = max(1.0, float(np.max(np.abs(hier.layer(n)))))
            dev = float(np.max(np.abs(cf.layer(n) - hier.layer(n)))) / scale
            cases.append(Case(f"reconstruction vs RK4 {pname} n={n}", dev, 1e-7, dev < 1e-7,
                              f"(profile={pname}, n={n})"))
    return cases


def suite_invariants(t1: float = 10.0, dt: float = 1e-3) -> list[Case]:
    params = SystemParams()
    cases = []
    init = gaussian_moments(SQUEEZED, params, 6)
    # skew the odd layers so they are non-trivial
    init = MomentState([l.values * (1 + 0.1 * l.n) if l.n else l.values for l in init.layers])
    for pname, prof in profile_matrix().items():
        s = evolve_layers(init, prof, params, (0.0, t1), dt, stride=10)
        c = ermakov_invariant(s.layer(2))
        drift = float(np.max(np.abs(c - c[0])) / abs(c[0]))
        cases.append(Case(f"C drift {pname}", drift, 1e-7, drift < 1e-7))
        for n in range(1, 7):
            cn = higher_invariant(s.layer(n))
            if n % 2:
                v = float(np.max(np.abs(cn) / invariant_scale(s.layer(n))))
                cases.append(Case(f"C{n} vanishes {pname}", v, 1e-13, v < 1e-13))
            else:
                drift = float(np.max(np.abs(cn - cn[0])) / abs(cn[0]))
                cases.append(Case(f"C{n} drift {pname}", drift, 1e-7, drift < 1e-7))
    return cases


def suite_oracle(grid_n: int = GRID_N_DEFAULT, pde_dt: float = 1e-4, t1: float = 10.0,
                 n_max: int = 4) -> list[Case]:
    params = SystemParams()
    cases = []
    for pname, prof in profile_matrix().items():
        pot = PotentialSpec(prof)
        try:
            w0 = init_gaussian(SQUEEZED, (GRID_DOMAIN_DEFAULT[0], GRID_DOMAIN_DEFAULT[1], grid_n), params)
            run = run_oracle(w0, pot, params, (0.0, t1), pde_dt, int(round(0.1 / pde_dt)), n_max)
        except NumericalGuardError as exc:
            cases.append(Case(f"oracle run {pname}", float("nan"), 0, False, str(exc)))
            continue
        hier = evolve_layers(gaussian_moments(SQUEEZED, params, n_max), prof, params, (0.0, t1), 1e-3,
                             stride=100)
        for n in range(n_max + 1):
            dev = float(np.max(np.abs(run.series.layer(n) - hier.layer(n))))
            cases.append(Case(f"pde vs hierarchy {pname} n={n}", dev, 1e-5, dev < 1e-5,
                              f"(profile={pname}, n={n})"))
        gap = float(np.min(uncertainty_product(run.series)) - params.hbar ** 2 / 4)
        cases.append(Case(f"Delta - hbar^2/4 {pname}", gap, -1e-9, gap >= -1e-9))
        cases.append(Case(f"norm drift {pname}", run.norm_drift, 1e-10, run.norm_drift < 1e-10))
    return cases


SUITES = {
    "algebra": suite_algebra,
    "closed-form": suite_closed_form,
    "invariants": suite_invariants,
    "oracle": suite_oracle,
}
