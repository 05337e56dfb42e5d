"""Experiment configuration: strict YAML parsing and validated defaults.

Unknown keys are rejected at every level, so a typo in a tolerance that
gates a scientific verdict fails the run instead of being silently ignored.

Top-level schema (all sections optional unless a subcommand needs them):

    name: free-decay                # run label
    seed: 1234                      # master seed for random test fields
    grid: {n: 32, l: 16.0}
    potential:
      kind: gaussian_bump           # gaussian_bump | compact_bump |
      params: [-1.0, 1.0, 0.3, 1.0] # coupled_well; see potentials module
    solver:
      tol_offaxis: 1.0e-10
      tol_limit: 1.0e-6
      eps0: 0.5
      iter_cap: 600
    quadrature:
      lambda_max: 25.0
      panels: [[0,1,24],[1,2,24],[2,3,24],[3,4,20],[4,5,16]]
      substitution: true
      eps_cut: 0.1
    spectral:
      sigma: 1.0
      count_hint: 6
      grids: [[10, 6.0], [12, 7.2], [14, 8.4]]
    decay:
      sigma: 3.0
      t_grid: [5, ..., 50]          # explicit list
      window: [5, 50]
      verdict_tol: 0.2
      route: free                   # free | direct | contour
      embed: 4
      dt: 0.1
      psi0: {kind: gaussian, width: 1.5}
    resolvent:
      queries: [{lambda: -1.0, eps: 0.0, k: 0, side: off_axis}]
    outputs: {dir: runs/free-decay}
"""

import dataclasses
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import yaml

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config"]


class ConfigError(ValueError):
    """Raised for malformed or unknown configuration input (exit code 2)."""


def _check_keys(d, allowed, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(d).__name__}")
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError(
            f"strict parse: unknown key(s) {sorted(unknown)} in {where}")


def _num(d, key, default, where, positive=False):
    v = d.get(key, default)
    try:
        v = float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}.{key}: expected a number")
    if not np.isfinite(v):
        raise ConfigError(f"{where}.{key}: must be finite")
    if positive and v <= 0:
        raise ConfigError(f"{where}.{key}: must be positive")
    return v


@dataclass(frozen=True)
class GridCfg:
    n: int = 16
    l: float = 8.0


@dataclass(frozen=True)
class PotentialCfg:
    kind: str = "gaussian_bump"
    params: Tuple[float, ...] = (-1.0, 1.0)


@dataclass(frozen=True)
class SolverCfg:
    tol_offaxis: float = 1e-10
    tol_limit: float = 1e-6
    eps0: float = 0.5
    iter_cap: int = 600


@dataclass(frozen=True)
class QuadratureCfg:
    lambda_max: float = 25.0
    panels: Tuple[Tuple[float, float, int], ...] = (
        (0.0, 1.0, 24), (1.0, 2.0, 24), (2.0, 3.0, 24),
        (3.0, 4.0, 20), (4.0, 5.0, 16))
    substitution: bool = True
    eps_cut: float = 0.1


@dataclass(frozen=True)
class SpectralCfg:
    sigma: float = 1.0
    count_hint: int = 6
    grids: Tuple[Tuple[int, float], ...] = ((10, 6.0), (12, 7.2), (14, 8.4))


@dataclass(frozen=True)
class Psi0Cfg:
    kind: str = "gaussian"
    width: float = 1.5


@dataclass(frozen=True)
class DecayCfg:
    sigma: float = 3.0
    t_grid: Tuple[float, ...] = ()
    window: Tuple[float, float] = (5.0, 50.0)
    verdict_tol: float = 0.2
    route: str = "free"
    embed: int = 4
    dt: float = 0.1
    psi0: Psi0Cfg = Psi0Cfg()


@dataclass(frozen=True)
class ResolventCfg:
    queries: Tuple[dict, ...] = ()


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "run"
    seed: int = 0
    grid: GridCfg = GridCfg()
    potential: Optional[PotentialCfg] = None
    solver: SolverCfg = SolverCfg()
    quadrature: QuadratureCfg = QuadratureCfg()
    spectral: SpectralCfg = SpectralCfg()
    decay: DecayCfg = DecayCfg()
    resolvent: ResolventCfg = ResolventCfg()
    out_dir: Optional[str] = None


_TOP_KEYS = ("name", "seed", "grid", "potential", "solver", "quadrature",
             "spectral", "decay", "resolvent", "outputs")


def parse_config(data):
    """Validate a plain dict (parsed YAML) into an ExperimentConfig."""
    if data is None:
        data = {}
    _check_keys(data, _TOP_KEYS, "config")

    g = data.get("grid", {})
    _check_keys(g, ("n", "l"), "grid")
    n = g.get("n", 16)
    if not isinstance(n, int) or n < 4 or n % 2:
        raise ConfigError("grid.n must be an even integer >= 4")
    grid = GridCfg(n=n, l=_num(g, "l", 8.0, "grid", positive=True))

    potential = None
    if "potential" in data and data["potential"] is not None:
        p = data["potential"]
        _check_keys(p, ("kind", "params"), "potential")
        kind = p.get("kind", "gaussian_bump")
        if kind not in ("gaussian_bump", "compact_bump", "coupled_well"):
            raise ConfigError(f"potential.kind: unknown kind {kind!r}")
        params = p.get("params", (-1.0, 1.0))
        if not isinstance(params, (list, tuple)) or not params:
            raise ConfigError("potential.params must be a non-empty list")
        potential = PotentialCfg(kind=kind,
                                 params=tuple(float(x) for x in params))

    s = data.get("solver", {})
    _check_keys(s, ("tol_offaxis", "tol_limit", "eps0", "iter_cap"), "solver")
    solver = SolverCfg(
        tol_offaxis=_num(s, "tol_offaxis", 1e-10, "solver", positive=True),
        tol_limit=_num(s, "tol_limit", 1e-6, "solver", positive=True),
        eps0=_num(s, "eps0", 0.5, "solver"),
        iter_cap=int(_num(s, "iter_cap", 600, "solver", positive=True)))

    q = data.get("quadrature", {})
    _check_keys(q, ("lambda_max", "panels", "substitution", "eps_cut"),
                "quadrature")
    panels = q.get("panels")
    if panels is not None:
        try:
            panels = tuple((float(a), float(b), int(m)) for a, b, m in panels)
        except (TypeError, ValueError):
            raise ConfigError("quadrature.panels must be [a, b, nodes] triples")
    else:
        panels = QuadratureCfg().panels
    quadrature = QuadratureCfg(
        lambda_max=_num(q, "lambda_max", 25.0, "quadrature", positive=True),
        panels=panels,
        substitution=bool(q.get("substitution", True)),
        eps_cut=_num(q, "eps_cut", 0.1, "quadrature", positive=True))

    sp = data.get("spectral", {})
    _check_keys(sp, ("sigma", "count_hint", "grids"), "spectral")
    spgrids = sp.get("grids")
    if spgrids is not None:
        try:
            spgrids = tuple((int(nn), float(ll)) for nn, ll in spgrids)
        except (TypeError, ValueError):
            raise ConfigError("spectral.grids must be [n, l] pairs")
    else:
        spgrids = SpectralCfg().grids
    spectral = SpectralCfg(
        sigma=_num(sp, "sigma", 1.0, "spectral", positive=True),
        count_hint=int(_num(sp, "count_hint", 6, "spectral", positive=True)),
        grids=spgrids)

    d = data.get("decay", {})
    _check_keys(d, ("sigma", "t_grid", "window", "verdict_tol", "route",
                    "embed", "dt", "psi0"), "decay")
    route = d.get("route", "free")
    if route not in ("free", "direct", "contour"):
        raise ConfigError(f"decay.route: unknown route {route!r}")
    t_grid = tuple(float(t) for t in d.get("t_grid", ()))
    window = d.get("window", (5.0, 50.0))
    if not (isinstance(window, (list, tuple)) and len(window) == 2):
        raise ConfigError("decay.window must be [t_min, t_max]")
    p0 = d.get("psi0", {})
    _check_keys(p0, ("kind", "width"), "decay.psi0")
    if p0.get("kind", "gaussian") != "gaussian":
        raise ConfigError("decay.psi0.kind: only 'gaussian' is supported")
    psi0 = Psi0Cfg(kind="gaussian",
                   width=_num(p0, "width", 1.5, "decay.psi0", positive=True))
    decay = DecayCfg(
        sigma=_num(d, "sigma", 3.0, "decay", positive=True),
        t_grid=t_grid,
        window=(float(window[0]), float(window[1])),
        verdict_tol=_num(d, "verdict_tol", 0.2, "decay", positive=True),
        route=route,
        embed=int(_num(d, "embed", 4, "decay", positive=True)),
        dt=_num(d, "dt", 0.1, "decay", positive=True),
        psi0=psi0)

    r = data.get("resolvent", {})
    _check_keys(r, ("queries",), "resolvent")
    queries = []
    for i, qd in enumerate(r.get("queries", ())):
        _check_keys(qd, ("lambda", "eps", "k", "side"), f"resolvent.queries[{i}]")
        queries.append({
            "lambda": _num(qd, "lambda", 0.0, f"resolvent.queries[{i}]"),
            "eps": _num(qd, "eps", 0.0, f"resolvent.queries[{i}]"),
            "k": int(_num(qd, "k", 0, f"resolvent.queries[{i}]")),
            "side": qd.get("side", "off_axis"),
        })
    resolvent = ResolventCfg(queries=tuple(queries))

    o = data.get("outputs", {})
    _check_keys(o, ("dir",), "outputs")
    out_dir = o.get("dir")

    seed = data.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed must be an integer")

    name = data.get("name", "run")
    if not isinstance(name, str):
        raise ConfigError("name must be a string")

    return ExperimentConfig(name=name, seed=seed, grid=grid,
                            potential=potential, solver=solver,
                            quadrature=quadrature, spectral=spectral,
                            decay=decay, resolvent=resolvent,
                            out_dir=out_dir)


def load_config(path):
    """Parse a YAML config file into an ExperimentConfig."""
    with open(path) as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML: {exc}")
    return parse_config(data)


def config_dict(cfg):
    """Canonical plain-dict form of a config (for hashing and manifests)."""
    return dataclasses.asdict(cfg)
