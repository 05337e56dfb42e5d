"""Command-line orchestration: config ingestion, experiment subcommands,
persistence, and machine-readable outputs.

Every subcommand writes its outputs (JSON summaries, CSV series, MSF1
snapshots) plus a run manifest listing each emitted file with a SHA-256
checksum, the config hash, per-stage reports, and wall-clock times.  All
randomness flows from the single config seed through a splittable
generator, and numeric output is formatted with repr so identical
(config, seed, version) runs are byte-identical.

Exit codes: 0 ok, 2 config error, 3 solver failure, 4 verdict fail.
"""

import dataclasses
import hashlib
import json
import os
import sys
import time

import click
import numpy as np

from . import __version__
from .config import ConfigError, config_dict, load_config
from .decay import decay_series, fit_power_law
from .grid import (Field, WeightedNormSpec, make_grid, set_fft_workers,
                   weighted_norm, write_field)
from .operators import OperatorHandle, random_bump
from .potentials import builtin_potential, validate_decay
from .propagator import QuadratureSpec, evolve_contour, evolve_direct, \
    evolve_free
from .resolvent import ResolventQuery, asymptotic_probe, free_apply, \
    limiting_absorption, perturbed_direct
from .spectral import discrete_spectrum, spectral_condition_check

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_VERDICT = 4


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _json_default(o):
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if dataclasses.is_dataclass(o):
        return dataclasses.asdict(o)
    raise TypeError(f"not JSON serializable: {type(o)}")


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(x) if isinstance(x, float) else str(x)
                              for x in row) + "\n")


class RunContext:
    """Collects stage reports and emitted files for the run manifest."""

    def __init__(self, cfg, out_dir, seed):
        self.cfg = cfg
        self.out_dir = out_dir
        self.seed = seed
        self.stages = []
        self.files = []
        os.makedirs(out_dir, exist_ok=True)
        self._rng = np.random.default_rng(seed)

    def stage_rng(self):
        return self._rng.spawn(1)[0]

    def path(self, name):
        p = os.path.join(self.out_dir, name)
        self.files.append(p)
        return p

    def record(self, name, wall, report):
        self.stages.append({"name": name, "wall_clock_s": wall,
                            "report": report})

    def finish(self):
        canonical = json.dumps(config_dict(self.cfg), sort_keys=True,
                               default=_json_default)
        manifest = {
            "artifact_version": __version__,
            "config_hash": hashlib.sha256(canonical.encode()).hexdigest(),
            "config": config_dict(self.cfg),
            "seed": self.seed,
            "stages": self.stages,
            "files": {os.path.basename(p): _sha256(p) for p in self.files},
        }
        with open(os.path.join(self.out_dir, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True,
                      default=_json_default)
            fh.write("\n")


def _setup(config, out, seed, threads):
    try:
        cfg = load_config(config)
    except (ConfigError, OSError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed)
    out_dir = out or cfg.out_dir or os.path.join(
        os.environ.get("MAGSCHRO_OUT", "runs"), cfg.name)
    if threads:
        set_fft_workers(threads)
    return cfg, RunContext(cfg, out_dir, cfg.seed)


def _build_potential(cfg, grid):
    if cfg.potential is None:
        return None
    return builtin_potential(cfg.potential.kind, list(cfg.potential.params),
                             grid)


def _operator(cfg, grid, p):
    if p is None or p.is_zero:
        return OperatorHandle(kind="free", grid=grid)
    return OperatorHandle(kind="full", grid=grid, potential=p)


def _gaussian_state(grid, width):
    return Field(grid, np.exp(-grid.r2 / (2.0 * width ** 2)).astype(complex))


def _t_grid(cfg):
    if cfg.decay.t_grid:
        return list(cfg.decay.t_grid)
    lo, hi = cfg.decay.window
    return list(np.geomspace(lo, hi, 16))


_common = [
    click.option("--config", "config", required=True,
                 type=click.Path(exists=True, dir_okay=False),
                 help="YAML experiment config"),
    click.option("--out", default=None, help="output directory "
                 "(default: config outputs.dir, then $MAGSCHRO_OUT/<name>)"),
    click.option("--seed", default=None, type=int,
                 help="override the config seed"),
    click.option("--threads", default=None, type=int,
                 help="FFT worker threads (default 1)"),
]


def common_options(fn):
    for opt in reversed(_common):
        fn = opt(fn)
    return fn


@click.group()
@click.version_option(__version__)
def main():
    """Numerical toolkit for resolvent and dispersive-decay estimates of
    3D magnetic Schrodinger operators."""


@main.command("validate-potential")
@common_options
def cmd_validate_potential(config, out, seed, threads):
    """Check the decay conditions of the configured potential."""
    cfg, ctx = _setup(config, out, seed, threads)
    if cfg.potential is None:
        click.echo("config error: validate-potential needs a potential",
                   err=True)
        sys.exit(EXIT_CONFIG)
    grid = make_grid(cfg.grid.n, cfg.grid.l)
    t0 = time.perf_counter()
    p = _build_potential(cfg, grid)
    radii = list(np.linspace(2.0, max(3.0, 0.75 * grid.l), 7))
    profile = validate_decay(p, radii)
    summary = {"kind": cfg.potential.kind, "params": list(cfg.potential.params),
               "beta": profile.beta, "beta1": profile.beta1, "c": profile.c,
               "pass": profile.pass_}
    _write_json(ctx.path("potential.json"), summary)
    ctx.record("validate-potential", time.perf_counter() - t0, summary)
    ctx.finish()
    click.echo(f"beta={profile.beta} beta1={profile.beta1} pass={profile.pass_}")
    sys.exit(EXIT_OK if profile.pass_ else EXIT_VERDICT)


@main.command("resolvent")
@common_options
def cmd_resolvent(config, out, seed, threads):
    """Run the configured resolvent queries and emit a CSV sweep."""
    cfg, ctx = _setup(config, out, seed, threads)
    grid = make_grid(cfg.grid.n, cfg.grid.l)
    p = _build_potential(cfg, grid)
    h = _operator(cfg, grid, p)
    rng = ctx.stage_rng()
    f = random_bump(grid, rng)
    rows = []
    t0 = time.perf_counter()
    failed = False
    for qd in cfg.resolvent.queries:
        try:
            if qd["side"] in ("plus", "minus"):
                psi, rep = limiting_absorption(
                    h, qd["lambda"], qd["side"], f,
                    tol=cfg.solver.tol_limit, solver_tol=cfg.solver.tol_offaxis)
            else:
                q = ResolventQuery(lam=qd["lambda"], eps=qd["eps"], k=qd["k"],
                                   side=qd["side"])
                if h.kind == "free":
                    psi = free_apply(q, f)
                    rep = None
                else:
                    psi, rep = perturbed_direct(h, q, f,
                                                tol=cfg.solver.tol_offaxis,
                                                maxiter=cfg.solver.iter_cap)
        except (ValueError, RuntimeError) as exc:
            click.echo(f"solver failure at {qd}: {exc}", err=True)
            failed = True
            continue
        norm_out = weighted_norm(psi, WeightedNormSpec(sigma=-1.0, s=0.0))
        rows.append((qd["lambda"], qd["eps"], qd["k"], qd["side"],
                     rep.residual if rep else 0.0,
                     rep.iterations if rep else 0,
                     weighted_norm(f, WeightedNormSpec(sigma=1.0, s=0.0)),
                     norm_out))
    _write_csv(ctx.path("resolvent.csv"),
               ["lambda", "eps", "k", "side", "residual", "iterations",
                "norm_in_sigma1", "norm_out_msigma1"], rows)
    ctx.record("resolvent", time.perf_counter() - t0,
               {"queries": len(rows), "failures": failed})
    ctx.finish()
    sys.exit(EXIT_SOLVER if failed else EXIT_OK)


@main.command("spectral-check")
@common_options
def cmd_spectral_check(config, out, seed, threads):
    """Discrete spectrum and the zero-resonance Spectral Condition."""
    cfg, ctx = _setup(config, out, seed, threads)
    grid = make_grid(cfg.grid.n, cfg.grid.l)
    p = _build_potential(cfg, grid)
    t0 = time.perf_counter()
    if p is None or p.is_zero:
        summary = {"eigenvalues": [], "residuals": [],
                   "sigma_min": 1.0, "refinement_trend": [1.0, 1.0],
                   "regular": True}
    else:
        grids = [make_grid(n, l) for (n, l) in cfg.spectral.grids]
        rep = spectral_condition_check(p, sigma=cfg.spectral.sigma,
                                       grids=grids)
        h = _operator(cfg, grid, p)
        sd = discrete_spectrum(h, count_hint=cfg.spectral.count_hint)
        from .operators import apply as op_apply
        from .grid import l2_norm
        residuals = [l2_norm(op_apply(h, f).values - w * f.values, grid.h)
                     for w, f in zip(sd.eigenvalues, sd.eigenfields)]
        summary = {"eigenvalues": sd.eigenvalues, "residuals": residuals,
                   "sigma_min": rep.sigma_min,
                   "refinement_trend": rep.refinement_trend,
                   "regular": rep.regular,
                   "discarded_mass": rep.discarded_mass}
    _write_json(ctx.path("spectral.json"), summary)
    ctx.record("spectral-check", time.perf_counter() - t0, summary)
    ctx.finish()
    click.echo(f"regular={summary['regular']} sigma_min={summary['sigma_min']}")
    sys.exit(EXIT_OK if summary["regular"] else EXIT_VERDICT)


@main.command("evolve")
@common_options
@click.option("--route", type=click.Choice(["free", "direct", "contour"]),
              default="free")
@click.option("--t-grid", "t_grid", default=None,
              help="comma-separated times (default: decay.t_grid)")
@click.option("--snapshots/--no-snapshots", default=False,
              help="write MSF1 field snapshots per sample")
def cmd_evolve(config, out, seed, threads, route, t_grid, snapshots):
    """Evolve the configured initial state and record weighted norms."""
    cfg, ctx = _setup(config, out, seed, threads)
    grid = make_grid(cfg.grid.n, cfg.grid.l)
    p = _build_potential(cfg, grid)
    h = _operator(cfg, grid, p)
    psi0 = _gaussian_state(grid, cfg.decay.psi0.width)
    times = ([float(s) for s in t_grid.split(",")] if t_grid
             else _t_grid(cfg))
    t0 = time.perf_counter()
    sd = None
    if h.kind == "full":
        sd = discrete_spectrum(h, count_hint=cfg.spectral.count_hint)
    rows = []
    for i, t in enumerate(times):
        if route == "free":
            psi = evolve_free(psi0, t)
        elif route == "direct":
            if sd is None:
                psi = evolve_free(psi0, t)
            else:
                psi = evolve_direct(h, sd, psi0, t, dt=cfg.decay.dt)
        else:
            quad = QuadratureSpec(lambda_max=cfg.quadrature.lambda_max,
                                  panels=cfg.quadrature.panels,
                                  substitution=cfg.quadrature.substitution)
            psi, _ = evolve_contour(h, sd, psi0, t, quad=quad,
                                    tol=cfg.solver.tol_limit,
                                    solver_tol=cfg.solver.tol_offaxis)
        rows.append((t, psi.norm(),
                     weighted_norm(psi, WeightedNormSpec(-cfg.decay.sigma, 0))))
        if snapshots:
            write_field(ctx.path(f"psi_{i:03d}.msf1"), psi)
    _write_csv(ctx.path("evolve.csv"), ["t", "l2_norm", "weighted_norm"], rows)
    ctx.record("evolve", time.perf_counter() - t0,
               {"route": route, "samples": len(rows)})
    ctx.finish()
    sys.exit(EXIT_OK)


@main.command("decay-report")
@common_options
def cmd_decay_report(config, out, seed, threads):
    """End-to-end decay pipeline: spectral check, project, evolve, fit."""
    cfg, ctx = _setup(config, out, seed, threads)
    grid = make_grid(cfg.grid.n, cfg.grid.l)
    p = _build_potential(cfg, grid)
    h = _operator(cfg, grid, p)

    t0 = time.perf_counter()
    sd = None
    if h.kind == "full":
        grids = [make_grid(n, l) for (n, l) in cfg.spectral.grids]
        screp = spectral_condition_check(p, sigma=cfg.spectral.sigma,
                                         grids=grids)
        ctx.record("spectral-check", time.perf_counter() - t0,
                   {"sigma_min": screp.sigma_min, "regular": screp.regular})
        if not screp.regular:
            click.echo("spectral condition fails; decay theorem hypotheses "
                       "not met", err=True)
            ctx.finish()
            sys.exit(EXIT_VERDICT)
        sd = discrete_spectrum(h, count_hint=cfg.spectral.count_hint)

    psi0 = _gaussian_state(grid, cfg.decay.psi0.width)
    times = _t_grid(cfg)
    t1 = time.perf_counter()
    try:
        report = decay_series(h, sd, psi0, cfg.decay.sigma, times,
                              route=cfg.decay.route, embed=cfg.decay.embed,
                              dt=cfg.decay.dt)
        report = fit_power_law(report, window=cfg.decay.window,
                               verdict_tol=cfg.decay.verdict_tol)
    except (ValueError, RuntimeError) as exc:
        click.echo(f"solver failure: {exc}", err=True)
        ctx.record("decay", time.perf_counter() - t1, {"error": str(exc)})
        ctx.finish()
        sys.exit(EXIT_SOLVER)
    _write_csv(ctx.path("decay.csv"), ["t", "norm"],
               list(zip(report.t_samples, report.norms)))
    summary = {
        "sigma": report.sigma, "route": report.route,
        "exponent": report.exponent, "exponent_ci": report.exponent_ci,
        "window": list(report.fit_window), "verdict": report.verdict,
        "out_of_hypothesis": report.out_of_hypothesis,
        "wrap_cap": report.wrap_cap,
    }
    _write_json(ctx.path("decay.json"), summary)
    ctx.record("decay", time.perf_counter() - t1, summary)
    ctx.finish()
    click.echo(f"exponent={report.exponent:.4f} +- {report.exponent_ci:.4f} "
               f"verdict={'pass' if report.verdict else 'fail'}")
    sys.exit(EXIT_OK if report.verdict else EXIT_VERDICT)


@main.command("verify-estimates")
@common_options
def cmd_verify_estimates(config, out, seed, threads):
    """Slope batteries for the low/high-energy resolvent asymptotics."""
    cfg, ctx = _setup(config, out, seed, threads)
    grid = make_grid(cfg.grid.n, cfg.grid.l)
    p = _build_potential(cfg, grid)
    h = _operator(cfg, grid, p)
    rng = ctx.stage_rng()
    f = random_bump(grid, rng)
    t0 = time.perf_counter()
    results = {}
    # negative-axis free bound: trivial 1/|omega| rate
    omegas = [-10.0 ** m for m in np.linspace(1, 3, 6)]
    free = OperatorHandle(kind="free", grid=grid)
    results["free_negative_axis_k0"] = {
        "slope": asymptotic_probe(free, "high", 0, 0, 1.0, f, omegas),
        "expected": -1.0, "tol": 0.05}
    # near-cut weighted rate, k = 0
    omegas = [complex(10.0 ** m, 1.0) for m in np.linspace(1, 3, 6)]
    results["near_cut_k0"] = {
        "slope": asymptotic_probe(h, "high", 0, 0, 1.0, f, omegas),
        "expected": -0.5, "tol": 0.25}
    # low-energy derivative rate, k = 1, free multiplier route
    omegas = [complex(t, t) for t in np.geomspace(1e-3, 1e-1, 7)]
    results["low_energy_k1"] = {
        "slope": asymptotic_probe(free, "low", 1, 0, 2.0, f, omegas),
        "expected": -0.5, "tol": 0.25}
    ok = all(abs(r["slope"] - r["expected"]) <= r["tol"]
             for r in results.values())
    results["pass"] = ok
    _write_json(ctx.path("estimates.json"), results)
    ctx.record("verify-estimates", time.perf_counter() - t0, results)
    ctx.finish()
    for name, r in results.items():
        if isinstance(r, dict):
            click.echo(f"{name}: slope={r['slope']:.3f} "
                       f"expected={r['expected']}")
    sys.exit(EXIT_OK if ok else EXIT_VERDICT)


@main.command("replay")
@click.argument("manifest_path", type=click.Path(exists=True, dir_okay=False))
def cmd_replay(manifest_path):
    """Verify checksums and cheap invariants of a finished run."""
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    base = os.path.dirname(os.path.abspath(manifest_path))
    ok = True
    for name, digest in manifest.get("files", {}).items():
        path = os.path.join(base, name)
        if not os.path.exists(path):
            click.echo(f"missing file: {name}")
            ok = False
            continue
        actual = _sha256(path)
        if actual != digest:
            click.echo(f"checksum mismatch: {name}")
            ok = False
    # cheap invariant: decay norms must be nonnegative and finite
    decay_csv = os.path.join(base, "decay.csv")
    if ok and os.path.exists(decay_csv):
        with open(decay_csv) as fh:
            next(fh)
            for line in fh:
                t, norm = (float(x) for x in line.split(","))
                if not (norm >= 0 and np.isfinite(norm)):
                    click.echo(f"invalid norm at t={t}")
                    ok = False
    click.echo("status: ok" if ok else "status: drift detected")
    sys.exit(EXIT_OK if ok else EXIT_SOLVER)


if __name__ == "__main__":
    main()
