"""Command-line experiment runner.

    qtbo run --config run.json --out results/
    qtbo compare --config a.json --config b.json --out cmp/
    qtbo gamma --theta 0.785398 --g-min 0 --g-max 4 --steps 41 --out sweep/

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 degeneracy.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from . import __version__, bo, hilbert as hb, mcwf, models
from ._accel import backend
from .bo import DegeneracyError
from .lindblad import DivergenceError, evolve
from .mcwf import StepTooLargeError
from .observables import negativity

log = logging.getLogger("qtbo")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_DEGENERATE = 0, 2, 3, 4

OPTOMECH_OBS = ("negativity", "x", "n_a", "n_b", "trace", "purity")
NEUTRON_OBS = ("sigma_x", "sigma_y", "sigma_z", "trace", "purity")


class ConfigError(ValueError):
    pass


class ZeroBaselineError(ArithmeticError):
    """Gamma(0) vanishes, so the sweep cannot be normalized."""


@dataclass
class RunConfig:
    model: str
    method: str
    params: dict = field(default_factory=dict)
    dt: float = 5e-4
    t_final: float = 20.0
    sample_every: int = 100
    count: int = 150
    base_seed: int = 0
    observables: tuple = ()
    output: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "method": self.method,
            "params": dict(self.params),
            "time": {"dt": self.dt, "t_final": self.t_final, "sample_every": self.sample_every},
            "trajectories": {"count": self.count, "base_seed": self.base_seed},
            "observables": list(self.observables),
            "output": self.output,
        }


def _schema() -> dict:
    return json.loads(resources.files("qtbo").joinpath("run_config.schema.json").read_text())


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    if isinstance(doc, dict) and doc.get("output") is None:
        doc.pop("output", None)
    validator = jsonschema.Draft202012Validator(_schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.absolute_path) or "(root)"
        raise ConfigError(f"{source}: field {where}: {e.message}")
    t = doc.get("time", {})
    tr = doc.get("trajectories", {})
    cfg = RunConfig(
        model=doc["model"],
        method=doc["method"],
        params=doc.get("params", {}),
        dt=t.get("dt", 5e-4),
        t_final=t.get("t_final", 20.0),
        sample_every=t.get("sample_every", 100),
        count=tr.get("count", 150),
        base_seed=tr.get("base_seed", 0),
        observables=tuple(doc.get("observables", ())),
        output=doc.get("output"),
    )
    check_compatibility(cfg, source)
    return cfg


def check_compatibility(cfg: RunConfig, source="<config>"):
    neutron = cfg.model == "neutron"
    allowed_params = (
        {"theta", "g", "eps1", "eps2", "T"}
        if neutron
        else {"omega", "capital_omega", "g", "gamma", "kappa", "n_a", "n_b"}
    )
    extra = set(cfg.params) - allowed_params
    if extra:
        raise ConfigError(f"{source}: field params: {sorted(extra)} not valid for model {cfg.model}")
    if neutron and cfg.method == "master_rk4":
        raise ConfigError(f"{source}: field method: master_rk4 does not support the driven neutron model")
    allowed_obs = NEUTRON_OBS if neutron else OPTOMECH_OBS
    bad = [o for o in cfg.observables if o not in allowed_obs]
    if bad:
        raise ConfigError(f"{source}: field observables: {bad} not available for model {cfg.model}")
    if cfg.t_final < cfg.dt:
        raise ConfigError(f"{source}: field time/t_final: must be >= dt")


def load_config(path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    return parse_config(text, str(p))


@dataclass
class RunResult:
    times: np.ndarray
    states: list
    jump_counts: Optional[np.ndarray]
    operators: dict


def _optomech(cfg: RunConfig):
    variant = "fast" if cfg.model == "optomech_fast" else "slow"
    p = models.OptomechParams(**cfg.params)
    return models.optomech_model(p, variant), p


def simulate(cfg: RunConfig, workers: int = 1) -> RunResult:
    if cfg.model == "neutron":
        p = models.NeutronParams(**cfg.params)
        model = models.neutron_drive_model(p)
        psi0 = models.spin_up()
        ops = {"sigma_x": hb.sigma_x(), "sigma_y": hb.sigma_y(), "sigma_z": hb.sigma_z()}
        propagator = models.NeutronAdiabaticPropagator(p) if cfg.method == "mcwf_bo" else None
    else:
        system, p = _optomech(cfg)
        model = system.model
        psi0 = models.optomech_initial_state(p)
        ops = system.operators()
        propagator = None
        if cfg.method == "mcwf_bo":
            f = system.factorization()
            propagator = bo.SpectralPropagator(f, bo.zero_order_modes(f))
        if cfg.method == "master_rk4":
            times, states = evolve(model, psi0.projector(), cfg.dt, cfg.t_final, cfg.sample_every)
            return RunResult(times, states, None, ops)
    tc = mcwf.TrajectoryConfig(
        dt=cfg.dt,
        t_final=cfg.t_final,
        n_traj=cfg.count,
        base_seed=cfg.base_seed,
        propagator="bo_spectral" if cfg.method == "mcwf_bo" else "direct_rk4",
        sample_every=cfg.sample_every,
    )
    ens = mcwf.run_ensemble(model, tc, psi0, bo=propagator, workers=workers)
    return RunResult(ens.times, ens.states, ens.jump_counts, ops)


def observable_values(name: str, result: RunResult) -> np.ndarray:
    if name == "negativity":
        return np.array([negativity(r, (1,)) for r in result.states])
    if name == "trace":
        return np.array([r.trace().real for r in result.states])
    if name == "purity":
        return np.array([np.trace(r.matrix @ r.matrix).real for r in result.states])
    op = result.operators[name].matrix
    return np.array([np.trace(r.matrix @ op).real for r in result.states])


def format_float(x: float) -> str:
    return format(float(x), ".17g")


def write_csv(path: Path, times, values, header=("t", "value")):
    lines = [",".join(header)]
    lines += [f"{format_float(t)},{format_float(v)}" for t, v in zip(times, values)]
    _atomic_write(path, "\n".join(lines) + "\n")


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _jump_summary(counts):
    if counts is None:
        return None
    return {
        "total": int(counts.sum()),
        "mean": float(counts.mean()),
        "min": int(counts.min()),
        "max": int(counts.max()),
    }


def write_manifest(out: Path, config_echo, outputs: dict, wall: float, jumps=None, extra=None):
    doc = {
        "config": config_echo,
        "code_version": __version__,
        "backend": backend(),
        "wall_clock_seconds": wall,
        "outputs": outputs,
        "jumps": jumps,
    }
    if extra:
        doc.update(extra)
    _atomic_write(out / "manifest.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")


def default_observables(cfg: RunConfig):
    if cfg.observables:
        return cfg.observables
    return ("sigma_z",) if cfg.model == "neutron" else ("negativity", "x")


def run(cfg: RunConfig, out: Path, workers: int = 1) -> dict:
    t0 = time.perf_counter()
    result = simulate(cfg, workers)
    outputs = {}
    for name in default_observables(cfg):
        fname = f"{name}.csv"
        write_csv(out / fname, result.times, observable_values(name, result))
        outputs[name] = fname
    write_manifest(out, cfg.to_dict(), outputs, time.perf_counter() - t0, _jump_summary(result.jump_counts))
    return outputs


def compare(cfg_a: RunConfig, cfg_b: RunConfig, out: Path, workers: int = 1) -> np.ndarray:
    from .observables import fidelity

    if cfg_a.model != cfg_b.model or cfg_a.params != cfg_b.params:
        raise ConfigError("compare: both configs must describe the same model and parameters")
    if (cfg_a.dt * cfg_a.sample_every, cfg_a.t_final) != (cfg_b.dt * cfg_b.sample_every, cfg_b.t_final):
        raise ConfigError("compare: sample grids differ (dt*sample_every and t_final must match)")
    t0 = time.perf_counter()
    ra = simulate(cfg_a, workers)
    rb = simulate(cfg_b, workers)
    if len(ra.times) != len(rb.times) or not np.allclose(ra.times, rb.times, rtol=0, atol=1e-12):
        raise ConfigError("compare: sample grids differ")
    fid = np.array([fidelity(x, y) for x, y in zip(ra.states, rb.states)])
    write_csv(out / "fidelity.csv", ra.times, fid)
    write_manifest(
        out,
        {"a": cfg_a.to_dict(), "b": cfg_b.to_dict()},
        {"fidelity": "fidelity.csv"},
        time.perf_counter() - t0,
        {"a": _jump_summary(ra.jump_counts), "b": _jump_summary(rb.jump_counts)},
    )
    return fid


def gamma_sweep(theta: float, g_min: float, g_max: float, steps: int, eps1=1e-6, eps2=2e-4):
    """Return the g grid and Gamma(g)/Gamma(0)."""
    if steps < 1:
        raise ConfigError("steps must be >= 1")
    grid = np.linspace(g_min, g_max, steps) if steps > 1 else np.array([float(g_min)])
    base = models.neutron_gamma(models.NeutronParams(theta=theta, g=0.0, eps1=eps1, eps2=eps2))
    if base == 0.0:
        raise ZeroBaselineError(f"Gamma(0) = 0 at theta={theta}; the normalized sweep is undefined")
    vals = []
    for i, g in enumerate(grid):
        try:
            vals.append(models.neutron_gamma(models.NeutronParams(theta=theta, g=float(g), eps1=eps1, eps2=eps2)))
        except DegeneracyError as exc:
            raise DegeneracyError(f"grid index {i} (g={g}): {exc}", i) from None
    return grid, np.array(vals) / base


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    changes = {}
    if args.seed is not None:
        changes["base_seed"] = args.seed
    if args.trajectories is not None:
        changes["count"] = args.trajectories
    if args.dt is not None:
        changes["dt"] = args.dt
    if args.t_final is not None:
        changes["t_final"] = args.t_final
    cfg = replace(cfg, **changes)
    check_compatibility(cfg)
    if cfg.count < 1 or cfg.dt <= 0:
        raise ConfigError("trajectories must be >= 1 and dt > 0")
    return cfg


def _out_dir(args, cfg: Optional[RunConfig] = None) -> Path:
    if args.out:
        return Path(args.out)
    if cfg is not None and cfg.output:
        return Path(cfg.output)
    raise ConfigError("no output directory: pass --out or set 'output' in the config")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qtbo", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="override trajectories.base_seed")
        p.add_argument("--trajectories", type=int, help="override trajectories.count")
        p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
        p.add_argument("--dt", type=float)
        p.add_argument("--t-final", dest="t_final", type=float)

    p_run = sub.add_parser("run", help="simulate one configuration")
    p_run.add_argument("--config", required=True)
    common(p_run)

    p_cmp = sub.add_parser("compare", help="fidelity between two configurations")
    p_cmp.add_argument("--config", required=True, action="append")
    common(p_cmp)

    p_g = sub.add_parser("gamma", help="normalized Gamma(g) sweep for the neutron model")
    p_g.add_argument("--theta", type=float, default=np.pi / 4)
    p_g.add_argument("--g-min", type=float, default=0.0)
    p_g.add_argument("--g-max", type=float, default=4.0)
    p_g.add_argument("--steps", type=int, default=41)
    p_g.add_argument("--eps1", type=float, default=1e-6)
    p_g.add_argument("--eps2", type=float, default=2e-4)
    p_g.add_argument("--out", required=True)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "run":
            cfg = _apply_overrides(load_config(args.config), args)
            run(cfg, _out_dir(args, cfg), max(1, args.workers))
        elif args.command == "compare":
            if len(args.config) != 2:
                raise ConfigError("compare needs exactly two --config arguments")
            a, b = (_apply_overrides(load_config(c), args) for c in args.config)
            compare(a, b, _out_dir(args), max(1, args.workers))
        else:
            t0 = time.perf_counter()
            grid, vals = gamma_sweep(args.theta, args.g_min, args.g_max, args.steps, args.eps1, args.eps2)
            out = Path(args.out)
            write_csv(out / "gamma.csv", grid, vals, header=("g", "gamma_ratio"))
            write_manifest(
                out,
                {"theta": args.theta, "g_min": args.g_min, "g_max": args.g_max,
                 "steps": args.steps, "eps1": args.eps1, "eps2": args.eps2},
                {"gamma": "gamma.csv"},
                time.perf_counter() - t0,
            )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DegeneracyError as exc:
        print(f"degeneracy: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (DivergenceError, StepTooLargeError, ZeroBaselineError, models.TruncationError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (TypeError, ValueError) as exc:
        # parameter validation inside the model constructors
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
