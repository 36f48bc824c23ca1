"""Batch experiment runner.

Usage::

    corrector-lab SUBCOMMAND [--config PATH] [--out DIR] [--seed N] [--override KEY=VALUE ...]

The config file holds one ``key = value`` per line; ``#`` starts a comment.
Command-line options override the file.  Every run writes its payload
files (JSON/CSV, byte-identical on re-run) plus ``metadata.json`` holding
the config hash, RNG algorithm, versions and the timestamp.

Exit status: 0 all checks pass, 1 a check failed, 2 invalid config,
3 solver did not converge.
"""

import argparse
import hashlib
import json
import os
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from corrector_lab import __version__, _rng
from corrector_lab.cocycle import closedness_residual, mean_vector, potential, save_cocycle
from corrector_lab.environment import (
    GeneratorModel,
    InvalidEnvironment,
    TorusShape,
    generate_environment,
    save_environment,
)
from corrector_lab.ergodic import (
    RadiusError,
    directional_average,
    holder_exponent,
    max_radius,
    multiple_bounds_hold,
    nearest_multiple,
    oscillation_constant_stat,
    poincare_check,
    sublinearity_profile,
)
from corrector_lab.solver import (
    DENSE_MAX_SITES,
    ConvergenceError,
    average_tensors,
    dense_oracle_solve,
    effective_tensor,
    harmonicity_residual,
    save_corrector,
    solve_corrector,
    voigt_reuss_bounds,
)
from corrector_lab.walk import (
    apply_generator,
    detailed_balance_residual,
    ensemble_stats,
    martingale_residual,
    simulate_ensemble,
)

SUBCOMMANDS = (
    "gen-env",
    "solve",
    "verify",
    "sublinearity",
    "holder",
    "lemma2-scan",
    "walk-clt",
    "sigma-eff",
    "oracle-check",
)

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


def _ints(text):
    return [int(x) for x in str(text).replace(" ", "").split(",") if x]


def _floats(text):
    return [float(x) for x in str(text).replace(" ", "").split(",") if x]


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass
class ExperimentConfig:
    """All experiment knobs.  List values are comma separated in the file."""

    d: int = 2
    L: int = 16
    a: float = 1.0
    b: float = 2.0
    model: str = "iid-uniform"
    model_c: float = None
    model_p: float = None
    model_low: float = None
    model_high: float = None
    model_radius: int = None
    seed: int = 0
    seeds: str = ""
    y: str = ""
    tol: float = 1e-10
    max_iter: int = 0
    radii: str = "1,2,4"
    holder_R: int = 8
    poincare_R: str = "1,2"
    poincare_fields: int = 20
    walk_k: int = 1000
    walk_n: int = 1000
    walk_seed: int = 2024
    per_walk_csv: bool = False
    scan_range: int = 20
    scan_nmax: int = 10

    @classmethod
    def keys(cls):
        return [f.name for f in fields(cls)]

    def set(self, key, value):
        if key not in self.keys():
            raise ConfigError(f"unknown config key {key!r}")
        kind = {f.name: f.type for f in fields(self)}[key]
        try:
            if kind is bool:
                val = _bool(value)
            elif kind is int:
                val = int(value)
            elif kind is float:
                val = float(value)
            else:
                val = str(value).strip()
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from None
        setattr(self, key, val)

    # derived values ---------------------------------------------------

    @property
    def shape(self):
        return TorusShape(self.d, self.L)

    @property
    def seed_list(self):
        return _ints(self.seeds) if self.seeds else [self.seed]

    @property
    def y_vector(self):
        if not self.y:
            y = np.zeros(self.d)
            y[0] = 1.0
            return y
        return np.array(_floats(self.y))

    @property
    def radius_list(self):
        return _ints(self.radii)

    @property
    def poincare_radii(self):
        return _ints(self.poincare_R)

    def generator_model(self):
        params = {}
        for key in ("c", "p", "low", "high", "radius"):
            val = getattr(self, f"model_{key}")
            if val is not None:
                params[key] = val
        return GeneratorModel(self.model, params)

    def canonical(self):
        lines = []
        for key in self.keys():
            val = getattr(self, key)
            if val is None:
                continue
            lines.append(f"{key}={val!r}")
        return "\n".join(lines) + "\n"

    def digest(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def validate(self, command):
        """Check downstream guards before any work is done."""
        try:
            shape = self.shape
            env_probe = generate_environment(TorusShape(shape.d, 2), self.generator_model(), (self.a, self.b), 0)
            del env_probe
        except InvalidEnvironment as exc:
            raise ConfigError(str(exc)) from None
        if self.y_vector.shape != (self.d,):
            raise ConfigError(f"y must have {self.d} components, got {self.y_vector.size}")
        if not self.tol > 0:
            raise ConfigError("tol must be > 0")
        if self.max_iter < 0:
            raise ConfigError("max_iter must be >= 0")
        guard = max_radius(self.L)
        if command == "sublinearity":
            radii = self.radius_list
            if not radii or min(radii) < 1:
                raise ConfigError("radii must be positive integers")
            if max(radii) > guard:
                raise ConfigError(f"radius {max(radii)} exceeds floor(L/2) - 1 = {guard}")
        if command == "holder":
            if self.holder_R < 8:
                raise ConfigError("holder_R must be >= 8 (four distinct fit radii)")
            if 2 * self.holder_R > guard:
                raise ConfigError(f"2 * holder_R = {2 * self.holder_R} exceeds floor(L/2) - 1 = {guard}")
        if command == "verify":
            if any(r < 1 or r + 1 > guard for r in self.poincare_radii):
                raise ConfigError(f"poincare_R values need 1 <= R and R + 1 <= {guard}")
        if command == "walk-clt" and (self.walk_k < 1 or self.walk_n < 1):
            raise ConfigError("walk_k and walk_n must be >= 1")
        if command == "lemma2-scan" and (self.scan_range < 0 or self.scan_nmax < 1):
            raise ConfigError("scan_range must be >= 0 and scan_nmax >= 1")
        if command == "oracle-check" and self.L**self.d > DENSE_MAX_SITES:
            raise ConfigError(f"oracle-check limited to L**d <= {DENSE_MAX_SITES}")
        if any(s < 0 or s >= 2**64 for s in self.seed_list):
            raise ConfigError("seeds must be unsigned 64-bit integers")


def read_config(path):
    cfg = ExperimentConfig()
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        cfg.set(key, val)
    return cfg


def _threads():
    raw = os.environ.get("CORRECTOR_LAB_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    return n if n > 0 else (os.cpu_count() or 1)


def _map(fn, items):
    items = list(items)
    with ThreadPoolExecutor(max_workers=min(_threads(), max(1, len(items)))) as pool:
        return list(pool.map(fn, items))


# -- output helpers ----------------------------------------------------------


class Run:
    def __init__(self, command, cfg, out):
        self.command = command
        self.cfg = cfg
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.checks = {}
        self.files = []

    def json(self, name, payload):
        payload = dict(payload, config_hash=self.cfg.digest())
        (self.out / name).write_text(json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n")
        self.files.append(name)

    def csv(self, name, header, rows, footer=None):
        lines = [",".join(header)]
        lines += [",".join(_fmt(v) for v in row) for row in rows]
        if footer is not None:
            lines.append("# " + json.dumps(_clean(footer), sort_keys=True))
        (self.out / name).write_text("\n".join(lines) + "\n")
        self.files.append(name)

    def check(self, name, ok, value=None, bound=None):
        self.checks[name] = {"pass": bool(ok), "value": value, "bound": bound}

    def finish(self):
        meta = {
            "command": self.command,
            "config_hash": self.cfg.digest(),
            "config": self.cfg.canonical(),
            "seeds": self.cfg.seed_list,
            "rng_algorithm": _rng.ALGORITHM_ID,
            "versions": {"corrector_lab": __version__, "numpy": np.__version__, "python": platform.python_version()},
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            "files": self.files,
        }
        (self.out / "metadata.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        if self.checks:
            (self.out / "checks.json").write_text(json.dumps(_clean(self.checks), indent=2, sort_keys=True) + "\n")
        return EXIT_OK if all(c["pass"] for c in self.checks.values()) else EXIT_CHECK


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(int(v)) if isinstance(v, (np.integer,)) else str(v)


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if np.isfinite(f) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# -- pipeline pieces ---------------------------------------------------------


def _env(cfg, seed=None):
    return generate_environment(cfg.shape, cfg.generator_model(), (cfg.a, cfg.b), cfg.seed if seed is None else seed)


def _solve(cfg, env):
    return solve_corrector(env, tol=cfg.tol, max_iter=cfg.max_iter or None)


def cmd_gen_env(run):
    cfg = run.cfg
    records = []
    for seed in cfg.seed_list:
        env = _env(cfg, seed)
        save_environment(env, run.out / f"env_{seed}.rcm")
        run.files.append(f"env_{seed}.rcm")
        c = env.conductances
        ok = bool(np.all(c > env.bounds[0]) and np.all(c < env.bounds[1]))
        records.append(dict(seed=seed, min=c.min(), max=c.max(), mean=c.mean(), elliptic=ok))
        run.check(f"ellipticity[{seed}]", ok)
    run.json("environments.json", {"d": cfg.d, "L": cfg.L, "model": cfg.generator_model().describe(), "environments": records})


def cmd_solve(run):
    cfg = run.cfg
    env = _env(cfg)
    sol = _solve(cfg, env)
    S = sol.cocycle(cfg.y_vector)
    save_corrector(sol, run.out / "corrector.cor")
    save_cocycle(S, run.out / "cocycle.ccf")
    run.files += ["corrector.cor", "cocycle.ccf"]
    closed = closedness_residual(S)
    harm = harmonicity_residual(env, S)
    mean_gap = float(np.max(np.abs(mean_vector(S) - cfg.y_vector)))
    run.check("closedness", closed <= 1e-9, closed, 1e-9)
    run.check("harmonicity", harm <= 1e-8, harm, 1e-8)
    run.check("mean", mean_gap <= 1e-10, mean_gap, 1e-10)
    run.json(
        "solve.json",
        {
            "seed": cfg.seed,
            "y": cfg.y_vector,
            "residual_l2": sol.residual_l2,
            "iterations": sol.iterations,
            "closedness_residual": closed,
            "harmonicity_residual": harm,
            "mean_vector": mean_vector(S),
        },
    )


def cmd_verify(run):
    cfg = run.cfg
    env = _env(cfg)
    sol = _solve(cfg, env)
    S = sol.cocycle(cfg.y_vector)
    closed = closedness_residual(S)
    harm = harmonicity_residual(env, S)
    db = detailed_balance_residual(env)
    mart = martingale_residual(env, S)
    rng = np.random.default_rng(int(_rng.hash_u64(cfg.seed, 1)))
    gen_gap = 0.0
    for _ in range(10):
        u = rng.standard_normal(cfg.shape.grid)
        gen_gap = max(gen_gap, float(np.abs(apply_generator(env, u) - apply_generator(env, u, "divergence")).max()))
    violations = 0
    trials = 0
    for t in range(cfg.poincare_fields):
        u = np.random.default_rng(int(_rng.hash_u64(cfg.seed, 2, t))).standard_normal(cfg.shape.grid)
        for R in cfg.poincare_radii:
            trials += 1
            violations += not poincare_check(u, R).holds
    run.check("closedness", closed <= 1e-9, closed, 1e-9)
    run.check("harmonicity", harm <= 1e-8, harm, 1e-8)
    run.check("detailed_balance", db <= 1e-12, db, 1e-12)
    run.check("martingale", mart <= 1e-8, mart, 1e-8)
    run.check("generator_forms", gen_gap <= 1e-13, gen_gap, 1e-13)
    run.check("poincare", violations == 0, violations, 0)
    run.json(
        "verify.json",
        {
            "seed": cfg.seed,
            "closedness_residual": closed,
            "harmonicity_residual": harm,
            "detailed_balance_residual": db,
            "martingale_residual": mart,
            "generator_form_gap": gen_gap,
            "poincare_trials": trials,
            "poincare_violations": violations,
        },
    )


def cmd_sublinearity(run):
    cfg = run.cfg
    env = _env(cfg)
    sol = _solve(cfg, env)
    y = cfg.y_vector
    S = sol.cocycle(y)
    prof = sublinearity_profile(S, y, cfg.radius_list)
    run.csv("sublinearity.csv", ["R", "M_R"], prof.rows())
    dirs = []
    for n in np.eye(cfg.d, dtype=np.int64).tolist() + [[1] * cfg.d]:
        avg = directional_average(S, n, cfg.L)
        target = float(np.dot(n, y) / np.abs(n).sum())
        dirs.append({"n": n, "k": cfg.L, "value": avg.value, "target": target, "wrapped": avg.wrapped})
        run.check(f"full_period{n}", abs(avg.value - target) <= 1e-9, abs(avg.value - target), 1e-9)
    run.json("sublinearity.json", {"seed": cfg.seed, "y": y, "exact": prof.exact, "profile": prof.rows(), "directional": dirs})


def cmd_holder(run):
    cfg = run.cfg
    env = _env(cfg)
    sol = _solve(cfg, env)
    S = sol.cocycle(cfg.y_vector)
    R = cfg.holder_R
    est = holder_exponent(env, potential(S, 2 * R + 1), R)
    footer = {"alpha_hat": est.alpha_hat, "C_hat": est.C_hat, "R": R, "fit_quality": est.fit_quality, "degenerate": est.degenerate, "seed": cfg.seed}
    run.csv("holder.csv", ["r", "osc"], list(zip(est.radii, est.osc)), footer=footer)
    grid = [r for r in (1, 2, 4, 8, 16, 32, 64) if 4 * r + 1 <= max_radius(cfg.L)]
    rows = [(r, oscillation_constant_stat(env, S, r)) for r in grid]
    run.csv("oscillation_constant.csv", ["R", "C_over_R"], rows)


def cmd_multiple_scan(run):
    cfg = run.cfg
    span = range(-cfg.scan_range, cfg.scan_range + 1)
    grids = np.array(np.meshgrid(*[list(span)] * cfg.d, indexing="ij")).reshape(cfg.d, -1).T
    violations = []
    zero_branch = 0
    count = 0
    for n in range(1, cfg.scan_nmax + 1):
        for m in grids:
            ell = nearest_multiple(m, n)
            count += 1
            if np.abs(m).sum() < n:
                zero_branch += 1
            if not multiple_bounds_hold(m, ell, n) or (np.any(ell) and np.abs(ell).sum() % n):
                violations.append({"m": m, "n": n, "l": ell})
    run.check("multiple_bounds", not violations, len(violations), 0)
    run.check("zero_branch_covered", zero_branch > 0, zero_branch)
    run.json("nearest_multiple.json", {"cases": count, "zero_branch_cases": zero_branch, "violations": violations[:100]})


def cmd_walk_clt(run):
    cfg = run.cfg
    env = _env(cfg)
    sol = _solve(cfg, env)
    S = sol.cocycle(cfg.y_vector)
    k = cfg.walk_k
    runs = simulate_ensemble(env, S, [k], cfg.walk_n, cfg.walk_seed)
    X, Y = runs[k]
    stats = ensemble_stats(X, Y, k, cfg.walk_seed)
    bound = 3 * np.sqrt(stats.var_Y / stats.n_walks)
    run.check("mean_Y", abs(stats.mean_Y) <= bound, stats.mean_Y, bound)
    run.json("walk_clt.json", stats.to_record())
    if cfg.per_walk_csv:
        header = ["walk", "Y_k"] + [f"X{i}" for i in range(cfg.d)]
        rows = [[w, Y[w]] + X[w].tolist() for w in range(len(Y))]
        run.csv("walks.csv", header, rows)


def cmd_sigma_eff(run):
    cfg = run.cfg

    def one(seed):
        env = _env(cfg, seed)
        return env, effective_tensor(env, _solve(cfg, env))

    results = _map(one, cfg.seed_list)
    per_seed = []
    for env, T in results:
        harm, arith = voigt_reuss_bounds(env)
        diag = np.diag(T.A_hom)
        ok = bool(np.all(diag >= harm - 1e-6) and np.all(diag <= arith + 1e-6))
        run.check(f"voigt_reuss[{env.seed}]", ok)
        per_seed.append(dict(T.to_record(env), harmonic_mean=harm, arithmetic_mean=arith))
    avg = average_tensors([T for _, T in results])
    record = avg.to_record(results[0][0])
    record["per_seed"] = per_seed
    run.json("sigma_eff.json", record)


def cmd_oracle_check(run):
    cfg = run.cfg

    def one(seed):
        env = _env(cfg, seed)
        cg = _solve(cfg, env)
        dense = dense_oracle_solve(env)
        return seed, float(np.abs(cg.chi - dense.chi).max())

    gaps = _map(one, cfg.seed_list)
    worst = max(g for _, g in gaps)
    run.check("cg_vs_dense", worst <= 1e-9, worst, 1e-9)
    run.json("oracle.json", {"gaps": [{"seed": s, "max_gap": g} for s, g in gaps], "max_gap": worst})


COMMANDS = {
    "gen-env": cmd_gen_env,
    "solve": cmd_solve,
    "verify": cmd_verify,
    "sublinearity": cmd_sublinearity,
    "holder": cmd_holder,
    "lemma2-scan": cmd_multiple_scan,
    "walk-clt": cmd_walk_clt,
    "sigma-eff": cmd_sigma_eff,
    "oracle-check": cmd_oracle_check,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="corrector-lab", description=__doc__.split("\n\n")[0])
    parser.add_argument("command", choices=SUBCOMMANDS)
    parser.add_argument("--config", type=Path, help="key = value config file")
    parser.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    parser.add_argument("--seed", type=int, help="override the seed")
    parser.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    return parser


def _diag(kind, message, **extra):
    print(json.dumps(_clean(dict(error=kind, message=message, **extra)), sort_keys=True), file=sys.stderr)


def run(command, cfg, out):
    """Run one subcommand; returns the exit status."""
    try:
        cfg.validate(command)
    except ConfigError as exc:
        _diag("config", str(exc))
        return EXIT_CONFIG
    r = Run(command, cfg, out)
    try:
        COMMANDS[command](r)
    except ConvergenceError as exc:
        _diag("convergence", str(exc), residual_l2=exc.solution.residual_l2)
        return EXIT_SOLVER
    except (RadiusError, InvalidEnvironment) as exc:
        _diag("config", str(exc))
        return EXIT_CONFIG
    status = r.finish()
    if status != EXIT_OK:
        failed = {k: v for k, v in r.checks.items() if not v["pass"]}
        _diag("check", "declared checks failed", failed=failed)
    return status


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = read_config(args.config) if args.config else ExperimentConfig()
        if args.seed is not None:
            cfg.set("seed", args.seed)
        for item in args.override:
            if "=" not in item:
                raise ConfigError(f"override must be KEY=VALUE, got {item!r}")
            key, val = item.split("=", 1)
            cfg.set(key.strip(), val)
    except (ConfigError, OSError) as exc:
        _diag("config", str(exc))
        return EXIT_CONFIG
    return run(args.command, cfg, args.out)


if __name__ == "__main__":
    sys.exit(main())
