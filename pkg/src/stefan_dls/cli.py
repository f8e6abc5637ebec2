"""Command line interface.

Subcommands: train, snapshot, radius, jump-solve, curvature-demo,
temperature.  Exit codes: 0 success, 2 configuration error, 3 I/O error.
All CSV output uses '.' decimals, ',' separators, LF line endings, UTF-8.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from .experiments import (ConfigError, ScenarioConfig, apply_overrides,
                          builtin_scenarios, extract_radius, hadzic_rate,
                          parse_config_file, physical_jump_size,
                          recover_temperature, scenario_hash)
from .geometry import (CurvatureProbe, curvature, parabola_curvature,
                       parabola_levelset, paraboloid_curvature,
                       paraboloid_levelset, sphere_levelset)
from .levelset import phi_and_grad, phi_grid
from .trainer import load_checkpoint, train


def _write_csv(path, header, rows):
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(v) for v in row) + "\n")
    except OSError as exc:
        raise _IOFailure(str(exc)) from exc


def _fmt(value):
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value
    return repr(float(value))


class _IOFailure(RuntimeError):
    pass


def _apply_threads(value):
    if value is None:
        value = os.environ.get("STEFAN_DLS_THREADS")
    if value is None:
        return
    value = str(int(value))
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ[var] = value


def _load_config(args):
    if args.scenario:
        scenarios = builtin_scenarios()
        if args.scenario not in scenarios:
            raise ConfigError(f"unknown scenario {args.scenario!r}; "
                              f"choose from {sorted(scenarios)}")
        cfg = scenarios[args.scenario]
    elif args.config:
        try:
            cfg = parse_config_file(args.config)
        except OSError as exc:
            raise _IOFailure(str(exc)) from exc
    else:
        raise ConfigError("need --scenario or --config")
    if args.set:
        cfg = apply_overrides(cfg, args.set)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg.validate()


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_train(args):
    cfg = _load_config(args)
    out = args.out
    os.makedirs(out, exist_ok=True)
    manifest_path = os.path.join(out, "manifest.json")
    if os.path.exists(manifest_path) and not args.force:
        raise ConfigError(f"{manifest_path} exists; use --force to overwrite")
    manifest = {"scenario": dataclasses.asdict(cfg),
                "scenario_hash": scenario_hash(cfg)}
    try:
        with open(manifest_path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise _IOFailure(str(exc)) from exc
    result = train(cfg, out_dir=out)
    _write_csv(os.path.join(out, "loss_history.csv"),
               ["iteration", "loss", "penalty", "lambda", "seconds"],
               [(r.iteration, r.loss, r.penalty, r.lam, r.seconds)
                for r in result.records])
    print(f"trained {len(result.records)} iterations"
          + (" (early stop)" if result.early_stopped else ""))
    return 0


def _load_net(path):
    try:
        return load_checkpoint(path)
    except OSError as exc:
        raise _IOFailure(str(exc)) from exc
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"bad checkpoint {path}: {exc}") from exc


def cmd_snapshot(args):
    cfg, arch, params, header = _load_net(args.checkpoint)
    phi0 = cfg.initial_levelset()
    os.makedirs(args.out, exist_ok=True)
    times = [float(t) for t in args.times.split(",")]
    meta = {"scenario_hash": header["scenario_hash"],
            "resolution": args.resolution,
            "bounds": [-cfg.domain_radius, cfg.domain_radius],
            "dim": cfg.dim, "times": times, "order": "row-major"}
    for t in times:
        _, values = phi_grid(arch, params, phi0, t, cfg.domain_radius,
                             args.resolution)
        name = f"phi_grid_t{t:g}.csv"
        flat = values.reshape(values.shape[0], -1)
        _write_csv(os.path.join(args.out, name),
                   [f"c{i}" for i in range(flat.shape[1])], flat)
    try:
        with open(os.path.join(args.out, "meta.json"), "w",
                  encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise _IOFailure(str(exc)) from exc
    return 0


def cmd_radius(args):
    cfg, arch, params, _ = _load_net(args.checkpoint)
    phi0 = cfg.initial_levelset()
    os.makedirs(args.out, exist_ok=True)
    times = [float(t) for t in args.times.split(",")]
    rows = []
    for t in times:
        radii = extract_radius(
            lambda pts: phi_and_grad(arch, params, phi0, t, pts)[0],
            cfg.dim, cfg.domain_radius, n_angles=args.n_angles)
        rows.append((t, radii.mean(), radii.std()))
    _write_csv(os.path.join(args.out, "radius.csv"),
               ["time", "mean_radius", "std_radius"], rows)
    if args.hadzic_tau is not None:
        h_rows = [(t, hadzic_rate(args.hadzic_tau, t)) for t in times
                  if t < args.hadzic_tau]
        _write_csv(os.path.join(args.out, "hadzic.csv"),
                   ["time", "rate"], h_rows)
    return 0


def cmd_jump_solve(args):
    if args.L <= 0 or args.delta0 <= 0 or args.r0 <= 0:
        raise ConfigError("r0, delta0 and L must be positive")
    delta = physical_jump_size(args.r0, args.delta0, args.L,
                               args.domain_radius)
    print(repr(float(delta)))
    return 0


_SHAPES = {
    "sphere": lambda: (sphere_levelset(0.5), 3,
                       np.array([0.5, 0.0, 0.0]), 2.0),
    "circle": lambda: (sphere_levelset(0.5), 2,
                       np.array([0.5, 0.0]), 2.0),
    "parabola": lambda: (parabola_levelset(2.0), 2,
                         np.array([0.0, 0.0]), parabola_curvature(2.0, 0.0)),
    "paraboloid": lambda: (paraboloid_levelset(1.0, 2.0), 3,
                           np.zeros(3), paraboloid_curvature(1, 2, 0, 0)),
    "hyperbolic-paraboloid": lambda: (paraboloid_levelset(-1.0, 2.0), 3,
                                      np.zeros(3),
                                      paraboloid_curvature(-1, 2, 0, 0)),
}


def cmd_curvature_demo(args):
    shapes = [args.shape] if args.shape else sorted(_SHAPES)
    probe = CurvatureProbe()
    rng = np.random.default_rng(args.seed or 0)
    rows = []
    for name in shapes:
        if name not in _SHAPES:
            raise ConfigError(f"unknown shape {name!r}; "
                              f"choose from {sorted(_SHAPES)}")
        f, dim, point, exact = _SHAPES[name]()
        est = curvature(f, point, dim, probe, rng=rng)
        rows.append((name, dim, est, exact, abs(est - exact)))
    os.makedirs(args.out, exist_ok=True)
    _write_csv(os.path.join(args.out, "curvature.csv"),
               ["shape", "dim", "estimate", "exact", "abs_error"], rows)
    for row in rows:
        print(f"{row[0]}: estimate={row[2]:.6f} exact={row[3]:.6f}")
    return 0


def cmd_temperature(args):
    cfg, arch, params, _ = _load_net(args.checkpoint)
    os.makedirs(args.out, exist_ok=True)
    r_grid = np.linspace(1e-3, cfg.domain_radius, args.resolution)
    temps = recover_temperature(arch, params, cfg, args.time, r_grid,
                                n_particles=args.n_particles,
                                seed=args.seed or 1234)
    v1 = temps.get(1, np.zeros_like(r_grid))
    v2 = temps.get(2, np.zeros_like(r_grid))
    _write_csv(os.path.join(args.out, "temperature.csv"),
               ["radius", "v1", "v2"],
               list(zip(r_grid, v1, v2)))
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="stefan-dls",
        description="Deep level-set solver for two-phase Stefan problems")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, checkpoint=False):
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        if checkpoint:
            p.add_argument("--checkpoint", required=True)

    p = sub.add_parser("train", help="train a level-set network")
    p.add_argument("--scenario", help="builtin scenario name")
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--set", action="append", default=[],
                   metavar="KEY=VALUE", help="override a config key")
    p.add_argument("--force", action="store_true",
                   help="overwrite an existing manifest")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("snapshot", help="evaluate phi on a grid")
    p.add_argument("--times", required=True, help="comma separated times")
    p.add_argument("--resolution", type=int, default=101)
    common(p, checkpoint=True)
    p.set_defaults(func=cmd_snapshot)

    p = sub.add_parser("radius", help="extract interface radii")
    p.add_argument("--times", required=True, help="comma separated times")
    p.add_argument("--n-angles", type=int, default=64)
    p.add_argument("--hadzic-tau", type=float, default=None,
                   help="also write the square-root vanishing-rate curve")
    common(p, checkpoint=True)
    p.set_defaults(func=cmd_radius)

    p = sub.add_parser("jump-solve", help="solve the initial-jump equation")
    p.add_argument("--r0", type=float, required=True)
    p.add_argument("--delta0", type=float, required=True)
    p.add_argument("--L", type=float, required=True)
    p.add_argument("--domain-radius", type=float, default=1.0)
    p.set_defaults(func=cmd_jump_solve)

    p = sub.add_parser("curvature-demo",
                       help="dilation curvature estimates vs exact values")
    p.add_argument("--shape", default=None)
    common(p)
    p.set_defaults(func=cmd_curvature_demo)

    p = sub.add_parser("temperature",
                       help="recover radial temperatures from a checkpoint")
    p.add_argument("--time", type=float, required=True)
    p.add_argument("--resolution", type=int, default=200)
    p.add_argument("--n-particles", type=int, default=20000)
    common(p, checkpoint=True)
    p.set_defaults(func=cmd_temperature)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    _apply_threads(getattr(args, "threads", None))
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except _IOFailure as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
