"""Command-line entry point ``fastslow``.

Exit codes: 0 on success, 1 on usage or configuration errors, 2 when a
scientific verdict fails (for example a non-centred coefficient, a
non-PSD averaged matrix, or a failed identity check).
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, load_config
from .errors import ConfigError, DegenerateFitError, FastSlowError, NotCenteredError, NotPSDError
from .fast import hormander_check, lln_error
from .metrics import rate_fit, wasserstein_convergence, weak_error
from .multiscale import ito_reduction_check, slow_marginal
from .observables import real_trace
from .poisson import (
    centering_check,
    solve_poisson_mc,
    solve_poisson_spectral,
    validation_points,
)
from .presets import PRESETS, get_preset

ENV_PREFIX = "FASTSLOW_"
EXIT_OK, EXIT_USAGE, EXIT_VERDICT = 0, 1, 2


class UsageError(Exception):
    pass


class VerdictFailed(Exception):
    pass


# --- output ----------------------------------------------------------------------


def _num(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return "%.17g" % float(x)


class Output:
    """Writes CSV and report files whose headers carry version, digest and seed."""

    def __init__(self, out_dir: str, cfg: ExperimentConfig, seed: int, command: str):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.header = [f"# fastslow {__version__}", f"# command = {command}",
                       f"# config_digest = {cfg.digest}", f"# master_seed = {seed}",
                       f"# preset = {cfg.preset}"]
        self.written: list[Path] = []

    def csv(self, name: str, columns, rows) -> Path:
        path = self.dir / name
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(self.header) + "\n")
            fh.write(",".join(columns) + "\n")
            for row in rows:
                fh.write(",".join(_num(v) for v in row) + "\n")
        self.written.append(path)
        return path

    def report(self, name: str, lines) -> Path:
        path = self.dir / name
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(self.header) + "\n")
            fh.write("\n".join(lines) + "\n")
        self.written.append(path)
        return path


def _fmt(x: float) -> str:
    return "%.17g" % x


def _matrix_lines(name: str, a: np.ndarray) -> list[str]:
    return [f"{name}[{i}] = " + ", ".join(_fmt(v) for v in row) for i, row in enumerate(np.asarray(a))]


# --- commands --------------------------------------------------------------------


def cmd_simulate(cfg, seed, workers, out):
    p = get_preset(cfg.preset, cfg.epsilon)
    p.system.validate()
    ens = slow_marginal(p.system, cfg.T, cfg.paths, cfg.theta, seed, cfg.block_size, workers)
    spec = ens.spec
    n = spec.n
    cols = ["path", "stream_id", "t"]
    complex_group = np.iscomplexobj(ens.states)
    for i in range(n):
        for j in range(n):
            if complex_group:
                cols += [f"re_{i + 1}{j + 1}", f"im_{i + 1}{j + 1}"]
            else:
                cols.append(f"g_{i + 1}{j + 1}")
    rows = []
    for k, g in enumerate(ens.states):
        flat = g.ravel()
        vals = np.stack([flat.real, flat.imag], -1).ravel() if complex_group else flat.real
        rows.append([k, k // cfg.block_size, cfg.T, *vals])
    out.csv("simulate.csv", cols, rows)
    f = real_trace(n)
    mean, se = ens.mean(f)
    out.report("simulate.txt", [f"epsilon = {_fmt(cfg.epsilon)}", f"paths = {cfg.paths}",
                                f"mean_re_trace = {_fmt(mean)}", f"se = {_fmt(se)}"])
    return EXIT_OK


def cmd_converge(cfg, seed, workers, out):
    if len(cfg.eps_grid) < 3:
        raise UsageError("converge needs an eps_grid with at least three values")
    p = get_preset(cfg.preset, cfg.eps_grid[0])
    p.system.validate()
    sde = p.effective()
    f = real_trace(p.system.slow_group.n)
    limit_paths = cfg.limit_paths or cfg.paths
    rows = []
    for e in cfg.eps_grid:
        w = weak_error(f, p.system.with_epsilon(e), sde, cfg.T, cfg.paths, limit_paths, cfg.theta,
                       cfg.limit_h, seed, cfg.block_size, workers)
        rows.append((e, w.error, w.pooled_se))
    out.csv("converge.csv", ["epsilon", "weak_error", "se"], rows)
    lines = [f"T = {_fmt(cfg.T)}", f"paths = {cfg.paths}"]
    code = EXIT_OK
    try:
        fit = rate_fit([r[0] for r in rows], [r[1] for r in rows], [r[2] for r in rows], seed=seed)
        lines += fit.summary().splitlines()
    except DegenerateFitError as exc:
        lines.append(f"fit = degenerate ({exc})")
        code = EXIT_VERDICT
    decreasing = all(a[1] - b[1] > math.hypot(a[2], b[2]) for a, b in zip(rows, rows[1:]))
    lines.append(f"strictly_decreasing = {decreasing}")
    out.report("converge_fit.txt", lines)
    return code


def cmd_wasserstein(cfg, seed, workers, out):
    if len(cfg.eps_grid) < 2:
        raise UsageError("wasserstein needs an eps_grid with at least two values")
    p = get_preset(cfg.preset, cfg.eps_grid[0])
    p.system.validate()
    sde = p.effective()
    st = wasserstein_convergence(p.system, sde, cfg.T, cfg.eps_grid, cfg.n, seed, cfg.theta, cfg.limit_h,
                                 workers=workers)
    rows = [(e, w, ci[0], ci[1], st.sampling_floor) for e, w, ci in zip(st.eps_values, st.w1, st.ci)]
    out.csv("wasserstein.csv", ["epsilon", "w1", "ci_lo", "ci_hi", "floor"], rows)
    lines = [f"n = {cfg.n}", f"T = {_fmt(cfg.T)}", f"sampling_floor = {_fmt(st.sampling_floor)}",
             f"floor_ci = {_fmt(st.floor_ci[0])}, {_fmt(st.floor_ci[1])}"]
    lines += st.fit.summary().splitlines() if st.fit is not None else [f"fit = none ({st.fit_note})"]
    out.report("wasserstein_fit.txt", lines)
    return EXIT_OK


def cmd_poisson(cfg, seed, workers, out):
    p = get_preset(cfg.preset, 1.0)
    fast = p.system.fast
    lines = [f"torus = {fast.is_torus()}"]
    rows = []
    worst = 0.0
    for a in p.system.alphas:
        rep = centering_check(a, fast)
        lines.append(f"{a.name}.mean = {_fmt(rep.mean)} ({rep.method})")
        if not rep.centered:
            raise NotCenteredError(f"{a.name} is not centred")
    pts = validation_points(fast, 16)
    # the finite-difference residual of a Monte Carlo solution costs a full resolvent per stencil point
    checks = 16 if fast.is_torus() else 4
    mc = [solve_poisson_mc(a, fast, cfg.tail_T, cfg.poisson_paths, seed, cfg.fast_h, validation_count=checks)
          for a in p.system.alphas]
    for a, sol in zip(p.system.alphas, mc):
        est, se = sol.beta.meta["resolvent"].estimate(pts)
        lines.append(f"{a.name}.mc_residual = {_fmt(sol.residual_sup)}")
        if fast.is_torus():
            spec_sol = solve_poisson_spectral(a, fast)
            ref = spec_sol.beta(pts)
            rel = float(np.max(np.abs(est - ref)) / max(np.max(np.abs(ref)), 1e-300))
            worst = max(worst, rel)
            lines.append(f"{a.name}.spectral_residual = {_fmt(spec_sol.residual_sup)}")
            lines.append(f"{a.name}.relative_sup_error = {_fmt(rel)}")
            rows += [(k, a.meta.get("index", 0), r, e, s) for k, (r, e, s) in enumerate(zip(ref, est, se))]
        else:
            rows += [(k, a.meta.get("index", 0), math.nan, e, s) for k, (e, s) in enumerate(zip(est, se))]
    out.csv("poisson.csv", ["point", "alpha", "spectral", "mc", "mc_se"], rows)
    model = p.averaged()
    lines += _matrix_lines("a_bar", model.a_bar) + _matrix_lines("sigma", model.sigma)
    lines.append(f"averaging_method = {model.method}")
    agree = worst <= 0.02
    lines.append(f"agreement = {agree}")
    out.report("poisson.txt", lines)
    return EXIT_OK if agree else EXIT_VERDICT


def cmd_hormander(cfg, seed, workers, out):
    p = get_preset(cfg.preset, cfg.epsilon)
    fast = p.system.fast
    rep = hormander_check(fast.diffusion_fields, fast.drift_field, target_dim=fast.dim)
    verdict = "satisfied" if rep.satisfied else "unsatisfied"
    lines = [f"result = {verdict}, dim {rep.generated_dim}", f"target_dim = {rep.target_dim}",
             f"depth = {rep.depth}"]
    if rep.weak_generated_dim is not None:
        lines.append(f"weak = {rep.weak_satisfied}, dim {rep.weak_generated_dim}")
    out.report("hormander.txt", lines)
    print(f"{verdict}, dim {rep.generated_dim}")
    return EXIT_OK if rep.satisfied else EXIT_VERDICT


def cmd_lln(cfg, seed, workers, out):
    p = get_preset(cfg.preset, 1.0)
    f = p.system.alphas[0]
    pts = lln_error(f, p.system.fast, cfg.t_grid, cfg.paths, seed, cfg.fast_h, cfg.block_size)
    out.csv("lln.csv", ["t", "l2_error", "ci_halfwidth"], [(q.t, q.l2_error, q.ci_halfwidth) for q in pts])
    x = np.log([q.t for q in pts])
    y = np.log([q.l2_error for q in pts])
    slope = float(np.polyfit(x, y, 1)[0])
    ok = -0.6 <= slope <= -0.4
    out.report("lln.txt", [f"slope = {_fmt(slope)}", f"in_band = {ok}"])
    return EXIT_OK if ok else EXIT_VERDICT


def cmd_identity(cfg, seed, workers, out):
    p = get_preset(cfg.preset, cfg.epsilon)
    p.system.validate()
    f = real_trace(p.system.slow_group.n)
    rep = ito_reduction_check(p.system, f, cfg.identity_t, cfg.paths, cfg.theta, seed,
                              block_size=cfg.block_size, workers=workers)
    out.report("identity.txt", [f"lhs = {_fmt(rep.lhs)}", f"rhs = {_fmt(rep.rhs)}",
                                f"pooled_se = {_fmt(rep.pooled_se)}",
                                f"difference_se = {_fmt(rep.difference_se)}",
                                f"allowance = {_fmt(rep.allowance)}", f"pass = {rep.passed}"])
    return EXIT_OK if rep.passed else EXIT_VERDICT


COMMANDS = {
    "simulate": cmd_simulate,
    "converge": cmd_converge,
    "wasserstein": cmd_wasserstein,
    "poisson": cmd_poisson,
    "hormander": cmd_hormander,
    "lln": cmd_lln,
    "identity": cmd_identity,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fastslow", description="Fast-slow diffusions on matrix Lie groups.")
    ap.add_argument("--version", action="version", version=f"fastslow {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file (env FASTSLOW_CONFIG)")
    common.add_argument("--seed", type=int, help="master seed, overrides the config (env FASTSLOW_SEED)")
    common.add_argument("--workers", type=int, help="worker threads (env FASTSLOW_WORKERS, default 1)")
    common.add_argument("--out", help="output directory (env FASTSLOW_OUT, default: config 'output')")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=(COMMANDS[name].__name__.replace("cmd_", "") + " experiment"))
    pp = sub.add_parser("preset", help="list or show presets")
    psub = pp.add_subparsers(dest="preset_command", required=True)
    psub.add_parser("list")
    show = psub.add_parser("show")
    show.add_argument("name")
    return ap


def _env_or(value, key: str, cast=str):
    if value is not None:
        return value
    raw = os.environ.get(ENV_PREFIX + key)
    if raw is None or raw == "":
        return None
    try:
        return cast(raw)
    except ValueError:
        raise UsageError(f"environment variable {ENV_PREFIX + key} has invalid value {raw!r}") from None


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        if args.command == "preset":
            if args.preset_command == "list":
                for name in PRESETS:
                    print(name)
            else:
                print(get_preset(args.name).describe())
            return EXIT_OK
        cfg = load_config(_env_or(args.config, "CONFIG"))
        seed = _env_or(args.seed, "SEED", int)
        seed = cfg.master_seed if seed is None else seed
        workers = _env_or(args.workers, "WORKERS", int)
        workers = 1 if workers is None else workers
        out_dir = _env_or(args.out, "OUT") or cfg.output
        if seed < 0 or workers < 1:
            raise UsageError("seed must be non-negative and workers at least 1")
        if cfg.preset not in PRESETS:
            raise ConfigError(f"unknown preset {cfg.preset!r}", "preset")
        out = Output(out_dir, cfg, seed, args.command)
        return COMMANDS[args.command](cfg, seed, workers, out)
    except (UsageError, ConfigError, KeyError) as exc:
        print(f"fastslow: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NotCenteredError, NotPSDError, VerdictFailed) as exc:
        print(f"fastslow: verdict failed: {exc}", file=sys.stderr)
        return EXIT_VERDICT
    except FastSlowError as exc:
        print(f"fastslow: error: {exc}", file=sys.stderr)
        return EXIT_VERDICT


if __name__ == "__main__":
    sys.exit(main())
