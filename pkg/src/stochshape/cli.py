"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical abort.
"""

from __future__ import annotations

import argparse
import os
import platform
import sys
import time
from dataclasses import replace

import numpy as np

from . import __version__
from .analysis import (PiecewiseAffine, converge_study, energy_study, equivariance_check,
                       kunita_flow, quadratic_variation, reparam_pullback_study)
from .config import ConfigError, RunConfig, parse_config
from .dyadic import (DyadicFunction, f_s_level_terms, f_s_norm, h_neg_s_norm, h_s_norm,
                     sobolev_constant, sup_norm)
from .dynamics import IntegrationError, PhaseState, euler_maruyama, hamiltonian, integrate_geodesic
from .noise import NoiseDriver, Scalar
from .serialize import write_json, write_snapshot_svg, write_table, write_trajectory
from .shooting import ShootOptions, shoot

# initial momenta for forward runs only need a close fit, not the full shooting tolerance
INITIAL_SHOOT = ShootOptions(tol=5e-5)

COMMANDS = ("geodesic", "sde", "shoot", "converge", "energy", "norms", "kunita",
            "equivariance", "reparam", "version")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="stochshape", description="Stochastic landmark and curve dynamics experiments.")
    p.add_argument("command", choices=COMMANDS, metavar="command", help=", ".join(COMMANDS))
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--out", help="output directory (overrides config 'output')")
    p.add_argument("--seed", type=int, help="noise seed, unsigned 64-bit (overrides noise.seed)")
    p.add_argument("--trials", type=int, help="Monte Carlo trials (overrides analysis.trials)")
    return p


class _Run:
    """Shared state of one CLI invocation."""

    def __init__(self, cfg: RunConfig, out: str, trials_flag: int | None):
        self.cfg = cfg
        self.out = out
        self.trials_flag = trials_flag
        self.summary: dict = {}
        self.exit_code = 0

    def path(self, name: str) -> str:
        return os.path.join(self.out, name)

    def q0(self) -> np.ndarray:
        return self.cfg.shape.points(self.cfg.convention, self.cfg.base_dir)

    def dyadic_shape(self) -> DyadicFunction:
        n = self.cfg.shape.n
        if n & (n - 1):
            raise UsageError(f"this command needs a power-of-2 shape.n, got {n}")
        return DyadicFunction(self.cfg.shape.points("density", self.cfg.base_dir))

    def initial_state(self) -> PhaseState:
        """Initial momentum from shooting onto the target, or zero without a target."""
        cfg = self.cfg
        q0 = self.q0()
        w = cfg.weights
        if cfg.target is None:
            p0 = np.zeros_like(q0)
        else:
            target = cfg.target.points(cfg.convention, cfg.base_dir)
            res = shoot(q0, target, cfg.kernel, INITIAL_SHOOT, w=w)
            self.summary["shoot_loss"] = res.loss
            self.summary["shoot_converged"] = res.converged
            p0 = res.p0
        return PhaseState(q0, p0, w)

    def snapshot(self, traj, name="snapshot.svg"):
        if traj.q.shape[-1] == 2:
            write_snapshot_svg(traj, self.path(name), stride=max(1, (len(traj.times) - 1) // 20))


def _geodesic(run: _Run):
    cfg = run.cfg
    x0 = run.initial_state()
    traj = integrate_geodesic(x0, cfg.kernel, cfg.T, cfg.steps)
    write_trajectory(traj, run.path("trajectory.csv"))
    run.snapshot(traj)
    run.summary.update(H0=hamiltonian(x0, cfg.kernel), HT=hamiltonian(traj.final, cfg.kernel), aborted=0)


def _sde(run: _Run):
    cfg = run.cfg
    x0 = run.initial_state()
    trials = run.trials_flag
    driver = NoiseDriver(cfg.seed, max_level=cfg.max_level, dim=x0.d, steps=cfg.steps,
                         dt=cfg.T / cfg.steps, trials=trials)
    traj = euler_maruyama(x0, cfg.kernel, cfg.sigma, driver, cfg.T, cfg.steps,
                          on_abort="raise" if trials is None else "mask")
    H = hamiltonian(traj.final, cfg.kernel)
    aborted = int(np.sum(traj.aborted))
    if trials is not None:
        traj.q, traj.p = traj.q[:, 0], traj.p[:, 0]
        finite = np.isfinite(H)
        H = float(np.mean(H[finite])) if finite.any() else float("nan")
        run.summary["trials"] = trials
        write_table(run.path("aborts.csv"), ["trial", "abort_step"],
                    [(i, int(s)) for i, s in enumerate(traj.meta["abort_steps"])])
    if np.all(np.isfinite(traj.q)):
        write_trajectory(traj, run.path("trajectory.csv"))
        run.snapshot(traj)
    run.summary.update(H0=hamiltonian(x0, cfg.kernel), HT=H, aborted=aborted,
                       max_abs_q=float(np.nanmax(np.abs(traj.q))))
    if aborted:
        run.exit_code = 2


def _shoot(run: _Run):
    cfg = run.cfg
    if cfg.target is None:
        raise UsageError("shoot needs a 'target' shape in the config")
    q0 = run.q0()
    target = cfg.target.points(cfg.convention, cfg.base_dir)
    res = shoot(q0, target, cfg.kernel, ShootOptions(), w=cfg.weights)
    d = q0.shape[1]
    write_table(run.path("p0.csv"), ["i"] + [f"p{c}" for c in range(d)],
                [[i] + [float(v) for v in row] for i, row in enumerate(res.p0)])
    write_json(run.path("loss_history.json"), {"loss": res.history, "converged": res.converged,
                                               "iterations": res.iterations})
    x0 = PhaseState(q0, res.p0, cfg.weights)
    traj = integrate_geodesic(x0, cfg.kernel, 1.0, ShootOptions().steps)
    run.snapshot(traj)
    run.summary.update(H0=hamiltonian(x0, cfg.kernel), HT=hamiltonian(traj.final, cfg.kernel),
                       aborted=0, final_loss=res.loss, converged=res.converged,
                       iterations=res.iterations)


def _trials(run: _Run) -> int:
    return run.trials_flag if run.trials_flag is not None else run.cfg.trials


def _converge(run: _Run):
    cfg = run.cfg
    q0 = run.dyadic_shape()
    p0 = DyadicFunction(np.zeros_like(q0.values))
    res = converge_study(q0, p0, cfg.kernel, cfg.sigma, cfg.s, cfg.levels, _trials(run), cfg.T,
                         cfg.steps, cfg.seed)
    res.pop("per_trial")
    write_json(run.path("report.json"), res)
    write_table(run.path("converge.csv"), ["level", "mean_distance"],
                zip(res["levels"], res["mean_distance"]))
    run.summary.update(aborted=res["aborted"], slope=res["slope"])


def _energy(run: _Run):
    cfg = run.cfg
    if cfg.convention != "density" or cfg.kernel.family != "gaussian" or not isinstance(cfg.sigma, Scalar):
        raise UsageError("energy needs the density convention, a Gaussian kernel and a scalar sigma")
    x0 = run.initial_state()
    res = energy_study(x0, cfg.kernel, cfg.sigma, cfg.T, cfg.steps, _trials(run), cfg.seed)
    dH = res.pop("dH")
    write_json(run.path("report.json"), res)
    write_table(run.path("energy.csv"), ["trial", "dH"], enumerate(map(float, dH)))
    run.summary.update(H0=res["H0"], mean_dH=res["mean_dH"], aborted=res["aborted"])


def _norms(run: _Run):
    s = run.cfg.s
    f = run.dyadic_shape()
    terms = f_s_level_terms(f, s)
    rep = {"level": f.level, "s": s, "h_s": h_s_norm(f, s), "h_neg_s": h_neg_s_norm(f, s),
           "f_s": f_s_norm(f, s), "sup": sup_norm(f), "C_s": sobolev_constant(s)}
    rep["C_s_times_h_s"] = rep["C_s"] * rep["h_s"]
    write_json(run.path("report.json"), rep)
    write_table(run.path("f_s_terms.csv"), ["n", "term"], enumerate(map(float, terms)))
    run.summary.update(rep)


def _kunita(run: _Run):
    cfg = run.cfg
    pts = cfg.shape.points("point", cfg.base_dir)
    trials = _trials(run)
    kt = kunita_flow(pts, cfg.kernel, cfg.T, cfg.steps, cfg.seed, trials)
    x0 = PhaseState.points(pts, np.zeros_like(pts))
    driver = NoiseDriver(cfg.seed, max_level=cfg.max_level, dim=x0.d, steps=cfg.steps,
                         dt=cfg.T / cfg.steps, trials=trials)
    so = euler_maruyama(x0, cfg.kernel, cfg.sigma, driver, cfg.T, cfg.steps, on_abort="mask")
    qv_k = float(np.mean(quadratic_variation(kt)))
    keep = ~so.aborted
    qv_s = float(np.mean(quadratic_variation(so)[keep])) if keep.any() else float("nan")
    rep = {"qv_kunita": qv_k, "qv_second_order": qv_s, "ratio": qv_s / qv_k, "dt": cfg.T / cfg.steps,
           "trials": trials, "aborted": int((~keep).sum())}
    write_json(run.path("report.json"), rep)
    kt.q, kt.p = kt.q[:, 0], kt.p[:, 0]
    write_trajectory(kt, run.path("kunita_trajectory.csv"))
    run.snapshot(kt, "kunita.svg")
    run.summary.update(rep)


def _equivariance(run: _Run):
    cfg = run.cfg
    x0 = run.initial_state()
    perm = np.random.default_rng(cfg.seed).permutation(x0.n)
    det = equivariance_check(x0, perm, cfg.kernel, Scalar(0.0), cfg.T, cfg.steps, cfg.seed)
    sto = equivariance_check(x0, perm, cfg.kernel, cfg.sigma, cfg.T, cfg.steps, cfg.seed)
    rep = {"permutation": perm, "deterministic_deviation": det, "stochastic_deviation": sto}
    write_json(run.path("report.json"), rep)
    run.summary.update(deterministic_deviation=det, stochastic_deviation=sto, aborted=0)


def _reparam(run: _Run):
    cfg = run.cfg
    phi = PiecewiseAffine((0.0, 0.5), (0.0, 0.25), (0.5, 1.5))
    levels = [n for n in cfg.levels]
    if any(n < 1 for n in levels):
        raise UsageError("reparam needs analysis.levels >= 1")
    rep = reparam_pullback_study(cfg.shape.curve(cfg.base_dir), phi, cfg.kernel, levels, cfg.T,
                                 cfg.steps, cfg.s)
    rep["phi"] = {"starts": phi.starts, "images": phi.images, "slopes": phi.slopes}
    write_json(run.path("report.json"), rep)
    write_table(run.path("reparam.csv"), ["level", "l2_deviation", "h_neg_s_deviation"],
                zip(rep["levels"], rep["l2_deviation"], rep["h_neg_s_deviation"]))
    run.summary.update(aborted=0)


_HANDLERS = {"geodesic": _geodesic, "sde": _sde, "shoot": _shoot, "converge": _converge,
             "energy": _energy, "norms": _norms, "kunita": _kunita,
             "equivariance": _equivariance, "reparam": _reparam}


def _manifest(run: _Run, command: str, wall: float) -> dict:
    return {"command": command, "version": __version__, "config": run.cfg.to_dict(),
            "summary": run.summary, "exit_code": run.exit_code, "wall_time_s": wall,
            "platform": {"python": platform.python_version(), "numpy": np.__version__,
                         "machine": platform.machine()}}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return 0 if exc.code in (0, None) else 1
    if args.command == "version":
        print(f"stochshape {__version__}")
        return 0
    run = None
    try:
        if not args.config:
            raise UsageError(f"{args.command} needs --config")
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise UsageError("--seed must be an unsigned 64-bit integer")
        if args.trials is not None and args.trials < 1:
            raise UsageError("--trials must be >= 1")
        cfg = parse_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        out = args.out or (cfg.output if os.path.isabs(cfg.output)
                           else os.path.join(os.getcwd(), cfg.output))
        os.makedirs(out, exist_ok=True)
        run = _Run(cfg, out, args.trials)
        t0 = time.perf_counter()
        _HANDLERS[args.command](run)
        write_json(run.path("manifest.json"), _manifest(run, args.command, time.perf_counter() - t0))
        return run.exit_code
    except (UsageError, ConfigError) as exc:
        print(f"stochshape: {exc}", file=sys.stderr)
        return 1
    except (IntegrationError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"stochshape: numerical abort: {exc}", file=sys.stderr)
        if run is not None:
            run.exit_code = 2
            run.summary["error"] = str(exc)
            write_json(run.path("manifest.json"), _manifest(run, args.command, float("nan")))
        return 2
