"""Command-line front end.

    madc <subcommand> --config path.json [--out dir] [--tol x] [--seed n]

Subcommands: evolve, divisibility, joint, classicality, oracle-compare,
sweep.  Each command reads a JSON config, writes delimited output plus a
rendered PNG figure into the output directory, and returns exit code 0 on
success, 1 on numerical failure and 2 on validation/parse errors.
CSV/JSON outputs are deterministic (17-significant-digit floats, atomic
writes); figures are best-effort renderings of the same data.
"""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import classicality as cl
from . import io as mio
from . import oracle as orc
from . import plotting
from . import statistics as st
from .channel import apply_channel, divisibility_report, time_local_generator
from .errors import NumericalError
from .model import (FlatSpectral, SurvivalAmplitude, build_model,
                    memory_kernel, solve_volterra, survival_amplitude_flat)


# ---------------------------------------------------------------------------
# config plumbing
# ---------------------------------------------------------------------------

def _load_config(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise ValueError(f"config file not found: {path}")
    try:
        with open(p) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValueError(f"config parse failure at line {exc.lineno}, "
                         f"column {exc.colno}: {exc.msg}") from exc
    if not isinstance(cfg, dict):
        raise ValueError("config must be a JSON object")
    cfg["_dir"] = p.parent
    return cfg


def _resolve(cfg: dict, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() else cfg["_dir"] / p


def _get_model(cfg: dict):
    if "model" not in cfg:
        raise ValueError("config lacks a 'model' entry")
    m = cfg["model"]
    spec = mio.model_from_dict(m) if isinstance(m, dict) else mio.load_model(_resolve(cfg, m))
    return spec


def _get_bases(cfg: dict, n: int | None = None):
    if "basis" not in cfg and "bases" not in cfg:
        raise ValueError("config lacks a 'basis' (or 'bases') entry")
    if "bases" in cfg:
        paths = cfg["bases"]
        if not isinstance(paths, list) or not paths:
            raise ValueError("'bases' must be a nonempty list")
        bases = [mio.basis_from_list(b) if isinstance(b, list)
                 else mio.load_basis(_resolve(cfg, b)) for b in paths]
        if n is not None and len(bases) != n:
            raise ValueError(f"got {len(bases)} bases for {n} times")
        return bases
    b = cfg["basis"]
    basis = mio.basis_from_list(b) if isinstance(b, list) else mio.load_basis(_resolve(cfg, b))
    return basis


def _get_times(cfg: dict, key: str = "times") -> np.ndarray:
    if key not in cfg:
        raise ValueError(f"config lacks a '{key}' entry")
    t = cfg[key]
    if isinstance(t, dict):
        try:
            times = np.linspace(float(t["start"]), float(t["stop"]), int(t["num"]))
        except KeyError as exc:
            raise ValueError(f"times range needs start/stop/num: missing {exc}") from exc
    else:
        times = np.asarray(t, dtype=float)
    if times.size == 0:
        raise ValueError("times list is empty")
    if np.any(np.diff(times) < 0) or times[0] < 0:
        raise ValueError("times must be sorted and nonnegative")
    return times


def _get_init(cfg: dict, d: int) -> st.InitialState:
    obj = cfg.get("initial_state")
    if obj is None:
        psi = np.zeros(d, dtype=complex)
        psi[0] = 1.0
        return st.InitialState.excited(psi)
    return mio.initial_state_from_dict(obj)


def _out_dir(cfg: dict, args) -> Path:
    out = args.out or cfg.get("out")
    if not out:
        raise ValueError("no output directory: pass --out or set 'out' in the config")
    p = Path(out)
    p.mkdir(parents=True, exist_ok=True)
    return p


# ---------------------------------------------------------------------------
# trajectory helper (flat closed form or Volterra kernel march)
# ---------------------------------------------------------------------------

def _trajectory(spec, times: np.ndarray, cfg: dict):
    """Uniform native-grid trajectory from t = 0 covering ``times``.

    Requested times are snapped to the nearest native grid point; the
    snapped values are what the commands report.
    """
    t_max = max(float(times[-1]), 1e-6)
    if isinstance(spec.spectral, FlatSpectral):
        refine = int(cfg.get("refine", 10))
        n = max((len(times) - 1) * refine, 200)
        native = np.linspace(0.0, t_max, n + 1)
        gen = build_model(spec)
        traj = SurvivalAmplitude.from_flat(gen, native)
    else:
        h = float(cfg.get("h", 1e-3))
        n = max(2, int(round(t_max / h)))
        native = np.linspace(0.0, t_max, n + 1)
        traj = solve_volterra(spec, memory_kernel(spec), native)
    snapped = np.array([traj.times[np.argmin(np.abs(traj.times - t))] for t in times])
    return traj, snapped


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_evolve(cfg: dict, out: Path) -> int:
    spec = _get_model(cfg)
    times = _get_times(cfg)
    init = _get_init(cfg, spec.d)
    traj, samples = _trajectory(spec, times, cfg)
    rho0 = init.block_density()
    rows = []
    curves = {f"pop_e{a + 1}": [] for a in range(spec.d)}
    curves["rho_g"] = []
    curves["opnorm"] = []
    gammas = []
    for t in samples:
        A = traj.at(t)
        dec = time_local_generator(traj, t, _silent=True)
        rho = apply_channel(A, rho0)
        opn = float(np.linalg.norm(A, 2))
        pops = np.real(np.diag(rho.rho_e))
        row = [t, opn, dec.min_eig_gamma] + [float(p) for p in pops]
        row += [float(np.linalg.norm(rho.w)), rho.rho_g]
        rows.append(row)
        for a in range(spec.d):
            curves[f"pop_e{a + 1}"].append(float(pops[a]))
        curves["rho_g"].append(rho.rho_g)
        curves["opnorm"].append(opn)
        gammas.append(dec.min_eig_gamma)
    curves["min_eig_gamma"] = gammas
    header = (["t", "opnorm", "min_eig_gamma"]
              + [f"pop_e{a + 1}" for a in range(spec.d)] + ["coh_norm", "rho_g"])
    mio.write_csv(out / "evolve.csv", header, rows)
    plotting.save_evolution_figure(out / "evolve.png", samples, curves)
    return 0


def cmd_divisibility(cfg: dict, out: Path) -> int:
    spec = _get_model(cfg)
    times = _get_times(cfg)
    traj, samples = _trajectory(spec, times, cfg)
    tol = cfg.get("tol_override")
    report = divisibility_report(traj, grid=samples,
                                 adjacent_only=bool(cfg.get("adjacent_only", False)),
                                 tol_norm=float(tol) if tol is not None else 1e-9)
    mio.write_csv(out / "divisibility.csv",
                  ["s", "t", "opnorm", "min_eig_gamma"], report.rows())
    mio.dump_json({
        "cp_divisible": report.cp_divisible,
        "p_divisible": report.p_divisible,
        "max_opnorm": report.max_opnorm,
        "min_eig_gamma": report.min_eig_gamma,
    }, out / "divisibility.json")
    gt = [g[0] for g in report.gamma_samples]
    gv = [g[1] for g in report.gamma_samples]
    plotting.save_divisibility_figure(out / "divisibility.png", gt, gv,
                                      report.max_opnorm)
    return 0


def cmd_joint(cfg: dict, out: Path) -> int:
    spec = _get_model(cfg)
    times = _get_times(cfg)
    init = _get_init(cfg, spec.d)
    bases = _get_bases(cfg, n=len(times) if "bases" in cfg else None)
    gen = build_model(spec)
    budget = float(cfg.get("budget", 1e7))
    dist = st.full_distribution(gen, init, bases, times, budget=budget)
    rows = []
    for idx, p in dist.items():
        rows.append(list(dist.times) + list(idx) + [p])
    n = dist.n
    header = [f"t_{j + 1}" for j in range(n)] + [f"x_{j + 1}" for j in range(n)] \
        + ["probability"]
    mio.write_csv(out / "distribution.csv", header, rows)
    summary = {
        "n_times": n,
        "normalization": dist.total(),
        "markov_residual": st.verify_markov(dist) if n >= 3 else None,
    }
    mio.dump_json(summary, out / "joint_summary.json")
    plotting.save_distribution_figure(out / "distribution.png", dist)
    return 0


def cmd_classicality(cfg: dict, out: Path) -> int:
    spec = _get_model(cfg)
    times = _get_times(cfg)
    init = _get_init(cfg, spec.d)
    basis = _get_bases(cfg)
    if isinstance(basis, list):
        raise ValueError("classicality uses a single basis")
    gen = build_model(spec)
    tol = cfg.get("tol_override")
    report = cl.classicality_report(
        gen, init, basis, times,
        tol_zero=float(tol) if tol is not None else cl.TOL_ZERO)
    payload = report.as_dict()
    if report.predicate_verdict == "inapplicable":
        payload["note"] = ("structure test not decisive (non-commuting model "
                           "or degenerate decay spectrum); rely on residuals")
    mio.dump_json(payload, out / "classicality.json")
    mio.write_csv(out / "witnesses.csv",
                  ["t1", "t2", "t3", "x", "y", "residual"], report.witnesses)
    plotting.save_witness_figure(out / "classicality.png", report.witnesses)
    return 0


def cmd_oracle_compare(cfg: dict, out: Path) -> int:
    spec = _get_model(cfg)
    times = _get_times(cfg)
    init = _get_init(cfg, spec.d)
    bases = _get_bases(cfg, n=len(times) if "bases" in cfg else None)
    gen = build_model(spec)
    ocfg = cfg.get("oracle", {})
    M = int(ocfg.get("M", 64))
    Omega = float(ocfg.get("Omega", 20.0 * float(np.max(spec.rates))))
    n_max = int(ocfg.get("N_max", len(times) + 1))
    max_dim = int(ocfg.get("max_dim", 20000))
    tol = float(cfg.get("tolerance", 2e-2))
    levels = cfg.get("levels") or [[M, Omega], [2 * M, 2 * Omega]]

    rows = []
    level_max = []
    for (Mi, Omi) in levels:
        bath = orc.DiscretizedBath.from_spec(spec, int(Mi), float(Omi))
        dist = orc.full_distribution_oracle(spec, bath, bases, init, times,
                                            n_max, max_dim=max_dim)
        worst = 0.0
        for idx, p_oracle in dist.items():
            p_exact = st.joint_prob_regression(gen, init, bases, times, idx)
            err = abs(p_oracle - p_exact)
            worst = max(worst, err)
            label = "P(" + "".join(str(x) for x in idx) + ")"
            rows.append([int(Mi), float(Omi), label, p_exact, p_oracle, err])
        level_max.append(worst)
    shrinking = all(b <= a for a, b in zip(level_max, level_max[1:]))
    passed = level_max[0] <= tol
    mio.write_csv(out / "refinement.csv",
                  ["M", "Omega", "observable", "analytic", "oracle", "abs_error"],
                  rows)
    mio.dump_json({
        "tolerance": tol,
        "max_error_per_level": level_max,
        "errors_shrink": shrinking,
        "pass": bool(passed and shrinking),
    }, out / "oracle_compare.json")
    plotting.save_refinement_figure(out / "refinement.png", rows)
    return 0 if passed and shrinking else 1


def _sweep_point(payload):
    """Worker: classicality residuals for one basis rotation angle."""
    model_dict, theta, (s, r, t), plane = payload
    spec = mio.model_from_dict(model_dict)
    gen = build_model(spec)
    basis = st.MeasurementBasis.rotated_excited(spec.d, theta, *plane)
    ck = float(cl.chapman_kolmogorov_residuals(gen, basis, s, r, t).max())
    ng = cl.ncgd_residual(gen, basis, s, r, t)
    return theta, ck, ng


def cmd_sweep(cfg: dict, out: Path) -> int:
    spec = _get_model(cfg)
    times = _get_times(cfg)
    if len(times) != 3:
        raise ValueError("sweep needs exactly three times (s, r, t)")
    if spec.d < 2:
        raise ValueError("basis rotation sweep needs d >= 2")
    sweep = cfg.get("sweep", {})
    num = int(sweep.get("num", 33))
    workers = int(sweep.get("workers", 1))
    plane = tuple(sweep.get("plane", (0, 1)))
    thetas = np.linspace(0.0, np.pi / 2, num)
    model_dict = mio.model_to_dict(spec)
    payloads = [(model_dict, float(th), tuple(times), plane) for th in thetas]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_point, payloads))
    else:
        results = [_sweep_point(p) for p in payloads]
    results.sort(key=lambda r: r[0])
    mio.write_csv(out / "sweep.csv", ["theta", "ck_residual", "ncgd_residual"],
                  results)
    tol = float(cfg.get("tol_override") or cl.TOL_ZERO)
    zeros = [th for (th, ck, _) in results if ck <= tol]
    mio.dump_json({"zero_angles": zeros, "tolerance": tol},
                  out / "sweep.json")
    plotting.save_sweep_figure(out / "sweep.png", [r[0] for r in results],
                               [r[1] for r in results], [r[2] for r in results])
    return 0


COMMANDS = {
    "evolve": cmd_evolve,
    "divisibility": cmd_divisibility,
    "joint": cmd_joint,
    "classicality": cmd_classicality,
    "oracle-compare": cmd_oracle_compare,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="madc",
        description="multilevel amplitude-damping model toolkit")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--tol", type=float, default=None,
                        help="override the command's decision tolerance")
    parser.add_argument("--seed", type=int, default=None,
                        help="seed for randomized model generation (reserved)")
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args.config)
        if args.tol is not None:
            cfg["tol_override"] = args.tol
        if args.seed is not None:
            cfg["seed"] = args.seed
        out = _out_dir(cfg, args)
        return COMMANDS[args.command](cfg, out)
    except NumericalError as exc:
        print(f"madc: numerical failure: {exc}", file=sys.stderr)
        return 1
    except (ValueError, KeyError, OSError) as exc:
        print(f"madc: invalid input: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
