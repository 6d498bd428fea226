"""Batch command-line front end: JSON configs in, CSV artifacts out.

Every run writes a ``manifest.json`` with the resolved configuration, seed,
worker count, and package version, sufficient to reproduce the outputs
bit-exactly.  Units in configs are explicit: keys carry a ``_db`` or
``_linear`` suffix wherever both scales exist.
"""

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import analysis as an
from . import codes as cd
from . import exit_engine as ee
from . import link_sim as ls
from . import profile_optimizer as po
from .exit_engine import DegreeProfile, MacScenario

__all__ = ["main"]


class ConfigError(Exception):
    pass


def _load_config(path):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    return cfg


def _require(cfg, key, types):
    if key not in cfg:
        raise ConfigError(f"missing required config key {key!r}")
    if not isinstance(cfg[key], types):
        raise ConfigError(f"config key {key!r} has the wrong type")
    return cfg[key]


def _sigma2_from_cfg(cfg):
    if ("sigma2_linear" in cfg) == ("gamma_smu_db" in cfg):
        raise ConfigError("give exactly one of sigma2_linear or gamma_smu_db")
    if "sigma2_linear" in cfg:
        return float(cfg["sigma2_linear"])
    return 10.0 ** (-float(cfg["gamma_smu_db"]) / 10.0)


def _profile_from_cfg(cfg, base_dir):
    if ("profile_file" in cfg) == ("profile" in cfg):
        raise ConfigError("give exactly one of profile_file or profile")
    if "profile_file" in cfg:
        return po.load_profile(Path(base_dir) / cfg["profile_file"])
    spec = cfg["profile"]
    lam = {int(k): float(v) for k, v in _require(spec, "lambda", dict).items()}
    degrees = tuple(sorted(lam))
    return DegreeProfile(
        degrees=degrees,
        fractions=tuple(lam[d] for d in degrees),
        d_c=int(_require(spec, "d_c", (int,))),
        v_max=int(spec.get("v_max", 320)),
        c_max=int(spec.get("c_max", 64)),
    )


def _write_manifest(out_dir, subcommand, cfg, args):
    manifest = {
        "tool": "idmakit",
        "version": __version__,
        "subcommand": subcommand,
        "seed": args.seed,
        "workers": args.workers,
        "config": cfg,
    }
    with open(Path(out_dir) / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def cmd_exit_curve(cfg, out_dir, args):
    n_users = int(_require(cfg, "n_users", (int,)))
    sigma2 = _sigma2_from_cfg(cfg)
    n_grid = int(cfg.get("grid_points", 201))
    if n_grid < 2:
        raise ConfigError("grid_points must be at least 2")
    grid = np.linspace(0.0, 1.0 - 1e-9, n_grid)
    components = _require(cfg, "components", list)
    if not components:
        raise ConfigError("components list is empty")
    for k, comp in enumerate(components):
        kind = _require(comp, "kind", str)
        scen = MacScenario.equal_power(n_users, sigma2=sigma2, d_r=int(comp.get("d_r", 1)))
        if kind == "mud":
            curve = ee.mud_exit_curve(scen, grid)
            name = "exit_mud.csv"
        elif kind == "rep":
            d_r = int(_require(comp, "d_r", (int,)))
            curve = ee.rep_exit_curve(scen, d_r, grid)
            name = f"exit_rep_dr{d_r}.csv"
        elif kind == "mud_rep":
            d_r = int(_require(comp, "d_r", (int,)))
            curve = ee.front_end_exit_curve(scen, d_r, grid)
            name = f"exit_mud_rep_dr{d_r}.csv"
        elif kind == "cnd":
            d_c = int(_require(comp, "d_c", (int,)))
            curve = ee.cnd_exit_curve(d_c, grid)
            name = f"exit_cnd_dc{d_c}.csv"
        elif kind == "composite":
            d_r = int(_require(comp, "d_r", (int,)))
            profile = _profile_from_cfg(comp, out_dir)
            curve = ee.composite_exit_curve(profile, scen, d_r, grid)
            name = f"exit_composite_dr{d_r}.csv"
        else:
            raise ConfigError(f"unknown component kind {kind!r}")
        curve.write_csv(Path(out_dir) / name)

    traj = cfg.get("trajectory")
    if traj:
        d_r = int(_require(traj, "d_r", (int,)))
        users = ls.uniform_users(n_users, d_r)
        sim = ls.LinkSimulator(
            users,
            h=None,
            info_block_len=int(traj.get("info_block_len", 2000)),
            master_seed=args.seed,
            outer_iters=int(traj.get("outer_iters", 25)),
        )
        measured = ls.measure_trajectory(sim, sigma2, n_frames=int(traj.get("frames", 10)))
        with open(Path(out_dir) / "trajectory.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", "i_a_measured", "i_e_measured"])
            for k, (ia, ie) in enumerate(measured):
                writer.writerow([k + 1, f"{ia:.6g}", f"{ie:.6g}"])
    return 0


def cmd_optimize(cfg, out_dir, args):
    n_users = int(_require(cfg, "n_users", (int,)))
    sigma2 = _sigma2_from_cfg(cfg)
    target = cfg.get("target_rate_total")
    spec = po.DesignSpec(
        n_users=n_users,
        sigma2=sigma2,
        v_max=int(cfg.get("v_max", 320)),
        c_max=int(cfg.get("c_max", 64)),
        r_max=int(cfg.get("r_max", 8)),
        target_rate=float(target) if target is not None else None,
    )
    rows = []
    if target is not None:
        d_r_list = cfg.get("d_r_list", [cfg["d_r"]] if "d_r" in cfg else [None])
        for d_r in d_r_list:
            result, sigma2_thr = po.rate_targeted_design(spec, d_r=d_r)
            po.save_design(result, Path(out_dir) / f"design_dr{result.d_r}.txt")
            rows.append((result, sigma2_thr))
    else:
        result = po.sweep_design(spec, d_r_fixed=cfg.get("d_r"))
        if result.feasible:
            po.save_design(result, Path(out_dir) / f"design_dr{result.d_r}.txt")
        rows.append((result, sigma2))
    with open(Path(out_dir) / "design_report.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["d_r", "d_c", "rate_ldpc", "rate_total", "sigma2", "lp_status"])
        for result, s2 in rows:
            writer.writerow(
                [
                    result.d_r,
                    result.profile.d_c if result.feasible else "",
                    f"{result.rate_ldpc:.6g}",
                    f"{result.rate_total:.6g}",
                    f"{s2:.6g}",
                    result.lp_status,
                ]
            )
    return 0


def cmd_threshold(cfg, out_dir, args):
    profile = _profile_from_cfg(cfg, out_dir)
    points = _require(cfg, "points", list)
    if not points:
        raise ConfigError("points list is empty")
    pairs = [(int(p[0]), int(p[1])) for p in points]
    rows = an.gap_surface(
        profile,
        pairs,
        tol_db=float(cfg.get("tol_db", 0.01)),
        max_iters=int(cfg.get("max_iters", 2000)),
    )
    an.write_gap_surface_csv(rows, Path(out_dir) / "gap_surface.csv")
    return 0


def _users_from_cfg(cfg):
    n_users = int(_require(cfg, "n_users", (int,)))
    if "groups" in cfg:
        g = cfg["groups"]
        ratio = 10.0 ** (float(_require(g, "power_ratio_db", (int, float))) / 10.0)
        return ls.two_group_users(n_users, ratio, int(g["rep_strong"]), int(g["rep_weak"]))
    return ls.uniform_users(n_users, int(_require(cfg, "d_r", (int,))))


def cmd_simulate(cfg, out_dir, args):
    users = _users_from_cfg(cfg)
    if cfg.get("uncoded"):
        h = None
        info_block_len = int(_require(cfg, "info_block_len", (int,)))
    else:
        profile = _profile_from_cfg(cfg, out_dir)
        h = cd.select_best_matrix(
            profile,
            int(_require(cfg, "length", (int,))),
            int(cfg.get("n_candidates", 4)),
            seed=args.seed,
        )
        info_block_len = None
    sim = ls.LinkSimulator(
        users,
        h=h,
        info_block_len=info_block_len,
        channel=cfg.get("channel", "awgn"),
        master_seed=args.seed,
        outer_iters=int(cfg.get("outer_iters", 200)),
        inner_bp_iters=int(cfg.get("inner_bp_iters", 1)),
    )
    if "ebn0_db" in cfg:
        points = [float(x) for x in _require(cfg, "ebn0_db", list)]
    else:
        gammas = [float(x) for x in _require(cfg, "gamma_smu_db", list)]
        points = [an.ebn0_db_from_sigma2(10.0 ** (-g / 10.0), sim.sum_rate) for g in gammas]
    report = ls.simulate_ber(
        sim,
        points,
        min_bit_errors=int(cfg.get("min_bit_errors", 200)),
        max_frames=int(cfg.get("max_frames", 2000)),
        workers=args.workers,
        record_trajectory=bool(cfg.get("trajectory", False)),
    )
    report.write_csv(Path(out_dir) / "ber.csv")
    if report.trajectory is not None:
        report.write_trajectory_csv(Path(out_dir) / "trajectory.csv")
    return 0


def cmd_construct(cfg, out_dir, args):
    profile = _profile_from_cfg(cfg, out_dir)
    length = int(_require(cfg, "length", (int,)))
    n_candidates = int(cfg.get("n_candidates", 10))
    girths = []
    best = None
    for k in range(n_candidates):
        h = cd.sample_parity_check(profile, length, seed=args.seed + k)
        g = cd.average_girth(h)
        girths.append(g)
        if best is None or g > girths[best[0]] + 1e-12:
            best = (k, h)
    cd.write_alist(best[1], Path(out_dir) / "matrix.alist")
    with open(Path(out_dir) / "girth_report.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["candidate", "seed", "average_girth", "selected"])
        for k, g in enumerate(girths):
            writer.writerow([k, args.seed + k, f"{g:.6g}", int(k == best[0])])
    return 0


_COMMANDS = {
    "exit-curve": cmd_exit_curve,
    "optimize": cmd_optimize,
    "threshold": cmd_threshold,
    "simulate": cmd_simulate,
    "construct": cmd_construct,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="idmakit",
        description="Code design and link simulation for superposition multiple access.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON configuration file")
        p.add_argument("--out", required=True, help="output directory (created if missing)")
        p.add_argument("--seed", type=int, default=0, help="master seed")
        p.add_argument("--workers", type=int, default=1, help="worker processes")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args.config)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        status = _COMMANDS[args.subcommand](cfg, out_dir, args)
        _write_manifest(out_dir, args.subcommand, cfg, args)
        return status
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
