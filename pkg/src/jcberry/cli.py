"""
Command-line entry point.

    jcberry analytic {berry,openloop,solid-angle,semiclassical} ...
    jcberry simulate {ramsey,fstate-loop,echo,rabi,calibrate-phase} ...
    jcberry reproduce {fig3c,fig3d,fig4c} ...

Exit codes: 0 success, 2 usage, 3 numerical failure, 4 I/O.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import re
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, analytic, estimation, pipelines, protocols
from .config import ConfigError, RunConfig, mhz_to_rad, parse_grid, parse_int_range, parse_range, parse_value
from .dynamics import IntegrationError

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4
TWO_PI = 2.0 * math.pi

log = logging.getLogger("jcberry")


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# table output


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_table(rows: list[dict], path: Optional[Path], stream=None) -> None:
    if not rows:
        return
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = list(rows[0])
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in cols])
    text = buf.getvalue()
    if path is None:
        (stream or sys.stdout).write(text)
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# --------------------------------------------------------------------------
# analytic


def cmd_analytic(args, cfg: RunConfig) -> int:
    out = Path(args.out) if args.out else None
    rows = []
    if args.what == "berry":
        g = mhz_to_rad(args.g_mhz if args.g_mhz is not None else cfg.device["g_mhz"])
        for n in parse_int_range(args.n):
            for d in parse_range(args.delta_mhz, args.points):
                pp = analytic.berry_phase_closed(g, mhz_to_rad(d), n)
                rows.append({"delta_mhz": float(d), "n": n, "gamma_minus_rad": pp.minus,
                             "gamma_plus_rad": pp.plus, "difference_rad": pp.difference})
    elif args.what == "openloop":
        g = mhz_to_rad(args.g_mhz if args.g_mhz is not None else cfg.device["g_mhz"])
        d = mhz_to_rad(args.delta_mhz)
        n = int(args.n)
        p = analytic.CouplingParams(g, d, n)
        init = analytic.SubspaceVector([1.0, 0.0], n)
        for dp in parse_grid(args.dphi_grid):
            rows.append({
                "dphi_rad": float(dp),
                "p_f": analytic.openloop_probability_fstate(g, d, n, args.tau_us * 1e-6, float(dp)),
                "p_f_general": analytic.openloop_probability_general(init, p, args.tau_us * 1e-6, float(dp)),
            })
    elif args.what == "solid-angle":
        theta = parse_value(args.theta)
        om = analytic.solid_angle_cap(theta)
        row = {"theta_rad": theta, "solid_angle_sr": om, "gamma_rad": analytic.berry_from_solid_angle(om)}
        if args.dphi is not None:
            om_m, om_p, diff = analytic.geodesic_closure_angles(theta, parse_value(args.dphi))
            row.update({"dphi_rad": parse_value(args.dphi), "omega_minus_sr": om_m, "omega_plus_sr": om_p,
                        "difference_sr": diff})
        rows.append(row)
    elif args.what == "semiclassical":
        if args.alpha is not None:
            field = analytic.SemiclassicalField(args.mu, args.alpha, 0.0, mhz_to_rad(args.delta_mhz))
        else:
            g = mhz_to_rad(args.g_mhz if args.g_mhz is not None else cfg.device["g_mhz"])
            field = analytic.quantized_equivalent_field(g, mhz_to_rad(args.delta_mhz), int(args.n), args.mu)
        theta, gamma = analytic.semiclassical_path(field, parse_value(args.dphi or "2pi"))
        rows.append({"mu": field.mu, "alpha": field.alpha, "delta_mhz": args.delta_mhz, "theta_rad": theta, "gamma_rad": gamma})
    write_table(rows, out)
    return EXIT_OK


# --------------------------------------------------------------------------
# simulate


def _emit(records, cfg: RunConfig, outdir: Path, stem: str) -> None:
    if not isinstance(records, list):
        records = [records]
    for i, rec in enumerate(records):
        rec = rec.sampled(cfg.shots, cfg.seed + i) if cfg.shots else replace(rec, seed=cfg.seed)
        name = stem if len(records) == 1 else f"{stem}_{i:03d}"
        csv_path, _ = rec.write(outdir, name)
        log.info("wrote %s", csv_path)


def cmd_simulate(args, cfg: RunConfig) -> int:
    dev = cfg.device_params()
    if args.g_mhz is not None:
        dev = replace(dev, g=mhz_to_rad(args.g_mhz))
    ctrl = cfg.integration_control()
    outdir = Path(args.out or cfg.output_dir)
    w = cfg.workers
    if args.what == "ramsey":
        dphi = parse_value(args.dphi)
        grid = np.linspace(0.0, TWO_PI, args.phi_r_points, endpoint=False)
        rec = protocols.ramsey_geometric(args.n, args.branch, args.tau_ns * 1e-9, dphi, grid, dev, ctrl, ramp=not args.no_ramp)
        stem = f"ramsey_n{args.n}_{args.branch}_dphi{dphi:.4f}"
    elif args.what == "fstate-loop":
        dphi = parse_value(args.dphi)
        grid = np.linspace(0.0, TWO_PI, args.phi_r_points, endpoint=False)
        rec = protocols.fstate_loop(args.n, args.k, dphi, grid, dev, ctrl)
        stem = f"fstate_loop_n{args.n}_k{args.k}_dphi{dphi:.4f}"
    elif args.what == "echo":
        rec = protocols.echo_openloop(args.n, mhz_to_rad(args.delta_mhz), args.tau_us * 1e-6, parse_grid(args.dphi_grid),
                                      dev, ctrl, detuning_error=mhz_to_rad(args.detuning_error_khz * 1e-3), workers=w)
        stem = f"echo_n{args.n}_delta{args.delta_mhz:g}mhz"
    elif args.what == "rabi":
        rec = protocols.rabi_spectroscopy(mhz_to_rad(parse_grid(args.delta_grid)), parse_grid(args.tau_grid_ns) * 1e-9,
                                          args.amplitude, dev, ctrl, n=args.n, workers=w)
        stem = f"rabi_n{args.n}"
    elif args.what == "calibrate-phase":
        rec = protocols.echo_phase_calibration(parse_grid(args.phi0_grid), parse_grid(args.tau_grid_ns) * 1e-9, dev, ctrl,
                                               n=args.n, frame_slip=args.frame_slip, workers=w)
        stem = f"calibrate_phase_n{args.n}"
        print(json.dumps({"frame_slip_estimate_rad": protocols.estimate_frame_slip(rec)}))
    else:  # pragma: no cover - argparse restricts choices
        raise UsageError(args.what)
    _emit(rec, cfg, outdir, stem)
    return EXIT_OK


# --------------------------------------------------------------------------
# reproduce


def cmd_reproduce(args, cfg: RunConfig) -> int:
    ctrl = cfg.integration_control()
    outdir = Path(args.out or cfg.output_dir)
    if args.what == "fig3c":
        dev = pipelines.fig3_device(n_max=cfg.device["n_max"])
        taus = parse_grid(args.tau_us) * 1e-6
        rows = pipelines.fig3c_table(taus, dev, ctrl=ctrl)
        summary = {"coupling_rad_s": dev.g, "adiabaticity_times_tau_us": math.pi / dev.g * 1e6}
    elif args.what == "fig3d":
        dev = pipelines.fig3_device(n_max=max(cfg.device["n_max"], 5))
        rows = pipelines.fig3d_table(parse_int_range(args.n), dev, tau=args.tau_us * 1e-6, k=args.k, ctrl=ctrl)
        summary = {"mean_gamma_rad": float(np.mean([r["gamma_rad"] for r in rows]))}
    else:
        dev = cfg.device_params()
        if args.g_mhz is not None:
            dev = replace(dev, g=mhz_to_rad(args.g_mhz))
        deltas = mhz_to_rad(parse_grid(args.delta_mhz))
        res = pipelines.fig4c_table(parse_int_range(args.n), deltas, dev, ctrl, workers=cfg.workers)
        rows = res.rows
        summary = {"global_fit_g_mhz": res.fit["g"] / pipelines.MHZ,
                   "global_fit_g_stderr_mhz": res.fit.error("g") / pipelines.MHZ,
                   "configured_g_mhz": dev.g / pipelines.MHZ}
    summary.update({"schema": 1, "figure": args.what, "rows": len(rows), "seed": cfg.seed})
    write_table(rows, outdir / f"{args.what}.csv")
    _write_json(outdir / f"{args.what}_summary.json", summary)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="jcberry", description="Vacuum-induced Berry phase simulator and analysis toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--config", help="YAML run configuration (default: $JCBERRY_CONFIG)")
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.add_argument("--shots", type=int, help="binomial shots per point (0 = exact populations)")
    p.add_argument("--workers", type=int, help="worker threads for independent grid points")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analytic", help="closed-form curves").add_subparsers(dest="what", required=True)
    b = a.add_parser("berry", help="closed-loop Berry phases versus detuning and photon number")
    b.add_argument("--g-mhz", type=float)
    b.add_argument("--n", default="0")
    b.add_argument("--delta-mhz", default="0")
    b.add_argument("--points", type=int, default=61)
    o = a.add_parser("openloop", help="return probability of |f,n> after an adiabatic open loop")
    o.add_argument("--g-mhz", type=float)
    o.add_argument("--n", type=int, default=0)
    o.add_argument("--delta-mhz", type=float, required=True)
    o.add_argument("--tau-us", type=float, default=1.0)
    o.add_argument("--dphi-grid", default="0:2pi:65")
    s = a.add_parser("solid-angle", help="cap solid angle and geodesic-closure areas")
    s.add_argument("--theta", required=True)
    s.add_argument("--dphi")
    c = a.add_parser("semiclassical", help="effective-field cone angle and phase")
    c.add_argument("--g-mhz", type=float)
    c.add_argument("--n", type=int, default=0)
    c.add_argument("--delta-mhz", type=float, default=0.0)
    c.add_argument("--alpha", type=float)
    c.add_argument("--mu", type=float, default=1.0)
    c.add_argument("--dphi")
    for sp in (b, o, s, c):
        sp.add_argument("--out", help="CSV path (default: stdout)")

    sim = sub.add_parser("simulate", help="run one experiment").add_subparsers(dest="what", required=True)
    r = sim.add_parser("ramsey")
    r.add_argument("--n", type=int, default=0)
    r.add_argument("--branch", choices=protocols.BRANCHES, default="minus")
    r.add_argument("--tau-ns", type=float, default=420.0)
    r.add_argument("--dphi", default="2pi")
    r.add_argument("--phi-r-points", type=int, default=24)
    r.add_argument("--no-ramp", action="store_true")
    f = sim.add_parser("fstate-loop")
    f.add_argument("--n", type=int, default=0)
    f.add_argument("--k", type=int, required=True)
    f.add_argument("--dphi", default="2pi")
    f.add_argument("--phi-r-points", type=int, default=24)
    e = sim.add_parser("echo")
    e.add_argument("--n", type=int, default=0)
    e.add_argument("--delta-mhz", type=float, required=True)
    e.add_argument("--tau-us", type=float, default=2.0)
    e.add_argument("--dphi-grid", default="0:2pi:64")
    e.add_argument("--detuning-error-khz", type=float, default=0.0)
    rb = sim.add_parser("rabi")
    rb.add_argument("--n", type=int, default=0)
    rb.add_argument("--delta-grid", default="-12:12:25", help="MHz")
    rb.add_argument("--tau-grid-ns", default="10:400:79")
    rb.add_argument("--amplitude", type=float, default=1.0)
    cp = sim.add_parser("calibrate-phase")
    cp.add_argument("--n", type=int, default=0)
    cp.add_argument("--phi0-grid", default="0:2pi:24")
    cp.add_argument("--tau-grid-ns", default="10:200:39")
    cp.add_argument("--frame-slip", type=float)
    for sp in (r, f, e, rb, cp):
        sp.add_argument("--g-mhz", type=float)
        sp.add_argument("--out", help="output directory")

    rep = sub.add_parser("reproduce", help="figure-level sweeps").add_subparsers(dest="what", required=True)
    f3c = rep.add_parser("fig3c")
    f3c.add_argument("--tau-us", default="0.1,0.2,0.3,0.42,0.6,1,1.5,2,3")
    f3d = rep.add_parser("fig3d")
    f3d.add_argument("--n", default="0..4")
    f3d.add_argument("--tau-us", type=float, default=20.0)
    f3d.add_argument("--k", type=int, default=40)
    f4c = rep.add_parser("fig4c")
    f4c.add_argument("--n", default="0..3")
    f4c.add_argument("--delta-mhz", default="-15,-10,-5,-2.5,0,2.5,5,10,15")
    f4c.add_argument("--g-mhz", type=float)
    for sp in (f3c, f3d, f4c):
        sp.add_argument("--out", help="output directory")
    return p


_NEGATIVE = re.compile(r"^-(\d|\.\d|pi)")


def _attach_negative_values(argv: list[str]) -> list[str]:
    """Rewrite ``--opt -15..15`` as ``--opt=-15..15`` so ranges may start negative."""
    out: list[str] = []
    for tok in argv:
        if out and out[-1].startswith("--") and "=" not in out[-1] and _NEGATIVE.match(tok):
            out[-1] = f"{out[-1]}={tok}"
        else:
            out.append(tok)
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parser.parse_args(_attach_negative_values(argv))
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = RunConfig.load(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.shots is not None:
            cfg.shots = args.shots
        if args.workers is not None:
            cfg.workers = max(1, args.workers)
        handler = {"analytic": cmd_analytic, "simulate": cmd_simulate, "reproduce": cmd_reproduce}[args.command]
        return handler(args, cfg)
    except (IntegrationError, estimation.FitError, np.linalg.LinAlgError) as exc:
        print(f"jcberry: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"jcberry: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, UsageError, ValueError, IndexError) as exc:
        print(f"jcberry: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
