"""Command-line entry point: certify, design, simulate, sweep, bench."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .bench import X0, format_report, pendulum, table1, write_report_csv
from .design import DesignParams, bisect_h, synthesize, sweep_sigma, write_sweep_csv
from .lmi.families import FAMILIES, build_family
from .lmi.solve import Certificate, check_feasible
from .model import DelayProfile, load_config
from .simulator import SimConfig, run_continuous, run_sampled, write_timeline_csv, write_trajectory_csv


def _outdir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _require_gain(cfg):
    if cfg.gain is None:
        raise SystemExit("config has no gain.K; run `ncspred design` first")
    return cfg.gain


def cmd_certify(args) -> int:
    cfg = load_config(args.config)
    gain = _require_gain(cfg)
    alpha = float(cfg.certify.get("alpha", 0.01))
    family = args.family
    sigma = cfg.trigger.sigma
    if args.bisect_h:
        b = bisect_h(cfg.plant, gain, cfg.delays, alpha, sigma, family, tol=args.tol)
        print(f"{family}: sigma={sigma:g} alpha={alpha:g} h_max={'infeasible' if b.h is None else f'{b.h:.5f}'}")
        cert = b.certificate
    else:
        cert = check_feasible(build_family(family, cfg.plant, gain, cfg.delays, alpha, sigma))
        print(f"{family}: sigma={sigma:g} alpha={alpha:g} h={cfg.delays.h:g} -> {type(cert).__name__}")
        if not isinstance(cert, Certificate) and cert.info:
            print(f"  {cert.info}")
    if isinstance(cert, Certificate):
        print(f"  max violation {cert.max_violation:.3e}")
        for name, lam in cert.margins.items():
            print(f"  margin {name} {lam:.3e}")
        if args.out:
            path = cert.save(_outdir(args.out) / f"certificate_{family}.json")
            print(f"  wrote {path}")
    return 0 if isinstance(cert, Certificate) else 1


def cmd_design(args) -> int:
    cfg = load_config(args.config)
    family = args.family or cfg.certify.get("method", "prop3")
    alpha = float(cfg.certify.get("alpha", 0.01))
    out = synthesize(cfg.plant, DesignParams(family, cfg.delays, alpha, cfg.trigger.sigma))
    if out is None:
        print(f"{family}: no gain found on the (eps1, eps2) grid")
        return 1
    K = np.array2string(out.gain.K, precision=6, separator=", ")
    print(f"{family}: K = {K}  (eps1={out.eps1:.4g}, eps2={out.eps2:.4g})")
    print(f"closed-loop eigenvalues: {np.round(np.linalg.eigvals(cfg.plant.A + cfg.plant.B @ out.gain.K), 4)}")
    return 0


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    gain = _require_gain(cfg)
    sim = cfg.sim
    x0 = sim.get("x0", X0 if cfg.plant.n == 4 else np.ones(cfg.plant.n))
    scfg = SimConfig(float(sim.get("horizon", 20.0)), x0, int(sim.get("seed", 0)))
    if cfg.scenario.continuous:
        res = run_continuous(cfg.plant, gain, cfg.delays.r1, cfg.delays.mu_max, cfg.trigger, cfg.scenario, scfg)
    else:
        res = run_sampled(cfg.plant, gain, cfg.delays, cfg.trigger, cfg.scenario, scfg)
    out = _outdir(args.out)
    write_trajectory_csv(res, out / "trajectory.csv")
    write_timeline_csv(res, out / "timeline.csv")
    for i in range(cfg.plant.n):
        np.savetxt(out / f"x{i + 1}.dat", np.column_stack([res.t, res.x[:, i]]), fmt="%.10g")
    from .plotting import plot_trajectory

    plot_trajectory(res, out / "trajectory.png")
    print(f"{cfg.scenario.value}: SCS={res.scs} measurements={res.measurements_sent} "
          f"|x(T)|={res.final_norm:.4g} diverged={res.diverged}")
    print(f"wrote {out}")
    return 0


def cmd_sweep(args) -> int:
    if args.config:
        cfg = load_config(args.config)
        plant, gain, base = cfg.plant, _require_gain(cfg), cfg.delays
    else:
        plant, gain = pendulum()
        r0, eta = (0.2, 0.01) if args.family == "lemma1" else (0.0, 0.0)
        mu = 0.0 if args.family in ("prop1", "prop3") else 0.01
        base = DelayProfile(r0, 0.2, eta, mu, 0.01)
    grid = np.round(np.arange(args.sigma_from, args.sigma_to + 0.5 * args.step, args.step), 10)
    rows, best = sweep_sigma(plant, gain, base, args.family, grid, SimConfig(args.horizon, X0),
                             args.runs, args.alpha)
    out = _outdir(args.out)
    write_sweep_csv(rows, out / "sweep.csv")
    from .plotting import plot_sweep

    plot_sweep(rows, out / "sweep.png")
    print(f"{'sigma':>8} {'h_max':>9} {'scs_mean':>9}")
    for r in rows:
        h = "-" if r.h_max is None else f"{r.h_max:.4f}"
        s = "-" if r.scs_mean is None else f"{r.scs_mean:.1f}"
        print(f"{r.sigma:>8.3f} {h:>9} {s:>9}")
    if best is not None:
        print(f"best: sigma={best.sigma:g} h={best.h_max:.4f} mean SCS={best.scs_mean:.1f}")
    return 0


def cmd_bench(args) -> int:
    report = table1(args.seed, args.runs, bisect=not args.no_bisect)
    text = format_report(report)
    print(text)
    out = _outdir(args.out)
    (out / "table1.txt").write_text(text + "\n")
    write_report_csv(report, out / "table1.csv")
    from .plotting import plot_table

    plot_table(report, out / "table1.png")
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ncspred", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("certify", help="check a certificate family at the configured h")
    c.add_argument("--family", choices=FAMILIES, required=True)
    c.add_argument("--config", required=True)
    c.add_argument("--bisect-h", action="store_true", help="search the largest certified h")
    c.add_argument("--tol", type=float, default=1e-4)
    c.add_argument("--out", help="directory for the certificate JSON")
    c.set_defaults(func=cmd_certify)

    d = sub.add_parser("design", help="synthesize a state-feedback gain")
    d.add_argument("--config", required=True)
    d.add_argument("--family", choices=FAMILIES)
    d.set_defaults(func=cmd_design)

    s = sub.add_parser("simulate", help="simulate the configured scenario")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    w = sub.add_parser("sweep", help="bisect h_max and simulate over a sigma grid")
    w.add_argument("--family", choices=FAMILIES, required=True)
    w.add_argument("--sigma-from", type=float, required=True)
    w.add_argument("--sigma-to", type=float, required=True)
    w.add_argument("--step", type=float, required=True)
    w.add_argument("--config", help="plant/gain/delays; defaults to the pendulum")
    w.add_argument("--runs", type=int, default=20)
    w.add_argument("--alpha", type=float, default=0.01)
    w.add_argument("--horizon", type=float, default=20.0)
    w.add_argument("--out", default="sweep_out")
    w.set_defaults(func=cmd_sweep)

    b = sub.add_parser("bench", help="benchmark reproductions")
    b.add_argument("which", choices=["table1"])
    b.add_argument("--runs", type=int, default=20)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--no-bisect", action="store_true", help="skip the certified-h searches")
    b.add_argument("--out", default="bench_out")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"ncspred {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
