"""Command line interface.

Subcommands: gen-env, effective-d, pde, simulate, hydro, bulk,
diag-replacement, diag-corrected. Exit codes: 0 success, 2 validation
error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .environment import (BondLaw, generate_field, threshold_field, label_clusters,
                          save_field, load_field)
from .errors import SolverError, ValidationError
from .fugacity import FugacityTable, rate_fn_by_name
from .harness import (ComparisonReport, ExperimentSpec, run_bulk_experiment,
                      run_corrected_measure_diagnostic,
                      run_hydrodynamic_experiment, run_replacement_diagnostic,
                      write_report, _atomic_write, _plain, _phi_machinery)
from .homogenization import build_cluster_graph, estimate_D_matrix, estimate_D_msd
from .pde import DensityGrid, solve_to_time
from .zrp import ParticleConfig, sample_product_measure, simulate_kmc


def _law_from_args(args) -> BondLaw:
    return BondLaw(args.law, p=args.p, c=args.c, c0=args.c0, a=args.a, b=args.b)


def _add_law_args(p):
    p.add_argument("--law", default="bernoulli",
                   choices=["bernoulli", "uniform", "twopoint"])
    p.add_argument("--p", type=float, default=0.7)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--c0", type=float, default=1.0)
    p.add_argument("--a", type=float, default=1.0)
    p.add_argument("--b", type=float, default=0.5)


def _spec_from_args(args) -> ExperimentSpec:
    if args.config:
        spec = ExperimentSpec.from_config(args.config)
    else:
        spec = ExperimentSpec()
    if getattr(args, "sigma", None) is not None:
        spec.sigma = args.sigma
    if getattr(args, "out", None):
        spec.output_dir = args.out
    spec.validate()
    return spec


def cmd_gen_env(args) -> int:
    dims = tuple(int(x) for x in args.dims.split(","))
    field = generate_field(_law_from_args(args), dims, args.boundary, args.seed)
    save_field(field, args.out)
    labeling = label_clusters(threshold_field(field, 0.0), field.boundary)
    print(f"wrote {args.out}: dims={dims} bonds={field.n_bonds()} "
          f"clusters={labeling.n_clusters} giant_fraction={labeling.giant_fraction:.6f}")
    return 0


def cmd_effective_d(args) -> int:
    records = []
    for k in range(args.seeds):
        if args.env:
            field = load_field(args.env)
            seed = field.seed + k
        else:
            dims = (args.L,) * args.d
            seed = args.seed + k
            field = generate_field(_law_from_args(args), dims, "periodic", seed)
        labeling = label_clusters(threshold_field(field, 0.0), field.boundary)
        entry = {"L": field.dims[0], "seed": seed,
                 "law": field.law.to_dict(), "m_hat": labeling.giant_fraction}
        if args.method in ("variational", "both"):
            graph = build_cluster_graph(field, labeling, N=field.dims[0])
            est = estimate_D_matrix(graph)
            entry["variational"] = {"matrix": est.matrix.tolist(),
                                    "sigma": est.sigma}
        if args.method in ("msd", "both"):
            est = estimate_D_msd(field, labeling, n_walkers=args.walkers,
                                 t_end=args.t_end, seed=seed + 10_000)
            entry["msd"] = {"matrix": est.matrix.tolist(), "sigma": est.sigma,
                            "rms_displacement": est.meta["rms_displacement"]}
        records.append(entry)
        if args.env:
            break
    sigmas = {}
    for method in ("variational", "msd"):
        vals = [r[method]["sigma"] for r in records if method in r]
        if vals:
            sigmas[method] = {"mean": float(np.mean(vals)),
                              "sd": float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0}
    payload = json.dumps(_plain({"records": records, "sigma": sigmas}),
                         sort_keys=True, indent=1)
    if args.out:
        _atomic_write(args.out, payload)
        print(f"wrote {args.out}")
    else:
        print(payload)
    return 0


def cmd_pde(args) -> int:
    spec = ExperimentSpec(rate_fn=args.g, profile=args.rho0,
                          profile_value=args.value, profile_low=args.low,
                          profile_high=args.high, d=args.d)
    _, interp, ppmax = _phi_machinery(spec, spec.profile_max() / max(args.m, 1e-9))
    grid = DensityGrid.from_profile(spec.profile_fn(), args.grid, args.d,
                                    m=args.m, sigma=args.sigma, phi=interp,
                                    phi_prime_max=ppmax)
    final, _ = solve_to_time(grid, args.t_end)
    os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
    flat = final.values.ravel()
    idx = np.indices(final.values.shape).reshape(final.d, -1).T
    lines = [",".join(f"i{a}" for a in range(final.d)) + ",rho"]
    lines += [",".join(map(str, row)) + f",{v!r}" for row, v in zip(idx.tolist(), flat)]
    _atomic_write(args.out, "\n".join(lines) + "\n")
    meta = {"t": final.t, "mass": final.mass(), "m": args.m, "sigma": args.sigma,
            "g": args.g, "grid": args.grid}
    _atomic_write(args.out + ".meta.json", json.dumps(_plain(meta), sort_keys=True, indent=1))
    print(f"wrote {args.out} (t={final.t:.6f}, mass={final.mass():.12f})")
    return 0


def cmd_simulate(args) -> int:
    field = load_field(args.env)
    labeling = label_clusters(threshold_field(field, 0.0), field.boundary)
    rate = rate_fn_by_name(args.g)
    obs = [float(x) for x in args.obs_times.split(",")] if args.obs_times else []
    cfg = sample_product_measure(rate, args.rho0, labeling, args.N, seed=args.seed)
    res = simulate_kmc(field, labeling, cfg, rate, args.N, args.t_end, obs,
                       seed=args.seed + 1)
    np.savez_compressed(
        args.out, N=args.N, seed=args.seed, times=np.asarray(res.times),
        snapshots=np.stack(res.snapshots), event_count=res.clock.event_count)
    csv = ["time,total_particles"]
    csv += [f"{t!r},{int(s.sum())}" for t, s in zip(res.times, res.snapshots)]
    _atomic_write(str(args.out) + ".observables.csv", "\n".join(csv) + "\n")
    print(f"wrote {args.out}: {res.clock.event_count} events to t={args.t_end}")
    return 0


def _run_report(args, runner) -> int:
    spec = _spec_from_args(args)
    report = runner(spec)
    out = spec.output_dir or args.out or "."
    path = write_report(report, out)
    print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="zrphydro", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-env", help="generate and save a conductance field")
    _add_law_args(p)
    p.add_argument("--dims", required=True, help="comma-separated side lengths")
    p.add_argument("--boundary", default="periodic", choices=["periodic", "free"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gen_env)

    p = sub.add_parser("effective-d", help="estimate the effective diffusivity")
    _add_law_args(p)
    p.add_argument("--env", help="saved field (.npz); otherwise generate")
    p.add_argument("--L", type=int, default=256)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--seeds", type=int, default=1, help="ensemble size")
    p.add_argument("--method", default="both",
                   choices=["variational", "msd", "both"])
    p.add_argument("--walkers", type=int, default=20000)
    p.add_argument("--t-end", dest="t_end", type=float, default=60.0)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_effective_d)

    p = sub.add_parser("pde", help="solve the limiting nonlinear heat equation")
    p.add_argument("--rho0", default="smooth_step",
                   choices=["constant", "smooth_step", "cosine"])
    p.add_argument("--value", type=float, default=0.5)
    p.add_argument("--low", type=float, default=0.2)
    p.add_argument("--high", type=float, default=0.8)
    p.add_argument("--m", type=float, default=1.0)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--g", default="indicator",
                   choices=["linear", "indicator", "capped"])
    p.add_argument("--t-end", dest="t_end", type=float, default=0.05)
    p.add_argument("--grid", type=int, default=128)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_pde)

    p = sub.add_parser("simulate", help="one KMC run with snapshots")
    p.add_argument("--env", required=True)
    p.add_argument("--g", default="indicator",
                   choices=["linear", "indicator", "capped"])
    p.add_argument("--rho0", type=float, default=0.5,
                   help="constant initial density on the giant cluster")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--t-end", dest="t_end", type=float, required=True)
    p.add_argument("--obs-times", dest="obs_times", default="")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_simulate)

    for name, runner, blurb in [
            ("hydro", run_hydrodynamic_experiment, "hydrodynamic ladder"),
            ("bulk", run_bulk_experiment, "full-window trap experiment"),
            ("diag-replacement", run_replacement_diagnostic,
             "replacement statistic ladder"),
            ("diag-corrected", run_corrected_measure_diagnostic,
             "corrected empirical measure gap")]:
        p = sub.add_parser(name, help=blurb)
        p.add_argument("--config", help="INI experiment spec")
        p.add_argument("--sigma", type=float, help="effective diffusivity")
        p.add_argument("--out", help="output directory")
        p.set_defaults(fn=lambda a, r=runner: _run_report(a, r))

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
