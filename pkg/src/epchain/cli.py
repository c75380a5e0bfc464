"""Command-line front end emitting plot-ready CSV/JSON figure data.

Subcommands map one-to-one onto the analysis pipelines: `coms` (build
the conserved operators and check them), `evolve` (conserved-quantity time
series), `density` (defect-density table with continuity residuals), `sweep`
and `fit-tau` (timescale scaling), `block` and `correspondence` (deformed
Jordan-block theory reports), `circuit` (post-selected sampling data).
Every output file carries its fully resolved configuration in '#'-prefixed
header lines and is written atomically.

Exit codes: 0 success, 1 usage error, 2 numerical failure, 3 config error.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import io
import json
import math
import os
import sys

import jsonschema
import numpy as np

from . import __version__
from . import chain as chain_mod
from . import circuit as circuit_mod
from . import dynamics as dyn_mod
from . import fitting as fit_mod
from . import jordan as jordan_mod
from .opalg import conservation_residual, write_atomic

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2
EXIT_CONFIG = 3

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "L": {"type": "integer", "minimum": 1},
        "J": {"type": "number"},
        "g": {"type": "number"},
        "delta": {"type": "number"},
        "t_max": {"type": "number", "exclusiveMinimum": 0},
        "dt_out": {"type": "number", "exclusiveMinimum": 0},
        "rel_tol": {"type": "number", "exclusiveMinimum": 0},
        "observables": {
            "type": "array",
            "items": {"enum": ["C1", "C2", "C3"]},
            "minItems": 1,
        },
        "init": {"enum": ["uniform", "polarized", "defect",
                          "gaussian_defect"]},
        "seed": {"type": "integer", "minimum": 0,
                 "maximum": 2**64 - 1},
        "shots": {"type": "integer", "minimum": 1},
        "output": {"type": "string"},
    },
}

DEFAULTS = {
    "L": 6, "J": 1.0, "g": 1.0, "delta": 0.0,
    "t_max": 30.0, "dt_out": 0.25, "rel_tol": 1e-10,
    "observables": ["C1", "C2", "C3"], "init": "uniform",
    "seed": 0, "shots": 10**5, "output": "",
}


class ConfigError(Exception):
    pass


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped onto exit code 1."""

    def error(self, message):
        raise UsageError(message)


def resolve_config(args: argparse.Namespace) -> dict:
    """defaults < --config file < explicit command-line flags."""
    cfg = dict(DEFAULTS)
    path = getattr(args, "config", None)
    if path:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                loaded = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
        try:
            jsonschema.validate(loaded, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise ConfigError(f"config rejected: {exc.message}") from exc
        cfg.update(loaded)
    for key in DEFAULTS:
        flag = getattr(args, key, None)
        if flag is not None:
            cfg[key] = flag
    if isinstance(cfg["observables"], str):
        cfg["observables"] = cfg["observables"].split(",")
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config rejected: {exc.message}") from exc
    return cfg


def max_workers() -> int:
    """Parallelism cap: EPCHAIN_THREADS if set, else the CPU count."""
    env = os.environ.get("EPCHAIN_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError as exc:
            raise ConfigError(f"EPCHAIN_THREADS must be an integer: {env!r}") \
                from exc
        if n < 1:
            raise ConfigError("EPCHAIN_THREADS must be >= 1")
        return n
    return os.cpu_count() or 1


def _header(cfg: dict, extra: dict | None = None) -> str:
    resolved = dict(cfg)
    resolved.update(extra or {})
    return (f"# epchain {__version__}\n"
            f"# config: {json.dumps(resolved, sort_keys=True)}\n")


def _emit(path: str, text: str) -> None:
    if path:
        write_atomic(path, text)
    else:
        sys.stdout.write(text)


def _csv(header: str, columns: list[str], rows) -> str:
    buf = io.StringIO()
    buf.write(header)
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _params(cfg: dict) -> chain_mod.SpinChainParams:
    return chain_mod.SpinChainParams(L=cfg["L"], J=cfg["J"], g=cfg["g"],
                                     delta=cfg["delta"])


# ---- subcommands -------------------------------------------------------


def cmd_coms(args) -> int:
    cfg = resolve_config(args)
    L = cfg["L"]
    ns = [1, 2, 3] if args.n == "all" else [int(args.n)]
    H = chain_mod.build_h_nhs(_params(cfg))
    report = {"L": L, "delta": cfg["delta"], "operators": [], "checks": []}
    for n in ns:
        C = chain_mod.build_com_closed(n, L, density_sum=args.density_sum)
        entry = {"n": n, "n_terms": C.n_terms()}
        if args.with_terms:
            entry["operator"] = C.to_json_dict()
        report["operators"].append(entry)
        if args.check == "symbolic":
            ok = conservation_residual(H, C).is_zero()
            report["checks"].append({"n": n, "kind": "symbolic",
                                     "exactly_conserved": ok})
        elif args.check == "numeric":
            Hd, Cd = H.to_dense(), C.to_dense()
            res = float(np.linalg.norm(Hd.conj().T @ Cd - Cd @ Hd))
            report["checks"].append({"n": n, "kind": "numeric",
                                     "residual": res})
    failed = [c for c in report["checks"]
              if not c.get("exactly_conserved",
                           c.get("residual", 0.0) < 1e-9)]
    report["passed"] = not failed
    _emit(cfg["output"], json.dumps(report, indent=2) + "\n")
    return EXIT_OK if report["passed"] else EXIT_NUMERICAL


def cmd_evolve(args) -> int:
    cfg = resolve_config(args)
    p = _params(cfg)
    H = chain_mod.build_h_nhs(p)
    psi0 = chain_mod.build_state(cfg["init"], cfg["L"])
    evo = dyn_mod.EvolutionConfig(t_max=cfg["t_max"], dt_out=cfg["dt_out"],
                                  rel_tol=cfg["rel_tol"],
                                  abs_tol=cfg["rel_tol"] * 1e-2)
    times, states = dyn_mod.evolve(H, psi0, evo)
    n_by_name = {"C1": 1, "C2": 2, "C3": 3}
    series = []
    for name in cfg["observables"]:
        C = chain_mod.build_com_closed(n_by_name[name], cfg["L"])
        series.append(dyn_mod.expectation_series(
            C, states, times, label=name, normalized=args.normalized))
    cols = ["t"]
    for s in series:
        cols += [f"{s.label}_re", f"{s.label}_im"]
    rows = []
    for k, t in enumerate(times):
        row = [float(t)]
        for s in series:
            row += [s.values[k].real, s.values[k].imag]
        rows.append(row)
    _emit(cfg["output"], _csv(_header(cfg), cols, rows))
    return EXIT_OK


def cmd_density(args) -> int:
    cfg = resolve_config(args)
    p = _params(cfg)
    H = chain_mod.build_h_nhs(p)
    psi0 = chain_mod.build_state(cfg["init"], cfg["L"],
                                 center=args.center, width=args.width)
    evo = dyn_mod.EvolutionConfig(t_max=cfg["t_max"], dt_out=cfg["dt_out"],
                                  rel_tol=cfg["rel_tol"],
                                  abs_tol=cfg["rel_tol"] * 1e-2)
    times, states = dyn_mod.evolve(H, psi0, evo)
    dens = dyn_mod.density_profile(states, times, cfg["L"])
    resid = dyn_mod.continuity_residual(p, states, times)
    currents = np.empty((times.size, cfg["L"]))
    for i in range(1, cfg["L"] + 1):
        ji = chain_mod.build_current(i, cfg["L"], cfg["J"])
        for k, psi in enumerate(states):
            currents[k, i - 1] = np.vdot(psi, ji.apply(psi)).real
    rows = []
    for k, t in enumerate(times):
        for i in range(cfg["L"]):
            rows.append([float(t), i + 1, dens[k, i], currents[k, i],
                         resid[k, i]])
    extra = {"center": args.center, "width": args.width}
    _emit(cfg["output"], _csv(_header(cfg, extra),
                              ["t", "site", "mx", "current", "residual"],
                              rows))
    return EXIT_OK


def _parse_deltas(spec: str) -> list[float]:
    """Sweep grids: 'lo:hi:logN', 'lo:hi:linN', or comma-separated values."""
    if ":" in spec:
        lo_s, hi_s, kind = spec.split(":")
        lo, hi = float(lo_s), float(hi_s)
        if kind.startswith("log"):
            n = int(kind[3:])
            if lo <= 0 or hi <= 0:
                raise UsageError("log grids need positive endpoints")
            return list(np.logspace(math.log10(lo), math.log10(hi), n))
        if kind.startswith("lin"):
            return list(np.linspace(lo, hi, int(kind[3:])))
        raise UsageError(f"unknown grid kind {kind!r}")
    return [float(x) for x in spec.split(",")]


def cmd_sweep(args) -> int:
    cfg = resolve_config(args)
    deltas = _parse_deltas(args.deltas)
    if args.both_signs:
        deltas = deltas + [-d for d in deltas]
    workers = min(max_workers(), len(deltas))

    def one(delta):
        return fit_mod.tau_sweep(
            [delta], L=cfg["L"], J=cfg["J"], g=cfg["g"],
            observables=tuple(cfg["observables"]), t_max=cfg["t_max"],
            dt_out=cfg["dt_out"], rel_tol=cfg["rel_tol"])

    rows_by_delta = {}
    with concurrent.futures.ThreadPoolExecutor(workers) as pool:
        for delta, rows in zip(deltas, pool.map(one, deltas)):
            rows_by_delta[delta] = rows
    rows = [
        [r["delta"], r["observable"], r["model"], r["tau"], r["rms"],
         r["converged"]]
        for d in deltas for r in rows_by_delta[d]
    ]
    extra = {"deltas": args.deltas, "both_signs": args.both_signs}
    _emit(cfg["output"], _csv(
        _header(cfg, extra),
        ["delta", "observable", "model", "tau", "rms", "converged"], rows))
    return EXIT_OK


def read_scaling_csv(path: str) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = None
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if header is None:
                header = line.split(",")
                continue
            vals = line.split(",")
            rec = dict(zip(header, vals))
            rec["delta"] = float(rec["delta"])
            rec["tau"] = float(rec["tau"])
            rec["converged"] = rec["converged"] == "true"
            rows.append(rec)
    return rows


def cmd_fit_tau(args) -> int:
    cfg = resolve_config(args)
    try:
        rows = read_scaling_csv(args.scaling_csv)
    except OSError as exc:
        raise ConfigError(f"cannot read {args.scaling_csv}: {exc}") from exc
    report = {"input": args.scaling_csv, "branches": []}
    overall_ok = True
    for obs in sorted({r["observable"] for r in rows}):
        for sign, name in ((1, "positive"), (-1, "negative")):
            pts = [(r["delta"], r["tau"]) for r in rows
                   if r["observable"] == obs and r["converged"]
                   and math.copysign(1, r["delta"]) == sign]
            if len(pts) < 4:
                continue
            slope, stderr = fit_mod.scaling_exponent(pts)
            report["branches"].append({
                "observable": obs, "branch": name, "n_points": len(pts),
                "slope": slope, "stderr": stderr,
            })
            if abs(slope + 0.5) > 0.05:
                overall_ok = False
    if not report["branches"]:
        raise ConfigError("no usable (delta, tau) branches in input")
    report["expected_slope"] = -0.5
    report["passed"] = overall_ok
    _emit(cfg["output"], json.dumps(report, indent=2) + "\n")
    return EXIT_OK if overall_ok else EXIT_NUMERICAL


def cmd_block(args) -> int:
    cfg = resolve_config(args)
    if args.N < 2:
        raise UsageError("block reports need N >= 2")
    # the obstruction check lives on the chain whose largest block has size N
    report = jordan_mod.divergence_obstruction_check(
        args.N - 1, _parse_deltas(args.deltas))
    spec = jordan_mod.BlockSpec(N=args.N, E=args.E, delta=args.delta)
    corr = []
    for n in range(1, args.N + 1):
        C_aux, C_ep = jordan_mod.block_com_correspondence(spec, n)
        corr.append({
            "n": n,
            "ratio_condition_residual":
                jordan_mod.block_ratio_condition_residual(C_aux, args.N),
        })
    out = {"N": args.N, "E": args.E, "delta": args.delta,
           "divergence_obstruction": report, "correspondence": corr}
    _emit(cfg["output"], json.dumps(out, indent=2, default=float) + "\n")
    return EXIT_OK if report["passed"] else EXIT_NUMERICAL


def cmd_correspondence(args) -> int:
    cfg = resolve_config(args)
    if not 0 < cfg["delta"] < 2:
        raise ConfigError("correspondence requires 0 < delta < 2")
    report = jordan_mod.heisenberg_correspondence_check(
        cfg["L"], cfg["delta"], J=cfg["J"])
    _emit(cfg["output"], json.dumps(report, indent=2, default=float) + "\n")
    return EXIT_OK if report["max_residual"] < 1e-8 else EXIT_NUMERICAL


def cmd_circuit(args) -> int:
    cfg = resolve_config(args)
    p = _params(cfg)
    prog = circuit_mod.build_protocol(p, args.steps, args.dt,
                                      init=cfg["init"])
    stats = circuit_mod.run_sampling(prog, shots=cfg["shots"],
                                     seed=cfg["seed"], noise=args.noise)
    raw = circuit_mod.estimate_c1(stats, prog, mode="raw")
    norm = circuit_mod.estimate_c1(stats, prog, mode="normalized")
    det = circuit_mod.run_deterministic(prog)
    down = chain_mod.polarized_index(cfg["L"])
    amp2 = prog.branch_amp_per_site ** 2
    rows = []
    for k in range(args.steps + 1):
        # det[k] is the unnormalized branch; dividing by the accumulated
        # branch amplitude squared gives the raw conserved estimator target
        c1_exact = abs(det[k][down]) ** 2 / amp2 ** (cfg["L"] * k)
        c1n = norm.values[k].real if k < norm.values.size else math.nan
        c1n_err = (norm.meta["stderr"][k]
                   if k < norm.values.size else math.nan)
        rows.append([k, k * args.dt, int(stats.total_started[k]),
                     int(stats.accepted[k]), int(stats.all_down[k]),
                     raw.values[k].real, float(raw.meta["stderr"][k]),
                     c1n, float(c1n_err), c1_exact])
    extra = {"steps": args.steps, "dt": args.dt, "noise": args.noise}
    _emit(cfg["output"], _csv(
        _header(cfg, extra),
        ["step", "t", "total", "accepted", "all_down", "c1_raw",
         "c1_raw_stderr", "c1_norm", "c1_norm_stderr", "c1_exact"], rows))
    return EXIT_OK


# ---- argument wiring ---------------------------------------------------


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON config file merged under flags")
    sub.add_argument("--L", type=int)
    sub.add_argument("--J", type=float)
    sub.add_argument("--g", type=float)
    sub.add_argument("--delta", type=float)
    sub.add_argument("--t-max", dest="t_max", type=float)
    sub.add_argument("--dt-out", dest="dt_out", type=float)
    sub.add_argument("--rel-tol", dest="rel_tol", type=float)
    sub.add_argument("--obs", dest="observables")
    sub.add_argument("--init")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--shots", type=int)
    sub.add_argument("--output", "-o")


def build_parser() -> _Parser:
    parser = _Parser(prog="epchain",
                     description="figure-data pipelines for the "
                                 "exceptional-point spin chain")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("coms", help="build conserved operators and check them")
    _add_common(s)
    s.add_argument("--n", default="all", choices=["1", "2", "3", "all"])
    s.add_argument("--check", default="symbolic",
                   choices=["symbolic", "numeric", "none"])
    s.add_argument("--density-sum", action="store_true")
    s.add_argument("--with-terms", action="store_true",
                   help="embed full operator term lists in the JSON")
    s.set_defaults(func=cmd_coms)

    s = sub.add_parser("evolve", help="conserved-quantity time series -> CSV")
    _add_common(s)
    s.add_argument("--normalized", action="store_true")
    s.set_defaults(func=cmd_evolve)

    s = sub.add_parser("density", help="defect density/current table -> CSV")
    _add_common(s)
    s.add_argument("--center", type=float, default=7.0)
    s.add_argument("--width", type=float, default=1.0)
    s.set_defaults(func=cmd_density)

    s = sub.add_parser("sweep", help="tau fits over a delta grid -> CSV")
    _add_common(s)
    s.add_argument("--deltas", default="1e-3:1e-1:log5")
    s.add_argument("--both-signs", action="store_true")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("fit-tau", help="scaling slope report from sweep CSV")
    _add_common(s)
    s.add_argument("scaling_csv")
    s.set_defaults(func=cmd_fit_tau)

    s = sub.add_parser("block", help="deformed Jordan-block theory report")
    _add_common(s)
    s.add_argument("--N", type=int, default=4)
    s.add_argument("--E", type=float, default=0.0)
    s.add_argument("--deltas", default="1e-2,5e-3,2e-3,1e-3")
    s.set_defaults(func=cmd_block)

    s = sub.add_parser("correspondence",
                       help="similarity-transform checks at finite delta")
    _add_common(s)
    s.set_defaults(func=cmd_correspondence)

    s = sub.add_parser("circuit", help="post-selected sampling data -> CSV")
    _add_common(s)
    s.add_argument("--dt", type=float, default=0.1)
    s.add_argument("--steps", type=int, default=30)
    s.add_argument("--noise", type=float, default=0.0)
    s.set_defaults(func=cmd_circuit)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except dyn_mod.EvolutionOverflow as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
