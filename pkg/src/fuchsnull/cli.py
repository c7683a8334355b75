"""Command-line front end.

Exit codes: 0 success; 1 configuration or usage error; 2 inconclusive
analysis; 3 blow-up; 4 failed verification or convergence check.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._validation import DomainError, ValidationError
from .asymptotics import check_bounded_weak_null, dflow, flow
from .config import (build_chart, build_coefficients, build_data, build_flow_options, build_parameters,
                     build_solver, load_config)
from .diagnostics import (bound_check, build_series, decay_fit, physical_mask, verdict_report,
                          wave_residual, write_verdicts)
from .geometry import extend_to_S, outgoing_wave_state
from .solver import ReducedSystem, SolverConfig, evolve, step_size, validate_reduced, write_snapshots
from .verification import run_all

EXIT_OK, EXIT_CONFIG, EXIT_INCONCLUSIVE, EXIT_BLOWUP, EXIT_FAIL = 0, 1, 2, 3, 4

log = logging.getLogger("fuchsnull")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not serialisable: {type(x)!r}")


def _config(args) -> dict:
    if args.config is None:
        raise ValidationError("--config is required for this command", "$")
    return load_config(args.config)


def _out_dir(args, cfg: dict | None) -> Path:
    d = Path(args.out) if args.out else Path((cfg or {}).get("output", {}).get("directory", "out"))
    d.mkdir(parents=True, exist_ok=True)
    return d


def _formats(cfg: dict | None) -> set:
    return set((cfg or {}).get("output", {}).get("formats", ["json", "csv"]))


# ---------------------------------------------------------------- analyze

def cmd_analyze(args) -> int:
    cfg = _config(args)
    coeffs = build_coefficients(cfg)
    chart = build_chart(cfg)
    opts = build_flow_options(cfg)
    a = cfg["analyzer"]
    report = check_bounded_weak_null(coeffs, radius=float(a["R"]), n_xi=int(a["n_xi"]), n_y=int(a["n_y"]),
                                     opts=opts, seed=args.seed, n_jobs=args.threads, chart=chart)
    out = _out_dir(args, cfg)
    if "json" in _formats(cfg):
        report.write_json(out / "flow_report.json")
    if "csv" in _formats(cfg):
        report.write_csv(out / "flow_samples.csv")
    print(json.dumps({"classification": report.classification, "sup_bound": report.sup_bound,
                      "earliest_blowup_t": report.earliest_blowup_t, "samples": report.samples}))
    return {"Null": EXIT_OK, "Bounded": EXIT_OK, "BlowUp": EXIT_BLOWUP}.get(report.classification,
                                                                          EXIT_INCONCLUSIVE)


# ---------------------------------------------------------------- evolve

def _is_free_wave(cfg: dict, coeffs) -> bool:
    return not np.any(coeffs.values) and cfg["data"].get("wbar", {}).get("profile") == "outgoing"


def oracle_errors(history, data, chart) -> list[dict]:
    """Max error against the exact outgoing wave on physical-domain nodes, per snapshot."""
    rows = []
    for f in history:
        mask = physical_mask(f.t, chart, f.rho)
        if not np.any(mask):
            continue
        exact = outgoing_wave_state(data, chart, f.t, f.rho[mask])
        rows.append({"t": f.t, "max_error": float(np.max(np.abs(f.values[..., mask] - exact)))})
    return rows


def cmd_evolve(args) -> int:
    cfg = _config(args)
    coeffs = build_coefficients(cfg)
    validate_reduced(coeffs)
    chart = build_chart(cfg)
    params = build_parameters(cfg, chart.m)
    solver_cfg, n_rho = build_solver(cfg)
    data = build_data(cfg, coeffs.n_fields)
    initial = extend_to_S(data, chart, n_rho, taper_width=cfg["data"].get("taper_width"))
    result = evolve(initial, coeffs, solver_cfg)
    out = _out_dir(args, cfg)
    fmts = _formats(cfg)
    if "csv" in fmts:
        write_snapshots(result.history, out / "snapshots",
                        {"delta_tau": result.delta_tau, "n_steps": result.n_steps, "status": result.status})

    d = cfg["diagnostics"]
    series = build_series(result.history, coeffs, params, k=int(d["k"]), z_pointwise=d.get("z_pointwise"))
    verdicts = bound_check(series, params, float(d["ceiling_factor"]))
    fits, notes = {}, {}
    for name in ("PV_L2", "PiZ_L2"):
        try:
            fits[name] = decay_fit(series.column("t"), series.column(name), tuple(d["fit_window"]))
        except ValidationError as exc:
            notes[f"fit_{name}"] = str(exc)
    extra = {"status": result.status, "t_blowup": result.t_blowup, "n_steps": result.n_steps,
             "delta_tau": result.delta_tau, "notes": notes}
    if len(result.history) >= 3:
        t_check = float(d.get("wave_residual_t", result.history[len(result.history) // 2].t))
        extra["wave_residual"] = {"t": t_check,
                                  "max_abs": wave_residual(result.history, coeffs, t_check).max_abs}
    if _is_free_wave(cfg, coeffs):
        errs = oracle_errors(result.history, data, chart)
        extra["oracle"] = {"max_error": max((e["max_error"] for e in errs), default=0.0),
                           "final_error": errs[-1]["max_error"] if errs else 0.0}
    report = verdict_report(series, verdicts, fits, extra)
    if "csv" in fmts:
        series.write_csv(out / "diagnostics.csv")
    if "json" in fmts:
        write_verdicts(report, out / "report.json")
    print(json.dumps({"status": result.status, "all_pass": report["all_pass"],
                      "final_t": result.final.t}, default=_json_default))
    return EXIT_BLOWUP if result.status == "blowup" else EXIT_OK


# ---------------------------------------------------------------- verify

def cmd_verify(args) -> int:
    results = run_all(seed=args.seed, fault=args.fault, quick=args.quick)
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<{width}}  max_violation={r.max_violation:.3e}"
              + (f"  ({r.detail})" if r.detail and not r.passed else ""))
    failed = [r.name for r in results if not r.passed]
    if args.out:
        out = _out_dir(args, None)
        _dump({"results": [{"name": r.name, "passed": r.passed, "max_violation": r.max_violation,
                            "detail": r.detail} for r in results],
               "failed": failed, "seed": args.seed, "fault": args.fault}, out / "verify.json")
    if failed:
        print("FAILED: " + ", ".join(failed))
        return EXIT_FAIL
    return EXIT_OK


# ---------------------------------------------------------------- convergence

def _tail_fraction(values: np.ndarray) -> float:
    """Spectral energy in the top third of resolved modes relative to the total."""
    spec = np.abs(np.fft.rfft(values, axis=-1)) ** 2
    n = spec.shape[-1]
    total = float(spec.sum())
    return float(spec[..., 2 * n // 3:].sum()) / total if total > 0 else 0.0


def convergence_study(cfg: dict) -> dict:
    coeffs = build_coefficients(cfg)
    if np.any(coeffs.values):
        raise ValidationError("the convergence study needs zero coefficients", "$.coefficients")
    chart = build_chart(cfg)
    solver_cfg, n_rho = build_solver(cfg)
    data = build_data(cfg, coeffs.n_fields)
    oracle = cfg["data"].get("wbar", {}).get("profile") == "outgoing" or \
        cfg["data"].get("vbar", {}).get("profile", "zero") == "zero"

    def run(n, h):
        sc = SolverConfig(solver_cfg.t_min, h, solver_cfg.cfl, solver_cfg.dealias, 10**9)
        f0 = extend_to_S(data, chart, n, taper_width=cfg["data"].get("taper_width"))
        res = evolve(f0, coeffs, sc)
        fin = res.final
        mask = physical_mask(fin.t, chart, fin.rho)
        err = None
        if oracle:
            exact = outgoing_wave_state(data, chart, fin.t, fin.rho[mask])
            err = float(np.max(np.abs(fin.values[..., mask] - exact), initial=0.0))
        return fin.values[..., mask], err, res.delta_tau, _tail_fraction(f0.values)

    # time: three step sizes below the CFL cap on the base grid
    cap, _ = step_size(ReducedSystem(coeffs, chart, n_rho), SolverConfig(solver_cfg.t_min, 1.0, solver_cfg.cfl))
    h0 = min(4.0 * solver_cfg.delta_tau, cap)
    time_rows = []
    sols = []
    for h in (h0, h0 / 2, h0 / 4):
        v, err, used, _ = run(n_rho, h)
        sols.append(v)
        time_rows.append({"delta_tau": used, "oracle_error": err})
    d1 = float(np.max(np.abs(sols[0] - sols[1]), initial=0.0))
    d2 = float(np.max(np.abs(sols[1] - sols[2]), initial=0.0))
    if d1 == 0.0 and d2 == 0.0:
        time_order, time_pass, time_note = "exact", True, "differences vanish identically"
    elif d2 == 0.0 or d1 == 0.0:
        time_order, time_pass, time_note = None, False, "degenerate differences"
    else:
        time_order = float(np.log2(d1 / d2))
        time_pass, time_note = time_order >= 3.0, "three-level self-convergence"

    space_rows = []
    for n in (n_rho, 2 * n_rho, 4 * n_rho):
        _, err, used, tail = run(n, solver_cfg.delta_tau)
        space_rows.append({"n_rho": n, "oracle_error": err, "delta_tau": used, "tail_fraction": tail})
    tail0 = space_rows[0]["tail_fraction"]
    errs = [r["oracle_error"] for r in space_rows]
    notes = []
    if tail0 > 1e-8:
        notes.append(f"aliasing: {tail0:.2e} of the initial spectral energy sits in the top third of "
                     f"the modes at n_rho={n_rho}; the grid is under-resolved")
    if errs[0] is None:
        space_pass = tail0 <= 1e-8
    else:
        space_pass = tail0 <= 1e-8 and errs[-1] <= 1e-6 and errs[-1] <= errs[0]
    return {
        "time": {"levels": time_rows, "self_differences": [d1, d2], "order": time_order,
                 "pass": bool(time_pass), "note": time_note},
        "space": {"levels": space_rows, "pass": bool(space_pass), "notes": notes},
        "pass": bool(time_pass and space_pass),
    }


def cmd_convergence(args) -> int:
    cfg = _config(args)
    study = convergence_study(cfg)
    out = _out_dir(args, cfg)
    if "json" in _formats(cfg):
        _dump(study, out / "convergence.json")
    if "csv" in _formats(cfg):
        with open(out / "convergence.csv", "w") as fh:
            fh.write("kind,delta_tau,n_rho,oracle_error\n")
            for r in study["time"]["levels"]:
                fh.write(f"time,{r['delta_tau']!r},,{'' if r['oracle_error'] is None else repr(r['oracle_error'])}\n")
            for r in study["space"]["levels"]:
                fh.write(f"space,{r['delta_tau']!r},{r['n_rho']},"
                         f"{'' if r['oracle_error'] is None else repr(r['oracle_error'])}\n")
    t = study["time"]
    print(f"time order: {t['order']}  ({'PASS' if t['pass'] else 'FAIL'})")
    print(f"space: {'PASS' if study['space']['pass'] else 'FAIL'}"
          + "".join(f"\n  note: {n}" for n in study["space"]["notes"]))
    return EXIT_OK if study["pass"] else EXIT_FAIL


# ---------------------------------------------------------------- oracle

def oracle_tables(xi0: float = -1.0, c: float = 1.0) -> dict:
    """Closed-form scalar Riccati references next to the integrated values."""
    cc = np.full((1, 1, 1), c)
    rows = []
    for t in np.geomspace(1e-4, 1.0, 13):
        L = float(np.log(t / (2.0 - t)))
        denom = 1.0 + c * xi0 * L
        exact = xi0 / denom if denom > 0 else None
        got = flow(float(t), 1.0, cc, [xi0])
        rows.append({"t": float(t), "exact": exact,
                     "computed": None if not isinstance(got, np.ndarray) else float(got[0]),
                     "dflow_exact": 1.0 / denom**2 if denom > 0 else None})
    blow = 2.0 / (1.0 + np.exp(1.0 / (c * abs(xi0)))) if c * xi0 > 0 else None
    return {"xi0": xi0, "c": c, "riccati": rows, "blowup_t_exact": blow,
            "dflow_t_half": float(dflow(0.5, 1.0, cc, [xi0])[0][0, 0]) if c * xi0 < 0 else None}


def cmd_oracle(args) -> int:
    tables = oracle_tables(args.xi0, args.c)
    if args.config:
        cfg = _config(args)
        coeffs = build_coefficients(cfg)
        chart = build_chart(cfg)
        _, n_rho = build_solver(cfg)
        data = build_data(cfg, coeffs.n_fields)
        rho = chart.nodes(n_rho)
        tables["free_wave"] = []
        for t in args.times:
            mask = physical_mask(t, chart, rho)
            st = outgoing_wave_state(data, chart, t, rho[mask])
            tables["free_wave"].append({"t": t, "rho": rho[mask], "V": st})
    if args.out:
        _dump(tables, _out_dir(args, None) / "oracle.json")
    print(json.dumps({k: v for k, v in tables.items() if k != "free_wave"}, default=_json_default))
    return EXIT_OK


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", help="output directory (overrides output.directory)")
    common.add_argument("--seed", type=int, default=0, help="seed for all random sampling")
    common.add_argument("--threads", type=int, default=1, help="worker threads for sampling")
    common.add_argument("--log-level", default="WARNING",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    p = _Parser(prog="fuchsnull", description="Fuchsian analysis of semilinear wave systems near spatial infinity")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("analyze", parents=[common], help="classify the asymptotic flow")
    sub.add_parser("evolve", parents=[common], help="evolve the reduced system and run diagnostics")
    v = sub.add_parser("verify", parents=[common], help="run the verification suites")
    v.add_argument("--fault", choices=["flip_Bcal"], default=None, help="inject a sign fault (mutation test)")
    v.add_argument("--quick", action="store_true", help="smaller random-vector suites")
    sub.add_parser("convergence", parents=[common], help="time and space convergence study")
    o = sub.add_parser("oracle", parents=[common], help="print closed-form reference values")
    o.add_argument("--xi0", type=float, default=-1.0)
    o.add_argument("--c", type=float, default=1.0)
    o.add_argument("--times", type=float, nargs="*", default=[1.0, 0.5, 0.25])
    return p


COMMANDS = {"analyze": cmd_analyze, "evolve": cmd_evolve, "verify": cmd_verify,
            "convergence": cmd_convergence, "oracle": cmd_oracle}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("config error at --threads: must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"config error at {exc.path or '$'}: {exc.message}", file=sys.stderr)
        return EXIT_CONFIG
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
