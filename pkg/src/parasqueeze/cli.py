"""Command-line front end.

    parasqueeze <threshold|multipliers|transient|gain|nsd|squeeze|validate>
                --config FILE [--out DIR] [--threads N]

Every data command writes ``<command>.csv`` and ``<command>.json`` (with a
schema header and the resolved configuration) plus PNG figures into the
output directory, which defaults to ``$PARASQUEEZE_OUT`` or ``./out``.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, floquet, freqdomain, harmonic_balance, slowflow, timedomain
from .config import RunConfig, grid, load_config, parse_config
from .errors import ConfigError, ParasqueezeError
from .model import DriveSignal, NoiseSpec, amp_db

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_VALIDATION = 0, 2, 3, 4
COMMANDS = ("threshold", "multipliers", "transient", "gain", "nsd", "squeeze", "validate")

log = logging.getLogger("parasqueeze")


# --- serialization -----------------------------------------------------------

def _num(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    v = float(v)
    return "" if not math.isfinite(v) else format(v, ".17g")


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


def _header(command: str, cfg: RunConfig) -> dict:
    return {"schema_version": SCHEMA_VERSION, "artifact": "parasqueeze",
            "version": __version__, "command": command, "config": cfg.to_dict()}


def write_csv(path: Path, command: str, cfg: RunConfig, columns, rows):
    head = _header(command, cfg)
    lines = [f"# schema_version: {SCHEMA_VERSION}",
             f"# parasqueeze {__version__} {command}",
             "# config: " + json.dumps(_jsonable(head["config"]), sort_keys=True),
             ",".join(columns)]
    lines += [",".join(_num(v) for v in row) for row in rows]
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def write_json(path: Path, command: str, cfg: RunConfig, results: dict):
    doc = _header(command, cfg)
    doc["results"] = results
    with open(path, "w", newline="\n") as fh:
        json.dump(_jsonable(doc), fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path


def _plot(fn, *args, **kwargs):
    # figures are best effort; data files are the contract
    try:
        from . import plotting
        getattr(plotting, fn)(*args, **kwargs)
    except Exception as exc:  # noqa: BLE001
        log.warning("plot %s skipped: %s", args[0] if args else fn, exc)


def _try(fn, *args, **kwargs):
    """Run a per-point computation; numerical failures become ``(None, name)``."""
    try:
        return fn(*args, **kwargs), ""
    except ParasqueezeError as exc:
        return None, type(exc).__name__


# --- commands ----------------------------------------------------------------

def cmd_threshold(cfg: RunConfig, out: Path, threads: int = 1):
    c = cfg.threshold
    p = cfg.resonator
    omegas = np.sort(grid(c.omega_grid))
    ft = floquet.threshold_scan(p, omegas, c.bracket, c.steps_per_period, threads)
    rows = []
    for w, res in zip(omegas, ft):
        q = p.with_(omega=float(w))
        if c.branch == "saddle-node":
            fa = slowflow.threshold_avg(q)[1]
            fh, _ = _try(lambda: harmonic_balance.threshold_hbm(q)[1])
        else:
            fa, _ = _try(slowflow.hopf_avg, q, c.bracket)
            hp, _ = _try(harmonic_balance.hopf_line, q)
            fh = None if hp is None else hp.Fp
        rows.append([w, fa, fh, res.Fp, res.classification or res.error])
    cols = ["omega", "fp_avg", "fp_hbm", "fp_ft", "classification"]
    write_csv(out / "threshold.csv", "threshold", cfg, cols, rows)
    write_json(out / "threshold.json", "threshold", cfg, {"columns": cols, "rows": rows})
    _plot("threshold", out / "threshold.png", omegas,
          {k: [_f(r[i]) for r in rows] for i, k in enumerate(cols[1:4], 1)}, c.branch)
    return rows


def _f(v):
    return math.nan if v is None else float(v)


def cmd_multipliers(cfg: RunConfig, out: Path, threads: int = 1):
    c = cfg.multipliers
    Fp = grid(c.Fp_grid)
    mu = floquet.multiplier_path(cfg.resonator, Fp, c.steps_per_period)
    rows = []
    for f, m in zip(Fp, mu):
        row = [f]
        for z in m:
            row += [z.real, z.imag, abs(z)]
        row += [np.abs(m).max(), floquet.classify(m)]
        rows.append(row)
    cols = ["Fp"] + [f"mu{j}_{s}" for j in (1, 2, 3) for s in ("re", "im", "abs")]
    cols += ["max_modulus", "classification"]
    write_csv(out / "multipliers.csv", "multipliers", cfg, cols, rows)
    write_json(out / "multipliers.json", "multipliers", cfg, {"columns": cols, "rows": rows})
    _plot("multipliers", out / "multipliers.png", Fp, mu)
    return rows


def cmd_transient(cfg: RunConfig, out: Path, threads: int = 1):
    c = cfg.transient
    p = cfg.resonator
    ts = timedomain.integrate_deterministic(p, cfg.drive, cfg.initial_state(), (0.0, c.t_end),
                                            dt=c.dt, record_every=c.record_every)
    rows = [[t, *s] for t, s in zip(ts.t, ts.states)]
    cols = ["t", "x", "xdot", "z"]
    write_csv(out / "transient.csv", "transient", cfg, cols, rows)
    results = {"diverged_step": ts.diverged, "peaks": []}
    if ts.diverged is None and c.fft_discard < c.t_end:
        nu, amp, peaks = timedomain.fft_peaks(ts, discard=c.fft_discard)
        results["peaks"] = list(peaks)
        results["bin_width"] = float(nu[1])
        hp, err = _try(harmonic_balance.hopf_line, p)
        if hp is not None:
            results["hopf_line"] = {"Fp": hp.Fp, "Delta": hp.Delta,
                                    "sidebands": [p.omega - hp.Delta, p.omega + hp.Delta]}
        _plot("transient", out / "transient.png", ts.t, ts.x, nu, amp, peaks)
    write_json(out / "transient.json", "transient", cfg, results)
    return results


def _phase_grid(p, n):
    """Uniform grid on ``[0, pi)`` plus the FT extremal phases, which a uniform
    grid would miss when the dip is narrow."""
    G = freqdomain.greens(p, p.omega)
    ang = math.atan2((G.g0 / G.gplus).imag, (G.g0 / G.gplus).real) if abs(G.gplus) > 0 else 0.0
    extra = np.mod([0.5 * ang, 0.5 * (ang + math.pi)], math.pi)
    return np.unique(np.concatenate([np.linspace(0.0, math.pi, n), extra]))


def cmd_gain(cfg: RunConfig, out: Path, threads: int = 1):
    c = cfg.gain
    p = cfg.resonator
    phi = _phase_grid(p, c.phi_points)
    curves = {
        "avg": amp_db(slowflow.gain_avg(p, phi)),
        "hbm": amp_db(harmonic_balance.gain_hbm(p, phi)),
        "ft": amp_db(freqdomain.gain_ft(p, phi)),
    }
    rows = [[f, curves["avg"][i], curves["hbm"][i], curves["ft"][i]] for i, f in enumerate(phi)]
    cols = ["phi0", "gain_avg_db", "gain_hbm_db", "gain_ft_db"]
    write_csv(out / "gain.csv", "gain", cfg, cols, rows)
    extrema = {"avg": slowflow.gain_extrema_avg, "hbm": harmonic_balance.gain_extrema_hbm,
               "ft": freqdomain.gain_extrema_ft}
    summary = {}
    for k, v in curves.items():
        ext, _ = _try(extrema[k], p)
        lo, hi = (v.min(), v.max()) if ext is None else amp_db(np.asarray(ext))
        summary[k] = {"min_db": float(lo), "max_db": float(hi), "closed_form": ext is not None}
    td = None
    if c.time_domain and cfg.drive is not None and cfg.drive.omega_s != p.omega:
        curve = timedomain.extract_gain_phase(p, cfg.drive, discard=c.discard,
                                              steps_per_period=c.steps_per_period)
        g = curve.gain_db()
        write_csv(out / "gain_td.csv", "gain", cfg, ["t", "phi", "gain_db"],
                  [[t, f, x] for t, f, x in zip(curve.t, curve.phi, g)])
        summary["time_domain"] = {"min_db": float(g.min()), "max_db": float(g.max())}
        td = (curve.phi, g)
    write_json(out / "gain.json", "gain", cfg, summary)
    _plot("gain", out / "gain.png", phi, curves, td)
    return summary


def cmd_nsd(cfg: RunConfig, out: Path, threads: int = 1):
    c = cfg.nsd
    p = cfg.resonator
    D = (cfg.noise or NoiseSpec(D=1.0)).D
    nu = np.sort(grid(c.nu_grid))
    spec = freqdomain.spectrum(p, D, nu, c.method, c.three_term, threads)
    ho = 2.0 * D * np.abs(freqdomain.greens_lattice(p.with_(Fp=0.0, eta=0.0), nu).g0) ** 2
    S = spec.values
    rows = [[v, S["S_N"][i], S["S_XL"][i], S["S_YL"][i], ho[i]] for i, v in enumerate(nu)]
    cols = ["nu", "S_N", "S_XL", "S_YL", "S_N_ho"]
    write_csv(out / "nsd.csv", "nsd", cfg, cols, rows)
    ratio, err = _try(freqdomain.effective_temperature_ratio, p, D, c.method)
    results = {"effective_temperature_ratio": ratio, "error": err}
    if c.stochastic.enabled:
        if cfg.noise is None:
            raise ConfigError("nsd.stochastic needs a noise section")
        r, sp, _ = timedomain.stochastic_temperature_ratio(
            p, cfg.noise, duration=c.stochastic.duration,
            realizations=c.stochastic.realizations, record_every=c.stochastic.record_every,
            threads=threads)
        results["stochastic_ratio"] = r
        m = (sp.nu_grid >= nu[0]) & (sp.nu_grid <= nu[-1])
        write_csv(out / "nsd_welch.csv", "nsd", cfg, ["nu", "S_N"],
                  [[a, b] for a, b in zip(sp.nu_grid[m], sp.values["S_N"][m])])
    write_json(out / "nsd.json", "nsd", cfg, results)
    _plot("nsd", out / "nsd.png", nu, {"S_N": S["S_N"], "S_XL": S["S_XL"], "S_YL": S["S_YL"],
                                      "oscillator": ho})
    return results


def cmd_squeeze(cfg: RunConfig, out: Path, threads: int = 1):
    c = cfg.squeeze
    base = cfg.resonator
    D = (cfg.noise or NoiseSpec(D=3.08e-8)).D
    cols = ["omega", "Fp", "sigma_c2", "sigma_s2", "sigma_cs", "angle",
            "plus_db_var", "minus_db_var", "plus_db_amp", "minus_db_amp",
            "plus_db_std10", "minus_db_std10", "gap_plus_db", "gap_minus_db", "error"]
    rows, plot_rows = [], []
    for w in c.omega_list:
        for Fp in grid(c.Fp_grid):
            p = base.with_(omega=float(w), Fp=float(Fp))
            q, err = _try(freqdomain.quadrature_covariance, p, D, c.method)
            if q is None or not (q.sigma_minus2 > 0):
                rows.append([w, Fp] + [None] * 12 + [err or "NonPositive"])
                continue
            gap, _ = _try(freqdomain.simplification_gap, p, D)
            gap = gap or (None, None)
            dv, da, ds = q.db("variance"), q.db("amplitude"), q.db("std10")
            rows.append([w, Fp, q.sigma_c2, q.sigma_s2, q.sigma_cs, q.angle, *dv, *da, *ds,
                         *gap, ""])
            plot_rows.append((w, Fp, *dv))
    write_csv(out / "squeeze.csv", "squeeze", cfg, cols, rows)
    results = {"rows": len(rows)}
    e = c.ensemble
    if e.enabled and e.Fp_points:
        if cfg.noise is None:
            raise ConfigError("squeeze.ensemble needs a noise section")
        pts = [base.with_(Fp=float(f)) for f in e.Fp_points]
        ens = timedomain.ensemble_quadrature_stats(pts, cfg.noise, runs=e.runs, tau_m=e.tau_m,
                                                   stages=e.stages, threads=threads)
        results["ensemble"] = []
        for q, r in zip(pts, ens):
            a = freqdomain.quadrature_covariance(q, D, c.method)
            results["ensemble"].append({"Fp": q.Fp, "sample_db": list(r.db()),
                                        "analytic_db": list(a.db())})
    write_json(out / "squeeze.json", "squeeze", cfg, results)
    _plot("squeeze", out / "squeeze.png", plot_rows)
    return results


def cmd_validate(cfg: RunConfig | None = None, out: Path | None = None, threads: int = 1):
    from . import validate

    results = validate.run_all()
    print(validate.format_table(results))
    return all(r.passed for r in results)


COMMAND_FUNCS = {
    "threshold": cmd_threshold, "multipliers": cmd_multipliers, "transient": cmd_transient,
    "gain": cmd_gain, "nsd": cmd_nsd, "squeeze": cmd_squeeze,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="parasqueeze",
                                 description="Parametric resonator with lock-in feedback.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", type=Path, help="YAML configuration file")
    ap.add_argument("--out", type=Path, default=None,
                    help="output directory (default: $PARASQUEEZE_OUT or ./out)")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        return EXIT_OK if cmd_validate(threads=args.threads) else EXIT_VALIDATION
    try:
        if args.config is None:
            raise ConfigError("--config is required")
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or Path(os.environ.get("PARASQUEEZE_OUT", "out"))
    out.mkdir(parents=True, exist_ok=True)
    try:
        COMMAND_FUNCS[args.command](cfg, out, args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ParasqueezeError as exc:
        print(f"numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    log.info("wrote %s results to %s", args.command, out)
    return EXIT_OK


__all__ = ["main", "parse_config", "DriveSignal"]
