"""`ek` command line: one verb per pipeline stage, each writing CSV/JSON artifacts and a manifest.

Exit codes: 0 success, 2 validation, 3 numerical failure, 4 missing dependency.
Verbosity comes from the EK_LOG environment variable (DEBUG, INFO, WARNING, ...).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_config
from .errors import EKError
from .io import environment, write_csv, write_json
from .pipeline import Session
from .sim2d import write_snapshot

log = logging.getLogger("eklab")

VERBS = ("soliton", "spectrum", "hypotheses", "growth", "wavepacket", "resolvent", "simulate", "experiment", "all")


class Context:
    """Parsed arguments plus the shared Session; verbs write into ``out``."""

    def __init__(self, args, session: Session, out: Path):
        self.args, self.s, self.out = args, session, out
        self.h = session.cfg.digest()
        self.checks = {}

    def json(self, name, payload):
        return write_json(self.out / name, payload, self.h)

    def csv(self, name, columns, rows):
        return write_csv(self.out / name, columns, rows, self.h)

    def check(self, name, ok):
        self.checks[name] = "pass" if ok else "fail"


# ---------------------------------------------------------------- verbs

def do_soliton(c: Context):
    p = c.s.profile
    from .soliton import flux_defect
    flux = flux_defect(p)
    c.csv("profile.csv", ["z", "rho", "drho", "ddrho", "u", "du"],
          np.column_stack([p.z, p.rho, p.drho, p.ddrho, p.u, p.du]))
    c.json("profile.json", {"rho_star": p.rho_star, "kappa": p.kappa, "half_length": p.half_length,
                            "n": p.grid.n, "decay_lengths": p.half_length * p.kappa, "tol": p.tol,
                            "residual": c.s.residual, "flux_defect": flux, "c": p.c,
                            "rho_inf": p.end.rho_inf, "u_inf": p.end.u_inf,
                            "j": p.end.j})
    c.check("profile_residual", c.s.residual < 1e-8)
    c.check("flux_identity", flux < 1e-10)


def do_spectrum(c: Context):
    cv = c.s.curve
    c.csv("curve.csv", ["k", "sigma", "count_unstable", "sigma_imag"], cv.table())
    c.json("curve.json", {"k0": cv.k0, "sigma0": cv.sigma0, "kmax": cv.kmax, "meta": cv.meta})
    if getattr(c.args, "dump_modes", False) and cv.mode0 is not None:
        m = cv.mode0
        c.csv("modes.csv", ["z", "re_u1", "im_u1", "re_u2", "im_u2"],
              np.column_stack([cv.grid.x, m.U1.real, m.U1.imag, m.U2.real, m.U2.imag]))
    c.check("unstable_count_le_1", int(np.max(cv.counts)) <= 1)
    c.check("peak_inside_band", cv.sigma0 > 0 and 0 < cv.k0 < cv.kmax)


def do_hypotheses(c: Context):
    rep = c.s.hypotheses
    c.json("report.json", rep.to_dict())
    for name, d in rep.to_dict().items():
        c.check(name, d["passed"])


def do_growth(c: Context):
    g = c.s.growth
    tr = g["history"]
    cols = ["t"] + sorted(tr.norms)
    c.csv("growth_norms.csv", cols, np.column_stack([tr.times] + [np.asarray(tr.norms[k]) for k in cols[1:]]))
    c.json("growth.json", {k: v for k, v in g.items() if k != "history"})
    c.check("propagation_within_1pct", g["rel_diff"] < 1e-2)
    if "nls" in g:
        c.check("nls_within_half_pct", max(g["nls"]["rel_k0"], g["nls"]["rel_sigma0"]) < 5e-3)


def do_wavepacket(c: Context):
    w = c.s.wavepacket
    c.csv("v1_norms.csv", ["t", "l2", "hs"], w["v1_history"])
    if "v2_history" in w:
        c.csv("v2_norms.csv", ["t", "l2", "hs"], w["v2_history"])
    c.json("wavepacket.json", {k: v for k, v in w.items() if not k.endswith("history")})
    c.check("v1_rate_within_2pct", w["v1_rel_diff"] < 0.02)
    c.check("v1_compensated_band_le_4", w["v1_compensated_band"] <= 4.0)
    if "v2_rate_ratio" in w:
        c.check("v2_rate_in_band", 1.9 <= w["v2_rate_ratio"] <= 2.1)


def do_resolvent(c: Context):
    a = c.args
    rep = c.s.resolvent(s=getattr(a, "s", None), gamma=getattr(a, "gamma", None), n=getattr(a, "n", None))
    js = sorted(rep.ratios)
    c.csv("resolvent.csv", ["t"] + [f"ratio_j{j}" for j in js],
          np.column_stack([rep.times] + [rep.ratios[j] for j in js]))
    c.json("resolvent.json", {"k": rep.k, "gamma": rep.gamma, "n": rep.n, "s": rep.s, "T": rep.T,
                              "sup": rep.sup, "trend": rep.trend, "bounded": rep.bounded})
    c.check("trend_bounded", rep.bounded)


def _timeseries(c: Context, name, run):
    c.csv(name, ["t", "mass_defect", "pi_norm", "orbital_distance", "min_rho", "madelung_norm"],
          np.column_stack([run.times, run.mass_defect, run.pi_norm, run.orbital_distance, run.min_rho,
                           run.madelung_norm]))


def do_simulate(c: Context):
    sc = c.s.cfg.simulation
    eps = getattr(c.args, "eps", None)
    eps = min(sc.eps) if eps is None else eps
    run, band, gr = c.s.single_run(eps)
    _timeseries(c, "timeseries.csv", run)
    c.json("report.json", {"run": run.to_dict(), "k0": c.s.peak.k0, "sigma0": c.s.peak.sigma0,
                           "sigma_k0": gr.sigma, "torus_length": c.s.sim_grid.length,
                           "band": {"center": band.center, "plateau": band.plateau, "support": band.support},
                           "curve_source": c.s.peak.source})
    if sc.snapshots:
        write_snapshot(c.s.soliton_state(), c.out / "snapshot_t0", {"config_hash": c.h})
    c.check("mass_conserved", float(np.max(run.mass_defect)) < 1e-10)
    if run.fitted_rate is not None:
        c.check("linear_rate_within_5pct", abs(run.fitted_rate - gr.sigma) / gr.sigma < 0.05)


def do_experiment(c: Context):
    rep = c.s.experiment
    for r in rep.runs:
        _timeseries(c, f"timeseries_eps_{r.eps:g}.csv", r)
    c.csv("escape.csv", ["eps", "escape_time", "fitted_rate"],
          [[r.eps, np.nan if r.escape_time is None else r.escape_time,
            np.nan if r.fitted_rate is None else r.fitted_rate] for r in rep.runs])
    d = rep.to_dict()
    d["curve_source"] = c.s.peak.source
    c.json("experiment.json", d)
    if rep.slope is not None:
        c.check("escape_slope_within_10pct", abs(rep.slope - rep.slope_target) / rep.slope_target < 0.10)
    c.check("mass_conserved", all(float(np.max(r.mass_defect)) < 1e-10 for r in rep.runs))


def do_all(c: Context):
    from .acceptance import run_criteria
    for verb in VERBS[:-1]:
        sub = Context(c.args, c.s, c.out / verb)
        HANDLERS[verb](sub)
        for k, v in sub.checks.items():
            c.checks[f"{verb}.{k}"] = v
    results = run_criteria(c.s)
    for r in results:
        print(r.line())
    c.json("acceptance.json", {"criteria": [r.to_dict() for r in results]})
    c.criteria = {str(r.id): r.status for r in results}


HANDLERS = {"soliton": do_soliton, "spectrum": do_spectrum, "hypotheses": do_hypotheses, "growth": do_growth,
            "wavepacket": do_wavepacket, "resolvent": do_resolvent, "simulate": do_simulate,
            "experiment": do_experiment, "all": do_all}


# ---------------------------------------------------------------- driver

def build_parser():
    ap = argparse.ArgumentParser(prog="ek", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"eklab {__version__}")
    sub = ap.add_subparsers(dest="verb", required=True, metavar="verb")
    for verb in VERBS:
        p = sub.add_parser(verb)
        p.add_argument("--config", required=True, type=Path, help="TOML experiment configuration")
        p.add_argument("--out", type=Path, help="output directory (default: output.dir of the config)")
        p.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="worker processes for scans/sweeps")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--curve", type=Path, help="curve.json (or its directory) from an earlier 'ek spectrum'")
        if verb in ("spectrum", "all"):
            p.add_argument("--dump-modes", action="store_true", help="write the most unstable eigenmode")
        if verb == "resolvent":
            p.add_argument("--gamma", type=float, help="forcing rate (default gamma_factor * sigma0)")
            p.add_argument("--n", type=int, help="polynomial decay exponent of the forcing")
            p.add_argument("--s", type=int, help="time-derivative order")
        if verb == "simulate":
            p.add_argument("--eps", type=float, help="seed amplitude (default: smallest configured eps)")
    return ap


def _setup_logging(out: Path):
    level = getattr(logging, os.environ.get("EK_LOG", "WARNING").upper(), logging.WARNING)
    log.setLevel(logging.DEBUG)
    log.handlers.clear()
    err = logging.StreamHandler(sys.stderr)
    err.setLevel(level)
    err.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    log.addHandler(err)
    out.mkdir(parents=True, exist_ok=True)
    fh = logging.FileHandler(out / "run.log", mode="w")
    fh.setLevel(logging.INFO)
    fh.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    log.addHandler(fh)


def _manifest(out: Path, verb, cfg_hash, cfg_echo, checks, criteria=None, error=None):
    body = {"verb": verb, "version": __version__, "runtime": environment(), "config": cfg_echo,
            "checks": checks, "status": "error" if error else "ok"}
    if criteria is not None:
        body["criteria"] = criteria
    if error is not None:
        body["error"] = error
    write_json(out / "manifest.json", body, cfg_hash)


def main(argv=None):
    args = build_parser().parse_args(argv)
    out = args.out
    cfg = None
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.model_copy(update={"seed": args.seed})
        out = out or Path(cfg.output.dir)
        _setup_logging(out)
        session = Session(cfg, jobs=args.jobs, curve_path=args.curve or out)
        if args.verb == "all":
            session.curve_path = None
        ctx = Context(args, session, out)
        HANDLERS[args.verb](ctx)
        _manifest(out, args.verb, ctx.h, cfg.echo(), ctx.checks, getattr(ctx, "criteria", None))
        (out / "error.json").unlink(missing_ok=True)
        with open(out / "timings.log", "w") as fh:
            for k in sorted(session.timings):
                fh.write(f"{k} {session.timings[k]:.3f} s\n")
        return 0
    except (EKError, ArithmeticError, np.linalg.LinAlgError) as exc:
        err = exc.to_dict() if isinstance(exc, EKError) else \
            {"error": type(exc).__name__, "message": str(exc), "exit_code": 3}
        print(json.dumps(err, sort_keys=True), file=sys.stderr)
        out = out or Path("out")
        try:
            out.mkdir(parents=True, exist_ok=True)
            h = cfg.digest() if cfg is not None else ""
            write_json(out / "error.json", err, h)
            _manifest(out, args.verb, h, cfg.echo() if cfg is not None else None, {}, None, err)
        except OSError:
            pass
        return err["exit_code"]


if __name__ == "__main__":
    sys.exit(main())
