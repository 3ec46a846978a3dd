"""Acceptance criteria 1-14 evaluated against a configured Session.

Each runner returns a CriterionResult with the measured quantities and the
thresholds it was judged against. Wall-clock budgets are checked here but the
measured times are kept out of the result payload so manifests stay
reproducible; they are available from ``Session.timings``.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Dict

import numpy as np
import scipy.linalg as sla

from .linop import assemble, check_hypotheses, jlinf_symbol_roots, on_grid, refine_peak
from .model import Endstate
from .oracles import grey_soliton_density
from .pipeline import Session
from .sim2d import Grid2D, linearization_defect
from .soliton import compute_profile, flux_defect, profile_residual

log = logging.getLogger(__name__)

CRITERIA: Dict[int, Callable] = {}
TITLES: Dict[int, str] = {}


@dataclass
class CriterionResult:
    id: int
    title: str
    status: str                       # pass | fail | skipped | deferred
    measured: dict = field(default_factory=dict)
    detail: str = ""

    @property
    def passed(self):
        return self.status == "pass"

    def line(self):
        return f"criterion {self.id:2d} [{self.status.upper()}] {self.title}: {self.detail}"

    def to_dict(self):
        return {"id": self.id, "title": self.title, "status": self.status, "measured": self.measured,
                "detail": self.detail}


def criterion(cid, title):
    def deco(fn):
        CRITERIA[cid] = fn
        TITLES[cid] = title
        return fn
    return deco


def _result(cid, ok, measured, detail):
    return CriterionResult(cid, TITLES[cid], "pass" if ok else "fail", measured, detail)


def _models(s: Session):
    return (("A", s.model, s.profile), ("B", s.cfg.build_companion(), _companion_profile(s)))


def _companion_profile(s: Session):
    if "_companion" not in s.__dict__:
        s.__dict__["_companion"] = compute_profile(s.cfg.build_companion(), s.end, s.cfg.grid.n, s.cfg.grid.tol)
    return s.__dict__["_companion"]


@criterion(1, "soliton closed-form oracle")
def c1(s: Session):
    e = s.end
    t = time.perf_counter()
    p = compute_profile(s.model, e, s.cfg.grid.n, s.cfg.grid.tol, s.cfg.grid.half_length)
    elapsed = time.perf_counter() - t
    s.timings["criterion1_profile"] = elapsed
    a, b = s.model.params[:2]
    err = float(np.max(np.abs(p.rho - grey_soliton_density(p.z, e.rho_inf, e.u_inf, e.c, a, b))))
    decays = p.half_length * p.kappa
    ok = err < 1e-8 and elapsed < 1.0 and decays >= 8.0
    return _result(1, ok, {"max_error": err, "n": p.grid.n, "decay_lengths": decays, "runtime_ok": elapsed < 1.0},
                   f"max error {err:.3e} (< 1e-8), X = {decays:.2f} decay lengths (>= 8), runtime under 1 s: "
                   f"{elapsed < 1.0}")


@criterion(2, "profile-ODE residual and flux identity (companion model)")
def c2(s: Session):
    p = _companion_profile(s)
    res, flux = profile_residual(p), flux_defect(p)
    return _result(2, res < 1e-8 and flux < 1e-10, {"residual": res, "flux_defect": flux},
                   f"residual {res:.3e} (< 1e-8), flux defect {flux:.3e} (< 1e-10)")


def _kernel_ratio(p, form):
    A = assemble(p, p.grid, 0.0, form)
    return float(np.linalg.norm(A.M @ p.drho) / np.linalg.norm(p.drho))


@criterion(3, "m-coefficient adjudication by the kernel of M")
def c3(s: Session):
    out = {}
    for tag, _, p in _models(s):
        for form in ("rederived", "literal"):
            out[f"{tag}_{form}"] = _kernel_ratio(p, form)
    ok = (out["A_rederived"] < 1e-6 and out["B_rederived"] < 1e-6 and out["A_literal"] > 1e-3
          and out["B_literal"] < 1e-6)
    return _result(3, ok, out, "re-derived A {A_rederived:.2e}, B {B_rederived:.2e} (< 1e-6); literal A "
                   "{A_literal:.2e} (> 1e-3), B {B_literal:.2e} (< 1e-6)".format(**out))


@criterion(4, "Sturm-Liouville count for M")
def c4(s: Session):
    out, ok = {}, True
    for tag, _, p in _models(s):
        ev = sla.eigvalsh(assemble(p, p.grid, 0.0).M)
        neg, near = int(np.sum(ev < -1e-8)), int(np.sum(np.abs(ev) <= 1e-8))
        out[tag] = {"negative": neg, "near_kernel": near, "lowest": [float(v) for v in ev[:3]]}
        ok &= neg == 1 and near <= 1
    return _result(4, ok, out, f"A: {out['A']['negative']} negative, {out['A']['near_kernel']} near-kernel; "
                   f"B: {out['B']['negative']} negative, {out['B']['near_kernel']} near-kernel")


@criterion(5, "hypotheses H1-H4 on both models")
def c5(s: Session):
    h = s.cfg.hypotheses
    out, ok = {}, True
    for tag, _, p in _models(s):
        # the companion decays over a longer box and needs its own full-resolution grid
        rep = s.hypotheses if tag == "A" else check_hypotheses(
            p, p.grid, tuple(h.probes), h.xi_max, h.n_xi, h.n_random, s.cfg.seed)
        out[tag] = rep.to_dict()
        ok &= rep.all_passed
    flags = {t: "".join("P" if out[t][k]["passed"] else "F" for k in ("H1", "H2", "H3", "H4")) for t in out}
    return _result(5, ok, out, f"H1..H4 model A {flags['A']}, model B {flags['B']} "
                   f"(Schur defect A {out['A']['H4']['schur_max_defect']:.1e})")


@criterion(6, "essential spectrum of JL is imaginary")
def c6(s: Session):
    g = np.linspace(-10.0, 10.0, 101)
    xi, k = np.meshgrid(g, g, indexing="ij")
    mask = (xi != 0) | (k != 0)
    out = {}
    for tag, model in (("A", s.model), ("B", s.cfg.build_companion())):
        roots = jlinf_symbol_roots(s.end, model, xi[mask], k[mask])
        out[tag] = float(np.max(np.abs(roots.real)))
    return _result(6, max(out.values()) < 1e-12, out,
                   f"max |Re X| A {out['A']:.2e}, B {out['B']:.2e} (< 1e-12)")


@criterion(7, "growth curve shape, count and refinement stability")
def c7(s: Session):
    c = s.curve
    scan_time = s.timings.get("scan", 0.0)
    ks = c.ks
    step = ks[1] - ks[0]
    fine = s.grid_1d(s.cfg.spectrum.refine_n)
    pf = on_grid(s.profile, fine)
    t = time.perf_counter()
    k1, s1 = refine_peak(pf, fine, (c.k0 - step, c.k0 + step), s.cfg.spectrum.rel_tol * c.k0)
    s.timings["refine"] = time.perf_counter() - t
    dk, ds = abs(k1 - c.k0) / c.k0, abs(s1 - c.sigma0) / c.sigma0
    max_count = int(np.max(c.counts))
    ok = (c.sigma0 > 0 and 0 < c.k0 < c.kmax and max_count <= 1 and dk < 1e-3 and ds < 1e-3
          and scan_time < 300.0)
    m = {"k0": c.k0, "sigma0": c.sigma0, "kmax": c.kmax, "max_count": max_count, "k0_fine": k1,
         "sigma0_fine": s1, "rel_change_k0": dk, "rel_change_sigma0": ds, "samples": len(ks),
         "n": c.grid.n, "n_fine": fine.n, "runtime_ok": scan_time < 300.0}
    return _result(7, ok, m, f"sigma0 {c.sigma0:.8f} at k0 {c.k0:.6f} < kmax {c.kmax:.6f}, max count "
                   f"{max_count}; N {c.grid.n}->{fine.n} changes {dk:.1e} / {ds:.1e} (< 1e-3); "
                   f"scan under 5 min: {scan_time < 300.0}")


@criterion(8, "rate cross-validation: time propagation and NLS oracle")
def c8(s: Session):
    g = {k: v for k, v in s.growth.items() if k != "history"}
    ok = g["rel_diff"] < 1e-2
    detail = f"propagation {g['fitted_rate']:.8f} vs sigma0 {g['sigma0']:.8f} ({g['rel_diff']:.1e} < 1e-2)"
    if "nls" in g:
        n = g["nls"]
        ok &= n["rel_sigma0"] < 5e-3 and n["rel_k0"] < 5e-3
        detail += f"; NLS oracle k0 {n['k0']:.6f}, sigma0 {n['sigma0']:.8f} ({n['rel_k0']:.1e}, " \
                  f"{n['rel_sigma0']:.1e} < 5e-3)"
    else:
        ok = False
        detail += "; NLS oracle not applicable to this model"
    return _result(8, ok, g, detail)


@criterion(9, "resolvent-estimate ratio trend")
def c9(s: Session):
    out, ok = {}, True
    for sv in sorted({0, 1}):
        rep = s.resolvent(s=sv)
        out[f"s{sv}"] = {"trend": {str(j): v for j, v in rep.trend.items()},
                         "sup": {str(j): v for j, v in rep.sup.items()}, "gamma": rep.gamma, "T": rep.T}
        ok &= rep.bounded
    trends = ", ".join(f"s={sv} j={j}: {v:.4f}" for sv in (0, 1) for j, v in out[f"s{sv}"]["trend"].items())
    return _result(9, ok, out, f"last/first quarter {trends} (<= 1.05)")


@criterion(10, "wavepacket V1 rate and envelope, V2 rate")
def c10(s: Session):
    w = {k: v for k, v in s.wavepacket.items() if not k.endswith("history")}
    ok = w["v1_rel_diff"] < 0.02 and w["v1_compensated_band"] <= 4.0
    detail = (f"V1 rate {w['v1_rate']:.6f} ({w['v1_rel_diff']:.2%} < 2%), compensated band "
              f"{w['v1_compensated_band']:.3f} (<= 4)")
    if "v2_rate_ratio" in w:
        ok &= 1.9 <= w["v2_rate_ratio"] <= 2.1
        detail += f", V2 rate {w['v2_rate_ratio']:.4f} sigma0 (in [1.9, 2.1])"
    else:
        ok = False
        detail += ", V2 disabled"
    return _result(10, ok, w, detail)


@criterion(11, "nonlinear instability: linear-phase rate and escape slope")
def c11(s: Session):
    rep = s.experiment
    runs = {r.eps: r for r in rep.runs}
    eps_min = min(runs)
    r = runs[eps_min]
    rate_rel = abs(r.fitted_rate - rep.sigma_k0) / rep.sigma_k0 if r.fitted_rate is not None else float("inf")
    slope_rel = abs(rep.slope - rep.slope_target) / rep.slope_target if rep.slope is not None else float("inf")
    in_budget = all(x.wall_time < 600.0 for x in rep.runs)
    ok = rate_rel < 0.05 and slope_rel < 0.10 and in_budget and not any(x.censored for x in rep.runs)
    m = {"eps": eps_min, "fitted_rate": r.fitted_rate, "sigma_k0": rep.sigma_k0, "rate_rel": rate_rel,
         "slope": rep.slope, "slope_target": rep.slope_target, "slope_rel": slope_rel,
         "escape_times": {f"{x.eps:g}": x.escape_time for x in rep.runs}, "runs_under_10_min": in_budget,
         "escape_monotone": rep.escape_monotone}
    return _result(11, ok, m, f"rate at eps={eps_min:g} off by {rate_rel:.2e} (< 5e-2), slope {rep.slope} vs "
                   f"1/sigma0 {rep.slope_target:.4f} ({slope_rel:.2e} < 1e-1), runs under 10 min: {in_budget}")


@criterion(12, "mass conservation and in-frame steadiness")
def c12(s: Session):
    st = s.steady
    runs = list(s.experiment.runs) + [st]
    mass = float(max(np.max(r.mass_defect) for r in runs))
    dist = float(np.max(st.orbital_distance))
    ok = mass < 1e-10 and dist < 1e-6 and st.times[-1] >= s.cfg.simulation.steady_t / s.peak.sigma0 - 1e-9
    return _result(12, ok, {"max_mass_defect": mass, "max_orbital_distance": dist, "t_end": float(st.times[-1])},
                   f"mass defect {mass:.2e} (< 1e-10), unperturbed orbital distance {dist:.2e} (< 1e-6) "
                   f"up to t = {st.times[-1]:.2f}")


@criterion(13, "linearization of the 2D right-hand side against JL")
def c13(s: Session):
    sc, pk = s.cfg.simulation, s.peak
    g = Grid2D(sc.linearization_nx, sc.ny, sc.half_length, s.sim_grid.length)
    p = on_grid(s.profile, g.grid_x)
    from .linop import growth_rate
    mode = growth_rate(p, g.grid_x, pk.k0).mode
    d = linearization_defect(p, g, pk.k0, mode, sc.linearization_eta)
    return _result(13, d["relative"] < 1e-5, d, f"relative error {d['relative']:.2e} (< 1e-5) with the "
                   f"unstable mode at k0 on {g.nx}x{g.ny}, eta = {sc.linearization_eta:g}")


@criterion(14, "bit-identical outputs for identical config and seed")
def c14(s: Session):
    return CriterionResult(14, TITLES[14], "deferred", {},
                           "needs two independent 'ek all' runs; checked by the test suite")


def run_criteria(s: Session, ids=None):
    ids = sorted(s.cfg.acceptance.criteria if ids is None else ids)
    results = []
    for cid in range(1, 15):
        if cid not in ids:
            results.append(CriterionResult(cid, TITLES[cid], "skipped", {}, "not selected in the configuration"))
            continue
        log.info("criterion %d: %s", cid, TITLES[cid])
        results.append(CRITERIA[cid](s))
    return results
