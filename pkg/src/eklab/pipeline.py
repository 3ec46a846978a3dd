"""One configured computation: each stage is built on first use and shared by CLI verbs and acceptance checks."""

from __future__ import annotations

import logging
import time
from functools import cached_property
from pathlib import Path
from typing import Optional

import numpy as np

from .config import ExperimentConfig
from .discretization import Grid1D
from .errors import DependencyError
from .evolution1d import (build_correction_v2, build_wavepacket, field_hs, field_l2, fit_rate,
                          make_wavepacket_spec, propagate_mode, resolvent_experiment, wavepacket_parseval)
from .io import read_json
from .linop import check_hypotheses, default_k_hi, growth_rate, on_grid, scan_growth_curve
from .oracles import nls_most_unstable
from .sim2d import Grid2D, run_instability_experiment, run_single, soliton_state
from .soliton import compute_profile, profile_residual

log = logging.getLogger(__name__)


class Peak:
    """(k0, sigma0, k_max) of a growth curve, either computed or read back from curve.json."""

    def __init__(self, k0, sigma0, kmax, source):
        self.k0, self.sigma0, self.kmax, self.source = float(k0), float(sigma0), float(kmax), source


class Session:
    def __init__(self, cfg: ExperimentConfig, jobs: int = 1, curve_path: Optional[Path] = None):
        self.cfg = cfg
        self.jobs = max(1, int(jobs))
        self.curve_path = Path(curve_path) if curve_path else None
        self.timings = {}
        self.model = cfg.build_model()
        self.end = cfg.build_endstate()

    def _timed(self, key, fn, *args, **kw):
        t = time.perf_counter()
        out = fn(*args, **kw)
        self.timings[key] = time.perf_counter() - t
        log.info("%s: %.2f s", key, self.timings[key])
        return out

    # ------------------------------------------------------------ profile and spectrum

    @cached_property
    def profile(self):
        g = self.cfg.grid
        return self._timed("soliton", compute_profile, self.model, self.end, g.n, g.tol, g.half_length)

    @cached_property
    def residual(self):
        return profile_residual(self.profile)

    def grid_1d(self, n):
        return Grid1D(n, self.profile.half_length)

    @cached_property
    def spectral_grid(self):
        return self.grid_1d(self.cfg.spectrum.n)

    @cached_property
    def spectral_profile(self):
        return on_grid(self.profile, self.spectral_grid)

    @cached_property
    def curve(self):
        sc = self.cfg.spectrum
        k_hi = sc.k_max if sc.k_max is not None else default_k_hi(self.spectral_profile)
        return self._timed("scan", scan_growth_curve, self.spectral_profile, self.spectral_grid,
                           (sc.k_min, k_hi), sc.samples, self.jobs, True, sc.rel_tol)

    @cached_property
    def peak(self) -> Peak:
        if "curve" in self.__dict__:
            c = self.curve
            return Peak(c.k0, c.sigma0, c.kmax, "computed")
        path = self.curve_path
        if path is None:
            raise DependencyError("growth curve not available: run 'ek spectrum' first or pass --curve")
        if path.is_dir():
            path = path / "curve.json"
        if not path.exists():
            raise DependencyError(f"missing growth-curve artifact '{path}': run 'ek spectrum' with the same --out")
        data = read_json(path)
        if data.get("config_hash") != self.cfg.digest():
            log.warning("curve artifact %s was produced by a different configuration", path)
        return Peak(data["k0"], data["sigma0"], data["kmax"], str(path))

    @cached_property
    def hypotheses(self):
        h = self.cfg.hypotheses
        return self._timed("hypotheses", check_hypotheses, self.spectral_profile, self.spectral_grid,
                           tuple(h.probes), h.xi_max, h.n_xi, h.n_random, self.cfg.seed)

    # ------------------------------------------------------------ linear evolution

    @cached_property
    def evolution_grid(self):
        return self.grid_1d(self.cfg.evolution.n)

    @cached_property
    def evolution_profile(self):
        return on_grid(self.profile, self.evolution_grid)

    def nls_applicable(self):
        e = self.end
        return (self.model.kind == "madelung" and tuple(self.model.params) == (1.0, 1.0)
                and e.rho_inf == 1.0 and e.u_inf == 0.0)

    @cached_property
    def growth(self) -> dict:
        """Eigensolve rate at k0 against the fitted rate of the propagated eigenmode (and the NLS oracle)."""
        pk = self.peak
        g, p = self.evolution_grid, self.evolution_profile
        gr = growth_rate(p, g, pk.k0)
        if gr.mode is None:
            raise DependencyError(f"no unstable mode at k0 = {pk.k0} on the N = {g.n} evolution grid")
        T = self.cfg.evolution.growth_t / gr.sigma
        traj = self._timed("growth", propagate_mode, p, g, pk.k0, gr.mode, T=T, s=1, js=(0, 1))
        rate, resid = fit_rate(traj.times, traj.norms["l2"], (0.5 * T, T))
        out = {"k0": pk.k0, "sigma0": pk.sigma0, "sigma_eig": gr.sigma, "sigma_eig_imag": gr.sigma_imag,
               "fitted_rate": rate, "fit_residual": resid, "window": [0.5 * T, T], "n": g.n,
               "method": traj.method, "dt": traj.dt, "rel_diff": abs(rate - pk.sigma0) / pk.sigma0,
               "history": traj}
        if self.nls_applicable():
            sc = self.cfg.spectrum
            v = self.end.c - self.end.u_inf
            k_n, s_n = self._timed("nls_oracle", nls_most_unstable, sc.n, self.profile.half_length, v,
                                   (0.6 * pk.k0, 1.4 * pk.k0), 1e-6)
            out["nls"] = {"k0": k_n, "sigma0": s_n, "rel_k0": abs(k_n - pk.k0) / k_n,
                          "rel_sigma0": abs(s_n - pk.sigma0) / s_n}
        return out

    def resolvent(self, s: Optional[int] = None, gamma: Optional[float] = None, n: Optional[int] = None):
        ev, pk = self.cfg.evolution, self.peak
        s = ev.s if s is None else s
        n = ev.decay if n is None else n
        gamma = ev.gamma_factor * pk.sigma0 if gamma is None else gamma
        return self._timed(f"resolvent_s{s}", resolvent_experiment, self.evolution_profile, self.evolution_grid,
                           pk.k0, gamma, n, s, ev.resolvent_t / pk.sigma0, pk.sigma0)

    @cached_property
    def wavepacket(self) -> dict:
        ev, pk = self.cfg.evolution, self.peak
        t0 = time.perf_counter()
        spec = make_wavepacket_spec(pk, self.evolution_profile, self.evolution_grid, ev.torus_multiple)
        T = ev.wavepacket_t / pk.sigma0
        ts = np.linspace(0.0, T, 201)
        fields = [build_wavepacket(spec, t, ev.ny) for t in ts]
        l2 = np.array([field_l2(f, spec.grid, spec.torus_length) for f in fields])
        hs = np.array([field_hs(f, spec.grid, spec.torus_length, ev.s) for f in fields])
        rate, resid = fit_rate(ts, l2, (0.5 * T, T))
        comp = l2 * (1.0 + ts) ** 0.25 * np.exp(-pk.sigma0 * ts)
        out = {"band": {"center": spec.band.center, "plateau": spec.band.plateau, "support": spec.band.support},
               "nodes": spec.nodes, "node_rates": spec.rates, "torus_length": spec.torus_length,
               "T": T, "v1_rate": rate, "v1_fit_residual": resid, "v1_rel_diff": abs(rate - pk.sigma0) / pk.sigma0,
               "v1_compensated_band": float(comp.max() / comp.min()),
               "v1_max_node_rate": float(np.max(spec.rates)),
               "parseval_defect": abs(l2[0] ** 2 - wavepacket_parseval(spec)) / l2[0] ** 2,
               "v1_history": np.column_stack([ts, l2, hs])}
        if ev.v2:
            hist = build_correction_v2(spec, self.evolution_profile, T, ev.v2_dt, s=ev.s)
            sel = hist.times > 0
            r2, res2 = fit_rate(hist.times[sel], hist.hs[sel], (0.5 * T, T))
            shape = np.log(hist.hs[sel]) - 2 * pk.sigma0 * hist.times[sel] + 0.5 * np.log1p(hist.times[sel])
            out.update({"v2_rate": r2, "v2_fit_residual": res2, "v2_rate_ratio": r2 / pk.sigma0,
                        "v2_wavenumbers": hist.wavenumbers, "v2_shape_max": float(shape.max()),
                        "v2_history": np.column_stack([hist.times, hist.l2, hist.hs])})
        self.timings["wavepacket"] = time.perf_counter() - t0
        return out

    # ------------------------------------------------------------ nonlinear simulation

    @cached_property
    def sim_grid(self) -> Grid2D:
        sc, pk = self.cfg.simulation, self.peak
        return Grid2D(sc.nx, sc.ny, sc.half_length, 2 * np.pi * sc.torus_multiple / pk.k0)

    @cached_property
    def sim_profile(self):
        return on_grid(self.profile, self.sim_grid.grid_x)

    def _sim_kwargs(self):
        sc = self.cfg.simulation
        return {"kappa": sc.kappa, "dt": sc.dt, "diag_every": sc.diag_every}

    @cached_property
    def experiment(self):
        sc, pk = self.cfg.simulation, self.peak
        cfg = {"config_hash": self.cfg.digest(), "simulation": sc.model_dump(mode="json")}
        rep = self._timed("experiment", run_instability_experiment, self.sim_profile, self.sim_grid, pk.k0,
                          pk.sigma0, sc.eps, jobs=self.jobs, config=cfg, **self._sim_kwargs())
        for r in rep.runs:
            self.timings[f"run_eps_{r.eps:g}"] = r.wall_time
        return rep

    def single_run(self, eps: float):
        from .sim2d import default_band
        sc, pk = self.cfg.simulation, self.peak
        gx = self.sim_grid.grid_x
        gr = growth_rate(self.sim_profile, gx, pk.k0)
        band = default_band(self.sim_profile, gx, pk.k0, pk.sigma0)
        run = run_single(self.sim_profile, self.sim_grid, eps, pk.k0, pk.sigma0, gr.mode, band,
                         kappa=sc.kappa, dt=sc.dt, t_end=sc.t_cap, diag_every=sc.diag_every,
                         delta_stop=sc.delta_stop, madelung_s=sc.madelung_s)
        self.timings[f"run_eps_{eps:g}"] = run.wall_time
        return run, band, gr

    @cached_property
    def steady(self):
        """Unperturbed soliton over steady_t / sigma0: orbital distance and mass defect history."""
        from .sim2d import default_band
        sc, pk = self.cfg.simulation, self.peak
        gx = self.sim_grid.grid_x
        band = default_band(self.sim_profile, gx, pk.k0, pk.sigma0)
        return self._timed("steady", run_single, self.sim_profile, self.sim_grid, 0.0, pk.k0, pk.sigma0, None,
                           band, kappa=sc.kappa, dt=sc.dt, t_end=sc.steady_t / pk.sigma0,
                           diag_every=max(sc.diag_every, 1.0), stop_on_escape=False)

    def soliton_state(self):
        return soliton_state(self.sim_profile, self.sim_grid)
