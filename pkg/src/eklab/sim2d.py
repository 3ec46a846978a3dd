"""Nonlinear 2D Euler-Korteweg solver in potential form, co-moving with the wave, and its diagnostics.

State: (rho, phi~) on [-X, X) x [0, L), with phi = phi_bg + phi~ and
d phi_bg / dx = u_c(x) a fixed background (the soliton potential is not
periodic, its velocity is).
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .discretization import Grid1D
from .errors import IntegratorError, ParameterError, VacuumError
from .evolution1d import TransverseBand, _band_edge, fit_rate, t_star
from .linop import apply_jl, growth_rate, on_grid
from .model import ModelSpec
from .soliton import SolitonProfile

log = logging.getLogger(__name__)

VACUUM_FLOOR = 1e-6
DT_SAFETY = 1.25   # dt * remainder radius; spurious growth appears above about 2
DT_MAX = 0.1       # cap when the remainder vanishes (constant background)


@dataclass(frozen=True)
class Grid2D:
    nx: int
    ny: int
    half_length: float
    length: float

    def __post_init__(self):
        for name in ("nx", "ny"):
            v = getattr(self, name)
            if v < 4 or v & (v - 1):
                raise ParameterError(f"{name} must be a power of two, got {v}")

    @cached_property
    def grid_x(self) -> Grid1D:
        return Grid1D(self.nx, self.half_length)

    @property
    def x(self):
        return self.grid_x.x

    @property
    def y(self):
        return self.length * np.arange(self.ny) / self.ny

    @property
    def dx(self):
        return 2.0 * self.half_length / self.nx

    @property
    def dy(self):
        return self.length / self.ny

    @cached_property
    def kx(self):
        return (np.pi / self.half_length * np.fft.fftfreq(self.nx, 1.0 / self.nx))[:, None]

    @cached_property
    def ky(self):
        return (2 * np.pi / self.length * np.arange(self.ny // 2 + 1))[None, :]

    @cached_property
    def ikx(self):
        k = self.kx.copy()
        k[self.nx // 2] = 0.0
        return 1j * k

    @cached_property
    def iky(self):
        k = self.ky.copy()
        k[0, -1] = 0.0
        return 1j * k

    @cached_property
    def q(self):
        return self.kx ** 2 + self.ky ** 2

    @cached_property
    def parseval(self):
        """Weights turning |rfft2|^2 sums into integrals over the box."""
        w = np.full((1, self.ny // 2 + 1), 2.0)
        w[0, 0] = 1.0
        if self.ny % 2 == 0:
            w[0, -1] = 1.0
        return w * self.dx * self.dy / (self.nx * self.ny)

    def integral_sq(self, fh):
        return float(np.sum(self.parseval * np.abs(fh) ** 2))


@dataclass(frozen=True, eq=False)
class Field2D:
    rho: np.ndarray
    phi: np.ndarray          # periodic part phi~ of the potential
    t: float
    grid: Grid2D


class NonlinearRHS:
    """Right-hand side in the frame moving at speed c.

    rho_t = c rho_x - div(rho grad phi)
    phi_t = c phi_x - |grad phi|^2 / 2 + K Lap(rho) + K'/2 |grad rho|^2 - g0(rho) - B
    with B = c u_inf - u_inf^2 / 2 - g0(rho_inf) removing the uniform gauge drift.
    """

    def __init__(self, profile: SolitonProfile, grid: Grid2D, vacuum_floor: float = VACUUM_FLOOR):
        self.grid = grid
        self.profile = on_grid(profile, grid.grid_x)
        self.model: ModelSpec = profile.model
        end = profile.end
        self.end = end
        self.c = end.c
        self.u_bg = self.profile.u[:, None]
        self.bernoulli = end.c * end.u_inf - 0.5 * end.u_inf ** 2 - float(self.model.g0(end.rho_inf))
        self.vacuum_floor = vacuum_floor
        self.min_rho = np.inf

    def background_state(self):
        g = self.grid
        return (np.repeat(self.profile.rho[:, None], g.ny, axis=1), np.zeros((g.nx, g.ny)))

    def spectral(self, rh, ph):
        """(rho_t, phi_t) transforms from the transforms of rho and phi~."""
        g, model = self.grid, self.model
        ikx, iky = g.ikx, g.iky
        phys = np.fft.irfft2(np.stack([rh, ikx * rh, iky * rh, -g.q * rh, ikx * ph, iky * ph]),
                             s=(g.nx, g.ny), axes=(1, 2))
        rho, rx, ry, lap, px, py = phys
        self.min_rho = float(rho.min())
        if self.min_rho <= self.vacuum_floor:
            raise VacuumError(f"min rho = {self.min_rho:.3g} reached the vacuum floor {self.vacuum_floor}")
        ux = self.u_bg + px
        uy = py
        dphi = (self.c * ux - 0.5 * (ux * ux + uy * uy) + model.K(rho) * lap
                + 0.5 * model.dK(rho) * (rx * rx + ry * ry) - model.g0(rho) - self.bernoulli)
        fl = np.fft.rfft2(np.stack([rho * ux, rho * uy, dphi]), axes=(1, 2))
        drh = self.c * ikx * rh - ikx * fl[0] - iky * fl[1]
        return drh, fl[2]

    def __call__(self, rho, phi):
        rh, ph = np.fft.rfft2(rho), np.fft.rfft2(phi)
        drh, dph = self.spectral(rh, ph)
        g = self.grid
        return np.fft.irfft2(drh, s=(g.nx, g.ny)), np.fft.irfft2(dph, s=(g.nx, g.ny))


class EKSolver:
    """Lawson RK4 with the endstate-linearised dispersive part integrated exactly."""

    def __init__(self, profile: SolitonProfile, grid: Grid2D, vacuum_floor: float = VACUUM_FLOOR):
        self.rhs = NonlinearRHS(profile, grid, vacuum_floor)
        self.grid = grid
        model, end = profile.model, profile.end
        ri = end.rho_inf
        self.a = ri * grid.q
        self.b = float(model.K(ri)) * grid.q + float(model.dg0(ri))
        self.omega = np.sqrt(self.a * self.b)
        self.adv = -end.w_inf * grid.ikx
        p = self.rhs.profile
        qmax = float(grid.q.max())
        d_rho = np.max(np.abs(p.rho - ri))
        d_K = np.max(np.abs(model.K(p.rho) - model.K(ri)))
        d_w = np.max(np.abs(p.u - end.u_inf))
        self.remainder_radius = float(np.sqrt(qmax * d_rho * d_K * qmax) + d_K * qmax
                                      + d_w * np.sqrt(qmax))
        self.omega_max = float(self.omega.max())
        self._props = {}

    def default_dt(self):
        """Step set by the explicitly treated remainder only; the endstate part is exact."""
        if self.remainder_radius * DT_MAX <= DT_SAFETY:
            return DT_MAX
        return DT_SAFETY / self.remainder_radius

    def _prop(self, h):
        if h not in self._props:
            c = np.cos(self.omega * h)
            s = h * np.sinc(self.omega * h / np.pi)
            ph = np.exp(self.adv * h)
            self._props[h] = (ph * c, ph * self.a * s, -ph * self.b * s)
        return self._props[h]

    def linear(self, rh, ph):
        return self.adv * rh + self.a * ph, -self.b * rh + self.adv * ph

    def nonlin(self, u):
        drh, dph = self.rhs.spectral(u[0], u[1])
        lr, lp = self.linear(u[0], u[1])
        return np.stack([drh - lr, dph - lp])

    def _apply(self, h, u):
        c, ab, ba = self._prop(h)
        return np.stack([c * u[0] + ab * u[1], ba * u[0] + c * u[1]])

    def step_spectral(self, u, dt):
        E = lambda v: self._apply(dt, v)
        E2 = lambda v: self._apply(0.5 * dt, v)
        k1 = self.nonlin(u)
        k2 = self.nonlin(E2(u + 0.5 * dt * k1))
        k3 = self.nonlin(E2(u) + 0.5 * dt * k2)
        eu = E(u)
        k4 = self.nonlin(eu + dt * E2(k3))
        return eu + dt / 6.0 * (E(k1) + 2.0 * E2(k2 + k3) + k4)

    def to_spectral(self, state: Field2D):
        return np.stack([np.fft.rfft2(state.rho), np.fft.rfft2(state.phi)])

    def to_field(self, u, t):
        g = self.grid
        return Field2D(np.fft.irfft2(u[0], s=(g.nx, g.ny)), np.fft.irfft2(u[1], s=(g.nx, g.ny)), t, g)

    def step(self, state: Field2D, dt: float) -> Field2D:
        return self.to_field(self.step_spectral(self.to_spectral(state), dt), state.t + dt)


def rhs(state: Field2D, profile: SolitonProfile):
    return NonlinearRHS(profile, state.grid)(state.rho, state.phi)


def step(state: Field2D, dt: float, profile: SolitonProfile, scheme: str = "lawson-rk4") -> Field2D:
    if scheme != "lawson-rk4":
        raise ParameterError(f"unknown scheme '{scheme}'")
    return EKSolver(profile, state.grid).step(state, dt)


def linearization_defect(profile: SolitonProfile, grid: Grid2D, k: float, mode, eta: float = 1e-6) -> dict:
    """Relative gap between (rhs(Q + eta V) - rhs(Q)) / eta and JL(k) applied to V = Re[v e^{iky}]."""
    f = NonlinearRHS(profile, grid)
    p = f.profile
    base = soliton_state(p, grid)
    pert = seeded_state(p, grid, eta, mode, k)
    r0 = f(base.rho, base.phi)
    r1 = f(pert.rho, pert.phi)
    a1, a2 = apply_jl(p, k, mode.U1, mode.U2)
    ey = np.exp(1j * k * grid.y)[None, :]
    exact = (np.real(a1[:, None] * ey), np.real(a2[:, None] * ey))
    diff = [(r1[i] - r0[i]) / eta - exact[i] for i in range(2)]
    scale = np.sqrt(np.sum(exact[0] ** 2) + np.sum(exact[1] ** 2))
    parts = [float(np.sqrt(np.sum(d ** 2)) / scale) for d in diff]
    return {"relative": float(np.sqrt(parts[0] ** 2 + parts[1] ** 2)), "rho_part": parts[0], "phi_part": parts[1],
            "eta": eta, "nx": grid.nx, "ny": grid.ny}


# ---------------------------------------------------------------- diagnostics

def velocity(state: Field2D, u_bg):
    g = state.grid
    ph = np.fft.rfft2(state.phi)
    ux = np.asarray(u_bg)[:, None] + np.fft.irfft2(g.ikx * ph, s=(g.nx, g.ny))
    uy = np.fft.irfft2(g.iky * ph, s=(g.nx, g.ny))
    return ux, uy


def pi_project(state: Field2D, profile: SolitonProfile, band) -> np.ndarray:
    """Pi(U - Q_c) for U = (rho, u_x, u_y): transverse Fourier band-pass, shape (3, nx, ny)."""
    g = state.grid
    p = on_grid(profile, g.grid_x)
    ux, uy = velocity(state, p.u)
    comps = np.stack([state.rho - p.rho[:, None], ux - p.u[:, None], uy])
    f = band(g.ky[0])
    return np.fft.irfft(np.fft.rfft(comps, axis=-1) * f, n=g.ny, axis=-1)


def pi_norm(state: Field2D, profile: SolitonProfile, band) -> float:
    g = state.grid
    return float(np.sqrt(g.dx * g.dy * np.sum(pi_project(state, profile, band) ** 2)))


def _shifted(fh, xi, a):
    return np.fft.ifft(fh * np.exp(-1j * xi * a)).real


def orbital_distance(state: Field2D, profile: SolitonProfile):
    """(min over a of ||U - Q_c(. - a)||_{L2}, a) with u compared through grad phi."""
    g = state.grid
    p = on_grid(profile, g.grid_x)
    gx = g.grid_x
    xi = gx.xi_odd
    ux, uy = velocity(state, p.u)
    rbar, ubar = state.rho.mean(axis=1), ux.mean(axis=1)
    rc, uc = np.fft.fft(p.rho), np.fft.fft(p.u)
    rb, ub = np.fft.fft(rbar), np.fft.fft(ubar)

    def f(a):
        e = np.exp(-1j * xi * a)
        return float(np.sum(np.abs(rb - rc * e) ** 2 + np.abs(ub - uc * e) ** 2))

    def fprime(a):
        e = np.exp(-1j * xi * a)
        d1 = 0.0
        d2 = 0.0
        for bh, ch in ((rb, rc), (ub, uc)):
            r = bh - ch * e
            dr = 1j * xi * ch * e
            d1 += 2.0 * np.sum(np.real(np.conj(r) * dr))
            d2 += 2.0 * np.sum(np.abs(dr) ** 2 + np.real(np.conj(r) * (xi ** 2) * ch * e))
        return float(d1), float(d2)

    corr = np.fft.ifft(rb * np.conj(rc) + ub * np.conj(uc)).real
    m = int(np.argmax(corr))
    a0 = m * g.dx
    if a0 > g.half_length:
        a0 -= 2 * g.half_length
    gr = (np.sqrt(5) - 1) / 2
    lo, hi = a0 - g.dx, a0 + g.dx
    c, d = hi - gr * (hi - lo), lo + gr * (hi - lo)
    fc, fd = f(c), f(d)
    while hi - lo > 1e-6 * g.dx:
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - gr * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + gr * (hi - lo)
            fd = f(d)
    a = 0.5 * (lo + hi)
    for _ in range(3):
        d1, d2 = fprime(a)
        if d2 <= 0:
            break
        cand = a - d1 / d2
        if abs(cand - a) > g.dx or f(cand) > f(a):
            break
        a = cand
    rs = _shifted(rc, xi, a)[:, None]
    us = _shifted(uc, xi, a)[:, None]
    dist2 = g.dx * g.dy * float(np.sum((state.rho - rs) ** 2 + (ux - us) ** 2 + uy ** 2))
    return float(np.sqrt(dist2)), float(a)


@dataclass(frozen=True, eq=False)
class MadelungDiagnostics:
    G: np.ndarray
    w: np.ndarray     # (2, nx, ny)
    z: np.ndarray     # (2, nx, ny) complex
    norm: float
    gauge: np.ndarray


def gauge_amplitude(model: ModelSpec, rho):
    return np.sqrt(rho * model.K(rho))


def madelung_diagnostics(state: Field2D, model: ModelSpec, s: int = 1, u_bg=None,
                         reference: Optional[Field2D] = None, rho_inf: float = 1.0) -> MadelungDiagnostics:
    """G = int_{rho_inf}^rho sqrt(K/r) dr, w = grad G, z = grad phi + i w and the weighted norm
    ||A(rho)^{s/2} Lambda^s (z - z_ref)||, A = sqrt(rho K)."""
    g = state.grid
    if np.min(state.rho) <= 0:
        raise VacuumError("madelung diagnostics need positive density")
    u_bg = np.zeros(g.nx) if u_bg is None else u_bg

    def zfield(st):
        G = model.madelung_primitive(st.rho, rho_inf)
        Gh = np.fft.rfft2(G)
        w = np.stack([np.fft.irfft2(g.ikx * Gh, s=(g.nx, g.ny)), np.fft.irfft2(g.iky * Gh, s=(g.nx, g.ny))])
        ux, uy = velocity(st, u_bg)
        return G, w, np.stack([ux + 1j * w[0], uy + 1j * w[1]])

    G, w, z = zfield(state)
    dz = z - zfield(reference)[2] if reference is not None else z
    lam = (1.0 + g.q) ** (0.5 * s)
    gauge = gauge_amplitude(model, state.rho) ** (0.5 * s)
    tot = 0.0
    for comp in dz:
        for part in (comp.real, comp.imag):
            filt = np.fft.irfft2(lam * np.fft.rfft2(part), s=(g.nx, g.ny))
            tot += np.sum((gauge * filt) ** 2)
    return MadelungDiagnostics(G, w, z, float(np.sqrt(g.dx * g.dy * tot)), gauge)


# ---------------------------------------------------------------- experiment

@dataclass
class RunRecord:
    eps: float
    times: np.ndarray
    mass_defect: np.ndarray
    pi_norm: np.ndarray
    orbital_distance: np.ndarray
    shift: np.ndarray
    min_rho: np.ndarray
    madelung_norm: np.ndarray
    escape_time: Optional[float]
    censored: bool
    t_cap: float
    t_star: Optional[float]
    delta_stop: float
    fitted_rate: Optional[float]
    fit_residual: Optional[float]
    fit_window: Optional[tuple]
    dt: float
    steps: int
    wall_time: float
    vacuum: bool = False

    def to_dict(self, with_history=False):
        d = {k: v for k, v in self.__dict__.items() if not isinstance(v, np.ndarray)}
        d["max_mass_defect"] = float(np.max(self.mass_defect)) if self.mass_defect.size else 0.0
        d["max_orbital_distance"] = float(np.max(self.orbital_distance))
        d.pop("wall_time", None)
        if with_history:
            for k in ("times", "mass_defect", "pi_norm", "orbital_distance", "shift", "min_rho", "madelung_norm"):
                d[k] = getattr(self, k).tolist()
        return d


@dataclass
class InstabilityReport:
    k0: float
    sigma0: float
    sigma_k0: float
    torus_length: float
    band: dict
    runs: list
    slope: Optional[float]
    slope_target: float
    escape_monotone: bool
    config: dict = field(default_factory=dict)

    def to_dict(self):
        return {"k0": self.k0, "sigma0": self.sigma0, "sigma_k0": self.sigma_k0,
                "torus_length": self.torus_length, "band": self.band,
                "runs": [r.to_dict() for r in self.runs], "escape_slope": self.slope,
                "slope_target": self.slope_target, "escape_monotone": self.escape_monotone,
                "config": self.config}


def soliton_state(profile: SolitonProfile, grid: Grid2D) -> Field2D:
    rho, phi = NonlinearRHS(profile, grid).background_state()
    return Field2D(rho, phi, 0.0, grid)


def seeded_state(profile: SolitonProfile, grid: Grid2D, eps: float, mode, k: float) -> Field2D:
    """Q_c + eps Re[v1(x) e^{iky}] with v1 = (density, potential) parts of ``mode``."""
    base = soliton_state(profile, grid)
    if eps == 0:
        return base
    ph = np.exp(1j * k * grid.y)[None, :]
    r1 = np.real(mode.U1[:, None] * ph)
    p1 = np.real(mode.U2[:, None] * ph)
    return Field2D(base.rho + eps * r1, base.phi + eps * p1, 0.0, grid)


def default_band(profile: SolitonProfile, grid_x: Grid1D, k0: float, sigma0: float) -> TransverseBand:
    """Pi band: 1 on the interval around k0 where sigma~ > 3 sigma0/4, 0 beyond 1.5 times its radius."""
    p = on_grid(profile, grid_x)
    level = 0.75 * sigma0
    r = min(_band_edge(p, grid_x, k0, level, -1, 0.05), _band_edge(p, grid_x, k0, level, 1, 0.05))
    return TransverseBand(k0, r, 1.5 * r)


def run_single(profile: SolitonProfile, grid: Grid2D, eps: float, k0: float, sigma0: float, mode,
               band: TransverseBand, kappa: float = 0.1, dt: Optional[float] = None,
               t_end: Optional[float] = None, diag_every: float = 0.1, delta_stop: Optional[float] = None,
               madelung_s: int = 1, stop_on_escape: bool = True) -> RunRecord:
    """Time-step Q_c + eps Re[v1 e^{i k0 y}] until the orbital distance reaches delta_stop or T_cap."""
    wall = time.perf_counter()
    solver = EKSolver(profile, grid)
    p = solver.rhs.profile
    dt = dt or solver.default_dt()
    tstar = t_star(eps, kappa, sigma0) if eps > 0 else None
    t_cap = t_end if t_end is not None else (tstar or 0.0) + 10.0 / sigma0
    every = max(1, int(round(diag_every / dt)))
    steps = int(np.ceil(t_cap / dt))
    q_inf_norm = np.sqrt(grid.length * grid.dx * np.sum((p.rho - p.end.rho_inf) ** 2 + (p.u - p.end.u_inf) ** 2))
    delta_stop = delta_stop if delta_stop is not None else 0.05 * q_inf_norm
    state = seeded_state(p, grid, eps, mode, k0)
    ref = soliton_state(p, grid)
    u = solver.to_spectral(state)
    mass0 = float(u[0][0, 0].real)
    mass_scale = max(abs(mass0), 1e-300)
    hist = {k: [] for k in ("t", "mass", "pi", "dist", "a", "min_rho", "mad")}
    guard_rate = np.exp(10.0 * sigma0 * dt)
    guard_floor = 1e-8 * q_inf_norm
    u_ref = solver.to_spectral(ref)

    def pert_norm(v):
        d = v - u_ref
        d[1][0, 0] = 0.0
        return np.sqrt(grid.integral_sq(d[0]) + grid.integral_sq(d[1]))

    def sample(v, t):
        st = solver.to_field(v, t)
        dist, a = orbital_distance(st, p)
        hist["t"].append(t)
        hist["mass"].append(abs(float(v[0][0, 0].real) - mass0) / mass_scale)
        hist["pi"].append(pi_norm(st, p, band))
        hist["dist"].append(dist)
        hist["a"].append(a)
        hist["min_rho"].append(float(st.rho.min()))
        hist["mad"].append(madelung_diagnostics(st, p.model, madelung_s, p.u, ref, p.end.rho_inf).norm)
        return dist

    sample(u, 0.0)
    escape, vacuum = None, False
    prev = pert_norm(u)
    i = 0
    try:
        for i in range(1, steps + 1):
            u = solver.step_spectral(u, dt)
            cur = pert_norm(u)
            if not np.isfinite(cur) or (cur > guard_floor and prev > guard_floor and cur > guard_rate * prev * 1.5):
                raise IntegratorError(f"perturbation norm jumped from {prev:.3g} to {cur:.3g} in one step "
                                      f"(dt = {dt:.3g}); time step too large for the remainder")
            prev = cur
            if i % every == 0 or i == steps:
                t = i * dt
                dist = sample(u, t)
                if stop_on_escape and eps > 0 and dist >= delta_stop:
                    t0, d0 = hist["t"][-2], hist["dist"][-2]
                    escape = t0 + (t - t0) * (np.log(delta_stop) - np.log(d0)) / (np.log(dist) - np.log(d0))
                    break
    except VacuumError:
        vacuum = True
        log.warning("eps=%g: vacuum reached at step %d", eps, i)
    arr = {k: np.array(v) for k, v in hist.items()}
    rate = resid = window = None
    if eps > 0:
        sel = (arr["pi"] >= 2 * eps) & (arr["pi"] <= 0.01)
        if np.count_nonzero(sel) >= 5:
            ts = arr["t"][sel]
            window = (float(ts[0]), float(ts[-1]))
            rate, resid = fit_rate(arr["t"], arr["pi"], window)
    return RunRecord(eps, arr["t"], arr["mass"], arr["pi"], arr["dist"], arr["a"], arr["min_rho"], arr["mad"],
                     None if escape is None else float(escape), escape is None and eps > 0, float(t_cap), tstar,
                     float(delta_stop), rate, resid, window, float(dt), i, time.perf_counter() - wall, vacuum)


def _run_job(args):
    return run_single(*args[0], **args[1])


def run_instability_experiment(profile: SolitonProfile, grid: Grid2D, k0: float, sigma0: float,
                               eps_list: Sequence[float], kappa: float = 0.1, dt: Optional[float] = None,
                               jobs: int = 1, diag_every: float = 0.1, config: Optional[dict] = None
                               ) -> InstabilityReport:
    for e in eps_list:
        if not 0 < e < kappa:
            raise ParameterError(f"eps = {e} must satisfy 0 < eps < kappa = {kappa}")
    gx = grid.grid_x
    p = on_grid(profile, gx)
    gr = growth_rate(p, gx, k0)
    if gr.mode is None:
        raise ParameterError(f"no unstable mode at k0 = {k0} on the simulation grid")
    band = default_band(p, gx, k0, sigma0)
    args = [((p, grid, e, k0, sigma0, gr.mode, band), {"kappa": kappa, "dt": dt, "diag_every": diag_every})
            for e in eps_list]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            runs = list(pool.map(_run_job, args))
    else:
        runs = [_run_job(a) for a in args]
    esc = [(r.eps, r.escape_time) for r in runs if r.escape_time is not None]
    slope = None
    if len(esc) >= 2:
        x = np.log([1.0 / e for e, _ in esc])
        y = np.array([t for _, t in esc])
        slope = float(np.polyfit(x, y, 1)[0])
    order = sorted(esc)
    monotone = all(order[i][1] >= order[i + 1][1] for i in range(len(order) - 1))
    return InstabilityReport(float(k0), float(sigma0), float(gr.sigma), grid.length,
                             {"center": band.center, "plateau": band.plateau, "support": band.support},
                             runs, slope, 1.0 / sigma0, monotone, config or {})


def write_snapshot(state: Field2D, path, extra: Optional[dict] = None):
    """Flat little-endian float64 arrays (rho then phi~) plus a JSON header alongside."""
    path = Path(path)
    data = np.stack([state.rho, state.phi]).astype("<f8")
    path.with_suffix(".bin").write_bytes(data.tobytes())
    g = state.grid
    header = {"shape": list(data.shape), "dtype": "<f8", "order": "C", "fields": ["rho", "phi_periodic"],
              "t": state.t, "nx": g.nx, "ny": g.ny, "half_length": g.half_length, "length": g.length}
    header.update(extra or {})
    path.with_suffix(".json").write_text(json.dumps(header, indent=2, sort_keys=True))
