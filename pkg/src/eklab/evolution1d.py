"""Linear propagation of single transverse modes, resolvent experiment, wavepackets V1 and V2, T*."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg as sla

from .discretization import Grid1D, ModePair, hs_norm, xjk_norm
from .errors import IntegratorError, ParameterError, PhaseAlignmentError, RefinementError
from .linop import GrowthCurve, apply_jl, assemble, growth_rate, m_coefficient, on_grid
from .soliton import SolitonProfile

log = logging.getLogger(__name__)

EXPM_MAX = 512       # use the full matrix exponential when 2N is at most this
SPLIT_CFL = 0.05     # default dt * (remainder spectral radius) for the split integrator
SPLIT_CFL_MAX = 2.5


# ---------------------------------------------------------------- integrators

def lawson_rk4_step(u, t, h, E, E2, nonlin):
    """One Lawson (integrating factor) RK4 step for u' = A u + N(t, u); E = e^{hA}, E2 = e^{hA/2}."""
    k1 = nonlin(t, u)
    k2 = nonlin(t + 0.5 * h, E2(u + 0.5 * h * k1))
    k3 = nonlin(t + 0.5 * h, E2(u) + 0.5 * h * k2)
    eu = E(u)
    k4 = nonlin(t + h, eu + h * E2(k3))
    return eu + h / 6.0 * (E(k1) + 2.0 * E2(k2 + k3) + k4)


class _EndstateSplit:
    """Constant-coefficient part of JL(k) about the endstate, exact in Fourier space.

    Per wavenumber xi the symbol is -i w xi I + [[0, rho q], [-(K q + g0'), 0]],
    q = xi^2 + k^2, whose exponential has a closed form.
    """

    def __init__(self, profile: SolitonProfile, k: float):
        grid, model, end = profile.grid, profile.model, profile.end
        ri = end.rho_inf
        self.grid = grid
        xi, xi1 = grid.xi, grid.xi_odd
        q = xi ** 2 + k * k
        self.a = ri * q
        self.b = float(model.K(ri)) * q + float(model.dg0(ri))
        self.omega = np.sqrt(self.a * self.b)
        self.adv = -1j * end.w_inf * xi1
        Kc = model.K(profile.rho)
        m = m_coefficient(profile)
        w = profile.u - profile.c
        qmax = float(np.max(q))
        d_rho = np.max(np.abs(profile.rho - ri))
        d_K = np.max(np.abs(Kc - model.K(ri)))
        d_m = np.max(np.abs(m + model.dg0(ri)))
        d_w = np.max(np.abs(w - end.w_inf))
        self.remainder_radius = float(np.sqrt(d_rho * qmax * (d_K * qmax + d_m)) + d_w * np.max(np.abs(xi1)))

    def propagator(self, h):
        c = np.cos(self.omega * h)
        s = h * np.sinc(self.omega * h / np.pi)
        ph = np.exp(self.adv * h)
        a, b = self.a, self.b
        n = self.grid.n

        def apply(u):
            f1, f2 = np.fft.fft(u[:n]), np.fft.fft(u[n:])
            g1 = ph * (c * f1 + a * s * f2)
            g2 = ph * (-b * s * f1 + c * f2)
            return np.concatenate([np.fft.ifft(g1), np.fft.ifft(g2)])
        return apply

    def apply_symbol(self, u):
        n = self.grid.n
        f1, f2 = np.fft.fft(u[:n]), np.fft.fft(u[n:])
        g1 = self.adv * f1 + self.a * f2
        g2 = -self.b * f1 + self.adv * f2
        return np.concatenate([np.fft.ifft(g1), np.fft.ifft(g2)])


@dataclass(frozen=True, eq=False)
class ModeTrajectory:
    k: float
    grid: Grid1D
    times: np.ndarray
    states: np.ndarray                    # (samples, 2N) complex
    norms: dict = field(default_factory=dict)
    forcing: str = "none"
    method: str = "expm"
    dt: float = 0.0

    def mode(self, i) -> ModePair:
        return ModePair.from_stacked(self.states[i], self.k)


def _record_norms(store, U: ModePair, grid, s, js):
    store.setdefault("l2", []).append(hs_norm(U, grid, 0))
    store.setdefault(f"h{s}", []).append(hs_norm(U, grid, s))
    for j in js:
        store.setdefault(f"xjk_{j}", []).append(xjk_norm(U, grid, j, squared=False))


def propagate_mode(profile: SolitonProfile, grid: Grid1D, k: float, U0: ModePair,
                   forcing: Optional[Callable[[float], np.ndarray]] = None, T: float = 1.0,
                   dt: Optional[float] = None, method: str = "auto", sample_every: int = 1,
                   s: int = 1, js: Sequence[int] = (0,), forcing_label: str = "") -> ModeTrajectory:
    """Integrate dU/dt = JL(k) U + F(t) from U(0) = U0 by Lawson RK4.

    ``method="expm"`` uses the exact exponential of the assembled JL(k);
    ``method="split"`` exponentiates the endstate part only and treats the
    variable-coefficient remainder explicitly.
    """
    profile = on_grid(profile, grid)
    n = grid.n
    if method == "auto":
        method = "expm" if 2 * n <= EXPM_MAX else "split"
    u = U0.stacked().astype(complex)
    force = (lambda t: 0.0) if forcing is None else forcing
    if method == "expm":
        JL = assemble(profile, grid, k).JL
        dt = dt or min(0.05, T / 20.0)
        steps = max(1, int(np.ceil(T / dt - 1e-9)))
        dt = T / steps
        Em, E2m = sla.expm(dt * JL), sla.expm(0.5 * dt * JL)
        E, E2 = (lambda v: Em @ v), (lambda v: E2m @ v)
        nonlin = (lambda t, v: force(t)) if forcing is not None else None
        radius = None
    elif method == "split":
        split = _EndstateSplit(profile, k)
        radius = split.remainder_radius
        dt = dt or SPLIT_CFL / radius
        steps = max(1, int(np.ceil(T / dt - 1e-9)))
        dt = T / steps
        if dt * radius > SPLIT_CFL_MAX:
            raise IntegratorError(f"dt = {dt:.3g} exceeds the stability bound {SPLIT_CFL_MAX}/rho_rem "
                                  f"with remainder spectral radius rho_rem = {radius:.4g}")
        E, E2 = split.propagator(dt), split.propagator(0.5 * dt)
        m = m_coefficient(profile)

        def nonlin(t, v):
            a1, a2 = apply_jl(profile, k, v[:n], v[n:], m)
            return np.concatenate([a1, a2]) - split.apply_symbol(v) + force(t)
    else:
        raise ParameterError(f"unknown propagation method '{method}'")

    times, states, norms = [0.0], [u.copy()], {}
    _record_norms(norms, ModePair.from_stacked(u, k), grid, s, js)
    t = 0.0
    for i in range(1, steps + 1):
        if nonlin is None:
            u = E(u)
        else:
            u = lawson_rk4_step(u, t, dt, E, E2, nonlin)
        t = i * dt
        nu = np.linalg.norm(u)
        if not np.isfinite(nu) or nu > 1e200:
            raise IntegratorError(f"norm overflow at t = {t:.4g} with dt = {dt:.3g}"
                                  + (f", remainder spectral radius {radius:.4g}" if radius else ""))
        if i % sample_every == 0 or i == steps:
            times.append(t)
            states.append(u.copy())
            _record_norms(norms, ModePair.from_stacked(u, k), grid, s, js)
    return ModeTrajectory(float(k), grid, np.array(times), np.array(states),
                          {key: np.array(v) for key, v in norms.items()},
                          forcing_label or ("none" if forcing is None else "callable"), method, float(dt))


def fit_rate(t, y, window=None, compensate=0.0):
    """Least-squares slope of ln y + compensate * ln(1 + t) over ``window``; returns (rate, max residual)."""
    t, y = np.asarray(t, dtype=float), np.asarray(y, dtype=float)
    sel = np.ones_like(t, dtype=bool) if window is None else (t >= window[0]) & (t <= window[1])
    tt = t[sel]
    ly = np.log(y[sel]) + compensate * np.log1p(tt)
    coef = np.polyfit(tt, ly, 1)
    resid = ly - np.polyval(coef, tt)
    return float(coef[0]), float(np.max(np.abs(resid))) if resid.size else 0.0


# ---------------------------------------------------------------- resolvent experiment

@dataclass(frozen=True, eq=False)
class ResolventReport:
    k: float
    gamma: float
    n: int
    s: int
    T: float
    times: np.ndarray
    ratios: dict          # j -> ratio history
    sup: dict
    trend: dict
    bounded: bool


def _forcing_polys(gamma, n, order):
    """Coefficients (in powers of 1/(1+t)) of d^i/dt^i [e^{gamma t}(1+t)^{-n}] / [e^{gamma t}(1+t)^{-n}]."""
    polys = [np.array([1.0])]
    for _ in range(order):
        p = polys[-1]
        nxt = np.zeros(len(p) + 1)
        for jpow, cval in enumerate(p):
            nxt[jpow + 1] += -jpow * cval - n * cval
            nxt[jpow] += gamma * cval
        polys.append(nxt)
    return polys


def default_forcing_shape(grid: Grid1D):
    """Localised smooth forcing profile acting on both components."""
    x = grid.x
    return np.exp(-x ** 2) * (1.0 + 0.5 * x), 0.5 * np.exp(-0.5 * (x - 1.0) ** 2)


def resolvent_experiment(profile: SolitonProfile, grid: Grid1D, k: float, gamma: float, n: int, s: int,
                         T: float, sigma0: float, g: Optional[ModePair] = None,
                         dt: Optional[float] = None) -> ResolventReport:
    """Sup over t of |d_t^{s-j} U|_{X^j_k} (1+t)^n e^{-gamma t} for the forced problem with U(0) = 0."""
    if not gamma > sigma0:
        raise ParameterError(f"gamma = {gamma:.6g} must exceed sigma0 = {sigma0:.6g}")
    profile = on_grid(profile, grid)
    if g is None:
        g1, g2 = default_forcing_shape(grid)
        g = ModePair(g1, g2, k)
    gv = g.stacked()
    JL = assemble(profile, grid, k).JL
    polys = _forcing_polys(gamma, n, s)

    def F(t, order=0):
        tau = 1.0 / (1.0 + t)
        return np.polyval(polys[order][::-1], tau) * np.exp(gamma * t) * tau ** n * gv

    traj = propagate_mode(profile, grid, k, ModePair(np.zeros(grid.n), np.zeros(grid.n), k), F, T, dt or 0.05,
                          method="expm", s=max(s, 1), js=(), forcing_label="exp(gamma t)(1+t)^-n g")
    times = traj.times
    ratios = {j: np.zeros(len(times)) for j in range(s + 1)}
    for i, t in enumerate(times):
        derivs = [traj.states[i]]
        for order in range(s):
            derivs.append(JL @ derivs[-1] + F(t, order))
        weight = (1.0 + t) ** n * np.exp(-gamma * t)
        for j in range(s + 1):
            U = ModePair.from_stacked(derivs[s - j], k)
            ratios[j][i] = xjk_norm(U, grid, j, squared=False) * weight
    q = T / 4.0
    first, last = (times > 0) & (times <= q), times >= 3 * q
    sup = {j: float(np.max(r)) for j, r in ratios.items()}
    trend = {}
    for j, r in ratios.items():
        head = float(np.max(r[first])) if np.any(first) else 0.0
        tail = float(np.max(r[last]))
        trend[j] = tail / head if head > 0 else (0.0 if tail == 0 else float("inf"))
    bounded = all(v <= 1.05 for v in trend.values())
    return ResolventReport(float(k), float(gamma), int(n), int(s), float(T), times, ratios, sup, trend, bounded)


# ---------------------------------------------------------------- T*

def t_star(eps: float, kappa: float, sigma0: float) -> float:
    """Root T > 0 of eps e^{sigma0 T} (1 + T)^{-1/4} = kappa."""
    if not (0 < eps < kappa < 1):
        raise ParameterError(f"need 0 < eps < kappa < 1, got eps = {eps}, kappa = {kappa}")
    if not sigma0 > 0:
        raise ParameterError(f"sigma0 must be positive, got {sigma0}")
    target = np.log(kappa / eps)

    def h(T):
        return sigma0 * T - 0.25 * np.log1p(T) - target

    lo, hi = 0.0, target / sigma0
    while h(hi) < 0:
        hi = 2.0 * hi + 1.0
    T = hi
    for _ in range(200):
        val = h(T)
        if abs(val) < 1e-15 * max(1.0, target):
            break
        step = val / (sigma0 - 0.25 / (1.0 + T))
        cand = T - step
        if not (lo < cand < hi) or sigma0 - 0.25 / (1.0 + T) <= 0:
            cand = 0.5 * (lo + hi)
        if h(cand) > 0:
            hi = cand
        else:
            lo = cand
        T = cand
    return float(T)


# ---------------------------------------------------------------- wavepackets

def smooth_step(tau):
    """C-infinity step equal to 1 for tau <= 0 and 0 for tau >= 1, built from exp(-1/t)."""
    tau = np.asarray(tau, dtype=float)
    e = lambda t: np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
    a, b = e(1.0 - tau), e(tau)
    return a / (a + b)


@dataclass(frozen=True)
class TransverseBand:
    """Even smooth band function in k: 1 on |  |k| - center | <= plateau, 0 beyond support."""

    center: float
    plateau: float
    support: float

    def __call__(self, k):
        d = np.abs(np.abs(np.asarray(k, dtype=float)) - self.center)
        return smooth_step((d - self.plateau) / (self.support - self.plateau))


@dataclass(frozen=True, eq=False)
class WavepacketSpec:
    band: TransverseBand
    torus_length: float
    nodes: np.ndarray          # positive torus wavenumbers inside the support
    weights: np.ndarray        # dk * f1(k_n)
    rates: np.ndarray          # sigma~(k_n)
    modes: tuple               # v1(k_n) as ModePair, sign-aligned
    grid: Grid1D
    sigma0: float
    k0: float

    @property
    def torus_multiple(self):
        return int(round(self.torus_length * self.k0 / (2 * np.pi)))


def _band_edge(profile, grid, k0, level, direction, step):
    """Largest offset r such that sigma~(k0 + direction * r') > level for r' < r."""
    lo, hi = 0.0, step
    while growth_rate(profile, grid, k0 + direction * hi, vectors=False).sigma > level:
        lo, hi = hi, 2 * hi
    while hi - lo > 1e-6:
        mid = 0.5 * (lo + hi)
        if growth_rate(profile, grid, k0 + direction * mid, vectors=False).sigma > level:
            lo = mid
        else:
            hi = mid
    return lo


def make_wavepacket_spec(curve: GrowthCurve, profile: SolitonProfile, grid: Grid1D,
                         torus_multiple: int = 12) -> WavepacketSpec:
    """Nodes k_n = 2 pi n / L (L = 2 pi m / k0) inside the largest symmetric interval around k0
    where sigma~ > 3 sigma0 / 4; plateau radius is half the support radius."""
    profile = on_grid(profile, grid)
    k0, sigma0 = curve.k0, curve.sigma0
    level = 0.75 * sigma0
    r_s = min(_band_edge(profile, grid, k0, level, -1, 0.05), _band_edge(profile, grid, k0, level, 1, 0.05))
    band = TransverseBand(k0, 0.5 * r_s, r_s)
    L = 2 * np.pi * torus_multiple / k0
    dk = 2 * np.pi / L
    nmin, nmax = int(np.ceil((k0 - r_s) / dk)), int(np.floor((k0 + r_s) / dk))
    nodes = np.array([n * dk for n in range(nmin, nmax + 1) if band(n * dk) > 0])
    if nodes.size < 3:
        raise RefinementError(f"only {nodes.size} torus wavenumbers inside the band; increase torus_multiple")
    rates, modes = [], []
    for kn in nodes:
        r = growth_rate(profile, grid, kn)
        if r.mode is None:
            raise RefinementError(f"no unstable mode at k = {kn:.6g} inside the band")
        rates.append(r.sigma)
        modes.append(r.mode)
    order = np.argsort(np.abs(nodes - k0), kind="stable")
    aligned = {int(order[0]): modes[order[0]]}
    for i in order[1:]:
        nb = min(aligned, key=lambda j: abs(nodes[j] - nodes[i]))
        ref, cur = aligned[nb].stacked(), modes[i].stacked()
        ov = grid.dx * np.vdot(ref, cur)
        if abs(ov) < 0.9:
            raise PhaseAlignmentError(f"overlap {abs(ov):.3f} between v1({nodes[nb]:.5g}) and v1({nodes[i]:.5g}); "
                                      "refine the k-grid")
        phase = np.conj(ov) / abs(ov)
        aligned[int(i)] = ModePair.from_stacked(cur * phase, float(nodes[i]))
    modes = tuple(aligned[i] for i in range(len(nodes)))
    return WavepacketSpec(band, float(L), nodes, dk * band(nodes), np.array(rates), modes, grid, sigma0, k0)


def y_grid(length, ny):
    return length * np.arange(ny) / ny


def build_wavepacket(spec: WavepacketSpec, t: float, ny: int = 64):
    """Real field V1(t) = sum_n dk f1(k_n) e^{sigma_n t} (v1(k_n) e^{i k_n y} + c.c.), shape (2, nx, ny)."""
    y = y_grid(spec.torus_length, ny)
    n = spec.grid.n
    field_ = np.zeros((2, n, ny))
    for kn, wgt, sg, mode in zip(spec.nodes, spec.weights, spec.rates, spec.modes):
        amp = wgt * np.exp(sg * t)
        ph = np.exp(1j * kn * y)
        v = mode.stacked().reshape(2, n)
        field_ += 2.0 * amp * np.real(v[:, :, None] * ph[None, None, :])
    return field_


def field_l2(field_, grid: Grid1D, length):
    ny = field_.shape[-1]
    return float(np.sqrt(grid.dx * length / ny * np.sum(field_ ** 2)))


def field_hs(field_, grid: Grid1D, length, s):
    ny = field_.shape[-1]
    ky = 2 * np.pi / length * np.fft.fftfreq(ny, 1.0 / ny)
    w = (1.0 + grid.xi[:, None] ** 2 + ky[None, :] ** 2) ** s
    tot = 0.0
    for comp in field_:
        fh = np.fft.fft2(comp)
        tot += np.sum(w * np.abs(fh) ** 2)
    return float(np.sqrt(grid.dx * length / ny * tot / (grid.n * ny)))


def wavepacket_parseval(spec: WavepacketSpec) -> float:
    """||V1(0)||^2 predicted from the node weights: sum 2 L (dk f1)^2 ||v1||^2."""
    return float(sum(2.0 * spec.torus_length * w ** 2 * hs_norm(m, spec.grid, 0) ** 2
                     for w, m in zip(spec.weights, spec.modes)))


@dataclass(frozen=True, eq=False)
class CorrectionHistory:
    times: np.ndarray
    l2: np.ndarray
    hs: np.ndarray
    s: int
    wavenumbers: np.ndarray
    final: Optional[np.ndarray] = None


def build_correction_v2(spec: WavepacketSpec, profile: SolitonProfile, T: float, dt: float = 0.1,
                        ny: Optional[int] = None, s: int = 1, sample_every: int = 5,
                        source_step: float = 1e-3) -> CorrectionHistory:
    """Second-order correction: dV2/dt = JL V2 + R2(V1, V1), V2(0) = 0.

    The quadratic source is the symmetric second difference of the full 2D
    right-hand side along V1; each transverse Fourier mode of V2 is advanced
    with the exact exponential of JL(k) and Lawson RK4 in time.
    """
    from .sim2d import Grid2D, NonlinearRHS

    grid = spec.grid
    profile = on_grid(profile, grid)
    L = spec.torus_length
    dk = 2 * np.pi / L
    nmax = int(round(spec.nodes.max() / dk))
    need = 2 * nmax + 1
    if ny is None:
        ny = 1 << int(np.ceil(np.log2(2 * need + 1)))
    if ny < 2 * need + 1:
        raise RefinementError(f"ny = {ny} cannot resolve pair wavenumbers up to {2 * nmax} dk without aliasing")
    g2 = Grid2D(grid.n, ny, grid.half_length, L)
    rhs = NonlinearRHS(profile, g2)
    Q = rhs.background_state()
    r0 = np.stack(rhs(Q[0], Q[1]))

    def source(t):
        V = build_wavepacket(spec, t, ny)
        vmax = float(np.max(np.abs(V)))
        if vmax == 0.0:
            return np.zeros((2, grid.n, ny // 2 + 1), dtype=complex)
        # step relative to the field size: the quadratic part is exact, quartic terms are O(source_step^2)
        h = source_step / vmax
        rp = np.stack(rhs(Q[0] + h * V[0], Q[1] + h * V[1]))
        rm = np.stack(rhs(Q[0] - h * V[0], Q[1] - h * V[1]))
        R = (rp + rm - 2.0 * r0) / (2.0 * h * h)
        return np.fft.rfft(R, axis=-1) / ny

    # wavenumbers reached by sums and differences of node pairs
    idx = np.rint(spec.nodes / dk).astype(int)
    modes_n = sorted({a + b for a in idx for b in idx} | {abs(a - b) for a in idx for b in idx})
    props = {}
    for m_ in modes_n:
        JL = assemble(profile, grid, m_ * dk).JL
        props[m_] = (sla.expm(dt * JL), sla.expm(0.5 * dt * JL))
    steps = int(np.ceil(T / dt - 1e-9))
    dt = T / steps
    n = grid.n
    U = {m_: np.zeros(2 * n, dtype=complex) for m_ in modes_n}

    def pick(S, m_):
        return np.concatenate([S[0][:, m_], S[1][:, m_]])

    def assemble_field():
        spec_f = np.zeros((2, n, ny // 2 + 1), dtype=complex)
        for m_, u in U.items():
            spec_f[0][:, m_] = u[:n]
            spec_f[1][:, m_] = u[n:]
        return np.fft.irfft(spec_f * ny, n=ny, axis=-1)

    times, l2s, hss = [0.0], [0.0], [0.0]
    S0 = source(0.0)
    for i in range(1, steps + 1):
        t = (i - 1) * dt
        Sh, S1 = source(t + 0.5 * dt), source(t + dt)
        # the source does not depend on V2, so the Lawson RK4 stages reduce to quadrature
        for m_ in modes_n:
            Em, E2m = props[m_]
            U[m_] = Em @ (U[m_] + dt / 6.0 * pick(S0, m_)) + dt / 6.0 * (
                4.0 * (E2m @ pick(Sh, m_)) + pick(S1, m_))
        S0 = S1
        if i % sample_every == 0 or i == steps:
            V2 = assemble_field()
            times.append(i * dt)
            l2s.append(field_l2(V2, grid, L))
            hss.append(field_hs(V2, grid, L, s))
    return CorrectionHistory(np.array(times), np.array(l2s), np.array(hss), s, np.array(modes_n) * dk,
                             assemble_field())
