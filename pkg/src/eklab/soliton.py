"""Homoclinic travelling-wave profile Q_c = (rho_c, u_c) by quadrature of the potential ODE."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .discretization import Grid1D, derivative
from .errors import DegenerateTurningPointError, NoHomoclinicOrbitError, ResolutionError
from .model import EffectivePotential, Endstate, ModelSpec, effective_potential

POINTS_PER_DECAY = 16
SWITCH_LEVEL = 1e-9  # |rho - rho_inf| where the tail is continued by its linearisation
SERIES_RADIUS = 1e-3


def find_turning_point(pot: EffectivePotential, end: Endstate) -> float:
    """Nearest zero rho* of W on either side of rho_inf (depression side first)."""
    model, ri = pot.model, end.rho_inf
    fracs = np.logspace(-6, 0, 481)
    sides = (
        ("depression", ri - (ri - model.rho_min) * fracs[:-1], ri - (ri - model.rho_min) * (1 - 1e-12)),
        ("elevation", ri * (model.rho_max / ri) ** fracs[:-1] + ri * 1e-6, model.rho_max * (1 - 1e-12)),
    )
    for _, pts, last in sides:
        pts = np.append(pts, last)
        if pts.size == 0:
            continue
        w = np.asarray(pot.W(pts))
        hit = np.flatnonzero(w <= 0.0)
        if hit.size == 0:
            continue
        i = hit[0]
        if w[i] == 0.0:
            root = float(pts[i])
        else:
            lo = ri if i == 0 else pts[i - 1]
            lo = lo if i > 0 else ri + (pts[0] - ri) * 0.5
            root = brentq(lambda r: float(pot.W(r)), lo, pts[i], xtol=1e-15, rtol=1e-15, maxiter=500)
        slope = float(pot.dW(root))
        if abs(slope) < 1e-10 * max(1.0, abs(float(model.g0(ri)))):
            raise DegenerateTurningPointError(
                f"W'(rho*) = {slope:.3g} vanishes at rho* = {root:.12g}: heteroclinic (kink) case")
        return root
    raise NoHomoclinicOrbitError(
        f"no homoclinic orbit in admissible interval ({model.rho_min}, {model.rho_max}): "
        f"W has no zero on either side of rho_inf = {ri}")


class _HalfProfile:
    """rho(z) for z >= 0 from the desingularised ODE ds/dz = sqrt(2W/K)/(2s), rho = rho* + d s^2."""

    def __init__(self, pot: EffectivePotential, rho_star: float, kappa: float):
        self.pot, self.rho_star, self.kappa = pot, rho_star, kappa
        end, model = pot.end, pot.model
        self.d = float(np.sign(end.rho_inf - rho_star))
        self.depth = abs(end.rho_inf - rho_star)
        self.s_inf = np.sqrt(self.depth)
        d, rs = self.d, rho_star
        w3 = model.d2g0(rs) + 3.0 * end.j ** 2 / rs ** 4
        self.series = (d * float(pot.dW(rs)), 0.5 * float(pot.d2W(rs)), d * w3 / 6.0)

        def rate(z, s):
            return [self._speed(s[0])]

        def reach(z, s):
            return self.depth - s[0] ** 2 - SWITCH_LEVEL
        reach.terminal = True
        reach.direction = -1

        z_end = (np.log(self.depth / SWITCH_LEVEL) + 20.0) / kappa + 50.0 * np.sqrt(self.depth) / max(
            self._speed(0.0), 1e-300)
        sol = solve_ivp(rate, (0.0, z_end), [0.0], method="DOP853", rtol=1e-13, atol=1e-16,
                        dense_output=True, events=reach)
        if sol.status != 1:
            raise NoHomoclinicOrbitError(f"profile quadrature did not reach the endstate: {sol.message}")
        self.sol = sol.sol
        self.z_switch = float(sol.t_events[0][0])

    def _w_over_s2(self, s):
        s = np.asarray(s, dtype=float)
        a1, a2, a3 = self.series
        s2 = s * s
        small = s < SERIES_RADIUS
        safe = np.where(small, 1.0, s2)
        direct = self.pot.W(self.rho_star + self.d * safe) / safe
        return np.where(small, a1 + a2 * s2 + a3 * s2 * s2, direct)

    def _speed(self, s):
        s = np.clip(s, 0.0, self.s_inf)
        rho = self.rho_star + self.d * s * s
        val = 2.0 * np.maximum(self._w_over_s2(s), 0.0) / self.pot.model.K(rho)
        return 0.5 * np.sqrt(val)

    def __call__(self, z):
        """Return (rho, |rho'| with sign of d, rho'') at z >= 0."""
        z = np.asarray(z, dtype=float)
        core = z <= self.z_switch
        rho = np.empty_like(z)
        drho = np.empty_like(z)
        if np.any(core):
            s = np.clip(self.sol(z[core])[0], 0.0, self.s_inf)
            rho[core] = self.rho_star + self.d * s * s
            drho[core] = self.d * 2.0 * s * self._speed(s)
        tail = ~core
        if np.any(tail):
            delta = SWITCH_LEVEL * np.exp(-self.kappa * (z[tail] - self.z_switch))
            rho[tail] = self.pot.end.rho_inf - self.d * delta
            drho[tail] = self.d * self.kappa * delta
        model = self.pot.model
        ddrho = (self.pot.dW(rho) - 0.5 * model.dK(rho) * drho ** 2) / model.K(rho)
        return rho, drho, ddrho


@dataclass(frozen=True, eq=False)
class SolitonProfile:
    grid: Grid1D
    rho: np.ndarray
    drho: np.ndarray
    ddrho: np.ndarray
    u: np.ndarray
    du: np.ndarray
    end: Endstate
    model: ModelSpec
    rho_star: float
    kappa: float
    tol: float = 1e-12
    _half: Optional[_HalfProfile] = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("rho", "drho", "ddrho", "u", "du"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def z(self):
        return self.grid.x

    @property
    def c(self):
        return self.end.c

    @property
    def half_length(self):
        return self.grid.half_length

    def evaluate(self, z):
        """Profile fields (rho, rho', rho'', u, u') at arbitrary abscissae."""
        if self._half is None:
            raise ResolutionError("profile was built from samples and has no continuous evaluator")
        z = np.asarray(z, dtype=float)
        rho, drho, ddrho = self._half(np.abs(z))
        drho = np.sign(z) * drho
        j, c = self.end.j, self.end.c
        return rho, drho, ddrho, c + j / rho, -j * drho / rho ** 2

    def resample(self, grid: Grid1D) -> "SolitonProfile":
        rho, drho, ddrho, u, du = self.evaluate(grid.x)
        return replace(self, grid=grid, rho=rho, drho=drho, ddrho=ddrho, u=u, du=du)


def decay_rate(pot: EffectivePotential) -> float:
    end = pot.end
    return float(np.sqrt(pot.curvature / pot.model.K(end.rho_inf)))


def compute_profile(model: ModelSpec, end: Endstate, resolution: int = 1024, tol: float = 1e-12,
                    half_length: Optional[float] = None) -> SolitonProfile:
    """Even soliton profile on a uniform periodic grid centred at the turning point.

    The half-length defaults to the smallest X with |rho_c(X) - rho_inf| < tol,
    and never less than eight decay lengths.
    """
    pot = effective_potential(model, end)
    rho_star = find_turning_point(pot, end)
    model.check_domain(rho_star)
    kappa = decay_rate(pot)
    half = _HalfProfile(pot, rho_star, kappa)
    if half_length is None:
        x_tol = half.z_switch + max(np.log(SWITCH_LEVEL / tol), 0.0) / kappa
        half_length = float(max(x_tol, 8.0 / kappa))
    per_decay = resolution / (2.0 * half_length) / kappa
    if per_decay < POINTS_PER_DECAY:
        raise ResolutionError(
            f"{resolution} nodes on half-length {half_length:.4g} give {per_decay:.2f} points per decay "
            f"length 1/kappa = {1 / kappa:.4g}; need at least {POINTS_PER_DECAY}")
    grid = Grid1D(resolution, half_length)
    proto = SolitonProfile(grid, np.zeros(1), np.zeros(1), np.zeros(1), np.zeros(1), np.zeros(1),
                           end, model, float(rho_star), kappa, tol, half)
    return proto.resample(grid)


def profile_residual(p: SolitonProfile, model: Optional[ModelSpec] = None) -> float:
    """Max of the profile-ODE residual (spectral derivatives) and the relative flux defect."""
    model = model or p.model
    pot = effective_potential(model, p.end)
    r1 = derivative(p.rho, p.grid, 1)
    r2 = derivative(p.rho, p.grid, 2)
    ode = model.K(p.rho) * r2 + 0.5 * model.dK(p.rho) * r1 ** 2 - pot.dW(p.rho)
    j = p.end.j
    flux = p.rho * (p.u - p.end.c) - j
    flux = flux / abs(j) if j != 0 else flux
    return float(max(np.max(np.abs(ode)), np.max(np.abs(flux))))


def flux_defect(p: SolitonProfile) -> float:
    j = p.end.j
    dev = np.max(np.abs(p.rho * (p.u - p.end.c) - j))
    return float(dev / abs(j) if j != 0 else dev)
