"""Fluid closures K(rho), g0(rho), endstates and the travelling-wave potential W."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .errors import ConfigError, DomainError, SaddleConditionError

RHO_MIN_DEFAULT = 1e-8
RHO_MAX_DEFAULT = 1e8


@dataclass(frozen=True)
class Closure:
    """A scalar closure with analytic first and second derivatives.

    ``primitive(rho, ref)`` is an optional closed-form helper whose meaning
    depends on the closure role: for a chemical potential it is the Bregman
    remainder G0(rho) - G0(ref) - g0(ref)(rho - ref) of its antiderivative G0,
    for a capillarity it is the integral of sqrt(K(s)/s) from ref to rho.
    """

    name: str
    params: tuple
    value: Callable
    d1: Callable
    d2: Callable
    primitive: Optional[Callable] = None


def _madelung_capillarity(a=1.0):
    return Closure(
        "madelung", (a,),
        lambda r: a / (4.0 * r),
        lambda r: -a / (4.0 * r * r),
        lambda r: a / (2.0 * r ** 3),
        lambda r, ref: 0.5 * np.sqrt(a) * np.log(r / ref),
    )


def _constant_capillarity(a=1.0):
    return Closure(
        "constant", (a,),
        lambda r: a + 0.0 * r,
        lambda r: 0.0 * r,
        lambda r: 0.0 * r,
        lambda r, ref: 2.0 * np.sqrt(a) * (np.sqrt(r) - np.sqrt(ref)),
    )


def _linear_chemical(b=1.0):
    return Closure(
        "linear", (b,),
        lambda r: b * r,
        lambda r: b + 0.0 * r,
        lambda r: 0.0 * r,
        lambda r, ref: 0.5 * b * (r - ref) ** 2,
    )


def _power_chemical(b=1.0, gamma=2.0):
    # no closed-form remainder on purpose: W falls back to quadrature
    return Closure(
        "power", (b, gamma),
        lambda r: b * r ** gamma,
        lambda r: b * gamma * r ** (gamma - 1.0),
        lambda r: b * gamma * (gamma - 1.0) * r ** (gamma - 2.0),
    )


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    params: tuple
    capillarity: Closure
    chemical: Closure
    rho_min: float = RHO_MIN_DEFAULT
    rho_max: float = RHO_MAX_DEFAULT

    def __reduce__(self):
        # closures are lambdas; rebuild from the registry so a ModelSpec can cross process boundaries
        return (_rebuild_model, (self.kind, self.params, self.rho_min, self.rho_max))

    def check_domain(self, rho):
        r = np.asarray(rho, dtype=float)
        bad = ~np.isfinite(r) | (r <= self.rho_min) | (r >= self.rho_max)
        if np.any(bad):
            val = r[bad].flat[0] if r.ndim else float(r)
            raise DomainError(
                f"density {val!r} outside admissible interval ({self.rho_min}, {self.rho_max}) "
                f"of capillarity closure '{self.capillarity.name}' / chemical closure '{self.chemical.name}'")
        return r

    def K(self, rho):
        return self.capillarity.value(rho)

    def dK(self, rho):
        return self.capillarity.d1(rho)

    def d2K(self, rho):
        return self.capillarity.d2(rho)

    def g0(self, rho):
        return self.chemical.value(rho)

    def dg0(self, rho):
        return self.chemical.d1(rho)

    def d2g0(self, rho):
        return self.chemical.d2(rho)

    def madelung_primitive(self, rho, ref):
        """Integral of sqrt(K(s)/s) from ``ref`` to ``rho``."""
        rho = self.check_domain(rho)
        if self.capillarity.primitive is not None:
            return self.capillarity.primitive(rho, ref)
        return _gauss_legendre(lambda s: np.sqrt(self.K(s) / s), ref, rho)


def _gauss_legendre(f, a, b, order=48):
    # composite-free high-order rule; integrand assumed smooth on [a, b]
    nodes, weights = np.polynomial.legendre.leggauss(order)
    b = np.asarray(b, dtype=float)
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    pts = mid[..., None] + half[..., None] * nodes
    return half * np.sum(weights * f(pts), axis=-1)


MODEL_REGISTRY: dict[str, Callable[..., ModelSpec]] = {}


def register_model(kind: str):
    def deco(builder):
        MODEL_REGISTRY[kind] = builder
        return builder
    return deco


@register_model("madelung")
def _model_madelung(a=1.0, b=1.0):
    return ModelSpec("madelung", (a, b), _madelung_capillarity(a), _linear_chemical(b))


@register_model("constant_k")
def _model_constant_k(a=1.0, b=1.0):
    return ModelSpec("constant_k", (a, b), _constant_capillarity(a), _linear_chemical(b))


@register_model("polytropic")
def _model_polytropic(a=1.0, b=1.0, gamma=2.0):
    return ModelSpec("polytropic", (a, b, gamma), _constant_capillarity(a), _power_chemical(b, gamma))


def make_model(kind: str, params=()) -> ModelSpec:
    try:
        builder = MODEL_REGISTRY[kind]
    except KeyError:
        raise ConfigError(f"unknown model kind '{kind}'; registered: {sorted(MODEL_REGISTRY)}") from None
    try:
        model = builder(*params)
    except TypeError as exc:
        raise ConfigError(f"model '{kind}' rejects params {list(params)}: {exc}") from None
    if not np.all(model.K(np.geomspace(1e-3, 1e3, 61)) > 0):
        raise ConfigError(f"model '{kind}' with params {list(params)} has non-positive capillarity")
    return model


def _rebuild_model(kind, params, rho_min, rho_max):
    return dataclasses.replace(make_model(kind, params), rho_min=rho_min, rho_max=rho_max)


MODEL_A = make_model("madelung")
MODEL_B = make_model("constant_k")


def eval_closures(model: ModelSpec, rho):
    """Return (K, K', K'', g0, g0') at ``rho``."""
    r = model.check_domain(rho)
    return model.K(r), model.dK(r), model.d2K(r), model.g0(r), model.dg0(r)


@dataclass(frozen=True)
class Endstate:
    rho_inf: float
    u_inf: float
    c: float
    j: float = field(init=False)

    def __post_init__(self):
        if not (np.isfinite(self.rho_inf) and self.rho_inf > 0):
            raise DomainError(f"endstate density must be positive, got {self.rho_inf}")
        object.__setattr__(self, "j", self.rho_inf * (self.u_inf - self.c))

    @property
    def w_inf(self):
        return self.u_inf - self.c


def saddle_check(model: ModelSpec, end: Endstate):
    """Return (holds, margin) with margin = rho_inf g0'(rho_inf) - (u_inf - c)^2."""
    dg = model.dg0(model.check_domain(end.rho_inf))
    margin = float(end.rho_inf * dg - end.w_inf ** 2)
    return margin > 0, margin


@dataclass(frozen=True)
class EffectivePotential:
    """Potential of the profile equation  K(rho) rho'^2 / 2 = W(rho)."""

    model: ModelSpec
    end: Endstate
    closed_form: bool

    def dW(self, rho):
        r = np.asarray(rho, dtype=float)
        ri, j = self.end.rho_inf, self.end.j
        return self.model.g0(r) - self.model.g0(ri) + 0.5 * j * j * (1.0 / r ** 2 - 1.0 / ri ** 2)

    def d2W(self, rho):
        r = np.asarray(rho, dtype=float)
        return self.model.dg0(r) - self.end.j ** 2 / r ** 3

    def W(self, rho):
        r = np.asarray(rho, dtype=float)
        ri, j = self.end.rho_inf, self.end.j
        # closed-form antiderivative of the flux part, written without cancellation
        flux = -0.5 * j * j * (r - ri) ** 2 / (r * ri * ri)
        if self.closed_form:
            return self.model.chemical.primitive(r, ri) + flux
        return self._quad_chemical(r) + flux

    def _quad_chemical(self, r):
        g0, ri = self.model.g0, self.end.rho_inf
        g_ref = g0(ri)
        out = np.empty(np.shape(r))
        for idx, val in np.ndenumerate(np.asarray(r)):
            out[idx] = integrate.quad(lambda s: g0(s) - g_ref, ri, val, epsabs=1e-15, epsrel=1e-13, limit=200)[0]
        return out if out.ndim else float(out)

    @property
    def curvature(self):
        """W''(rho_inf)."""
        return float(self.d2W(self.end.rho_inf))


def effective_potential(model: ModelSpec, end: Endstate) -> EffectivePotential:
    holds, margin = saddle_check(model, end)
    if not holds:
        raise SaddleConditionError(
            f"saddle condition fails: rho_inf g0'(rho_inf) - (u_inf - c)^2 = {margin:.6g} <= 0")
    return EffectivePotential(model, end, model.chemical.primitive is not None)
