"""Dense transverse operators L(k), JL(k), M about a soliton, their spectra and the growth-rate curve."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .discretization import Grid1D, ModePair, apply_divgrad, derivative, divgrad_matrix
from .errors import EigensolverError, GridMismatchError, NoInstabilityError, RefinementError
from .model import Endstate, ModelSpec
from .soliton import SolitonProfile

log = logging.getLogger(__name__)

NEUTRAL_REL = 1e-8      # |Re| below this times the spectral radius counts as neutral
TAIL_FRACTION = 1e-2    # max share of |v|^2 on the outer tenth of the box for a genuine mode
TAIL_ZONE = 0.9
SIGMA_FLOOR = 1e-8


def m_coefficient(profile: SolitonProfile, form: str = "rederived"):
    """Zeroth-order coefficient of the linearised capillarity term.

    ``rederived`` is K' rho'' + K''/2 rho'^2 - g0', the linearisation of
    K Lap(rho) + K'/2 |grad rho|^2 - g0; ``literal`` replaces K''/2 by K'.
    """
    model, r, r1, r2 = profile.model, profile.rho, profile.drho, profile.ddrho
    if form == "rederived":
        quad = 0.5 * model.d2K(r)
    elif form == "literal":
        quad = model.dK(r)
    else:
        raise ValueError(f"unknown m form '{form}'")
    return model.dK(r) * r2 + quad * r1 ** 2 - model.dg0(r)


def _require_grid(profile: SolitonProfile, grid: Grid1D):
    if not profile.grid.same_as(grid):
        raise GridMismatchError(
            f"profile lives on (n={profile.grid.n}, X={profile.grid.half_length}) but operators were "
            f"requested on (n={grid.n}, X={grid.half_length}); resample the profile first")


def on_grid(profile: SolitonProfile, grid: Grid1D) -> SolitonProfile:
    return profile if profile.grid.same_as(grid) else profile.resample(grid)


@dataclass(frozen=True, eq=False)
class OperatorAssembly:
    profile: SolitonProfile
    grid: Grid1D
    k: float
    m_form: str
    m: np.ndarray
    L: np.ndarray
    JL: np.ndarray
    M: np.ndarray
    checks: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.grid.n


def assemble(profile: SolitonProfile, grid: Grid1D, k: float, m_form: str = "rederived") -> OperatorAssembly:
    _require_grid(profile, grid)
    model, n, k2 = profile.model, grid.n, float(k) ** 2
    rho = profile.rho
    Kc = model.K(rho)
    w = profile.u - profile.c
    m = m_coefficient(profile, m_form)
    D1 = grid.D1
    A_K = -divgrad_matrix(Kc, grid)
    L11 = A_K + np.diag(Kc * k2 - m)
    L12 = w[:, None] * D1
    L21 = L12.T.copy()  # = -D1 diag(w) exactly, D1 being antisymmetric
    L22 = -divgrad_matrix(rho, grid) + np.diag(rho * k2)
    L = np.block([[L11, L12], [L21, L22]])
    JL = np.block([[L21, L22], [-L11, -L12]])
    M = A_K - np.diag(m + w ** 2 / rho)
    m_inf = -float(model.dg0(profile.end.rho_inf))
    checks = {
        "hermitian_defect": float(np.max(np.abs(L - L.T)) / np.max(np.abs(L))),
        "m_endpoint_defect": float(max(abs(m[0] - m_inf), abs(m[-1] - m_inf))),
    }
    return OperatorAssembly(profile, grid, float(k), m_form, m, L, JL, M, checks)


J_BLOCK = np.array([[0.0, 1.0], [-1.0, 0.0]])


def j_matrix(n: int):
    """J = [[0, 1], [-1, 0]] acting blockwise on stacked (density, potential) vectors."""
    return np.kron(J_BLOCK, np.eye(n))


@dataclass(frozen=True)
class Spectrum:
    values: np.ndarray
    vectors: Optional[np.ndarray]
    checks: dict


def spectrum(A: OperatorAssembly, which: str = "JL", vectors: bool = False) -> Spectrum:
    mat = {"L": A.L, "JL": A.JL, "M": A.M}[which]
    if not np.all(np.isfinite(mat)):
        raise EigensolverError(f"{which} contains non-finite entries")
    try:
        if which == "JL":
            vals, vecs = sla.eig(mat) if vectors else (sla.eigvals(mat), None)
            return Spectrum(vals, vecs, {})
        sym = float(np.max(np.abs(mat - mat.T)))
        vals, vecs = (sla.eigh(mat) if vectors else (sla.eigvalsh(mat), None))
        return Spectrum(vals, vecs, {"symmetry_defect": sym})
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigensolverError(f"{which} eigensolve failed ({exc}); condition number "
                               f"{np.linalg.cond(mat):.3e}") from exc


def _tail_share(v, grid: Grid1D):
    n = grid.n
    mask = np.abs(grid.x) > TAIL_ZONE * grid.half_length
    p = np.abs(v[:n]) ** 2 + np.abs(v[n:]) ** 2
    return float(p[mask].sum() / p.sum())


def _inverse_iteration(mat, shift, start=None, iters=4):
    n = mat.shape[0]
    dtype = complex if np.iscomplexobj(shift) and shift.imag != 0 else float
    shift = shift if dtype is complex else float(np.real(shift))
    bump = 1e-10 * max(1.0, abs(shift))
    lu = sla.lu_factor(mat.astype(dtype) - (shift + bump) * np.eye(n))
    rng = np.random.default_rng(12345)
    if start is None:
        v = rng.standard_normal(n).astype(dtype)
    else:
        v = np.asarray(start if dtype is complex else np.real(start), dtype=dtype)
    for _ in range(iters):
        v = sla.lu_solve(lu, v)
        v /= np.linalg.norm(v)
    lam = np.vdot(v, mat @ v) / np.vdot(v, v)
    return lam, v


def normalize_mode(v, grid: Grid1D, k: float) -> ModePair:
    n = grid.n
    v = np.asarray(v, dtype=complex)
    v = v / np.sqrt(grid.dx * np.sum(np.abs(v) ** 2))
    i = int(np.argmax(np.abs(v[:n])))
    v = v * (np.conj(v[i]) / abs(v[i]))
    return ModePair(v[:n], v[n:], k)


@dataclass(frozen=True)
class GrowthRate:
    k: float
    sigma: float            # filtered max Re (0 when only neutral eigenvalues remain)
    sigma_imag: float
    count: int              # genuine eigenvalues with Re above threshold
    mode: Optional[ModePair]
    raw_max_real: float
    threshold: float
    spectral_radius: float
    flagged: bool = False
    rejected: tuple = ()


def growth_rate(profile: SolitonProfile, grid: Grid1D, k: float, vectors: bool = True,
                m_form: str = "rederived") -> GrowthRate:
    profile = on_grid(profile, grid)
    A = assemble(profile, grid, abs(k), m_form)
    vals = spectrum(A, "JL").values
    radius = float(np.max(np.abs(vals)))
    thr = NEUTRAL_REL * radius
    cand = vals[vals.real > thr]
    cand = cand[np.argsort(-cand.real, kind="stable")]
    genuine, rejected = [], []
    for lam in cand:
        _, v = _inverse_iteration(A.JL, lam)
        share = _tail_share(v, grid)
        (genuine if share < TAIL_FRACTION else rejected).append((lam, v, share))
    raw = float(np.max(vals.real))
    if not genuine:
        return GrowthRate(float(k), 0.0, 0.0, 0, None, raw, thr, radius, False,
                          tuple(float(r[0].real) for r in rejected))
    lam, v, _ = genuine[0]
    flagged = len(genuine) > 1
    if flagged:
        log.warning("k=%.6g: %d genuine unstable eigenvalues above threshold", k, len(genuine))
    mode = normalize_mode(v, grid, abs(k)) if vectors else None
    return GrowthRate(float(k), float(lam.real), float(lam.imag), len(genuine), mode, raw, thr, radius,
                      flagged, tuple(float(r[0].real) for r in rejected))


def apply_jl(profile: SolitonProfile, k: float, v1, v2, m: Optional[np.ndarray] = None):
    """Matrix-free JL(k) (v1, v2) using FFT derivatives."""
    grid, model = profile.grid, profile.model
    Kc = model.K(profile.rho)
    w = profile.u - profile.c
    m = m_coefficient(profile) if m is None else m
    k2 = k * k
    l11 = -apply_divgrad(Kc, v1, grid) + (Kc * k2 - m) * v1
    l12 = w * derivative(v2, grid, 1)
    l21 = -derivative(w * v1, grid, 1)
    l22 = -apply_divgrad(profile.rho, v2, grid) + profile.rho * k2 * v2
    return l21 + l22, -(l11 + l12)


def _tracked_sigma(profile, grid, k, guess, start=None):
    A = assemble(profile, grid, k)
    lam, v = _inverse_iteration(A.JL, guess, start, iters=6)
    return float(lam.real), v


@dataclass(frozen=True, eq=False)
class GrowthCurve:
    ks: np.ndarray
    sigmas: np.ndarray
    sigma_imag: np.ndarray
    counts: np.ndarray
    modes: dict
    k0: float
    sigma0: float
    kmax: float
    mode0: Optional[ModePair]
    grid: Grid1D
    meta: dict

    def table(self):
        return np.column_stack([self.ks, self.sigmas, self.counts, self.sigma_imag])


def _rate_job(args):
    profile, grid, k = args
    return growth_rate(profile, grid, k)


def default_k_hi(profile: SolitonProfile) -> float:
    return 4.0 * k_estimate(profile)


def k_estimate(profile: SolitonProfile) -> float:
    """sqrt(max(1/2, 1/min K(rho_c))), the wavenumber beyond which L(k) is coercive."""
    return float(np.sqrt(max(0.5, 1.0 / np.min(profile.model.K(profile.rho)))))


def _golden_max(f, a, b, tol):
    g = (np.sqrt(5) - 1) / 2
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def refine_peak(profile: SolitonProfile, grid: Grid1D, bracket, tol: float,
                start: Optional[GrowthRate] = None):
    """Golden-section maximum of sigma~ on ``bracket``, following one eigenvalue by inverse iteration.

    Returns (k0, sigma0). ``start`` seeds the tracked eigenpair; it defaults to
    a dense solve at the bracket midpoint.
    """
    profile = on_grid(profile, grid)
    a, b = bracket
    if start is None or start.mode is None:
        start = growth_rate(profile, grid, 0.5 * (a + b))
    if start.mode is None:
        raise RefinementError(f"no unstable mode inside the bracket [{a:.6g}, {b:.6g}]")
    state = {"guess": start.sigma, "start": start.mode.stacked()}

    def f(k):
        s, v = _tracked_sigma(profile, grid, k, state["guess"], state["start"])
        state["guess"], state["start"] = s, v
        return s
    k0 = _golden_max(f, a, b, tol)
    return float(k0), float(f(k0))


def scan_growth_curve(profile: SolitonProfile, grid: Grid1D, k_range=None, samples: int = 64,
                      jobs: int = 1, refine: bool = True, rel_tol: float = 1e-4) -> GrowthCurve:
    profile = on_grid(profile, grid)
    k_lo, k_hi = k_range if k_range is not None else (0.0, default_k_hi(profile))
    ks = np.linspace(k_lo, k_hi, samples)
    jobs_list = [(profile, grid, float(k)) for k in ks]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rates = list(pool.map(_rate_job, jobs_list))
    else:
        rates = [_rate_job(a) for a in jobs_list]
    sig = np.array([r.sigma for r in rates])
    i0 = int(np.argmax(sig))
    if sig[i0] <= SIGMA_FLOOR:
        raise NoInstabilityError(
            f"no positive growth rate on k in [{k_lo}, {k_hi}] ({samples} samples, N={grid.n}); "
            "the discretisation is likely under-resolved")
    k0, best = ks[i0], rates[i0]
    if refine:
        a, b = ks[max(i0 - 1, 0)], ks[min(i0 + 1, samples - 1)]
        k0, _ = refine_peak(profile, grid, (a, b), rel_tol * abs(ks[i0]) if ks[i0] else rel_tol, best)
        best = growth_rate(profile, grid, k0)
        if best.sigma < sig[i0] - 1e-10:
            raise RefinementError(f"refined sigma {best.sigma:.10g} below coarse sample {sig[i0]:.10g}")
    kmax = float("inf")
    above = np.flatnonzero((ks > ks[i0]) & (sig <= SIGMA_FLOOR))
    if above.size:
        lo, hi = ks[above[0] - 1], ks[above[0]]
        while hi - lo > 1e-5 * hi:
            mid = 0.5 * (lo + hi)
            if growth_rate(profile, grid, mid, vectors=False).sigma > SIGMA_FLOOR:
                lo = mid
            else:
                hi = mid
        kmax = 0.5 * (lo + hi)
    modes = {float(k): r.mode for k, r in zip(ks, rates) if r.mode is not None}
    meta = {
        "n": grid.n, "half_length": grid.half_length, "samples": samples, "k_range": [float(k_lo), float(k_hi)],
        "neutral_rel": NEUTRAL_REL, "tail_fraction": TAIL_FRACTION, "tail_zone": TAIL_ZONE,
        "sigma_floor": SIGMA_FLOOR, "max_count": int(max(r.count for r in rates)),
        "flagged": [float(r.k) for r in rates if r.flagged],
        "normalization": "unit L2 norm, density component real-positive at its max modulus",
    }
    return GrowthCurve(ks, sig, np.array([r.sigma_imag for r in rates]), np.array([r.count for r in rates]),
                       modes, float(k0), float(best.sigma), kmax, best.mode, grid, meta)


@dataclass(frozen=True)
class SymbolEigen:
    values: np.ndarray
    imag_residue: float


def _symbol_entries(end: Endstate, model: ModelSpec, xi, k):
    xi, k = np.broadcast_arrays(np.asarray(xi, dtype=float), np.asarray(k, dtype=float))
    q = xi ** 2 + k ** 2
    ri = end.rho_inf
    return xi, q, float(model.K(ri)), float(model.dg0(ri)), ri, end.w_inf


def linf_symbol(end: Endstate, model: ModelSpec, xi, k) -> SymbolEigen:
    """Eigenvalues of the Hermitian symbol of L_inf(k), shape (..., 2), ascending."""
    xi, q, Ki, dg, ri, w = _symbol_entries(end, model, xi, k)
    S = np.empty(xi.shape + (2, 2), dtype=complex)
    S[..., 0, 0] = Ki * q + dg
    S[..., 0, 1] = 1j * w * xi
    S[..., 1, 0] = -1j * w * xi
    S[..., 1, 1] = ri * q
    ev = np.linalg.eigvals(S)
    resid = float(np.max(np.abs(ev.imag))) if ev.size else 0.0
    return SymbolEigen(np.sort(ev.real, axis=-1), resid)


def jlinf_symbol_roots(end: Endstate, model: ModelSpec, xi, k):
    """Roots of X^2 - 2i xi w X + rho K q^2 + rho g0' k^2 + (rho g0' - w^2) xi^2 = 0, shape (..., 2)."""
    xi, q, Ki, dg, ri, w = _symbol_entries(end, model, xi, k)
    k2 = q - xi ** 2
    b = -2j * xi * w
    c0 = ri * Ki * q ** 2 + ri * dg * k2 + (ri * dg - w ** 2) * xi ** 2
    disc = np.sqrt(b * b - 4.0 * c0 + 0j)
    return np.stack([(-b + disc) / 2.0, (-b - disc) / 2.0], axis=-1)


@dataclass
class HypothesisResult:
    passed: bool
    evidence: dict


@dataclass
class HypothesisReport:
    H1: HypothesisResult
    H2: HypothesisResult
    H3: HypothesisResult
    H4: HypothesisResult

    @property
    def all_passed(self):
        return all(h.passed for h in (self.H1, self.H2, self.H3, self.H4))

    def to_dict(self):
        return {name: {"passed": bool(h.passed), **h.evidence}
                for name, h in zip(("H1", "H2", "H3", "H4"), (self.H1, self.H2, self.H3, self.H4))}


def smooth_random_vectors(grid: Grid1D, count: int, seed: int, band: Optional[int] = None, width=None):
    """Real random vectors, band-limited to |m| < band Fourier modes and tapered by a wide Gaussian."""
    rng = np.random.default_rng(seed)
    n = grid.n
    band = band or n // 8
    width = width or 0.3 * grid.half_length
    out = []
    for _ in range(count):
        coef = np.zeros(n, dtype=complex)
        coef[:band] = rng.standard_normal(band) + 1j * rng.standard_normal(band)
        coef[:band] /= (1.0 + np.arange(band)) ** 1.5
        f = np.fft.ifft(coef).real * n
        g = np.exp(-(grid.x / width) ** 2)
        out.append(f * g)
    return out


def _quad(a, b, grid):
    return grid.dx * float(np.sum(a * b))


def check_hypotheses(profile: SolitonProfile, grid: Grid1D, probes=(0.5, 1.0, 2.0), xi_max: float = 20.0,
                     n_xi: int = 4001, n_random: int = 10, seed: int = 0) -> HypothesisReport:
    profile = on_grid(profile, grid)
    model, end = profile.model, profile.end
    n = grid.n
    Kc = model.K(profile.rho)

    # H1: coercivity of L(k) beyond the estimate, plus the explicit lower bound as evidence
    k_est = k_estimate(profile)
    k_probe = 2.0 * k_est
    A1 = assemble(profile, grid, k_probe)
    alpha = float(sla.eigvalsh(A1.L, subset_by_index=[0, 0])[0])
    vecs = smooth_random_vectors(grid, 2 * n_random, seed + 1)
    defects = []
    for i in range(n_random):
        v1, v2 = vecs[2 * i], vecs[2 * i + 1]
        v = np.concatenate([v1, v2])
        lhs = grid.dx * float(v @ (A1.L @ v))
        d1, d2 = derivative(v1, grid), derivative(v2, grid)
        rhs = (_quad(0.5 * Kc * d1, d1, grid) + _quad((k_probe ** 2 - 0.5) * v1, v1, grid)
               + _quad(profile.rho * d2, d2, grid) + _quad((k_probe ** 2 - 1.0 / Kc) * v2, v2, grid))
        defects.append(lhs - rhs)
    h1 = HypothesisResult(alpha > 0, {
        "k_estimate": k_est, "k_probe": k_probe, "alpha": alpha,
        "explicit_bound_holds": int(sum(d >= 0 for d in defects)),
        "explicit_bound_trials": n_random, "explicit_bound_worst_margin": float(min(defects)),
    })

    # H2: positivity of the endstate symbol at probe wavenumbers
    xi = np.linspace(-xi_max, xi_max, n_xi)
    alphas, resid = {}, 0.0
    for k in probes:
        se = linf_symbol(end, model, xi, k)
        alphas[str(k)] = float(np.min(se.values))
        resid = max(resid, se.imag_residue)
    h2 = HypothesisResult(all(a > 0 for a in alphas.values()), {"alpha_k": alphas, "imag_residue": resid})

    # H3: L'(k) = diag(2kK, 2k rho)
    d3 = {str(k): float(2 * k * min(np.min(Kc), np.min(profile.rho))) for k in probes}
    h3 = HypothesisResult(all(v > 0 for v in d3.values()), {"min_diagonal": d3})

    # H4: one negative eigenvalue of M, rho' in its kernel, Schur identity for L(0)
    A0 = assemble(profile, grid, 0.0)
    mvals, mvecs = sla.eigh(A0.M)
    neg = int(np.sum(mvals < -SIGMA_FLOOR))
    near = int(np.sum(np.abs(mvals) <= SIGMA_FLOOR))
    dr = profile.drho
    ker = float(np.linalg.norm(A0.M @ dr) / np.linalg.norm(dr))
    l0 = sla.eigvalsh(A0.L)
    w = profile.u - profile.c
    schur = []
    for i in range(n_random):
        v1, v2 = vecs[2 * i], vecs[2 * i + 1]
        v = np.concatenate([v1, v2])
        lhs = grid.dx * float(v @ (A0.L @ v))
        g = derivative(v2, grid) + w * v1 / profile.rho
        rhs = grid.dx * float(v1 @ (A0.M @ v1)) + _quad(profile.rho * g, g, grid)
        schur.append(abs(lhs - rhs) / max(abs(lhs), abs(rhs)))
    schur_max = float(max(schur))
    h4 = HypothesisResult(neg == 1 and near <= 1 and ker < 1e-6 and schur_max < 1e-8, {
        "negative_count": neg, "near_kernel_count": near, "lambda": float(-mvals[0]),
        "next_eigenvalues": [float(x) for x in mvals[1:3]], "kernel_ratio": ker,
        "L0_negative_count": int(np.sum(l0 < -SIGMA_FLOOR)), "schur_max_defect": schur_max,
    })
    return HypothesisReport(h1, h2, h3, h4)
