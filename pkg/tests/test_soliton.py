import numpy as np
import pytest
from scipy.integrate import solve_ivp

from eklab.discretization import Grid1D
from eklab.errors import NoHomoclinicOrbitError, ResolutionError
from eklab.linop import on_grid
from eklab.model import MODEL_A, MODEL_B, Endstate, effective_potential, make_model
from eklab.oracles import grey_soliton_density
from eklab.soliton import SolitonProfile, compute_profile, find_turning_point, flux_defect, profile_residual


def _with_rho(p, rho, drho, ddrho):
    u = p.c + p.end.j / rho
    du = -p.end.j * drho / rho ** 2
    return SolitonProfile(p.grid, rho, drho, ddrho, u, du, p.end, p.model, p.rho_star, p.kappa, p.tol)


def test_turning_point_model_a(end):
    assert find_turning_point(effective_potential(MODEL_A, end), end) == pytest.approx(0.25, abs=1e-14)


def test_black_soliton_limit_has_no_orbit():
    with pytest.raises(NoHomoclinicOrbitError):
        compute_profile(MODEL_A, Endstate(1.0, 0.0, 0.0), 1024)


def test_turning_point_model_b_is_root(end):
    pot = effective_potential(MODEL_B, end)
    r = find_turning_point(pot, end)
    assert abs(float(pot.W(r))) < 1e-12
    # sign-change scan oracle: W > 0 strictly between rho* and rho_inf, W < 0 just below rho*
    pts = np.linspace(r, 1.0, 2002)[1:-1]
    assert np.all(pot.W(pts) > 0)
    assert float(pot.W(r - 1e-6)) < 0


def test_closed_form_grey_soliton(prof_a):
    ref = 1.0 - 0.75 / np.cosh(np.sqrt(0.75) * prof_a.z) ** 2
    assert np.max(np.abs(prof_a.rho - ref)) < 1e-8
    # oracle module agrees with the formula written out here
    assert np.max(np.abs(grey_soliton_density(prof_a.z) - ref)) < 1e-15


@pytest.mark.parametrize("kind", ["madelung", "constant_k", "polytropic"])
def test_centre_is_turning_point(kind, end):
    p = compute_profile(make_model(kind), end, 1024)
    i0 = p.grid.n // 2
    assert p.z[i0] == 0.0
    assert p.rho[i0] == pytest.approx(p.rho_star, abs=1e-13)
    assert abs(p.drho[i0]) < 1e-12


def test_model_b_ode_residual(prof_b):
    assert profile_residual(prof_b) < 1e-8
    assert flux_defect(prof_b) < 1e-10


def test_residual_of_exact_profile(prof_a):
    z = prof_a.z
    a = np.sqrt(0.75)
    S = 1.0 / np.cosh(a * z) ** 2
    T = np.tanh(a * z)
    rho = 1.0 - 0.75 * S
    drho = 1.5 * a * S * T
    ddrho = 1.5 * a * a * S * (1.0 - 3.0 * T ** 2)
    assert profile_residual(_with_rho(prof_a, rho, drho, ddrho)) < 1e-8


def test_residual_detects_bump(prof_b):
    bump = 1e-3 * np.exp(-(prof_b.z - 1.0) ** 2)
    q = _with_rho(prof_b, prof_b.rho + bump, prof_b.drho, prof_b.ddrho)
    assert profile_residual(q) > 1e-4


def test_residual_of_constant_state(prof_b):
    one = np.ones(prof_b.grid.n)
    q = _with_rho(prof_b, one, 0 * one, 0 * one)
    assert profile_residual(q) == 0.0


def test_shooting_cross_check(end):
    """Integrate K rho'' + K'/2 rho'^2 = W'(rho) from the turning point; compare on [0, 5]."""
    model = MODEL_B
    pot = effective_potential(model, end)
    p = compute_profile(model, end, 1024)

    def f(z, y):
        r, dr = y
        return [dr, (float(pot.dW(r)) - 0.5 * model.dK(r) * dr * dr) / model.K(r)]

    zs = p.z[(p.z >= 0) & (p.z <= 5.0)]
    sol = solve_ivp(f, (0.0, 5.0), [p.rho_star, 0.0], t_eval=zs, rtol=1e-12, atol=1e-14, method="DOP853")
    assert np.max(np.abs(sol.y[0] - p.rho[(p.z >= 0) & (p.z <= 5.0)])) < 1e-7


@pytest.mark.parametrize("fixture", ["prof_a", "prof_b"])
def test_profile_invariants(fixture, request):
    p = request.getfixturevalue(fixture)
    assert np.all(p.rho > 0)
    assert abs(p.rho[0] - 1.0) < p.tol
    # one sign change of rho', at the centre
    s = np.sign(p.drho[np.abs(p.drho) > 1e-14])
    assert np.count_nonzero(np.diff(s)) == 1
    # evenness about the centre (grid is symmetric around index n/2)
    i0 = p.grid.n // 2
    assert np.max(np.abs(p.rho[i0 + 1:] - p.rho[i0 - 1:0:-1])) < 1e-13
    assert np.max(np.abs(p.u[i0 + 1:] - p.u[i0 - 1:0:-1])) < 1e-13
    assert flux_defect(p) < 1e-10
    # monotone on each half line
    assert np.all(np.diff(p.rho[i0:]) >= -1e-15) and np.all(np.diff(p.rho[:i0 + 1]) <= 1e-15)


@pytest.mark.parametrize("fixture", ["prof_a", "prof_b"])
def test_tail_decay_rate(fixture, request):
    p = request.getfixturevalue(fixture)
    dev = np.abs(p.rho - p.end.rho_inf)
    sel = (p.z > 0.5 * p.half_length) & (dev > 1e-13)
    slope = np.polyfit(p.z[sel], np.log(dev[sel]), 1)[0]
    assert abs(-slope - p.kappa) / p.kappa < 0.05


@pytest.mark.parametrize("fixture,sizes", [("prof_a", (64, 128, 256)), ("prof_b", (64, 128, 256, 512, 1024))])
def test_residual_converges_under_doubling(fixture, sizes, request):
    """Each doubling cuts the residual by at least 4 until the roundoff floor (~1e-10) is reached."""
    p = request.getfixturevalue(fixture)
    res = [profile_residual(on_grid(p, Grid1D(n, p.half_length))) for n in sizes]
    for a, b in zip(res, res[1:]):
        assert b <= a / 4


def test_underresolved_grid_rejected(end):
    with pytest.raises(ResolutionError):
        compute_profile(MODEL_A, end, 128)


def test_profile_on_other_grid_matches_closed_form(prof_a):
    q = on_grid(prof_a, Grid1D(512, 12.0))
    assert np.max(np.abs(q.rho - grey_soliton_density(q.z))) < 1e-8
