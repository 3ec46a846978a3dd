import json

import numpy as np
import pytest

from conftest import K0_REF, SIGMA0_REF
from eklab.discretization import ModePair
from eklab.evolution1d import TransverseBand, propagate_mode
from eklab.linop import growth_rate, on_grid
from eklab.model import MODEL_A, Endstate
from eklab.sim2d import (EKSolver, Field2D, Grid2D, NonlinearRHS, default_band, gauge_amplitude,
                         linearization_defect, madelung_diagnostics, orbital_distance, pi_norm,
                         pi_project, run_single, seeded_state, soliton_state, step, write_snapshot)
from eklab.soliton import SolitonProfile

L0 = 2 * np.pi / K0_REF


def _constant(p, grid_x):
    one = np.ones(grid_x.n)
    z = np.zeros(grid_x.n)
    return SolitonProfile(grid_x, one, z, z, z, z, p.end, p.model, p.rho_star, p.kappa, p.tol)


@pytest.fixture(scope="module")
def g256():
    return Grid2D(256, 8, 14.0, L0)


@pytest.fixture(scope="module")
def g128():
    return Grid2D(128, 8, 14.0, L0)


def test_endstate_is_steady(prof_a, g128):
    q = _constant(prof_a, g128.grid_x)
    f = NonlinearRHS(q, g128)
    r, ph = f(*f.background_state())
    assert np.max(np.abs(r)) == 0.0
    assert np.ptp(ph) < 1e-15 and np.max(np.abs(ph)) < 1e-15


def test_soliton_is_steady(prof_a, g256):
    f = NonlinearRHS(prof_a, g256)
    r, ph = f(*f.background_state())
    gx = g256.grid_x
    dph = np.fft.ifft(1j * gx.xi_odd[:, None] * np.fft.fft(ph, axis=0), axis=0).real
    assert np.max(np.abs(r)) < 1e-8 and np.max(np.abs(dph)) < 1e-8


def test_linearization_smooth_mode(prof_a, g256):
    x = g256.grid_x.x
    mode = ModePair(np.exp(-x ** 2 / 2) * (1 + x) + 0j, np.exp(-(x - 1) ** 2 / 3) + 0j, K0_REF)
    d = linearization_defect(prof_a, g256, K0_REF, mode, 1e-6)
    assert d["relative"] < 1e-5


def test_linearization_eigenmode(prof_a):
    g = Grid2D(512, 8, 14.0, L0)
    p = on_grid(prof_a, g.grid_x)
    mode = growth_rate(p, g.grid_x, K0_REF).mode
    assert linearization_defect(p, g, K0_REF, mode, 1e-6)["relative"] < 1e-5


def test_endstate_fixed_point_under_stepping(prof_a, g128):
    q = _constant(prof_a, g128.grid_x)
    st = soliton_state(q, g128)
    S = EKSolver(q, g128)
    dt = S.default_dt()
    u = S.to_spectral(st)
    for _ in range(100):
        u = S.step_spectral(u, dt)
    out = S.to_field(u, 100 * dt)
    assert np.max(np.abs(out.rho - 1.0)) < 1e-10
    assert np.ptp(out.phi) < 1e-10


def test_step_wrapper_matches_solver(prof_a, g128):
    st = soliton_state(prof_a, g128)
    a = step(st, 1e-3, prof_a)
    b = EKSolver(prof_a, g128).step(st, 1e-3)
    assert np.array_equal(a.rho, b.rho) and a.t == pytest.approx(1e-3)


def test_richardson_order(prof_a, g128):
    p = on_grid(prof_a, g128.grid_x)
    rng = np.random.default_rng(3)
    st = soliton_state(p, g128)
    x, y = g128.x[:, None], g128.y[None, :]
    noise = 1e-3 * np.exp(-x ** 2 / 4) * (np.cos(K0_REF * y + rng.random()) + 0.5 * np.cos(2 * K0_REF * y))
    st = Field2D(st.rho + noise, st.phi + 0.5 * noise, 0.0, g128)
    S = EKSolver(p, g128)
    T, base = 0.4, S.default_dt()
    outs = []
    for div in (1, 2, 4):
        n = int(np.ceil(T / base)) * div
        u = S.to_spectral(st)
        for _ in range(n):
            u = S.step_spectral(u, T / n)
        outs.append(u)
    e1, e2 = np.linalg.norm(outs[0] - outs[1]), np.linalg.norm(outs[1] - outs[2])
    assert np.log2(e1 / e2) >= 2.0


def test_linear_regime_matches_1d_propagation(prof_a):
    g128 = Grid2D(256, 4, 14.0, L0)
    gx = g128.grid_x
    p = on_grid(prof_a, gx)
    x = gx.x
    mode = ModePair(np.exp(-x ** 2 / 2) * (1 + x) + 0j, np.exp(-(x - 1) ** 2 / 3) + 0j, K0_REF)
    S = EKSolver(p, g128)
    T = 2.0 / SIGMA0_REF
    steps = int(np.ceil(T / S.default_dt()))
    dt = T / steps
    eps = 1e-7
    u = S.to_spectral(seeded_state(p, g128, eps, mode, K0_REF))
    u0 = S.to_spectral(soliton_state(p, g128))
    for _ in range(steps):
        u, u0 = S.step_spectral(u, dt), S.step_spectral(u0, dt)
    # the discrete soliton drifts slightly; comparing against the eps = 0 run isolates the perturbation
    st, base = S.to_field(u, T), S.to_field(u0, T)
    U = propagate_mode(p, gx, K0_REF, mode, T=T, dt=0.01, method="expm", sample_every=10 ** 9, js=()).mode(-1)
    ey = np.exp(1j * K0_REF * g128.y)[None, :]
    lr, lp = np.real(U.U1[:, None] * ey), np.real(U.U2[:, None] * ey)
    dr, dp = (st.rho - base.rho) / eps, (st.phi - base.phi) / eps
    dp = dp - dp.mean() + lp.mean()
    err = np.sqrt(np.sum((dr - lr) ** 2) + np.sum((dp - lp) ** 2)) / np.sqrt(np.sum(lr ** 2) + np.sum(lp ** 2))
    assert err < 1e-6


@pytest.fixture(scope="module")
def band():
    return TransverseBand(K0_REF, 0.1, 0.2)


def test_pi_kills_y_independent(prof_a, g128, band):
    p = on_grid(prof_a, g128.grid_x)
    st = soliton_state(p, g128)
    shifted = Field2D(st.rho + 0.01 * np.exp(-g128.x ** 2)[:, None], st.phi + 0.3, 0.0, g128)
    assert np.max(np.abs(pi_project(shifted, p, band))) < 1e-15


def test_pi_plateau_and_stopband(prof_a, g128, band):
    p = on_grid(prof_a, g128.grid_x)
    st = soliton_state(p, g128)
    gfun = np.exp(-g128.x ** 2)[:, None]
    for kk, expect in ((K0_REF, 1.0), (3 * K0_REF, 0.0)):
        pert = 1e-3 * gfun * np.cos(kk * g128.y)[None, :]
        out = pi_project(Field2D(st.rho + pert, st.phi, 0.0, g128), p, band)
        assert np.max(np.abs(out[0] - expect * pert)) < 1e-12
        assert np.max(np.abs(out[1:])) < 1e-12


def test_orbital_distance_recovers_shift(prof_a):
    # 512 nodes: band-limited interpolation of the profile is then exact to roundoff
    g256 = Grid2D(512, 4, 14.0, L0)
    p = on_grid(prof_a, g256.grid_x)
    a = 3.7 * g256.dx
    q = p.evaluate(g256.x - a)
    rho = np.repeat(q[0][:, None], g256.ny, axis=1)
    # potential perturbation phi~ with d/dx phi~ = u_c(x - a) - u_c(x)
    du = q[3] - p.u
    dh = np.fft.fft(du)
    xi = g256.grid_x.xi_odd
    ph = np.fft.ifft(np.where(xi != 0, dh / (1j * np.where(xi != 0, xi, 1.0)), 0.0)).real
    st = Field2D(rho, np.repeat(ph[:, None], g256.ny, axis=1), 0.0, g256)
    d, shift = orbital_distance(st, p)
    assert d < 1e-10 and abs(shift - a) < 1e-6


def test_orbital_distance_of_transverse_bump(prof_a, g256):
    p = on_grid(prof_a, g256.grid_x)
    st = soliton_state(p, g256)
    delta = 1e-4
    bump = np.exp(-(g256.x - 2.0) ** 2)[:, None] * np.cos(K0_REF * g256.y)[None, :]
    d, _ = orbital_distance(Field2D(st.rho + delta * bump, st.phi, 0.0, g256), p)
    norm = np.sqrt(g256.dx * g256.dy * np.sum(bump ** 2))
    assert abs(d / (delta * norm) - 1) < 0.01


def test_orbital_distance_of_constant_state(prof_a, g256):
    p = on_grid(prof_a, g256.grid_x)
    # u = u_c + d/dx phi~; choose phi~ = -(primitive of u_c) so that u = 0 everywhere
    uh = np.fft.fft(p.u)
    xi = g256.grid_x.xi_odd
    prim = np.fft.ifft(np.where(xi != 0, uh / (1j * np.where(xi != 0, xi, 1.0)), 0.0)).real
    # the mean of u_c cannot be cancelled by a periodic phi~, so the state is (1, mean u_c)
    ubar = p.u.mean()
    st = Field2D(np.ones((g256.nx, g256.ny)), np.repeat(-prim[:, None], g256.ny, axis=1), 0.0, g256)
    d, _ = orbital_distance(st, p)
    exact = np.sqrt(g256.length * g256.dx * np.sum((p.rho - 1.0) ** 2 + (p.u - ubar) ** 2))
    assert d == pytest.approx(exact, rel=1e-10)


def test_madelung_closed_forms(prof_a, g128):
    assert float(MODEL_A.madelung_primitive(4.0, 1.0)) == pytest.approx(np.log(2.0), abs=1e-15)
    rho = np.linspace(0.1, 10, 50)
    assert np.allclose(gauge_amplitude(MODEL_A, rho), 0.5, atol=1e-15)
    q = _constant(prof_a, g128.grid_x)
    st = soliton_state(q, g128)
    d = madelung_diagnostics(st, MODEL_A, 1, reference=st)
    assert d.norm == 0.0
    assert np.max(np.abs(d.z[0] - 0.0)) == 0.0 and np.max(np.abs(d.z[1])) == 0.0


def test_unperturbed_run_has_no_transverse_growth(prof_a, g128):
    gx = g128.grid_x
    p = on_grid(prof_a, gx)
    band = default_band(p, gx, K0_REF, SIGMA0_REF)
    run = run_single(p, g128, 0.0, K0_REF, SIGMA0_REF, None, band, t_end=5.0 / SIGMA0_REF, diag_every=1.0,
                     stop_on_escape=False)
    assert np.max(run.pi_norm) < 1e-9
    assert np.max(run.mass_defect) < 1e-10


def test_seeded_run_conserves_mass(prof_a, g128):
    gx = g128.grid_x
    p = on_grid(prof_a, gx)
    gr = growth_rate(p, gx, K0_REF)
    band = default_band(p, gx, K0_REF, gr.sigma)
    run = run_single(p, g128, 1e-3, K0_REF, gr.sigma, gr.mode, band, t_end=5.0, diag_every=0.5)
    assert np.max(run.mass_defect) < 1e-10
    assert np.all(run.min_rho > 0)


def test_snapshot_layout(prof_a, g128, tmp_path):
    st = soliton_state(prof_a, g128)
    write_snapshot(st, tmp_path / "snap", {"note": "t0"})
    hdr = json.loads((tmp_path / "snap.json").read_text())
    data = np.fromfile(tmp_path / "snap.bin", dtype=hdr["dtype"]).reshape(hdr["shape"])
    assert np.array_equal(data[0], st.rho) and hdr["note"] == "t0"
