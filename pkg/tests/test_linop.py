import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from conftest import K0_NLS, K0_REF, SIGMA0_NLS, SIGMA0_REF
from eklab.discretization import Grid1D
from eklab.errors import GridMismatchError
from eklab.linop import (assemble, check_hypotheses, growth_rate, j_matrix, jlinf_symbol_roots, linf_symbol,
                         on_grid, refine_peak, scan_growth_curve, spectrum)
from eklab.model import MODEL_A, MODEL_B, Endstate
from eklab.soliton import SolitonProfile


def _constant_profile(p, grid):
    one = np.ones(grid.n)
    z = np.zeros(grid.n)
    return SolitonProfile(grid, one, z, z, z + p.end.u_inf, z, p.end, p.model, p.rho_star, p.kappa, p.tol)


@pytest.mark.parametrize("k", [0.0, 0.7])
def test_constant_state_matches_symbol(prof_a, k):
    g = Grid1D(64, prof_a.half_length)
    q = _constant_profile(prof_a, g)
    vals = np.sort(sla.eigvalsh(assemble(q, g, k).L))
    nyq = g.n // 2
    xi = np.delete(g.xi, nyq)
    exp = list(linf_symbol(q.end, q.model, xi, k).values.ravel())
    qn = g.xi[nyq] ** 2 + k * k
    exp += [float(q.model.K(1.0)) * qn + float(q.model.dg0(1.0)), qn]  # Nyquist: first-order terms drop
    assert np.max(np.abs(vals - np.sort(exp))) < 1e-8 * max(1.0, np.max(np.abs(vals)))


def test_assembly_structure(prof_a256, grid256):
    A = assemble(prof_a256, grid256, K0_REF)
    assert A.checks["hermitian_defect"] < 1e-12
    assert np.array_equal(A.JL, j_matrix(grid256.n) @ A.L)
    assert A.checks["m_endpoint_defect"] < 1e-9


def test_grid_mismatch_rejected(prof_a, grid256):
    with pytest.raises(GridMismatchError):
        assemble(prof_a, grid256, 0.5)


def test_j_eigenvalues():
    ev = np.linalg.eigvals(j_matrix(3))
    assert np.allclose(np.sort(ev.imag), [-1, -1, -1, 1, 1, 1]) and np.max(np.abs(ev.real)) < 1e-15


@pytest.mark.parametrize("fixture", ["prof_a", "prof_b"])
def test_drho_in_kernel_of_m(fixture, request):
    p = request.getfixturevalue(fixture)
    M = assemble(p, p.grid, 0.0).M
    assert np.linalg.norm(M @ p.drho) / np.linalg.norm(p.drho) < 1e-6


def test_literal_m_coefficient_misses_kernel(prof_a, prof_b):
    Ma = assemble(prof_a, prof_a.grid, 0.0, "literal").M
    Mb = assemble(prof_b, prof_b.grid, 0.0, "literal").M
    assert np.linalg.norm(Ma @ prof_a.drho) / np.linalg.norm(prof_a.drho) > 1e-3
    assert np.linalg.norm(Mb @ prof_b.drho) / np.linalg.norm(prof_b.drho) < 1e-6


def test_m_has_one_negative_eigenvalue(prof_a256, grid256):
    ev = spectrum(assemble(prof_a256, grid256, 0.0), "M").values
    assert np.sum(ev < -1e-8) == 1


def test_hamiltonian_fourfold_symmetry(prof_a, rng):
    g = Grid1D(128, prof_a.half_length)
    vals = spectrum(assemble(on_grid(prof_a, g), g, K0_REF), "JL").values
    scale = np.max(np.abs(vals))
    for image in (-np.conj(vals), np.conj(vals)):
        d = np.min(np.abs(vals[:, None] - image[None, :]), axis=1)
        assert np.max(d) < 1e-8 * scale


def test_stable_beyond_band_and_at_zero(prof_a256, grid256):
    assert growth_rate(prof_a256, grid256, 0.9).sigma <= 1e-8
    assert growth_rate(prof_a256, grid256, 0.0).sigma <= 1e-6


def test_rate_even_in_k(prof_a256, grid256):
    assert growth_rate(prof_a256, grid256, -0.4).sigma == growth_rate(prof_a256, grid256, 0.4).sigma


def test_rate_matches_nls_oracle(prof_a):
    g = Grid1D(512, prof_a.half_length)
    gr = growth_rate(on_grid(prof_a, g), g, K0_NLS)
    assert abs(gr.sigma - SIGMA0_NLS) / SIGMA0_NLS < 5e-3
    assert gr.count == 1


def test_positive_real_parts_bounded_under_refinement(prof_a):
    sig = [growth_rate(on_grid(prof_a, Grid1D(n, prof_a.half_length)), Grid1D(n, prof_a.half_length),
                       K0_REF).sigma for n in (128, 256, 512)]
    assert max(sig) < 2 * SIGMA0_REF and abs(sig[2] - sig[1]) < 1e-6


def test_coarse_scan(prof_a256, grid256):
    c = scan_growth_curve(prof_a256, grid256, (0.0, 1.2), 16, refine=True, rel_tol=1e-4)
    assert c.sigma0 > 0 and 0 < c.k0 < c.kmax
    assert np.all(c.counts <= 1)
    assert c.sigma0 >= np.max(c.sigmas)
    assert abs(c.k0 - K0_REF) / K0_REF < 1e-3
    assert abs(c.sigma0 - SIGMA0_REF) / SIGMA0_REF < 1e-5
    assert 0.7 < c.kmax < 0.8


def test_refine_peak_on_bracket(prof_a256, grid256):
    k0, s0 = refine_peak(prof_a256, grid256, (0.45, 0.58), 1e-6)
    assert abs(k0 - K0_REF) < 1e-4 and abs(s0 - SIGMA0_REF) < 1e-8


def test_symbol_examples():
    e = Endstate(1.0, 0.0, 0.5)
    assert np.allclose(linf_symbol(e, MODEL_A, 0.0, 0.0).values, [0.0, 1.0], atol=1e-15)
    assert np.all(linf_symbol(e, MODEL_A, 1.0, 1.0).values > 0)
    assert np.allclose(jlinf_symbol_roots(e, MODEL_A, 0.0, 0.0), 0.0, atol=1e-15)
    r = np.sort_complex(jlinf_symbol_roots(e, MODEL_A, 1.0, 0.0))
    exp = np.sort_complex(1j * (-1 + np.array([1, -1]) * np.sqrt(5)) / 2)
    assert np.allclose(r, exp, atol=1e-14)


@settings(max_examples=50, deadline=None)
@given(xi=st.floats(-30, 30), k=st.floats(-30, 30), model=st.sampled_from([MODEL_A, MODEL_B]))
def test_symbol_hermitian(xi, k, model):
    assert linf_symbol(Endstate(1.0, 0.0, 0.5), model, xi, k).imag_residue < 1e-14 * max(1.0, xi * xi + k * k) ** 2


@pytest.mark.parametrize("model", [MODEL_A, MODEL_B])
def test_essential_spectrum_imaginary(model):
    g = np.linspace(-10, 10, 101)
    xi, k = np.meshgrid(g, g)
    m = (xi != 0) | (k != 0)
    assert np.max(np.abs(jlinf_symbol_roots(Endstate(1.0, 0.0, 0.5), model, xi[m], k[m]).real)) < 1e-12


def test_hypotheses_model_a(prof_a):
    g = Grid1D(512, prof_a.half_length)
    rep = check_hypotheses(on_grid(prof_a, g), g, n_random=10)
    assert rep.all_passed
    d = rep.to_dict()
    assert d["H3"]["min_diagonal"]["1.0"] == pytest.approx(2 * np.min(MODEL_A.K(prof_a.rho)), rel=1e-12)
    assert d["H4"]["schur_max_defect"] < 1e-8
    assert d["H4"]["negative_count"] == 1
