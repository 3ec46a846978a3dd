import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from eklab.errors import ConfigError, DomainError, SaddleConditionError
from eklab.model import (MODEL_A, MODEL_B, MODEL_REGISTRY, Endstate, effective_potential, eval_closures,
                         make_model, saddle_check)


def test_eval_closures_model_a():
    assert np.allclose(eval_closures(MODEL_A, 1.0), (0.25, -0.25, 0.5, 1.0, 1.0), rtol=0, atol=1e-15)


def test_eval_closures_model_b():
    assert np.allclose(eval_closures(MODEL_B, 2.0), (1.0, 0.0, 0.0, 2.0, 1.0), rtol=0, atol=1e-15)


def test_model_a_vacuum_rejected():
    with pytest.raises(DomainError):
        eval_closures(MODEL_A, 0.0)


@pytest.mark.parametrize("model,c,holds,margin", [
    (MODEL_A, 0.5, True, 0.75), (MODEL_A, 1.0, False, 0.0), (MODEL_B, 0.9, True, 0.19)])
def test_saddle_check(model, c, holds, margin):
    h, m = saddle_check(model, Endstate(1.0, 0.0, c))
    assert h == holds
    assert m == pytest.approx(margin, abs=1e-14)


def test_endstate_flux_and_density():
    e = Endstate(2.0, 0.3, 0.5)
    assert e.j == 2.0 * (0.3 - 0.5)
    with pytest.raises(DomainError):
        Endstate(0.0, 0.0, 0.5)


@pytest.mark.parametrize("model", [MODEL_A, MODEL_B])
def test_potential_normalised_at_endstate(model):
    pot = effective_potential(model, Endstate(1.0, 0.0, 0.5))
    assert abs(float(pot.W(1.0))) < 1e-15
    assert abs(float(pot.dW(1.0))) < 1e-15


def test_potential_curvature_equals_margin():
    pot = effective_potential(MODEL_A, Endstate(1.0, 0.0, 0.5))
    assert float(pot.d2W(1.0)) == pytest.approx(0.75, abs=1e-14)


def test_potential_against_quadrature_of_derivative():
    pot = effective_potential(MODEL_B, Endstate(1.0, 0.0, 0.5))
    ref, _ = integrate.quad(lambda r: float(pot.dW(r)), 1.0, 0.8, epsabs=1e-14, epsrel=1e-14)
    assert abs(float(pot.W(0.8)) - ref) < 1e-10


def test_unknown_model_kind():
    with pytest.raises(ConfigError, match="unknown model kind"):
        make_model("vdw")


def test_model_survives_pickling():
    import pickle
    m = pickle.loads(pickle.dumps(MODEL_A))
    assert m.kind == "madelung" and m.K(2.0) == MODEL_A.K(2.0)


@settings(max_examples=40, deadline=None)
@given(kind=st.sampled_from(sorted(MODEL_REGISTRY)), rho=st.floats(0.05, 20.0))
def test_derivatives_match_central_differences(kind, rho):
    m = make_model(kind)
    h = 1e-5 * rho
    for f, df in ((m.K, m.dK), (m.dK, m.d2K), (m.g0, m.dg0), (m.dg0, m.d2g0)):
        fd = (f(rho + h) - f(rho - h)) / (2 * h)
        exact = df(rho)
        scale = max(abs(exact), abs(f(rho)) / rho, 1e-12)
        assert abs(fd - exact) / scale < 1e-6


@settings(max_examples=30, deadline=None)
@given(kind=st.sampled_from(sorted(MODEL_REGISTRY)), c=st.floats(0.1, 0.8), rho=st.floats(0.3, 3.0))
def test_potential_derivative_matches_numerical(kind, c, rho):
    pot = effective_potential(make_model(kind), Endstate(1.0, 0.0, c))
    h = 1e-3
    W = lambda r: float(pot.W(r))
    # fourth-order stencil: truncation ~ h^4, roundoff ~ 1e-16 / h
    fd = (8 * (W(rho + h) - W(rho - h)) - (W(rho + 2 * h) - W(rho - 2 * h))) / (12 * h)
    assert abs(fd - float(pot.dW(rho))) < 1e-8 * max(1.0, abs(float(pot.dW(rho))))


@settings(max_examples=40, deadline=None)
@given(u=st.floats(-2, 2), c=st.floats(-2, 2), a=st.floats(-5, 5))
def test_saddle_margin_galilean_invariant(u, c, a):
    h1, m1 = saddle_check(MODEL_A, Endstate(1.0, u, c))
    h2, m2 = saddle_check(MODEL_A, Endstate(1.0, u + a, c + a))
    assert m1 == pytest.approx(m2, abs=1e-12)
    assert h1 == h2 or abs(m1) < 1e-12


def test_no_potential_outside_saddle_region():
    # c = 1 is the sonic boundary: no soliton
    with pytest.raises(SaddleConditionError):
        effective_potential(MODEL_A, Endstate(1.0, 0.0, 1.0))
