import numpy as np
import pytest
from scipy.integrate import solve_ivp

from momentflow.bracket_rep import Bracket, bracket_model, complexify, group_act, invariants
from momentflow.flow_engine import (
    FlowConfig, FlowError, FlowStatus, dopri_step, flow_kempf_ness, flow_projective, integrate,
    omega_limit_representative,
)
from momentflow.moment_core import critical_residual, f_value
from momentflow.orbit_analyzer import random_well_conditioned

from conftest import make


def test_dopri_matches_scipy_on_linear_system():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(5, 5)) - 2 * np.eye(5)
    y0 = rng.normal(size=5)
    cfg = FlowConfig(rk_rel_tol=1e-11, rk_abs_tol=1e-13)
    ours = integrate(lambda y: A @ y, y0, 2.0, cfg)
    ref = solve_ivp(lambda t, y: A @ y, (0, 2.0), y0, method="DOP853", rtol=1e-12, atol=1e-14)
    assert np.allclose(ours, ref.y[:, -1], rtol=1e-8, atol=1e-10)


def test_dopri_order():
    # one step on y' = y: local error should scale like h^6
    errs = []
    for h in (0.1, 0.05):
        y1, _, _ = dopri_step(lambda y: y, np.array([1.0]), h, np.array([1.0]))
        errs.append(abs(y1[0] - np.exp(h)))
    assert errs[0] / errs[1] > 40


def test_config_validation():
    with pytest.raises(ValueError):
        FlowConfig(tol_grad=0)
    with pytest.raises(ValueError):
        FlowConfig(max_flow_time=float("inf"))
    with pytest.raises(ValueError):
        FlowConfig(max_steps=0)


def test_zero_vector_rejected():
    with pytest.raises(FlowError):
        flow_projective(bracket_model(3), np.zeros(9))
    with pytest.raises(FlowError):
        flow_kempf_ness(bracket_model(3, "sl"), np.zeros(9))


def test_kempf_ness_needs_sl(sl2r):
    with pytest.raises(FlowError):
        flow_kempf_ness(bracket_model(3), sl2r.vector())


def _moved(name, seed):
    mu = make(name)
    g = random_well_conditioned(mu.n, np.random.default_rng(seed))
    return mu, group_act(g, mu)


@pytest.mark.parametrize("name,F_crit", [("h5", 2.0), ("fil4", None), ("free2step3", 5.0 / 3.0)])
@pytest.mark.parametrize("method", ["group", "direct"])
def test_nilpotent_orbits_converge(name, F_crit, method):
    mu, start = _moved(name, 11)
    model = bracket_model(mu.n)
    res = flow_projective(model, start.vector(), method=method)
    assert res.converged, res.message
    assert res.certificate.residual < 1e-8
    assert max(np.diff(res.f_history)) <= 1e-12
    limit = Bracket.from_vector(mu.n, res.limit_point)
    if method == "group":
        # the group-lifted flow never leaves the orbit
        assert invariants(limit).discrete() == invariants(mu).discrete()
        if F_crit is not None:
            assert res.f_history[-1] == pytest.approx(F_crit, abs=1e-8)
    else:
        # in V the nilpotent critical points are saddles; rounding may carry
        # the direct flow off the orbit, but never below the global minimum
        assert res.f_history[-1] >= 1.0 / mu.n - 1e-12


def test_fil4_limit_is_the_critical_point():
    mu, start = _moved("fil4", 2)
    res = flow_projective(bracket_model(4), start.vector())
    direct = flow_projective(bracket_model(4), mu.vector())
    assert res.converged and direct.converged
    assert np.allclose(res.certificate.spectrum, direct.certificate.spectrum, atol=1e-6)


def test_semisimple_gl_flow_reaches_the_minimum(sl2r):
    # sl2r has a closed SL orbit, so its GL orbit meets the scalar-moment set F = 1/3
    res = flow_projective(bracket_model(3), sl2r.vector())
    assert res.converged
    assert res.f_history[-1] == pytest.approx(1.0 / 3.0, abs=1e-10)
    assert max(np.diff(res.f_history)) <= 1e-12
    assert invariants(Bracket.from_vector(3, res.limit_point)).killing_signature == (2, 1, 0)


def test_sphere_is_preserved():
    _, start = _moved("h5", 4)
    res = flow_projective(bracket_model(5), 7.0 * start.vector())
    assert res.max_sphere_error < 1e-12
    assert bracket_model(5).norm(res.limit_point) == pytest.approx(1.0, abs=1e-12)


def test_t_eval_samples_and_scaling():
    _, start = _moved("fil4", 8)
    model = bracket_model(4)
    cfg = FlowConfig(rk_rel_tol=1e-12, rk_abs_tol=1e-14)
    a = flow_projective(model, start.vector(), cfg, t_eval=[0.0, 0.4], method="direct")
    b = flow_projective(model, start.vector(), cfg, scale=4.0, t_eval=[0.1], method="direct")
    assert set(a.samples) == {0.0, 0.4} and set(b.samples) == {0.1}
    assert np.allclose(a.samples[0.4], b.samples[0.1], atol=1e-8)


def test_max_time_status():
    _, start = _moved("free2step3", 1)
    res = flow_projective(bracket_model(6), start.vector(), FlowConfig(max_flow_time=1e-3))
    assert res.status is FlowStatus.MAX_TIME
    with pytest.raises(FlowError):
        omega_limit_representative(res)


def test_omega_limit_representative():
    _, start = _moved("h5", 9)
    res = flow_projective(bracket_model(5), start.vector())
    cert = omega_limit_representative(res)
    assert cert.residual < 1e-8 and cert.f_value == pytest.approx(2.0, abs=1e-8)


def test_kempf_ness_closed_orbit(sl2r):
    g = random_well_conditioned(3, np.random.default_rng(6))
    res = flow_kempf_ness(bracket_model(3, "sl"), group_act(g, sl2r).vector())
    assert res.converged
    assert res.gradnorm_history[-1] < 1e-10
    assert max(np.diff(res.norm_history)) <= 1e-12
    # a minimal vector of the orbit of sl2r is a multiple of so(2,1) normal form with m = 0
    limit = Bracket.from_vector(3, res.limit_point)
    assert invariants(limit).killing_signature == (2, 1, 0)


def test_kempf_ness_null_cone(h3):
    res = flow_kempf_ness(bracket_model(3, "sl"), h3.vector())
    assert res.status is FlowStatus.DIVERGED
    assert max(np.diff(res.norm_history)) <= 1e-12
    assert "null cone" in res.message


@pytest.mark.parametrize("method", ["group", "direct"])
def test_complex_flow(h3, method):
    c, model = complexify(h3)
    g = random_well_conditioned(3, np.random.default_rng(2), complex_=True)
    start = group_act(g, c)
    res = flow_projective(model, start.vector(), method=method)
    assert res.converged
    assert res.f_history[-1] == pytest.approx(3.0, abs=1e-8)


def test_critical_start_stops_immediately(h3):
    res = flow_projective(bracket_model(3), h3.vector())
    assert res.converged and res.accepted_steps == 0
    assert critical_residual(bracket_model(3), res.limit_point).residual < 1e-14
    assert f_value(bracket_model(3), res.limit_point) == pytest.approx(3.0)


def test_unknown_method(h3):
    with pytest.raises(ValueError):
        flow_projective(bracket_model(3), h3.vector(), method="euler")
