from __future__ import annotations

import inspect

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from oracles import (
    di_cost_loop,
    furuta_cost_oracle,
    furuta_rollout_oracle,
    lifted_qp_minimizer,
    lqr_solution,
    rastrigin_cost,
    rosenbrock_cost,
)

from gnmppi.exceptions import ConfigError, NonFiniteResidual
from gnmppi.problem import evaluate_cost, evaluate_cost_batch
from gnmppi.problems import (
    PROBLEM_IDS,
    DoubleIntegratorSpec,
    FurutaSpec,
    furuta_rollout,
    make_furuta,
    make_problem,
)


def test_rosenbrock_examples(rng):
    I = make_problem("I")
    assert evaluate_cost(I, [1.0, 1.0]) == 0.0
    assert evaluate_cost(I, [0.0, 0.0]) == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_array_equal(I.u0, [0.0, 0.0])
    for u in rng.uniform(-2, 2, size=(100, 2)):
        assert evaluate_cost(I, u) == pytest.approx(rosenbrock_cost(*u), rel=1e-12, abs=1e-12)


def test_rastrigin_examples():
    II = make_problem("II")
    assert evaluate_cost(II, [0.0, 0.0]) == 0.0
    assert evaluate_cost(II, [1.0, 1.0]) == pytest.approx(rastrigin_cost(1.0, 1.0)) == pytest.approx(2.0)
    c0 = evaluate_cost(II, II.u0)
    np.testing.assert_array_equal(II.u0, [1.9, 1.7])
    assert np.isfinite(c0) and c0 > 0


def test_heaviside_examples():
    III = make_problem("III")
    assert evaluate_cost(III, [0.5]) == 0.5
    assert evaluate_cost(III, [-0.1]) == 0.0
    assert evaluate_cost(III, [0.0]) == 0.5
    assert III.u0.tolist() == [0.5]


def test_known_optima():
    for pid in ("I", "II", "III"):
        assert make_problem(pid).known_optimum.cost == 0.0
        assert make_problem(pid).known_optimum.tol == 1e-3
    IV = make_problem("IV")
    assert IV.known_optimum.cost == pytest.approx(evaluate_cost(IV, lifted_qp_minimizer()), abs=1e-12)
    assert make_problem("V.i").known_optimum is None
    assert make_problem("V.ii").known_optimum is None


def test_double_integrator_lqr_cost():
    IV = make_problem("IV")
    U_lqr, cost_lqr = lqr_solution()
    assert IV.dim == 50
    np.testing.assert_allclose(U_lqr, lifted_qp_minimizer(), atol=1e-10)
    assert evaluate_cost(IV, U_lqr) == pytest.approx(IV.known_optimum.cost, abs=1e-8)
    assert evaluate_cost(IV, U_lqr) == pytest.approx(cost_lqr, abs=1e-8)


def test_double_integrator_at_equilibrium():
    IV = make_problem("IV", {"x0": [0.0, 0.0]})
    assert evaluate_cost(IV, np.zeros(50)) == 0.0


def test_double_integrator_matches_loop_rollout(rng):
    IV = make_problem("IV")
    for U in rng.normal(size=(20, 50)):
        assert evaluate_cost(IV, U) == pytest.approx(di_cost_loop(U), rel=1e-10, abs=1e-10)


def test_double_integrator_custom_spec_matches_loop(rng):
    Q = [[2.0, 0.5], [0.5, 1.0]]
    IV = make_problem("IV", {"dt": 0.2, "N": 10, "Q": Q, "R_w": 0.3, "x0": [0.5, -1.0]})
    U = rng.normal(size=10)
    ref = di_cost_loop(U, dt=0.2, Q=np.array(Q), Rw=0.3, x0=(0.5, -1.0))
    assert evaluate_cost(IV, U) == pytest.approx(ref, rel=1e-10)


@settings(max_examples=25)
@given(arrays(float, 50, elements=st.floats(-2, 2)), arrays(float, 50, elements=st.floats(-2, 2)))
def test_double_integrator_is_quadratic_along_lines(a, d):
    IV = make_problem("IV")
    ts = np.array([-1.0, 0.0, 1.0, 2.0])
    c = evaluate_cost_batch(IV, a[None, :] + ts[:, None] * d[None, :])
    second = [c[0] - 2 * c[1] + c[2], c[1] - 2 * c[2] + c[3]]
    assert second[0] == pytest.approx(second[1], abs=1e-8 * max(1.0, abs(c).max()))
    assert second[0] >= -1e-8


def test_double_integrator_spec_validation():
    with pytest.raises(ConfigError):
        DoubleIntegratorSpec(Q=((1.0, 0.0), (0.0, -1.0)))
    with pytest.raises(ConfigError):
        DoubleIntegratorSpec(R_w=0.0)
    with pytest.raises(ConfigError):
        make_problem("IV", {"bogus": 1})
    with pytest.raises(ConfigError):
        make_problem("I", {"bogus": 1})
    with pytest.raises(ConfigError):
        make_problem("VI")


@pytest.mark.parametrize("friction", [False, True])
def test_furuta_matches_independent_rollout(friction, rng):
    spec = FurutaSpec(friction_enabled=friction)
    p = make_furuta(spec)
    for U in [np.zeros(20), *rng.normal(scale=0.5, size=(3, 20))]:
        X = furuta_rollout(spec, U[None, :])[0]
        np.testing.assert_allclose(X, furuta_rollout_oracle(U, spec), rtol=1e-9, atol=1e-12)
        assert evaluate_cost(p, U) == pytest.approx(furuta_cost_oracle(U, spec), rel=1e-9, abs=1e-12)


def test_furuta_zero_tracking_weights(rng):
    spec = FurutaSpec(q=(0.0,) * 4, q_terminal=(0.0,) * 4, r_u=0.3)
    p = make_furuta(spec)
    for U in rng.normal(size=(5, 20)):
        assert evaluate_cost(p, U) == pytest.approx(0.3 * np.sum(U**2), rel=1e-12)


@settings(max_examples=25)
@given(arrays(float, 20, elements=st.floats(-0.05, 0.05)))
def test_furuta_dead_zone_matches_zero_input(U):
    spec = FurutaSpec(friction_enabled=True)
    np.testing.assert_array_equal(furuta_rollout(spec, U), furuta_rollout(spec, np.zeros(20)))


def test_furuta_friction_only_in_v_ii():
    vi, vii = make_problem("V.i"), make_problem("V.ii")
    small = np.full(20, 0.04)
    assert evaluate_cost(vi, small) != evaluate_cost(vi, np.zeros(20))
    # V.ii still pays input cost on the dead-zone input
    assert evaluate_cost(vii, small) - evaluate_cost(vii, np.zeros(20)) == pytest.approx(0.1 * np.sum(small**2))
    assert vii.metadata["spec"].u_friction == 0.05


def test_furuta_v_ii_finite_on_probes(rng):
    vii = make_problem("V.ii")
    probes = rng.uniform(-3.0, 3.0, size=(2000, 20))
    assert np.all(np.isfinite(evaluate_cost_batch(vii, probes)))


def test_furuta_blow_up_is_reported():
    with pytest.raises(NonFiniteResidual):
        evaluate_cost(make_problem("V.i"), np.full(20, 1e200))


def test_furuta_spec_validation():
    with pytest.raises(ConfigError):
        FurutaSpec(m_p=0.0)
    with pytest.raises(ConfigError):
        FurutaSpec(x0=(0.0, 0.0))
    with pytest.raises(ConfigError):
        FurutaSpec(r_u=-1.0)
    p = make_problem("V.ii", {"friction_enabled": False, "N": 5})
    assert p.metadata["spec"].friction_enabled and p.dim == 5


@pytest.mark.parametrize("pid", PROBLEM_IDS)
def test_black_box_surface(pid):
    p = make_problem(pid)
    # solvers get batch residual evaluation and nothing derivative-like
    public = {name for name in dir(p.residual) if not name.startswith("_")}
    assert not any("jac" in n or "grad" in n or "hess" in n for n in public)
    assert not any("jac" in n or "grad" in n for n in dir(p) if not n.startswith("_"))
    sig = inspect.signature(p.residual.eval_rows)
    assert len(sig.parameters) == 1
