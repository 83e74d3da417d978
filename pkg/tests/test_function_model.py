import math
import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from ilaplace.errors import BudgetExceeded, NonFiniteObjective
from ilaplace.function_model import (EvaluationBudget, Objective, evaluate, evaluate_batch,
                                     finite_difference_gradient, finite_difference_hessian,
                                     gradient, hessian, permuted)
from ilaplace.models import (GompertzPosterior, SkewTParams, build_model, gaussian,
                             gompertz_posterior, gompertz_sample, quadratic, skew_t)
from ilaplace.optimize import minimize

A2 = np.array([[2.0, 1.0], [1.0, 2.0]])


def test_evaluate_gaussian_values():
    g = gaussian(2)
    assert evaluate(g, [0.0, 0.0]) == 0.0
    assert evaluate(g, [1.0, 1.0]) == 1.0


def test_evaluate_gompertz_matches_hand_formula(frozen):
    inst = build_model("gompertz-posterior", {"n": 20, "seed": 1})
    v = evaluate(inst.objective, [math.log(2), math.log(3)])
    ref = frozen["gompertz_n20_seed1_h_at_true"]
    assert v == pytest.approx(ref, rel=1e-12, abs=1e-12)


def test_evaluate_counts_and_rejects_bad_input():
    g = gaussian(3)
    before = g.eval_count
    evaluate(g, np.zeros(3))
    assert g.eval_count == before + 1
    with pytest.raises(ValueError):
        evaluate(g, np.zeros(2))
    with pytest.raises(ValueError):
        evaluate(g, [0.0, np.nan, 0.0])


def test_nan_and_minus_inf_raise_with_point():
    obj = Objective(1, lambda x: float("nan"))
    with pytest.raises(NonFiniteObjective) as info:
        evaluate(obj, [0.25])
    assert info.value.x.tolist() == [0.25]
    with pytest.raises(NonFiniteObjective):
        evaluate(Objective(1, lambda x: -math.inf), [0.0])


def test_plus_inf_is_a_zero_of_the_integrand():
    obj = Objective(1, lambda x: math.inf if x[0] > 1 else 0.0)
    assert evaluate(obj, [2.0]) == math.inf


def test_gradient_gaussian():
    g = gaussian(2)
    np.testing.assert_array_equal(gradient(g, [1.0, 2.0]), [1.0, 2.0])
    np.testing.assert_array_equal(gradient(g, [0.0, 0.0]), [0.0, 0.0])


def test_skewt_fd_gradient_matches_analytic():
    obj = skew_t(SkewTParams(2, 1.5, 1.5, 3.0))
    x = np.array([0.3, -0.2])
    np.testing.assert_allclose(finite_difference_gradient(obj, x), gradient(obj, x), atol=1e-6)


def test_fd_gradient_used_when_no_analytic():
    obj = Objective(2, lambda x: 0.5 * float(x @ A2 @ x))
    x = np.array([0.7, -1.3])
    np.testing.assert_allclose(gradient(obj, x), A2 @ x, atol=1e-8)


def test_hessian_gaussian_and_quadratic():
    np.testing.assert_array_equal(hessian(gaussian(3), [0.4, 1.0, -2.0]), np.eye(3))
    np.testing.assert_array_equal(hessian(quadratic(A2), [5.0, 1.0]), A2)


def test_gompertz_hessian_at_mode_matches_fd():
    inst = build_model("gompertz-posterior", {"n": 20, "seed": 1})
    mode = minimize(inst.objective, inst.x0)
    H = hessian(inst.objective, mode.x_hat)
    fd = finite_difference_hessian(inst.objective, mode.x_hat)
    assert np.max(np.abs(H - fd)) <= 1e-5 * np.max(np.abs(H))


def test_hessian_without_any_derivative():
    obj = Objective(2, lambda x: 0.5 * float(x @ A2 @ x) + float(x[0]) ** 4)
    x = np.array([0.5, 0.25])
    expected = A2 + np.array([[12 * 0.25, 0.0], [0.0, 0.0]])
    np.testing.assert_allclose(hessian(obj, x), expected, atol=1e-5)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3))
def test_hessian_exactly_symmetric(xs):
    p = SkewTParams(3, 2.0, 1.0, 4.0)
    base = skew_t(p)
    fd_only = Objective(3, base.value_fn, base.grad_fn)
    for obj in (base, fd_only, Objective(3, base.value_fn)):
        H = hessian(obj, np.array(xs))
        assert np.array_equal(H, H.T)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=2, max_size=2))
def test_evaluate_is_referentially_transparent(xs):
    inst = build_model("gompertz-posterior", {"n": 30, "seed": 4})
    x = np.array(xs) + inst.x0
    a = evaluate(inst.objective, x)
    b = evaluate(inst.objective, x)
    assert a == b or (math.isinf(a) and math.isinf(b))


def test_batch_matches_pointwise():
    inst = build_model("gompertz-posterior", {"n": 25, "seed": 2})
    pts = inst.x0 + np.random.default_rng(0).normal(size=(8, 2))
    vals = evaluate_batch(inst.objective, pts)
    np.testing.assert_allclose(vals, [evaluate(inst.objective, p) for p in pts], rtol=1e-13)
    no_batch = Objective(2, inst.objective.value_fn)
    np.testing.assert_allclose(evaluate_batch(no_batch, pts), vals, rtol=1e-13)


def test_budget_exceeded():
    obj = gaussian(2).with_budget(EvaluationBudget(3))
    for _ in range(3):
        evaluate(obj, [0.0, 0.0])
    with pytest.raises(BudgetExceeded):
        evaluate(obj, [0.0, 0.0])
    assert obj.eval_count == 3
    with pytest.raises(ValueError):
        EvaluationBudget(0)


def test_budget_counts_exactly_under_threads():
    budget = EvaluationBudget(10 ** 6)
    obj = gaussian(2).with_budget(budget)

    def work():
        for _ in range(500):
            evaluate(obj, [0.1, 0.2])

    threads = [threading.Thread(target=work) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert budget.eval_count == 4000


def test_permuted_objective_consistent():
    p = SkewTParams(3, 4.0, 1.0, 3.0)
    obj = skew_t(p)
    perm = [2, 0, 1]
    pobj = permuted(obj, perm)
    x = np.array([0.3, -0.5, 1.1])
    z = x[perm]
    assert evaluate(pobj, z) == evaluate(obj, x)
    np.testing.assert_array_equal(gradient(pobj, z), gradient(obj, x)[perm])
    np.testing.assert_array_equal(hessian(pobj, z), hessian(obj, x)[np.ix_(perm, perm)])
    np.testing.assert_array_equal(evaluate_batch(pobj, z[None, :]), evaluate_batch(obj, x[None, :]))
    with pytest.raises(ValueError):
        permuted(obj, [0, 0, 1])


def test_gompertz_dataset_matches_scipy_sampler():
    np.testing.assert_allclose(gompertz_sample(2.0, 3.0, 50, 1), oracles.gompertz_data(50, 1),
                               rtol=1e-12)
    m = GompertzPosterior(gompertz_sample(2.0, 3.0, 20, 1))
    x = np.array([0.1, 0.9])
    assert evaluate(gompertz_posterior(m), x) == pytest.approx(
        oracles.gompertz_h(x, oracles.gompertz_data(20, 1)), rel=1e-12)
