import json

import numpy as np
import pytest
from conftest import random_dataset

from fuselogit import (
    CoefVector,
    CvPlan,
    FactorSpec,
    ModelSchema,
    PenaltyConfig,
    TuningError,
    cv_fusion_only,
    cv_two_step,
    deviance,
    encode,
    find_lambda_max,
    fit_path,
    fit_penalized,
    predictive_deviance_heldout,
    sparsity,
    stratified_folds,
    weights_plain,
)
from fuselogit import tuning as tuning_mod
from fuselogit.likelihood import FitResult
from fuselogit.simulation import design_b8, simulate_dataset
from fuselogit.tuning import _pick


def test_deviance_uniform_prediction(rng):
    data, _ = random_dataset(rng, n=100)
    beta = CoefVector.zeros(data.schema)
    assert deviance(beta, data) == pytest.approx(2 * 100 * np.log(2))


def test_deviance_single_observation_quarter():
    schema = ModelSchema([])
    data = encode(np.empty((1, 0), dtype=int), schema, np.array([1.0]))
    beta = CoefVector(float(np.log(0.25 / 0.75)), [])
    assert deviance(beta, data) == pytest.approx(-2 * np.log(0.25), rel=1e-9)


def test_deviance_perfect_prediction_clamped():
    schema = ModelSchema([FactorSpec("a", 2)])
    data = encode(np.array([[0], [1]]), schema, np.array([0.0, 1.0]))
    beta = CoefVector(-40.0, [np.array([80.0])])
    fit = FitResult(beta, True, 1, 0.0)
    assert 0 <= predictive_deviance_heldout(fit, data) < 1e-8


def test_stratified_folds_contract(rng):
    y = rng.integers(0, 2, size=103).astype(float)
    folds = stratified_folds(y, 5, seed=7)
    sizes = np.bincount(folds, minlength=5)
    assert sizes.max() - sizes.min() <= 1
    for f in range(5):
        assert y[folds == f].sum() >= 1
    np.testing.assert_array_equal(folds, stratified_folds(y, 5, seed=7))
    assert not np.array_equal(folds, stratified_folds(y, 5, seed=8))


def test_stratified_folds_requires_two_per_class():
    y = np.array([1.0] * 30 + [0.0])
    with pytest.raises(TuningError):
        stratified_folds(y, 5, seed=0)


def test_find_lambda_max_intercept_only_returns_one():
    schema = ModelSchema([])
    data = encode(np.empty((40, 0), dtype=int), schema, np.tile([0.0, 1.0], 20))
    w = weights_plain(data)
    assert find_lambda_max(data, "pirls", w, which="gl") == 1.0


def test_find_lambda_max_refit_is_null(rng):
    spec = design_b8(n=400, seed=5, replications=1)
    data, _ = simulate_dataset(spec, 0)
    w = weights_plain(data)
    for which in ("gl", "l0"):
        lam = find_lambda_max(data, "pirls", w, which=which)
        cfg = PenaltyConfig(lam if which == "gl" else 0.0,
                            lam if which == "l0" else 0.0)
        fit = fit_penalized(data, cfg, w, "pirls")
        assert sparsity(fit.beta, data.schema)[0] == 0
        if lam > 1.0:
            half = PenaltyConfig(lam / 2 if which == "gl" else 0.0,
                                 lam / 2 if which == "l0" else 0.0)
            half_fit = fit_penalized(data, half, w, "pirls",
                                     init=CoefVector.zeros(data.schema))
            assert sparsity(half_fit.beta, data.schema)[0] > 0


def test_find_lambda_max_unknown_axis(rng):
    data, _ = random_dataset(rng)
    with pytest.raises(TuningError):
        find_lambda_max(data, "pirls", weights_plain(data), which="both")


def test_cv_two_step_deterministic(rng):
    data, _ = random_dataset(rng, n=200, levels=(3, 3))
    w = weights_plain(data)
    plan = CvPlan(k_folds=4, n_lambda=5, seed=3)
    a = cv_two_step(data, "pirls", w, plan)
    b = cv_two_step(data, "pirls", w, plan)
    assert json.dumps(a.to_jsonable(), sort_keys=True) == json.dumps(
        b.to_jsonable(), sort_keys=True
    )
    np.testing.assert_array_equal(a.fold_assignments, b.fold_assignments)


def test_cv_two_step_fit_counts(rng, monkeypatch):
    data, _ = random_dataset(rng, n=150, levels=(3, 3))
    w = weights_plain(data)
    plan = CvPlan(k_folds=4, n_lambda=5, seed=1)
    counts = {"grid": 0, "total": 0}
    real = tuning_mod.fit_penalized

    def counting(data_, cfg, weights_, solver="pirls", settings=None, init=None):
        counts["total"] += 1
        if data_.n < data.n:
            counts["grid"] += 1
        return real(data_, cfg, weights_, solver, settings, init)

    monkeypatch.setattr(tuning_mod, "fit_penalized", counting)
    cv_two_step(data, "pirls", w, plan)
    # never the two-dimensional grid product: exactly 2 * n_lambda * k_folds
    # grid fits on fold training sets
    assert counts["grid"] == 2 * plan.n_lambda * plan.k_folds
    # plus the upper-bound probes and the warm-started full-data refit walk
    assert counts["total"] <= counts["grid"] + 62 + plan.n_lambda + 1


def test_pick_tie_breaks_toward_larger_lambda():
    grid = np.array([0.0, 1.0, 2.0, 3.0])
    assert _pick(grid, np.array([5.0, 4.0, 4.0, 6.0])) == 2.0
    assert _pick(grid, np.array([4.0, 4.0, 4.0, 4.0])) == 3.0


def test_cv_null_signal_prefers_upper_half():
    # Monte-Carlo oracle: with no signal, the chosen group strength should
    # land in the upper half of the grid most of the time.
    hits = 0
    runs = 50
    schema = ModelSchema([FactorSpec("a", 3), FactorSpec("b", 3)])
    for s in range(runs):
        gen = np.random.default_rng(1000 + s)
        raw = np.column_stack([gen.integers(0, 3, 240) for _ in range(2)])
        y = gen.integers(0, 2, 240).astype(float)
        data = encode(raw, schema, y)
        w = weights_plain(data)
        plan = CvPlan(k_folds=5, n_lambda=10, seed=s)
        cv = cv_two_step(data, "pirls", w, plan)
        if cv.lambda1_opt >= 0.5 * cv.grid1_lambda[-1]:
            hits += 1
    assert hits >= 0.8 * runs


def test_cv_strong_signal_never_selects_null(rng):
    spec = design_b8(n=600, seed=77, replications=1)
    for r in range(3):
        data, _ = simulate_dataset(spec, r)
        w = weights_plain(data)
        cv = cv_two_step(data, "pirls", w, CvPlan(seed=r))
        assert cv.lambda1_opt < cv.grid1_lambda[-1]
        assert sparsity(cv.fit.beta, data.schema)[1] > 0


def test_cv_fusion_only_smoke(rng):
    data, _ = random_dataset(rng, n=250, levels=(4, 3), scales=["ordinal", "ordinal"])
    w = weights_plain(data)
    cv = cv_fusion_only(data, "pirls", w, CvPlan(k_folds=4, n_lambda=5, seed=2))
    assert cv.lambda1_opt == 0.0
    assert cv.grid0_lambda.shape == (5,)
    assert not np.isnan(cv.grid0_deviance).any()


def test_fit_path_warm_started(rng):
    data, _ = random_dataset(rng, n=300, levels=(4, 3))
    w = weights_plain(data)
    lam_max = find_lambda_max(data, "pirls", w, which="gl")
    grid = np.linspace(0.0, lam_max, 6)
    fits = fit_path(data, "pirls", w, grid, np.zeros(6))
    assert len(fits) == 6
    assert sparsity(fits[-1].beta, data.schema)[0] == 0
    with pytest.raises(TuningError):
        fit_path(data, "pirls", w, grid, np.zeros(3))


def test_fit_penalized_unknown_solver(rng):
    data, _ = random_dataset(rng)
    with pytest.raises(TuningError):
        fit_penalized(data, PenaltyConfig(0.0, 0.0), weights_plain(data), solver="sgd")
