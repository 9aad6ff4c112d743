import numpy as np
import pytest
from conftest import random_dataset

from fuselogit import (
    CoefVector,
    FactorSpec,
    ModelSchema,
    PenaltyConfig,
    PirlsSettings,
    encode,
    fit_ml,
    log_likelihood,
    penalty_exact,
    pirls_fit,
    threshold_solution,
    weights_plain,
)


def test_threshold_merges_close_levels():
    schema = ModelSchema([FactorSpec("a", 3)])
    beta = CoefVector(0.3, [np.array([0.50001, 0.49999])])
    out = threshold_solution(beta, schema, eps_fuse=1e-3, eps_zero=1e-3)
    np.testing.assert_allclose(out.blocks[0], [0.5, 0.5])
    assert out.intercept == 0.3


def test_threshold_zeroes_tiny_block():
    schema = ModelSchema([FactorSpec("a", 3)])
    beta = CoefVector(0.0, [np.array([1e-6, -1e-6])])
    out = threshold_solution(beta, schema, eps_fuse=1e-3, eps_zero=1e-3)
    np.testing.assert_array_equal(out.blocks[0], [0.0, 0.0])


def test_threshold_leaves_distant_levels():
    schema = ModelSchema([FactorSpec("a", 3)])
    beta = CoefVector(0.0, [np.array([1.0, 2.0])])
    out = threshold_solution(beta, schema, eps_fuse=1e-3, eps_zero=1e-3)
    np.testing.assert_array_equal(out.blocks[0], [1.0, 2.0])


def test_threshold_reference_cluster_pinned_to_zero():
    schema = ModelSchema([FactorSpec("a", 4)])
    beta = CoefVector(0.0, [np.array([5e-4, 1.2, 1.2004])])
    out = threshold_solution(beta, schema, eps_fuse=1e-3, eps_zero=1e-3)
    assert out.blocks[0][0] == 0.0
    assert out.blocks[0][1] == out.blocks[0][2] == pytest.approx(1.2002)


def test_threshold_validates_eps():
    schema = ModelSchema([FactorSpec("a", 3)])
    with pytest.raises(ValueError):
        threshold_solution(CoefVector.zeros(schema), schema, eps_fuse=0.0)


def test_unpenalized_matches_ml(rng):
    data, _ = random_dataset(rng, n=400, levels=(4, 3, 3))
    ml = fit_ml(data)
    cfg = PenaltyConfig(0.0, 0.0)
    fit = pirls_fit(data, cfg, weights_plain(data))
    assert not fit.failed
    assert np.abs(fit.beta.flatten() - ml.beta.flatten()).max() < 1e-4


def test_constant_response_fails(rng):
    schema = ModelSchema([FactorSpec("a", 3)])
    data = encode(np.array([[0], [1], [2]]), schema, np.array([1, 1, 1]))
    fit = pirls_fit(data, PenaltyConfig(1.0, 0.0), weights_plain(data))
    assert fit.failed


def test_unobserved_level_salvaged_by_ridge_retry(rng):
    # a never-observed level produces an all-zero column; the singular
    # system is retried once with a tiny ridge, which pins the
    # unidentifiable coefficient at zero instead of crashing
    schema = ModelSchema([FactorSpec("a", 4)])
    raw = rng.integers(0, 3, size=(120, 1))  # level 3 never observed
    y = rng.integers(0, 2, size=120).astype(float)
    data = encode(raw, schema, y)
    fit = pirls_fit(data, PenaltyConfig(0.0, 0.0), weights_plain(data),
                    init=CoefVector.zeros(schema))
    assert not fit.failed
    assert fit.beta.blocks[0][2] == 0.0


def test_surrogate_objective_monotone(rng):
    data, _ = random_dataset(rng, n=300, levels=(4, 3), scales=["ordinal", "ordinal"])
    w = weights_plain(data)
    for cfg in [PenaltyConfig(2.0, 0.0), PenaltyConfig(1.0, 3.0), PenaltyConfig(0.0, 5.0)]:
        trace = []
        pirls_fit(data, cfg, w, trace=trace)
        trace = np.asarray(trace)
        slack = 1e-8 * (1.0 + np.abs(trace[:-1]))
        assert np.all(np.diff(trace) <= slack)


def test_settings_validation():
    with pytest.raises(ValueError):
        PirlsSettings(nu=0.0)
    with pytest.raises(ValueError):
        PirlsSettings(tol=-1.0)


def test_fusion_decreases_exact_objective(rng):
    # two coefficients a tiny distance apart: fusing them lowers the exact
    # penalized objective when the fusion strength dominates
    data, _ = random_dataset(rng, n=250, levels=(4,), scales=["ordinal"])
    w = weights_plain(data)
    cfg = PenaltyConfig(0.1, 5.0)
    base = rng.normal(0.0, 0.8)
    not_fused = CoefVector(0.2, [np.array([base, base + 1e-4, base + 1.0])])
    fused_val = 0.5 * (2 * base + 1e-4)
    fused = CoefVector(0.2, [np.array([fused_val, fused_val, base + 1.0])])

    def objective(beta):
        return -log_likelihood(beta, data) + penalty_exact(beta, cfg, w, data.schema)

    assert objective(fused) < objective(not_fused)


def test_group_norm_monotone_in_lambda1(rng):
    data, _ = random_dataset(rng, n=350, levels=(4, 3))
    w = weights_plain(data)
    norms = []
    init = None
    for lam in np.linspace(0.0, 40.0, 9):
        fit = pirls_fit(data, PenaltyConfig(float(lam), 0.0), w, init=init)
        assert not fit.failed
        init = fit.beta
        norms.append(np.linalg.norm(fit.beta.flatten()[1:]))
    diffs = np.diff(norms)
    assert np.all(diffs <= 1e-6)


def test_zero_and_ml_start_agree_when_convex(rng):
    data, _ = random_dataset(rng, n=300, levels=(3, 3))
    w = weights_plain(data)
    cfg = PenaltyConfig(1.5, 0.0)
    fit_zero = pirls_fit(data, cfg, w, settings=PirlsSettings(start="zero", max_steps=2000))
    fit_ml_start = pirls_fit(data, cfg, w, settings=PirlsSettings(start="ml", max_steps=2000))
    assert abs(fit_zero.objective - fit_ml_start.objective) < 1e-3
