import numpy as np
import pytest

from fuselogit import (
    CoefVector,
    DimensionError,
    FactorSpec,
    ModelSchema,
    evaluate,
    fusion_rates,
    msec,
    selection_rates,
    sparsity,
)
from fuselogit.simulation import design_b8, design_highdim


def b8_truth():
    spec = design_b8(n=100, seed=0, replications=1)
    return spec.beta_star, spec.schema


def test_msec_identical_is_zero():
    truth, _ = b8_truth()
    assert msec(truth, truth) == 0.0


def test_msec_formula():
    schema = ModelSchema([FactorSpec("a", 3)])
    star = CoefVector(0.0, [np.array([1.0, 0.0])])
    hat = CoefVector(0.0, [np.array([0.0, 0.0])])
    assert msec(hat, star) == pytest.approx(0.5)


def test_msec_excludes_intercept():
    schema = ModelSchema([FactorSpec("a", 3)])
    star = CoefVector(5.0, [np.array([1.0, 1.0])])
    hat = CoefVector(-5.0, [np.array([1.0, 1.0])])
    assert msec(hat, star) == 0.0


def test_msec_duplicate_formula_oracle(rng):
    truth, schema = b8_truth()
    hat = CoefVector(
        truth.intercept, [b + rng.normal(size=b.shape) for b in truth.blocks]
    )
    direct = sum(
        float(np.sum((bs - bh) ** 2))
        for bs, bh in zip(truth.blocks, hat.blocks)
    ) / schema.num_params
    assert abs(msec(hat, truth) - direct) <= 1e-12


def test_msec_shape_mismatch():
    a = CoefVector(0.0, [np.zeros(2)])
    b = CoefVector(0.0, [np.zeros(3)])
    with pytest.raises(DimensionError):
        msec(a, b)


def test_selection_rates_ml_like_estimate(rng):
    truth, schema = b8_truth()
    hat = CoefVector(2.0, [rng.normal(size=3) for _ in range(8)])
    fp, fn = selection_rates(hat, truth)
    assert fp == 1.0 and fn == 0.0


def test_selection_rates_perfect():
    truth, _ = b8_truth()
    assert selection_rates(truth, truth) == (0.0, 0.0)


def test_selection_rates_undefined_fp():
    schema = ModelSchema([FactorSpec("a", 3)])
    star = CoefVector(0.0, [np.array([1.0, 0.0])])
    fp, fn = selection_rates(star, star)
    assert fp is None and fn == 0.0


def test_fusion_rates_perfect():
    truth, schema = b8_truth()
    assert fusion_rates(truth, truth, schema) == (0.0, 0.0)


def test_fusion_rates_ml_like_estimate(rng):
    truth, schema = b8_truth()
    # all-distinct estimate: every truly-equal pair is a false positive and
    # no truly-distinct pair is fused
    hat = CoefVector(2.0, [np.array([0.11, 0.52, 0.93]) + j for j in range(8)])
    fp, fn = fusion_rates(hat, truth, schema)
    assert fp == 1.0 and fn == 0.0


def test_fusion_rates_undefined_fp():
    schema = ModelSchema([FactorSpec("a", 3, "ordinal")])
    star = CoefVector(0.0, [np.array([1.0, 2.0])])
    fp, fn = fusion_rates(star, star, schema)
    assert fp is None and fn == 0.0


def test_fusion_rates_ordinal_pair_count():
    truth, schema = b8_truth()
    # influential factors have 3 adjacent pairs each; denominators add up to
    # sum of p_j over influential factors
    hat = CoefVector(2.0, [np.full(3, 9.9) for _ in range(8)])
    fp, fn = fusion_rates(hat, truth, schema)
    # truth per influential factor: equal pairs (see design): f1 has
    # (0,b1): 0==0? b1 = (0,-.8,-.8): pairs (ref,1): 0 vs 0 equal;
    # (1,2): 0 vs -.8 differ; (2,3): equal -> 2 equal, 1 differ ... etc.
    # All-fused estimate: every truly-distinct pair is a false negative.
    assert fn == 1.0
    # fp counts pairs among equal-truth: hat has all levels equal (9.9) but
    # differs from reference -> reference pairs are "not fused"
    assert fp is not None


def test_sparsity_b8_truth():
    truth, schema = b8_truth()
    assert sparsity(truth, schema) == (9, 4)


def test_sparsity_highdim_truth():
    spec = design_highdim(seed=0, replications=1)
    assert sparsity(spec.beta_star, spec.schema) == (15, 5)


def test_sparsity_zero():
    _, schema = b8_truth()
    assert sparsity(CoefVector.zeros(schema), schema) == (0, 0)


def test_rates_times_denominator_integral(rng):
    truth, schema = b8_truth()
    hat = CoefVector(2.0, [b.copy() for b in truth.blocks])
    hat.blocks[5] = np.array([0.3, 0.3, 0.0])  # select one null factor
    fp, fn = selection_rates(hat, truth)
    assert (fp * 4) == pytest.approx(round(fp * 4))
    assert (fn * 4) == pytest.approx(round(fn * 4))


def test_factor_permutation_equivariance(rng):
    truth, schema = b8_truth()
    hat = CoefVector(2.0, [b + rng.normal(0, 0.1, size=3) for b in truth.blocks])
    perm = rng.permutation(8)
    schema_p = ModelSchema([schema.factors[j] for j in perm])
    truth_p = CoefVector(truth.intercept, [truth.blocks[j] for j in perm])
    hat_p = CoefVector(hat.intercept, [hat.blocks[j] for j in perm])
    assert msec(hat_p, truth_p) == pytest.approx(msec(hat, truth))
    assert selection_rates(hat_p, truth_p) == selection_rates(hat, truth)
    assert fusion_rates(hat_p, truth_p, schema_p) == fusion_rates(hat, truth, schema)
    assert sparsity(hat_p, schema_p) == sparsity(hat, schema)


def test_evaluate_bundle(rng):
    truth, schema = b8_truth()
    report = evaluate(truth, truth, schema, pred_deviance=12.5)
    assert report.msec == 0.0
    assert report.os == 9 and report.ps == 4
    assert report.pred_deviance == 12.5
    payload = report.to_jsonable()
    assert payload["fp_sel"] == 0.0 and payload["os"] == 9
