import numpy as np
import pytest

from fuselogit import CoefVector, FactorSpec, ModelSchema, encode


def central_difference(fun, x, h=1e-6):
    """Central finite-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.empty_like(x)
    for i in range(x.size):
        step = np.zeros_like(x)
        step[i] = h
        grad[i] = (fun(x + step) - fun(x - step)) / (2.0 * h)
    return grad


def random_dataset(rng, n=200, levels=(3, 4), scales=None, beta=None):
    """Small random dataset with a guaranteed non-degenerate response."""
    scales = scales or ["nominal"] * len(levels)
    schema = ModelSchema(
        [FactorSpec(f"f{j}", lv, sc) for j, (lv, sc) in enumerate(zip(levels, scales))]
    )
    raw = np.column_stack([rng.integers(0, lv, size=n) for lv in levels])
    if beta is None:
        flat = rng.normal(0.0, 0.8, size=1 + schema.num_params)
    else:
        flat = np.asarray(beta, dtype=np.float64)
    probe = encode(raw, schema, np.zeros(n))
    eta = probe.X @ flat
    y = (rng.random(n) < 1.0 / (1.0 + np.exp(-eta))).astype(np.float64)
    if y.sum() < 2:
        y[:2] = 1.0
    if y.sum() > n - 2:
        y[:2] = 0.0
    return encode(raw, schema, y), CoefVector.from_flat(flat, schema)


@pytest.fixture
def rng():
    return np.random.default_rng(42)
