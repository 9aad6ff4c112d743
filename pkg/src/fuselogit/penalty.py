"""Penalty values, smooth approximations, weight schemes, and curvature matrices.

The penalty combines a group-lasso term that removes whole factors with a
weighted count of distinct level pairs (an L0 "norm" on coefficient
differences) that fuses levels:

    lambda1 * sum_j w1[j] ||beta_j||_2
      + lambda0 * sum_j sum_{r<s} w0[j][(r, s)] * [beta_{j,r} != beta_{j,s}]

with the reference coefficient ``beta_{j,0} = 0`` taking part in the
differences.  The intercept is never penalized.

For the solvers, the indicator is replaced by the smooth sigmoid surrogate
``N(d) = 2 / (1 + exp(-gamma |d|)) - 1`` and both penalty parts get local
quadratic expansions whose curvature matrices are assembled here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DimensionError, SchemaError
from .schema import CoefVector, Dataset, ModelSchema, difference_rows, difference_set

WEIGHT_SCHEMES = ("plain", "adaptive")

# Adaptive weights divide by ML differences/norms; exact zeros would give
# infinite weights, so they are capped here and recorded on the WeightSet.
ADAPTIVE_WEIGHT_CAP = 1e12


@dataclass
class PenaltyConfig:
    """Tuning parameters and approximation constants.

    Parameters
    ----------
    lambda1 : float
        Group-lasso tuning parameter (factor selection), >= 0.
    lambda0 : float
        Fusion tuning parameter (level merging), >= 0.
    weight_scheme : {"plain", "adaptive"}
        Which weight set the estimator is meant to be used with.
    gamma : float
        Sharpness of the sigmoid surrogate for the difference indicator.
    c : float
        Offset regularizing the surrogate derivative and the smoothed group
        norm at zero.
    adaptive_gamma_exponent : float
        Exponent on the inverse ML block norm in adaptive group weights.
    """

    lambda1: float
    lambda0: float
    weight_scheme: str = "plain"
    gamma: float = 10.0
    c: float = 1e-5
    adaptive_gamma_exponent: float = 1.0

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda0 < 0:
            raise SchemaError("penalty tuning parameters must be >= 0")
        if self.gamma <= 0 or self.c <= 0:
            raise SchemaError("gamma and c must be > 0")
        if self.adaptive_gamma_exponent <= 0:
            raise SchemaError("adaptive_gamma_exponent must be > 0")
        if self.weight_scheme not in WEIGHT_SCHEMES:
            raise SchemaError(f"weight_scheme must be one of {WEIGHT_SCHEMES}")


@dataclass
class WeightSet:
    """Group weights ``w1`` (one per factor) and per-pair fusion weights ``w0``.

    ``w0[j]`` maps each pair from ``difference_set(schema, j)`` to its weight.
    ``capped`` lists ``(j, r, s)`` fusion pairs and ``(j,)`` groups whose
    adaptive weight hit the division-by-zero cap.
    """

    w1: np.ndarray
    w0: list[dict[tuple[int, int], float]]
    capped: list[tuple] = field(default_factory=list)

    def w0_vector(self, schema: ModelSchema, j: int) -> np.ndarray:
        """Pair weights of factor ``j`` aligned with ``difference_rows``."""
        pairs = difference_set(schema, j)
        return np.array([self.w0[j][p] for p in pairs])


def weights_plain(data: Dataset) -> WeightSet:
    """Non-adaptive weights from level frequencies.

    Group part: ``w1[j] = sqrt(p_j)``.  Fusion part, with ``n_r`` the
    observation count of level ``r`` (reference included):

    - nominal: ``w0 = 2 / (p_j + 1) * sqrt((n_r + n_s) / n)``
    - ordinal: ``w0 = sqrt((n_r + n_{r-1}) / n)``
    """
    schema = data.schema
    n = data.n
    w1 = np.array([np.sqrt(f.num_params) for f in schema.factors])
    w0: list[dict[tuple[int, int], float]] = []
    for j, f in enumerate(schema.factors):
        counts = data.level_counts(j)
        pairs = difference_set(schema, j)
        if f.scale == "ordinal":
            w0.append(
                {(r, s): float(np.sqrt((counts[s] + counts[r]) / n)) for r, s in pairs}
            )
        else:
            scale = 2.0 / (f.num_params + 1)
            w0.append(
                {
                    (r, s): float(scale * np.sqrt((counts[r] + counts[s]) / n))
                    for r, s in pairs
                }
            )
    return WeightSet(w1=w1, w0=w0)


def weights_adaptive(
    data: Dataset, ml_estimate: CoefVector, gamma_exponent: float = 1.0
) -> WeightSet:
    """Adaptive weights: plain weights scaled by inverse ML magnitudes.

    Group part: ``w1[j] = sqrt(p_j) * ||b_j||^-gamma_exponent`` with ``b`` the
    unpenalized ML estimate.  Fusion part: the plain weight divided by
    ``|b_{j,r} - b_{j,s}|`` (reference coefficient 0).  Divisions by zero are
    capped at ``ADAPTIVE_WEIGHT_CAP`` and recorded.
    """
    ml_estimate.validate(data.schema)
    flat = ml_estimate.flatten()
    if not np.all(np.isfinite(flat)):
        raise SchemaError("adaptive weights require a finite ML estimate")
    base = weights_plain(data)
    capped: list[tuple] = []
    w1 = base.w1.copy()
    for j, block in enumerate(ml_estimate.blocks):
        norm = float(np.linalg.norm(block))
        if norm == 0.0:
            w1[j] = ADAPTIVE_WEIGHT_CAP
            capped.append((j,))
        else:
            w1[j] *= norm ** (-gamma_exponent)
        ext = np.concatenate(([0.0], block))
        for (r, s), w in base.w0[j].items():
            diff = abs(ext[r] - ext[s])
            if diff == 0.0:
                base.w0[j][(r, s)] = ADAPTIVE_WEIGHT_CAP
                capped.append((j, r, s))
            else:
                base.w0[j][(r, s)] = w / diff
    return WeightSet(w1=w1, w0=base.w0, capped=capped)


def build_weights(data: Dataset, cfg: PenaltyConfig, ml_estimate: CoefVector | None = None) -> WeightSet:
    """Weight set matching ``cfg.weight_scheme``; adaptive needs an ML estimate."""
    if cfg.weight_scheme == "plain":
        return weights_plain(data)
    if ml_estimate is None:
        raise SchemaError("adaptive weight scheme requires an ML estimate")
    return weights_adaptive(data, ml_estimate, cfg.adaptive_gamma_exponent)


def penalty_exact(
    beta: CoefVector, cfg: PenaltyConfig, weights: WeightSet, schema: ModelSchema
) -> float:
    """Exact (non-approximated) penalty value; intercept excluded."""
    beta.validate(schema)
    if len(weights.w1) != schema.num_factors:
        raise DimensionError("weight set does not match schema")
    total = 0.0
    for j, block in enumerate(beta.blocks):
        if cfg.lambda1 > 0:
            total += cfg.lambda1 * weights.w1[j] * float(np.linalg.norm(block))
        if cfg.lambda0 > 0:
            diffs = difference_rows(schema, j) @ block
            w0 = weights.w0_vector(schema, j)
            total += cfg.lambda0 * float(w0 @ (diffs != 0.0))
    return total


def l0_smooth(xi, gamma: float):
    """Sigmoid surrogate ``N(xi) = 2 / (1 + exp(-gamma |xi|)) - 1`` of the indicator."""
    return 2.0 / (1.0 + np.exp(-gamma * np.abs(xi))) - 1.0


def l0_smooth_deriv(xi, gamma: float, c: float):
    """Regularized derivative ``D`` of the surrogate, finite everywhere.

    ``D(xi) = 2 gamma s (1 - s) * xi / sqrt(xi^2 + c)`` with
    ``s = sigmoid(gamma |xi|)``.
    """
    s = 1.0 / (1.0 + np.exp(-gamma * np.abs(xi)))
    return 2.0 * gamma * s * (1.0 - s) * xi / np.sqrt(np.square(xi) + c)


def _l0_curvature_ratio(xi, gamma: float, c: float):
    """``D(xi) / xi`` in closed form: positive and finite, including at 0."""
    s = 1.0 / (1.0 + np.exp(-gamma * np.abs(xi)))
    return 2.0 * gamma * s * (1.0 - s) / np.sqrt(np.square(xi) + c)


def gl_smooth(block: np.ndarray, c: float) -> float:
    """Smoothed Euclidean norm ``sqrt(block . block + c)``."""
    block = np.asarray(block, dtype=np.float64)
    return float(np.sqrt(block @ block + c))


def penalty_smooth(
    beta: CoefVector, cfg: PenaltyConfig, weights: WeightSet, schema: ModelSchema
) -> float:
    """Smooth surrogate of the penalty, as minimized by the IRLS solver."""
    total = 0.0
    for j, block in enumerate(beta.blocks):
        if cfg.lambda1 > 0:
            total += cfg.lambda1 * weights.w1[j] * gl_smooth(block, cfg.c)
        if cfg.lambda0 > 0:
            diffs = difference_rows(schema, j) @ block
            w0 = weights.w0_vector(schema, j)
            total += cfg.lambda0 * float(w0 @ l0_smooth(diffs, cfg.gamma))
    return total


def fusion_curvature_block(
    block: np.ndarray,
    j: int,
    cfg: PenaltyConfig,
    weights: WeightSet,
    schema: ModelSchema,
) -> np.ndarray:
    """Quadratic-expansion curvature of the fusion part for one factor.

    ``lambda0 * sum_l w0_l * (D(d_l) / d_l) * a_l a_l^T`` over the factor's
    difference rows ``a_l``, evaluated at the current block.  Symmetric and
    positive semidefinite; zero when ``lambda0`` is 0.
    """
    num = schema.factors[j].num_params
    if cfg.lambda0 == 0.0:
        return np.zeros((num, num))
    rows = difference_rows(schema, j)
    diffs = rows @ np.asarray(block, dtype=np.float64)
    coeff = cfg.lambda0 * weights.w0_vector(schema, j) * _l0_curvature_ratio(
        diffs, cfg.gamma, cfg.c
    )
    return (rows * coeff[:, None]).T @ rows


def penalty_curvature(
    beta: CoefVector, cfg: PenaltyConfig, weights: WeightSet, schema: ModelSchema
) -> np.ndarray:
    """Block-diagonal (p x p) curvature of the full smoothed penalty.

    Each factor block combines the fusion curvature with the group-lasso
    expansion ``lambda1 * w1[j] / gl_smooth(block, c) * I``; the smoothed norm
    in the denominator keeps the matrix finite at zero blocks.  The intercept
    is not part of this matrix.
    """
    p = schema.num_params
    A = np.zeros((p, p))
    for j, block in enumerate(beta.blocks):
        sl = schema.block_slice(j)
        ssl = slice(sl.start - 1, sl.stop - 1)
        Aj = fusion_curvature_block(block, j, cfg, weights, schema)
        if cfg.lambda1 > 0:
            Aj = Aj + (cfg.lambda1 * weights.w1[j] / gl_smooth(block, cfg.c)) * np.eye(
                len(block)
            )
        A[ssl, ssl] = Aj
    return A


def penalty_surface_grid(
    beta1: np.ndarray, beta2: np.ndarray, lambda1: float = 1.0, lambda0: float = 1.0
) -> np.ndarray:
    """Unweighted penalty surface for a single 3-level factor.

    Evaluates ``lambda1 ||(b1, b2)||_2 + lambda0 [b1 != b2]`` on the grid
    product of ``beta1`` and ``beta2``; used by the ``penalty-grid`` command
    for external plotting.
    """
    b1, b2 = np.meshgrid(np.asarray(beta1), np.asarray(beta2), indexing="ij")
    return lambda1 * np.sqrt(b1**2 + b2**2) + lambda0 * (b1 != b2)
