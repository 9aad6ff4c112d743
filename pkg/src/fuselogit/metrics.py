"""Goodness-of-fit measures comparing an estimate against the truth.

Selection and fusion rates expect estimates with exact zeros and exact ties,
i.e. the thresholded output of the solvers.  Rates whose denominator is empty
are reported as ``None`` and must not be imputed as zero when averaging over
replications.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionError
from .schema import CoefVector, ModelSchema, difference_set


@dataclass
class EvalReport:
    """All scalar measures for one estimate; ``None`` marks undefined rates."""

    msec: float
    pred_deviance: float | None
    fp_sel: float | None
    fn_sel: float | None
    fp_fus: float | None
    fn_fus: float | None
    os: int
    ps: int

    def to_jsonable(self) -> dict:
        out = {}
        for key, val in self.__dict__.items():
            if val is None:
                out[key] = None
            elif key in ("os", "ps"):
                out[key] = int(val)
            else:
                out[key] = float(val)
        return out


def _check_same_shape(beta_hat: CoefVector, beta_star: CoefVector) -> None:
    if len(beta_hat.blocks) != len(beta_star.blocks) or any(
        len(a) != len(b) for a, b in zip(beta_hat.blocks, beta_star.blocks)
    ):
        raise DimensionError("estimate and truth have different block structure")


def msec(beta_hat: CoefVector, beta_star: CoefVector) -> float:
    """Mean squared error of the non-intercept coefficients."""
    _check_same_shape(beta_hat, beta_star)
    hat = beta_hat.flatten()[1:]
    star = beta_star.flatten()[1:]
    return float(np.mean((star - hat) ** 2))


def selection_rates(
    beta_hat: CoefVector, beta_star: CoefVector
) -> tuple[float | None, float | None]:
    """False positive / false negative factor-selection rates.

    FP: fraction of truly null factors whose estimated block is nonzero.
    FN: fraction of truly active factors whose estimated block is zero.
    ``None`` when the corresponding set of factors is empty.
    """
    _check_same_shape(beta_hat, beta_star)
    hat_active = np.array([np.any(b != 0.0) for b in beta_hat.blocks])
    star_active = np.array([np.any(b != 0.0) for b in beta_star.blocks])
    n_null = int((~star_active).sum())
    n_active = int(star_active.sum())
    fp = float((hat_active & ~star_active).sum() / n_null) if n_null else None
    fn = float((~hat_active & star_active).sum() / n_active) if n_active else None
    return fp, fn


def fusion_rates(
    beta_hat: CoefVector, beta_star: CoefVector, schema: ModelSchema
) -> tuple[float | None, float | None]:
    """False positive / false negative level-fusion rates.

    Only level pairs of truly influential factors are compared, so fusion is
    measured separately from selection.  A pair is compared through the same
    difference set the penalty uses (all pairs for nominal factors, adjacent
    pairs for ordinal ones) with the reference level entering as coefficient
    0.  FP: estimated difference nonzero where the true difference is zero;
    FN: estimated difference zero where the true difference is nonzero.
    """
    _check_same_shape(beta_hat, beta_star)
    fp_num = fp_den = fn_num = fn_den = 0
    for j in range(schema.num_factors):
        star_block = np.asarray(beta_star.blocks[j], dtype=np.float64)
        if not np.any(star_block != 0.0):
            continue
        hat_ext = np.concatenate(([0.0], beta_hat.blocks[j]))
        star_ext = np.concatenate(([0.0], star_block))
        for r, s in difference_set(schema, j):
            star_equal = star_ext[r] == star_ext[s]
            hat_equal = hat_ext[r] == hat_ext[s]
            if star_equal:
                fp_den += 1
                fp_num += not hat_equal
            else:
                fn_den += 1
                fn_num += hat_equal
    fp = fp_num / fp_den if fp_den else None
    fn = fn_num / fn_den if fn_den else None
    return fp, fn


def sparsity(beta_hat: CoefVector, schema: ModelSchema) -> tuple[int, int]:
    """Overall sparsity (nonzero coefficients) and practical sparsity (factors kept)."""
    beta_hat.validate(schema)
    os_count = int(sum(int((b != 0.0).sum()) for b in beta_hat.blocks))
    ps_count = int(sum(bool(np.any(b != 0.0)) for b in beta_hat.blocks))
    return os_count, ps_count


def evaluate(
    beta_hat: CoefVector,
    beta_star: CoefVector,
    schema: ModelSchema,
    pred_deviance: float | None = None,
) -> EvalReport:
    """Bundle all measures for one estimate into a report."""
    fp_sel, fn_sel = selection_rates(beta_hat, beta_star)
    fp_fus, fn_fus = fusion_rates(beta_hat, beta_star, schema)
    os_count, ps_count = sparsity(beta_hat, schema)
    return EvalReport(
        msec=msec(beta_hat, beta_star),
        pred_deviance=pred_deviance,
        fp_sel=fp_sel,
        fn_sel=fn_sel,
        fp_fus=fp_fus,
        fn_fus=fn_fus,
        os=os_count,
        ps=ps_count,
    )
