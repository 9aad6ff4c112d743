"""Penalty-strength discovery and two-step cross-validation.

Tuning a model with two penalties on a full two-dimensional grid is
needlessly expensive; instead the group-lasso strength ``lambda1`` is
cross-validated first with the fusion penalty switched off, then the fusion
strength ``lambda0`` is cross-validated with ``lambda1`` fixed at its chosen
value.  Both grids are linear from ``lambda_lower`` (default 0, which must be
included) to a shared upper bound at which the fitted model is completely
null.  Held-out fold performance is scored by predictive deviance throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .bcd import BcdSettings, bcd_fit
from .exceptions import TuningError
from .likelihood import FitResult, fit_ml, predict_proba
from .penalty import PenaltyConfig, WeightSet
from .pirls import PirlsSettings, pirls_fit
from .schema import CoefVector, Dataset

SOLVERS = ("pirls", "bcd")

# Probability clamp for held-out deviance; keeps perfect predictions finite.
MU_CLAMP = 1e-12

_FOLD_STREAM = 5


@dataclass
class CvPlan:
    """Cross-validation layout: folds, grid size, lower endpoint, seed."""

    k_folds: int = 5
    n_lambda: int = 10
    lambda_lower: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.k_folds < 2:
            raise TuningError("k_folds must be >= 2")
        if self.n_lambda < 2:
            raise TuningError("n_lambda must be >= 2")


@dataclass
class CvResult:
    """Chosen tuning values, the per-value mean deviances, and the final fit."""

    lambda1_opt: float
    lambda0_opt: float
    grid1_lambda: np.ndarray
    grid1_deviance: np.ndarray
    grid0_lambda: np.ndarray
    grid0_deviance: np.ndarray
    fold_assignments: np.ndarray
    fit: FitResult

    def to_jsonable(self) -> dict:
        return {
            "lambda1_opt": float(self.lambda1_opt),
            "lambda0_opt": float(self.lambda0_opt),
            "grid1": [
                {"lambda": float(l), "mean_deviance": None if not np.isfinite(d) else float(d)}
                for l, d in zip(self.grid1_lambda, self.grid1_deviance)
            ],
            "grid0": [
                {"lambda": float(l), "mean_deviance": None if not np.isfinite(d) else float(d)}
                for l, d in zip(self.grid0_lambda, self.grid0_deviance)
            ],
            "fold_assignments": [int(f) for f in self.fold_assignments],
            "fit": self.fit.to_jsonable(),
        }


def deviance(beta: CoefVector, data: Dataset) -> float:
    """Bernoulli deviance ``-2 sum[y log mu + (1-y) log(1-mu)]`` with clamped mu."""
    mu = np.clip(predict_proba(beta, data), MU_CLAMP, 1.0 - MU_CLAMP)
    return float(-2.0 * (data.y @ np.log(mu) + (1.0 - data.y) @ np.log1p(-mu)))


def predictive_deviance_heldout(fit: FitResult, heldout: Dataset) -> float:
    """Deviance of a fitted model's predictions on held-out data."""
    return deviance(fit.beta, heldout)


def fit_penalized(
    data: Dataset,
    cfg: PenaltyConfig,
    weights: WeightSet,
    solver: str = "pirls",
    settings: PirlsSettings | BcdSettings | None = None,
    init: CoefVector | None = None,
) -> FitResult:
    """Dispatch to the requested solver with a shared calling convention."""
    if solver == "pirls":
        return pirls_fit(data, cfg, weights, settings=settings, init=init)
    if solver == "bcd":
        return bcd_fit(data, cfg, weights, settings=settings, init=init)
    raise TuningError(f"unknown solver {solver!r}; expected one of {SOLVERS}")


def stratified_folds(y: np.ndarray, k_folds: int, seed: int) -> np.ndarray:
    """Deterministic response-stratified fold assignment.

    Shuffles each response class with a counter-based generator keyed by the
    seed, then deals observations round-robin, so fold sizes differ by at
    most one and every fold receives its share of both classes.
    """
    y = np.asarray(y)
    ones = np.nonzero(y == 1)[0]
    zeros = np.nonzero(y == 0)[0]
    # Round-robin spreading puts a class with c observations into min(c, k)
    # folds, so two per class guarantee both classes in every training set.
    if len(ones) < 2 or len(zeros) < 2:
        raise TuningError(
            "stratified CV needs at least two observations of each response class"
        )
    rng = np.random.Generator(
        np.random.Philox(counter=[0, 0, 0, _FOLD_STREAM], key=[seed % 2**64, 0])
    )
    order = np.concatenate([rng.permutation(ones), rng.permutation(zeros)])
    assignments = np.empty(len(y), dtype=np.int64)
    assignments[order] = np.arange(len(y)) % k_folds
    return assignments


def _all_null(fit: FitResult) -> bool:
    return not fit.failed and all(np.all(b == 0.0) for b in fit.beta.blocks)


def _default_init(
    data: Dataset, solver: str, settings: PirlsSettings | BcdSettings | None
) -> CoefVector | None:
    """Materialize the solver's default starting value once per dataset.

    The fusion penalty is nonconvex, so the starting point is part of the
    estimator's definition: every grid fit, probe, and refit on the same data
    must start from the same place.  Computing the ML start here (rather than
    inside every ``pirls_fit`` call) avoids refitting it per grid point.
    """
    start = getattr(settings, "start", "ml" if solver == "pirls" else "zero")
    if start != "ml":
        return None
    ml = fit_ml(data)
    return ml.beta if not ml.failed else CoefVector.zeros(data.schema)


def find_lambda_max(
    data: Dataset,
    solver: str,
    weights: WeightSet,
    which: str = "joint",
    lambda_other: float = 0.0,
    settings: PirlsSettings | BcdSettings | None = None,
    cfg_template: PenaltyConfig | None = None,
    max_doublings: int = 30,
) -> float:
    """Smallest probed penalty strength that empties the model.

    Probes 1, 2, 4, ... (at most ``max_doublings`` doublings) and returns the
    first strength at which the fitted model is completely null, on the group
    axis (``which="gl"``), the fusion axis (``which="l0"``), or on both at
    once (``which="joint"``, probing fits at ``lambda1 = lambda0 = lam``, so
    the single returned value empties the model when used for both grids).
    For single-axis searches the non-probed parameter is held at
    ``lambda_other``.  Probe fits use the solver's default starting value.

    Raises
    ------
    TuningError
        If no probed strength empties the model.
    """
    if which not in ("gl", "l0", "joint"):
        raise TuningError(f"unknown axis {which!r}; expected 'gl', 'l0', or 'joint'")

    template = cfg_template or PenaltyConfig(lambda1=0.0, lambda0=0.0)
    init = _default_init(data, solver, settings)

    def probe(lam: float) -> bool:
        if which == "gl":
            cfg = replace(template, lambda1=lam, lambda0=lambda_other)
        elif which == "l0":
            cfg = replace(template, lambda1=lambda_other, lambda0=lam)
        else:
            cfg = replace(template, lambda1=lam, lambda0=lam)
        return _all_null(fit_penalized(data, cfg, weights, solver, settings, init=init))

    lam = 1.0
    for _ in range(max_doublings + 1):
        if probe(lam):
            return lam
        lam *= 2.0
    raise TuningError(
        f"no {which} penalty strength up to 2^{max_doublings} emptied the model"
    )


def _cv_grid(
    data: Dataset,
    folds: np.ndarray,
    grid: np.ndarray,
    axis: str,
    fixed_other: float,
    weights: WeightSet,
    solver: str,
    settings,
    cfg_template: PenaltyConfig,
) -> np.ndarray:
    """Mean held-out deviance per grid value; failed fits are skipped.

    Fits along a fold's grid follow the solver's start doctrine: the IRLS
    solver starts its first fit from the fold's ML estimate and continues
    each subsequent fit from the previous solution (a warm-started path),
    while block coordinate descent starts every fit fresh from its default
    (zero) start.  Nonconvexity makes the start part of the estimator, so the
    full-data refit must mirror this.  Raises TuningError when every fit in
    some fold fails.
    """
    chain = solver == "pirls"
    k = int(folds.max()) + 1
    dev = np.full((k, len(grid)), np.nan)
    for f in range(k):
        train = data.subset(folds != f)
        held = data.subset(folds == f)
        init = _default_init(train, solver, settings)
        for gi, lam in enumerate(grid):
            if axis == "gl":
                cfg = replace(cfg_template, lambda1=float(lam), lambda0=fixed_other)
            else:
                cfg = replace(cfg_template, lambda1=fixed_other, lambda0=float(lam))
            fit = fit_penalized(data=train, cfg=cfg, weights=weights, solver=solver,
                                settings=settings, init=init)
            if fit.failed:
                continue
            if chain:
                init = fit.beta
            dev[f, gi] = deviance(fit.beta, held)
        if np.all(np.isnan(dev[f])):
            raise TuningError(f"all grid fits failed in fold {f}")
    counts = (~np.isnan(dev)).sum(axis=0)
    sums = np.nansum(dev, axis=0)
    return np.where(counts > 0, sums / np.maximum(counts, 1), np.inf)


def _pick(grid: np.ndarray, means: np.ndarray) -> float:
    """Grid value with minimal mean deviance; ties break toward larger lambda."""
    best = means.min()
    return float(grid[np.nonzero(means == best)[0].max()])


def _refit(
    data: Dataset,
    solver: str,
    weights: WeightSet,
    settings,
    cfg_template: PenaltyConfig,
    axis: str,
    fixed_other: float,
    grid: np.ndarray,
    chosen: float,
) -> FitResult:
    """Full-data fit at the chosen grid value, matching the fold protocol.

    For the IRLS solver this re-walks the warm-started path up to the chosen
    value; for block coordinate descent it is a single fresh fit.
    """
    init = _default_init(data, solver, settings)
    values = grid[grid <= chosen] if solver == "pirls" else np.array([chosen])
    fit = None
    for lam in values:
        if axis == "gl":
            cfg = replace(cfg_template, lambda1=float(lam), lambda0=fixed_other)
        else:
            cfg = replace(cfg_template, lambda1=fixed_other, lambda0=float(lam))
        fit = fit_penalized(data, cfg, weights, solver, settings, init=init)
        if not fit.failed:
            init = fit.beta
    assert fit is not None
    return fit


def cv_two_step(
    data: Dataset,
    solver: str,
    weights: WeightSet,
    plan: CvPlan,
    settings: PirlsSettings | BcdSettings | None = None,
    cfg_template: PenaltyConfig | None = None,
) -> CvResult:
    """Two-step tuning of (lambda1, lambda0) by stratified k-fold CV.

    Step 1 cross-validates ``lambda1`` with ``lambda0 = 0``; step 2 fixes the
    chosen ``lambda1`` and cross-validates ``lambda0``.  Both grids are
    ``n_lambda`` linearly spaced values from ``lambda_lower`` to a shared
    upper bound that empties the model.  The model is then refitted on the
    full data at the chosen pair.

    Exactly ``2 * n_lambda * k_folds`` grid fits are performed (plus the
    upper-bound probes and the final refit); the two-dimensional grid product
    is never evaluated.
    """
    template = cfg_template or PenaltyConfig(lambda1=0.0, lambda0=0.0)
    folds = stratified_folds(data.y, plan.k_folds, plan.seed)
    lam_max = find_lambda_max(
        data, solver, weights, which="joint", settings=settings, cfg_template=template
    )
    grid = np.linspace(plan.lambda_lower, lam_max, plan.n_lambda)

    dev1 = _cv_grid(data, folds, grid, "gl", 0.0, weights, solver, settings, template)
    lambda1_opt = _pick(grid, dev1)
    dev0 = _cv_grid(data, folds, grid, "l0", lambda1_opt, weights, solver, settings, template)
    lambda0_opt = _pick(grid, dev0)

    final = _refit(data, solver, weights, settings, template,
                   "l0", lambda1_opt, grid, lambda0_opt)
    return CvResult(
        lambda1_opt=lambda1_opt,
        lambda0_opt=lambda0_opt,
        grid1_lambda=grid.copy(),
        grid1_deviance=dev1,
        grid0_lambda=grid.copy(),
        grid0_deviance=dev0,
        fold_assignments=folds,
        fit=final,
    )


def cv_fusion_only(
    data: Dataset,
    solver: str,
    weights: WeightSet,
    plan: CvPlan,
    settings: PirlsSettings | BcdSettings | None = None,
    cfg_template: PenaltyConfig | None = None,
) -> CvResult:
    """Single-axis CV over ``lambda0`` with no group penalty.

    Tuning path for the fusion-only estimator, which drops factors only by
    fusing every level with the reference.
    """
    template = cfg_template or PenaltyConfig(lambda1=0.0, lambda0=0.0)
    folds = stratified_folds(data.y, plan.k_folds, plan.seed)
    lam_max = find_lambda_max(
        data, solver, weights, which="l0", settings=settings, cfg_template=template
    )
    grid = np.linspace(plan.lambda_lower, lam_max, plan.n_lambda)
    dev0 = _cv_grid(data, folds, grid, "l0", 0.0, weights, solver, settings, template)
    lambda0_opt = _pick(grid, dev0)
    final = _refit(data, solver, weights, settings, template,
                   "l0", 0.0, grid, lambda0_opt)
    return CvResult(
        lambda1_opt=0.0,
        lambda0_opt=lambda0_opt,
        grid1_lambda=np.empty(0),
        grid1_deviance=np.empty(0),
        grid0_lambda=grid.copy(),
        grid0_deviance=dev0,
        fold_assignments=folds,
        fit=final,
    )


def fit_path(
    data: Dataset,
    solver: str,
    weights: WeightSet,
    lambda1_grid: np.ndarray,
    lambda0_grid: np.ndarray,
    settings: PirlsSettings | BcdSettings | None = None,
    cfg_template: PenaltyConfig | None = None,
) -> list[FitResult]:
    """Warm-started fits along a joint grid of penalty strengths.

    ``lambda1_grid`` and ``lambda0_grid`` must have equal length; position
    ``i`` is fitted at ``(lambda1_grid[i], lambda0_grid[i])``, warm-starting
    from the previous solution.
    """
    if len(lambda1_grid) != len(lambda0_grid):
        raise TuningError("lambda grids must have equal length")
    template = cfg_template or PenaltyConfig(lambda1=0.0, lambda0=0.0)
    fits: list[FitResult] = []
    warm = None
    for l1, l0 in zip(lambda1_grid, lambda0_grid):
        cfg = replace(template, lambda1=float(l1), lambda0=float(l0))
        fit = fit_penalized(data, cfg, weights, solver, settings, init=warm)
        fits.append(fit)
        if not fit.failed:
            warm = fit.beta
    return fits
