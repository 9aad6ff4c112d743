"""Simulation designs, the seeded data generator, and the replication harness.

All randomness comes from counter-based generators keyed by
``(seed, replication, stream)``, so every replication is reproducible in
isolation and results are identical no matter how many worker processes are
used.  A method "fails" on a replication when its tuning or final fit did not
produce a usable estimate (for adaptive weights this includes failure of the
ML fit they are built from); failed replications are excluded from the metric
averages but counted in the failure proportion.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from contextlib import nullcontext
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import SchemaError, TuningError
from .likelihood import FitResult, fit_ml
from .metrics import evaluate
from .penalty import weights_adaptive, weights_plain
from .schema import CoefVector, Dataset, FactorSpec, ModelSchema, encode
from .tuning import CvPlan, CvResult, cv_fusion_only, cv_two_step, deviance

try:  # single-threaded BLAS keeps results identical across worker counts
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover
    threadpool_limits = None

_STREAM_PROBS = 0
_STREAM_TRAIN_LEVELS = 1
_STREAM_TRAIN_Y = 2
_STREAM_TEST_LEVELS = 3
_STREAM_TEST_Y = 4

METHOD_FAMILIES = ("ml", "l0_pirls", "l0_fgl_pirls", "l0_fgl_bcd")
WEIGHT_SCHEMES = ("plain", "adaptive")


def _rng(seed: int, replication: int, stream: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.Philox(counter=[0, 0, replication, stream], key=[seed % 2**64, 0])
    )


@dataclass
class DesignSpec:
    """Everything needed to draw one replication of a simulation design."""

    name: str
    schema: ModelSchema
    beta_star: CoefVector
    n: int
    level_probs: list[np.ndarray]
    r_replications: int
    seed: int


def design_b8(n: int = 1000, seed: int = 0, replications: int = 50) -> DesignSpec:
    """Eight ordinal four-level factors, four of them influential.

    Level probabilities are drawn once per design: four Uniform(0.12, 0.44)
    variates are normalized to sum to one, redrawing until the normalized
    probabilities themselves stay between 0.12 and 0.44.  The true
    coefficient vector has overall sparsity 9 and practical sparsity 4.
    """
    schema = ModelSchema(
        [FactorSpec(f"x{j + 1}", 4, "ordinal") for j in range(8)]
    )
    blocks = [
        np.array([0.0, -0.8, -0.8]),
        np.array([1.0, 1.0, 0.0]),
        np.array([0.4, 0.6, 0.8]),
        np.array([-0.7, -1.0, 0.0]),
    ] + [np.zeros(3) for _ in range(4)]
    beta_star = CoefVector(2.0, blocks)
    rng = _rng(seed, 0, _STREAM_PROBS)
    level_probs = []
    for _ in range(8):
        for _ in range(64):
            q = rng.uniform(0.12, 0.44, size=4)
            q = q / q.sum()
            if q.min() >= 0.12 and q.max() <= 0.44:
                break
        level_probs.append(q)
    return DesignSpec("b8", schema, beta_star, n, level_probs, replications, seed)


def design_highdim(seed: int = 0, replications: int = 50, n: int = 100) -> DesignSpec:
    """Sixty ordinal factors (fifty 4-level, ten 3-level) with 170 coefficients.

    Only the first five factors are influential; with the intercept the
    parameter count (171) exceeds the default sample size of 100.  Levels are
    equiprobable.  True overall sparsity 15, practical sparsity 5.

    The intercept is -2: the influential blocks average to +4.05 per
    observation, so a +2 intercept would push the mean response above 0.97
    and most replications of size 100 would carry at most one failure case,
    leaving nothing to cross-validate or even fit.  With -2 the mean response
    is about 0.84, matching the regime of the other designs.
    """
    factors = [FactorSpec(f"x{j + 1}", 4, "ordinal") for j in range(50)]
    factors += [FactorSpec(f"x{j + 51}", 3, "ordinal") for j in range(10)]
    schema = ModelSchema(factors)
    blocks = [
        np.array([-1.0, 0.5, 2.0]),
        np.array([1.5, 1.5, 0.5]),
        np.array([1.0, 2.0, 2.5]),
        np.array([-0.5, -0.3, 0.5]),
        np.array([2.0, 1.0, 3.0]),
    ]
    blocks += [np.zeros(3) for _ in range(45)]
    blocks += [np.zeros(2) for _ in range(10)]
    beta_star = CoefVector(-2.0, blocks)
    level_probs = [np.full(f.num_levels, 1.0 / f.num_levels) for f in schema.factors]
    return DesignSpec("highdim", schema, beta_star, n, level_probs, replications, seed)


def get_design(name: str, n: int | None = None, seed: int = 0, replications: int = 50) -> DesignSpec:
    if name == "b8":
        return design_b8(n=n or 1000, seed=seed, replications=replications)
    if name == "highdim":
        return design_highdim(seed=seed, replications=replications, n=n or 100)
    raise SchemaError(f"unknown design {name!r}; expected 'b8' or 'highdim'")


def _draw(spec: DesignSpec, replication: int, level_stream: int, y_stream: int) -> Dataset:
    rng_levels = _rng(spec.seed, replication, level_stream)
    raw = np.empty((spec.n, spec.schema.num_factors), dtype=np.int64)
    for j, f in enumerate(spec.schema.factors):
        raw[:, j] = rng_levels.choice(f.num_levels, size=spec.n, p=spec.level_probs[j])
    data_noy = encode(raw, spec.schema, np.zeros(spec.n))
    eta = data_noy.X @ spec.beta_star.flatten()
    pi = 1.0 / (1.0 + np.exp(-eta))
    rng_y = _rng(spec.seed, replication, y_stream)
    y = (rng_y.random(spec.n) < pi).astype(np.float64)
    return encode(raw, spec.schema, y)


def simulate_dataset(spec: DesignSpec, replication: int) -> tuple[Dataset, Dataset]:
    """Independent train and test sets of size ``spec.n`` for one replication."""
    train = _draw(spec, replication, _STREAM_TRAIN_LEVELS, _STREAM_TRAIN_Y)
    test = _draw(spec, replication, _STREAM_TEST_LEVELS, _STREAM_TEST_Y)
    return train, test


def parse_method(method: str) -> tuple[str, str]:
    """Split ``"family"`` or ``"family.scheme"`` into (family, scheme)."""
    family, _, scheme = method.partition(".")
    scheme = scheme or "plain"
    if family not in METHOD_FAMILIES:
        raise SchemaError(f"unknown method family {family!r}")
    if scheme not in WEIGHT_SCHEMES:
        raise SchemaError(f"unknown weight scheme {scheme!r}")
    return family, scheme


def _blank_record(replication: int, method: str) -> dict:
    return {
        "replication": replication,
        "method": method,
        "failed": False,
        "reason": None,
        "msec": None,
        "pred_deviance": None,
        "fp_sel": None,
        "fn_sel": None,
        "fp_fus": None,
        "fn_fus": None,
        "os": None,
        "ps": None,
        "lambda1": None,
        "lambda0": None,
    }


def _tune(family: str, train: Dataset, solver_weights, plan: CvPlan,
          pirls_settings, bcd_settings) -> CvResult:
    if family == "l0_pirls":
        return cv_fusion_only(train, "pirls", solver_weights, plan, settings=pirls_settings)
    if family == "l0_fgl_pirls":
        return cv_two_step(train, "pirls", solver_weights, plan, settings=pirls_settings)
    return cv_two_step(train, "bcd", solver_weights, plan, settings=bcd_settings)


def run_replication(
    spec: DesignSpec,
    methods: list[str],
    plan: CvPlan,
    replication: int,
    pirls_settings=None,
    bcd_settings=None,
) -> list[dict]:
    """All method records for one replication (deterministic in isolation)."""
    train, test = simulate_dataset(spec, replication)
    rep_plan = replace(plan, seed=plan.seed + replication)
    ml_fit: FitResult | None = None

    def ml() -> FitResult:
        nonlocal ml_fit
        if ml_fit is None:
            ml_fit = fit_ml(train)
        return ml_fit

    records = []
    for method in methods:
        family, scheme = parse_method(method)
        record = _blank_record(replication, method)
        records.append(record)

        if family == "ml":
            fit = ml()
            if fit.failed:
                record.update(failed=True, reason=fit.reason)
                continue
            report = evaluate(fit.beta, spec.beta_star, spec.schema,
                              pred_deviance=deviance(fit.beta, test))
            record.update(report.to_jsonable())
            continue

        if scheme == "adaptive":
            base = ml()
            if base.failed:
                record.update(failed=True, reason=f"ML estimate for adaptive weights: {base.reason}")
                continue
            weights = weights_adaptive(train, base.beta)
        else:
            weights = weights_plain(train)

        try:
            cv = _tune(family, train, weights, rep_plan, pirls_settings, bcd_settings)
        except TuningError as exc:
            record.update(failed=True, reason=str(exc))
            continue
        if cv.fit.failed:
            record.update(failed=True, reason=cv.fit.reason,
                          lambda1=cv.lambda1_opt, lambda0=cv.lambda0_opt)
            continue
        report = evaluate(cv.fit.beta, spec.beta_star, spec.schema,
                          pred_deviance=deviance(cv.fit.beta, test))
        record.update(report.to_jsonable())
        record.update(lambda1=cv.lambda1_opt, lambda0=cv.lambda0_opt)
    return records


@dataclass
class MethodSummary:
    """Aggregates over the non-failed replications of one method."""

    method: str
    replications: int
    fails: int
    proportion_of_fails: float
    msec_mean: float | None = None
    msec_median: float | None = None
    msec_q25: float | None = None
    msec_q75: float | None = None
    pred_deviance_mean: float | None = None
    pred_deviance_median: float | None = None
    pred_deviance_q25: float | None = None
    pred_deviance_q75: float | None = None
    fp_sel_mean: float | None = None
    fn_sel_mean: float | None = None
    fp_fus_mean: float | None = None
    fn_fus_mean: float | None = None
    os_mean: float | None = None
    ps_mean: float | None = None

    def to_jsonable(self) -> dict:
        return {k: (v if v is None or isinstance(v, (int, str)) else float(v))
                for k, v in self.__dict__.items()}


@dataclass
class ReplicationReport:
    """Per-method aggregates plus the raw per-replication records."""

    design: str
    n: int
    replications: int
    seed: int
    summaries: list[MethodSummary]
    records: list[dict]

    def summary(self, method: str) -> MethodSummary:
        for s in self.summaries:
            if s.method == method:
                return s
        raise KeyError(method)

    def to_jsonable(self) -> dict:
        return {
            "design": self.design,
            "n": self.n,
            "replications": self.replications,
            "seed": self.seed,
            "summaries": [s.to_jsonable() for s in self.summaries],
            "records": self.records,
        }


def _mean(values: list) -> float | None:
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


def _summarize(method: str, records: list[dict]) -> MethodSummary:
    rows = [r for r in records if r["method"] == method]
    ok = [r for r in rows if not r["failed"]]
    summary = MethodSummary(
        method=method,
        replications=len(rows),
        fails=len(rows) - len(ok),
        proportion_of_fails=(len(rows) - len(ok)) / len(rows) if rows else 0.0,
    )
    for key in ("msec", "pred_deviance"):
        vals = [r[key] for r in ok if r[key] is not None]
        if vals:
            arr = np.asarray(vals, dtype=np.float64)
            setattr(summary, f"{key}_mean", float(arr.mean()))
            setattr(summary, f"{key}_median", float(np.median(arr)))
            setattr(summary, f"{key}_q25", float(np.quantile(arr, 0.25)))
            setattr(summary, f"{key}_q75", float(np.quantile(arr, 0.75)))
    for key in ("fp_sel", "fn_sel", "fp_fus", "fn_fus", "os", "ps"):
        setattr(summary, f"{key}_mean", _mean([r[key] for r in ok]))
    return summary


def _worker(args) -> list[dict]:
    spec, methods, plan, replication, pirls_settings, bcd_settings = args
    limiter = threadpool_limits(limits=1) if threadpool_limits is not None else nullcontext()
    with limiter:
        return run_replication(spec, methods, plan, replication, pirls_settings, bcd_settings)


def run_study(
    spec: DesignSpec,
    methods: list[str],
    plan: CvPlan,
    jobs: int | None = None,
    pirls_settings=None,
    bcd_settings=None,
) -> ReplicationReport:
    """Monte-Carlo comparison of the requested methods on one design.

    Replications run independently (optionally across ``jobs`` worker
    processes) and are aggregated in replication order, so the report is
    identical for any ``jobs`` value.
    """
    for m in methods:
        parse_method(m)
    reps = range(spec.r_replications)
    tasks = [(spec, methods, plan, r, pirls_settings, bcd_settings) for r in reps]
    if jobs is not None and jobs > 1 and spec.r_replications > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, spec.r_replications)) as pool:
            per_rep = list(pool.map(_worker, tasks, chunksize=max(1, math.ceil(len(tasks) / (4 * jobs)))))
    else:
        per_rep = [_worker(t) for t in tasks]
    records = [record for rep_records in per_rep for record in rep_records]
    summaries = [_summarize(m, records) for m in methods]
    return ReplicationReport(
        design=spec.name,
        n=spec.n,
        replications=spec.r_replications,
        seed=spec.seed,
        summaries=summaries,
        records=records,
    )
