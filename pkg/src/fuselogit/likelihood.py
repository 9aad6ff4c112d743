"""Binary logistic log-likelihood, IRLS quantities, and the unpenalized ML fit."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DegenerateWeightsError
from .schema import CoefVector, Dataset

# Linear predictors are clamped to this range inside probability computations
# only, keeping the IRLS weights representable; the log-likelihood itself uses
# an overflow-safe softplus and is never clamped.
ETA_CLAMP = 30.0

# IRLS weights below this signal fitted probabilities numerically at 0 or 1.
WEIGHT_FLOOR = 1e-10

# A coefficient this large is treated as divergence (separation) by fit_ml.
ML_DIVERGENCE = 1e3


@dataclass
class LikelihoodState:
    """Linear predictor, fitted probabilities, and IRLS weights at one beta."""

    eta: np.ndarray
    pi: np.ndarray
    w: np.ndarray


@dataclass
class FitResult:
    """Outcome of a (penalized or unpenalized) model fit.

    ``objective`` is reported on the solver's own scale: ``-L_n`` plus the
    exact penalty for IRLS-type fits, and ``-L_n / n`` plus the exact penalty
    for block coordinate descent (whose tuning parameters live on the 1/n
    scale).  ``failed`` flags runs that did not produce a usable estimate;
    ``converged`` only records whether the stopping rule was met.
    """

    beta: CoefVector
    converged: bool
    iterations: int
    objective: float
    failed: bool = False
    reason: str | None = None

    def to_jsonable(self) -> dict:
        return {
            "beta": self.beta.to_jsonable(),
            "converged": self.converged,
            "iterations": self.iterations,
            "objective": float(self.objective),
            "failed": self.failed,
            "reason": self.reason,
        }


def linear_predictor(beta: CoefVector, data: Dataset) -> np.ndarray:
    return data.X @ beta.flatten()


def likelihood_state(beta: CoefVector, data: Dataset) -> LikelihoodState:
    eta = linear_predictor(beta, data)
    pi = 1.0 / (1.0 + np.exp(-np.clip(eta, -ETA_CLAMP, ETA_CLAMP)))
    return LikelihoodState(eta=eta, pi=pi, w=pi * (1.0 - pi))


def predict_proba(beta: CoefVector, data: Dataset) -> np.ndarray:
    """Fitted success probabilities."""
    return likelihood_state(beta, data).pi


def log_likelihood(beta: CoefVector, data: Dataset) -> float:
    """Bernoulli log-likelihood ``sum_i y_i eta_i - log(1 + exp(eta_i))``.

    Evaluated through ``logaddexp`` so it stays finite and accurate for large
    ``|eta|``.
    """
    eta = linear_predictor(beta, data)
    return float(data.y @ eta - np.logaddexp(0.0, eta).sum())


def _log_likelihood_flat(flat: np.ndarray, data: Dataset) -> float:
    eta = data.X @ flat
    return float(data.y @ eta - np.logaddexp(0.0, eta).sum())


def gradient(beta: CoefVector, data: Dataset) -> np.ndarray:
    """Score vector ``X^T (y - pi)`` of the log-likelihood."""
    state = likelihood_state(beta, data)
    return data.X.T @ (data.y - state.pi)


def hessian(beta: CoefVector, data: Dataset) -> np.ndarray:
    """Hessian ``-X^T W X`` of the log-likelihood (negative semidefinite)."""
    state = likelihood_state(beta, data)
    return -(data.X * state.w[:, None]).T @ data.X


def working_response(beta: CoefVector, data: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """IRLS working response and weights at the current iterate.

    Returns ``(y_tilde, w)`` with ``y_tilde = eta + (y - pi) / w`` and
    ``w = pi (1 - pi)``.

    Raises
    ------
    DegenerateWeightsError
        If any weight falls below ``WEIGHT_FLOOR``, i.e. some fitted
        probability is numerically 0 or 1 (separation).
    """
    state = likelihood_state(beta, data)
    wmin = state.w.min()
    if wmin < WEIGHT_FLOOR:
        raise DegenerateWeightsError(
            f"IRLS weight {wmin:.3e} below {WEIGHT_FLOOR:.0e}; "
            "fitted probabilities are numerically 0 or 1"
        )
    y_tilde = state.eta + (data.y - state.pi) / state.w
    return y_tilde, state.w


def fit_ml(data: Dataset, tol: float = 1e-5, max_iter: int = 100) -> FitResult:
    """Unpenalized maximum-likelihood fit by damped Newton iteration.

    Stops when the max-norm of the score drops below ``tol``.  A run is
    flagged ``failed`` when coefficients diverge (max-norm above
    ``ML_DIVERGENCE``), when no ascent step can be found, or when ``max_iter``
    is exhausted -- all typical symptoms of separation.  Failures are reported
    in the result, never raised.
    """
    n = data.n
    ysum = data.y.sum()
    schema = data.schema
    if not 0 < ysum < n:
        return FitResult(
            beta=CoefVector.zeros(schema),
            converged=False,
            iterations=0,
            objective=float("inf"),
            failed=True,
            reason="response is constant; ML estimate does not exist",
        )

    X = data.X
    flat = np.zeros(X.shape[1])
    loglik = _log_likelihood_flat(flat, data)
    for it in range(1, max_iter + 1):
        eta = X @ flat
        pi = 1.0 / (1.0 + np.exp(-np.clip(eta, -ETA_CLAMP, ETA_CLAMP)))
        score = X.T @ (data.y - pi)
        if np.abs(score).max() < tol:
            beta = CoefVector.from_flat(flat, schema)
            return FitResult(beta, True, it - 1, -loglik)
        w = pi * (1.0 - pi)
        H = (X * w[:, None]).T @ X
        try:
            step = np.linalg.solve(H, score)
            if not np.all(np.isfinite(step)):
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            step, *_ = np.linalg.lstsq(H, score, rcond=None)
        if not np.all(np.isfinite(step)):
            return FitResult(
                CoefVector.from_flat(flat, schema), False, it, -loglik,
                failed=True, reason="non-finite Newton step",
            )

        # Backtrack until the likelihood improves; Newton directions can
        # overshoot badly near separation.
        t = 1.0
        improved = False
        while t >= 1e-10:
            cand = flat + t * step
            cand_ll = _log_likelihood_flat(cand, data)
            if cand_ll > loglik:
                flat, loglik = cand, cand_ll
                improved = True
                break
            t *= 0.5
        if not improved:
            return FitResult(
                CoefVector.from_flat(flat, schema), False, it, -loglik,
                failed=True, reason="no ascent step found (separation)",
            )
        if np.abs(flat).max() > ML_DIVERGENCE:
            return FitResult(
                CoefVector.from_flat(flat, schema), False, it, -loglik,
                failed=True, reason="diverging coefficients (separation)",
            )

    return FitResult(
        CoefVector.from_flat(flat, schema), False, max_iter, -loglik,
        failed=True, reason=f"no convergence in {max_iter} iterations",
    )
