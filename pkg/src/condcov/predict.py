"""Simple cokriging, kriging, CRPS scoring and leave-one-out validation.

Predictions are Gaussian conditionals of the joint model: the predictor at a
target is c^T C^-1 Z with C the observation covariance (process covariance
plus per-variable measurement-error variance on the diagonal) and c the
cross-covariance between target and observations. Nonzero means are handled
by residual cokriging: subtract the configured mean, predict, add it back.
All solves go through Cholesky with the shared jitter policy.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm as _norm

from .conditional import JointModel, cross_cov_matrix, mean_at
from .domain import Observations
from .errors import (
    InsufficientDataError,
    ParameterError,
    ValidationError,
)
from .linalg import DEFAULT_JITTER_MAX, chol_solve, chol_with_jitter

__all__ = [
    "PredictionResult",
    "cokrige",
    "krige",
    "crps_gaussian",
    "summarize_folds",
    "FoldScore",
    "LooResult",
    "loo_cv",
]


@dataclass(frozen=True)
class PredictionResult:
    variable: int
    locations: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    method: str


def _resolve_variable(model: JointModel, target_var) -> int:
    if isinstance(target_var, str):
        return model.network.index(target_var)
    q = int(target_var)
    if not 0 <= q < model.p:
        raise ValidationError(f"variable index {q} out of range for p={model.p}")
    return q


def _stack_observations(model: JointModel, obs: Sequence[Observations]):
    """Validate and keep the non-empty observation sets, in variable order."""
    seen = set()
    kept = []
    for o in obs:
        if not isinstance(o, Observations):
            raise ValidationError(f"expected Observations, got {type(o).__name__}")
        if o.variable >= model.p:
            raise ValidationError(
                f"observations reference variable {o.variable}, model has {model.p}"
            )
        if o.variable in seen:
            raise ValidationError(
                f"two observation sets for variable {o.variable}; merge them first"
            )
        seen.add(o.variable)
        if o.m > 0:
            if o.locations.shape[1] != model.grid.dim:
                raise ValidationError(
                    f"observation locations are {o.locations.shape[1]}-d, "
                    f"grid is {model.grid.dim}-d"
                )
            kept.append(o)
    kept.sort(key=lambda o: o.variable)
    return kept


def observation_covariance(model: JointModel, kept: Sequence[Observations]):
    """Joint covariance of the stacked observation vector, plus residuals.

    Returns (C, z_resid, blocks) where C includes measurement-error variance
    on the diagonal, z_resid is observations minus configured means, and
    blocks maps each kept set to its row slice.
    """
    sizes = [o.m for o in kept]
    total = int(np.sum(sizes))
    C = np.empty((total, total))
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
    blocks = {}
    for a, oa in enumerate(kept):
        blocks[oa.variable] = slice(offsets[a], offsets[a + 1])
        for b, ob in enumerate(kept):
            if b < a:
                C[offsets[a]:offsets[a + 1], offsets[b]:offsets[b + 1]] = \
                    C[offsets[b]:offsets[b + 1], offsets[a]:offsets[a + 1]].T
                continue
            C[offsets[a]:offsets[a + 1], offsets[b]:offsets[b + 1]] = \
                cross_cov_matrix(model, oa.variable, ob.variable,
                                 oa.locations, ob.locations)
    z = np.empty(total)
    for a, oa in enumerate(kept):
        rows = slice(offsets[a], offsets[a + 1])
        noise = model.network.nodes[oa.variable].noise
        if noise:
            idx = np.arange(offsets[a], offsets[a + 1])
            C[idx, idx] += noise
        z[rows] = oa.values - mean_at(model.network, oa.variable, oa.locations)
    return C, z, blocks


def cokrige(
    model: JointModel,
    obs: Sequence[Observations],
    targets,
    target_var,
    jitter_max: float = DEFAULT_JITTER_MAX,
) -> PredictionResult:
    """Simple cokriging of one variable from observations of any subset.

    With no usable observations this degrades to the prior (configured mean
    and marginal standard deviation).
    """
    tq = _resolve_variable(model, target_var)
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    if targets.shape[1] != model.grid.dim:
        raise ValidationError(
            f"targets are {targets.shape[1]}-d, grid is {model.grid.dim}-d"
        )
    kept = _stack_observations(model, obs)
    prior = cross_cov_matrix(model, tq, tq, targets, targets)
    prior_var = np.diag(prior).copy()
    mu_t = mean_at(model.network, tq, targets)
    if not kept:
        return PredictionResult(
            variable=tq,
            locations=targets,
            mean=mu_t,
            stderr=np.sqrt(np.clip(prior_var, 0.0, None)),
            method="cokriging",
        )
    C, z, _ = observation_covariance(model, kept)
    c = np.hstack(
        [
            cross_cov_matrix(model, tq, o.variable, targets, o.locations)
            for o in kept
        ]
    )
    L, _ = chol_with_jitter(C, jitter_max)
    alpha = chol_solve(L, z)
    mean = mu_t + c @ alpha
    w = chol_solve(L, c.T)
    var = prior_var - np.einsum("tm,mt->t", c, w)
    return PredictionResult(
        variable=tq,
        locations=targets,
        mean=mean,
        stderr=np.sqrt(np.clip(var, 0.0, None)),
        method="cokriging",
    )


def krige(
    model: JointModel,
    obs: Observations,
    targets,
    jitter_max: float = DEFAULT_JITTER_MAX,
) -> PredictionResult:
    """Single-variable kriging: cokriging restricted to the variable's own data."""
    result = cokrige(model, [obs], targets, obs.variable, jitter_max)
    return PredictionResult(
        variable=result.variable,
        locations=result.locations,
        mean=result.mean,
        stderr=result.stderr,
        method="kriging",
    )


def crps_gaussian(mu, sigma, y):
    """Continuous ranked probability score of a Gaussian forecast, closed form.

    crps = sigma * (z (2 Phi(z) - 1) + 2 phi(z) - 1/sqrt(pi)), z = (y - mu)/sigma,
    degrading to |y - mu| for sigma = 0. Lower is better.
    """
    mu_arr = np.asarray(mu, dtype=float)
    sig_arr = np.asarray(sigma, dtype=float)
    y_arr = np.asarray(y, dtype=float)
    if np.any(sig_arr < 0):
        raise ParameterError("sigma must be >= 0")
    mu_b, sig_b, y_b = np.broadcast_arrays(mu_arr, sig_arr, y_arr)
    scalar = mu_b.ndim == 0
    mu_b = np.atleast_1d(mu_b)
    sig_b = np.atleast_1d(sig_b)
    y_b = np.atleast_1d(y_b)
    out = np.abs(y_b - mu_b).astype(float)
    pos = sig_b > 0
    if np.any(pos):
        z = (y_b[pos] - mu_b[pos]) / sig_b[pos]
        out[pos] = sig_b[pos] * (
            z * (2.0 * _norm.cdf(z) - 1.0)
            + 2.0 * _norm.pdf(z)
            - 1.0 / np.sqrt(np.pi)
        )
    if scalar:
        return float(out[0])
    return out


def summarize_folds(errors, crps) -> dict:
    """MAE, RMSPE and mean CRPS from per-fold raw scores."""
    errors = np.asarray(errors, dtype=float)
    crps = np.asarray(crps, dtype=float)
    if errors.size == 0:
        raise InsufficientDataError("no fold scores to summarize")
    return {
        "MAE": float(np.mean(np.abs(errors))),
        "RMSPE": float(np.sqrt(np.mean(errors ** 2))),
        "MCRPS": float(np.mean(crps)),
    }


@dataclass(frozen=True)
class FoldScore:
    variable: int
    location: Tuple[float, ...]
    observed: float
    mean: float
    stderr: float
    error: float
    crps: float


@dataclass(frozen=True)
class LooResult:
    folds: Tuple[FoldScore, ...]
    summary: dict


def loo_cv(
    model: JointModel,
    obs: Sequence[Observations],
    jitter_max: float = DEFAULT_JITTER_MAX,
) -> LooResult:
    """Leave-one-location-out cross-validation.

    Colocated observations (any variable sharing the held-out coordinates)
    are dropped together, then every held-out observation is cokriged from
    the rest. Scores are for the held-out observation, so predictive spread
    includes measurement error. Summary is per variable name.
    """
    kept = _stack_observations(model, obs)
    total = int(np.sum([o.m for o in kept]))
    if total < 2:
        raise InsufficientDataError(
            f"leave-one-out needs at least 2 observations, got {total}"
        )
    C, z, _ = observation_covariance(model, kept)
    variables = np.concatenate([np.full(o.m, o.variable) for o in kept])
    locations = np.vstack([o.locations for o in kept])
    values = np.concatenate([o.values for o in kept])
    means = np.concatenate(
        [mean_at(model.network, o.variable, o.locations) for o in kept]
    )
    loc_keys = [tuple(row) for row in locations]
    groups = {}
    for idx, key in enumerate(loc_keys):
        groups.setdefault(key, []).append(idx)
    folds = []
    all_idx = np.arange(total)
    for key in sorted(groups):
        held = np.array(groups[key])
        retained = np.setdiff1d(all_idx, held)
        if retained.size == 0:
            raise InsufficientDataError(
                "all observations share one location; nothing to predict from"
            )
        L, _ = chol_with_jitter(C[np.ix_(retained, retained)], jitter_max)
        alpha = chol_solve(L, z[retained])
        cross = C[np.ix_(retained, held)]
        w = chol_solve(L, cross)
        pred_mean = means[held] + cross.T @ alpha
        pred_var = np.diag(C)[held] - np.einsum("mh,mh->h", cross, w)
        pred_sd = np.sqrt(np.clip(pred_var, 0.0, None))
        for pos, h in enumerate(held):
            err = values[h] - pred_mean[pos]
            folds.append(
                FoldScore(
                    variable=int(variables[h]),
                    location=key,
                    observed=float(values[h]),
                    mean=float(pred_mean[pos]),
                    stderr=float(pred_sd[pos]),
                    error=float(err),
                    crps=float(crps_gaussian(pred_mean[pos], pred_sd[pos], values[h])),
                )
            )
    summary = {}
    for q in sorted({f.variable for f in folds}):
        name = model.network.names[q]
        errs = [f.error for f in folds if f.variable == q]
        crps_vals = [f.crps for f in folds if f.variable == q]
        summary[name] = summarize_folds(errs, crps_vals)
    return LooResult(folds=tuple(folds), summary=summary)
