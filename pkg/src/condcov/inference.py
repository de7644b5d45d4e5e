"""Gaussian likelihood, maximum-likelihood fitting and direction selection.

Parameters are addressed by name: ``node.field`` for node parameters
(variance, scale, smoothness, nugget, noise) and ``child~parent.field`` for
interaction parameters (amplitude, aperture, shift1..shiftD). Fitting runs a
seeded multi-start Nelder-Mead simplex on transformed coordinates: log for
positive parameters, identity for amplitudes and shifts, with smoothness
clamped to [0.05, 5]. A covariance that fails Cholesky under the jitter
policy scores -inf, which the simplex treats as a soft rejection.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from .conditional import CovarianceEvaluator, ProcessNetwork, ProcessNode, mean_at
from .domain import Grid, Observations
from .errors import (
    CondcovError,
    InsufficientDataError,
    NumericalError,
    OptimizationError,
    ValidationError,
)
from .kernels import InteractionKind, InteractionSpec
from .linalg import DEFAULT_JITTER_MAX, chol_logdet, chol_solve, chol_with_jitter
from .rng import rng_from_seed

logger = logging.getLogger(__name__)

__all__ = [
    "list_parameters",
    "default_free_parameters",
    "get_parameter",
    "set_parameter",
    "loglik",
    "OptimizerConfig",
    "FitResult",
    "fit_mle",
    "reverse_bivariate",
    "compare_directions",
    "write_fit_result",
    "read_params",
]

_NODE_FIELDS = ("variance", "scale", "smoothness", "nugget", "noise")
_LOG_FIELDS = frozenset({"variance", "scale", "smoothness", "nugget", "noise", "aperture"})
_LOG_FLOOR = 1e-10
_NU_RANGE = (0.05, 5.0)

_EDGE_FIELDS = {
    InteractionKind.ZERO: (),
    InteractionKind.DIRAC: ("amplitude",),
    InteractionKind.BISQUARE: ("amplitude", "aperture"),
    InteractionKind.SHIFTED_BISQUARE: ("amplitude", "aperture"),
    InteractionKind.TABULATED: (),
}


def _edge_fields(spec: InteractionSpec) -> Tuple[str, ...]:
    fields = _EDGE_FIELDS[spec.kind]
    if spec.kind is InteractionKind.SHIFTED_BISQUARE:
        fields = fields + tuple(f"shift{i + 1}" for i in range(len(spec.shift)))
    return fields


def list_parameters(network: ProcessNetwork) -> list:
    """All addressable parameter names, in a stable order."""
    names = []
    for node in network.nodes:
        for field in _NODE_FIELDS:
            names.append(f"{node.name}.{field}")
    for q, node in enumerate(network.nodes):
        for idx, spec in node.parents:
            prefix = f"{node.name}~{network.nodes[idx].name}"
            for field in _edge_fields(spec):
                names.append(f"{prefix}.{field}")
    return names


def default_free_parameters(network: ProcessNetwork) -> list:
    """Everything except measurement-error variances, which are data config."""
    return [n for n in list_parameters(network) if not n.endswith(".noise")]


def _locate(network: ProcessNetwork, name: str):
    head, _, field = name.rpartition(".")
    if not head or not field:
        raise ValidationError(f"malformed parameter name {name!r}")
    if "~" in head:
        child, parent = head.split("~", 1)
        q = network.index(child)
        a = network.index(parent)
        for pos, (idx, spec) in enumerate(network.nodes[q].parents):
            if idx == a:
                if field not in _edge_fields(spec):
                    raise ValidationError(
                        f"{name!r}: {spec.kind.value} interactions have no "
                        f"parameter {field!r}"
                    )
                return ("edge", q, pos, field)
        raise ValidationError(f"{name!r}: no edge {child!r} ~ {parent!r}")
    q = network.index(head)
    if field not in _NODE_FIELDS:
        raise ValidationError(
            f"{name!r}: node parameters are {list(_NODE_FIELDS)}"
        )
    return ("node", q, None, field)


def get_parameter(network: ProcessNetwork, name: str) -> float:
    kind, q, pos, field = _locate(network, name)
    node = network.nodes[q]
    if kind == "node":
        if field in ("nugget", "noise"):
            return float(getattr(node, field))
        return float(getattr(node.covariance, field))
    _, spec = node.parents[pos]
    if field.startswith("shift"):
        return float(spec.shift[int(field[5:]) - 1])
    return float(getattr(spec, field))


def set_parameter(network: ProcessNetwork, name: str, value: float) -> ProcessNetwork:
    """Return a copy of the network with one named parameter replaced."""
    kind, q, pos, field = _locate(network, name)
    value = float(value)
    nodes = list(network.nodes)
    node = nodes[q]
    if kind == "node":
        if field in ("nugget", "noise"):
            nodes[q] = dataclasses.replace(node, **{field: value})
        else:
            cov = dataclasses.replace(node.covariance, **{field: value})
            nodes[q] = dataclasses.replace(node, covariance=cov)
        return ProcessNetwork(tuple(nodes))
    idx, spec = node.parents[pos]
    if field.startswith("shift"):
        comp = int(field[5:]) - 1
        shift = list(spec.shift)
        shift[comp] = value
        spec = dataclasses.replace(spec, shift=tuple(shift))
    else:
        spec = dataclasses.replace(spec, **{field: value})
    parents = list(node.parents)
    parents[pos] = (idx, spec)
    nodes[q] = dataclasses.replace(node, parents=tuple(parents))
    return ProcessNetwork(tuple(nodes))


def _kept_observations(grid: Grid, network: ProcessNetwork, obs) -> list:
    seen = set()
    kept = []
    for o in obs:
        if not isinstance(o, Observations):
            raise ValidationError(f"expected Observations, got {type(o).__name__}")
        if o.variable >= network.p:
            raise ValidationError(
                f"observations reference variable {o.variable}, model has {network.p}"
            )
        if o.variable in seen:
            raise ValidationError(f"two observation sets for variable {o.variable}")
        seen.add(o.variable)
        if o.m:
            if o.locations.shape[1] != grid.dim:
                raise ValidationError(
                    f"observation locations are {o.locations.shape[1]}-d, "
                    f"grid is {grid.dim}-d"
                )
            kept.append(o)
    kept.sort(key=lambda o: o.variable)
    return kept


def loglik(
    grid: Grid,
    network: ProcessNetwork,
    obs: Sequence[Observations],
    jitter_max: float = DEFAULT_JITTER_MAX,
) -> float:
    """Gaussian log-likelihood of observations under the network.

    Covariances are evaluated at the observation locations themselves (the
    grid only supplies the integration rule). Returns -inf when the
    observation covariance cannot be factored under the jitter policy.
    """
    kept = _kept_observations(grid, network, obs)
    m = int(np.sum([o.m for o in kept]))
    if m == 0:
        raise InsufficientDataError("log-likelihood needs at least one observation")
    ev = CovarianceEvaluator(grid, network)
    handles = [(o, ev.add_points(o.locations)) for o in kept]
    C = np.empty((m, m))
    offsets = np.concatenate([[0], np.cumsum([o.m for o in kept])]).astype(int)
    for a, (oa, ha) in enumerate(handles):
        for b, (ob, hb) in enumerate(handles):
            if b < a:
                C[offsets[a]:offsets[a + 1], offsets[b]:offsets[b + 1]] = \
                    C[offsets[b]:offsets[b + 1], offsets[a]:offsets[a + 1]].T
            else:
                C[offsets[a]:offsets[a + 1], offsets[b]:offsets[b + 1]] = \
                    ev.cov(oa.variable, ob.variable, ha, hb)
    resid = np.empty(m)
    for a, (oa, _) in enumerate(handles):
        rows = slice(offsets[a], offsets[a + 1])
        noise = network.nodes[oa.variable].noise
        if noise:
            idx = np.arange(offsets[a], offsets[a + 1])
            C[idx, idx] += noise
        resid[rows] = oa.values - mean_at(network, oa.variable, oa.locations)
    try:
        L, _ = chol_with_jitter(C, jitter_max)
    except NumericalError:
        logger.debug("loglik: covariance not factorable, returning -inf")
        return -np.inf
    quad = float(resid @ chol_solve(L, resid))
    return -0.5 * (m * math.log(2.0 * math.pi) + chol_logdet(L) + quad)


@dataclass(frozen=True)
class OptimizerConfig:
    seed: int = 0
    restarts: int = 3
    max_evals: int = 2000
    xtol: float = 1e-6
    perturbation: float = 0.3

    def __post_init__(self):
        if self.restarts < 1:
            raise ValidationError(f"restarts must be >= 1, got {self.restarts}")
        if self.max_evals < 1:
            raise ValidationError(f"max_evals must be >= 1, got {self.max_evals}")


@dataclass(frozen=True)
class FitResult:
    label: str
    estimates: dict
    free: Tuple[str, ...]
    loglik: float
    k: int
    aic: float
    converged: bool
    trace: Tuple[dict, ...]
    network: ProcessNetwork

    @property
    def provisional(self) -> bool:
        """True when the optimizer never met its convergence criterion."""
        return not self.converged


def _to_transformed(field: str, value: float) -> float:
    if field in _LOG_FIELDS:
        return math.log(max(value, _LOG_FLOOR))
    return value


def _from_transformed(field: str, x: float) -> float:
    if field in _LOG_FIELDS:
        if x > 700.0:
            return math.inf
        value = math.exp(x)
        if field == "smoothness":
            value = min(max(value, _NU_RANGE[0]), _NU_RANGE[1])
        return value
    return x


def fit_mle(
    grid: Grid,
    network: ProcessNetwork,
    obs: Sequence[Observations],
    free: Optional[Sequence[str]] = None,
    config: Optional[OptimizerConfig] = None,
    label: str = "model",
    jitter_max: float = DEFAULT_JITTER_MAX,
) -> FitResult:
    """Maximize the Gaussian likelihood over the named free parameters.

    Deterministic given (network, obs, free, config): restarts perturb the
    starting point with a Philox stream keyed by (config.seed, restart).
    """
    config = config or OptimizerConfig()
    free_names = list(free) if free is not None else default_free_parameters(network)
    if not free_names:
        raise ValidationError("fit needs at least one free parameter")
    if len(set(free_names)) != len(free_names):
        raise ValidationError(f"duplicate names in free parameters: {free_names}")
    fields = []
    x0 = []
    for name in free_names:
        value = get_parameter(network, name)  # validates the name
        field = name.rpartition(".")[2]
        fields.append(field)
        x0.append(_to_transformed(field, value))
    x0 = np.array(x0)

    def apply(x: np.ndarray) -> ProcessNetwork:
        net = network
        for name, field, xi in zip(free_names, fields, x):
            net = set_parameter(net, name, _from_transformed(field, float(xi)))
        return net

    def objective(x: np.ndarray) -> float:
        try:
            return -loglik(grid, apply(x), obs, jitter_max)
        except CondcovError:
            return np.inf

    trace = []
    best = None
    for start in range(config.restarts):
        if start == 0:
            xs = x0
        else:
            rng = rng_from_seed(config.seed, start)
            xs = x0 + config.perturbation * (1.0 + np.abs(x0)) * rng.standard_normal(x0.size)
        res = minimize(
            objective,
            xs,
            method="Nelder-Mead",
            options={
                "xatol": config.xtol,
                "fatol": 1e-8,
                "maxfev": config.max_evals,
                "disp": False,
            },
        )
        trace.append(
            {
                "start": start,
                "nfev": int(res.nfev),
                "loglik": float(-res.fun),
                "converged": bool(res.success),
                "message": str(res.message),
            }
        )
        if best is None or res.fun < best.fun:
            best = res
    if not np.isfinite(best.fun):
        raise OptimizationError(
            f"{label}: likelihood was -inf at every evaluation; "
            "check the starting parameters"
        )
    fitted = apply(best.x)
    ll = float(-best.fun)
    k = len(free_names)
    estimates = {name: get_parameter(fitted, name) for name in list_parameters(fitted)}
    converged = any(t["converged"] and t["loglik"] == ll for t in trace)
    return FitResult(
        label=label,
        estimates=estimates,
        free=tuple(free_names),
        loglik=ll,
        k=k,
        aic=-2.0 * ll + 2.0 * k,
        converged=converged,
        trace=tuple(trace),
        network=fitted,
    )


def reverse_bivariate(network: ProcessNetwork) -> ProcessNetwork:
    """Swap the conditioning order of a two-variable network.

    The old child becomes the root, keeping its Matern as the marginal
    starting point; the edge keeps its interaction parameters. This is a
    starting model for refitting, not a reparametrization of the same law.
    """
    if network.p != 2:
        raise ValidationError("reverse_bivariate needs exactly 2 variables")
    first, second = network.nodes
    edge = tuple((0, spec) for _, spec in second.parents)
    new_root = dataclasses.replace(second, parents=())
    new_child = dataclasses.replace(first, parents=edge)
    return ProcessNetwork((new_root, new_child))


def _translate_free(base: ProcessNetwork, cand: ProcessNetwork, free) -> Optional[list]:
    if free is None:
        return None
    cand_params = set(list_parameters(cand))
    out = []
    for name in free:
        if name in cand_params:
            out.append(name)
            continue
        head, _, field = name.rpartition(".")
        if "~" in head:
            child, parent = head.split("~", 1)
            swapped = f"{parent}~{child}.{field}"
            if swapped in cand_params:
                out.append(swapped)
                continue
        raise ValidationError(
            f"free parameter {name!r} has no counterpart in candidate "
            f"{list(cand.names)}"
        )
    return out


def compare_directions(
    grid: Grid,
    network: ProcessNetwork,
    obs: Sequence[Observations],
    free: Optional[Sequence[str]] = None,
    config: Optional[OptimizerConfig] = None,
    candidates: Optional[Sequence] = None,
    jitter_max: float = DEFAULT_JITTER_MAX,
) -> list:
    """Fit each conditioning order and rank the fits by AIC.

    For two variables the reversed order is generated automatically; for more
    variables pass ``candidates`` as (label, network) pairs sharing the node
    names. Ties break toward fewer parameters, then label order.
    """
    if candidates is None:
        if network.p != 2:
            raise ValidationError(
                "automatic direction swap is bivariate only; pass candidates "
                "for larger networks"
            )
        names = network.names
        candidates = [
            (f"{names[0]}->{names[1]}", network),
            (f"{names[1]}->{names[0]}", reverse_bivariate(network)),
        ]
    fits = []
    for item in candidates:
        label, cand = item
        if set(cand.names) != set(network.names):
            raise ValidationError(
                f"candidate {label!r} has variables {list(cand.names)}, "
                f"expected a reordering of {list(network.names)}"
            )
        remapped = [
            Observations(cand.index(network.names[o.variable]), o.locations, o.values)
            for o in obs
        ]
        fits.append(
            fit_mle(
                grid,
                cand,
                remapped,
                free=_translate_free(network, cand, free),
                config=config,
                label=label,
                jitter_max=jitter_max,
            )
        )
    return sorted(fits, key=lambda f: (f.aic, f.k, f.label))


def write_fit_result(path, fit: FitResult) -> None:
    """Flat key-value file: metadata as comments, one parameter per line."""
    lines = [
        f"# label = {fit.label}",
        f"# loglik = {fit.loglik:.17g}",
        f"# k = {fit.k}",
        f"# aic = {fit.aic:.17g}",
        f"# converged = {str(fit.converged).lower()}",
    ]
    for name in sorted(fit.estimates):
        lines.append(f"{name} = {fit.estimates[name]:.17g}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_params(path) -> dict:
    """Parse a flat key-value parameter file written by write_fit_result."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValidationError(f"{path}:{lineno}: expected 'name = value', got {raw!r}")
        try:
            out[key.strip()] = float(value.strip())
        except ValueError as exc:
            raise ValidationError(f"{path}:{lineno}: bad value in {raw!r}") from exc
    return out
