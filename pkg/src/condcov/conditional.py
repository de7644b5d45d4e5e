"""Joint covariance construction by conditioning.

A ProcessNetwork orders p spatial variables so that each one is driven by the
variables before it: the conditional mean of variable q given its parents is
a weighted integral of the parent fields, with an interaction function as the
weight, and the conditional covariance is a Matern. Integrals are discretized
on a Grid, whose quadrature weights are folded into the interaction matrices.
This yields valid (positive semidefinite) joint covariances for any choice of
interaction functions, which is the whole point of the construction.

Covariances between arbitrary (off-grid) locations use the same recursions
with exact kernel evaluation at the requested points; the grid only ever
supplies the integration rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .domain import Grid
from .errors import ValidationError
from .kernels import (
    InteractionKind,
    InteractionSpec,
    MaternParams,
    interaction_values,
    matern_cov,
)
from .linalg import DEFAULT_JITTER_MAX, chol_model

__all__ = [
    "MeanSpec",
    "ProcessNode",
    "ProcessNetwork",
    "build_interaction_matrix",
    "assemble_bivariate",
    "assemble_dag",
    "JointModel",
    "cross_cov_at",
    "cross_cov_matrix",
    "apply_mean",
    "mean_at",
    "coordinate_covariates",
]

_NAME_FORBIDDEN = set(" .~,\t\n")


@dataclass(frozen=True)
class MeanSpec:
    """Linear mean: named covariates paired with coefficients."""

    covariates: Tuple[str, ...]
    coefficients: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(self.covariates))
        object.__setattr__(
            self, "coefficients", tuple(float(c) for c in self.coefficients)
        )
        if len(self.covariates) == 0:
            raise ValidationError("mean spec needs at least one covariate")
        if len(self.covariates) != len(self.coefficients):
            raise ValidationError(
                f"{len(self.covariates)} covariates but "
                f"{len(self.coefficients)} coefficients"
            )
        if not np.all(np.isfinite(self.coefficients)):
            raise ValidationError("mean coefficients must be finite")


@dataclass(frozen=True)
class ProcessNode:
    """One variable: its conditional Matern plus edges to earlier variables.

    ``covariance`` is the marginal Matern for a root node and the conditional
    (residual) Matern otherwise. ``nugget`` is micro-scale variance added to
    the process itself; ``noise`` is measurement-error variance that only
    enters observation covariances.
    """

    name: str
    covariance: MaternParams
    parents: Tuple[Tuple[int, InteractionSpec], ...] = ()
    mean: Optional[MeanSpec] = None
    nugget: float = 0.0
    noise: float = 0.0

    def __post_init__(self):
        if not self.name or _NAME_FORBIDDEN & set(self.name):
            raise ValidationError(
                f"node name {self.name!r} is empty or contains reserved characters"
            )
        object.__setattr__(
            self,
            "parents",
            tuple((int(idx), spec) for idx, spec in self.parents),
        )
        for val, what in ((self.nugget, "nugget"), (self.noise, "noise")):
            if not np.isfinite(val) or val < 0:
                raise ValidationError(f"{what} must be finite and >= 0, got {val!r}")


@dataclass(frozen=True)
class ProcessNetwork:
    """Variables in conditioning order; parents always precede their node."""

    nodes: Tuple[ProcessNode, ...]

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        if not self.nodes:
            raise ValidationError("network needs at least one node")
        names = [n.name for n in self.nodes]
        if len(set(names)) != len(names):
            raise ValidationError(f"duplicate node names in {names}")
        for q, node in enumerate(self.nodes):
            seen = set()
            for idx, spec in node.parents:
                if not 0 <= idx < q:
                    raise ValidationError(
                        f"node {node.name!r}: parent index {idx} does not precede "
                        f"it in conditioning order (network must be acyclic)"
                    )
                if idx in seen:
                    raise ValidationError(
                        f"node {node.name!r}: duplicate edge to {names[idx]!r}"
                    )
                seen.add(idx)
                if not isinstance(spec, InteractionSpec):
                    raise ValidationError(
                        f"node {node.name!r}: parent {names[idx]!r} needs an "
                        f"InteractionSpec, got {type(spec).__name__}"
                    )

    @property
    def p(self) -> int:
        return len(self.nodes)

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(n.name for n in self.nodes)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ValidationError(
                f"unknown variable {name!r}; network has {list(self.names)}"
            ) from None


def _points_key(points: np.ndarray) -> tuple:
    return (points.shape, points.tobytes())


def build_interaction_matrix(grid: Grid, spec: InteractionSpec) -> np.ndarray:
    """n x n matrix of b(s_k, s_l) * weight_l over the grid.

    Dirac interactions contract the integral exactly, so they become
    amplitude * identity with no quadrature weight.
    """
    if spec.kind is InteractionKind.DIRAC:
        return spec.amplitude * np.eye(grid.n)
    vals = interaction_values(spec, grid.vertices, grid.vertices)
    return vals * grid.weights[None, :]


class CovarianceEvaluator:
    """Recursive cross-covariance evaluation over registered point sets.

    Set 0 is always the grid (the integration nodes). cov(q, r, i, j) returns
    cov{Y_q(P_i), Y_r(P_j)} as a matrix, built bottom-up through the network:
    a marginal block is the node's own Matern plus the propagated parent
    terms, and a cross block pushes the later variable's interaction
    operators onto earlier blocks. Dirac edges skip quadrature entirely.
    """

    def __init__(self, grid: Grid, network: ProcessNetwork):
        self.grid = grid
        self.network = network
        self._sets = [np.asarray(grid.vertices)]
        self._set_ids = {_points_key(self._sets[0]): 0}
        self._cov = {}
        self._dist = {}
        self._w = {}

    def add_points(self, points) -> int:
        """Register a point set and return its handle.

        Registering the same coordinates again returns the existing handle, so
        repeated predictions at fixed locations hit the covariance cache.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != self.grid.dim:
            raise ValidationError(
                f"points have dimension {points.shape[1]}, grid has {self.grid.dim}"
            )
        if not np.all(np.isfinite(points)):
            raise ValidationError("points must be finite")
        key = _points_key(points)
        idx = self._set_ids.get(key)
        if idx is None:
            self._sets.append(points)
            idx = len(self._sets) - 1
            self._set_ids[key] = idx
        return idx

    def _distance(self, i: int, j: int) -> np.ndarray:
        key = (i, j)
        if key not in self._dist:
            self._dist[key] = self.grid.metric.pairwise(self._sets[i], self._sets[j])
        return self._dist[key]

    def _weighted(self, q: int, pos: int, i: int) -> np.ndarray:
        """Quadrature-weighted interaction values of edge ``pos`` of node q,
        evaluated from point set i into the grid."""
        key = (q, pos, i)
        if key not in self._w:
            _, spec = self.network.nodes[q].parents[pos]
            vals = interaction_values(spec, self._sets[i], self.grid.vertices)
            self._w[key] = vals * self.grid.weights[None, :]
        return self._w[key]

    def cov(self, q: int, r: int, i: int = 0, j: int = 0) -> np.ndarray:
        key = (q, r, i, j)
        if key not in self._cov:
            if q > r or (q == r and i > j):
                mat = self.cov(r, q, j, i).T
            else:
                mat = self._compute(q, r, i, j)
            self._cov[key] = mat
        return self._cov[key]

    def _compute(self, q: int, r: int, i: int, j: int) -> np.ndarray:
        nodes = self.network.nodes
        if q == r:
            node = nodes[q]
            dist = self._distance(i, j)
            mat = np.asarray(matern_cov(node.covariance, dist))
            if node.nugget:
                mat = mat + node.nugget * (dist == 0.0)
            for apos, (a, sa) in enumerate(node.parents):
                if sa.kind is InteractionKind.ZERO:
                    continue
                for bpos, (b, sb) in enumerate(node.parents):
                    if sb.kind is InteractionKind.ZERO:
                        continue
                    a_dirac = sa.kind is InteractionKind.DIRAC
                    b_dirac = sb.kind is InteractionKind.DIRAC
                    if a_dirac and b_dirac:
                        mat = mat + sa.amplitude * sb.amplitude * self.cov(a, b, i, j)
                    elif a_dirac:
                        mat = mat + sa.amplitude * (
                            self.cov(a, b, i, 0) @ self._weighted(q, bpos, j).T
                        )
                    elif b_dirac:
                        mat = mat + (
                            self._weighted(q, apos, i) @ self.cov(a, b, 0, j)
                        ) * sb.amplitude
                    else:
                        mat = mat + (
                            self._weighted(q, apos, i) @ self.cov(a, b, 0, 0)
                        ) @ self._weighted(q, bpos, j).T
            return mat
        # q < r: propagate variable r's edges onto covariances with q
        shape = (self._sets[i].shape[0], self._sets[j].shape[0])
        mat = np.zeros(shape)
        for apos, (a, sa) in enumerate(nodes[r].parents):
            if sa.kind is InteractionKind.ZERO:
                continue
            if sa.kind is InteractionKind.DIRAC:
                mat = mat + sa.amplitude * self.cov(q, a, i, j)
            else:
                mat = mat + self.cov(q, a, i, 0) @ self._weighted(r, apos, j).T
        return mat


class JointModel:
    """Assembled joint covariance over the grid, plus the evaluation engine."""

    def __init__(self, grid, network, matrix, interactions, chol, jitter, evaluator):
        self.grid = grid
        self.network = network
        self.matrix = matrix
        self.interactions = interactions
        self.chol = chol
        self.jitter = jitter
        self._evaluator = evaluator

    @property
    def p(self) -> int:
        return self.network.p

    @property
    def n(self) -> int:
        return self.grid.n

    def block(self, q: int, r: int) -> np.ndarray:
        n = self.n
        return self.matrix[q * n:(q + 1) * n, r * n:(r + 1) * n]

    @property
    def evaluator(self) -> CovarianceEvaluator:
        return self._evaluator

    def __repr__(self):
        return (
            f"JointModel(p={self.p}, n={self.n}, "
            f"vars={list(self.network.names)}, jitter={self.jitter:g})"
        )


def assemble_dag(grid: Grid, network: ProcessNetwork,
                 jitter_max: float = DEFAULT_JITTER_MAX) -> JointModel:
    """Assemble the p*n x p*n joint covariance of a network over a grid.

    Validates positive semidefiniteness by Cholesky under the jitter policy;
    an InvalidModelError means the requested model is numerically outside
    the constructive class (which should not happen for finite parameters).
    """
    _check_shift_dims(grid, network)
    ev = CovarianceEvaluator(grid, network)
    p, n = network.p, grid.n
    big = np.empty((p * n, p * n))
    for q in range(p):
        for r in range(p):
            big[q * n:(q + 1) * n, r * n:(r + 1) * n] = ev.cov(q, r, 0, 0)
    # enforce exact symmetry; diagonal blocks can drift at machine precision
    # because the two parent cross terms are accumulated by separate matmuls
    big = np.tril(big) + np.tril(big, -1).T
    big.setflags(write=False)
    L, jitter = chol_model(big, jitter_max)
    interactions = {}
    for q, node in enumerate(network.nodes):
        for idx, spec in node.parents:
            interactions[(q, idx)] = build_interaction_matrix(grid, spec)
    return JointModel(grid, network, big, interactions, L, jitter, ev)


def assemble_bivariate(grid: Grid, network: ProcessNetwork,
                       jitter_max: float = DEFAULT_JITTER_MAX) -> JointModel:
    """Two-variable special case of :func:`assemble_dag` (same code path)."""
    if network.p != 2:
        raise ValidationError(
            f"assemble_bivariate needs exactly 2 variables, got {network.p}"
        )
    return assemble_dag(grid, network, jitter_max)


def _check_shift_dims(grid: Grid, network: ProcessNetwork) -> None:
    for node in network.nodes:
        for _, spec in node.parents:
            if spec.kind is InteractionKind.SHIFTED_BISQUARE \
                    and len(spec.shift) != grid.dim:
                raise ValidationError(
                    f"node {node.name!r}: shift has {len(spec.shift)} components "
                    f"for a {grid.dim}-d grid"
                )


def cross_cov_matrix(model: JointModel, q: int, r: int, S, U) -> np.ndarray:
    """cov{Y_q(S), Y_r(U)} for arbitrary location arrays S (m1, dim), U (m2, dim)."""
    p = model.p
    if not (0 <= q < p and 0 <= r < p):
        raise ValidationError(f"variable indices ({q}, {r}) out of range for p={p}")
    ev = model.evaluator
    i = ev.add_points(S)
    j = ev.add_points(U)
    return ev.cov(q, r, i, j)


def cross_cov_at(model: JointModel, q: int, r: int, s, u) -> float:
    """cov{Y_q(s), Y_r(u)} at a single pair of locations."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    return float(cross_cov_matrix(model, q, r, s[None, :], u[None, :])[0, 0])


def coordinate_covariates(locations: np.ndarray) -> dict:
    """Built-in covariates: a constant plus the coordinate axes."""
    locations = np.atleast_2d(np.asarray(locations, dtype=float))
    cols = {"const": np.ones(locations.shape[0])}
    for axis, name in enumerate(("x", "y", "z")[: locations.shape[1]]):
        cols[name] = locations[:, axis]
    return cols


def mean_at(network: ProcessNetwork, q: int, locations, covariates: Optional[dict] = None) -> np.ndarray:
    """Mean of variable q at the given locations (zero when unconfigured)."""
    locations = np.atleast_2d(np.asarray(locations, dtype=float))
    node = network.nodes[q]
    if node.mean is None:
        return np.zeros(locations.shape[0])
    table = coordinate_covariates(locations)
    if covariates:
        table.update(covariates)
    out = np.zeros(locations.shape[0])
    for name, coef in zip(node.mean.covariates, node.mean.coefficients):
        if name not in table:
            raise ValidationError(
                f"node {node.name!r}: covariate {name!r} not available; "
                f"known: {sorted(table)}"
            )
        col = np.asarray(table[name], dtype=float)
        if col.shape != (locations.shape[0],):
            raise ValidationError(
                f"covariate {name!r} has shape {col.shape}, "
                f"expected ({locations.shape[0]},)"
            )
        out = out + coef * col
    return out


def apply_mean(model: JointModel, covariates: Optional[dict] = None) -> np.ndarray:
    """Per-variable mean over the grid vertices, shape (p, n)."""
    return np.stack(
        [
            mean_at(model.network, q, model.grid.vertices, covariates)
            for q in range(model.p)
        ]
    )
