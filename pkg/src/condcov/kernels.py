"""Univariate Matern covariances and interaction functions.

The Matern family is the only stationary kernel shipped; everything else in
the package composes it. Interaction functions b(s, v) describe how a
conditioning variable at v drives the conditioned variable at s. They are
evaluated in raw coordinate (displacement) space, never through a metric, so
the same machinery works on lon-lat meshes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.special import gamma as _gamma
from scipy.special import kv as _kv

from .errors import ParameterError, ValidationError

__all__ = [
    "MaternParams",
    "matern_cov",
    "InteractionKind",
    "InteractionSpec",
    "TabulatedValues",
    "zero",
    "dirac",
    "bisquare",
    "shifted_bisquare",
    "tabulated",
    "interaction_eval",
    "interaction_values",
    "load_tabulated",
]


@dataclass(frozen=True)
class MaternParams:
    """Matern covariance parameters: sill, inverse range and smoothness."""

    variance: float
    scale: float
    smoothness: float

    def __post_init__(self):
        for field in ("variance", "scale", "smoothness"):
            val = getattr(self, field)
            if not np.isfinite(val) or val <= 0:
                raise ParameterError(
                    f"matern {field} must be finite and positive, got {val!r}"
                )


def matern_cov(params: MaternParams, d) -> Union[float, np.ndarray]:
    """Matern covariance at distance d (scalar or array, in metric units).

    C(d) = variance / (2^(nu-1) Gamma(nu)) * (scale*d)^nu * K_nu(scale*d),
    with the d = 0 limit handled analytically. Half-integer smoothness
    0.5 / 1.5 / 2.5 uses the closed exponential forms.
    """
    d_arr = np.asarray(d, dtype=float)
    if not np.all(np.isfinite(d_arr)) or np.any(d_arr < 0):
        raise ParameterError("distances must be finite and nonnegative")
    x = params.scale * d_arr
    nu = params.smoothness
    if nu == 0.5:
        corr = np.exp(-x)
    elif nu == 1.5:
        corr = (1.0 + x) * np.exp(-x)
    elif nu == 2.5:
        corr = (1.0 + x + x * x / 3.0) * np.exp(-x)
    else:
        with np.errstate(invalid="ignore", over="ignore"):
            corr = (2.0 ** (1.0 - nu) / _gamma(nu)) * np.power(x, nu) * _kv(nu, x)
        # kv overflows for tiny arguments and underflows for huge ones; both
        # limits are known, so patch the non-finite entries instead of failing
        corr = np.where(np.isfinite(corr), corr, np.where(x < 1.0, 1.0, 0.0))
    out = params.variance * corr
    if np.ndim(d) == 0:
        return float(out)
    return out


class InteractionKind(Enum):
    ZERO = "zero"
    DIRAC = "dirac"
    BISQUARE = "bisquare"
    SHIFTED_BISQUARE = "shifted_bisquare"
    TABULATED = "tabulated"


class TabulatedValues:
    """Dense table of b(s, v) on a product grid of 1-d s and v axes.

    Lookup is bilinear in the (s, v) plane and extrapolates to zero outside
    the table, which keeps the interaction integrable.
    """

    def __init__(self, s_axis, v_axis, values):
        s_axis = np.asarray(s_axis, dtype=float)
        v_axis = np.asarray(v_axis, dtype=float)
        values = np.asarray(values, dtype=float)
        if s_axis.ndim != 1 or v_axis.ndim != 1:
            raise ValidationError("table axes must be one dimensional")
        if np.any(np.diff(s_axis) <= 0) or np.any(np.diff(v_axis) <= 0):
            raise ValidationError("table axes must be strictly increasing")
        if values.shape != (s_axis.size, v_axis.size):
            raise ValidationError(
                f"table shape {values.shape} does not match axes "
                f"({s_axis.size}, {v_axis.size})"
            )
        if not np.all(np.isfinite(values)):
            raise ValidationError("table values must be finite")
        self.s_axis = s_axis
        self.v_axis = v_axis
        self.values = values
        self._interp = RegularGridInterpolator(
            (s_axis, v_axis), values, method="linear",
            bounds_error=False, fill_value=0.0,
        )

    def __call__(self, s, v):
        pts = np.stack([np.broadcast_to(s, np.shape(v)), v], axis=-1) \
            if np.shape(s) != np.shape(v) else np.stack([s, v], axis=-1)
        return self._interp(pts)

    def __eq__(self, other):
        if not isinstance(other, TabulatedValues):
            return NotImplemented
        return (
            np.array_equal(self.s_axis, other.s_axis)
            and np.array_equal(self.v_axis, other.v_axis)
            and np.array_equal(self.values, other.values)
        )


@dataclass(frozen=True)
class InteractionSpec:
    """One interaction function. Use the module factories to build these."""

    kind: InteractionKind
    amplitude: float = 0.0
    aperture: Optional[float] = None
    shift: Optional[tuple] = None
    table: Optional[TabulatedValues] = None

    def __post_init__(self):
        k = self.kind
        if k in (InteractionKind.DIRAC, InteractionKind.BISQUARE,
                 InteractionKind.SHIFTED_BISQUARE):
            if not np.isfinite(self.amplitude):
                raise ParameterError(f"amplitude must be finite, got {self.amplitude!r}")
        if k in (InteractionKind.BISQUARE, InteractionKind.SHIFTED_BISQUARE):
            if self.aperture is None or not np.isfinite(self.aperture) or self.aperture <= 0:
                raise ParameterError(
                    f"aperture must be finite and positive, got {self.aperture!r}"
                )
        if k is InteractionKind.SHIFTED_BISQUARE:
            if self.shift is None or len(self.shift) == 0 \
                    or not np.all(np.isfinite(self.shift)):
                raise ParameterError(f"shift must be a finite vector, got {self.shift!r}")
        if k is InteractionKind.TABULATED and self.table is None:
            raise ParameterError("tabulated interactions need a value table")


def zero() -> InteractionSpec:
    return InteractionSpec(InteractionKind.ZERO)


def dirac(amplitude: float) -> InteractionSpec:
    return InteractionSpec(InteractionKind.DIRAC, amplitude=float(amplitude))


def bisquare(amplitude: float, aperture: float) -> InteractionSpec:
    return InteractionSpec(
        InteractionKind.BISQUARE, amplitude=float(amplitude), aperture=float(aperture)
    )


def shifted_bisquare(amplitude: float, aperture: float, shift) -> InteractionSpec:
    shift_t = tuple(float(c) for c in np.atleast_1d(shift))
    return InteractionSpec(
        InteractionKind.SHIFTED_BISQUARE,
        amplitude=float(amplitude), aperture=float(aperture), shift=shift_t,
    )


def tabulated(s_axis, v_axis, values) -> InteractionSpec:
    return InteractionSpec(
        InteractionKind.TABULATED, table=TabulatedValues(s_axis, v_axis, values)
    )


def interaction_values(spec: InteractionSpec, S, V) -> np.ndarray:
    """Matrix of b(S[i], V[j]) for location arrays S (m, dim) and V (n, dim)."""
    S = np.atleast_2d(np.asarray(S, dtype=float))
    V = np.atleast_2d(np.asarray(V, dtype=float))
    if S.shape[1] != V.shape[1]:
        raise ValidationError(
            f"location dimensions differ: {S.shape[1]} vs {V.shape[1]}"
        )
    kind = spec.kind
    if kind is InteractionKind.ZERO:
        return np.zeros((S.shape[0], V.shape[0]))
    if kind is InteractionKind.DIRAC:
        raise ParameterError(
            "dirac interactions have no pointwise values; they contract to "
            "amplitude * identity at assembly time"
        )
    if kind is InteractionKind.TABULATED:
        if S.shape[1] != 1:
            raise ValidationError(
                "tabulated interactions support one dimensional locations only"
            )
        ss = np.broadcast_to(S[:, None, 0], (S.shape[0], V.shape[0]))
        vv = np.broadcast_to(V[None, :, 0], (S.shape[0], V.shape[0]))
        return np.asarray(spec.table(ss, vv))
    # bisquare family: displacement h = v - s, optionally recentred by a shift
    h = V[None, :, :] - S[:, None, :]
    if kind is InteractionKind.SHIFTED_BISQUARE:
        shift = np.asarray(spec.shift, dtype=float)
        if shift.size != S.shape[1]:
            raise ValidationError(
                f"shift has {shift.size} components for {S.shape[1]}-d locations"
            )
        h = h - shift
    u2 = np.einsum("mnd,mnd->mn", h, h) / (spec.aperture ** 2)
    out = np.zeros(u2.shape)
    inside = u2 <= 1.0
    out[inside] = spec.amplitude * (1.0 - u2[inside]) ** 2
    return out


def interaction_eval(spec: InteractionSpec, s, v) -> float:
    """b(s, v) for a single pair of locations."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    return float(interaction_values(spec, s[None, :], v[None, :])[0, 0])


def load_tabulated(path) -> InteractionSpec:
    """Load a tabulated interaction from CSV with header ``s,v,value``.

    Rows must cover a complete product grid of the distinct s and v values.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != ["s", "v", "value"]:
            raise ValidationError(
                f"{path}: expected header 's,v,value', got {reader.fieldnames}"
            )
        rows = [(float(r["s"]), float(r["v"]), float(r["value"])) for r in reader]
    if not rows:
        raise ValidationError(f"{path}: empty interaction table")
    s_axis = np.unique([r[0] for r in rows])
    v_axis = np.unique([r[1] for r in rows])
    values = np.full((s_axis.size, v_axis.size), np.nan)
    si = {s: i for i, s in enumerate(s_axis)}
    vi = {v: j for j, v in enumerate(v_axis)}
    for s, v, val in rows:
        values[si[s], vi[v]] = val
    if np.any(np.isnan(values)):
        raise ValidationError(
            f"{path}: rows do not form a complete s x v product grid"
        )
    return tabulated(s_axis, v_axis, values)
