"""Family-agnostic core of order-(p, q) count models with latent feedback.

A model couples a latent recursion with an observation kernel: the next
latent value is an affine function of the last ``p`` latents and the last
``q`` *reduced* observations, and each count is drawn from a distribution
parameterized by the current latent.  Three concrete families are supported:

* ``loglin`` -- log-linear Poisson GARCH: latent in R, counts Poisson(e^x),
  reduction u = ln(1 + y);
* ``nbin``   -- NBIN-GARCH: latent >= 0, counts negative binomial with shape
  r and mean r*x, reduction u = y;
* ``parx``   -- Poisson autoregression with exogenous covariates: the latent
  is a pair (intensity, covariate vector), counts Poisson(x), covariates an
  autonomous Gaussian VAR(1), and nonnegative covariate features feed the
  intensity.

This module owns the state objects (parameter vectors, latent windows,
observation series) and the deterministic recursions: one-step link, running
iteration, and the sliding-window step that re-expresses an order-(p, q)
model as an order-(1, 1) one.  Observation kernels live in
:mod:`odmlab.families`.

Conventions
-----------
Windows are stored oldest-first: ``x = (x_{-p+1}, ..., x_0)`` and
``u = (u_{-q+1}, ..., u_{-1})``.  Coefficient ``a[i-1]`` multiplies the i-th
most recent latent and ``b[j-1]`` the j-th most recent reduced observation.
All state objects are immutable; every function here is pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

LOGLIN = "loglin"
NBIN = "nbin"
PARX = "parx"

FAMILIES = (LOGLIN, NBIN, PARX)

FEATURE_KINDS = ("square", "abs", "pos_part")


class DomainError(ValueError):
    """An argument is outside the family's domain."""


@dataclass(frozen=True)
class ModelOrder:
    """Lag counts: ``p`` latent lags, ``q`` observation lags."""

    p: int
    q: int

    def __post_init__(self):
        if self.p < 1 or self.q < 1:
            raise ValueError(f"order must satisfy p >= 1 and q >= 1, got ({self.p}, {self.q})")


def _feature_value(kind: str, v: float) -> float:
    if kind == "square":
        return v * v
    if kind == "abs":
        return abs(v)
    if kind == "pos_part":
        return v if v > 0.0 else 0.0
    raise ValueError(f"unknown feature kind {kind!r}")


@dataclass(frozen=True)
class ParxConfig:
    """Structural constants of the PARX covariate block.

    ``aleph`` drives the VAR(1) covariate recursion Xi_t = aleph Xi_{t-1}
    + sigma * N(0, I); it must have spectral radius < 1.  Feature j reads
    covariate coordinate j and maps it to a nonnegative value, so the number
    of features cannot exceed the covariate dimension.
    """

    r_dim: int
    feature_kinds: tuple[str, ...]
    aleph: tuple[tuple[float, ...], ...]
    sigma: float

    def __post_init__(self):
        if self.r_dim < 1:
            raise ValueError("covariate dimension must be >= 1")
        if not self.feature_kinds:
            raise ValueError("at least one feature is required")
        if len(self.feature_kinds) > self.r_dim:
            raise ValueError(
                f"{len(self.feature_kinds)} features but only {self.r_dim} covariate "
                "coordinates (feature j reads coordinate j)"
            )
        for k in self.feature_kinds:
            if k not in FEATURE_KINDS:
                raise ValueError(f"unknown feature kind {k!r}; choose from {FEATURE_KINDS}")
        mat = np.asarray(self.aleph, dtype=float)
        if mat.shape != (self.r_dim, self.r_dim):
            raise ValueError(f"aleph must be {self.r_dim}x{self.r_dim}, got {mat.shape}")
        if self.r_dim == 1:
            rad = abs(float(mat[0, 0]))
        else:
            rad = float(np.max(np.abs(np.linalg.eigvals(mat))))
        if rad >= 1.0:
            raise ValueError(f"aleph spectral radius {rad:.6g} >= 1; covariates would not be stable")
        if not self.sigma > 0.0:
            raise ValueError("sigma must be > 0")

    @property
    def d(self) -> int:
        return len(self.feature_kinds)

    def aleph_matrix(self) -> np.ndarray:
        return np.asarray(self.aleph, dtype=float)

    def feature_values(self, xi: Sequence[float]) -> tuple[float, ...]:
        if len(xi) != self.r_dim:
            raise DomainError(f"covariate vector has length {len(xi)}, expected {self.r_dim}")
        return tuple(_feature_value(k, float(xi[j])) for j, k in enumerate(self.feature_kinds))


@dataclass(frozen=True)
class ModelSpec:
    """Family tag plus order and, for PARX, the covariate block constants."""

    family: str
    order: ModelOrder
    parx: Optional[ParxConfig] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        if self.family == PARX and self.parx is None:
            raise ValueError("PARX requires a ParxConfig")
        if self.family != PARX and self.parx is not None:
            raise ValueError(f"family {self.family!r} takes no ParxConfig")

    @property
    def p(self) -> int:
        return self.order.p

    @property
    def q(self) -> int:
        return self.order.q

    def params(self, omega, a, b, r=None, gamma=None) -> "ParameterVector":
        """Build and validate a parameter vector for this family."""
        theta = ParameterVector(
            omega=float(omega),
            a=tuple(float(v) for v in a),
            b=tuple(float(v) for v in b),
            r=None if r is None else float(r),
            gamma=None if gamma is None else tuple(float(v) for v in gamma),
        )
        validate_params(self, theta)
        return theta


@dataclass(frozen=True)
class ParameterVector:
    """Coefficients (omega, a[1..p], b[1..q]) plus the family extension.

    ``r`` is the NBIN shape parameter; ``gamma`` the PARX feature weights.
    Use :meth:`ModelSpec.params` to construct validated instances.
    """

    omega: float
    a: tuple[float, ...]
    b: tuple[float, ...]
    r: Optional[float] = None
    gamma: Optional[tuple[float, ...]] = None


def validate_params(spec: ModelSpec, theta: ParameterVector) -> None:
    """Raise ``DomainError`` unless ``theta`` satisfies the family constraints."""
    if len(theta.a) != spec.p or len(theta.b) != spec.q:
        raise DomainError(
            f"coefficient lengths ({len(theta.a)}, {len(theta.b)}) do not match order "
            f"({spec.p}, {spec.q})"
        )
    fam = spec.family
    if fam == LOGLIN:
        if theta.r is not None or theta.gamma is not None:
            raise DomainError("log-linear parameters carry no r or gamma")
        return
    if not theta.omega > 0.0:
        raise DomainError(f"{fam} requires omega > 0, got {theta.omega}")
    if any(v < 0.0 for v in theta.a) or any(v < 0.0 for v in theta.b):
        raise DomainError(f"{fam} requires a, b >= 0 elementwise")
    if fam == NBIN:
        if theta.gamma is not None:
            raise DomainError("NBIN parameters carry no gamma")
        if theta.r is None or not theta.r > 0.0:
            raise DomainError(f"NBIN requires shape r > 0, got {theta.r}")
    else:  # PARX
        if theta.r is not None:
            raise DomainError("PARX parameters carry no r")
        if theta.gamma is None or len(theta.gamma) != spec.parx.d:
            raise DomainError(f"PARX requires gamma of length {spec.parx.d}")
        if any(g < 0.0 for g in theta.gamma):
            raise DomainError("PARX requires gamma >= 0 elementwise")


def param_names(spec: ModelSpec) -> tuple[str, ...]:
    names = ["omega"]
    names += [f"a{i}" for i in range(1, spec.p + 1)]
    names += [f"b{i}" for i in range(1, spec.q + 1)]
    if spec.family == NBIN:
        names.append("r")
    elif spec.family == PARX:
        names += [f"gamma{i}" for i in range(1, spec.parx.d + 1)]
    return tuple(names)


def pack_params(spec: ModelSpec, theta: ParameterVector) -> np.ndarray:
    vec = [theta.omega, *theta.a, *theta.b]
    if spec.family == NBIN:
        vec.append(theta.r)
    elif spec.family == PARX:
        vec.extend(theta.gamma)
    return np.asarray(vec, dtype=float)


def unpack_params(spec: ModelSpec, vec: Sequence[float]) -> ParameterVector:
    vec = [float(v) for v in vec]
    p, q = spec.p, spec.q
    expected = 1 + p + q + (1 if spec.family == NBIN else 0) + (
        spec.parx.d if spec.family == PARX else 0
    )
    if len(vec) != expected:
        raise ValueError(f"expected {expected} parameters for {spec.family}, got {len(vec)}")
    omega, a, b = vec[0], tuple(vec[1 : 1 + p]), tuple(vec[1 + p : 1 + p + q])
    r = vec[1 + p + q] if spec.family == NBIN else None
    gamma = tuple(vec[1 + p + q :]) if spec.family == PARX else None
    return ParameterVector(omega=omega, a=a, b=b, r=r, gamma=gamma)


@dataclass(frozen=True)
class LatentWindow:
    """The running state: last ``p`` latents and last ``q - 1`` reduced observations.

    Scalar families store floats.  PARX stores pairs ``(x, xi)`` in ``x`` and
    triples ``(y, features, xi)`` in ``u``, each component a float or tuple.
    """

    x: tuple
    u: tuple


def validate_window(spec: ModelSpec, z: LatentWindow) -> None:
    if len(z.x) != spec.p or len(z.u) != spec.q - 1:
        raise DomainError(
            f"window shape ({len(z.x)}, {len(z.u)}) does not match order "
            f"({spec.p}, {spec.q - 1} stored reductions)"
        )
    if spec.family == NBIN:
        if any(v < 0.0 for v in z.x) or any(v < 0.0 for v in z.u):
            raise DomainError("NBIN window entries must be >= 0")
    elif spec.family == PARX:
        for e in z.x:
            if e[0] < 0.0 or len(e[1]) != spec.parx.r_dim:
                raise DomainError("PARX latent entries must be (x >= 0, xi of length r)")
        for e in z.u:
            if e[0] < 0.0 or len(e[1]) != spec.parx.d or len(e[2]) != spec.parx.r_dim:
                raise DomainError("PARX reduced entries must be (y >= 0, features, xi)")


@dataclass(frozen=True)
class ObservationSeries:
    """Counts ``y_0..y_n`` plus, for PARX only, aligned covariate rows."""

    y: tuple[int, ...]
    covariates: Optional[tuple[tuple[float, ...], ...]] = None

    def __post_init__(self):
        if len(self.y) < 1:
            raise ValueError("series must contain at least one observation")
        for v in self.y:
            if v < 0 or v != int(v):
                raise DomainError(f"counts must be nonnegative integers, got {v!r}")
        if self.covariates is not None and len(self.covariates) != len(self.y):
            raise ValueError(
                f"{len(self.covariates)} covariate rows for {len(self.y)} observations"
            )

    @property
    def n(self) -> int:
        """Number of likelihood terms; the series holds n + 1 observations."""
        return len(self.y) - 1


def check_series(spec: ModelSpec, series: ObservationSeries) -> None:
    if spec.family == PARX:
        if series.covariates is None:
            raise DomainError("PARX series requires covariate rows")
        if any(len(row) != spec.parx.r_dim for row in series.covariates):
            raise DomainError(f"covariate rows must have length {spec.parx.r_dim}")
    elif series.covariates is not None:
        raise DomainError(f"family {spec.family!r} takes no covariates")


# --- reductions and link steps ------------------------------------------------
#
# All code paths that advance the latent recursion funnel through
# _affine_scalar / _affine_parx so that the one-step link, the sliding-window
# step and the running iteration produce bitwise identical values.


def reduce(spec: ModelSpec, y):
    """Apply the family's observation reduction.

    loglin: ln(1 + y); nbin: y; parx: (y, feature values, xi) where the input
    is the pair (count, covariate row).
    """
    if spec.family == PARX:
        count, xi = y
        if count < 0:
            raise DomainError(f"negative count {count}")
        xi = tuple(float(v) for v in xi)
        return (float(count), spec.parx.feature_values(xi), xi)
    if y < 0:
        raise DomainError(f"negative count {y}")
    if spec.family == LOGLIN:
        return math.log1p(y)
    return float(y)


def _affine_scalar(omega: float, a, b, xw, uw) -> float:
    # xw has >= len(a) entries newest-last; uw has >= len(b) entries newest-last.
    acc = omega
    i = 1
    for ai in a:
        acc += ai * xw[-i]
        i += 1
    j = 1
    for bj in b:
        acc += bj * uw[-j]
        j += 1
    return acc


def _affine_parx(omega: float, a, b, gamma, xw, yw, f_new) -> float:
    # Same layout as _affine_scalar; the feature block of the newest reduced
    # observation is the only one that enters (block-matrix structure of the
    # PARX link).
    acc = omega
    i = 1
    for ai in a:
        acc += ai * xw[-i]
        i += 1
    j = 1
    for bj in b:
        acc += bj * yw[-j]
        j += 1
    m = 0
    for gm in gamma:
        acc += gm * f_new[m]
        m += 1
    return acc


def link_step(spec: ModelSpec, theta: ParameterVector, z: LatentWindow, u_now):
    """One application of the affine link: the next latent value.

    ``u_now`` is a reduced observation (output of :func:`reduce`).  For PARX
    the returned latent is the pair (intensity, covariate row of ``u_now``).
    """
    if spec.family == PARX:
        y_now, f_now, xi_now = u_now
        xw = [e[0] for e in z.x]
        yw = [e[0] for e in z.u] + [y_now]
        val = _affine_parx(theta.omega, theta.a, theta.b, theta.gamma, xw, yw, f_now)
        return (val, xi_now)
    uw = list(z.u) + [u_now]
    return _affine_scalar(theta.omega, theta.a, theta.b, z.x, uw)


def embed_step(spec: ModelSpec, theta: ParameterVector, z: LatentWindow, y) -> LatentWindow:
    """Slide the window one observation forward (the order-(1,1) view).

    The last latent entry of the result equals ``link_step`` on the same
    inputs, and folding this map over ``y_0..y_{k-1}`` then projecting
    reproduces :func:`iterate_latent` exactly.
    """
    u_now = reduce(spec, y)
    x_new = link_step(spec, theta, z, u_now)
    new_x = z.x[1:] + (x_new,)
    new_u = (z.u + (u_now,))[1:] if spec.q > 1 else ()
    return LatentWindow(x=new_x, u=new_u)


def project_latent(spec: ModelSpec, z: LatentWindow):
    """The current latent value (the newest window entry)."""
    return z.x[-1]


def iterate_latent(spec: ModelSpec, theta: ParameterVector, z_init: LatentWindow, y_prefix):
    """Run the latent recursion through ``y_prefix`` and return the final latent.

    With an empty prefix this is the projection of the initial window.  The
    pass is a single left-to-right sweep over the observations with O(p + q)
    state, sharing its arithmetic with :func:`embed_step`.
    """
    if spec.family == PARX:
        xw = [e[0] for e in z_init.x]
        yw = [e[0] for e in z_init.u]
        xi_last = z_init.x[-1][1]
        for ybar in y_prefix:
            y_now, f_now, xi_now = reduce(spec, ybar)
            yw.append(y_now)
            x_new = _affine_parx(theta.omega, theta.a, theta.b, theta.gamma, xw, yw, f_now)
            xw.append(x_new)
            xi_last = xi_now
            if len(xw) > spec.p:
                del xw[0]
            if len(yw) > spec.q - 1:
                del yw[0]
        if len(y_prefix) == 0:
            return z_init.x[-1]
        return (xw[-1], xi_last)
    xw = list(z_init.x)
    uw = list(z_init.u)
    for y in y_prefix:
        uw.append(reduce(spec, y))
        x_new = _affine_scalar(theta.omega, theta.a, theta.b, xw, uw)
        xw.append(x_new)
        if len(xw) > spec.p:
            del xw[0]
        if len(uw) > spec.q - 1:
            del uw[0]
    return xw[-1]


def constant_window(spec: ModelSpec, x1, y1, xi1=None) -> LatentWindow:
    """Window with every latent entry ``x1`` and every reduction built from ``y1``."""
    if spec.family == PARX:
        xi1 = tuple(float(v) for v in (xi1 if xi1 is not None else (0.0,) * spec.parx.r_dim))
        u1 = reduce(spec, (y1, xi1))
        return LatentWindow(x=((float(x1), xi1),) * spec.p, u=(u1,) * (spec.q - 1))
    u1 = reduce(spec, y1)
    return LatentWindow(x=(float(x1),) * spec.p, u=(u1,) * (spec.q - 1))


def default_initial_window(spec: ModelSpec, series: ObservationSeries) -> LatentWindow:
    """Data-scaled starting window for likelihood evaluation.

    log-linear: all zeros.  NBIN/PARX: latent entries at the sample mean of
    the counts (floored at 1e-6 to stay strictly positive), reductions built
    from the first observation.  Any admissible point is allowed; these
    defaults just shorten the transient.
    """
    check_series(spec, series)
    if spec.family == LOGLIN:
        return constant_window(spec, 0.0, 0)
    x1 = max(sum(series.y) / len(series.y), 1e-6)
    if spec.family == NBIN:
        return constant_window(spec, x1, series.y[0])
    return constant_window(spec, x1, series.y[0], xi1=series.covariates[0])
