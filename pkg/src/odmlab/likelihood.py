"""Exact conditional log-likelihood and its gradient.

One forward pass over the observations maintains the latent window and sums
the per-term count log-densities; the first observation only conditions the
recursion and contributes no term.  The gradient runs the same pass while
propagating the latent's derivative with respect to every parameter (the
initial window is treated as parameter-free), then chains the density
derivatives through the latent path.  Both cost O(n * (p + q)) like the
likelihood itself.

The module keeps a private prepared form of (series, initial window) so the
optimizer can evaluate many parameter points without re-reducing the data;
the public functions prepare on the fly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import digamma

from .families import CLAMP_HI, CLAMP_LO, _clamped, covariate_log_density, lnfact
from .model import (
    LOGLIN,
    NBIN,
    PARX,
    LatentWindow,
    ModelSpec,
    ObservationSeries,
    ParameterVector,
    check_series,
    pack_params,
    reduce,
    unpack_params,
    validate_params,
    validate_window,
)


class GradientUndefinedError(ValueError):
    """The log-likelihood is -inf (or non-finite) at this point."""


@dataclass(frozen=True)
class LikelihoodValue:
    """Normalized and total conditional log-likelihood with diagnostics.

    ``per_term`` holds the n per-observation terms and ``latent_path`` the
    n + 1 latent values x_0..x_n (intensity component for PARX); both are
    dropped in streaming mode.  ``bad_term`` names the first k whose term is
    -inf or non-finite, in which case ``total`` is -inf.
    """

    normalized: float
    total: float
    n: int
    per_term: Optional[tuple[float, ...]] = None
    latent_path: Optional[tuple[float, ...]] = None
    bad_term: Optional[int] = None


@dataclass(frozen=True)
class _Prepared:
    """Reduced data and seed buffers, independent of the parameter point."""

    n: int
    y: tuple[int, ...]
    u: Optional[tuple[float, ...]]  # scalar families: reduced observations
    feats: Optional[tuple[tuple[float, ...], ...]]  # PARX feature rows
    lnf: tuple[float, ...]  # ln(y_k!) for k = 1..n
    xw0: tuple[float, ...]
    uw0: tuple[float, ...]
    covariates: Optional[tuple[tuple[float, ...], ...]]


def _prepare(spec: ModelSpec, z_init: LatentWindow, series: ObservationSeries) -> _Prepared:
    validate_window(spec, z_init)
    check_series(spec, series)
    n = series.n
    if n < 1:
        raise ValueError("need at least two observations (n >= 1 likelihood terms)")
    y = tuple(int(v) for v in series.y)
    cache: dict[int, float] = {}
    for v in y:
        if v not in cache:
            cache[v] = lnfact(v)
    lnf = tuple(cache[v] for v in y[1:])
    if spec.family == PARX:
        feats = tuple(spec.parx.feature_values(row) for row in series.covariates)
        xw0 = tuple(e[0] for e in z_init.x)
        uw0 = tuple(e[0] for e in z_init.u)
        return _Prepared(n, y, None, feats, lnf, xw0, uw0, series.covariates)
    if spec.family == LOGLIN:
        u = tuple(math.log1p(v) for v in y)
    else:
        u = tuple(float(v) for v in y)
    return _Prepared(n, y, u, None, lnf, tuple(z_init.x), tuple(z_init.u), None)


def _loglik_prepared(
    spec: ModelSpec,
    theta: ParameterVector,
    prep: _Prepared,
    keep_path: bool,
    include_covariate_density: bool,
) -> LikelihoodValue:
    n = prep.n
    omega, a, b = theta.omega, theta.a, theta.b
    p, q = spec.p, spec.q
    pq1 = p == 1 and q == 1
    y = prep.y
    lnf = prep.lnf
    per = [] if keep_path else None
    path = [prep.xw0[-1]] if keep_path else None
    total = 0.0
    bad = None
    exp = math.exp
    log = math.log
    log1p = math.log1p
    isfinite = math.isfinite

    if spec.family == PARX:
        gamma = theta.gamma
        feats = prep.feats
        xw = list(prep.xw0)
        yw = list(prep.uw0)
        a1 = a[0] if pq1 else 0.0
        b1 = b[0] if pq1 else 0.0
        x = xw[-1]
        for k in range(1, n + 1):
            f_now = feats[k - 1]
            if pq1:
                acc = omega
                acc += a1 * x
                acc += b1 * float(y[k - 1])
                for m in range(len(gamma)):
                    acc += gamma[m] * f_now[m]
                x = acc
            else:
                yw.append(float(y[k - 1]))
                acc = omega
                i = 1
                for ai in a:
                    acc += ai * xw[-i]
                    i += 1
                j = 1
                for bj in b:
                    acc += bj * yw[-j]
                    j += 1
                for m in range(len(gamma)):
                    acc += gamma[m] * f_now[m]
                x = acc
                xw.append(x)
                del xw[0]
                del yw[0]
            if keep_path:
                path.append(x)
            yk = y[k]
            if x > 0.0 and isfinite(x):
                term = -x + yk * log(x) - lnf[k - 1]
            elif x == 0.0:
                term = 0.0 if yk == 0 else -math.inf
            else:
                term = -math.inf
            if include_covariate_density:
                term += covariate_log_density(
                    spec, prep.covariates[k - 1], prep.covariates[k]
                )
            if keep_path:
                per.append(term)
            if not isfinite(term):
                bad = k
                total = -math.inf
                break
            total += term
    elif spec.family == LOGLIN:
        u = prep.u
        if pq1:
            a1, b1 = a[0], b[0]
            x = prep.xw0[-1]
            for k in range(1, n + 1):
                acc = omega
                acc += a1 * x
                acc += b1 * u[k - 1]
                x = acc
                if keep_path:
                    path.append(x)
                yk = y[k]
                xc = x if CLAMP_LO <= x <= CLAMP_HI else _clamped(x)
                term = -exp(xc) + yk * xc - lnf[k - 1]
                if keep_path:
                    per.append(term)
                if not isfinite(term):
                    bad = k
                    total = -math.inf
                    break
                total += term
        else:
            xw = list(prep.xw0)
            uw = list(prep.uw0)
            for k in range(1, n + 1):
                uw.append(u[k - 1])
                acc = omega
                i = 1
                for ai in a:
                    acc += ai * xw[-i]
                    i += 1
                j = 1
                for bj in b:
                    acc += bj * uw[-j]
                    j += 1
                x = acc
                xw.append(x)
                del xw[0]
                del uw[0]
                if keep_path:
                    path.append(x)
                yk = y[k]
                xc = x if CLAMP_LO <= x <= CLAMP_HI else _clamped(x)
                term = -exp(xc) + yk * xc - lnf[k - 1]
                if keep_path:
                    per.append(term)
                if not isfinite(term):
                    bad = k
                    total = -math.inf
                    break
                total += term
    else:  # NBIN
        u = prep.u
        r = theta.r
        lgamma_r = math.lgamma(r)
        # Per distinct count: lgamma(r + y) - ln y! - lgamma(r), associated
        # exactly as in families.log_density.
        head: dict[int, float] = {}
        for v in set(y[1:]):
            head[v] = math.lgamma(r + v) - lnfact(v) - lgamma_r
        xw = list(prep.xw0)
        uw = list(prep.uw0)
        x = xw[-1]
        a1 = a[0] if pq1 else 0.0
        b1 = b[0] if pq1 else 0.0
        for k in range(1, n + 1):
            if pq1:
                acc = omega
                acc += a1 * x
                acc += b1 * u[k - 1]
                x = acc
            else:
                uw.append(u[k - 1])
                acc = omega
                i = 1
                for ai in a:
                    acc += ai * xw[-i]
                    i += 1
                j = 1
                for bj in b:
                    acc += bj * uw[-j]
                    j += 1
                x = acc
                xw.append(x)
                del xw[0]
                del uw[0]
            if keep_path:
                path.append(x)
            yk = y[k]
            if x > 0.0 and isfinite(x):
                l1 = log1p(x)
                term = head[yk] - r * l1 + yk * log(x) - yk * l1
            elif x == 0.0:
                term = 0.0 if yk == 0 else -math.inf
            else:
                term = -math.inf
            if keep_path:
                per.append(term)
            if not isfinite(term):
                bad = k
                total = -math.inf
                break
            total += term

    return LikelihoodValue(
        normalized=total / n,
        total=total,
        n=n,
        per_term=None if per is None else tuple(per),
        latent_path=None if path is None else tuple(path),
        bad_term=bad,
    )


def loglik(
    spec: ModelSpec,
    theta: ParameterVector,
    z_init: LatentWindow,
    series: ObservationSeries,
    keep_path: bool = True,
    include_covariate_density: bool = False,
) -> LikelihoodValue:
    """Conditional log-likelihood of ``series`` given the initial window.

    ``include_covariate_density`` (PARX only) re-adds the parameter-free
    covariate transition terms for total log-likelihood reporting; it shifts
    the value by a constant in theta and never moves the maximizer.
    """
    validate_params(spec, theta)
    if include_covariate_density and spec.family != PARX:
        raise ValueError("covariate density applies to PARX only")
    prep = _prepare(spec, z_init, series)
    return _loglik_prepared(spec, theta, prep, keep_path, include_covariate_density)


def _grad_prepared(spec: ModelSpec, theta: ParameterVector, prep: _Prepared) -> np.ndarray:
    n = prep.n
    omega, a, b = theta.omega, theta.a, theta.b
    p, q = spec.p, spec.q
    y = prep.y

    if spec.family == PARX:
        gamma = theta.gamma
        feats = prep.feats
        d = len(gamma)
        dim = 1 + p + q + d
        xw = list(prep.xw0)
        yw = list(prep.uw0)
        sbuf = [[0.0] * dim for _ in range(p)]
        grad = [0.0] * dim
        for k in range(1, n + 1):
            yw.append(float(y[k - 1]))
            acc = omega
            i = 1
            for ai in a:
                acc += ai * xw[-i]
                i += 1
            j = 1
            for bj in b:
                acc += bj * yw[-j]
                j += 1
            f_now = feats[k - 1]
            for m in range(d):
                acc += gamma[m] * f_now[m]
            x = acc
            s_new = [0.0] * dim
            s_new[0] = 1.0
            for m in range(1, p + 1):
                s_new[m] = xw[-m]
            for m in range(1, q + 1):
                s_new[p + m] = yw[-m]
            for m in range(d):
                s_new[1 + p + q + m] = f_now[m]
            for i in range(1, p + 1):
                ai = a[i - 1]
                if ai != 0.0:
                    si = sbuf[-i]
                    for c in range(dim):
                        s_new[c] += ai * si[c]
            if not (x > 0.0 and math.isfinite(x)):
                raise GradientUndefinedError(
                    f"latent {x!r} at term {k} makes the gradient undefined"
                )
            gl = y[k] / x - 1.0
            for c in range(dim):
                grad[c] += gl * s_new[c]
            sbuf.append(s_new)
            del sbuf[0]
            xw.append(x)
            del xw[0]
            del yw[0]
        return np.array(grad) / n

    u = prep.u
    loglin = spec.family == LOGLIN
    r = theta.r
    dim_lat = 1 + p + q
    dim = dim_lat + (0 if loglin else 1)
    xw = list(prep.xw0)
    uw = list(prep.uw0)
    sbuf = [[0.0] * dim_lat for _ in range(p)]
    grad = [0.0] * dim
    if not loglin:
        dig_r = float(digamma(r))
        dig = {v: float(digamma(r + v)) for v in set(y[1:])}
    for k in range(1, n + 1):
        uw.append(u[k - 1])
        acc = omega
        i = 1
        for ai in a:
            acc += ai * xw[-i]
            i += 1
        j = 1
        for bj in b:
            acc += bj * uw[-j]
            j += 1
        x = acc
        s_new = [0.0] * dim_lat
        s_new[0] = 1.0
        for m in range(1, p + 1):
            s_new[m] = xw[-m]
        for m in range(1, q + 1):
            s_new[p + m] = uw[-m]
        for i in range(1, p + 1):
            ai = a[i - 1]
            if ai != 0.0:
                si = sbuf[-i]
                for c in range(dim_lat):
                    s_new[c] += ai * si[c]
        yk = y[k]
        if loglin:
            if not (CLAMP_LO <= x <= CLAMP_HI):
                raise GradientUndefinedError(
                    f"latent {x!r} at term {k} is clamped; gradient undefined there"
                )
            gl = yk - math.exp(x)
        else:
            if not (x > 0.0 and math.isfinite(x)):
                raise GradientUndefinedError(
                    f"latent {x!r} at term {k} makes the gradient undefined"
                )
            gl = yk / x - (r + yk) / (1.0 + x)
            grad[dim_lat] += dig[yk] - dig_r - math.log1p(x)
        for c in range(dim_lat):
            grad[c] += gl * s_new[c]
        sbuf.append(s_new)
        del sbuf[0]
        xw.append(x)
        del xw[0]
        del uw[0]
    return np.array(grad) / n


def grad_loglik(
    spec: ModelSpec,
    theta: ParameterVector,
    z_init: LatentWindow,
    series: ObservationSeries,
) -> np.ndarray:
    """Exact gradient of the normalized log-likelihood in packed order.

    Packed order is (omega, a_1..a_p, b_1..b_q, r | gamma_1..gamma_d).  The
    latent derivative recursion is seeded at zero (the initial window does
    not depend on the parameters); the NBIN shape enters only through the
    per-term density derivative.
    """
    validate_params(spec, theta)
    prep = _prepare(spec, z_init, series)
    return _grad_prepared(spec, theta, prep)


def finite_diff_grad(
    spec: ModelSpec,
    theta: ParameterVector,
    z_init: LatentWindow,
    series: ObservationSeries,
    step: Optional[float] = None,
) -> np.ndarray:
    """Central finite differences of the normalized log-likelihood.

    Deliberately independent of :func:`grad_loglik`; per-coordinate step
    defaults to 1e-6 * (1 + |theta_j|).
    """
    vec = pack_params(spec, theta)
    out = np.zeros_like(vec)
    for j in range(len(vec)):
        h = step if step is not None else 1e-6 * (1.0 + abs(vec[j]))
        hi = vec.copy()
        lo = vec.copy()
        hi[j] += h
        lo[j] -= h
        f_hi = loglik(spec, unpack_params(spec, hi), z_init, series, keep_path=False)
        f_lo = loglik(spec, unpack_params(spec, lo), z_init, series, keep_path=False)
        out[j] = (f_hi.normalized - f_lo.normalized) / (2.0 * h)
    return out
