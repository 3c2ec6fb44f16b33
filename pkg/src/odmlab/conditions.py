"""Stability, ergodicity, and identifiability audits.

Each checker returns a :class:`ConditionReport` with a three-way verdict:

* ``Pass``          -- a sufficient condition held;
* ``Fail``          -- a necessary condition was violated;
* ``Inconclusive``  -- necessary conditions hold but no implemented
  sufficient criterion could certify stability (log-linear only; the NBIN
  and PARX inequalities are sharp, so their verdicts are binary).

For the log-linear family the latent recursion switches its coefficients
with the observed zero pattern, so deciding stability exactly is a joint
spectral radius question.  The checker layers three things: closed-form
necessary root conditions, a closed-form sufficient coefficient bound, and a
finite certificate that bounds the infinity norm of every admissible product
of switched companion matrices up to a configurable depth.  Passing at depth
m implies every long product decays geometrically (split it into admissible
blocks of length m + 1), so the certificate is sound; it is searched from
depth 0 upward, which also makes it monotone in the depth budget.

Inequalities in the underlying theory are strict; boundary values therefore
Fail, and every report carries the raw margin so callers can see how close
the call was.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import (
    LOGLIN,
    NBIN,
    PARX,
    ModelSpec,
    ParameterVector,
    reduce,
    validate_params,
)

TOL_RADIUS = 1e-9
TOL_MARGIN = 0.0
TOL_ROOT = 1e-8

DEFAULT_CERT_DEPTH = 12
CERT_BUDGET = 2**20


class CertificateBudgetError(ValueError):
    """The requested certificate depth exceeds the enumeration budget."""


@dataclass(frozen=True)
class ConditionCheck:
    name: str
    value: float
    threshold: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "value": self.value,
            "threshold": self.threshold,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class ConditionReport:
    verdict: str  # "Pass" | "Fail" | "Inconclusive"
    checks: tuple[ConditionCheck, ...]
    certificate_depth: Optional[int] = None
    extras: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == "Pass"

    def to_dict(self) -> dict:
        out = {
            "verdict": self.verdict,
            "checks": [c.to_dict() for c in self.checks],
            "certificate_depth": self.certificate_depth,
        }
        out.update(self.extras)
        return out


def companion_spectral_radius(c) -> float:
    """Spectral radius of the companion matrix of z^k - sum c_j z^(k-j)."""
    c = [float(v) for v in c]
    k = len(c)
    if k == 0 or all(v == 0.0 for v in c):
        return 0.0
    if k == 1:
        return abs(c[0])
    if k == 2:
        # z^2 - c1 z - c2 = 0
        disc = cmath.sqrt(c[0] * c[0] + 4.0 * c[1])
        r1 = abs((c[0] + disc) / 2.0)
        r2 = abs((c[0] - disc) / 2.0)
        return max(r1, r2)
    mat = np.zeros((k, k))
    mat[0, :] = c
    mat[1:, :-1] = np.eye(k - 1)
    return float(np.max(np.abs(np.linalg.eigvals(mat))))


def in_unit_disk_stable(c, tol_radius: float = TOL_RADIUS) -> bool:
    """True iff 1 - sum c_j z^j has no root in the closed unit disk.

    Equivalent, via z -> 1/z, to the companion matrix of
    z^k - sum c_j z^(k-j) having spectral radius strictly below 1; decided
    with a ``tol_radius`` safety band.
    """
    return companion_spectral_radius(c) < 1.0 - tol_radius


def loglin_iterate(theta: ParameterVector, x, w) -> float:
    """Run the switched log-linear coefficient recursion and return its endpoint.

    ``x`` holds the max(p, q) seed values oldest-first and ``w`` the q + m
    switching bits oldest-first; the recursion
    ``x_k = sum_j a_j x_{k-j} + sum_j b_j w_{k-j} x_{k-j}`` is advanced for
    k = 1..m+1 and x_{m+1} is returned.
    """
    a, b = theta.a, theta.b
    p, q = len(a), len(b)
    s = max(p, q)
    if len(x) != s:
        raise ValueError(f"seed must have length {s}, got {len(x)}")
    if len(w) < q:
        raise ValueError(f"need at least {q} switching bits, got {len(w)}")
    m = len(w) - q
    xs = [float(v) for v in x]
    for k in range(1, m + 2):
        val = 0.0
        for j in range(1, p + 1):
            val += a[j - 1] * xs[-j]
        for j in range(1, q + 1):
            val += b[j - 1] * w[k - j + q - 1] * xs[-j]
        xs.append(val)
        del xs[0]
    return xs[-1]


def _padded(a, b):
    s = max(len(a), len(b))
    apad = tuple(a) + (0.0,) * (s - len(a))
    bpad = tuple(b) + (0.0,) * (s - len(b))
    return s, apad, bpad


def _certificate_search(a, b, max_depth: int, budget: int):
    """Smallest depth m <= max_depth at which every admissible product of
    m + 1 switched companion matrices has infinity norm < 1.

    Returns (depth or None, best max-norm seen).  Enumeration is breadth
    first over switching histories; each node keeps the last q - 1 bits (all
    a new matrix's top row can depend on) and its running product.
    """
    p, q = len(a), len(b)
    if 2 ** (q + max_depth) > budget:
        raise CertificateBudgetError(
            f"certificate depth {max_depth} needs 2^{q + max_depth} products, over the "
            f"budget of {budget}; lower the depth"
        )
    s, apad, bpad = _padded(a, b)
    apad = np.array(apad)
    bpad = np.array(bpad)

    def top_rows(newest_first_bits):
        # newest_first_bits: (N, q) array, column j-1 holds w_{k-j}
        rows = np.tile(apad, (newest_first_bits.shape[0], 1))
        rows[:, :q] += bpad[:q] * newest_first_bits
        return rows

    # Depth 0: one matrix per q-bit pattern.
    patterns = np.array(
        [[(i >> j) & 1 for j in range(q)] for i in range(2**q)], dtype=float
    )  # row i, col j-1 = w_{1-j} (newest first for step k=1)
    n0 = patterns.shape[0]
    prods = np.zeros((n0, s, s))
    prods[:, 0, :] = top_rows(patterns)
    if s > 1:
        prods[:, 1:, :-1] = np.eye(s - 1)
    # Suffix = last q-1 bits oldest-first: (w_{3-q}, ..., w_0, ...) -- for the
    # next step the matrix needs (new bit, suffix reversed).
    suffixes = patterns[:, : q - 1][:, ::-1] if q > 1 else np.zeros((n0, 0))

    best = math.inf
    for depth in range(max_depth + 1):
        level_max = float(np.max(np.abs(prods).sum(axis=2).max(axis=1)))
        best = min(best, level_max)
        if level_max < 1.0:
            return depth, best
        if depth == max_depth:
            break
        n = prods.shape[0]
        new_prods = np.empty((2 * n, s, s))
        new_suffixes = np.empty((2 * n, max(q - 1, 0)))
        for bit in (0, 1):
            bits_newest_first = np.concatenate(
                [np.full((n, 1), float(bit)), suffixes[:, ::-1]], axis=1
            )
            rows = top_rows(bits_newest_first)
            block = slice(bit * n, (bit + 1) * n)
            new_prods[block, 0, :] = np.einsum("nj,njk->nk", rows, prods)
            if s > 1:
                new_prods[block, 1:, :] = prods[:, :-1, :]
            if q > 1:
                new_suffixes[block] = np.concatenate(
                    [suffixes[:, 1:], np.full((n, 1), float(bit))], axis=1
                )
        prods = new_prods
        suffixes = new_suffixes
    return None, best


def check_loglin(
    spec: ModelSpec,
    theta: ParameterVector,
    certificate_depth: Optional[int] = None,
    budget: int = CERT_BUDGET,
) -> ConditionReport:
    """Audit a log-linear parameter point for ergodicity.

    Necessary: the latent polynomial built from ``a`` and the one built from
    the zero-padded sum ``a + b`` must both have their roots outside the
    closed unit disk.  Sufficient: either the coefficient bound
    ``sum_k max(|a_k|, |a_k + b_k|) < 1`` or the switched-product norm
    certificate (searched up to ``certificate_depth``, default 12 scaled
    down to keep 2^(q + depth) within ``budget``).
    """
    validate_params(spec, theta)
    a, b = theta.a, theta.b
    q = len(b)
    if certificate_depth is None:
        certificate_depth = min(DEFAULT_CERT_DEPTH, max(0, int(math.log2(budget)) - q))
    if 2 ** (q + certificate_depth) > budget:
        raise CertificateBudgetError(
            f"certificate depth {certificate_depth} needs 2^{q + certificate_depth} "
            f"products, over the budget of {budget}; lower the depth"
        )
    s, apad, bpad = _padded(a, b)

    rad_a = companion_spectral_radius(a)
    rad_ab = companion_spectral_radius([apad[i] + bpad[i] for i in range(s)])
    nec_a = rad_a < 1.0 - TOL_RADIUS
    nec_ab = rad_ab < 1.0 - TOL_RADIUS
    coeff_sum = sum(max(abs(apad[i]), abs(apad[i] + bpad[i])) for i in range(s))
    suff_sum = coeff_sum < 1.0

    checks = [
        ConditionCheck("latent_poly_stable", rad_a, 1.0 - TOL_RADIUS, nec_a),
        ConditionCheck("sum_poly_stable", rad_ab, 1.0 - TOL_RADIUS, nec_ab),
        ConditionCheck("coefficient_sum_bound", coeff_sum, 1.0, suff_sum),
    ]

    if not (nec_a and nec_ab):
        return ConditionReport(verdict="Fail", checks=tuple(checks))
    if suff_sum:
        return ConditionReport(verdict="Pass", checks=tuple(checks))

    depth, best_norm = _certificate_search(a, b, certificate_depth, budget)
    checks.append(
        ConditionCheck("switched_product_norm", best_norm, 1.0, depth is not None)
    )
    if depth is not None:
        return ConditionReport(
            verdict="Pass", checks=tuple(checks), certificate_depth=depth
        )
    return ConditionReport(
        verdict="Inconclusive", checks=tuple(checks), certificate_depth=certificate_depth
    )


def check_nbin(spec: ModelSpec, theta: ParameterVector) -> ConditionReport:
    """Sharp NBIN moment balance: sum(a) + r * sum(b) < 1."""
    validate_params(spec, theta)
    lhs = sum(theta.a) + theta.r * sum(theta.b)
    ok = lhs < 1.0 - TOL_MARGIN
    checks = (ConditionCheck("coefficient_balance", lhs, 1.0, ok),)
    return ConditionReport(
        verdict="Pass" if ok else "Fail", checks=checks, extras={"lhs": lhs}
    )


def check_parx(spec: ModelSpec, theta: ParameterVector) -> ConditionReport:
    """PARX drift condition: sum(a) + sum(b) < 1."""
    validate_params(spec, theta)
    lhs = sum(theta.a) + sum(theta.b)
    ok = lhs < 1.0 - TOL_MARGIN
    checks = (ConditionCheck("coefficient_balance", lhs, 1.0, ok),)
    return ConditionReport(
        verdict="Pass" if ok else "Fail", checks=checks, extras={"lhs": lhs}
    )


def check_model(spec: ModelSpec, theta: ParameterVector, **kwargs) -> ConditionReport:
    if spec.family == LOGLIN:
        return check_loglin(spec, theta, **kwargs)
    if spec.family == NBIN:
        return check_nbin(spec, theta)
    return check_parx(spec, theta)


def check_identifiable(a, b, tol_root: float = TOL_ROOT) -> ConditionReport:
    """No-common-root criterion for the latent and feedback polynomials.

    Fails when the feedback polynomial is identically zero (the criterion is
    then vacuous) or when one of its complex roots is, within ``tol_root``
    relative scale, also a root of the latent polynomial.
    """
    a = [float(v) for v in a]
    b = [float(v) for v in b]
    p = len(a)
    if all(v == 0.0 for v in b):
        checks = (ConditionCheck("feedback_poly_nonzero", 0.0, 0.0, False),)
        return ConditionReport(verdict="Fail", checks=checks)
    roots = np.roots(b)  # feedback polynomial b1 z^(q-1) + ... + bq
    pcoef = np.array([1.0] + [-v for v in a])
    if roots.size == 0:
        checks = (ConditionCheck("min_scaled_latent_poly_at_roots", math.inf, tol_root, True),)
        return ConditionReport(verdict="Pass", checks=checks)
    vals = np.abs(np.polyval(pcoef, roots)) / (1.0 + np.abs(roots)) ** p
    margin = float(np.min(vals))
    ok = margin > tol_root
    checks = (ConditionCheck("min_scaled_latent_poly_at_roots", margin, tol_root, ok),)
    return ConditionReport(verdict="Pass" if ok else "Fail", checks=checks)


# --- contraction diagnostics ---------------------------------------------------


def _latent_metric(spec: ModelSpec, v, w) -> float:
    if spec.family == PARX:
        dx = abs(v[0] - w[0])
        dxi = math.dist(v[1], w[1])
        return max(dx, dxi)
    return abs(v - w)


def _reduced_metric(spec: ModelSpec, v, w) -> float:
    if spec.family == PARX:
        dy = abs(v[0] - w[0])
        df = max((abs(x - y) for x, y in zip(v[1], w[1])), default=0.0)
        dxi = math.dist(v[2], w[2])
        return max(dy, df, dxi)
    return abs(v - w)


def window_distance(spec: ModelSpec, z, z2) -> float:
    """Max over window slots of the componentwise latent/reduced metrics."""
    dx = max(_latent_metric(spec, v, w) for v, w in zip(z.x, z2.x))
    du = max(
        (_reduced_metric(spec, v, w) for v, w in zip(z.u, z2.u)),
        default=0.0,
    )
    return max(dx, du)


def _sample_window(spec: ModelSpec, rng: np.random.Generator):
    from .model import LatentWindow

    p, q = spec.p, spec.q
    if spec.family == LOGLIN:
        return LatentWindow(
            x=tuple(float(v) for v in rng.normal(0.0, 1.5, p)),
            u=tuple(reduce(spec, int(v)) for v in rng.poisson(2.0, q - 1)),
        )
    if spec.family == NBIN:
        return LatentWindow(
            x=tuple(float(v) for v in rng.gamma(2.0, 2.0, p)),
            u=tuple(reduce(spec, int(v)) for v in rng.poisson(3.0, q - 1)),
        )
    r_dim = spec.parx.r_dim
    xs = tuple(
        (float(rng.gamma(2.0, 2.0)), tuple(float(v) for v in rng.normal(0.0, 1.0, r_dim)))
        for _ in range(p)
    )
    us = tuple(
        reduce(spec, (int(rng.poisson(3.0)), tuple(float(v) for v in rng.normal(0.0, 1.0, r_dim))))
        for _ in range(q - 1)
    )
    return LatentWindow(x=xs, u=us)


def _sample_observations(spec: ModelSpec, rng: np.random.Generator, n: int):
    if spec.family == PARX:
        r_dim = spec.parx.r_dim
        return [
            (int(rng.poisson(3.0)), tuple(float(v) for v in rng.normal(0.0, 1.0, r_dim)))
            for _ in range(n)
        ]
    return [int(v) for v in rng.poisson(2.0, n)]


def lipschitz_estimate(
    spec: ModelSpec,
    theta: ParameterVector,
    n_max: int,
    trial_count: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Empirical lower bounds on the n-step contraction coefficients.

    For each trial, draw two windows and a shared observation sequence,
    iterate both, and record the ratio of the latent gap at step n to the
    initial window distance; the maximum over trials is reported per n.
    These are lower bounds on the true uniform Lipschitz constants; for a
    stable parameter point they should decay geometrically.
    """
    from .model import embed_step, project_latent

    out = np.zeros(n_max)
    for _ in range(trial_count):
        z1 = _sample_window(spec, rng)
        z2 = _sample_window(spec, rng)
        d0 = window_distance(spec, z1, z2)
        if d0 == 0.0:
            continue
        ys = _sample_observations(spec, rng, n_max)
        for n, y in enumerate(ys):
            z1 = embed_step(spec, theta, z1, y)
            z2 = embed_step(spec, theta, z2, y)
            gap = _latent_metric(spec, project_latent(spec, z1), project_latent(spec, z2))
            out[n] = max(out[n], gap / d0)
    return out


def nbin_stationary_mean(spec: ModelSpec, theta: ParameterVector) -> tuple[float, float]:
    """Stationary first moments (mean latent, mean count) of a stable NBIN model.

    Solves the moment balance E[X] = omega + sum(a) E[X] + sum(b) E[Y] with
    E[Y] = r E[X]; raises when the balance condition fails.
    """
    report = check_nbin(spec, theta)
    if not report.passed:
        raise ValueError(
            f"no finite-mean stationary regime: sum(a) + r*sum(b) = {report.extras['lhs']:.6g} >= 1"
        )
    mu_x = theta.omega / (1.0 - sum(theta.a) - theta.r * sum(theta.b))
    return mu_x, theta.r * mu_x
