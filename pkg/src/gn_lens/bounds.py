"""Analytic upper bounds on the GN condition number, each returned as an
auditable report carrying its internal per-layer terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AssumptionError, DegenerateDataError
from .linalg import (
    RankPolicy,
    as_matrix,
    pseudo_condition_number,
    sym_eigendecompose,
)
from .network import Params, TeacherSpec, partial_product


@dataclass(frozen=True)
class LayerTerm:
    """One ell-term of a convex-combination depth bound."""

    ell: int
    kappa2_above: float  # kappa^2 of the product of layers above ell
    kappa2_below: float  # kappa^2 of the product of layers below ell
    sig2min_above: float
    sig2min_below: float
    alpha_l: float
    gamma_l: float
    weighted: float  # gamma_l * kappa2_above * kappa2_below


@dataclass(frozen=True)
class BoundReport:
    value: float
    kind: str
    kappa_sigma: float
    terms: tuple[LayerTerm, ...] = ()
    assumptions_met: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)


def _svals(m: np.ndarray) -> np.ndarray:
    return np.linalg.svd(m, compute_uv=False)


def _kappa_sigma(sigma, policy: RankPolicy | None = None) -> float:
    return pseudo_condition_number(sym_eigendecompose(as_matrix(sigma)), policy)


def _wide_flag(params: Params) -> bool:
    d = params.layers[0].shape[1]
    k = params.layers[-1].shape[0]
    hidden = [w.shape[0] for w in params.layers[:-1]]
    return all(h > max(d, k) for h in hidden)


def bound_one_hidden(W, V, sigma,
                     sigma_policy: RankPolicy | None = None) -> BoundReport:
    """One-hidden-layer linear bound: kappa(Sigma) times the ratio of summed
    extreme squared singular values of the two layers."""
    w = as_matrix(W, "W")
    v = as_matrix(V, "V")
    sw = _svals(w)
    sv = _svals(v)
    den = sw[-1] ** 2 + sv[-1] ** 2
    if den <= 0:
        raise DegenerateDataError("both layers are rank-deficient; bound undefined")
    beta_w = sw[-1] ** 2 / den
    ks = _kappa_sigma(sigma, sigma_policy)
    value = ks * (sw[0] ** 2 + sv[0] ** 2) / den
    m = w.shape[1]
    d, k = v.shape[1], w.shape[0]
    return BoundReport(
        value=value,
        kind="one_hidden",
        kappa_sigma=ks,
        assumptions_met={"wide_hidden": m > max(d, k)},
        extras={
            "beta_w": beta_w,
            "kappa_w": sw[0] / sw[-1] if sw[-1] > 0 else math.inf,
            "kappa_v": sv[0] / sv[-1] if sv[-1] > 0 else math.inf,
        },
    )


def _depth_terms(params: Params, beta: float) -> list[LayerTerm]:
    L = len(params.layers)
    raw = []
    for ell in range(1, L + 1):
        above = partial_product(params, L, ell + 1, beta)
        below = partial_product(params, ell - 1, 1, beta)
        sa = _svals(above)
        sb = _svals(below)
        if sa[-1] == 0 or sb[-1] == 0:
            raise AssumptionError(
                f"alpha_{ell} = 0 (rank-deficient partial product); bound undefined"
            )
        raw.append((ell, sa, sb))
    alphas = np.array([(sa[-1] ** 2) * (sb[-1] ** 2) for _, sa, sb in raw])
    gammas = alphas / alphas.sum()
    terms = []
    for (ell, sa, sb), alpha_l, gamma_l in zip(raw, alphas, gammas):
        k2a = (sa[0] / sa[-1]) ** 2
        k2b = (sb[0] / sb[-1]) ** 2
        terms.append(
            LayerTerm(
                ell=ell,
                kappa2_above=k2a,
                kappa2_below=k2b,
                sig2min_above=sa[-1] ** 2,
                sig2min_below=sb[-1] ** 2,
                alpha_l=float(alpha_l),
                gamma_l=float(gamma_l),
                weighted=float(gamma_l * k2a * k2b),
            )
        )
    return terms


def _depth_bound(params: Params, sigma, beta: float, kind_prefix: str,
                 sigma_policy: RankPolicy | None):
    terms = _depth_terms(params, beta)
    ks = _kappa_sigma(sigma, sigma_policy)
    convex = float(ks * sum(t.weighted for t in terms))
    products = [t.kappa2_above * t.kappa2_below for t in terms]
    argmax = int(np.argmax(products)) + 1
    maximum = float(ks * max(products))
    flags = {"wide_hidden": _wide_flag(params)}
    convex_report = BoundReport(
        value=convex, kind=f"{kind_prefix}_convex", kappa_sigma=ks,
        terms=tuple(terms), assumptions_met=flags,
    )
    max_report = BoundReport(
        value=maximum, kind=f"{kind_prefix}_max", kappa_sigma=ks,
        terms=tuple(terms), assumptions_met=flags,
        extras={"argmax_ell": argmax},
    )
    return convex_report, max_report


def bound_deep_convex(params: Params, sigma,
                      sigma_policy: RankPolicy | None = None) -> BoundReport:
    return _depth_bound(params, sigma, 0.0, "deep", sigma_policy)[0]


def bound_deep_max(params: Params, sigma,
                   sigma_policy: RankPolicy | None = None) -> BoundReport:
    return _depth_bound(params, sigma, 0.0, "deep", sigma_policy)[1]


def bound_residual_convex(params: Params, beta: float, sigma,
                          sigma_policy: RankPolicy | None = None) -> BoundReport:
    return _depth_bound(params, sigma, beta, "residual", sigma_policy)[0]


def bound_residual_max(params: Params, beta: float, sigma,
                       sigma_policy: RankPolicy | None = None) -> BoundReport:
    return _depth_bound(params, sigma, beta, "residual", sigma_policy)[1]


def residual_product_bound(singular_spectra, beta: float, ell: int) -> float:
    """Product over layers i != ell of ((s_max_i + beta)/(s_min_i + beta))^2.

    Meaningful only under the aligned-SVD initializer, where adding beta*I
    shifts every singular value exactly.
    """
    value = 1.0
    for i, s in enumerate(singular_spectra, start=1):
        if i == ell:
            continue
        s = np.asarray(s, dtype=np.float64)
        value *= ((s.max() + beta) / (s.min() + beta)) ** 2
    return value


def bound_leaky(W, V, X, alpha: float, gamma) -> BoundReport:
    """Leaky-ReLU one-hidden bound from the data Gram and the unit-weight
    Gram matrix produced by gn_leaky."""
    w = as_matrix(W, "W")
    x = as_matrix(X, "X")
    g = as_matrix(gamma, "gamma")
    n = x.shape[1]
    k = w.shape[0]
    sx = _svals(x)
    sw = _svals(w)
    # lambda_min of the n x n Gram X^T X (zero when n exceeds the rank of X).
    lam_min_xtx = sx[-1] ** 2 if sx.size >= n else 0.0
    lam_min_wwt = sw[-1] ** 2 if sw.size >= k else 0.0
    gspec = sym_eigendecompose(g)
    lam_max_g = gspec.max
    lam_min_g = max(gspec.min, 0.0)
    num = sx[0] ** 2 * sw[0] ** 2 + lam_max_g
    den = alpha**2 * lam_min_xtx * lam_min_wwt + lam_min_g
    if den <= 0:
        raise DegenerateDataError("leaky bound denominator is zero")
    return BoundReport(
        value=num / den,
        kind="leaky",
        kappa_sigma=float("nan"),
        extras={
            "sig2max_x": sx[0] ** 2,
            "sig2max_w": sw[0] ** 2,
            "sig2min_x": lam_min_xtx,
            "sig2min_w": lam_min_wwt,
            "lam_max_gamma": lam_max_g,
            "lam_min_gamma": lam_min_g,
        },
    )


@dataclass(frozen=True)
class GaussianBound:
    value: float
    confidence: float
    vacuous: bool = False


def bound_gaussian_nonasymptotic(m: int, d: int, k: int, sigma_w2: float,
                                 sigma_v2: float, t: float,
                                 kappa_sigma: float = 1.0) -> GaussianBound:
    """Non-asymptotic Gaussian-initialization bound with its confidence level.

    Vacuous parameter regimes (t too large for the width) are flagged
    rather than raised, so sweeps can grey them out.
    """
    confidence = max(0.0, 1.0 - 8.0 * math.exp(-t * t / 2.0))
    lo_k = math.sqrt(m) - math.sqrt(k) - t
    lo_d = math.sqrt(m) - math.sqrt(d) - t
    if m < max(d, k) or lo_k <= 0 or lo_d <= 0:
        return GaussianBound(value=math.inf, confidence=confidence, vacuous=True)
    num = (
        sigma_w2 * (math.sqrt(m) + math.sqrt(k) + t) ** 2
        + sigma_v2 * (math.sqrt(m) + math.sqrt(d) + t) ** 2
    )
    den = sigma_w2 * lo_k**2 + sigma_v2 * lo_d**2
    return GaussianBound(value=kappa_sigma * num / den, confidence=confidence)


def bound_gaussian_asymptotic(m: int, d: int, k: int, sigma_w2: float,
                              sigma_v2: float, kappa_sigma: float = 1.0) -> float:
    """Wide-layer limit of the Gaussian bound (Marchenko-Pastur edges)."""
    if m <= max(d, k):
        raise AssumptionError("asymptotic bound requires m > max(d, k)")
    yk = math.sqrt(k / m)
    yd = math.sqrt(d / m)
    num = sigma_w2 * (1 + yk) ** 2 + sigma_v2 * (1 + yd) ** 2
    den = sigma_w2 * (1 - yk) ** 2 + sigma_v2 * (1 - yd) ** 2
    return kappa_sigma * num / den


def bound_functional_hessian(W, V, teacher: TeacherSpec, sigma,
                             sigma_policy: RankPolicy | None = None) -> float:
    """kappa bound on the functional Hessian in the teacher-student setting."""
    w = as_matrix(W, "W")
    v = as_matrix(V, "V")
    resid = w @ v - teacher.Z
    s = _svals(resid)
    if s[0] <= 0:
        raise DegenerateDataError("zero residual matrix; kappa(H_F) undefined")
    if s[-1] <= 0:
        raise DegenerateDataError("rank-deficient residual matrix")
    return float(s[0] / s[-1]) * _kappa_sigma(sigma, sigma_policy)


def self_balancing_report(params: Params, sigma,
                          sigma_policy: RankPolicy | None = None):
    """Per-ell table exposing the self-balancing of the convex bound's terms.

    The weighted terms times kappa(Sigma) sum to the convex bound's value.
    """
    terms = _depth_terms(params, 0.0)
    ks = _kappa_sigma(sigma, sigma_policy)
    return terms, ks
