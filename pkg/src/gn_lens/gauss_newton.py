"""Exact Gauss-Newton matrices for every supported architecture, a brute-force
Jacobian oracle, and the functional (residual-driven) Hessian.

Two families of reduced GN matrices appear:
  * linear_sigma_form (kd x kd): sum over layers of Kronecker terms built
    from partial weight products and the PSD square root of the input
    covariance; includes the covariance's 1/n.
  * data_form (kn x kn): per-unit Kronecker sum driven by the raw data Gram
    matrix X^T X (no 1/n), used for the piecewise-linear one-hidden case.
Both share their nonzero spectrum with the full parameter-space GN matrix
(up to the recorded 1/n scale); condition numbers are scale-invariant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NumericError, SpecError
from .linalg import (
    Spectrum,
    as_matrix,
    kron,
    psd_sqrt,
    sym_eigendecompose,
)
from .network import (
    LEAKY_ONE_HIDDEN,
    LINEAR_CONV,
    LINEAR_DEEP,
    RESIDUAL,
    NetworkSpec,
    Params,
    TeacherSpec,
    forward,
    partial_product,
    rect_identity,
)

LINEAR_SIGMA_FORM = "linear_sigma_form"
DATA_FORM = "data_form"

# Larger than sqrt(machine eps): the forwards are piecewise linear in
# each parameter, so the central difference has no truncation error away
# from activation kinks and a wider step only reduces cancellation noise.
_FD_STEP = 1e-6


@dataclass(frozen=True)
class GnMatrix:
    matrix: np.ndarray
    family: str
    scale_note: str  # "1/n" if the empirical 1/n factor is included, else "none"

    def spectrum(self) -> Spectrum:
        return sym_eigendecompose(self.matrix)


@dataclass(frozen=True)
class UnitActivationPattern:
    """Per-unit diagonal activation derivatives, entries in {1, alpha}."""

    diagonals: np.ndarray  # m x n
    alpha: float


def _symmetrize(g: np.ndarray) -> np.ndarray:
    return 0.5 * (g + g.T)


def gn_linear(params: Params, sigma, dim_cap: int = 10_000) -> GnMatrix:
    """kd x kd reduced GN of a deep linear network for input covariance sigma."""
    sigma = as_matrix(sigma, "sigma")
    s_half = psd_sqrt(sigma)
    return _gn_product_family(params, s_half, beta=0.0, dim_cap=dim_cap)


def gn_residual(params: Params, beta: float, sigma,
                dim_cap: int = 10_000) -> GnMatrix:
    """Same assembly as gn_linear with beta-shifted partial products."""
    sigma = as_matrix(sigma, "sigma")
    s_half = psd_sqrt(sigma)
    return _gn_product_family(params, s_half, beta=beta, dim_cap=dim_cap)


def _gn_product_family(params: Params, s_half: np.ndarray, beta: float,
                       dim_cap: int) -> GnMatrix:
    L = len(params.layers)
    k = params.layers[-1].shape[0]
    d = params.layers[0].shape[1]
    if s_half.shape[0] != d:
        raise DimensionError(
            f"sigma is {s_half.shape[0]}x{s_half.shape[0]} but input width is {d}"
        )
    g = np.zeros((k * d, k * d))
    for ell in range(1, L + 1):
        above = partial_product(params, L, ell + 1, beta)  # k x a_ell
        below = partial_product(params, ell - 1, 1, beta)  # a_{ell-1} x d
        left = above @ above.T
        right = s_half @ (below.T @ below) @ s_half
        g += kron(left, right, dim_cap=dim_cap)
    return GnMatrix(matrix=_symmetrize(g), family=LINEAR_SIGMA_FORM,
                    scale_note="1/n")


def unit_patterns(V, X, alpha: float) -> UnitActivationPattern:
    """Activation derivative pattern per hidden unit; z == 0 maps to alpha."""
    v = as_matrix(V, "V")
    x = as_matrix(X, "X")
    z = v @ x
    diags = np.where(z > 0, 1.0, alpha)
    return UnitActivationPattern(diagonals=diags, alpha=alpha)


def gn_leaky(W, V, X, alpha: float,
             dim_cap: int = 10_000) -> tuple[GnMatrix, np.ndarray]:
    """kn x kn reduced GN of a one-hidden piecewise-linear network.

    Uses the raw data Gram X^T X without a 1/n factor. Also returns the
    n x n second-term matrix (sum of per-unit input-weight Grams) needed by
    the Leaky-ReLU condition-number bound.
    """
    w = as_matrix(W, "W")
    v = as_matrix(V, "V")
    x = as_matrix(X, "X")
    k, m = w.shape
    if v.shape[0] != m or v.shape[1] != x.shape[0]:
        raise DimensionError("W, V, X shapes are inconsistent")
    n = x.shape[1]
    if k * n > dim_cap:
        raise DimensionError(f"kn={k * n} exceeds dimension cap {dim_cap}")
    pattern = unit_patterns(v, x, alpha).diagonals
    xtx = x.T @ x
    g = np.zeros((k * n, k * n))
    gamma = np.zeros((n, n))
    for i in range(m):
        lam = pattern[i]
        a_i = (lam[:, None] * xtx) * lam[None, :]
        w_col = w[:, i : i + 1]
        g += np.kron(a_i, w_col @ w_col.T)
        u = lam * (v[i] @ x)
        gamma += np.outer(u, u)
    g += np.kron(gamma, np.eye(k))
    return (
        GnMatrix(matrix=_symmetrize(g), family=DATA_FORM, scale_note="none"),
        _symmetrize(gamma),
    )


def _flatten_params(params: Params) -> np.ndarray:
    return np.concatenate([w.ravel() for w in params.layers])


def _unflatten_params(theta: np.ndarray, params: Params) -> Params:
    layers = []
    offset = 0
    for w in params.layers:
        size = w.size
        layers.append(theta[offset : offset + size].reshape(w.shape))
        offset += size
    return Params(layers=tuple(layers))


def _stacked_jacobian_fd(spec: NetworkSpec, params: Params,
                         X: np.ndarray) -> np.ndarray:
    """Central-difference Jacobian of the stacked outputs, (k*n) x p."""
    theta = _flatten_params(params)
    base = forward(spec, params, X)
    if not np.all(np.isfinite(base)):
        raise NumericError("forward pass produced non-finite outputs")
    out_size = base.size
    jac = np.zeros((out_size, theta.size))
    for j in range(theta.size):
        h = _FD_STEP * (1.0 + abs(theta[j]))
        plus = theta.copy()
        plus[j] += h
        minus = theta.copy()
        minus[j] -= h
        f_plus = forward(spec, _unflatten_params(plus, params), X)
        f_minus = forward(spec, _unflatten_params(minus, params), X)
        # Columns of X index samples; stack sample-major, output-minor.
        jac[:, j] = ((f_plus - f_minus) / (2 * h)).T.ravel()
    if not np.all(np.isfinite(jac)):
        raise NumericError("finite-difference Jacobian is non-finite")
    return jac


def _stacked_jacobian_linear(spec: NetworkSpec, params: Params,
                             X: np.ndarray) -> np.ndarray:
    """Exact stacked Jacobian for linear/residual products, (k*n) x p."""
    beta = spec.beta if spec.kind == RESIDUAL else 0.0
    L = len(params.layers)
    k = params.layers[-1].shape[0]
    n = X.shape[1]
    blocks = []
    for ell in range(1, L + 1):
        above = partial_product(params, L, ell + 1, beta)  # k x a_ell
        below_x = partial_product(params, ell - 1, 1, beta) @ X  # a_{ell-1} x n
        a_ell, a_prev = above.shape[1], below_x.shape[0]
        # d F_c(x_j) / d W^ell_{ab} = above[c, a] * below_x[b, j]
        block = np.einsum("ca,bj->jcab", above, below_x)
        blocks.append(block.reshape(k * n, a_ell * a_prev))
    return np.hstack(blocks)


def gn_from_jacobian(spec: NetworkSpec, params: Params, X,
                     mode: str = "finite_difference",
                     include_n_factor: bool = True) -> GnMatrix:
    """Brute-force GN via the network Jacobian.

    mode 'analytic_linear' differentiates the product form exactly (linear
    and residual kinds only); 'finite_difference' works for every kind,
    including batch-coupled ones, via central differences on the stacked
    k*n outputs. Returns the Gram form on the smaller of the two sides
    (p x p or kn x kn); the nonzero spectra agree.
    """
    x = as_matrix(X, "X")
    if mode == "analytic_linear":
        if spec.kind not in (LINEAR_DEEP, RESIDUAL):
            raise SpecError("analytic_linear mode needs a linear/residual kind")
        jac = _stacked_jacobian_linear(spec, params, x)
    elif mode == "finite_difference":
        jac = _stacked_jacobian_fd(spec, params, x)
    else:
        raise SpecError(f"unknown jacobian mode {mode!r}")
    n = x.shape[1]
    scale = 1.0 / n if include_n_factor else 1.0
    if jac.shape[1] <= jac.shape[0]:
        g = scale * (jac.T @ jac)  # p x p
    else:
        g = scale * (jac @ jac.T)  # kn x kn
    return GnMatrix(matrix=_symmetrize(g), family=DATA_FORM,
                    scale_note="1/n" if include_n_factor else "none")


def gn_conv(lifted_layers, sigma, dim_cap: int = 10_000) -> GnMatrix:
    """GN of the Toeplitz-lifted linear network (dense-layer analysis).

    The lifted matrices are treated as independent dense layers, so this
    measures the conditioning of the lifted linear network, not of the
    shared-weight conv parameterization.
    """
    params = Params(layers=tuple(as_matrix(t) for t in lifted_layers))
    return gn_linear(params, sigma, dim_cap=dim_cap)


def functional_hessian_spectrum(W, V, sigma, teacher: TeacherSpec):
    """Spectrum of the functional Hessian of a one-hidden linear network.

    Returns (Spectrum, H_F): the eigenvalues are +/- the singular values of
    the residual-input covariance (W V - Z) Sigma, each with multiplicity m,
    padded with zeros to the full (k + d) * m dimension, plus the assembled
    block matrix for oracle use.
    """
    w = as_matrix(W, "W")
    v = as_matrix(V, "V")
    sig = as_matrix(sigma, "sigma")
    z = teacher.Z
    k, m = w.shape
    d = v.shape[1]
    if v.shape[0] != m or z.shape != (k, d) or sig.shape != (d, d):
        raise DimensionError("W, V, Z, sigma shapes are inconsistent")
    omega = (w @ v - z) @ sig
    svals = np.linalg.svd(omega, compute_uv=False)
    total = (k + d) * m
    values = np.concatenate([
        np.repeat(svals, m),
        np.zeros(total - 2 * m * svals.size),
        np.repeat(-svals[::-1], m),
    ])
    spec = Spectrum.from_values(values)
    top = np.hstack([np.zeros((k * m, k * m)), np.kron(omega, np.eye(m))])
    bot = np.hstack([np.kron(omega.T, np.eye(m)), np.zeros((d * m, d * m))])
    h_f = np.vstack([top, bot])
    return spec, h_f
