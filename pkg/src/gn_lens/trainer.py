"""Full-batch GD / mini-batch SGD with analytic gradients under MSE, plus
condition-number tracing and the desk-scale pruning experiment.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .bounds import (
    bound_deep_convex,
    bound_deep_max,
    bound_leaky,
    bound_residual_convex,
    bound_residual_max,
)
from .data import Dataset, empirical_covariance
from .errors import (
    DegenerateDataError,
    DimensionError,
    SpecError,
    ValidationError,
)
from .gauss_newton import gn_leaky, gn_linear, gn_residual
from .linalg import RankPolicy, pseudo_condition_number
from .network import (
    LEAKY_ONE_HIDDEN,
    LINEAR_DEEP,
    RESIDUAL,
    NetworkSpec,
    Params,
    forward,
    leaky_relu,
    partial_product,
    rect_identity,
)

DIVERGENCE_LOSS = 1e12

TRAINABLE_KINDS = (LINEAR_DEEP, RESIDUAL, LEAKY_ONE_HIDDEN)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float
    epochs: int
    batch_size: int = 0  # 0 = full batch
    seed: int = 0
    trace_every: int = 1

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValidationError("learning_rate must be >= 0")
        if self.trace_every < 1:
            raise ValidationError("trace_every must be >= 1")


@dataclass(frozen=True)
class Checkpoint:
    epoch: int
    loss: float
    kappa: float
    bound_convex: float
    bound_max: float
    ratio: float  # bound_convex / kappa
    wall_ms: float


@dataclass
class TrainTrace:
    checkpoints: list[Checkpoint] = field(default_factory=list)
    diverged: bool = False


def mse_loss(spec: NetworkSpec, params: Params, X, Y) -> float:
    r = forward(spec, params, X) - Y
    return 0.5 * float(np.sum(r * r)) / X.shape[1]


def mse_gradient(spec: NetworkSpec, params: Params, X, Y) -> list[np.ndarray]:
    """Per-layer gradients of (1/n) sum_i 0.5 ||F(x_i) - y_i||^2.

    Masked coordinates (pruned weights) get exactly zero gradient.
    """
    if X.shape[1] == 0:
        raise DimensionError("batch must be nonempty")
    n = X.shape[1]
    if spec.kind in (LINEAR_DEEP, RESIDUAL):
        beta = spec.beta if spec.kind == RESIDUAL else 0.0
        L = len(params.layers)
        resid = forward(spec, params, X) - Y  # k x n
        grads = []
        for ell in range(1, L + 1):
            above = partial_product(params, L, ell + 1, beta)
            below_x = partial_product(params, ell - 1, 1, beta) @ X
            grads.append((above.T @ resid @ below_x.T) / n)
    elif spec.kind == LEAKY_ONE_HIDDEN:
        v, w = params.layers
        z = v @ X
        h = leaky_relu(z, spec.alpha)
        resid = w @ h - Y
        grad_w = (resid @ h.T) / n
        slope = np.where(z > 0, 1.0, spec.alpha)
        grad_v = (((w.T @ resid) * slope) @ X.T) / n
        grads = [grad_v, grad_w]
    else:
        raise SpecError(f"no analytic gradient for kind {spec.kind!r}")
    if params.masks is not None:
        grads = [g * m for g, m in zip(grads, params.masks)]
    return grads


def checkpoint_metrics(spec: NetworkSpec, params: Params, ds: Dataset,
                       policy: RankPolicy | None = None):
    """(kappa, bound_convex, bound_max) via the analytic GN builders."""
    sigma = empirical_covariance(ds)
    if spec.kind == LINEAR_DEEP:
        gn = gn_linear(params, sigma)
        convex = bound_deep_convex(params, sigma).value
        maximum = bound_deep_max(params, sigma).value
    elif spec.kind == RESIDUAL:
        gn = gn_residual(params, spec.beta, sigma)
        convex = bound_residual_convex(params, spec.beta, sigma).value
        maximum = bound_residual_max(params, spec.beta, sigma).value
    elif spec.kind == LEAKY_ONE_HIDDEN:
        v, w = params.layers
        gn, gamma = gn_leaky(w, v, ds.X, spec.alpha)
        try:
            convex = bound_leaky(w, v, ds.X, spec.alpha, gamma).value
        except DegenerateDataError:
            convex = float("nan")
        maximum = float("nan")
    else:
        raise SpecError(f"no analytic GN builder for kind {spec.kind!r}")
    kappa = pseudo_condition_number(gn.spectrum(), policy)
    return kappa, convex, maximum


def _apply_masks(params: Params) -> Params:
    if params.masks is None:
        return params
    layers = tuple(w * m for w, m in zip(params.layers, params.masks))
    return Params(layers=layers, masks=params.masks)


def train(spec: NetworkSpec, params: Params, ds: Dataset, cfg: TrainConfig,
          policy: RankPolicy | None = None) -> tuple[Params, TrainTrace]:
    """(S)GD under MSE with kappa-and-bound checkpoints.

    Deterministic given cfg.seed (one seeded permutation per epoch,
    drop-last partial batches). Divergence truncates the trace with a flag
    instead of raising.
    """
    if ds.Y is None:
        raise DimensionError("training requires targets Y")
    if spec.kind not in TRAINABLE_KINDS:
        raise SpecError(f"kind {spec.kind!r} is not trainable")
    rng = np.random.default_rng(cfg.seed)
    x_all, y_all = ds.X, ds.Y
    n = ds.n
    trace = TrainTrace()
    start = time.perf_counter()

    def record(epoch: int) -> bool:
        loss = mse_loss(spec, params, x_all, y_all)
        if not np.isfinite(loss) or loss > DIVERGENCE_LOSS:
            trace.diverged = True
            return False
        kappa, convex, maximum = checkpoint_metrics(spec, params, ds, policy)
        wall = (time.perf_counter() - start) * 1e3
        trace.checkpoints.append(
            Checkpoint(epoch=epoch, loss=loss, kappa=kappa,
                       bound_convex=convex, bound_max=maximum,
                       ratio=convex / kappa, wall_ms=wall)
        )
        return True

    if not record(0):
        return params, trace
    for epoch in range(1, cfg.epochs + 1):
        if cfg.batch_size <= 0 or cfg.batch_size >= n:
            batches = [(x_all, y_all)]
        else:
            perm = rng.permutation(n)
            batches = []
            for s in range(0, n - cfg.batch_size + 1, cfg.batch_size):
                idx = perm[s : s + cfg.batch_size]
                batches.append((x_all[:, idx], y_all[:, idx]))
        for xb, yb in batches:
            grads = mse_gradient(spec, params, xb, yb)
            layers = tuple(
                w - cfg.learning_rate * g for w, g in zip(params.layers, grads)
            )
            if not all(np.isfinite(w).all() for w in layers):
                trace.diverged = True
                return params, trace
            params = _apply_masks(Params(layers=layers, masks=params.masks))
        if epoch % cfg.trace_every == 0 or epoch == cfg.epochs:
            if not record(epoch):
                return params, trace
    return params, trace


@dataclass(frozen=True)
class PruneCell:
    fraction: float
    seed: int
    trace: TrainTrace
    kappa_init: float
    kappa_end: float
    diverged: bool


def pruning_experiment(spec: NetworkSpec, ds: Dataset, fractions, seeds,
                       cfg: TrainConfig, scheme: str = "kaiming_normal",
                       policy: RankPolicy | None = None) -> list[PruneCell]:
    """Magnitude-pruning-at-init grid; per-cell divergence is recorded, not raised."""
    from .network import init, prune_by_magnitude

    cells = []
    for seed in seeds:
        base = init(spec, scheme=scheme, seed=seed)
        for fraction in fractions:
            pruned = prune_by_magnitude(base, fraction)
            kappa_init, _, _ = checkpoint_metrics(spec, pruned, ds, policy)
            run_cfg = TrainConfig(
                learning_rate=cfg.learning_rate, epochs=cfg.epochs,
                batch_size=cfg.batch_size, seed=seed,
                trace_every=cfg.trace_every,
            )
            final, trace = train(spec, pruned, ds, run_cfg, policy)
            if trace.diverged or not trace.checkpoints:
                kappa_end = float("nan")
            else:
                kappa_end = trace.checkpoints[-1].kappa
            cells.append(
                PruneCell(fraction=float(fraction), seed=int(seed),
                          trace=trace, kappa_init=kappa_init,
                          kappa_end=kappa_end, diverged=trace.diverged)
            )
    return cells
