"""Config-driven command-line runner: analyze / sweep / train / prune / whiten.

Experiments are described by flat key=value config files, results land in CSV
tables with a fixed row schema (plus optional native SVG line charts), and all
outputs are byte-deterministic for a given config and seed list.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields

import numpy as np

from .bounds import (
    bound_deep_convex,
    bound_deep_max,
    bound_leaky,
    bound_residual_convex,
    bound_residual_max,
)
from .data import (
    Dataset,
    empirical_covariance,
    load_csv,
    load_idx,
    synthesize_gaussian,
    whiten,
    write_csv,
)
from .errors import (
    ConfigError,
    DegenerateDataError,
    FormatError,
    GnLensError,
    SpecError,
    ValidationError,
)
from .gauss_newton import gn_conv, gn_leaky, gn_linear, gn_residual
from .linalg import (
    RankPolicy,
    pseudo_condition_number,
    rank_sensitivity_sweep,
    sym_eigendecompose,
)
from .network import (
    LEAKY_ONE_HIDDEN,
    LINEAR_CONV,
    LINEAR_DEEP,
    RESIDUAL,
    NetworkSpec,
    Params,
    init,
    init_aligned_svd,
    lift_conv,
    prune_by_magnitude,
)
from .trainer import TrainConfig, train

log = logging.getLogger("gn_lens")

RESULT_COLUMNS = (
    "experiment", "seed", "L", "m", "d", "k", "n", "beta", "alpha",
    "fraction", "epoch", "kappa", "bound_convex", "bound_max", "bound_other",
    "kappa_sigma", "rank_policy", "wall_ms",
)

TERM_COLUMNS = (
    "ell", "kappa2_above", "kappa2_below", "sig2min_above", "sig2min_below",
    "alpha_l", "gamma_l", "weighted",
)


# ---------------------------------------------------------------------------
# Config parsing


_COMMON_KEYS = {
    "experiment", "data", "data_path", "label_column", "limit", "d", "n",
    "cov_spectrum", "data_seed", "whiten", "eigen_floor", "kind", "dims",
    "k", "m", "L", "beta", "alpha", "filters", "kernel", "init",
    "init_sigma", "seeds", "rank_policy",
}

_TRAIN_KEYS = {"lr", "epochs", "batch_size", "trace_every", "teacher_seed"}

ALLOWED_KEYS = {
    "analyze": _COMMON_KEYS,
    "sweep": _COMMON_KEYS | {"axis", "values"},
    "train": _COMMON_KEYS | _TRAIN_KEYS,
    "prune": _COMMON_KEYS | _TRAIN_KEYS | {"fractions"},
    "whiten": _COMMON_KEYS,
}


def parse_config(path: str, command: str) -> dict:
    """Read a flat key=value file, rejecting unknown or duplicate keys."""
    allowed = ALLOWED_KEYS[command]
    cfg: dict[str, str] = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise FormatError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in allowed:
            raise ConfigError(
                f"{path}:{lineno}: unknown key {key!r} for command {command!r}"
            )
        if key in cfg:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        cfg[key] = value
    return cfg


def _as_int(cfg, key, default=None):
    if key not in cfg:
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return default
    try:
        return int(cfg[key])
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: not an integer: {cfg[key]!r}") from exc


def _as_float(cfg, key, default=None):
    if key not in cfg:
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return default
    try:
        return float(cfg[key])
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: not a number: {cfg[key]!r}") from exc


def _as_bool(cfg, key, default=False):
    if key not in cfg:
        return default
    value = cfg[key].lower()
    if value in ("true", "1", "yes", "on"):
        return True
    if value in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"key {key!r}: not a boolean: {cfg[key]!r}")


def _as_float_list(cfg, key, default=None):
    if key not in cfg:
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return list(default)
    try:
        return [float(v) for v in cfg[key].split(",") if v.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: bad number list: {cfg[key]!r}") from exc


def _as_int_list(cfg, key, default=None):
    if key not in cfg:
        if default is None:
            raise ConfigError(f"missing required key {key!r}")
        return list(default)
    value = cfg[key]
    try:
        if ".." in value:
            lo, hi = value.split("..")
            return list(range(int(lo), int(hi) + 1))
        return [int(v) for v in value.split(",") if v.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: bad integer list: {cfg[key]!r}") from exc


def parse_rank_policy(text: str) -> RankPolicy | None:
    """'default', 'analytic:<r>', 'relative:<tol>' or 'absolute:<tol>'."""
    if text == "default":
        return None
    if ":" not in text:
        raise ConfigError(f"bad rank_policy {text!r}")
    mode, arg = text.split(":", 1)
    try:
        if mode == "analytic":
            return RankPolicy.analytic(int(arg))
        if mode == "relative":
            return RankPolicy.relative(float(arg))
        if mode == "absolute":
            return RankPolicy.absolute(float(arg))
    except (ValueError, ValidationError) as exc:
        raise ConfigError(f"bad rank_policy {text!r}: {exc}") from exc
    raise ConfigError(f"bad rank_policy mode {mode!r}")


def _cov_spectrum(cfg, d: int) -> np.ndarray:
    text = cfg.get("cov_spectrum", "ones")
    if text == "ones":
        return np.ones(d)
    if text.startswith("logspace:"):
        try:
            a, b = (float(v) for v in text[len("logspace:"):].split(","))
        except ValueError as exc:
            raise ConfigError(f"bad cov_spectrum {text!r}") from exc
        return np.logspace(a, b, d)
    values = np.array(
        [float(v) for v in text.split(",") if v.strip() != ""], dtype=np.float64
    )
    if values.size != d:
        raise ConfigError(f"cov_spectrum lists {values.size} values, need d={d}")
    return values


def load_dataset(cfg: dict) -> Dataset:
    source = cfg.get("data", "synthetic")
    if source == "synthetic":
        d = _as_int(cfg, "d")
        n = _as_int(cfg, "n")
        ds = synthesize_gaussian(
            d=d, n=n, covariance_spectrum=_cov_spectrum(cfg, d),
            seed=_as_int(cfg, "data_seed", 0),
        )
    elif source == "csv":
        if "data_path" not in cfg:
            raise ConfigError("data=csv requires data_path")
        ds = load_csv(cfg["data_path"], label_column=_as_bool(cfg, "label_column"))
    elif source == "idx":
        if "data_path" not in cfg:
            raise ConfigError("data=idx requires data_path")
        ds = load_idx(
            cfg["data_path"], limit=_as_int(cfg, "limit", 0),
            seed=_as_int(cfg, "data_seed", 0),
        )
    else:
        raise ConfigError(f"unknown data source {cfg['data']!r}")
    if _as_bool(cfg, "whiten"):
        ds, _ = whiten(ds, eigen_floor=_as_float(cfg, "eigen_floor", 1e-10))
    return ds


def build_spec(cfg: dict, data_d: int, overrides: dict | None = None) -> NetworkSpec:
    """Assemble a NetworkSpec from config keys (plus per-cell overrides)."""
    values = dict(cfg)
    for key, val in (overrides or {}).items():
        values[key] = str(val)
    kind = values.get("kind", LINEAR_DEEP)
    beta = _as_float(values, "beta", 0.0)
    alpha = _as_float(values, "alpha", 0.01)
    if kind == LINEAR_CONV:
        filters = _as_int(values, "filters")
        kernel = _as_int(values, "kernel")
        conv_layers = ((filters, 1, kernel), (filters, filters, kernel))
        return NetworkSpec(kind=kind, dims=(data_d,), conv_layers=conv_layers)
    if "dims" in values:
        dims = tuple(_as_int_list(values, "dims"))
    else:
        k = _as_int(values, "k")
        m = _as_int(values, "m")
        depth = _as_int(values, "L", 2)
        if depth < 1:
            raise ConfigError("L must be >= 1")
        dims = (data_d, *([m] * (depth - 1)), k)
    if dims[0] != data_d:
        raise ConfigError(f"dims start with {dims[0]} but data has d={data_d}")
    try:
        return NetworkSpec(kind=kind, dims=dims, beta=beta, alpha=alpha)
    except SpecError as exc:
        raise ConfigError(str(exc)) from exc


def init_params(spec: NetworkSpec, cfg: dict, seed: int) -> Params:
    scheme = cfg.get("init", "kaiming_normal")
    if scheme == "aligned_svd":
        return init_aligned_svd(spec, seed=seed)
    return init(spec, scheme=scheme, seed=seed,
                sigma=_as_float(cfg, "init_sigma", 1.0))


# ---------------------------------------------------------------------------
# Result rows and CSV output


@dataclass
class ResultRow:
    experiment: str = ""
    seed: object = None
    L: object = None
    m: object = None
    d: object = None
    k: object = None
    n: object = None
    beta: object = None
    alpha: object = None
    fraction: object = None
    epoch: object = None
    kappa: object = None
    bound_convex: object = None
    bound_max: object = None
    bound_other: object = None
    kappa_sigma: object = None
    rank_policy: object = None
    wall_ms: object = None

    def cells(self) -> list[str]:
        return [_fmt(getattr(self, f.name)) for f in fields(self)]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return ""
        return repr(value)
    return str(value)


def write_rows(path: str, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            cells = row.cells() if isinstance(row, ResultRow) else [_fmt(v) for v in row]
            fh.write(",".join(cells) + "\n")


# ---------------------------------------------------------------------------
# Metric evaluation shared by analyze / sweep / prune


def evaluate_instance(spec: NetworkSpec, params: Params, ds: Dataset,
                      policy: RankPolicy | None):
    """kappa plus every applicable bound for one (spec, params, dataset)."""
    start = time.perf_counter()
    sigma = empirical_covariance(ds)
    terms = ()
    bound_other = None
    if spec.kind == LINEAR_DEEP:
        gn = gn_linear(params, sigma)
        convex_rep = bound_deep_convex(params, sigma)
        convex, maximum = convex_rep.value, bound_deep_max(params, sigma).value
        kappa_sigma, terms = convex_rep.kappa_sigma, convex_rep.terms
    elif spec.kind == RESIDUAL:
        gn = gn_residual(params, spec.beta, sigma)
        convex_rep = bound_residual_convex(params, spec.beta, sigma)
        convex = convex_rep.value
        maximum = bound_residual_max(params, spec.beta, sigma).value
        kappa_sigma, terms = convex_rep.kappa_sigma, convex_rep.terms
    elif spec.kind == LEAKY_ONE_HIDDEN:
        v, w = params.layers
        gn, gamma = gn_leaky(w, v, ds.X, spec.alpha)
        convex = maximum = None
        try:
            bound_other = bound_leaky(w, v, ds.X, spec.alpha, gamma).value
        except DegenerateDataError:
            # Valid only when the data Gram and unit-weight Gram are both
            # nondegenerate; kappa itself is still well defined.
            bound_other = None
        kappa_sigma = pseudo_condition_number(sym_eigendecompose(sigma))
    elif spec.kind == LINEAR_CONV:
        lifted = Params(layers=tuple(lift_conv(spec, params)))
        gn = gn_conv([w for w in lifted.layers], sigma)
        convex_rep = bound_deep_convex(lifted, sigma)
        convex, maximum = convex_rep.value, bound_deep_max(lifted, sigma).value
        kappa_sigma, terms = convex_rep.kappa_sigma, convex_rep.terms
    else:
        raise ConfigError(f"kind {spec.kind!r} has no analytic GN builder")
    spectrum = gn.spectrum()
    kappa = pseudo_condition_number(spectrum, policy)
    wall_ms = (time.perf_counter() - start) * 1e3
    return {
        "kappa": kappa, "bound_convex": convex, "bound_max": maximum,
        "bound_other": bound_other, "kappa_sigma": kappa_sigma,
        "wall_ms": wall_ms, "spectrum": spectrum, "terms": terms,
    }


def _shape_columns(spec: NetworkSpec, ds: Dataset) -> dict:
    if spec.kind == LINEAR_CONV:
        return {
            "L": spec.depth, "m": spec.conv_layers[0][0], "d": ds.d,
            "k": spec.conv_lengths()[-1] * spec.conv_layers[-1][0], "n": ds.n,
        }
    hidden = spec.dims[1:-1]
    return {
        "L": spec.depth, "m": max(hidden) if hidden else None, "d": ds.d,
        "k": spec.dims[-1], "n": ds.n,
    }


def _policy_column(policy: RankPolicy | None) -> str:
    return "default" if policy is None else policy.describe()


# ---------------------------------------------------------------------------
# SVG rendering (native, line charts with median +/- std bands)


def render_svg(series, title: str, x_label: str, y_label: str) -> str:
    """Render (label, xs, medians, stds) series as a minimal SVG line chart."""
    width, height = 640, 420
    left, right, top, bottom = 60, 20, 30, 50
    xs_all = [x for _, xs, _, _ in series for x in xs]
    ys_low = [m - s for _, _, med, std in series for m, s in zip(med, std)]
    ys_high = [m + s for _, _, med, std in series for m, s in zip(med, std)]
    x_min, x_max = min(xs_all), max(xs_all)
    y_min, y_max = min(ys_low), max(ys_high)
    if x_max == x_min:
        x_max = x_min + 1.0
    if y_max == y_min:
        y_max = y_min + 1.0

    def px(x):
        return left + (x - x_min) / (x_max - x_min) * (width - left - right)

    def py(y):
        return height - bottom - (y - y_min) / (y_max - y_min) * (height - top - bottom)

    colors = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" '
        f'font-size="14">{title}</text>',
        f'<text x="{width / 2:.1f}" y="{height - 10}" text-anchor="middle" '
        f'font-size="12">{x_label}</text>',
        f'<text x="14" y="{height / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {height / 2:.1f})">{y_label}</text>',
        f'<line x1="{left}" y1="{height - bottom}" x2="{width - right}" '
        f'y2="{height - bottom}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{height - bottom}" '
        f'stroke="black"/>',
    ]
    for i in range(5):
        xv = x_min + (x_max - x_min) * i / 4
        yv = y_min + (y_max - y_min) * i / 4
        parts.append(
            f'<text x="{px(xv):.1f}" y="{height - bottom + 16}" '
            f'text-anchor="middle" font-size="10">{xv:.3g}</text>'
        )
        parts.append(
            f'<text x="{left - 6}" y="{py(yv) + 3:.1f}" text-anchor="end" '
            f'font-size="10">{yv:.3g}</text>'
        )
    for idx, (label, xs, med, std) in enumerate(series):
        color = colors[idx % len(colors)]
        upper = [(px(x), py(m + s)) for x, m, s in zip(xs, med, std)]
        lower = [(px(x), py(m - s)) for x, m, s in zip(xs, med, std)]
        band = " ".join(f"{x:.2f},{y:.2f}" for x, y in upper + lower[::-1])
        parts.append(
            f'<polygon points="{band}" fill="{color}" fill-opacity="0.15" '
            f'stroke="none"/>'
        )
        line = " ".join(f"{px(x):.2f},{py(m):.2f}" for x, m in zip(xs, med))
        parts.append(
            f'<polyline points="{line}" fill="none" stroke="{color}" '
            f'stroke-width="1.5"/>'
        )
        parts.append(
            f'<text x="{width - right - 4}" y="{top + 14 * (idx + 1)}" '
            f'text-anchor="end" font-size="11" fill="{color}">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# ---------------------------------------------------------------------------
# Subcommands


def cmd_analyze(cfg: dict, out_dir: str, args) -> int:
    ds = load_dataset(cfg)
    spec = build_spec(cfg, ds.d)
    policy = parse_rank_policy(cfg.get("rank_policy", "default"))
    seeds = _as_int_list(cfg, "seeds", [0])
    if args.seed_override is not None:
        seeds = [args.seed_override]
    seed = seeds[0]
    params = init_params(spec, cfg, seed)
    result = evaluate_instance(spec, params, ds, policy)
    label = cfg.get("experiment", "analyze")
    row = ResultRow(
        experiment=label, seed=seed, beta=spec.beta, alpha=spec.alpha,
        kappa=result["kappa"], bound_convex=result["bound_convex"],
        bound_max=result["bound_max"], bound_other=result["bound_other"],
        kappa_sigma=result["kappa_sigma"], rank_policy=_policy_column(policy),
        **_shape_columns(spec, ds),
    )
    write_rows(os.path.join(out_dir, "analysis.csv"), RESULT_COLUMNS, [row])
    if result["terms"]:
        term_rows = [
            (t.ell, t.kappa2_above, t.kappa2_below, t.sig2min_above,
             t.sig2min_below, t.alpha_l, t.gamma_l, t.weighted)
            for t in result["terms"]
        ]
        write_rows(os.path.join(out_dir, "terms.csv"), TERM_COLUMNS, term_rows)
    if args.spectrum:
        spec_rows = [(i, v) for i, v in enumerate(result["spectrum"].values)]
        write_rows(os.path.join(out_dir, "spectrum.csv"),
                   ("index", "eigenvalue"), spec_rows)
        write_rows(os.path.join(out_dir, "rank_sensitivity.csv"),
                   ("rank", "kappa"), rank_sensitivity_sweep(result["spectrum"]))
    log.info("analyze: kappa=%g", result["kappa"])
    return 0


_SWEEP_AXES = ("L", "m", "beta", "alpha", "kernel", "filters")


def cmd_sweep(cfg: dict, out_dir: str, args) -> int:
    axis = cfg.get("axis")
    if axis not in _SWEEP_AXES:
        raise ConfigError(f"axis must be one of {_SWEEP_AXES}, got {axis!r}")
    values = _as_float_list(cfg, "values")
    if not values:
        raise ConfigError("sweep values must be non-empty")
    if axis in ("L", "m", "kernel", "filters"):
        values = [int(v) for v in values]
    seeds = _as_int_list(cfg, "seeds", [0])
    if args.seed_override is not None:
        seeds = [args.seed_override]
    ds = load_dataset(cfg)
    policy = parse_rank_policy(cfg.get("rank_policy", "default"))
    label = cfg.get("experiment", "sweep")

    def run_cell(cell):
        cell_idx, value, seed = cell
        spec = build_spec(cfg, ds.d, overrides={axis: value})
        params = init_params(spec, cfg, seed)
        result = evaluate_instance(spec, params, ds, policy)
        return ResultRow(
            experiment=f"{label}:{axis}={value}", seed=seed,
            beta=spec.beta, alpha=spec.alpha, kappa=result["kappa"],
            bound_convex=result["bound_convex"], bound_max=result["bound_max"],
            bound_other=result["bound_other"],
            kappa_sigma=result["kappa_sigma"],
            rank_policy=_policy_column(policy),
            **_shape_columns(spec, ds),
        )

    cells = [
        (ci * len(seeds) + si, value, seed)
        for ci, value in enumerate(values)
        for si, seed in enumerate(seeds)
    ]
    jobs = args.jobs or os.cpu_count() or 1
    results: list[ResultRow | None] = [None] * len(cells)
    failures = []
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = {pool.submit(run_cell, cell): cell for cell in cells}
        for future, cell in futures.items():
            try:
                results[cell[0]] = future.result()
            except GnLensError as exc:
                failures.append((cell, exc))
                log.warning("cell %s failed: %s", cell, exc)
    rows = [r for r in results if r is not None]
    if failures:
        with open(os.path.join(out_dir, "errors.log"), "w",
                  encoding="utf-8", newline="\n") as fh:
            for (idx, value, seed), exc in failures:
                fh.write(f"cell {idx} ({axis}={value}, seed={seed}): {exc}\n")
    if not rows:
        raise DegenerateDataError("every sweep cell failed")
    write_rows(os.path.join(out_dir, "sweep.csv"), RESULT_COLUMNS, rows)
    if args.svg:
        per_value = {}
        for row, (_, value, _) in zip(results, cells):
            if row is not None:
                per_value.setdefault(float(value), []).append(row.kappa)
        xs = sorted(per_value)
        med = [float(np.median(per_value[x])) for x in xs]
        std = [float(np.std(per_value[x])) for x in xs]
        svg = render_svg([("kappa", xs, med, std)],
                         title=f"{label}: kappa vs {axis}",
                         x_label=axis, y_label="kappa")
        with open(os.path.join(out_dir, "sweep.svg"), "w",
                  encoding="utf-8", newline="\n") as fh:
            fh.write(svg)
    return 0


def _teacher_targets(cfg: dict, spec: NetworkSpec, ds: Dataset) -> Dataset:
    if ds.Y is not None:
        return ds
    rng = np.random.default_rng(_as_int(cfg, "teacher_seed", 10_000))
    k = spec.dims[-1]
    z = rng.standard_normal((k, ds.d)) / np.sqrt(ds.d)
    return Dataset(X=ds.X, Y=z @ ds.X, name=ds.name)


def _train_config(cfg: dict, seed: int) -> TrainConfig:
    return TrainConfig(
        learning_rate=_as_float(cfg, "lr"),
        epochs=_as_int(cfg, "epochs"),
        batch_size=_as_int(cfg, "batch_size", 0),
        seed=seed,
        trace_every=_as_int(cfg, "trace_every", 1),
    )


def cmd_train(cfg: dict, out_dir: str, args) -> int:
    ds = load_dataset(cfg)
    spec = build_spec(cfg, ds.d)
    policy = parse_rank_policy(cfg.get("rank_policy", "default"))
    seeds = _as_int_list(cfg, "seeds", [0])
    if args.seed_override is not None:
        seeds = [args.seed_override]
    label = cfg.get("experiment", "train")
    shape = None
    rows = []
    traces = []
    for seed in seeds:
        params = init_params(spec, cfg, seed)
        with_targets = _teacher_targets(cfg, spec, ds)
        shape = _shape_columns(spec, with_targets)
        _, trace = train(spec, params, with_targets, _train_config(cfg, seed),
                         policy)
        traces.append((seed, trace))
        for cp in trace.checkpoints:
            is_leaky = spec.kind == LEAKY_ONE_HIDDEN
            rows.append(ResultRow(
                experiment=label, seed=seed, beta=spec.beta, alpha=spec.alpha,
                epoch=cp.epoch, kappa=cp.kappa,
                bound_convex=None if is_leaky else cp.bound_convex,
                bound_max=None if is_leaky else cp.bound_max,
                bound_other=cp.bound_convex if is_leaky else None,
                rank_policy=_policy_column(policy),
                **shape,
            ))
        if trace.diverged:
            log.warning("seed %d diverged", seed)
    write_rows(os.path.join(out_dir, "trace.csv"), RESULT_COLUMNS, rows)
    if args.svg and any(t.checkpoints for _, t in traces):
        panels = []
        for name, grab in (("loss", lambda c: c.loss), ("kappa", lambda c: c.kappa)):
            series = [
                (f"{name} seed {seed}",
                 [c.epoch for c in t.checkpoints],
                 [grab(c) for c in t.checkpoints],
                 [0.0] * len(t.checkpoints))
                for seed, t in traces if t.checkpoints
            ]
            panels.append((name, render_svg(series, title=f"{label}: {name}",
                                            x_label="epoch", y_label=name)))
        for name, svg in panels:
            with open(os.path.join(out_dir, f"trace_{name}.svg"), "w",
                      encoding="utf-8", newline="\n") as fh:
                fh.write(svg)
    return 0


def cmd_prune(cfg: dict, out_dir: str, args) -> int:
    ds = load_dataset(cfg)
    spec = build_spec(cfg, ds.d)
    policy = parse_rank_policy(cfg.get("rank_policy", "default"))
    seeds = _as_int_list(cfg, "seeds", [0])
    if args.seed_override is not None:
        seeds = [args.seed_override]
    fractions = _as_float_list(cfg, "fractions", [0.0, 0.5, 0.9])
    label = cfg.get("experiment", "prune")
    with_targets = _teacher_targets(cfg, spec, ds)
    shape = _shape_columns(spec, with_targets)
    rows = []
    for seed in seeds:
        base = init_params(spec, cfg, seed)
        for fraction in fractions:
            pruned = prune_by_magnitude(base, fraction)
            result = evaluate_instance(spec, pruned, with_targets, policy)
            rows.append(ResultRow(
                experiment=label, seed=seed, beta=spec.beta, alpha=spec.alpha,
                fraction=fraction, epoch=0, kappa=result["kappa"],
                bound_convex=result["bound_convex"],
                bound_max=result["bound_max"],
                bound_other=result["bound_other"],
                kappa_sigma=result["kappa_sigma"],
                rank_policy=_policy_column(policy),
                **shape,
            ))
            _, trace = train(spec, pruned, with_targets,
                             _train_config(cfg, seed), policy)
            if trace.checkpoints:
                cp = trace.checkpoints[-1]
                is_leaky = spec.kind == LEAKY_ONE_HIDDEN
                rows.append(ResultRow(
                    experiment=label, seed=seed, beta=spec.beta,
                    alpha=spec.alpha, fraction=fraction, epoch=cp.epoch,
                    kappa=cp.kappa,
                    bound_convex=None if is_leaky else cp.bound_convex,
                    bound_max=None if is_leaky else cp.bound_max,
                    bound_other=cp.bound_convex if is_leaky else None,
                    rank_policy=_policy_column(policy),
                    **shape,
                ))
    write_rows(os.path.join(out_dir, "prune.csv"), RESULT_COLUMNS, rows)
    return 0


def cmd_whiten(cfg: dict, out_dir: str, args) -> int:
    raw_cfg = dict(cfg)
    raw_cfg["whiten"] = "false"
    ds = load_dataset(raw_cfg)
    white, report = whiten(ds, eigen_floor=_as_float(cfg, "eigen_floor", 1e-10))
    write_csv(os.path.join(out_dir, "whitened.csv"), white)
    write_rows(
        os.path.join(out_dir, "whiten.csv"),
        ("kappa_before", "kappa_after", "eigen_floor"),
        [(report.kappa_before, report.kappa_after, report.eigen_floor)],
    )
    log.info("whiten: kappa %g -> %g", report.kappa_before, report.kappa_after)
    return 0


COMMANDS = {
    "analyze": cmd_analyze,
    "sweep": cmd_sweep,
    "train": cmd_train,
    "prune": cmd_prune,
    "whiten": cmd_whiten,
}


# ---------------------------------------------------------------------------
# Entry point


def _setup_logging() -> None:
    level_name = os.environ.get("GN_LENS_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO,
              "debug": logging.DEBUG}
    logging.basicConfig(
        level=levels.get(level_name, logging.ERROR),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gn-lens",
        description="Gauss-Newton conditioning experiments for small networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="key=value config file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--jobs", type=int, default=0,
                       help="parallel workers (0 = all cores)")
        p.add_argument("--svg", action="store_true",
                       help="also render SVG charts")
        p.add_argument("--spectrum", action="store_true",
                       help="dump the full eigenvalue list (analyze)")
        p.add_argument("--seed-override", type=int, default=None,
                       help="replace the config's seed list with one seed")
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config, args.command)
        out_dir = args.out
        os.makedirs(out_dir, exist_ok=True)
        return COMMANDS[args.command](cfg, out_dir, args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (FormatError, OSError) as exc:
        log.error("i/o error: %s", exc)
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4
    except GnLensError as exc:
        log.error("numeric error: %s", exc)
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
