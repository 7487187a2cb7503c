"""Three-stage training for the additive model.

One cycle runs backfitting over the numerical features to partial
convergence (Stage 1), a joint accelerated ridge solve for every
categorical weight at once (Stage 2), and seasonal-trend partial learning
per temporal feature (Stage 3); cycles repeat until the penalized
objective stalls.  With the penalized backend every stage is an exact
block minimization, so the objective is non-increasing and the fixed
point solves the model's normal equations; a dense direct solver of that
same system is included as the optimality oracle.

Two Stage 1 accelerations are available: intelligent sampling (shape
curves initialized from a subsample whose size comes from a pilot-based
variation bound) and dynamic feature iteration (features smoothed in
descending order of estimated predictive power).  Both change only the
path, not the fixed point.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.linalg import cho_solve_banded

from .categorical import (
    ConvergenceError,
    RidgeSystem,
    gram_assemble,
    nga_ridge_solve,
    power_iteration_max_eig,
    ridge_objective,
)
from .data import (
    build_homogeneous_encoding,
    compress_time_points,
    partition_phases,
)
from .model import FxamModel, ShapeCurve, TemporalCurves
from .smoothers import (
    KernelSmootherPlan,
    curvature_penalty,
    default_bandwidth,
    penalized_apply,
    penalized_factor,
    second_difference_matrix,
)
from .temporal import DecomposeConfig, decompose

BACKENDS = ("penalized", "fast-kernel")


@dataclass(frozen=True)
class TemporalRule:
    """Seasonal period and time step for one temporal feature."""

    period: int
    tau: int = 1

    def __post_init__(self):
        if self.period <= 1:
            raise ValueError("seasonal period must exceed 1")
        if self.tau <= 0:
            raise ValueError("tau must be a positive integer")


@dataclass(frozen=True)
class TrainConfig:
    """Every training hyperparameter in one place.

    ``smoothness`` is the curvature penalty for numerical features,
    ``categorical_ridge`` the L2 weight penalty, ``trend_smoothness`` and
    ``seasonal_smoothness`` the temporal penalties.  The kernel backend
    ignores the curvature penalties and uses the bandwidth rule
    ``bandwidth_factor * range * n^(-1/5)`` instead.
    """

    backend: str = "fast-kernel"
    smoothness: float = 1.0
    categorical_ridge: float = 1.0
    trend_smoothness: float = 1.0
    seasonal_smoothness: float = 1.0
    bandwidth_factor: float = 0.5
    temporal_rules: dict = field(default_factory=dict)  # name -> TemporalRule
    stage_tol_factor: float = 1e-4     # Stage 1 partial convergence, x sd(y)
    max_stage1_passes: int = 100
    inner_tol_factor: float = 1e-6     # decomposition alternation
    max_inner_iterations: int = 50
    outer_tol: float = 1e-6            # relative objective decrease per cycle
    max_cycles: int = 50
    solver_tol: float = 1e-8           # categorical gradient residual
    sampling: bool = True
    sampling_gamma: float = 1.0
    pilot_size: int = 10_000
    sampling_threshold: int = 100_000  # records needed to activate sampling
    dynamic_ordering: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}")
        for label, value in (
            ("stage_tol_factor", self.stage_tol_factor),
            ("inner_tol_factor", self.inner_tol_factor),
            ("outer_tol", self.outer_tol),
            ("solver_tol", self.solver_tol),
        ):
            if value <= 0:
                raise ValueError(f"{label} must be positive")
        for label, value in (
            ("smoothness", self.smoothness),
            ("trend_smoothness", self.trend_smoothness),
            ("seasonal_smoothness", self.seasonal_smoothness),
        ):
            if value < 0:
                raise ValueError(f"{label} must be nonnegative")
        if self.categorical_ridge <= 0:
            raise ValueError("categorical_ridge must be positive")
        if self.sampling_gamma <= 0:
            raise ValueError("sampling_gamma must be positive")
        for rule in self.temporal_rules.values():
            if not isinstance(rule, TemporalRule):
                raise ValueError("temporal_rules values must be TemporalRule")


@dataclass
class PilotEstimate:
    """Subsample summaries of one feature's marginal shape.

    ``variance`` is the residual variance around the pilot curve,
    ``sup_squared`` the largest squared curve value, and ``max_slope`` the
    steepest secant between consecutive knots.
    """

    variance: float
    sup_squared: float
    max_slope: float


@dataclass
class TrainState:
    """Mutable fitting state; the bookkeeping identity
    ``residual == y - intercept - sum(all fitted components)`` holds at
    the end of every stage, and every numerical component has record mean
    zero."""

    intercept: float
    residual: np.ndarray
    numerical_curves: dict      # name -> values on that feature's knots
    numerical_fits: dict        # name -> record-space vector
    beta: np.ndarray
    categorical_fit: np.ndarray
    temporal_components: dict   # name -> TemporalComponents
    trend_fits: dict            # name -> record-space vector
    seasonal_fits: dict
    cycles: int = 0
    converged: bool = False
    objective_history: list = field(default_factory=list)
    stage_objectives: list = field(default_factory=list)  # (cycle, stage, L)
    stage1_passes: list = field(default_factory=list)     # per cycle

    def fitted(self, y):
        return y - self.residual


class _NumericalCache:
    """Per-feature smoothing structures, fixed for the whole run."""

    def __init__(self, x, config):
        self.x = np.asarray(x, dtype=float)
        self.knots, self.inverse, self.counts = np.unique(
            self.x, return_inverse=True, return_counts=True
        )
        self.counts = self.counts.astype(float)
        self.bandwidth = default_bandwidth(self.x, config.bandwidth_factor)
        # centered scatter and knot gaps back the ordering heuristic
        self.x_scatter = float(np.sum((self.x - self.x.mean()) ** 2))
        self.knot_gaps = np.diff(self.knots)
        self.factor = None
        self.plan = None
        if config.backend == "penalized":
            if self.knots.size > 2 and config.smoothness > 0:
                self.factor = penalized_factor(
                    self.knots, config.smoothness, self.counts
                )
        else:
            # float64 accumulation: under the bandwidth rule the window
            # cancellation amplifies roundoff by ~n^0.4, orders of
            # magnitude below every training tolerance
            self.plan = KernelSmootherPlan(
                self.knots, self.bandwidth, self.counts, dtype=np.float64
            )
        self.config = config

    def knot_means(self, record_values):
        sums = np.bincount(self.inverse, weights=record_values,
                           minlength=self.knots.size)
        return sums / self.counts

    def smooth(self, knot_target):
        if self.plan is not None:
            return self.plan.smooth(knot_target)
        if self.factor is None:
            return knot_target.copy()
        return penalized_apply(self.factor, knot_target, self.counts)


class _TemporalCache:
    def __init__(self, name, times, y, rule, config):
        self.rule = rule
        self.series = compress_time_points(times, y)
        self.partition = partition_phases(self.series, rule.tau, rule.period)
        self.weights = self.series.weights.astype(float)
        self.decompose_config = DecomposeConfig(
            backend=config.backend,
            trend_penalty=config.trend_smoothness,
            seasonal_penalty=config.seasonal_smoothness,
            bandwidth_factor=config.bandwidth_factor,
            tol_factor=config.inner_tol_factor,
            max_iterations=config.max_inner_iterations,
        )

    def knot_means(self, record_values):
        sums = np.bincount(self.series.back_map, weights=record_values,
                           minlength=self.series.n_points)
        return sums / self.weights


class TrainingProblem:
    """Immutable per-dataset context shared by the stages."""

    def __init__(self, dataset, config):
        self.dataset = dataset
        self.config = config
        self.y = dataset.response
        self.n = dataset.n_records
        self.scale = float(np.std(self.y))
        self.numerical = {
            name: _NumericalCache(col, config)
            for name, col in dataset.numerical.items()
        }
        self.encoding = build_homogeneous_encoding(dataset)
        if self.encoding.cardinality:
            seeded = gram_assemble(
                self.encoding, np.zeros(self.n), config.categorical_ridge
            )
            self.gram = seeded.gram
            self.gram_lambda_max = power_iteration_max_eig(self.gram)
            # the intercept is solved jointly with the categorical block
            # (the two share the constant direction, and alternating them
            # converges at the shrinking factor of that direction, which
            # approaches 1 as records grow); the augmented system keeps
            # the intercept unpenalized
            counts = self._label_counts()
            if sp.issparse(self.gram):
                self.gram_joint = sp.bmat(
                    [
                        [np.array([[float(self.n)]]), counts[None, :]],
                        [counts[:, None], self.gram],
                    ],
                    format="csr",
                )
            else:
                c = self.encoding.cardinality
                joint = np.zeros((c + 1, c + 1))
                joint[0, 0] = float(self.n)
                joint[0, 1:] = counts
                joint[1:, 0] = counts
                joint[1:, 1:] = self.gram
                self.gram_joint = joint
            self.gram_joint_lambda_max = power_iteration_max_eig(
                self.gram_joint
            )
        else:
            self.gram = None
            self.gram_lambda_max = None
            self.gram_joint = None
            self.gram_joint_lambda_max = None
        self.temporal = {}
        for name, times in dataset.temporal.items():
            rule = config.temporal_rules.get(name)
            if rule is None:
                raise ValueError(
                    f"temporal feature '{name}' has no TemporalRule "
                    "(period and tau) in the training config"
                )
            self.temporal[name] = _TemporalCache(
                name, times, self.y, rule, config
            )

    def _label_counts(self):
        rows = self.encoding.row_indices
        return np.bincount(
            rows.ravel(), minlength=self.encoding.cardinality
        ).astype(float)

    def ridge_system(self, rhs):
        return RidgeSystem(
            gram=self.gram, rhs=rhs, ridge=self.config.categorical_ridge
        )

    def joint_ridge_system(self, target):
        """Augmented (intercept, weights) system for a record-space target."""
        rhs = np.concatenate(
            [[float(target.sum())], self.categorical_rhs(target)]
        )
        return RidgeSystem(
            gram=self.gram_joint, rhs=rhs,
            ridge=self.config.categorical_ridge,
        )

    def categorical_rhs(self, target):
        rows = self.encoding.row_indices
        q = rows.shape[1]
        return np.bincount(
            rows.ravel(), weights=np.repeat(target, q),
            minlength=self.encoding.cardinality,
        )

    def categorical_expand(self, beta):
        rows = self.encoding.row_indices
        if rows.shape[1] == 0:
            return np.zeros(self.n)
        return beta[rows].sum(axis=1)


def initial_state(problem):
    """Intercept at the response mean, every component at zero."""
    y = problem.y
    intercept = float(y.mean())
    n = problem.n
    return TrainState(
        intercept=intercept,
        residual=y - intercept,
        numerical_curves={
            name: np.zeros(cache.knots.size)
            for name, cache in problem.numerical.items()
        },
        numerical_fits={name: np.zeros(n) for name in problem.numerical},
        beta=np.zeros(problem.encoding.cardinality),
        categorical_fit=np.zeros(n),
        temporal_components={},
        trend_fits={name: np.zeros(n) for name in problem.temporal},
        seasonal_fits={name: np.zeros(n) for name in problem.temporal},
    )


# --- Stage 1: numerical backfitting ----------------------------------------

def pilot_estimates(x, y, pilot_size, seed, backend="penalized",
                    smoothness=1.0, bandwidth_factor=0.5, indices=None):
    """Shape summaries from a small uniform subsample.

    Fits the configured smoother on ``min(pilot_size, n)`` records and
    reports residual variance, the largest squared curve value, and the
    steepest knot-to-knot slope (zero for a constant feature).
    ``indices`` short-circuits the subsample draw when the caller pilots
    many features against one shared subsample.
    """
    if pilot_size < 10:
        raise ValueError("pilot size must be at least 10")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    if indices is not None:
        x, y = x[indices], y[indices]
    elif n > pilot_size:
        idx = np.random.default_rng(seed).choice(n, pilot_size, replace=False)
        x, y = x[idx], y[idx]
    knots, inverse, counts = np.unique(
        x, return_inverse=True, return_counts=True
    )
    counts = counts.astype(float)
    target = np.bincount(inverse, weights=y, minlength=knots.size) / counts
    if backend == "penalized":
        if knots.size > 2 and smoothness > 0:
            factor = penalized_factor(knots, smoothness, counts)
            curve = penalized_apply(factor, target, counts)
        else:
            curve = target
    else:
        h = default_bandwidth(x, bandwidth_factor)
        plan = KernelSmootherPlan(knots, h, counts, dtype=np.float64)
        curve = plan.smooth(target)
    fit = curve[inverse]
    variance = float(np.mean((y - fit) ** 2))
    sup_squared = float(np.max(curve * curve))
    if knots.size >= 2:
        max_slope = float(np.max(np.abs(np.diff(curve) / np.diff(knots))))
    else:
        max_slope = 0.0
    return PilotEstimate(variance=variance, sup_squared=sup_squared,
                         max_slope=max_slope)


def estimate_sample_size(pilots, gamma, floor):
    """Initialization sample size from the pilot variation bound.

    ``ceil(max_i gamma * (variance_i + sup_squared_i) * max_slope_i)``,
    floored at the pilot size so the estimate never shrinks below what
    was already affordable.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    worst = 0.0
    for pilot in pilots:
        worst = max(
            worst,
            gamma * (pilot.variance + pilot.sup_squared) * pilot.max_slope,
        )
    return int(max(floor, math.ceil(worst)))


def predictive_power(x, residual, max_slope, support, bandwidth):
    """Ordering score: explained-variance gain minus a smoothing-bias term.

    ``2 * TSS * r^2 / (n - 2) - (2 * max_slope * support * bandwidth)^2``
    with r the Pearson correlation between the feature and the current
    residual; r is defined as zero when either side has no variance.
    """
    x = np.asarray(x, dtype=float)
    residual = np.asarray(residual, dtype=float)
    n = x.size
    if n < 3:
        raise ValueError("need at least 3 records")
    rc = residual - residual.mean()
    xc = x - x.mean()
    tss = float(rc @ rc)
    xvar = float(xc @ xc)
    if tss == 0.0 or xvar == 0.0:
        r_sq = 0.0
    else:
        r = float(xc @ rc) / math.sqrt(xvar * tss)
        r_sq = r * r
    bias = 2.0 * max_slope * support * bandwidth
    return 2.0 * tss * r_sq / (n - 2) - bias * bias


def order_features(powers):
    """Descending stable order; ties keep their original position."""
    powers = np.asarray(powers, dtype=float)
    return np.argsort(-powers, kind="stable")


def _stage1_order(problem, state, config):
    """Feature order for the next pass; descending predictive power.

    Inlines :func:`predictive_power` against cached per-feature scatter
    so one ordering costs one dot product per feature.
    """
    names = list(problem.numerical)
    if not config.dynamic_ordering or len(names) < 2 or problem.n < 3:
        return names
    residual = state.residual
    centered = residual - residual.mean()
    tss = float(centered @ centered)
    n = problem.n
    powers = np.empty(len(names))
    for i, name in enumerate(names):
        cache = problem.numerical[name]
        curve = state.numerical_curves[name]
        if cache.knots.size >= 2:
            slope = float(np.max(np.abs(
                np.diff(curve) / cache.knot_gaps
            )))
        else:
            slope = 0.0
        if tss == 0.0 or cache.x_scatter == 0.0:
            r_sq = 0.0
        else:
            # sum(centered) == 0, so the plain dot is the centered one
            r_sq = float(cache.x @ centered) ** 2 / (cache.x_scatter * tss)
        bias = 2.0 * slope * cache.bandwidth
        powers[i] = 2.0 * tss * r_sq / (n - 2) - bias * bias
    return [names[i] for i in order_features(powers)]


def stage1_backfit(problem, state, config=None):
    """Backfit the numerical features to partial convergence.

    Each update smooths the feature's partial residual, recentres the
    curve to record mean zero, and folds the mean into the intercept;
    passes repeat until the largest component change per pass falls
    under ``stage_tol_factor * sd(y)``.
    """
    config = config or problem.config
    if not problem.numerical:
        return state
    tol = config.stage_tol_factor * max(problem.scale, 1e-12)
    n = problem.n
    passes = 0
    # the predictive-power order is refreshed once per stage entry (that
    # is, once per outer cycle) and reused by every pass within it
    order = _stage1_order(problem, state, config)
    for _ in range(config.max_stage1_passes):
        passes += 1
        max_change = 0.0
        for name in order:
            cache = problem.numerical[name]
            f_old = state.numerical_fits[name]
            target = cache.knot_means(state.residual + f_old)
            curve = cache.smooth(target)
            mean = float(cache.counts @ curve) / n
            curve = curve - mean
            f_new = curve[cache.inverse]
            state.residual += f_old - f_new - mean
            state.intercept += mean
            state.numerical_curves[name] = curve
            state.numerical_fits[name] = f_new
            change = float(np.max(np.abs(f_new - f_old)))
            max_change = max(max_change, change)
        if max_change < tol:
            break
    state.stage1_passes.append(passes)
    return state


# --- Stage 2: joint categorical solve ---------------------------------------

def stage2_categorical(problem, state, config=None):
    """Solve every categorical weight jointly against the current residual.

    The intercept rides along as an unpenalized coordinate of the same
    accelerated solve: it shares the constant direction with the pooled
    categorical block, and solving the pair together replaces a slow
    two-block alternation with one exact minimization.  At stage exit the
    weights satisfy the plain ridge equation for the updated intercept's
    partial residual.

    Warm-starts from the previous solution; if the solver's answer is
    (numerically) worse than the warm start on the block objective, the
    warm start is kept, so the stage never ascends.
    """
    config = config or problem.config
    if problem.encoding.cardinality == 0:
        return state
    target = state.residual + state.categorical_fit + state.intercept
    system = problem.joint_ridge_system(target)
    warm = np.concatenate([[state.intercept], state.beta])
    result = nga_ridge_solve(
        system, tol=config.solver_tol, beta0=warm,
        lam_max=problem.gram_joint_lambda_max,
    )
    solution = result.beta
    if ridge_objective(system, solution) > ridge_objective(system, warm):
        solution = warm
    intercept = float(solution[0])
    beta = solution[1:]
    fit = problem.categorical_expand(beta)
    state.residual += (
        (state.intercept - intercept) + (state.categorical_fit - fit)
    )
    state.intercept = intercept
    state.beta = beta
    state.categorical_fit = fit
    return state


# --- Stage 3: temporal partial learning -------------------------------------

def stage3_temporal(problem, state, config=None):
    """Partial learning per temporal feature, in declaration order.

    The record-space partial residual is compressed to the feature's time
    grid (weighted means), decomposed to partial convergence (warm-started
    from the previous components), and expanded back.  The trend's
    weighted mean is folded into the intercept, which together with the
    decomposition's seasonal conventions makes the fixed point unique.
    """
    config = config or problem.config
    for name, cache in problem.temporal.items():
        f_trend = state.trend_fits[name]
        f_seasonal = state.seasonal_fits[name]
        target = cache.knot_means(state.residual + f_trend + f_seasonal)
        components = decompose(
            cache.series, cache.partition, target,
            cache.decompose_config,
            initial=state.temporal_components.get(name),
        )
        mean = float(np.average(components.trend, weights=cache.weights))
        components.trend = components.trend - mean
        new_trend = components.trend[cache.series.back_map]
        new_seasonal = components.seasonal[cache.series.back_map]
        state.residual += (
            f_trend + f_seasonal - new_trend - new_seasonal - mean
        )
        state.intercept += mean
        state.temporal_components[name] = components
        state.trend_fits[name] = new_trend
        state.seasonal_fits[name] = new_seasonal
    return state


# --- objective and the full iteration ---------------------------------------

def objective_value(problem, state, config=None):
    """Penalized training objective at the current state.

    Residual sum of squares plus the curvature penalties of every
    numerical curve, the squared categorical weights, and the trend and
    per-phase seasonal curvature penalties (temporal penalties are
    evaluated on the compressed, weighted time points).  With the kernel
    backend the curvature functional is not what the smoother minimizes,
    so only the residual sum of squares is reported.
    """
    config = config or problem.config
    value = float(state.residual @ state.residual)
    if config.backend != "penalized":
        return value
    for name, cache in problem.numerical.items():
        value += config.smoothness * curvature_penalty(
            cache.knots, state.numerical_curves[name]
        )
    value += config.categorical_ridge * float(state.beta @ state.beta)
    for name, cache in problem.temporal.items():
        components = state.temporal_components.get(name)
        if components is None:
            continue
        times = cache.series.times.astype(float)
        value += config.trend_smoothness * curvature_penalty(
            times, components.trend
        )
        for idx in cache.partition.phase_sets:
            if idx.size:
                value += config.seasonal_smoothness * curvature_penalty(
                    times[idx], components.seasonal[idx]
                )
    return value


INIT_GRID_BINS = 512


class _BatchedSampleSmoother:
    """One shared-subsample smoother for every numerical feature at once.

    Each feature's subsample is binned onto a fixed uniform grid (binned
    kernel regression: the bin width is far below the subsample
    bandwidth, so the estimator is unchanged), and all grids are
    concatenated.  Uniform grids make the kernel windows analytic and
    kernel windows never cross segment boundaries, so one global cumsum
    per polynomial term serves every feature.  A whole simultaneous
    smoothing sweep over every feature costs a fixed handful of array
    operations, keeping the sampling initialization far cheaper than the
    full-data backfitting pass it is meant to save.
    """

    def __init__(self, problem, config, indices, bins=INIT_GRID_BINS):
        self.names = list(problem.numerical)
        self.n_sample = indices.size
        p = len(self.names)
        self.bins = bins
        self.total = p * bins

        lows = np.empty(p)
        widths = np.empty(p)
        halves = np.empty(p, dtype=np.int64)
        sample_columns = np.empty((p, self.n_sample))
        for i, name in enumerate(self.names):
            cache = problem.numerical[name]
            xs = cache.x[indices]
            sample_columns[i] = xs
            lo = cache.knots[0]
            span = cache.knots[-1] - cache.knots[0]
            width = span / bins if span > 0 else 1.0
            h = default_bandwidth(xs, config.bandwidth_factor)
            lows[i] = lo
            widths[i] = width
            halves[i] = max(1, int(np.ceil(h / width)))

        flat = sample_columns.ravel()
        scaled = (flat - np.repeat(lows, self.n_sample)) \
            / np.repeat(widths, self.n_sample)
        codes = np.clip(scaled.astype(np.int64), 0, bins - 1)
        self.codes = codes + np.repeat(
            np.arange(p) * bins, self.n_sample
        )
        self.weights = np.bincount(self.codes, minlength=self.total)

        # analytic windows on the uniform grids
        cell = np.tile(np.arange(bins), p)
        half = np.repeat(halves, bins)
        start_of = np.repeat(np.arange(p) * bins, bins)
        self.lo = start_of + np.maximum(cell - half, 0)
        self.hi = start_of + np.minimum(cell + half + 1, bins)

        centers = np.repeat(lows, bins) + (cell + 0.5) * np.repeat(
            widths, bins
        )
        self.knots = centers
        mid = np.repeat(
            lows + 0.5 * widths * bins, bins
        )
        xc = centers - mid
        h_grid = np.repeat(halves * widths, bins)
        h_sq = h_grid * h_grid
        self.xc = xc
        self.xc_sq = xc * xc
        self.coef_a = 1.0 - self.xc_sq / h_sq
        self.coef_b = 2.0 * xc / h_sq
        self.coef_c = 1.0 / h_sq

        self.starts = np.arange(p) * bins
        self.sizes = np.full(p, bins)
        self.segment_weight = np.add.reduceat(self.weights, self.starts)
        weighted = self.weights.astype(float)
        s_w, s_xw, s_xxw = self._window_sums(
            (weighted, xc * weighted, self.xc_sq * weighted)
        )
        den = self.coef_a * s_w + self.coef_b * s_xw - self.coef_c * s_xxw
        self.empty = den <= 0.0
        self.den = np.where(self.empty, 1.0, den)
        self.grid_widths = np.repeat(widths, bins)

    def _window_sums(self, terms):
        sums = []
        prefix = np.empty(self.total + 1)
        for term in terms:
            prefix[0] = 0.0
            np.cumsum(term, out=prefix[1:])
            sums.append(prefix[self.hi] - prefix[self.lo])
        return sums

    def sweep(self, flat_values):
        """Smooth every feature against per-(feature, record) values.

        Returns mean-centered grid curves (concatenated) and the matching
        per-(feature, record) fitted values.
        """
        wy = np.bincount(
            self.codes, weights=flat_values, minlength=self.total
        )
        s_wy, s_xwy, s_xxwy = self._window_sums(
            (wy, self.xc * wy, self.xc_sq * wy)
        )
        curve = (
            self.coef_a * s_wy + self.coef_b * s_xwy
            - self.coef_c * s_xxwy
        ) / self.den
        curve[self.empty] = 0.0
        means = np.add.reduceat(
            curve * self.weights, self.starts
        ) / np.maximum(self.segment_weight, 1.0)
        curve = curve - np.repeat(means, self.sizes)
        return curve, curve[self.codes]

    def segment(self, curve, position):
        start = self.starts[position]
        return curve[start:start + self.sizes[position]]

    def pilot_stats(self, curve, flat_values, fitted):
        """Per-feature pilot summaries from one smoothing sweep."""
        squared = (flat_values - fitted) ** 2
        record_starts = np.arange(len(self.names)) * self.n_sample
        variance = np.add.reduceat(squared, record_starts) / self.n_sample
        sup_sq = np.maximum.reduceat(curve * curve, self.starts)
        slopes = np.abs(np.diff(curve) / self.grid_widths[:-1])
        boundary = np.zeros(self.total - 1, dtype=bool)
        boundary[self.starts[1:] - 1] = True
        slopes = np.where(boundary, 0.0, slopes)
        max_slope = np.maximum.reduceat(
            slopes, np.minimum(self.starts, slopes.size - 1)
        )
        return [
            PilotEstimate(variance=float(variance[i]),
                          sup_squared=float(sup_sq[i]),
                          max_slope=float(max_slope[i]))
            for i in range(len(self.names))
        ]


def _sampling_initialization(problem, state, config):
    """Initialize every shape curve from one shared subsample.

    A pilot-sized sweep estimates each feature's variation summaries,
    those bound the initialization sample size, and a few simultaneous
    smoothing sweeps on that sample produce the starting curves.  The
    sweeps update all features against the same residual snapshot
    (feature coupling on a uniform subsample is far below the subsample's
    own estimation noise), which keeps the whole initialization batched.
    """
    rng = np.random.default_rng(config.seed)
    n = problem.n
    pilot_n = min(config.pilot_size, n)
    pilot_idx = (
        rng.choice(n, pilot_n, replace=False) if n > pilot_n
        else np.arange(n)
    )
    p = len(problem.numerical)
    pilot_smoother = _BatchedSampleSmoother(problem, config, pilot_idx)
    base = state.residual[pilot_idx]
    flat = np.tile(base, p)
    curve, fitted = pilot_smoother.sweep(flat)
    pilots = pilot_smoother.pilot_stats(curve, flat, fitted)

    sample_size = min(
        n,
        estimate_sample_size(pilots, config.sampling_gamma,
                             config.pilot_size),
    )
    if sample_size <= pilot_n:
        smoother, idx = pilot_smoother, pilot_idx
        sample_size = pilot_n
    else:
        idx = rng.choice(n, size=sample_size, replace=False)
        smoother = _BatchedSampleSmoother(problem, config, idx)

    base = state.residual[idx]
    fits = np.zeros(len(problem.numerical) * idx.size)
    record_tile = np.tile(base, p)
    # two refinement sweeps; beyond that the subsample's estimation
    # error, not the iteration, bounds the initialization quality
    for _ in range(2):
        total = fits.reshape(p, idx.size).sum(axis=0)
        flat = record_tile - np.tile(total, p) + fits
        curve, fits = smoother.sweep(flat)

    delta = np.zeros(n)
    mean_total = 0.0
    for position, name in enumerate(smoother.names):
        cache = problem.numerical[name]
        sampled = np.interp(
            cache.knots,
            smoother.segment(smoother.knots, position),
            smoother.segment(curve, position),
        )
        mean = float(cache.counts @ sampled) / n
        sampled = sampled - mean
        fit = sampled[cache.inverse]
        delta += state.numerical_fits[name]
        delta -= fit
        mean_total += mean
        state.numerical_curves[name] = sampled
        state.numerical_fits[name] = fit
    state.intercept += mean_total
    state.residual += delta - mean_total
    return {"sample_size": int(sample_size), "pilot_size": int(pilot_n)}


def tsi_train(dataset, config=None):
    """Fit the additive model by three-stage iteration.

    Returns the trained model with diagnostics (objective history,
    per-stage objectives, cycle count, stage timings, convergence flag).
    Reaching ``max_cycles`` returns a model flagged as non-converged; a
    non-finite objective raises :class:`ConvergenceError`.
    """
    config = config or TrainConfig()
    problem = TrainingProblem(dataset, config)
    return _train(problem, config)


def _train(problem, config):
    state = initial_state(problem)
    timings = {"stage1": 0.0, "stage2": 0.0, "stage3": 0.0}
    sampling_info = None
    if (
        config.sampling
        and problem.numerical
        and problem.n > config.sampling_threshold
    ):
        start = time.perf_counter()
        sampling_info = _sampling_initialization(problem, state, config)
        timings["initialization"] = time.perf_counter() - start

    objective = objective_value(problem, state, config)
    state.objective_history.append(objective)
    stages = (
        ("stage1", stage1_backfit),
        ("stage2", stage2_categorical),
        ("stage3", stage3_temporal),
    )
    for cycle in range(1, config.max_cycles + 1):
        state.cycles = cycle
        for stage_name, stage in stages:
            start = time.perf_counter()
            state = stage(problem, state, config)
            timings[stage_name] += time.perf_counter() - start
            stage_objective = objective_value(problem, state, config)
            if not np.isfinite(stage_objective):
                raise ConvergenceError(
                    "training diverged: objective is not finite"
                )
            state.stage_objectives.append(
                (cycle, stage_name, stage_objective)
            )
        previous, objective = objective, stage_objective
        state.objective_history.append(objective)
        decrease = previous - objective
        if decrease < config.outer_tol * max(abs(previous), 1e-300):
            state.converged = True
            break
    return _build_model(problem, state, config, timings, sampling_info)


def _build_model(problem, state, config, timings, sampling_info):
    shapes = {
        name: ShapeCurve(cache.knots, state.numerical_curves[name])
        for name, cache in problem.numerical.items()
    }
    betas = {
        label: float(state.beta[j])
        for j, label in enumerate(problem.encoding.labels)
    }
    temporals = {}
    for name, cache in problem.temporal.items():
        components = state.temporal_components.get(name)
        times = cache.series.times.astype(float)
        if components is None:
            trend = np.zeros(times.size)
            seasonal = np.zeros(times.size)
        else:
            trend = components.trend
            seasonal = components.seasonal
        phase_curves = tuple(
            ShapeCurve(times[idx], seasonal[idx])
            for idx in cache.partition.phase_sets
        )
        temporals[name] = TemporalCurves(
            tau=cache.rule.tau,
            period=cache.rule.period,
            trend=ShapeCurve(times, trend),
            seasonal_phases=phase_curves,
        )
    diagnostics = {
        "backend": config.backend,
        "cycles": state.cycles,
        "converged": state.converged,
        "objective_history": [float(v) for v in state.objective_history],
        "stage_objectives": [
            [cycle, stage, float(value)]
            for cycle, stage, value in state.stage_objectives
        ],
        "stage1_passes": [int(v) for v in state.stage1_passes],
        "timings": {k: float(v) for k, v in timings.items()},
        "n_records": problem.n,
    }
    if sampling_info:
        diagnostics["sampling"] = sampling_info
    schema = {
        "numerical": list(problem.dataset.numerical),
        "categorical": list(problem.dataset.categorical),
        "temporal": list(problem.dataset.temporal),
    }
    return FxamModel(
        intercept=float(state.intercept),
        shapes=shapes,
        betas=betas,
        temporals=temporals,
        schema=schema,
        diagnostics=diagnostics,
    )


# --- normal-equation diagnostics and the direct oracle ----------------------

RESIDUAL_SUPPORT_LIMIT = 2000
DIRECT_SOLVE_LIMIT = 5000


def _record_smoother(cache, penalty):
    """Dense record-space smoother E (W + penalty K)^-1 E' for one block."""
    knots = cache["knots"]
    weights = cache["weights"]
    inverse = cache["inverse"]
    n_records = inverse.size
    basis = np.zeros((knots.size, n_records))
    basis[inverse, np.arange(n_records)] = 1.0
    if knots.size > 2 and penalty > 0:
        factor = penalized_factor(knots, penalty, weights)
        solved = cho_solve_banded((factor, False), basis)
    else:
        solved = basis / weights[:, None]
    return solved[inverse, :]


def normal_equation_residuals(problem, state, config=None,
                              max_records=RESIDUAL_SUPPORT_LIMIT):
    """Inf-norm violation of each block's stationarity equation.

    For every component j this measures
    ``|| f_j - M_j (y - everything_else) ||_inf`` with the explicit dense
    record-space smoother matrix M_j; all blocks are small exactly when
    training has converged.  Penalized backend and test scale only.
    """
    config = config or problem.config
    if config.backend != "penalized":
        raise ValueError("normal-equation diagnostics need the penalized "
                         "backend")
    if problem.n > max_records:
        raise ValueError(
            f"normal_equation_residuals is test support only; n={problem.n} "
            f"exceeds {max_records}"
        )
    y = problem.y
    total = np.full(problem.n, state.intercept)
    for fit in state.numerical_fits.values():
        total += fit
    total += state.categorical_fit
    for name in problem.temporal:
        total += state.trend_fits[name] + state.seasonal_fits[name]

    residuals = {}

    # intercept block: its "smoother" is the mean
    target = y - (total - state.intercept)
    residuals["intercept"] = abs(state.intercept - float(target.mean()))

    for name, cache in problem.numerical.items():
        block = {
            "knots": cache.knots, "weights": cache.counts,
            "inverse": cache.inverse,
        }
        matrix = _record_smoother(block, config.smoothness)
        fit = state.numerical_fits[name]
        target = y - (total - fit)
        residuals[f"numerical:{name}"] = float(
            np.max(np.abs(fit - matrix @ target))
        )

    if problem.encoding.cardinality:
        fit = state.categorical_fit
        target = y - (total - fit)
        rhs = problem.categorical_rhs(target)
        gram = problem.gram
        dense = gram.toarray() if hasattr(gram, "toarray") else gram
        beta_star = np.linalg.solve(dense, rhs)
        residuals["categorical"] = float(
            np.max(np.abs(fit - problem.categorical_expand(beta_star)))
        )

    for name, cache in problem.temporal.items():
        times = cache.series.times.astype(float)
        back = cache.series.back_map
        fit = state.trend_fits[name]
        block = {"knots": times, "weights": cache.weights, "inverse": back}
        matrix = _record_smoother(block, config.trend_smoothness)
        target = y - (total - fit)
        residuals[f"trend:{name}"] = float(
            np.max(np.abs(fit - matrix @ target))
        )

        fit = state.seasonal_fits[name]
        target = y - (total - fit)
        applied = np.zeros(problem.n)
        for idx in cache.partition.phase_sets:
            if idx.size == 0:
                continue
            members = np.isin(back, idx)
            sub_inverse = np.searchsorted(idx, back[members])
            block = {
                "knots": times[idx],
                "weights": cache.weights[idx],
                "inverse": sub_inverse,
            }
            applied[members] = (
                _record_smoother(block, config.seasonal_smoothness)
                @ target[members]
            )
        residuals[f"seasonal:{name}"] = float(np.max(np.abs(fit - applied)))
    return residuals


@dataclass
class DirectSolution:
    """Output of the dense global solve, aligned with TrainState fields."""

    intercept: float
    numerical_curves: dict
    numerical_fits: dict
    beta: np.ndarray
    categorical_fit: np.ndarray
    trend_curves: dict
    trend_fits: dict
    seasonal_curves: dict
    seasonal_fits: dict
    objective: float
    multipliers: np.ndarray


def normal_equation_direct_solve(dataset, config, max_dim=DIRECT_SOLVE_LIMIT):
    """Solve the stacked stationarity system in one dense linear solve.

    Assembles the penalized least-squares problem over compressed
    coordinates (intercept, knot curves, categorical weights, trend and
    seasonal time curves), pins the degenerate constant/linear directions
    with the same mean and drift conventions the iterative trainer uses,
    and solves the resulting KKT system.  The constraints only select a
    member of the optimal family, so the multipliers come back at zero
    and the solution satisfies the unconstrained normal equations.

    Test-scale oracle: refuses stacked dimension above ``max_dim``.
    """
    if config.backend != "penalized":
        raise ValueError("the direct solve needs the penalized backend")
    projected = 1 + sum(
        np.unique(col).size for col in dataset.numerical.values()
    )
    projected += sum(
        np.unique(col).size for col in dataset.categorical.values()
    )
    projected += 2 * sum(
        np.unique(col).size for col in dataset.temporal.values()
    )
    if projected > max_dim:
        raise ValueError(
            f"stacked dimension {projected} exceeds the direct-solve bound "
            f"{max_dim}"
        )
    problem = TrainingProblem(dataset, config)
    n = problem.n
    y = problem.y

    offsets = {}
    sizes = {}
    position = 0

    def register(key, size):
        nonlocal position
        offsets[key] = position
        sizes[key] = size
        position += size

    register("intercept", 1)
    for name, cache in problem.numerical.items():
        register(f"numerical:{name}", cache.knots.size)
    c = problem.encoding.cardinality
    if c:
        register("categorical", c)
    for name, cache in problem.temporal.items():
        register(f"trend:{name}", cache.series.n_points)
        register(f"seasonal:{name}", cache.series.n_points)
    dim = position
    if dim > max_dim:
        raise ValueError(
            f"stacked dimension {dim} exceeds the direct-solve bound "
            f"{max_dim}"
        )

    design = np.zeros((n, dim))
    rows = np.arange(n)
    design[:, offsets["intercept"]] = 1.0
    for name, cache in problem.numerical.items():
        design[rows, offsets[f"numerical:{name}"] + cache.inverse] = 1.0
    if c:
        for m in range(problem.encoding.row_indices.shape[1]):
            design[rows, offsets["categorical"]
                   + problem.encoding.row_indices[:, m]] = 1.0
    for name, cache in problem.temporal.items():
        back = cache.series.back_map
        design[rows, offsets[f"trend:{name}"] + back] = 1.0
        design[rows, offsets[f"seasonal:{name}"] + back] = 1.0

    hessian = design.T @ design
    rhs = design.T @ y

    def add_penalty(key, knots, penalty):
        if penalty <= 0 or knots.size < 3:
            return
        d2 = second_difference_matrix(knots)
        sl = slice(offsets[key], offsets[key] + sizes[key])
        hessian[sl, sl] += penalty * (d2.T @ d2)

    for name, cache in problem.numerical.items():
        add_penalty(f"numerical:{name}", cache.knots, config.smoothness)
    if c:
        sl = slice(offsets["categorical"], offsets["categorical"] + c)
        hessian[sl, sl] += config.categorical_ridge * np.eye(c)
    for name, cache in problem.temporal.items():
        times = cache.series.times.astype(float)
        add_penalty(f"trend:{name}", times, config.trend_smoothness)
        sl_base = offsets[f"seasonal:{name}"]
        for idx in cache.partition.phase_sets:
            if idx.size < 3:
                continue
            d2 = second_difference_matrix(times[idx])
            block = config.seasonal_smoothness * (d2.T @ d2)
            hessian[np.ix_(sl_base + idx, sl_base + idx)] += block

    # identifiability: record-mean zero per smoothing block, and no
    # weighted linear drift in any seasonal component
    constraints = []
    for name, cache in problem.numerical.items():
        col = np.zeros(dim)
        sl = slice(offsets[f"numerical:{name}"],
                   offsets[f"numerical:{name}"] + sizes[f"numerical:{name}"])
        col[sl] = cache.counts / n
        constraints.append(col)
    for name, cache in problem.temporal.items():
        for key in (f"trend:{name}", f"seasonal:{name}"):
            col = np.zeros(dim)
            sl = slice(offsets[key], offsets[key] + sizes[key])
            col[sl] = cache.weights / n
            constraints.append(col)
        times = cache.series.times.astype(float)
        centered = times - np.average(times, weights=cache.weights)
        col = np.zeros(dim)
        sl = slice(offsets[f"seasonal:{name}"],
                   offsets[f"seasonal:{name}"] + sizes[f"seasonal:{name}"])
        col[sl] = cache.weights * centered / n
        constraints.append(col)

    n_constraints = len(constraints)
    kkt = np.zeros((dim + n_constraints, dim + n_constraints))
    kkt[:dim, :dim] = hessian
    if n_constraints:
        cmat = np.stack(constraints, axis=1)
        kkt[:dim, dim:] = cmat
        kkt[dim:, :dim] = cmat.T
    full_rhs = np.concatenate([rhs, np.zeros(n_constraints)])
    lu = sla.lu_factor(kkt)
    solution = sla.lu_solve(lu, full_rhs)
    # two rounds of iterative refinement: the curvature penalties can make
    # the system stiff, and the oracle should be the accurate side
    for _ in range(2):
        defect = full_rhs - kkt @ solution
        solution = solution + sla.lu_solve(lu, defect)
    theta = solution[:dim]
    multipliers = solution[dim:]

    intercept = float(theta[offsets["intercept"]])
    numerical_curves = {}
    numerical_fits = {}
    for name, cache in problem.numerical.items():
        sl = slice(offsets[f"numerical:{name}"],
                   offsets[f"numerical:{name}"] + sizes[f"numerical:{name}"])
        curve = theta[sl]
        numerical_curves[name] = curve
        numerical_fits[name] = curve[cache.inverse]
    if c:
        beta = theta[offsets["categorical"]:offsets["categorical"] + c]
        categorical_fit = problem.categorical_expand(beta)
    else:
        beta = np.zeros(0)
        categorical_fit = np.zeros(n)
    trend_curves = {}
    trend_fits = {}
    seasonal_curves = {}
    seasonal_fits = {}
    for name, cache in problem.temporal.items():
        back = cache.series.back_map
        sl = slice(offsets[f"trend:{name}"],
                   offsets[f"trend:{name}"] + sizes[f"trend:{name}"])
        trend_curves[name] = theta[sl]
        trend_fits[name] = theta[sl][back]
        sl = slice(offsets[f"seasonal:{name}"],
                   offsets[f"seasonal:{name}"] + sizes[f"seasonal:{name}"])
        seasonal_curves[name] = theta[sl]
        seasonal_fits[name] = theta[sl][back]

    fitted = design @ theta
    objective = float(np.sum((y - fitted) ** 2))
    for name, cache in problem.numerical.items():
        objective += config.smoothness * curvature_penalty(
            cache.knots, numerical_curves[name]
        )
    objective += config.categorical_ridge * float(beta @ beta)
    for name, cache in problem.temporal.items():
        times = cache.series.times.astype(float)
        objective += config.trend_smoothness * curvature_penalty(
            times, trend_curves[name]
        )
        for idx in cache.partition.phase_sets:
            if idx.size:
                objective += config.seasonal_smoothness * curvature_penalty(
                    times[idx], seasonal_curves[name][idx]
                )

    return DirectSolution(
        intercept=intercept,
        numerical_curves=numerical_curves,
        numerical_fits=numerical_fits,
        beta=beta,
        categorical_fit=categorical_fit,
        trend_curves=trend_curves,
        trend_fits=trend_fits,
        seasonal_curves=seasonal_curves,
        seasonal_fits=seasonal_fits,
        objective=objective,
        multipliers=multipliers,
    )
