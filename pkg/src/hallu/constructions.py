"""Explicit mixtures whose loss-minimizing estimate hallucinates.

Each builder returns a `ConstructionReport`: the distribution it built, the
optimal estimate, the conditional density of that estimate under every
latent state, and a machine-checked pass verdict. Nothing construction-
internal is trusted: verdicts are recomputed through the mixture/region
operations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import InfeasibleError, InputError
from .mixtures import (
    GaussianComponent,
    LatentMixture,
    bayes_estimator,
    cross_entropy_optimal,
)
from .rng import as_generator

ESTIMATOR_TOL = 1e-9
PASS_SLACK = 1e-9  # relative slack on density comparisons in verdicts


@dataclass(frozen=True)
class ConstructionReport:
    """A hallucination witness plus its numerical verification."""

    mixture: object  # LatentMixture, or CategoricalSetup for the cross-entropy case
    delta: float
    estimator_value: np.ndarray
    per_state_density: np.ndarray
    passed: bool
    details: dict = field(default_factory=dict)


@dataclass(frozen=True)
class CategoricalSetup:
    """Cross-entropy witness: one-hot targets under equal-weight latent states."""

    targets: np.ndarray  # (N, C) one-hot rows
    weights: np.ndarray
    variance: float  # the per-state Gaussian spread around its one-hot target
    variance_bound: float  # largest spread the construction's chain allows
    capped: bool  # True when variance was reduced below the bound to keep densities <= delta


@dataclass(frozen=True)
class TiltedFamily:
    """A base input, per-state hint vectors, and the estimator's Lipschitz constant."""

    base_input: np.ndarray
    hints: tuple[np.ndarray, ...]
    lipschitz: float

    def __init__(self, base_input, hints, lipschitz):
        if lipschitz <= 0:
            raise InputError("lipschitz constant must be positive")
        base = np.asarray(base_input, dtype=float)
        hs = tuple(np.asarray(h, dtype=float) for h in hints)
        if not hs:
            raise InputError("at least one hint is required")
        for h in hs:
            if h.shape != base.shape or not np.all(np.isfinite(h)):
                raise InputError("hints must be finite vectors matching the base input")
        object.__setattr__(self, "base_input", base)
        object.__setattr__(self, "hints", hs)
        object.__setattr__(self, "lipschitz", float(lipschitz))

    @property
    def hint_bound(self) -> float:
        """Largest hint norm; the tilt never moves the input farther than this."""
        return max(float(np.linalg.norm(h)) for h in self.hints)


@dataclass(frozen=True)
class TiltedReport:
    hint_index: int
    applicable: bool  # False when a supplied estimator breaks its Lipschitz budget
    lipschitz_gap: float | None  # ||est(X+hint) - est(X)|| - L * B, when an estimator was given
    report: ConstructionReport | None


@dataclass(frozen=True)
class MultiInputOutcome:
    input_index: int
    report: ConstructionReport | None
    error: str | None

    @property
    def feasible(self) -> bool:
        return self.report is not None


def _check_delta(delta: float, *, open_top: bool = False) -> float:
    hi_ok = delta < 1.0 if open_top else delta <= 1.0
    if not (0.0 < delta and hi_ok):
        rng = "(0, 1)" if open_top else "(0, 1]"
        raise InputError(f"delta must lie in {rng}, got {delta}")
    return float(delta)


def _as_component(mean, cov, dim: int) -> GaussianComponent:
    if isinstance(cov, dict):
        return GaussianComponent(mean, cov["kind"], cov["value"])
    arr = np.asarray(cov, dtype=float)
    if arr.ndim == 0:
        return GaussianComponent(mean, "iso", arr)
    if arr.ndim == 1:
        return GaussianComponent(mean, "diag", arr)
    return GaussianComponent(mean, "full", arr)


def _verdict(mixture: LatentMixture, delta: float, claimed) -> tuple[np.ndarray, np.ndarray, bool]:
    est = bayes_estimator(mixture)
    dens = mixture.state_densities(est)
    ok = bool(
        np.linalg.norm(est - claimed) <= ESTIMATOR_TOL
        and np.all(dens <= delta * (1.0 + PASS_SLACK))
    )
    return est, dens, ok


def exact_optimum_witness(n_states: int, dim: int, delta: float, weights=None,
                          covariances=None) -> ConstructionReport:
    """Mixture whose mean sits at 0 with conditional density <= delta under every state.

    The first N-1 states get mean m_i * 1 along the all-ones direction, with
    m_i = sqrt((-2 ln delta - ln det Sigma_i) / (1' Sigma_i^{-1} 1)), which
    makes each conditional density at 0 exactly (2 pi)^(-dim/2) * delta. The
    last state balances the mean to zero and takes variance delta^(-2/dim)
    so its peak density is delta.
    """
    if n_states < 2:
        raise InputError("need at least two latent states")
    delta = _check_delta(delta)
    if weights is None:
        weights = np.full(n_states, 1.0 / n_states)
    w = np.asarray(weights, dtype=float)
    if w.shape != (n_states,) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise InputError("weights must be a probability vector of length n_states")
    if w[-1] <= 0:
        raise InputError("the balancing state needs positive probability")
    if covariances is None:
        covariances = [1.0] * (n_states - 1)
    if len(covariances) != n_states - 1:
        raise InputError(f"need {n_states - 1} covariances, got {len(covariances)}")

    ones = np.ones(dim)
    components, m_values = [], []
    for i, cov in enumerate(covariances):
        probe = _as_component(np.zeros(dim), cov, dim)
        headroom = -2.0 * math.log(delta) - probe.log_det
        if headroom < 0:
            raise InfeasibleError(
                f"state {i}: -2 ln delta - ln det Sigma = {headroom:.6g} < 0; "
                "no mean can push this covariance's density at 0 down to delta",
                state=i,
            )
        m_i = math.sqrt(headroom / float(probe.mahalanobis_sq(ones)))
        m_values.append(m_i)
        components.append(_as_component(m_i * ones, cov, dim))

    mean_last = -(w[:-1] @ np.stack([c.mean for c in components])) / w[-1]
    var_last = delta ** (-2.0 / dim)
    components.append(GaussianComponent(mean_last, "iso", var_last))
    mixture = LatentMixture(components, w)

    est, dens, ok = _verdict(mixture, delta, np.zeros(dim))
    return ConstructionReport(
        mixture, delta, est, dens, ok,
        details={"m": m_values, "balancing_variance": var_last},
    )


def _ball_points(dim: int, epsilon: float, n: int, directions, rng) -> np.ndarray:
    """n points with norm <= epsilon: the center, the worst-case boundary
    points toward each state mean, and uniform fill."""
    pts = [np.zeros(dim)]
    if epsilon > 0:
        for u in directions:
            pts.append(epsilon * u)
        k = n - len(pts)
        if k > 0:
            raw = rng.standard_normal((k, dim))
            raw /= np.linalg.norm(raw, axis=1, keepdims=True)
            radii = epsilon * rng.random(k) ** (1.0 / dim)
            pts.extend(raw * radii[:, None])
    return np.stack(pts[:n]) if len(pts) >= n else np.stack(pts)


def near_optimal_witness(n_states: int, dim: int, delta: float, epsilon: float,
                         weights=None, scale: float = 1.0, ball_samples: int = 1000,
                         rng=None) -> ConstructionReport:
    """Unit-covariance mixture hallucinating for *every* estimate within
    `epsilon` of the optimum.

    States are paired (i, N-1-i) with mu_pair = -(p_i / p_pair) mu_i so the
    mean is 0; every ||mu_i|| is at least sqrt(-2 ln delta) + epsilon (pairs
    are rescaled upward when the induced norm falls short), which caps each
    conditional density on the whole epsilon-ball at
    (2 pi)^(-dim/2) exp(-(||mu_i|| - epsilon)^2 / 2) <= delta.
    """
    if n_states < 2 or n_states % 2:
        raise InputError("n_states must be even and >= 2")
    delta = _check_delta(delta)
    if epsilon < 0:
        raise InputError("epsilon must be nonnegative")
    if scale < 1.0:
        raise InputError("scale must be >= 1")
    if weights is None:
        weights = np.full(n_states, 1.0 / n_states)
    w = np.asarray(weights, dtype=float)
    if w.shape != (n_states,) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise InputError("weights must be a probability vector of length n_states")

    required = math.sqrt(-2.0 * math.log(delta)) + epsilon
    means = np.zeros((n_states, dim))
    direction = np.ones(dim) / math.sqrt(dim)
    for i in range(n_states // 2):
        j = n_states - 1 - i
        if w[i] <= 0 or w[j] <= 0:
            raise InfeasibleError(
                f"pair ({i}, {j}): both weights must be positive to balance the mean",
                state=i,
            )
        mu_i = scale * required * direction
        norm_j = (w[i] / w[j]) * scale * required
        boost = max(1.0, required / norm_j)
        means[i] = boost * mu_i
        means[j] = -(w[i] / w[j]) * means[i]

    components = [GaussianComponent(means[i], "iso", 1.0) for i in range(n_states)]
    mixture = LatentMixture(components, w)
    est, dens, ok = _verdict(mixture, delta, np.zeros(dim))

    gen = as_generator(rng if rng is not None else 0)
    unit_means = [m / np.linalg.norm(m) for m in means]
    points = _ball_points(dim, epsilon, ball_samples, unit_means, gen)
    ball_dens = mixture.state_densities(points)  # (n_points, N)
    ball_max = np.max(ball_dens, axis=0)
    analytic = np.array([
        (2.0 * math.pi) ** (-dim / 2.0)
        * math.exp(-0.5 * (np.linalg.norm(m) - epsilon) ** 2)
        for m in means
    ])
    ok = bool(ok and np.all(ball_max <= delta * (1.0 + PASS_SLACK))
              and np.all(analytic <= delta * (1.0 + PASS_SLACK)))
    return ConstructionReport(
        mixture, delta, est, dens, ok,
        details={
            "epsilon": epsilon,
            "required_norm": required,
            "mean_norms": [float(np.linalg.norm(m)) for m in means],
            "ball_max_density": ball_max.tolist(),
            "analytic_ball_bound": analytic.tolist(),
            "ball_points": int(points.shape[0]),
        },
    )


def tilted_witness(family: TiltedFamily, delta: float, *, n_states: int = 2, dim: int = 1,
                   weights=None, scale: float = 1.0, estimator=None,
                   ball_samples: int = 1000, rng=None) -> list[TiltedReport]:
    """Hallucination at every hinted input X + hint_i.

    An L-Lipschitz estimator moves at most L * B from its value at X, so each
    tilted input gets a `near_optimal_witness` with epsilon = L * B. When a
    candidate estimator function is supplied, its actual displacement is
    checked first; a violation yields verdict "not applicable" rather than a
    failure.
    """
    delta = _check_delta(delta)
    budget = family.lipschitz * family.hint_bound
    reports: list[TiltedReport] = []
    base_value = None if estimator is None else np.asarray(estimator(family.base_input), dtype=float)
    for idx, hint in enumerate(family.hints):
        gap = None
        if estimator is not None:
            moved = np.asarray(estimator(family.base_input + hint), dtype=float)
            gap = float(np.linalg.norm(moved - base_value)) - budget
            if gap > 1e-12 + 1e-9 * budget:
                reports.append(TiltedReport(idx, False, gap, None))
                continue
        rep = near_optimal_witness(n_states, dim, delta, budget, weights=weights,
                                   scale=scale, ball_samples=ball_samples, rng=rng)
        reports.append(TiltedReport(idx, True, gap, rep))
    return reports


def _ce_density(d: float, dist_sq: float) -> float:
    return (2.0 * math.pi * d) ** -0.5 * math.exp(-dist_sq / (2.0 * d))


def cross_entropy_witness(n_states: int, n_classes: int, delta: float,
                          variance: float | None = None) -> ConstructionReport:
    """One-hot targets under equal latent weights: the cross-entropy
    minimizer is the uniform average, whose density under every state stays
    at or below delta.

    The per-state spread defaults to the chain bound -(N-1)/(N ln delta^2);
    when the density at that bound would exceed delta (it does for small N,
    where (2 pi d)^(-1/2) > 1), the spread is reduced to the largest value
    that keeps the density at delta * (1 - 1e-9), and the report says so.
    """
    if n_states < 2:
        raise InputError("need at least two latent states")
    if n_classes < n_states:
        raise InputError("need at least as many classes as latent states")
    delta = _check_delta(delta, open_top=True)

    bound = -(n_states - 1) / (n_states * math.log(delta**2))
    dist_sq = (n_states - 1) / n_states
    capped = False
    if variance is None:
        variance = bound
        if _ce_density(variance, dist_sq) > delta:
            target = delta * (1.0 - 1e-9)
            peak_arg = dist_sq  # density increases up to d = dist_sq, then falls
            hi = min(bound, peak_arg)
            variance = brentq(lambda d: _ce_density(d, dist_sq) - target, 1e-12, hi,
                              xtol=1e-15)
            capped = True
    elif not 0 < variance <= bound:
        raise InputError(f"variance must lie in (0, {bound:.6g}]")

    targets = np.zeros((n_states, n_classes))
    targets[np.arange(n_states), np.arange(n_states)] = 1.0
    w = np.full(n_states, 1.0 / n_states)
    predictor = cross_entropy_optimal(targets, w)
    dens = np.array([
        _ce_density(variance, float(np.sum((predictor - t) ** 2))) for t in targets
    ])
    setup = CategoricalSetup(targets, w, float(variance), bound, capped)
    claimed = np.concatenate([np.full(n_states, 1.0 / n_states), np.zeros(n_classes - n_states)])
    ok = bool(np.linalg.norm(predictor - claimed) <= ESTIMATOR_TOL
              and np.all(dens <= delta * (1.0 + PASS_SLACK)))
    return ConstructionReport(
        setup, delta, predictor, dens, ok,
        details={"variance": float(variance), "variance_bound": bound,
                 "capped": capped, "dist_sq": dist_sq},
    )


def multi_input_witnesses(specs: list[dict]) -> list[MultiInputOutcome]:
    """Independent exact-optimum witnesses, one per input; per-input verdicts
    survive even when some inputs are infeasible."""
    outcomes = []
    for idx, spec in enumerate(specs):
        try:
            outcomes.append(MultiInputOutcome(idx, exact_optimum_witness(**spec), None))
        except InfeasibleError as exc:
            outcomes.append(MultiInputOutcome(idx, None, str(exc)))
    return outcomes
