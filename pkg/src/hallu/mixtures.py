"""Latent-variable Gaussian mixtures: densities, optimal estimators, losses.

A `LatentMixture` is the data distribution of a target output: N latent
states, each owning a Gaussian conditional law over R^d_a, mixed by the
state probabilities. The quadratic-loss-optimal estimator of such a target
is its mean, which is where every hallucination construction in this
package starts.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import solve_triangular

from .errors import InputError, ModelError
from .rng import as_generator

VARIANCE_FLOOR = 1e-12
WEIGHT_TOL = 1e-9

COV_KINDS = ("iso", "diag", "full")


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class GaussianComponent:
    """One conditional law: a Gaussian with mean `mean` and covariance `cov_value`.

    `cov_kind` is one of "iso" (scalar variance), "diag" (per-dimension
    variances) or "full" (dense SPD matrix). Covariances with any
    eigenvalue/diagonal below 1e-12 are rejected at construction: densities
    and covering radii diverge for degenerate laws.
    """

    mean: np.ndarray
    cov_kind: str
    cov_value: np.ndarray  # scalar stored as 0-d array for "iso"

    def __init__(self, mean, cov_kind, cov_value):
        mean = _readonly(np.atleast_1d(mean))
        if mean.ndim != 1:
            raise InputError(f"mean must be a vector, got shape {mean.shape}")
        if cov_kind not in COV_KINDS:
            raise InputError(f"cov_kind must be one of {COV_KINDS}, got {cov_kind!r}")
        d = mean.shape[0]
        value = np.asarray(cov_value, dtype=float)
        if cov_kind == "iso":
            if value.ndim != 0:
                raise InputError("iso covariance takes a scalar variance")
            if value <= VARIANCE_FLOOR:
                raise ModelError(f"iso variance {float(value)} below floor {VARIANCE_FLOOR}")
        elif cov_kind == "diag":
            if value.shape != (d,):
                raise InputError(f"diag covariance must have length {d}, got {value.shape}")
            if np.any(value <= VARIANCE_FLOOR):
                raise ModelError("diag covariance has entries below the PD floor")
        else:
            if value.shape != (d, d):
                raise InputError(f"full covariance must be {d}x{d}, got {value.shape}")
            if not np.allclose(value, value.T, atol=1e-10):
                raise ModelError("full covariance is not symmetric")
            eigvals = np.linalg.eigvalsh(value)
            if eigvals[0] <= VARIANCE_FLOOR:
                raise ModelError(f"full covariance has eigenvalue {eigvals[0]} below the PD floor")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov_kind", cov_kind)
        object.__setattr__(self, "cov_value", _readonly(value))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @cached_property
    def _chol(self) -> np.ndarray:
        # lower Cholesky factor, full kind only
        return np.linalg.cholesky(np.asarray(self.cov_value))

    @cached_property
    def log_det(self) -> float:
        d = self.dim
        if self.cov_kind == "iso":
            return d * math.log(float(self.cov_value))
        if self.cov_kind == "diag":
            return float(np.sum(np.log(self.cov_value)))
        return float(2.0 * np.sum(np.log(np.diag(self._chol))))

    @cached_property
    def trace(self) -> float:
        if self.cov_kind == "iso":
            return self.dim * float(self.cov_value)
        if self.cov_kind == "diag":
            return float(np.sum(self.cov_value))
        return float(np.trace(self.cov_value))

    @cached_property
    def lambda_max(self) -> float:
        if self.cov_kind == "iso":
            return float(self.cov_value)
        if self.cov_kind == "diag":
            return float(np.max(self.cov_value))
        return float(np.linalg.eigvalsh(self.cov_value)[-1])

    @property
    def peak_density(self) -> float:
        """Density at the mean: (2 pi)^(-d/2) det(Sigma)^(-1/2)."""
        return math.exp(-0.5 * (self.dim * math.log(2.0 * math.pi) + self.log_det))

    def mahalanobis_sq(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.shape[-1] != self.dim:
            raise InputError(f"point dimension {pts.shape[-1]} != component dimension {self.dim}")
        diff = pts - self.mean
        if self.cov_kind == "iso":
            return np.sum(diff * diff, axis=-1) / float(self.cov_value)
        if self.cov_kind == "diag":
            return np.sum(diff * diff / self.cov_value, axis=-1)
        flat = diff.reshape(-1, self.dim)
        sol = solve_triangular(self._chol, flat.T, lower=True)
        return np.sum(sol * sol, axis=0).reshape(diff.shape[:-1])

    def log_density(self, points: np.ndarray) -> np.ndarray:
        maha = self.mahalanobis_sq(points)
        return -0.5 * (self.dim * math.log(2.0 * math.pi) + self.log_det + maha)

    def density(self, points: np.ndarray) -> np.ndarray:
        return np.exp(self.log_density(points))

    def sample(self, n: int, rng) -> np.ndarray:
        rng = as_generator(rng)
        z = rng.standard_normal((n, self.dim))
        if self.cov_kind == "iso":
            return self.mean + math.sqrt(float(self.cov_value)) * z
        if self.cov_kind == "diag":
            return self.mean + np.sqrt(self.cov_value) * z
        return self.mean + z @ self._chol.T

    def cov_to_dict(self) -> dict:
        if self.cov_kind == "iso":
            value = float(self.cov_value)
        elif self.cov_kind == "diag":
            value = self.cov_value.tolist()
        else:
            value = self.cov_value.tolist()
        return {"kind": self.cov_kind, "value": value}


def isotropic(mean, variance) -> GaussianComponent:
    return GaussianComponent(mean, "iso", variance)


@dataclass(frozen=True)
class LatentMixture:
    """N weighted Gaussian conditional laws sharing one output dimension."""

    components: tuple[GaussianComponent, ...]
    weights: np.ndarray

    def __init__(self, components, weights):
        components = tuple(components)
        if len(components) < 1:
            raise InputError("a mixture needs at least one component")
        d = components[0].dim
        for c in components:
            if c.dim != d:
                raise InputError("all components must share one dimension")
        w = np.asarray(weights, dtype=float)
        if w.shape != (len(components),):
            raise InputError(f"weights must have length {len(components)}, got {w.shape}")
        if np.any(w < 0):
            raise InputError("weights must be nonnegative")
        if abs(float(np.sum(w)) - 1.0) > WEIGHT_TOL:
            raise InputError(f"weights sum to {float(np.sum(w))}, not 1 within {WEIGHT_TOL}")
        object.__setattr__(self, "components", components)
        object.__setattr__(self, "weights", _readonly(w))

    @property
    def n_states(self) -> int:
        return len(self.components)

    @property
    def dim(self) -> int:
        return self.components[0].dim

    def state_densities(self, points: np.ndarray) -> np.ndarray:
        """Per-state conditional densities; shape (..., N)."""
        return np.stack([c.density(points) for c in self.components], axis=-1)


def component_density(mixture: LatentMixture, i: int, point) -> float:
    """Conditional density of state i at `point`."""
    if not 0 <= i < mixture.n_states:
        raise InputError(f"state index {i} out of range [0, {mixture.n_states})")
    return float(mixture.components[i].density(np.asarray(point, dtype=float)))


def mixture_density(mixture: LatentMixture, point) -> float:
    """Marginal density: the weight-convex combination of conditional densities."""
    dens = mixture.state_densities(np.asarray(point, dtype=float))
    return float(np.dot(dens, mixture.weights))


def bayes_estimator(mixture: LatentMixture) -> np.ndarray:
    """The expected-quadratic-loss minimizer: the mixture mean sum_i p_i mu_i."""
    means = np.stack([c.mean for c in mixture.components])
    return mixture.weights @ means


def quadratic_loss(mixture: LatentMixture, estimate) -> float:
    """Expected squared error of `estimate` against a draw from the mixture.

    Closed form: sum_i p_i (||estimate - mu_i||^2 + trace(Sigma_i)).
    """
    e = np.asarray(estimate, dtype=float)
    if e.shape != (mixture.dim,):
        raise InputError(f"estimate must have shape ({mixture.dim},), got {e.shape}")
    total = 0.0
    for p, c in zip(mixture.weights, mixture.components):
        diff = e - c.mean
        total += p * (float(diff @ diff) + c.trace)
    return total


def sample_mixture(mixture: LatentMixture, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Two-stage draw: state by weight, then that state's Gaussian.

    Returns (points (n, d), state indices (n,)).
    """
    rng = as_generator(rng)
    states = rng.choice(mixture.n_states, size=n, p=mixture.weights)
    points = np.empty((n, mixture.dim))
    for i, comp in enumerate(mixture.components):
        mask = states == i
        k = int(np.count_nonzero(mask))
        if k:
            points[mask] = comp.sample(k, rng)
    return points, states


# -- simplex vectors and the cross-entropy optimum ---------------------------

def validate_simplex(v, tol: float = 1e-9) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise InputError("simplex vector must be 1-D")
    if np.any(v < -tol):
        raise InputError("simplex vector has negative entries")
    if abs(float(np.sum(v)) - 1.0) > tol:
        raise InputError(f"simplex vector sums to {float(np.sum(v))}")
    return v


def cross_entropy_optimal(targets, weights=None) -> np.ndarray:
    """Minimizer of expected cross-entropy over a weighted set of target simplexes.

    By Gibbs' inequality the minimizer is the entrywise expectation of the
    targets, which is itself on the simplex.
    """
    t = np.asarray(targets, dtype=float)
    if t.ndim == 1:
        t = t[None, :]
    if t.shape[0] == 0:
        raise InputError("empty target set")
    for row in t:
        validate_simplex(row)
    if weights is None:
        w = np.full(t.shape[0], 1.0 / t.shape[0])
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (t.shape[0],) or np.any(w < 0):
            raise InputError("weights must be a nonnegative vector matching the targets")
        w = w / np.sum(w)
    return validate_simplex(w @ t)


def expected_cross_entropy(target_mean, candidate) -> float:
    """Expected cross-entropy of `candidate` against targets with mean `target_mean`.

    Equals -sum_t mean_t * log(candidate_t); infinite when the candidate puts
    zero mass where the targets do not.
    """
    m = np.asarray(target_mean, dtype=float)
    p = np.asarray(candidate, dtype=float)
    active = m > 0
    if np.any(p[active] <= 0):
        return math.inf
    return float(-np.sum(m[active] * np.log(p[active])))


# -- JSON wire format ---------------------------------------------------------

def _cov_from_dict(d: int, spec: dict):
    kind = spec.get("kind")
    value = spec.get("value")
    if kind not in COV_KINDS:
        raise InputError(f"unknown covariance kind {kind!r}")
    return kind, value


def mixture_to_dict(mixture: LatentMixture) -> dict:
    return {
        "weights": mixture.weights.tolist(),
        "components": [
            {"mean": c.mean.tolist(), "cov": c.cov_to_dict()} for c in mixture.components
        ],
    }


def mixture_from_dict(doc: dict) -> LatentMixture:
    try:
        weights = doc["weights"]
        comp_specs = doc["components"]
    except (KeyError, TypeError) as exc:
        raise InputError(f"mixture document missing field: {exc}") from exc
    components = []
    for spec in comp_specs:
        try:
            mean = spec["mean"]
            kind, value = _cov_from_dict(len(mean), spec["cov"])
        except (KeyError, TypeError) as exc:
            raise InputError(f"component document missing field: {exc}") from exc
        components.append(GaussianComponent(mean, kind, value))
    return LatentMixture(components, weights)


def mixture_to_json(mixture: LatentMixture) -> str:
    return json.dumps(mixture_to_dict(mixture), sort_keys=True)


def mixture_from_json(text: str) -> LatentMixture:
    return mixture_from_dict(json.loads(text))
