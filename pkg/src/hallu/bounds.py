"""Lower bound on the probability that the optimal estimator hallucinates.

The bound treats each state's conditional mean mu_i as a random draw from a
"mean law" centered at a shared mu_0 (laws mutually independent). With
d aggregating the weighted spread of the means, theta_i(alpha) =
(alpha d + r_x)^2 / sigma_i and the kurtosis-type ratio K_i, the
hallucination probability exceeds prod_i P_i K_i where
P_i = max_{alpha>1, theta_i<=1} (1 - alpha^-2)(1 - theta_i(alpha))^2.

Everything here is verifiable by seeded Monte Carlo: `mc_verify_bound`
replays the generative story and measures the hallucination frequency, and
`verify_inequalities` spot-checks each supporting inequality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .mixtures import GaussianComponent
from .regions import covering_radius
from .rng import stream

FAMILIES = ("gaussian", "two_point", "uniform")


@dataclass(frozen=True)
class MeanLaw:
    """Distribution of one state's conditional mean around mu0.

    param is the standard deviation (gaussian), the offset (two_point:
    mu0 +- param with equal probability) or the half-width (uniform on
    [mu0 - param, mu0 + param]).
    """

    family: str
    mu0: float
    param: float

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InputError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if self.param <= 0:
            raise InputError("mean-law parameter must be positive (degenerate law)")

    @property
    def variance(self) -> float:
        if self.family == "uniform":
            return self.param**2 / 3.0
        return self.param**2

    @property
    def fourth_central_moment(self) -> float:
        if self.family == "gaussian":
            return 3.0 * self.param**4
        if self.family == "two_point":
            return self.param**4
        return self.param**4 / 5.0

    def sample(self, n: int, rng) -> np.ndarray:
        if self.family == "gaussian":
            return self.mu0 + self.param * rng.standard_normal(n)
        if self.family == "two_point":
            return self.mu0 + self.param * rng.choice((-1.0, 1.0), size=n)
        return self.mu0 + self.param * (2.0 * rng.random(n) - 1.0)

    def to_dict(self) -> dict:
        return {"family": self.family, "mu0": self.mu0, "param": self.param}


def moment_ratio(law: MeanLaw) -> float:
    """(E[(mu - mu0)^2])^2 / E[(mu - mu0)^4]; 1 for two-point, 1/3 gaussian, 5/9 uniform."""
    return law.variance**2 / law.fourth_central_moment


@dataclass(frozen=True)
class BoundInputs:
    weights: np.ndarray
    mean_laws: tuple[MeanLaw, ...]
    r_x: float
    delta: float
    d_variant: str = "statement"

    def __init__(self, weights, mean_laws, r_x, delta, d_variant="statement"):
        w = np.asarray(weights, dtype=float)
        laws = tuple(mean_laws)
        if w.ndim != 1 or w.shape[0] != len(laws):
            raise InputError("weights and mean_laws must have matching length")
        if np.any(w < 0) or abs(float(w.sum()) - 1.0) > 1e-9:
            raise InputError("weights must be a probability vector")
        if r_x < 0:
            raise InputError("r_x must be nonnegative")
        if not 0.0 < delta <= 1.0:
            raise InputError(f"delta must lie in (0, 1], got {delta}")
        if d_variant not in ("statement", "proof"):
            raise InputError("d_variant must be 'statement' or 'proof'")
        w = np.array(w)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "mean_laws", laws)
        object.__setattr__(self, "r_x", float(r_x))
        object.__setattr__(self, "delta", float(delta))
        object.__setattr__(self, "d_variant", d_variant)

    @property
    def n_states(self) -> int:
        return len(self.mean_laws)

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "mean_laws": [law.to_dict() for law in self.mean_laws],
            "r_x": self.r_x,
            "delta": self.delta,
            "d_variant": self.d_variant,
        }

    @staticmethod
    def from_dict(doc: dict) -> "BoundInputs":
        try:
            laws = tuple(
                MeanLaw(spec["family"], float(spec["mu0"]), float(spec["param"]))
                for spec in doc["mean_laws"]
            )
            return BoundInputs(doc["weights"], laws, float(doc["r_x"]), float(doc["delta"]),
                               doc.get("d_variant", "statement"))
        except (KeyError, TypeError) as exc:
            raise InputError(f"bound inputs document missing field: {exc}") from exc


def aggregate_spread(weights, variances, variant: str = "statement") -> float:
    """The aggregate d: sqrt(sum_j p_j^2 sigma_j) ("statement") or
    sqrt((sum_j p_j^2) * sum_j sigma_j) ("proof"); they differ unless the
    per-state variances are all equal."""
    w = np.asarray(weights, dtype=float)
    v = np.asarray(variances, dtype=float)
    if np.any(v <= 0):
        raise InputError("per-state mean variances must be positive")
    if variant == "statement":
        return float(np.sqrt(np.sum(w**2 * v)))
    if variant == "proof":
        return float(np.sqrt(np.sum(w**2) * np.sum(v)))
    raise InputError("variant must be 'statement' or 'proof'")


@dataclass(frozen=True)
class AlphaResult:
    feasible: bool
    alpha: float | None = None
    theta: float | None = None
    objective: float | None = None  # P_i = (1 - alpha^-2)(1 - theta)^2


def _golden_max(f, lo: float, hi: float, tol: float = 1e-10):
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def optimize_alpha(sigma_d: float, d: float, r_x: float) -> AlphaResult:
    """Maximize (1 - alpha^-2)(1 - theta(alpha))^2 over alpha > 1 with
    theta(alpha) = (alpha d + r_x)^2 / sigma_d <= 1.

    Infeasibility (no alpha > 1 keeps theta <= 1) is a value, not an error:
    it is exactly the bound's feasibility hypothesis failing for that state.
    """
    if sigma_d <= 0:
        raise InputError("sigma_d must be positive")
    if d <= 0:
        raise InputError("d must be positive")
    alpha_max = (math.sqrt(sigma_d) - r_x) / d
    if alpha_max <= 1.0:
        return AlphaResult(False)

    def objective(alpha: float) -> float:
        theta = (alpha * d + r_x) ** 2 / sigma_d
        return (1.0 - alpha**-2) * (1.0 - theta) ** 2

    alpha, value = _golden_max(objective, 1.0 + 1e-12, alpha_max, tol=1e-10)
    theta = (alpha * d + r_x) ** 2 / sigma_d
    return AlphaResult(True, alpha, theta, value)


@dataclass(frozen=True)
class StateBound:
    feasible: bool
    alpha: float | None
    theta: float | None
    p_i: float | None
    k_mu: float


@dataclass(frozen=True)
class BoundReport:
    d: float
    states: tuple[StateBound, ...]
    product_bound: float | None  # None when any state is infeasible
    feasible: bool
    empirical: object = None  # attached by mc_verify_bound when requested

    def to_dict(self) -> dict:
        doc = {
            "d": self.d,
            "feasible": self.feasible,
            "product_bound": self.product_bound,
            "states": [
                {"feasible": s.feasible, "alpha": s.alpha, "theta": s.theta,
                 "p_i": s.p_i, "k_mu": s.k_mu}
                for s in self.states
            ],
        }
        if self.empirical is not None:
            doc["empirical"] = self.empirical.to_dict()
        return doc


def hallucination_lower_bound(inputs: BoundInputs) -> BoundReport:
    """Evaluate the product lower bound prod_i P_i K_i for these inputs."""
    variances = [law.variance for law in inputs.mean_laws]
    d = aggregate_spread(inputs.weights, variances, inputs.d_variant)
    states = []
    for law in inputs.mean_laws:
        res = optimize_alpha(law.variance, d, inputs.r_x)
        states.append(StateBound(res.feasible, res.alpha, res.theta, res.objective,
                                 moment_ratio(law)))
    feasible = all(s.feasible for s in states)
    product = None
    if feasible:
        product = float(np.prod([s.p_i * s.k_mu for s in states]))
    return BoundReport(d, tuple(states), product, feasible)


# -- Monte Carlo verification --------------------------------------------------

def wilson_interval(successes: int, trials: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise InputError("trials must be positive")
    p = successes / trials
    z2n = z * z / trials
    denom = 1.0 + z2n
    center = (p + z2n / 2.0) / denom
    half = z * math.sqrt(p * (1.0 - p) / trials + z2n / (4.0 * trials)) / denom
    return max(0.0, center - half), min(1.0, center + half)


@dataclass(frozen=True)
class McVerification:
    trials: int
    workers: int
    hallucination_count: int
    geometric_count: int
    hallucination_freq: float
    geometric_freq: float
    hallucination_wilson: tuple[float, float]
    geometric_wilson: tuple[float, float]
    component_sigma: float
    mc_delta: float
    component_radius: float

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "workers": self.workers,
            "hallucination_freq": self.hallucination_freq,
            "geometric_freq": self.geometric_freq,
            "hallucination_wilson": list(self.hallucination_wilson),
            "geometric_wilson": list(self.geometric_wilson),
            "component_sigma": self.component_sigma,
            "mc_delta": self.mc_delta,
            "component_radius": self.component_radius,
        }


def _partition_sizes(trials: int, workers: int) -> list[int]:
    base, extra = divmod(trials, workers)
    return [base + (1 if i < extra else 0) for i in range(workers)]


def mc_verify_bound(inputs: BoundInputs, component_variance: float, delta: float,
                    trials: int, seed: int, workers: int = 1) -> McVerification:
    """Replay the generative story and measure the hallucination frequency.

    Per trial: draw each mu_i from its mean law, form the mixture of
    N(mu_i, sigma^2) with the given weights, take the optimal estimate
    A* = sum p_i mu_i, and record (a) the geometric event ||A* - mu_i|| > r_x
    for all i and (b) the delta-hallucination event (every conditional
    density at A* <= delta). Counting is partitioned per worker with derived
    seeds and merged by summation, so results depend only on
    (seed, trials, workers).
    """
    if trials < 1:
        raise InputError("trials must be >= 1")
    if workers < 1:
        raise InputError("workers must be >= 1")
    if component_variance <= 0:
        raise InputError("component variance must be positive")
    probe = GaussianComponent(np.zeros(1), "iso", component_variance)
    r_c = covering_radius(probe, delta)
    if r_c > inputs.r_x:
        raise InputError(
            f"covering radius {r_c:.6g} exceeds r_x {inputs.r_x:.6g}; "
            "shrink the component variance so the geometric proxy is valid"
        )
    w = inputs.weights
    log_norm = -0.5 * math.log(2.0 * math.pi * component_variance)
    log_delta = math.log(delta)
    hallu = geo = 0
    for part, n in enumerate(_partition_sizes(trials, workers)):
        if n == 0:
            continue
        gen = stream(seed, "bounds.mc", part)
        mus = np.column_stack([law.sample(n, gen) for law in inputs.mean_laws])
        a_star = mus @ w
        dist = np.abs(a_star[:, None] - mus)
        geo += int(np.count_nonzero(np.all(dist > inputs.r_x, axis=1)))
        log_dens = log_norm - dist**2 / (2.0 * component_variance)
        hallu += int(np.count_nonzero(np.all(log_dens <= log_delta, axis=1)))
    return McVerification(
        trials, workers, hallu, geo, hallu / trials, geo / trials,
        wilson_interval(hallu, trials), wilson_interval(geo, trials),
        math.sqrt(component_variance), float(delta), r_c,
    )


# -- supporting inequalities ----------------------------------------------------

@dataclass(frozen=True)
class InequalityCheck:
    name: str
    params: dict
    empirical: float
    bound: float
    direction: str  # "ge": empirical (+slack) must exceed bound; "le": stay below
    ok: bool

    def to_dict(self) -> dict:
        return {"name": self.name, "params": self.params, "empirical": self.empirical,
                "bound": self.bound, "direction": self.direction, "ok": self.ok}


def _check(name, params, count, trials, bound, direction, z=3.0) -> InequalityCheck:
    lo, hi = wilson_interval(count, trials, z)
    emp = count / trials
    # probabilities are capped at 1; the 1e-12 absorbs float noise in
    # exact-equality cases (e.g. two-point laws at theta = 0)
    bound = min(1.0, bound)
    ok = hi >= bound - 1e-12 if direction == "ge" else lo <= bound + 1e-12
    return InequalityCheck(name, params, emp, bound, direction, bool(ok))


def verify_inequalities(inputs: BoundInputs, trials: int, seed: int) -> list[InequalityCheck]:
    """Sampled validation of every inequality backing the lower bound, each
    with 3 Wilson standard errors of Monte-Carlo slack."""
    if trials < 100:
        raise InputError("use at least 100 trials")
    gen = stream(seed, "bounds.lemmas")
    mus = np.column_stack([law.sample(trials, gen) for law in inputs.mean_laws])
    w = inputs.weights
    checks: list[InequalityCheck] = []

    for i, law in enumerate(inputs.mean_laws):
        t = (mus[:, i] - law.mu0) ** 2
        var, m4 = law.variance, law.fourth_central_moment
        for theta in (0.0, 0.25, 0.5, 0.75):
            count = int(np.count_nonzero(t > theta * var))
            checks.append(_check("paley_zygmund", {"state": i, "theta": theta},
                                 count, trials, (1.0 - theta) ** 2 * var**2 / m4, "ge"))
        for mult in (0.5, 1.0, 2.0):
            a = mult * math.sqrt(var)
            count = int(np.count_nonzero(np.abs(mus[:, i] - law.mu0) >= a))
            checks.append(_check("chebyshev", {"state": i, "a": a},
                                 count, trials, min(1.0, var / a**2), "le"))
        k_mu = moment_ratio(law)
        for theta in (0.0, 0.5, 1.0):
            count = int(np.count_nonzero(t >= theta * var))
            checks.append(_check("mean_spread", {"state": i, "theta": theta},
                                 count, trials, (1.0 - theta) ** 2 * k_mu, "ge"))

    x = gen.standard_normal((100, 32))
    y = gen.standard_normal((100, 32))
    ratios = np.sum(x * y, axis=1) ** 2 / (np.sum(x**2, axis=1) * np.sum(y**2, axis=1))
    checks.append(InequalityCheck("cauchy_schwarz", {"draws": 100}, float(np.max(ratios)),
                                  1.0, "le", bool(np.max(ratios) <= 1.0 + 1e-12)))

    mu0 = np.array([law.mu0 for law in inputs.mean_laws])
    sigma_sum = float(np.sum([law.variance for law in inputs.mean_laws]))
    a_star = mus @ w
    centered = (a_star - float(w @ mu0)) ** 2
    base = float(np.sum(w**2)) * sigma_sum
    for mult in (1.0, 1.5, 2.0):
        d1_sq = mult**2 * base
        count = int(np.count_nonzero(centered >= d1_sq))
        checks.append(_check("estimator_concentration", {"d1_sq": d1_sq},
                             count, trials, min(1.0, base / d1_sq), "le"))
    return checks
