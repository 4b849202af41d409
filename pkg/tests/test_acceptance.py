"""Acceptance gate: one test per release criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines. Every tolerance and runtime limit is pinned here; nothing is
calibrated at run time.
"""

import math
import time

import numpy as np
import pytest

from hallu.bounds import (
    BoundInputs,
    MeanLaw,
    hallucination_lower_bound,
    mc_verify_bound,
    verify_inequalities,
)
from hallu.coinflip import (
    generate_dataset,
    hallucination_demo,
    mirrored_demo_task,
    poisson_binomial_pmf,
    train_estimator,
)
from hallu.constructions import (
    cross_entropy_witness,
    exact_optimum_witness,
    near_optimal_witness,
)
from hallu.detector import detect, fit_bundle, save_bundle
from hallu.embfile import EmbeddingMatrix
from hallu.mixtures import GaussianComponent, LatentMixture, bayes_estimator, isotropic
from hallu.regions import (
    count_runs,
    covering_radius,
    delta_hallucinates,
    density_values,
    grid_axes,
    grid_cell_volume,
    grid_hdr_mask,
    grid_points,
    hcdr,
    hdr,
)
from hallu.rng import stream


def _stamp(name, t0, limit):
    elapsed = time.perf_counter() - t0
    assert elapsed < limit, f"{name}: {elapsed:.2f}s exceeds the {limit}s budget"
    print(f"[PASS] {name} ({elapsed:.2f}s)")


def test_acceptance_exact_optimum_witnesses():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1001)
    for _ in range(100):
        dim = int(rng.integers(1, 9))
        n = int(rng.integers(2, 7))
        delta = float(rng.choice([0.3, 0.1, 0.01]))
        w = rng.uniform(0.1, 1.0, n)
        w /= w.sum()
        covs = [float(rng.uniform(0.2, 1.2)) if rng.random() < 0.5
                else rng.uniform(0.2, 1.2, dim) for _ in range(n - 1)]
        rep = exact_optimum_witness(n, dim, delta, w, covs)
        assert rep.passed
        assert float(np.linalg.norm(bayes_estimator(rep.mixture))) <= 1e-9
        assert np.all(rep.per_state_density <= delta * (1 + 1e-12))
    ref = exact_optimum_witness(2, 1, 0.1)
    assert abs(ref.per_state_density[0] - 0.039894) <= 1e-6
    _stamp("exact-optimum witnesses (100 random configs + reference density)", t0, 5.0)


def test_acceptance_epsilon_ball_witness():
    t0 = time.perf_counter()
    rep = near_optimal_witness(2, 1, 0.1, 0.5, ball_samples=1000, rng=0)
    assert rep.passed
    assert rep.details["ball_points"] == 1000
    for dmax in rep.details["ball_max_density"]:
        assert dmax <= 0.1 + 1e-12
    for norm, bound in zip(rep.details["mean_norms"], rep.details["analytic_ball_bound"]):
        assert bound == pytest.approx(
            (2 * math.pi) ** -0.5 * math.exp(-0.5 * (norm - 0.5) ** 2), rel=1e-12
        )
        assert bound <= 0.1
    _stamp("epsilon-ball witness (1000 ball points + analytic bound)", t0, 2.0)


def test_acceptance_cross_entropy_witness():
    t0 = time.perf_counter()
    rep = cross_entropy_witness(4, 4, 0.1)
    # frozen from -(N-1)/(N ln delta^2) evaluated independently
    assert abs(rep.details["variance"] - 0.16286043) <= 1e-6
    assert abs(rep.per_state_density[0] - 0.09886) <= 1e-5
    assert np.all(rep.per_state_density <= 0.1)
    for n in range(2, 11):
        rep_n = cross_entropy_witness(n, n, 0.1)
        assert rep_n.passed
        assert np.all(rep_n.per_state_density <= 0.1)
    _stamp("cross-entropy witness (pinned N=4 numbers; N=2..10 all under delta)", t0, 1.0)


def test_acceptance_lower_bound_and_inequalities():
    t0 = time.perf_counter()
    laws = (MeanLaw("gaussian", 0.0, 1.0), MeanLaw("gaussian", 0.0, 1.0))
    inputs = BoundInputs([0.5, 0.5], laws, 0.1, 0.1)
    report = hallucination_lower_bound(inputs)
    assert report.feasible and report.product_bound > 0
    mc = mc_verify_bound(inputs, 0.02**2, 0.1, 100_000, seed=2024)
    assert mc.component_radius <= 0.1
    assert mc.hallucination_wilson[0] >= report.product_bound

    rng = np.random.default_rng(7)
    for _ in range(20):
        n = int(rng.integers(1, 5))
        fams = rng.choice(["gaussian", "two_point", "uniform"], n)
        spec_laws = tuple(MeanLaw(f, float(rng.normal(0, 1)), float(rng.uniform(0.3, 2.0)))
                          for f in fams)
        w = rng.uniform(0.1, 1.0, n)
        checks = verify_inequalities(BoundInputs(w / w.sum(), spec_laws, 0.0, 0.5),
                                     20_000, seed=int(rng.integers(10**6)))
        assert all(c.ok for c in checks)
    _stamp("lower bound (product positive, 1e5-trial MC above it, 20 inequality specs)",
           t0, 30.0)


def test_acceptance_regions():
    t0 = time.perf_counter()
    rng = np.random.default_rng(31)
    for _ in range(50):
        dim = int(rng.integers(1, 3))
        mean = rng.normal(0, 2, dim)
        if dim == 1:
            comp = GaussianComponent(mean, "iso", float(rng.uniform(0.1, 4.0)))
        else:
            a = rng.normal(0, 1, (2, 2))
            comp = GaussianComponent(mean, "full", a @ a.T + 0.2 * np.eye(2))
        delta = float(rng.uniform(0.005, 0.2))
        r = covering_radius(comp, delta)
        assert abs(r - _scan_radius(comp, delta)) <= 1e-3

    for _ in range(20):
        n = int(rng.integers(1, 4))
        comps = [isotropic([float(rng.normal(0, 3))], float(rng.uniform(0.3, 2.0)))
                 for _ in range(n)]
        w = rng.uniform(0.2, 1.0, n)
        mixture = LatentMixture(comps, w / w.sum())
        mass = float(rng.uniform(0.5, 0.99))
        _, achieved = hdr(mixture, mass, cells=65536)
        assert abs(achieved - mass) <= 1e-3

    fig = LatentMixture([isotropic([-4.0], 1.0), isotropic([4.0], 1.0)], [0.5, 0.5])
    region = hcdr(fig, delta=0.05)
    for _ in range(200):
        x = rng.normal(0, 6, 1)
        member = bool(region.contains(x))
        flags = [bool(r.contains(x)) for r in region.per_state]
        assert member == any(flags)
        assert delta_hallucinates(fig, x, 0.05).hallucinates == (not member)
    axes = grid_axes(fig)
    values = density_values(fig, grid_points(axes))
    vol = grid_cell_volume(axes)
    mask1, t1, _ = grid_hdr_mask(values, vol, 0.6)
    mask2, t2, _ = grid_hdr_mask(values, vol, 0.9)
    assert t1 >= t2 and np.all(mask2 | ~mask1)
    assert count_runs(mask2) == 2
    _stamp("regions (50 covering scans at 1e-3, 20 HDR masses at 1e-3, union/nesting)",
           t0, 60.0)


def _scan_radius(comp, delta, n_angles=4096):
    peak = float(comp.density(comp.mean))
    if peak <= delta:
        return 0.0
    if comp.dim == 1:
        dirs = np.array([[1.0], [-1.0]])
    else:
        angles = np.linspace(0, 2 * math.pi, n_angles, endpoint=False)
        dirs = np.column_stack([np.cos(angles), np.sin(angles)])
    lo = np.zeros(dirs.shape[0])
    hi = np.ones(dirs.shape[0])
    for _ in range(60):
        outside = comp.density(comp.mean + hi[:, None] * dirs) <= delta
        if np.all(outside):
            break
        hi[~outside] *= 2.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        inside = comp.density(comp.mean + mid[:, None] * dirs) > delta
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return float(np.max(0.5 * (lo + hi)))


def _enumerate_pmf(probs):
    n = len(probs)
    probs = np.asarray(probs, dtype=float)
    bits = (np.arange(2**n, dtype=np.uint32)[:, None] >> np.arange(n)) & 1
    outcome_probs = np.prod(np.where(bits == 1, probs, 1 - probs), axis=1)
    return np.bincount(bits.sum(axis=1), weights=outcome_probs, minlength=n + 1)


def test_acceptance_coinflip():
    t0 = time.perf_counter()
    rng = np.random.default_rng(55)
    for n in (1, 4, 8, 12, 15):
        probs = rng.uniform(0.01, 0.99, n)
        np.testing.assert_allclose(poisson_binomial_pmf(probs), _enumerate_pmf(probs),
                                   atol=1e-12)

    task = mirrored_demo_task(20, 0.05)
    verdict = hallucination_demo(task, 0.01)
    assert verdict.rounded == 10
    assert np.all(verdict.per_state_pmf <= 1.1e-8)
    assert verdict.hallucinates

    dataset = generate_dataset(task, 20_000, seed=777)
    _, trace = train_estimator(dataset, task, epochs=60, learning_rate=0.01, seed=777)
    drop = 1.0 - trace.train_loss[-1] / trace.train_loss[0]
    assert drop >= 0.5
    assert trace.mean_conditional_pmf[-1] <= 0.01
    _stamp("coin flip (DP==enumeration at 1e-12; pmf(10)<=1.1e-8; loss drop >= 50%)",
           t0, 60.0)


def test_acceptance_detector(tmp_path):
    t0 = time.perf_counter()
    gen = stream(3005, "acceptance.detector")
    dim = 16
    m_a = np.zeros(dim)
    m_a[0] = 6.0
    m_b = np.zeros(dim)
    m_b[1] = 6.0
    data = np.vstack([m_a + gen.standard_normal((2000, dim)),
                      m_b + gen.standard_normal((2000, dim))])
    matrix = EmbeddingMatrix(data, [0] * 2000 + [1] * 2000, ("cat", "dog"))
    bundle = fit_bundle(matrix, seed=4242, q=10, n_components=5, percentile=10.0)

    for model in bundle.models.values():
        assert np.all(np.diff(model.log_likelihood_trace) >= -1e-9)

    for c, mean in ((0, m_a), (1, m_b)):
        held_out = mean + gen.standard_normal((2000, dim))
        rep = detect(bundle.models, bundle.thresholds, bundle.pipeline, held_out)
        assert abs(float(np.mean(rep.in_hdr[:, c])) - 0.90) <= 0.03

    probes = 0.5 * (m_a + m_b) + 0.1 * gen.standard_normal((1000, dim))
    rep = detect(bundle.models, bundle.thresholds, bundle.pipeline, probes)
    assert rep.hallucination_rate >= 0.95

    d1, d2 = tmp_path / "b1", tmp_path / "b2"
    save_bundle(d1, fit_bundle(matrix, seed=4242, q=10, n_components=5, percentile=10.0))
    save_bundle(d2, fit_bundle(matrix, seed=4242, q=10, n_components=5, percentile=10.0))
    for p in sorted(d1.iterdir()):
        assert p.read_bytes() == (d2 / p.name).read_bytes()
    _stamp("detector (coverage 0.90 +- 0.03; gap probes >= 95%; EM monotone; "
           "byte-identical bundles)", t0, 120.0)
