import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import bisect

from hallu.errors import InputError
from hallu.mixtures import GaussianComponent, LatentMixture, isotropic
from hallu.regions import (
    EllipsoidRegion,
    count_runs,
    covering_radii,
    covering_radius,
    delta_hallucinates,
    density_values,
    export_grid_csv,
    grid_axes,
    grid_cell_volume,
    grid_hdr_mask,
    grid_points,
    hcdr,
    hdr,
    hdr_grid,
    hdr_hcdr_masks,
    max_conditional_density,
    region_to_json,
)


def two_normal_mixture(sep=4.0, var=1.0, weights=(0.5, 0.5)):
    return LatentMixture([isotropic([-sep], var), isotropic([sep], var)], weights)


def scan_radius(comp, delta, n_angles=4096):
    """Oracle: farthest point with f > delta, by per-ray bisection.

    Along any ray from the mean a Gaussian density falls monotonically, so
    bisection on the boundary radius per direction is exact; the covering
    radius is the max over directions.
    """
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
    for _ in range(60):  # grow hi until every ray has left the region
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


# -- delta_hallucinates ----------------------------------------------------------

def test_exact_optimum_witness_verdict():
    from hallu.constructions import exact_optimum_witness

    rep = exact_optimum_witness(2, 1, 0.1)
    v = delta_hallucinates(rep.mixture, rep.estimator_value, 0.1)
    assert v.hallucinates
    assert np.all(v.per_state_density <= 0.1)
    np.testing.assert_allclose(v.per_state_density, rep.per_state_density, rtol=1e-12)


def test_standard_normal_not_hallucinating_at_mean():
    m = LatentMixture([isotropic([0.0], 1.0)], [1.0])
    v = delta_hallucinates(m, [0.0], 0.1)
    assert not v.hallucinates
    assert v.per_state_density[0] == pytest.approx(0.3989423, abs=1e-6)
    assert v.margin == pytest.approx(0.3989423 - 0.1, abs=1e-6)


def test_narrow_normal_peak_exceeds_one():
    m = LatentMixture([isotropic([0.0], 0.0001)], [1.0])
    v = delta_hallucinates(m, [0.0], 1.0)
    assert not v.hallucinates
    assert v.per_state_density[0] == pytest.approx((2 * math.pi * 0.0001) ** -0.5, rel=1e-9)


def test_delta_out_of_range():
    m = LatentMixture([isotropic([0.0], 1.0)], [1.0])
    for bad in (0.0, -0.1, 1.5):
        with pytest.raises(InputError):
            delta_hallucinates(m, [0.0], bad)


def test_verdict_margin_equivalence():
    rng = np.random.default_rng(4)
    m = two_normal_mixture()
    for _ in range(50):
        x = rng.normal(0, 6, 1)
        delta = float(rng.uniform(0.01, 0.5))
        v = delta_hallucinates(m, x, delta)
        assert v.hallucinates == (v.margin <= 0) == bool(np.all(v.per_state_density <= delta))


def test_max_conditional_density():
    m = two_normal_mixture()
    assert max_conditional_density(m, [4.0]) >= (2 * math.pi) ** -0.5 * 0.999
    rng = np.random.default_rng(8)
    for _ in range(20):
        x = rng.normal(0, 5, 1)
        v = delta_hallucinates(m, x, 0.3)
        assert max_conditional_density(m, x) == pytest.approx(
            float(np.max(v.per_state_density)), rel=1e-15
        )
    # near one mode the score is that conditional's peak, not the mixture average
    assert max_conditional_density(m, [4.0]) > 2 * density_values(m, np.array([4.0])) * 0.9


# -- covering radius -------------------------------------------------------------

def test_covering_radius_1d_sigma1_delta01():
    comp = GaussianComponent([0.0], "iso", 1.0)
    r = covering_radius(comp, 0.1)
    assert r == pytest.approx(1.66352, abs=1e-4)
    assert r == pytest.approx(scan_radius(comp, 0.1), abs=1e-6)


def test_covering_radius_empty_region():
    comp = GaussianComponent([0.0], "iso", 1.0)
    assert covering_radius(comp, 0.5) == 0.0  # delta above the peak 0.3989


def test_covering_radius_2d_diag():
    comp = GaussianComponent([0.0, 0.0], "diag", [1.0, 4.0])
    delta = 0.01
    peak = comp.peak_density
    expected = math.sqrt(2 * math.log(peak / delta)) * 2.0
    r = covering_radius(comp, delta)
    assert r == pytest.approx(expected, rel=1e-12)
    assert r == pytest.approx(scan_radius(comp, delta), abs=1e-3)


def test_covering_radius_random_vs_scan():
    rng = np.random.default_rng(31)
    for _ in range(50):
        dim = int(rng.integers(1, 3))
        mean = rng.normal(0, 2, dim)
        if dim == 1:
            comp = GaussianComponent(mean, "iso", rng.uniform(0.1, 4.0))
        else:
            a = rng.normal(0, 1, (2, 2))
            comp = GaussianComponent(mean, "full", a @ a.T + 0.2 * np.eye(2))
        delta = float(rng.uniform(0.005, 0.2))
        r = covering_radius(comp, delta)
        assert r == pytest.approx(scan_radius(comp, delta), abs=1e-3)


def test_covering_soundness_sampled_points():
    rng = np.random.default_rng(17)
    comp = GaussianComponent([1.0, -2.0], "diag", [0.7, 2.5])
    delta = 0.02
    r = covering_radius(comp, delta)
    pts = comp.sample(10_000, rng)
    dens = comp.density(pts)
    inside = pts[dens > delta]
    dists = np.linalg.norm(inside - comp.mean, axis=1)
    assert np.all(dists <= r + 1e-9)


def test_covering_tightness_grid_point_near_radius():
    for comp in (GaussianComponent([0.0], "iso", 1.3),
                 GaussianComponent([0.0, 0.0], "diag", [1.0, 3.0])):
        delta = 0.03
        r = covering_radius(comp, delta)
        axes = grid_axes(comp, cells=2048 if comp.dim == 1 else 512)
        pts = grid_points(axes)
        dens = comp.density(pts)
        dists = np.linalg.norm(pts - comp.mean, axis=-1)
        far = np.max(dists[dens > delta])
        assert far >= 0.99 * r


def test_covering_radii_uniform_is_max():
    m = two_normal_mixture(var=1.0)
    m2 = LatentMixture(
        [isotropic([-4.0], 1.0), isotropic([4.0], 2.0)], [0.5, 0.5]
    )
    for mix in (m, m2):
        rr = covering_radii(mix, 0.05)
        assert rr.uniform == max(rr.per_state)


# -- HDR ---------------------------------------------------------------------------

def test_hdr_standard_normal_9545():
    # oracle: bisection on the threshold with quadrature for the mass
    def mass_at(t):
        a = math.sqrt(-2 * math.log(t * math.sqrt(2 * math.pi)))
        return quad(lambda x: math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi), -a, a)[0]

    t_star = bisect(lambda t: mass_at(t) - 0.9545, 1e-6, 0.39, xtol=1e-12)
    assert t_star == pytest.approx(0.05399, abs=1e-4)

    comp = GaussianComponent([0.0], "iso", 1.0)
    region, achieved = hdr(comp, 0.9545, cells=16384)
    assert region.cutoff == pytest.approx(t_star, abs=2e-4)
    assert achieved == pytest.approx(0.9545, abs=1e-3)
    assert bool(region.contains(np.array([1.9]))) and not bool(region.contains(np.array([2.1])))


def test_hdr_mass_one_full_grid():
    comp = GaussianComponent([0.0], "iso", 1.0)
    region, achieved = hdr(comp, 1.0)
    assert region.cutoff == 0.0
    assert achieved == pytest.approx(1.0, abs=1e-6)


def test_hdr_bimodal_two_intervals():
    m = two_normal_mixture(sep=4.0)
    g = hdr_grid(m, 0.9)
    assert count_runs(g.member) == 2
    region, achieved = hdr(m, 0.9)
    assert achieved == pytest.approx(0.9, abs=1e-3)
    # oracle: independent fine Riemann mass of {f >= t}
    xs = np.linspace(-14, 14, 400_001)
    f = density_values(m, xs[:, None])
    mass = float(np.trapezoid(np.where(f >= region.cutoff, f, 0.0), xs))
    assert mass == pytest.approx(0.9, abs=1e-3)


def test_hdr_achieved_mass_on_random_densities():
    rng = np.random.default_rng(77)
    for _ in range(20):
        n = int(rng.integers(1, 4))
        comps = [isotropic([float(rng.normal(0, 3))], float(rng.uniform(0.3, 2.0)))
                 for _ in range(n)]
        w = rng.uniform(0.2, 1.0, n)
        m = LatentMixture(comps, w / w.sum())
        mass = float(rng.uniform(0.5, 0.99))
        region, achieved = hdr(m, mass, cells=65536)
        assert achieved == pytest.approx(mass, abs=1e-3)
        xs = np.linspace(-30, 30, 600_001)
        f = density_values(m, xs[:, None])
        oracle = float(np.trapezoid(np.where(f >= region.cutoff, f, 0.0), xs))
        assert oracle == pytest.approx(mass, abs=1e-3)


def test_hdr_nesting():
    m = two_normal_mixture(sep=2.0)
    axes = grid_axes(m)
    values = density_values(m, grid_points(axes))
    vol = grid_cell_volume(axes)
    mask1, t1, _ = grid_hdr_mask(values, vol, 0.5)
    mask2, t2, _ = grid_hdr_mask(values, vol, 0.9)
    assert t1 >= t2
    assert np.all(mask2 | ~mask1)  # mask1 subset of mask2


def test_hdr_sampling_method_high_dim():
    comp = GaussianComponent(np.zeros(5), "iso", 1.0)
    region, achieved = hdr(comp, 0.9, method="sample", samples=100_000, rng=3)
    se = math.sqrt(0.9 * 0.1 / 50_000)
    assert abs(achieved - 0.9) <= 2 * se
    # chi-square_5 0.9-quantile oracle for the cutoff
    from scipy.stats import chi2

    want = float(np.exp(-0.5 * (5 * math.log(2 * math.pi) + chi2(5).ppf(0.9))))
    assert region.cutoff == pytest.approx(want, rel=0.05)


def test_hdr_grid_unsupported_dimension():
    comp = GaussianComponent(np.zeros(3), "iso", 1.0)
    with pytest.raises(InputError):
        hdr(comp, 0.9, method="grid")


# -- HCDR --------------------------------------------------------------------------

def test_hcdr_union_semantics():
    m = two_normal_mixture(sep=4.0)
    region = hcdr(m, delta=0.05)
    assert bool(region.contains(np.array([-4.0])))
    assert bool(region.contains(np.array([4.0])))
    assert not bool(region.contains(np.array([0.0])))
    flags = [r.contains(np.array([-4.0])) for r in region.per_state]
    assert bool(np.logical_or.reduce(flags)) == bool(region.contains(np.array([-4.0])))


def test_hcdr_equivalence_with_delta_hallucinates():
    rng = np.random.default_rng(6)
    m = two_normal_mixture(sep=3.0, var=1.5, weights=(0.3, 0.7))
    for _ in range(100):
        delta = float(rng.uniform(0.01, 0.3))
        region = hcdr(m, delta=delta)
        x = rng.normal(0, 5, 1)
        v = delta_hallucinates(m, x, delta)
        assert v.hallucinates == (not bool(region.contains(x)))


def test_hcdr_mass_parameterization():
    m = two_normal_mixture(sep=4.0)
    region = hcdr(m, mass=0.9)
    assert region.mass == 0.9 and region.delta is None
    for got in region.achieved:
        assert got == pytest.approx(0.9, abs=1e-3)
    assert bool(region.contains(np.array([-4.0])))
    with pytest.raises(InputError):
        hcdr(m, delta=0.1, mass=0.9)
    with pytest.raises(InputError):
        hcdr(m)


def test_hcdr_witness_estimate_outside():
    from hallu.constructions import exact_optimum_witness

    rep = exact_optimum_witness(3, 1, 0.05)
    region = hcdr(rep.mixture, delta=0.05)
    assert not bool(region.contains(rep.estimator_value))


def test_ellipsoid_region_empty_iff_level_nonpositive():
    comp = GaussianComponent([0.0], "iso", 1.0)
    assert EllipsoidRegion(comp, -0.5).is_empty
    assert not EllipsoidRegion(comp, 0.5).is_empty
    assert not bool(EllipsoidRegion(comp, -0.5).contains(np.array([0.0])))


# -- figure-style plot data and exports ------------------------------------------

def test_hdr_hcdr_masks_fig_structure():
    m = LatentMixture([isotropic([-2.5], 1.0), isotropic([2.5], 1.0)], [0.5, 0.5])
    axes, hdr_mask, hcdr_mask, info = hdr_hcdr_masks(m, hdr_mass=0.99, hcdr_mass=0.9)
    assert count_runs(hdr_mask) == 1  # one marginal region
    assert count_runs(hcdr_mask) == 2  # two conditional intervals
    assert info["hdr_achieved"] == pytest.approx(0.99, abs=1e-3)


def test_grid_csv_export(tmp_path):
    m = two_normal_mixture()
    axes, hdr_mask, hcdr_mask, _ = hdr_hcdr_masks(m, hdr_mass=0.9, hcdr_mass=0.9, cells=64)
    path = tmp_path / "grid.csv"
    export_grid_csv(path, axes, {"hdr": hdr_mask, "hcdr": hcdr_mask})
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "x,hdr,hcdr"
    assert len(lines) == 65


def test_region_json_forms():
    comp = GaussianComponent([0.0], "iso", 1.0)
    region, _ = hdr(comp, 0.9)
    doc = region_to_json(region)
    assert '"kind": "threshold"' in doc
    import json

    ell = EllipsoidRegion(comp, 1.2)
    parsed = json.loads(region_to_json(ell))
    assert parsed["kind"] == "ellipsoid" and parsed["level"] == 1.2


def test_count_runs():
    assert count_runs(np.array([0, 1, 1, 0, 1], dtype=bool)) == 2
    assert count_runs(np.array([1, 1, 1], dtype=bool)) == 1
    assert count_runs(np.zeros(4, dtype=bool)) == 0
