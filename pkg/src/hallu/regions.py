"""Hallucination verdicts, high-density regions, and covering radii.

A point delta-hallucinates when its conditional density under *every*
latent state is at most delta; equivalently it falls outside every
super-level set U_i = {a : f_i(a) > delta}. For Gaussian conditionals the
U_i are ellipsoids and are handled analytically; HDRs of general densities
are computed on grids (1-D/2-D) or by density-quantile sampling (any
dimension).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .mixtures import GaussianComponent, LatentMixture
from .rng import as_generator

GRID_CELLS_1D = 4096
GRID_CELLS_2D = 512
GRID_SPAN_SIGMAS = 8.0


# -- verdicts -----------------------------------------------------------------

@dataclass(frozen=True)
class HallucinationVerdict:
    """Per-state densities at an estimate plus the delta-hallucination decision."""

    hallucinates: bool
    per_state_density: np.ndarray
    margin: float  # max per-state density minus delta
    delta: float


def delta_hallucinates(mixture: LatentMixture, estimate, delta: float) -> HallucinationVerdict:
    """True iff every state's conditional density at `estimate` is <= delta."""
    if not 0.0 < delta <= 1.0:
        raise InputError(f"delta must lie in (0, 1], got {delta}")
    point = np.asarray(estimate, dtype=float)
    if point.shape != (mixture.dim,):
        raise InputError(f"estimate must have shape ({mixture.dim},), got {point.shape}")
    dens = mixture.state_densities(point)
    margin = float(np.max(dens)) - delta
    dens = np.array(dens)
    dens.setflags(write=False)
    return HallucinationVerdict(bool(margin <= 0.0), dens, margin, float(delta))


def max_conditional_density(mixture: LatentMixture, point) -> float:
    """max_i f_i(point): how plausible the point is under its best latent state."""
    return float(np.max(mixture.state_densities(np.asarray(point, dtype=float))))


# -- covering radii -----------------------------------------------------------

@dataclass(frozen=True)
class CoveringRadii:
    per_state: tuple[float, ...]
    uniform: float  # max over states


def covering_radius(component: GaussianComponent, delta: float) -> float:
    """Radius of the smallest ball centered at the mean containing {f > delta}.

    With L = ln(peak/delta), the super-level set is the ellipsoid
    {maha^2 < 2L}; its farthest point from the mean sits at distance
    sqrt(2 L lambda_max). Empty set (L <= 0) gives radius 0.
    """
    if delta <= 0:
        raise InputError("delta must be positive")
    level = math.log(component.peak_density / delta)
    if level <= 0:
        return 0.0
    return math.sqrt(2.0 * level * component.lambda_max)


def covering_radii(mixture: LatentMixture, delta: float) -> CoveringRadii:
    per_state = tuple(covering_radius(c, delta) for c in mixture.components)
    return CoveringRadii(per_state, max(per_state))


# -- region representations ---------------------------------------------------

@dataclass(frozen=True)
class EllipsoidRegion:
    """Analytic super-level set of a Gaussian: {maha^2 < 2 level}; empty iff level <= 0."""

    component: GaussianComponent
    level: float

    @property
    def is_empty(self) -> bool:
        return self.level <= 0.0

    def contains(self, points) -> np.ndarray:
        if self.is_empty:
            return np.zeros(np.asarray(points, dtype=float).shape[:-1], dtype=bool)
        return self.component.mahalanobis_sq(points) < 2.0 * self.level

    def to_dict(self) -> dict:
        return {
            "kind": "ellipsoid",
            "center": self.component.mean.tolist(),
            "level": self.level,
            "cov": self.component.cov_to_dict(),
        }


@dataclass(frozen=True)
class ThresholdRegion:
    """Super-level set {a : f(a) > cutoff} of a referenced density (strict)."""

    density: object  # LatentMixture or GaussianComponent
    cutoff: float

    def contains(self, points) -> np.ndarray:
        return density_values(self.density, points) > self.cutoff

    def to_dict(self) -> dict:
        return {"kind": "threshold", "cutoff": self.cutoff}


@dataclass(frozen=True)
class GridRegion:
    """Axis-aligned cells with membership flags (plotting/export form)."""

    axes: tuple[np.ndarray, ...]  # cell centers per axis
    member: np.ndarray  # boolean, shape = tuple(len(a) for a in axes)
    threshold: float

    def to_csv(self, path) -> None:
        export_grid_csv(path, self.axes, {"member": self.member})


def region_to_json(region) -> str:
    return json.dumps(region.to_dict(), sort_keys=True)


def export_grid_csv(path, axes, masks: dict) -> None:
    """Cell center coordinates plus 0/1 membership flags, one row per cell."""
    names = list(masks)
    dim = len(axes)
    header = ["x", "y"][:dim] + names
    mesh = np.meshgrid(*axes, indexing="ij")
    coords = [m.ravel() for m in mesh]
    flags = [np.asarray(masks[n]).ravel().astype(int) for n in names]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in zip(*coords, *flags):
            writer.writerow([repr(float(v)) if isinstance(v, float) else int(v) for v in row])


# -- grids and HDR ------------------------------------------------------------

def density_values(density, points) -> np.ndarray:
    """Evaluate a LatentMixture marginal or a single component at points."""
    if isinstance(density, LatentMixture):
        return density.state_densities(points) @ density.weights
    return density.density(points)


def _density_components(density):
    if isinstance(density, LatentMixture):
        return density.components
    return (density,)


def _density_dim(density) -> int:
    return _density_components(density)[0].dim


def _axis_sigma(component: GaussianComponent) -> np.ndarray:
    if component.cov_kind == "iso":
        return np.full(component.dim, math.sqrt(float(component.cov_value)))
    if component.cov_kind == "diag":
        return np.sqrt(component.cov_value)
    return np.sqrt(np.diag(component.cov_value))


def grid_axes(density, cells=None, span: float = GRID_SPAN_SIGMAS) -> tuple[np.ndarray, ...]:
    """Cell-center axes covering every component mean +- span standard deviations."""
    dim = _density_dim(density)
    if dim > 2:
        raise InputError(f"grid method supports 1-D/2-D densities, got dimension {dim}")
    if cells is None:
        cells = GRID_CELLS_1D if dim == 1 else GRID_CELLS_2D
    comps = _density_components(density)
    lo = np.min([c.mean - span * _axis_sigma(c) for c in comps], axis=0)
    hi = np.max([c.mean + span * _axis_sigma(c) for c in comps], axis=0)
    axes = []
    for k in range(dim):
        h = (hi[k] - lo[k]) / cells
        axes.append(lo[k] + (np.arange(cells) + 0.5) * h)
    return tuple(axes)


def grid_points(axes) -> np.ndarray:
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh, axis=-1)


def grid_cell_volume(axes) -> float:
    return float(np.prod([a[1] - a[0] for a in axes])) if len(axes[0]) > 1 else 1.0


def grid_hdr_mask(values: np.ndarray, cell_volume: float, mass: float):
    """Pick the smallest set of highest-density cells holding ~`mass`.

    Returns (mask, threshold, achieved). The straddling cell is included or
    not, whichever lands the accumulated mass closer to the request.
    """
    if not 0.0 < mass <= 1.0:
        raise InputError(f"mass must lie in (0, 1], got {mass}")
    flat = values.ravel()
    order = np.argsort(flat)[::-1]
    csum = np.cumsum(flat[order]) * cell_volume
    if mass >= 1.0:
        threshold, last = 0.0, flat.size - 1
    else:
        k = int(np.searchsorted(csum, mass))
        if k >= flat.size:
            k = flat.size - 1
        if k > 0 and abs(csum[k - 1] - mass) <= abs(csum[k] - mass):
            k -= 1
        threshold, last = float(flat[order[k]]), k
    mask = np.zeros(flat.size, dtype=bool)
    mask[order[: last + 1]] = True
    return mask.reshape(values.shape), threshold, float(csum[last])


def hdr(density, mass: float, *, method: str | None = None, cells=None,
        span: float = GRID_SPAN_SIGMAS, samples: int = 200_000, rng=None):
    """Highest-density region at probability `mass`.

    Returns (ThresholdRegion, achieved_mass). `method` is "grid" (1-D/2-D,
    default there) or "sample" (any dimension: the cutoff is the
    (1 - mass)-quantile of the density of the density's own draws).
    """
    if not 0.0 < mass <= 1.0:
        raise InputError(f"mass must lie in (0, 1], got {mass}")
    dim = _density_dim(density)
    if method is None:
        method = "grid" if dim <= 2 else "sample"
    if method == "grid":
        axes = grid_axes(density, cells=cells, span=span)
        values = density_values(density, grid_points(axes))
        _, threshold, achieved = grid_hdr_mask(values, grid_cell_volume(axes), mass)
        return ThresholdRegion(density, threshold), achieved
    if method != "sample":
        raise InputError(f"unknown hdr method {method!r}")
    gen = as_generator(rng if rng is not None else 0)
    if isinstance(density, LatentMixture):
        from .mixtures import sample_mixture

        draws, _ = sample_mixture(density, samples, gen)
    else:
        draws = density.sample(samples, gen)
    vals = density_values(density, draws)
    half = samples // 2
    if mass >= 1.0:
        threshold = 0.0
    else:
        threshold = float(np.quantile(vals[:half], 1.0 - mass, method="lower"))
    achieved = float(np.mean(vals[half:] >= threshold))
    return ThresholdRegion(density, threshold), achieved


def hdr_grid(density, mass: float, *, cells=None, span: float = GRID_SPAN_SIGMAS) -> GridRegion:
    """Grid (plotting) form of the HDR; same cell-selection rule as `hdr`."""
    axes = grid_axes(density, cells=cells, span=span)
    values = density_values(density, grid_points(axes))
    mask, threshold, _ = grid_hdr_mask(values, grid_cell_volume(axes), mass)
    return GridRegion(axes, mask, threshold)


# -- HCDR ----------------------------------------------------------------------

@dataclass(frozen=True)
class HcdrRegion:
    """Union of per-state regions: a point is a member iff some state claims it."""

    per_state: tuple
    delta: float | None
    mass: float | None
    achieved: tuple[float, ...] | None  # per-state achieved masses (mass mode)

    def contains(self, points) -> np.ndarray:
        flags = [r.contains(points) for r in self.per_state]
        return np.logical_or.reduce(flags)

    def to_dict(self) -> dict:
        doc = {"kind": "hcdr", "delta": self.delta, "mass": self.mass,
               "per_state": [r.to_dict() for r in self.per_state]}
        if self.achieved is not None:
            doc["achieved"] = list(self.achieved)
        return doc


def hcdr(mixture: LatentMixture, *, delta: float | None = None, mass: float | None = None,
         method: str | None = None, cells=None, span: float = GRID_SPAN_SIGMAS,
         samples: int = 200_000, rng=None) -> HcdrRegion:
    """Highest conditional density regions, one per latent state.

    Exactly one of `delta` (a density bound, analytic ellipsoids) or `mass`
    (per-state probability mass, thresholds via `hdr` on each conditional)
    must be given; the two parameterizations are never converted implicitly.
    """
    if (delta is None) == (mass is None):
        raise InputError("pass exactly one of delta= or mass=")
    if delta is not None:
        if not 0.0 < delta <= 1.0:
            raise InputError(f"delta must lie in (0, 1], got {delta}")
        regions = tuple(
            EllipsoidRegion(c, math.log(c.peak_density / delta)) for c in mixture.components
        )
        return HcdrRegion(regions, float(delta), None, None)
    regions, achieved = [], []
    for comp in mixture.components:
        region, got = hdr(comp, mass, method=method, cells=cells, span=span,
                          samples=samples, rng=rng)
        regions.append(region)
        achieved.append(got)
    return HcdrRegion(tuple(regions), None, float(mass), tuple(achieved))


def hdr_hcdr_masks(mixture: LatentMixture, *, hdr_mass: float,
                   hcdr_mass: float | None = None, hcdr_delta: float | None = None,
                   cells=None, span: float = GRID_SPAN_SIGMAS):
    """Marginal-HDR and HCDR membership flags on one shared grid.

    Returns (axes, hdr_mask, hcdr_mask, info) ready for CSV export; this is
    the region structure plotted in the two-normal illustration (per-state
    intervals vs. one marginal region).
    """
    if (hcdr_mass is None) == (hcdr_delta is None):
        raise InputError("pass exactly one of hcdr_mass= or hcdr_delta=")
    axes = grid_axes(mixture, cells=cells, span=span)
    pts = grid_points(axes)
    cell_vol = grid_cell_volume(axes)
    marginal = density_values(mixture, pts)
    hdr_mask, hdr_threshold, hdr_achieved = grid_hdr_mask(marginal, cell_vol, hdr_mass)
    hcdr_mask = np.zeros_like(hdr_mask)
    info = {"hdr_threshold": hdr_threshold, "hdr_achieved": hdr_achieved, "per_state": []}
    for comp in mixture.components:
        values = comp.density(pts)
        if hcdr_delta is not None:
            state_mask = values > hcdr_delta
            info["per_state"].append({"threshold": hcdr_delta})
        else:
            state_mask, t, got = grid_hdr_mask(values, cell_vol, hcdr_mass)
            info["per_state"].append({"threshold": t, "achieved": got})
        hcdr_mask |= state_mask
    return axes, hdr_mask, hcdr_mask, info


def count_runs(mask: np.ndarray) -> int:
    """Number of contiguous True runs in a 1-D mask (interval count on a grid)."""
    m = np.asarray(mask, dtype=bool).ravel()
    if m.size == 0:
        return 0
    return int(m[0]) + int(np.count_nonzero(~m[:-1] & m[1:]))
