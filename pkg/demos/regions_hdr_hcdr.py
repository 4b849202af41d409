"""HDR vs HCDR on a two-normal mixture, plus covering radii.

The marginal highest-density region can be one connected blob while the
per-state (conditional) regions are two separated intervals; a sample can
be plausible for the marginal yet implausible for *every* latent state.
The grid CSV written at the end plots both region kinds side by side.
"""

from pathlib import Path

import numpy as np

from hallu import (
    GaussianComponent,
    LatentMixture,
    covering_radii,
    delta_hallucinates,
    hcdr,
    hdr,
    isotropic,
    max_conditional_density,
)
from hallu.regions import count_runs, export_grid_csv, hdr_hcdr_masks

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

mixture = LatentMixture([isotropic([-2.5], 1.0), isotropic([2.5], 1.0)], [0.5, 0.5])

# -- marginal HDR ----------------------------------------------------------------
region, achieved = hdr(mixture, 0.9)
print("marginal 0.9-HDR cutoff:", region.cutoff, "achieved mass:", achieved)

# -- conditional regions and the hallucination verdict ------------------------------
conditional = hcdr(mixture, delta=0.05)
for x in (-2.5, 0.0, 2.5):
    point = np.array([x])
    member = bool(conditional.contains(point))
    verdict = delta_hallucinates(mixture, point, 0.05)
    print(f"x={x:+.1f}: in HCDR={member} hallucinates={verdict.hallucinates} "
          f"max conditional density={max_conditional_density(mixture, point):.4f}")

# the mixture mean: plausible on average, implausible for every state
mean_point = np.array([0.0])
print("mixture mean in marginal HDR:", bool(region.contains(mean_point)))
print("mixture mean in HCDR:", bool(conditional.contains(mean_point)))

# -- covering radii -------------------------------------------------------------------
radii = covering_radii(mixture, 0.05)
print("per-state covering radii:", radii.per_state, "uniform:", radii.uniform)
single = GaussianComponent([0.0], "iso", 1.0)
print("N(0,1) radius at delta=0.1 (should be ~1.6635):", end=" ")
from hallu import covering_radius

print(covering_radius(single, 0.1))

# -- shared-grid plot data ---------------------------------------------------------------
axes, hdr_mask, hcdr_mask, info = hdr_hcdr_masks(mixture, hdr_mass=0.99, hcdr_mass=0.9)
print("\nmarginal region intervals:", count_runs(hdr_mask))
print("conditional-union intervals:", count_runs(hcdr_mask))
path = OUT / "hdr_vs_hcdr.csv"
export_grid_csv(path, axes, {"hdr": hdr_mask, "hcdr": hcdr_mask})
print("grid written to", path)
