"""Delta-hallucination of loss-minimizing estimators.

Library layout:

- `mixtures`: latent Gaussian mixtures, optimal estimators, losses
- `regions`: hallucination verdicts, covering radii, HDR/HCDR regions
- `constructions`: explicit hallucination witnesses, numerically verified
- `bounds`: the hallucination-probability lower bound and its MC checks
- `coinflip`: exact Poisson-binomial coin experiment and linear learner
- `detector` / `embfile`: HCDR detector over embedding files
- `cli`: JSON-config command-line front end (`hallu ...`)
"""

from .bounds import (
    BoundInputs,
    BoundReport,
    MeanLaw,
    aggregate_spread,
    hallucination_lower_bound,
    mc_verify_bound,
    moment_ratio,
    optimize_alpha,
    verify_inequalities,
    wilson_interval,
)
from .coinflip import (
    CoinSet,
    FlipDataset,
    LatentCoinTask,
    bayes_prediction,
    generate_dataset,
    hallucination_demo,
    mirrored_demo_task,
    poisson_binomial_pmf,
    train_estimator,
)
from .constructions import (
    ConstructionReport,
    TiltedFamily,
    cross_entropy_witness,
    exact_optimum_witness,
    multi_input_witnesses,
    near_optimal_witness,
    tilted_witness,
)
from .detector import (
    DetectorBundle,
    GmmModel,
    PreprocessPipeline,
    calibrate,
    detect,
    fit_bundle,
    fit_gmm,
    fit_preprocess,
    split,
)
from .embfile import EmbeddingMatrix, load_embedding_matrix, read_emb1, write_emb1
from .errors import InfeasibleError, InputError, MissingArtifactError, ModelError
from .mixtures import (
    GaussianComponent,
    LatentMixture,
    bayes_estimator,
    component_density,
    cross_entropy_optimal,
    isotropic,
    mixture_density,
    mixture_from_json,
    mixture_to_json,
    quadratic_loss,
    sample_mixture,
)
from .regions import (
    CoveringRadii,
    HallucinationVerdict,
    covering_radii,
    covering_radius,
    delta_hallucinates,
    hcdr,
    hdr,
    max_conditional_density,
)

__version__ = "0.1.0"
