"""Walk through each hallucination witness and its numerical verification.

The theme: a distribution can be arranged so that the *best possible*
estimate under the training loss lands where every latent state assigns it
vanishing density. Each section builds one such arrangement and re-checks
the claim with plain density evaluations.
"""

import numpy as np

from hallu import (
    TiltedFamily,
    cross_entropy_witness,
    delta_hallucinates,
    exact_optimum_witness,
    multi_input_witnesses,
    near_optimal_witness,
    quadratic_loss,
    tilted_witness,
)

DELTA = 0.1

# -- 1. The exact optimum hallucinates ----------------------------------------
# Two latent states in 1-D: one mean pushed out just far enough that its
# density at the origin is (2 pi)^(-1/2) * delta, and a balancing state with
# variance delta^(-2) whose peak density is exactly delta. The mixture mean
# (the quadratic-loss optimum) is 0.

report = exact_optimum_witness(n_states=2, dim=1, delta=DELTA)
print("== exact optimum ==")
print("estimate:", report.estimator_value)
print("per-state density at the estimate:", report.per_state_density)
print("all densities <= delta:", report.passed)

verdict = delta_hallucinates(report.mixture, report.estimator_value, DELTA)
print("independent verdict:", verdict.hallucinates, "(margin %.3g)" % verdict.margin)

# the estimate really is the loss minimizer
rng = np.random.default_rng(0)
base = quadratic_loss(report.mixture, report.estimator_value)
worse = min(
    quadratic_loss(report.mixture, report.estimator_value + rng.normal(0, 1, 1))
    for _ in range(100)
)
print("loss at optimum %.4f vs best perturbed %.4f" % (base, worse))

# -- 2. Every near-optimal estimate hallucinates too ---------------------------
# Push all means past sqrt(-2 ln delta) + epsilon: then every point within
# epsilon of the optimum keeps all conditional densities under delta.

ball = near_optimal_witness(n_states=2, dim=1, delta=DELTA, epsilon=0.5, rng=1)
print("\n== epsilon-ball (epsilon = 0.5) ==")
print("required mean norm:", ball.details["required_norm"])
print("max conditional density over 1000 ball points:",
      max(ball.details["ball_max_density"]))
print("analytic whole-ball bounds:", ball.details["analytic_ball_bound"])
print("passed:", ball.passed)

# -- 3. Hinted inputs do not help ----------------------------------------------
# If the estimator is L-Lipschitz, a hint of size B moves its output at most
# L * B, so the ball construction applies at every hinted input.

family = TiltedFamily(base_input=[0.0], hints=[[0.25], [-0.25]], lipschitz=2.0)
tilted = tilted_witness(family, DELTA, rng=2)
print("\n== tilted inputs (L=2, max hint norm 0.25 -> epsilon 0.5) ==")
for t in tilted:
    print(f"hint {t.hint_index}: applicable={t.applicable} passed={t.report.passed}")

# -- 4. Cross-entropy training has the same failure ------------------------------
# One-hot targets under equal latent weights: the cross-entropy minimizer is
# their average, which no state finds plausible.

ce = cross_entropy_witness(n_states=4, n_classes=4, delta=DELTA)
print("\n== cross-entropy (N=4) ==")
print("optimal predictor:", ce.estimator_value)
print("per-state density:", ce.per_state_density, "passed:", ce.passed)

# -- 5. Many inputs at once -------------------------------------------------------

outcomes = multi_input_witnesses([dict(n_states=2, dim=1, delta=DELTA)] * 3)
print("\n== three inputs ==")
print("all passed:", all(o.feasible and o.report.passed for o in outcomes))
