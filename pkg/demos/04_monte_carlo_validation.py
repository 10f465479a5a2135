"""Does the predicted design variance survive contact with estimation?

The design solver promises an asymptotic variance a(v*; p) / C for the
maximum-likelihood estimate of the target.  This script simulates whole
surveys under the optimal design: draw each participant's latent state,
pass it through the noisy test channels, aggregate outcome counts, fit
the constrained MLE, and compare the scatter of the fitted targets
against the promise.
"""

import numpy as np

from serodesign import default_model, sample_outcomes, mle, simulation_report, solve_c_optimal

model = default_model()
P = np.array([0.10, 0.30, 0.01])
BUDGET = 1e7

report = solve_c_optimal(P, model, budget=BUDGET)
print(f"design under test: ", {
    t.label: int(w) for t, w in zip(report.design.patterns, report.design.integer_counts) if w
})
print(f"predicted Var(u'p-hat) = {report.min_variance:.3e}")

print("\nOne simulated survey, in detail")
print("=" * 72)
dataset = sample_outcomes(report.design, P, model, seed=12)
for pattern, counts in zip(dataset.patterns, dataset.counts):
    print(f"  pattern {pattern.label}: outcome counts {counts.tolist()}")
estimate = mle(dataset, model)
print(f"  fitted p-hat = {np.round(estimate, 5)},  u'p-hat = {estimate.sum():.5f}"
      f"  (truth {P.sum():.2f})")

print("\n200 independent replications")
print("=" * 72)
result = simulation_report(P, model, report.design.fractions, BUDGET, replications=200, seed=0)
print(f"  empirical variance  = {result['empirical_variance']:.3e}")
print(f"  predicted variance  = {result['predicted_variance']:.3e}")
print(f"  ratio               = {result['ratio']:.4f}")
print(f"  bias                = {result['bias']:+.2e}")
print(f"  normality p-value   = {result['normality_pvalue']:.3f}")

print("\nQuadrupling the budget")
print("=" * 72)
result4 = simulation_report(P, model, report.design.fractions, 4 * BUDGET, replications=200, seed=1)
print(f"  empirical variance  = {result4['empirical_variance']:.3e}"
      f"  (ratio to prediction {result4['ratio']:.4f})")
print(f"  bias                = {result4['bias']:+.2e}")
print("""
The empirical variance tracks a(v*; p) / C within Monte-Carlo noise, the
bias is an order of magnitude below the standard error, and the fitted
targets look Gaussian: the asymptotics the design relies on are already
accurate at realistic survey sizes.""")
