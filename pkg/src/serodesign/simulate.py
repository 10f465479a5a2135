"""Monte-Carlo verification of the predicted design variance.

Draws survey outcomes under a design (state first, then the outcome of
the administered tests given the state), fits the constrained maximum
likelihood estimate of the state probabilities, and compares the sample
variance of the estimated target against the variance the design solver
predicted.  Replications use independent, named counter-based random
streams so runs are reproducible and order-independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .coptimal import ConvergenceError, Design, objective
from .model import DiseaseModel, TestPattern, _pattern_tables, all_patterns, validate_parameter

__all__ = [
    "SurveyDataset",
    "sample_outcomes",
    "mle",
    "log_likelihood",
    "variance_check",
    "simulate_estimates",
    "simulation_report",
    "jarque_bera_pvalue",
]

MLE_TOL = 1e-8
MLE_MAX_ITER = 100_000


@dataclass(frozen=True, eq=False)
class SurveyDataset:
    """Sufficient statistics of one simulated survey.

    For every administered pattern, ``counts`` holds the number of
    participants per outcome, in outcome_space order.
    """

    patterns: tuple[TestPattern, ...]
    counts: tuple[np.ndarray, ...]
    seed: int

    def __post_init__(self):
        counts = tuple(np.asarray(c, dtype=np.int64) for c in self.counts)
        if len(counts) != len(self.patterns):
            raise ValueError("need one count vector per pattern")
        for t, c in zip(self.patterns, counts):
            if c.ndim != 1 or c.shape[0] != 2 ** len(t.included):
                raise ValueError(
                    f"pattern {t.label}: expected {2 ** len(t.included)} outcome counts, "
                    f"got shape {c.shape}"
                )
            if (c < 0).any():
                raise ValueError(f"pattern {t.label}: negative outcome count")
        for c in counts:
            c.setflags(write=False)
        object.__setattr__(self, "patterns", tuple(self.patterns))
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(sum(int(c.sum()) for c in self.counts))


def _stream(seed: int, replication: int, pattern_index: int) -> np.random.Generator:
    # Philox is counter-based; the spawn key names the (replication, pattern)
    # stream so parallel replications stay reproducible.
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(replication, pattern_index))
    return np.random.Generator(np.random.Philox(ss))


def sample_outcomes(
    design: Design,
    p,
    model: DiseaseModel,
    seed: int,
    replication: int = 0,
) -> SurveyDataset:
    """Simulate one survey under the design's integer counts.

    Each participant's state is drawn from (p, 1 - sum(p)), then the
    outcome of the administered tests is drawn conditionally on the state;
    only the per-pattern outcome counts are retained.  Deterministic given
    (seed, replication).
    """
    p = validate_parameter(p, model.k)
    state_probs = np.append(p, 1.0 - p.sum())
    patterns, counts = [], []
    for index, (t, n) in enumerate(zip(design.patterns, design.integer_counts)):
        if n <= 0:
            continue
        rng = _stream(seed, replication, index)
        q, _, _ = _pattern_tables(model, t.mask)  # (n_y, k+1)
        states = rng.multinomial(int(n), state_probs)
        outcome_counts = np.zeros(q.shape[0], dtype=np.int64)
        for s, n_s in enumerate(states):
            if n_s > 0:
                outcome_counts += rng.multinomial(int(n_s), q[:, s])
        patterns.append(t)
        counts.append(outcome_counts)
    if not patterns:
        raise ValueError("design has no pattern with a positive integer count")
    return SurveyDataset(patterns=tuple(patterns), counts=tuple(counts), seed=seed)


def _dataset_tables(dataset: SurveyDataset, model: DiseaseModel):
    """Stack per-outcome rows across patterns: counts n_y, offsets, slopes."""
    slopes, offsets, weights = [], [], []
    for t, c in zip(dataset.patterns, dataset.counts):
        _, d, q_ref = _pattern_tables(model, t.mask)
        slopes.append(d)
        offsets.append(q_ref)
        weights.append(c.astype(np.float64))
    return np.vstack(slopes), np.concatenate(offsets), np.concatenate(weights)


def log_likelihood(dataset: SurveyDataset, p, model: DiseaseModel) -> float:
    """Observed-data log-likelihood of the state probabilities p."""
    p = validate_parameter(p, model.k)
    slopes, offsets, weights = _dataset_tables(dataset, model)
    mix = offsets + slopes @ p
    return float(weights @ np.log(mix))


def _project_feasible(q: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {p >= 0, sum(p) <= 1}."""
    x = np.maximum(q, 0.0)
    if x.sum() <= 1.0:
        return x
    # the sum constraint is active: project onto the unit simplex
    u = np.sort(q)[::-1]
    cumulative = np.cumsum(u) - 1.0
    ranks = np.arange(1, q.size + 1)
    rho = np.nonzero(u - cumulative / ranks > 0)[0][-1]
    theta = cumulative[rho] / (rho + 1.0)
    return np.maximum(q - theta, 0.0)


def mle(dataset: SurveyDataset, model: DiseaseModel, tol: float = MLE_TOL) -> np.ndarray:
    """Maximum-likelihood state probabilities over the feasible simplex.

    Projected gradient ascent on the mean log-likelihood with a
    Barzilai-Borwein step and Armijo backtracking, started from an
    interior equal-probability point.  The log-likelihood is concave in p,
    so the first-order point found is the global maximum; convergence is
    declared when the unit-step projected gradient falls below ``tol``.
    """
    if not dataset.patterns:
        raise ValueError("dataset is empty")
    slopes, offsets, weights = _dataset_tables(dataset, model)
    total = weights.sum()
    if total <= 0:
        raise ValueError("dataset has no observations")
    weights = weights / total
    k = model.k

    def value_and_grad(p):
        mix = offsets + slopes @ p
        return float(weights @ np.log(mix)), slopes.T @ (weights / mix)

    p = np.full(k, 1.0 / (k + 1))
    value, grad = value_and_grad(p)
    step = 1.0
    prev_p, prev_grad = None, None
    for _ in range(MLE_MAX_ITER):
        if np.linalg.norm(_project_feasible(p + grad) - p) <= tol:
            return p
        if prev_p is not None:
            dp = p - prev_p
            dg = grad - prev_grad
            curvature = -float(dp @ dg)  # positive for a concave objective
            if curvature > 1e-18:
                step = float(dp @ dp) / curvature
            step = min(max(step, 1e-12), 1e12)
        trial_step = step
        accepted = False
        for _ in range(80):
            candidate = _project_feasible(p + trial_step * grad)
            direction = candidate - p
            if np.linalg.norm(direction) == 0.0:
                break
            cand_value, cand_grad = value_and_grad(candidate)
            if cand_value >= value + 1e-4 * float(grad @ direction):
                prev_p, prev_grad = p, grad
                p, value, grad = candidate, cand_value, cand_grad
                accepted = True
                break
            trial_step *= 0.5
        if not accepted:
            # no ascent step found: either at the optimum or at numerical limits
            if np.linalg.norm(_project_feasible(p + grad) - p) <= 10 * tol:
                return p
            break
    final_norm = float(np.linalg.norm(_project_feasible(p + grad) - p))
    if final_norm <= tol:
        return p
    raise ConvergenceError(
        f"MLE did not converge: projected-gradient norm {final_norm:.3e} > {tol:g}",
        best=p,
    )


def simulate_estimates(
    p,
    model: DiseaseModel,
    design: Design,
    replications: int,
    seed: int,
) -> np.ndarray:
    """Estimate u'p once per replication; independent streams per replication."""
    p = validate_parameter(p, model.k)
    estimates = np.empty(replications)
    for r in range(replications):
        dataset = sample_outcomes(design, p, model, seed, replication=r)
        estimates[r] = float(model.u @ mle(dataset, model))
    return estimates


def _fsum_variance(values: np.ndarray) -> tuple[float, float]:
    """(mean, unbiased variance) via exactly-rounded sums, order-independent."""
    n = values.size
    mean = math.fsum(values) / n
    var = math.fsum((x - mean) ** 2 for x in values) / (n - 1)
    return mean, var


def variance_check(
    p,
    model: DiseaseModel,
    v_star,
    budget: float,
    replications: int = 200,
    seed: int = 0,
    patterns=None,
) -> tuple[float, float, float]:
    """Empirical versus predicted variance of the estimated target.

    Runs independent sample/fit cycles under the design implied by the
    fractions v_star at the given budget and returns
    ``(empirical_var, predicted_var, ratio)``.
    """
    if replications < 2:
        raise ValueError(f"need at least 2 replications, got {replications}")
    report = simulation_report(
        p, model, v_star, budget, replications=replications, seed=seed, patterns=patterns
    )
    return (
        report["empirical_variance"],
        report["predicted_variance"],
        report["ratio"],
    )


def simulation_report(
    p,
    model: DiseaseModel,
    v_star,
    budget: float,
    replications: int = 200,
    seed: int = 0,
    patterns=None,
) -> dict:
    """Full Monte-Carlo verification report.

    Includes the empirical and predicted variance of u'p-hat, their ratio,
    the empirical bias, and a skewness/kurtosis normality p-value for the
    standardized estimates.
    """
    patterns = list(patterns) if patterns is not None else all_patterns(model)
    p = validate_parameter(p, model.k)
    design = Design(patterns=tuple(patterns), fractions=np.asarray(v_star, float), budget=budget)
    predicted = objective(design.fractions, p, model, patterns=patterns) / budget
    estimates = simulate_estimates(p, model, design, replications, seed)
    mean, empirical = _fsum_variance(estimates)
    truth = float(model.u @ p)
    return {
        "replications": replications,
        "seed": seed,
        "budget": budget,
        "true_value": truth,
        "mean_estimate": mean,
        "bias": mean - truth,
        "empirical_variance": empirical,
        "predicted_variance": predicted,
        "ratio": empirical / predicted,
        "normality_pvalue": jarque_bera_pvalue(estimates),
    }


def jarque_bera_pvalue(values: np.ndarray) -> float:
    """Normality p-value from sample skewness and excess kurtosis.

    The statistic n * (S^2/6 + (K-3)^2/24) is asymptotically chi-squared
    with 2 degrees of freedom, whose survival function is exp(-x/2).
    """
    values = np.asarray(values, dtype=np.float64)
    n = values.size
    if n < 8:
        raise ValueError(f"need at least 8 values for a normality test, got {n}")
    centered = values - values.mean()
    m2 = float(np.mean(centered**2))
    if m2 == 0.0:
        return 0.0
    skew = float(np.mean(centered**3)) / m2**1.5
    kurt = float(np.mean(centered**4)) / m2**2
    stat = n * (skew * skew / 6.0 + (kurt - 3.0) ** 2 / 24.0)
    return math.exp(-stat / 2.0)
