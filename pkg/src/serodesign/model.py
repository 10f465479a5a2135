"""Noisy multi-test observation model for disease-burden surveys.

Each participant is in one of ``k + 1`` latent disease states; the last
state is the reference state carrying the remaining probability
``1 - sum(p)``.  A state produces a nominal binary response on every
diagnostic test, and the observed outcome is the nominal response passed
through an asymmetric binary channel parameterized by the test's
sensitivity and specificity.  Administering a subset of tests (a *test
pattern*) therefore yields an outcome vector whose distribution is a
mixture over states, and whose Fisher information drives every design
computation downstream.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np

__all__ = [
    "TestSpec",
    "DiseaseModel",
    "TestPattern",
    "ParameterBox",
    "default_model",
    "all_patterns",
    "make_pattern",
    "outcome_space",
    "conditional_prob",
    "mixture_prob",
    "fisher_info",
    "check_a1",
    "check_a2",
    "validate_parameter",
]

# Eigenvalues above this (after symmetrization) count as strictly positive;
# double-precision noise floor for parameter dimensions k <= 10.
PD_TOLERANCE = 1e-10


@dataclass(frozen=True)
class TestSpec:
    """One diagnostic test: its cost and reliability.

    Sensitivity and specificity are required to lie strictly inside (0, 1)
    so that every outcome of every pattern has positive probability.
    """

    id: str
    cost: float
    sensitivity: float
    specificity: float

    def __post_init__(self):
        if not self.id:
            raise ValueError("test id must be a nonempty string")
        if not self.cost > 0:
            raise ValueError(f"test {self.id!r}: cost must be positive, got {self.cost}")
        for name in ("sensitivity", "specificity"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ValueError(
                    f"test {self.id!r}: {name} must be strictly between 0 and 1, got {value}"
                )


@dataclass(frozen=True, eq=False)
class DiseaseModel:
    """States, nominal test responses, and the estimation target.

    ``nominal`` is a binary matrix with ``k + 1`` rows (one per state; the
    last row is the reference state) and one column per test.  ``u`` is the
    coefficient vector of the linear functional ``u @ p`` being estimated.
    """

    tests: tuple[TestSpec, ...]
    nominal: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        tests = tuple(self.tests)
        if not tests:
            raise ValueError("model needs at least one test")
        ids = [t.id for t in tests]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate test ids: {ids}")
        nominal = np.asarray(self.nominal, dtype=np.int64)
        if nominal.ndim != 2 or nominal.shape[1] != len(tests):
            raise ValueError(
                f"nominal matrix must have one column per test, got shape {nominal.shape}"
            )
        if nominal.shape[0] < 2:
            raise ValueError("nominal matrix needs at least one non-reference state")
        if not np.isin(nominal, (0, 1)).all():
            raise ValueError("nominal matrix entries must be 0 or 1")
        u = np.asarray(self.u, dtype=np.float64)
        if u.shape != (nominal.shape[0] - 1,):
            raise ValueError(
                f"u must have length k={nominal.shape[0] - 1}, got shape {u.shape}"
            )
        if not np.any(u):
            raise ValueError("u must be nonzero")
        nominal.setflags(write=False)
        u.setflags(write=False)
        object.__setattr__(self, "tests", tests)
        object.__setattr__(self, "nominal", nominal)
        object.__setattr__(self, "u", u)

    @property
    def k(self) -> int:
        """Parameter dimension (number of non-reference states)."""
        return self.nominal.shape[0] - 1

    @property
    def n_tests(self) -> int:
        return len(self.tests)

    @property
    def test_ids(self) -> tuple[str, ...]:
        return tuple(t.id for t in self.tests)

    def test_index(self, test_id: str) -> int:
        try:
            return self.test_ids.index(test_id)
        except ValueError:
            raise KeyError(f"unknown test id {test_id!r}; have {list(self.test_ids)}") from None

    def with_test_overrides(self, overrides: dict[str, dict[str, float]]) -> "DiseaseModel":
        """New model with per-test sensitivity/specificity replaced.

        ``overrides`` maps test id to a dict with any of the keys
        ``sensitivity`` and ``specificity``; unspecified entries inherit
        from this model.
        """
        for test_id in overrides:
            self.test_index(test_id)  # raises KeyError for unknown ids
        tests = []
        for t in self.tests:
            ov = overrides.get(t.id, {})
            unknown = set(ov) - {"sensitivity", "specificity", "cost"}
            if unknown:
                raise ValueError(f"override for test {t.id!r} has unknown keys {sorted(unknown)}")
            tests.append(
                TestSpec(
                    id=t.id,
                    cost=ov.get("cost", t.cost),
                    sensitivity=ov.get("sensitivity", t.sensitivity),
                    specificity=ov.get("specificity", t.specificity),
                )
            )
        return DiseaseModel(tests=tuple(tests), nominal=self.nominal, u=self.u)


@dataclass(frozen=True)
class TestPattern:
    """A nonempty subset of tests administered to one participant.

    ``mask[j] == 1`` means test j is conducted; the cost is exactly the sum
    of the member tests' costs.
    """

    mask: tuple[int, ...]
    cost: float

    def __post_init__(self):
        if not any(self.mask):
            raise ValueError("test pattern must include at least one test")
        if not all(m in (0, 1) for m in self.mask):
            raise ValueError(f"pattern mask entries must be 0 or 1, got {self.mask}")
        if not self.cost > 0:
            raise ValueError("pattern cost must be positive")

    @property
    def label(self) -> str:
        return "".join(str(m) for m in self.mask)

    @property
    def included(self) -> tuple[int, ...]:
        return tuple(j for j, m in enumerate(self.mask) if m)


def make_pattern(mask: Sequence[int], model: DiseaseModel) -> TestPattern:
    mask = tuple(int(m) for m in mask)
    if len(mask) != model.n_tests:
        raise ValueError(f"mask length {len(mask)} != number of tests {model.n_tests}")
    cost = sum(t.cost for t, m in zip(model.tests, mask) if m)
    return TestPattern(mask=mask, cost=cost)


def all_patterns(model: DiseaseModel) -> list[TestPattern]:
    """All nonempty test subsets, in lexicographic mask order."""
    masks = itertools.product((0, 1), repeat=model.n_tests)
    return [make_pattern(m, model) for m in masks if any(m)]


def default_model(
    rat_cost: float = 450.0,
    rtpcr_cost: float = 1600.0,
    antibody_cost: float = 300.0,
) -> DiseaseModel:
    """The shipped three-test, four-state serosurvey model.

    States: active infection without antibodies, antibodies without active
    infection, both, and neither (reference).  The default estimation
    target is the total burden, ``u = (1, 1, 1)``.
    """
    tests = (
        TestSpec(id="rat", cost=rat_cost, sensitivity=0.5, specificity=0.975),
        TestSpec(id="rtpcr", cost=rtpcr_cost, sensitivity=0.95, specificity=0.97),
        TestSpec(id="antibody", cost=antibody_cost, sensitivity=0.921, specificity=0.977),
    )
    nominal = [
        [1, 1, 0],  # active infection, no antibodies
        [0, 0, 1],  # antibodies, no active infection
        [1, 1, 1],  # both
        [0, 0, 0],  # neither (reference state)
    ]
    return DiseaseModel(tests=tests, nominal=nominal, u=np.ones(3))


def validate_parameter(p, k: int) -> np.ndarray:
    """Check that p is a length-k vector with p >= 0 and sum(p) <= 1.

    Tiny negative entries from floating-point arithmetic are clipped to 0.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (k,):
        raise ValueError(f"parameter must have length {k}, got shape {p.shape}")
    if (p < -1e-12).any():
        raise ValueError(f"parameter entries must be nonnegative, got {p}")
    if p.sum() > 1.0 + 1e-9:
        raise ValueError(f"parameter entries must sum to at most 1, got sum {p.sum()}")
    return np.maximum(p, 0.0)


@dataclass(frozen=True, eq=False)
class ParameterBox:
    """A coordinate box of parameters, intersected with the simplex.

    The feasible set is ``{p : lower <= p <= upper, sum(p) <= 1}`` and must
    be nonempty, which realizes a convex compact uncertainty region.
    """

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=np.float64)
        upper = np.asarray(self.upper, dtype=np.float64)
        if lower.ndim != 1 or lower.shape != upper.shape:
            raise ValueError("lower and upper must be vectors of the same length")
        if (lower < 0).any():
            raise ValueError(f"box lower bounds must be nonnegative, got {lower}")
        if (lower > upper).any():
            raise ValueError("box needs lower <= upper in every coordinate")
        if lower.sum() > 1.0 + 1e-12:
            raise ValueError("box does not intersect the simplex: sum of lower bounds > 1")
        lower.setflags(write=False)
        upper.setflags(write=False)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def k(self) -> int:
        return self.lower.shape[0]

    @property
    def is_point(self) -> bool:
        return bool((self.lower == self.upper).all())

    def contains(self, p, tol: float = 1e-9) -> bool:
        p = np.asarray(p, dtype=np.float64)
        return bool(
            (p >= self.lower - tol).all()
            and (p <= self.upper + tol).all()
            and p.sum() <= 1.0 + tol
        )

    def grid(self, step: float) -> np.ndarray:
        """Feasible grid points in lexicographic order, shape (m, k).

        Each axis is sampled from lower to upper in increments of ``step``
        (the upper face is always included); points with ``sum(p) > 1`` are
        skipped.  Raises if no feasible grid point remains.
        """
        if not step > 0:
            raise ValueError(f"grid step must be positive, got {step}")
        axes = []
        for lo, hi in zip(self.lower, self.upper):
            vals = np.arange(lo, hi + 0.5 * step, step)
            if vals[-1] < hi - 1e-12:
                vals = np.append(vals, hi)
            vals[-1] = min(vals[-1], hi)
            axes.append(vals)
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        pts = pts[pts.sum(axis=1) <= 1.0 + 1e-12]
        if pts.shape[0] == 0:
            raise ValueError("no feasible grid point: box grid lies entirely above the simplex")
        return pts


# ---------------------------------------------------------------------------
# Outcome distributions
# ---------------------------------------------------------------------------

Outcome = tuple  # entries 0/1 for conducted tests, None for the rest


def outcome_space(t: TestPattern) -> list[Outcome]:
    """All possible outcome vectors of pattern t.

    Conducted tests take values 0/1, the rest are None; ordering is
    lexicographic over the conducted tests so that serialized
    distributions are reproducible byte-for-byte.
    """
    included = t.included
    outcomes = []
    for bits in itertools.product((0, 1), repeat=len(included)):
        y = [None] * len(t.mask)
        for j, b in zip(included, bits):
            y[j] = b
        outcomes.append(tuple(y))
    return outcomes


def _check_outcome_shape(y: Outcome, t: TestPattern) -> None:
    if len(y) != len(t.mask):
        raise ValueError(f"outcome length {len(y)} != pattern length {len(t.mask)}")
    for j, (yj, mj) in enumerate(zip(y, t.mask)):
        if mj and yj not in (0, 1):
            raise ValueError(f"outcome has no value at conducted test index {j}: {y}")
        if not mj and yj is not None:
            raise ValueError(f"outcome has a value at a test not conducted (index {j}): {y}")


def conditional_prob(y: Outcome, state: int, t: TestPattern, model: DiseaseModel) -> float:
    """P(outcome y | state, pattern t): product of per-test channel terms.

    ``state`` is a 0-based index in 0..k; index k is the reference state.
    For each conducted test the factor is the test's sensitivity or
    specificity when the outcome matches the state's nominal response, and
    one minus it otherwise.
    """
    if not 0 <= state <= model.k:
        raise ValueError(f"state must be in 0..{model.k}, got {state}")
    _check_outcome_shape(y, t)
    prob = 1.0
    for j in t.included:
        nominal = model.nominal[state, j]
        test = model.tests[j]
        correct = test.sensitivity if nominal == 1 else test.specificity
        prob *= correct if y[j] == nominal else 1.0 - correct
    return prob


def mixture_prob(y: Outcome, t: TestPattern, p, model: DiseaseModel) -> float:
    """P(outcome y | pattern t) under state probabilities (p, 1 - sum(p))."""
    p = validate_parameter(p, model.k)
    total = (1.0 - p.sum()) * conditional_prob(y, model.k, t, model)
    for s in range(model.k):
        total += p[s] * conditional_prob(y, s, t, model)
    return float(total)


@lru_cache(maxsize=None)
def _pattern_tables(model: DiseaseModel, mask: tuple[int, ...]):
    """Per-outcome conditional probabilities of one pattern, vectorized.

    Returns (Q, D, q_ref) with Q[y, s] = P(y | state s), D = Q[:, :k] minus
    the reference column, and q_ref the reference column itself.  Rows
    follow outcome_space order.  The mixture probability at p is then
    ``q_ref + D @ p`` and the Fisher information is ``D' diag(1/P) D``.
    """
    t = make_pattern(mask, model)
    included = list(t.included)
    n_inc = len(included)
    bits = np.array(list(itertools.product((0, 1), repeat=n_inc)), dtype=np.int64)
    m_inc = model.nominal[:, included]  # (k+1, n_inc)
    sens = np.array([model.tests[j].sensitivity for j in included])
    spec = np.array([model.tests[j].specificity for j in included])
    correct = np.where(m_inc == 1, sens, spec)  # (k+1, n_inc)
    match = bits[:, None, :] == m_inc[None, :, :]  # (n_y, k+1, n_inc)
    factors = np.where(match, correct[None, :, :], 1.0 - correct[None, :, :])
    q = factors.prod(axis=2)  # (n_y, k+1)
    d = q[:, : model.k] - q[:, model.k :]
    q_ref = q[:, model.k].copy()
    for arr in (q, d, q_ref):
        arr.setflags(write=False)
    return q, d, q_ref


def fisher_info(t: TestPattern, p, model: DiseaseModel) -> np.ndarray:
    """Fisher information matrix of pattern t at parameter p.

    Entry (i, j) sums, over the pattern's outcomes, the product of the
    i-th and j-th deviations of the state-conditional outcome
    probabilities from the reference state, divided by the mixture
    probability of the outcome.  Symmetric positive semidefinite; strictly
    positive mixture probabilities are guaranteed by the strict
    sensitivity/specificity bounds.
    """
    p = validate_parameter(p, model.k)
    _, d, q_ref = _pattern_tables(model, t.mask)
    mix = q_ref + d @ p
    info = np.einsum("y,yi,yj->ij", 1.0 / mix, d, d)
    return (info + info.T) / 2.0


def _fisher_info_grid(t: TestPattern, pts: np.ndarray, model: DiseaseModel) -> np.ndarray:
    """Fisher information of pattern t at many parameter points, (m, k, k)."""
    _, d, q_ref = _pattern_tables(model, t.mask)
    mix = q_ref[None, :] + pts @ d.T  # (m, n_y)
    info = np.einsum("my,yi,yj->mij", 1.0 / mix, d, d)
    return (info + np.swapaxes(info, 1, 2)) / 2.0


class A1Result(NamedTuple):
    ok: bool
    pattern: TestPattern | None


class A2Result(NamedTuple):
    ok: bool
    lambda_min: float
    argmin: np.ndarray | None
    pattern: TestPattern | None


def check_a1(
    p,
    patterns: Sequence[TestPattern],
    model: DiseaseModel,
    pd_tol: float = PD_TOLERANCE,
) -> A1Result:
    """Does some pattern carry positive-definite information at p?

    Returns the first such pattern in the given order, or (False, None).
    """
    p = validate_parameter(p, model.k)
    for t in patterns:
        lam_min = float(np.linalg.eigvalsh(fisher_info(t, p, model))[0])
        if lam_min > pd_tol:
            return A1Result(True, t)
    return A1Result(False, None)


def check_a2(
    box: ParameterBox,
    patterns: Sequence[TestPattern],
    model: DiseaseModel,
    grid_step: float = 0.01,
    pd_tol: float = PD_TOLERANCE,
) -> A2Result:
    """Is some pattern's information uniformly positive definite over the box?

    Evaluates the smallest eigenvalue of every pattern's information matrix
    on the feasible grid and reports the pattern with the best worst-case
    eigenvalue together with the grid point attaining it.
    """
    if box.k != model.k:
        raise ValueError(f"box dimension {box.k} != model parameter dimension {model.k}")
    pts = box.grid(grid_step)
    best_lam = -np.inf
    best_pattern = None
    best_argmin = None
    for t in patterns:
        infos = _fisher_info_grid(t, pts, model)
        lam = np.linalg.eigvalsh(infos)[:, 0]
        i = int(np.argmin(lam))
        if lam[i] > best_lam:
            best_lam = float(lam[i])
            best_pattern = t
            best_argmin = pts[i]
    ok = best_lam > pd_tol
    return A2Result(ok, best_lam, best_argmin, best_pattern)
