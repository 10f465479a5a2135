"""Worst-case designs as equilibria of a convex-concave zero-sum game.

The design that minimizes the worst-case variance over a parameter
uncertainty region is the minimizing player's equilibrium strategy in the
game whose payoff is the variance criterion: the payoff is convex in the
budget fractions and concave in the parameter, so a saddle point exists.
The maximizer is located by exhaustive grid search over the feasible box
(the uncertainty regions here are small boxes intersected with the
simplex), the inner minimization reuses the c-optimal solver, and the
returned pair is certified by re-evaluating the design across the whole
grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .coptimal import (
    Design,
    InfeasibleDesignError,
    SolveReport,
    _kkt_residual_from,
    _pattern_infos,
    _solve_simplex,
    design_from_fractions,
    objective,
)
from .model import (
    DiseaseModel,
    ParameterBox,
    TestPattern,
    _fisher_info_grid,
    all_patterns,
    check_a2,
)

__all__ = ["SaddleReport", "payoff", "worst_case_design", "saddle_check"]

# Relative certification threshold for the saddle gap.  The grid argmax's
# exact best response certifies at a few 1e-4 relative on 0.01 grids, so the
# threshold sits above that; tightening it makes the averaging fallback
# replace the best response with a strictly-better-certified mixture.
SADDLE_TOL = 1e-3
# Cap on alternating-best-response refinement rounds.
REFINE_MAX_ROUNDS = 200


@dataclass(frozen=True, eq=False)
class SaddleReport:
    """A certified approximate equilibrium of the worst-case design game."""

    design: Design
    p_star: np.ndarray
    game_value: float
    saddle_gap: float
    grid_step: float
    inner: SolveReport

    @property
    def v_star(self) -> np.ndarray:
        return self.design.fractions

    def to_dict(self) -> dict:
        return {
            "p_star": [float(x) for x in self.p_star],
            "game_value": self.game_value,
            "saddle_gap": self.saddle_gap,
            "grid_step": self.grid_step,
            "kkt_residual": self.inner.kkt_residual,
            "min_variance": self.game_value / self.design.budget,
            "design": self.design.to_dict(),
        }


def payoff(v, p, model: DiseaseModel, patterns: Sequence[TestPattern] | None = None) -> float:
    """Game payoff: identical to the variance criterion a(v; p)."""
    return objective(v, p, model, patterns=patterns)


def _grid_infos(
    pts: np.ndarray, model: DiseaseModel, patterns: Sequence[TestPattern]
) -> np.ndarray:
    """Cost-relativized information matrices at every grid point, (T, m, k, k)."""
    return np.stack([_fisher_info_grid(t, pts, model) / t.cost for t in patterns])


def _payoff_over_grid(v: np.ndarray, grid_infos: np.ndarray, u: np.ndarray) -> np.ndarray:
    """a(v; p) for every grid point; +inf where the blend is singular."""
    blends = np.einsum("t,tmij->mij", v, grid_infos)
    lam = np.linalg.eigvalsh(blends)
    good = (lam[:, -1] > 0.0) & (lam[:, 0] > 1e-12 * lam[:, -1])
    values = np.full(blends.shape[0], math.inf)
    if good.any():
        rhs = np.broadcast_to(u[:, None], (int(good.sum()), u.size, 1)).copy()
        x = np.linalg.solve(blends[good], rhs)[..., 0]
        values[good] = x @ u
    return values


def worst_case_design(
    box: ParameterBox,
    model: DiseaseModel,
    grid_step: float = 0.01,
    budget: float = 1.0,
    patterns: Sequence[TestPattern] | None = None,
    saddle_tol: float = SADDLE_TOL,
) -> SaddleReport:
    """Design minimizing the worst-case variance over the box.

    The worst case p* maximizes the lower envelope ``min_v a(v; p)`` over
    the feasible grid and the returned fractions are the inner minimizer
    at p*.  The saddle gap ``max_p a(v*; p) - a(v*; p*)`` is re-evaluated
    over the grid; if it exceeds ``saddle_tol`` relative, the fractions
    are refined by alternating best responses with uniform averaging of
    the minimizing player's iterates until the gap closes or the round cap
    is reached.  Grid argmax ties break toward the lexicographically
    smallest point.
    """
    patterns = list(patterns) if patterns is not None else all_patterns(model)
    a2 = check_a2(box, patterns, model, grid_step=grid_step)
    if not a2.ok:
        raise InfeasibleDesignError(
            "no pattern has uniformly positive-definite information over the box; "
            "the worst-case variance is unbounded for every design"
        )
    pts = box.grid(grid_step)
    grid_infos = _grid_infos(pts, model, patterns)
    u = model.u

    best_value = -math.inf
    best_index = -1
    best = None
    for i in range(pts.shape[0]):
        v, mu, residual, iterations = _solve_simplex(grid_infos[:, i], u)
        if mu > best_value:
            best_value = mu
            best_index = i
            best = (v, mu, residual, iterations)

    v_star, game_value, residual, iterations = best
    p_star = pts[best_index]

    def certified_gap(v: np.ndarray) -> float:
        values = _payoff_over_grid(v, grid_infos, u)
        return float(values.max() - values[best_index])

    gap = certified_gap(v_star)
    if gap > saddle_tol * game_value:
        # Fictitious-play fallback: the maximizer best-responds on the grid,
        # the minimizer best-responds exactly, and the minimizer's iterates
        # are averaged; convex-concave payoffs make the averages converge.
        iterates = [v_star]
        v_best, gap_best = v_star, gap
        for _ in range(REFINE_MAX_ROUNDS):
            v_avg = np.mean(iterates, axis=0)
            reply_idx = int(np.argmax(_payoff_over_grid(v_avg, grid_infos, u)))
            v_reply, _, _, _ = _solve_simplex(grid_infos[:, reply_idx], u)
            iterates.append(v_reply)
            gap_avg = certified_gap(np.mean(iterates, axis=0))
            if gap_avg < gap_best:
                v_best, gap_best = np.mean(iterates, axis=0), gap_avg
            if gap_best <= saddle_tol * game_value:
                break
        v_star, gap = v_best, gap_best
        game_value = float(
            _payoff_over_grid(v_star, grid_infos, u)[best_index]
        )
        # the averaged fractions are no longer the exact inner minimizer at
        # p*, so re-certify their first-order residual there
        infos_star = grid_infos[:, best_index]
        blend = np.einsum("t,tij->ij", v_star, infos_star)
        x = np.linalg.solve(blend, u)
        g = np.einsum("tij,i,j->t", infos_star, x, x)
        residual = _kkt_residual_from(g, float(u @ x), v_star, 1e-7)

    design = design_from_fractions(v_star, budget, patterns)
    inner = SolveReport(
        design=design,
        objective=game_value,
        min_variance=game_value / budget,
        kkt_residual=residual,
        iterations=iterations,
        mu_star=game_value,
    )
    return SaddleReport(
        design=design,
        p_star=p_star,
        game_value=game_value,
        saddle_gap=gap,
        grid_step=grid_step,
        inner=inner,
    )


def saddle_check(
    v,
    p_star,
    box: ParameterBox,
    model: DiseaseModel,
    grid_step: float = 0.01,
    patterns: Sequence[TestPattern] | None = None,
) -> tuple[float, float]:
    """Equilibrium gaps of a candidate pair (v, p*).

    Returns ``(max_p a(v; p) - a(v; p*), a(v; p*) - min_v a(v; p*))``, the
    first maximized over the feasible grid and the second via one
    c-optimal solve at p*.  Both are nonnegative up to roundoff, and both
    below the saddle tolerance certify an approximate equilibrium.
    """
    patterns = list(patterns) if patterns is not None else all_patterns(model)
    v = np.asarray(v, dtype=np.float64)
    p_star = np.asarray(p_star, dtype=np.float64)
    pts = box.grid(grid_step)
    grid_infos = _grid_infos(pts, model, patterns)
    values = _payoff_over_grid(v, grid_infos, model.u)
    at_p_star = objective(v, p_star, model, patterns=patterns)
    _, inner_value, _, _ = _solve_simplex(_pattern_infos(p_star, model, patterns), model.u)
    return float(values.max() - at_p_star), float(at_p_star - inner_value)
