"""First-order coding rates of a mixed channel.

The core object is the quantile of a weighted value list: the largest value
whose strictly-below mass stays within the error budget.  The capacity is the
sup of that quantile over feasible inputs, found by candidate search; for
channels whose components are ordered by capacity the sup collapses to the
quantile over component capacities.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .channel import CostSpec, InputDist, MixedChannel, mutual_information
from .optimizer import CapacityResult, constrained_capacity, _simplex_grid

VALUE_DECIMALS = 12  # atoms with values closer than 1e-12 merge in quantiles


@dataclass(frozen=True)
class QuantileCurve:
    """Step function R -> mass strictly below R, for a weighted value list.

    ``breakpoints`` is a sorted tuple of (value, mass_strictly_below); the
    mass at each value is the jump to the next breakpoint.  ``source`` tags
    what the values are (per-input mutual informations or component
    capacities).
    """

    breakpoints: tuple
    source: str

    def __post_init__(self):
        vals = [v for v, _ in self.breakpoints]
        masses = [m for _, m in self.breakpoints]
        if any(a >= b for a, b in zip(vals, vals[1:])):
            raise ValueError("breakpoint values must be strictly increasing")
        if any(a > b for a, b in zip(masses, masses[1:])) or (
                masses and not 0.0 <= masses[0]):
            raise ValueError("strictly-below masses must be nondecreasing from 0")

    @property
    def values(self) -> np.ndarray:
        return np.array([v for v, _ in self.breakpoints])

    def mass_below(self, r: float) -> float:
        """w{value < r}, treating values within the merge rounding as equal."""
        total = 0.0
        for v, below in self.breakpoints:
            if v < r:
                total = below + self._jump_at(v)
        return total

    def _jump_at(self, v: float) -> float:
        pts = [b for b in self.breakpoints]
        for i, (val, below) in enumerate(pts):
            if val == v:
                nxt = pts[i + 1][1] if i + 1 < len(pts) else 1.0
                return nxt - below
        return 0.0

    def quantile(self, eps: float):
        """Largest breakpoint value whose strictly-below mass is <= eps."""
        best = None
        for v, below in self.breakpoints:
            if below <= eps:
                best = v
        return best


def build_quantile_curve(values, weights, source: str) -> QuantileCurve:
    vals = np.round(np.asarray(values, dtype=float), VALUE_DECIMALS)
    wts = np.asarray(weights, dtype=float)
    order = np.argsort(vals, kind="stable")
    breakpoints = []
    below = 0.0
    i = 0
    vals, wts = vals[order], wts[order]
    while i < len(vals):
        j = i
        mass = 0.0
        while j < len(vals) and vals[j] == vals[i]:
            mass += wts[j]
            j += 1
        breakpoints.append((float(vals[i]), below))
        below += mass
        i = j
    return QuantileCurve(tuple(breakpoints), source)


@dataclass(frozen=True)
class EpsCapacityResult:
    capacity: float
    argmax_input: InputDist
    achieving_component: int | None = None
    mass_below: float = 0.0
    mass_at_or_below: float = 1.0


@dataclass(frozen=True)
class SearchConfig:
    """Knobs for the sup-over-inputs search.

    The simplex grid is used for small alphabets; larger alphabets fall back
    to seeded multi-start.  ``refine_steps`` controls the projected
    coordinate-pair descent applied to the best candidates.
    """

    grid: int = 32
    max_grid_inputs: int = 4
    n_starts: int = 16
    seed: int = 0
    refine_steps: int = 60
    refine_top: int = 4


def component_informations(mixed: MixedChannel, p: InputDist) -> np.ndarray:
    return np.array([mutual_information(p, comp) for comp in mixed.components])


def rate_quantile(mixed: MixedChannel, p: InputDist, eps: float) -> float:
    """sup{R : w{theta : I(P, W_theta) < R} <= eps} for a fixed input P."""
    if not 0.0 <= eps < 1.0:
        raise ValueError("eps must lie in [0, 1)")
    curve = build_quantile_curve(component_informations(mixed, p),
                                 mixed.weights, "per-input I-values")
    return curve.quantile(eps)


def _candidate_inputs(mixed: MixedChannel, cost: CostSpec, search: SearchConfig,
                      component_optima: list[CapacityResult]):
    k = mixed.num_inputs
    cands = [res.optimal_input.probs for res in component_optima]
    if k <= search.max_grid_inputs:
        for g in _simplex_grid(k, search.grid):
            cands.append(g)
    else:
        rng = np.random.default_rng(search.seed)
        for _ in range(search.n_starts):
            cands.append(rng.dirichlet(np.ones(k)))
    out = []
    for c in cands:
        pd = InputDist(np.clip(c, 0.0, None) / np.clip(c, 0.0, None).sum())
        if cost.admits(pd):
            out.append(pd)
    return out


def _refine(objective, p: np.ndarray, cost: CostSpec, steps: int) -> np.ndarray:
    """Projected coordinate-pair ascent with a shrinking step size."""
    k = len(p)
    best = p.copy()
    best_val = objective(best)
    delta = 0.25
    for _ in range(steps):
        improved = False
        for i, j in itertools.permutations(range(k), 2):
            if best[i] < delta:
                continue
            cand = best.copy()
            cand[i] -= delta
            cand[j] += delta
            pd = InputDist(cand)
            if not cost.admits(pd):
                continue
            val = objective(cand)
            if val > best_val + 1e-15:
                best, best_val = cand, val
                improved = True
        if not improved:
            delta *= 0.5
            if delta < 1e-7:
                break
    return best


def _argmax_candidates(objective, candidates, cost: CostSpec, search: SearchConfig):
    """Deterministic argmax: score, then refine the leaders, break ties lexicographically."""
    scored = [(objective(c.probs), tuple(c.probs), c.probs) for c in candidates]
    scored.sort(key=lambda t: (t[0], t[1]), reverse=True)
    leaders = scored[: search.refine_top]
    best_val, _, best_p = leaders[0]
    for val, _, p in leaders:
        refined = _refine(objective, p, cost, search.refine_steps)
        rval = objective(refined)
        if (rval, tuple(refined)) > (best_val, tuple(best_p)):
            best_val, best_p = rval, refined
    return best_val, best_p


def eps_capacity(
    mixed: MixedChannel,
    cost: CostSpec | None = None,
    eps: float = 0.0,
    search: SearchConfig = SearchConfig(),
) -> EpsCapacityResult:
    """First-order capacity: sup over feasible P of the rate quantile.

    The search is seeded with every component's constrained-capacity optimum
    plus a simplex grid (or multi-start for larger alphabets), then locally
    refined.  The reported value is the best found at the configured
    resolution; it never exceeds the true sup.
    """
    if cost is None:
        cost = CostSpec.free(mixed.num_inputs)
    cost.check_feasible()
    optima = [constrained_capacity(comp, cost) for comp in mixed.components]

    def objective(p_arr: np.ndarray) -> float:
        return rate_quantile(mixed, InputDist(p_arr), eps)

    candidates = _candidate_inputs(mixed, cost, search, optima)
    best_val, best_p = _argmax_candidates(objective, candidates, cost, search)
    p_best = InputDist(best_p)
    curve = build_quantile_curve(component_informations(mixed, p_best),
                                 mixed.weights, "per-input I-values")
    below = curve.mass_below(best_val)
    at = below + curve._jump_at(round(best_val, VALUE_DECIMALS))
    return EpsCapacityResult(best_val, p_best, None, below, at)


def capacity_quantile_curve(mixed: MixedChannel, cost: CostSpec | None = None,
                            optima: list[CapacityResult] | None = None) -> QuantileCurve:
    """Quantile curve over component capacities (the capacity spectrum)."""
    if cost is None:
        cost = CostSpec.free(mixed.num_inputs)
    if optima is None:
        optima = [constrained_capacity(comp, cost) for comp in mixed.components]
    return build_quantile_curve([res.capacity for res in optima],
                                mixed.weights, "component capacities")


def eps_capacity_well_ordered(
    mixed: MixedChannel,
    cost: CostSpec | None = None,
    eps: float = 0.0,
    optima: list[CapacityResult] | None = None,
) -> EpsCapacityResult:
    """Capacity via the quantile over component capacities.

    Valid when the component family is ordered by capacity (the caller
    asserts or has checked this); no optimization over inputs is involved.
    """
    if not 0.0 <= eps < 1.0:
        raise ValueError("eps must lie in [0, 1)")
    if cost is None:
        cost = CostSpec.free(mixed.num_inputs)
    cost.check_feasible()
    if optima is None:
        optima = [constrained_capacity(comp, cost) for comp in mixed.components]
    curve = capacity_quantile_curve(mixed, cost, optima)
    value = curve.quantile(eps)
    achieving = None
    for idx, res in enumerate(optima):
        if round(res.capacity, VALUE_DECIMALS) == round(value, VALUE_DECIMALS):
            achieving = idx
            break
    below = curve.mass_below(value)
    at = below + curve._jump_at(round(value, VALUE_DECIMALS))
    return EpsCapacityResult(value, optima[achieving].optimal_input, achieving, below, at)
