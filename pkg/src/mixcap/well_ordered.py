"""Decide whether a component family is ordered by capacity.

The defining conditions are checked for every ordered pair of components at
every representative of the capacity-achieving input set: equal capacities
must give mutual information equal to that capacity through the other
channel, and a strictly larger capacity must give strictly larger mutual
information.  Only finitely many representatives are checked, so a pass means
"no violation found at this resolution", while any recorded violation is a
genuine refutation (up to the stated tolerance).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import CostSpec, Dmc, InputDist, MixedChannel, mutual_information
from .first_order import VALUE_DECIMALS
from .optimizer import capacity_achieving_set, constrained_capacity, _simplex_grid

DEFAULT_ORDER_TOL = 1e-7


@dataclass(frozen=True)
class OrderViolation:
    theta: int
    theta_prime: int
    rep_input: InputDist
    observed_info: float
    required: str

    def __str__(self):
        return (f"atoms ({self.theta}, {self.theta_prime}): I = "
                f"{self.observed_info:.9g}, required {self.required}")


@dataclass(frozen=True)
class WellOrderReport:
    is_well_ordered: bool
    violations: tuple
    capacity_spectrum: tuple  # sorted (capacity, cumulative weight)
    tolerance: float
    coverage: str

    def __post_init__(self):
        if self.is_well_ordered != (len(self.violations) == 0):
            raise ValueError("report inconsistent: violations must be empty iff well-ordered")


def capacity_spectrum(mixed: MixedChannel, cost: CostSpec | None = None,
                      optima=None) -> tuple:
    """All component capacities with their atom weights, ascending.

    Values equal after rounding at 1e-12 merge, accumulating weight.
    """
    if cost is None:
        cost = CostSpec.free(mixed.num_inputs)
    cost.check_feasible()
    if optima is None:
        optima = [constrained_capacity(comp, cost) for comp in mixed.components]
    pairs = sorted((round(res.capacity, VALUE_DECIMALS), w)
                   for res, w in zip(optima, mixed.weights))
    merged = []
    for value, weight in pairs:
        if merged and merged[-1][0] == value:
            merged[-1][1] += weight
        else:
            merged.append([value, weight])
    return tuple((v, w) for v, w in merged)


def more_capable(w1: Dmc, w2: Dmc, grid: int = 64) -> bool:
    """True when I(P, w1) <= I(P, w2) + 1e-9 at every simplex grid point.

    A necessary-condition check at the given resolution, not a certificate.
    """
    if w1.rows.shape != w2.rows.shape:
        raise ValueError("channels must share alphabets")
    for g in _simplex_grid(w1.num_inputs, grid):
        p = InputDist(g)
        if mutual_information(p, w1) > mutual_information(p, w2) + 1e-9:
            return False
    return True


def check_well_ordered(
    mixed: MixedChannel,
    cost: CostSpec | None = None,
    tol: float = DEFAULT_ORDER_TOL,
    rep_grid: int = 32,
    rep_opt_tol: float = 1e-9,
) -> WellOrderReport:
    """Check the capacity-ordering conditions over sampled representatives.

    Near-equal capacities (within tol) are treated as equal.  The finite atom
    list makes the closedness hypothesis vacuous.
    """
    if cost is None:
        cost = CostSpec.free(mixed.num_inputs)
    cost.check_feasible()
    optima = [constrained_capacity(comp, cost) for comp in mixed.components]
    caps = [res.capacity for res in optima]
    rep_sets = [
        capacity_achieving_set(comp, cost, opt_tol=rep_opt_tol, grid=rep_grid)
        for comp in mixed.components
    ]
    violations = []
    n = mixed.num_atoms
    for i in range(n):
        for p in rep_sets[i].representatives:
            infos = {}
            for j in range(n):
                if j == i:
                    continue
                infos[j] = mutual_information(p, mixed.components[j])
            for j in range(n):
                if j == i:
                    continue
                if abs(caps[i] - caps[j]) <= tol:
                    if abs(infos[j] - caps[i]) > tol:
                        violations.append(OrderViolation(
                            i, j, p, infos[j],
                            f"|I - {caps[i]:.9g}| <= {tol:g} (equal capacities)"))
                elif caps[i] < caps[j] - tol:
                    if not infos[j] > caps[i] + tol:
                        violations.append(OrderViolation(
                            i, j, p, infos[j],
                            f"I > {caps[i]:.9g} + {tol:g} (larger capacity)"))
    spectrum = capacity_spectrum(mixed, cost, optima)
    cum = []
    acc = 0.0
    for v, w in spectrum:
        acc += w
        cum.append((v, acc))
    n_reps = sum(len(r.representatives) for r in rep_sets)
    coverage = (
        f"checked {n_reps} sampled representatives (grid 1/{rep_grid}, "
        f"opt tol {rep_opt_tol:g}); a pass refutes nothing beyond this resolution; "
        "closedness is vacuous for a finite atom list"
    )
    return WellOrderReport(len(violations) == 0, tuple(violations), tuple(cum),
                           tol, coverage)
