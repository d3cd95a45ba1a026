"""Prosumer and aggregator objectives for the procurement game.

A prosumer selling ``x`` keeps ``rho * x`` plus the utility of consuming
``d0 + C - x`` and owes an expected shortfall share.  The aggregator earns
the day-ahead arbitrage margin on the pooled offer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .capacity import CapacityModel, sample
from .errors import ValidationError
from .penalty import DEFAULT_DRAWS, DEFAULT_SEED, expected_penalty

LINEAR = "linear"
TABULATED = "tabulated"


@dataclass(frozen=True)
class UtilitySpec:
    """Consumption utility: linear ``u(z) = gamma * z``, or a tabulated
    nonincreasing marginal-utility curve for general concave shapes."""

    kind: str
    gamma: float = 0.0
    marginal_points: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        if self.kind == LINEAR:
            if not self.gamma > 0.0:
                raise ValidationError(f"linear utility needs gamma > 0, got {self.gamma}")
            return
        if self.kind != TABULATED:
            raise ValidationError(f"unknown utility kind {self.kind!r}")
        pts = self.marginal_points
        if not pts or len(pts) < 2:
            raise ValidationError("tabulated utility needs at least two (z, marginal) points")
        z = np.asarray([p[0] for p in pts], dtype=float)
        m = np.asarray([p[1] for p in pts], dtype=float)
        if np.any(np.diff(z) <= 0.0):
            raise ValidationError("tabulated z grid must be strictly increasing")
        if np.any(m < 0.0) or np.any(np.diff(m) > 1e-12):
            raise ValidationError("tabulated marginal utility must be nonnegative and nonincreasing")
        object.__setattr__(self, "marginal_points", tuple((float(a), float(b)) for a, b in pts))

    def marginal(self, z):
        """u'(z), vectorized; constant extrapolation outside the table."""
        if self.kind == LINEAR:
            out = np.full_like(np.asarray(z, dtype=float), self.gamma)
            return out if out.ndim else float(out)
        zs = np.asarray([p[0] for p in self.marginal_points])
        ms = np.asarray([p[1] for p in self.marginal_points])
        out = np.interp(np.asarray(z, dtype=float), zs, ms)
        return out if out.ndim else float(out)

    def value(self, z):
        """u(z) with u(0) = 0; the tabulated kind integrates its marginal."""
        za = np.asarray(z, dtype=float)
        if self.kind == LINEAR:
            out = self.gamma * za
            return out if out.ndim else float(out)
        grid = np.linspace(0.0, float(np.max(za, initial=0.0)) + 1e-12, 4097)
        cum = np.concatenate([[0.0], np.cumsum(
            0.5 * (self.marginal(grid[1:]) + self.marginal(grid[:-1])) * np.diff(grid)
        )])
        out = np.interp(za, grid, cum)
        return out if out.ndim else float(out)


def linear_utility(gamma: float) -> UtilitySpec:
    return UtilitySpec(LINEAR, gamma=float(gamma))


def tabulated_utility(points) -> UtilitySpec:
    return UtilitySpec(TABULATED, marginal_points=tuple(points))


@dataclass(frozen=True)
class GameScenario:
    """One instance of the pricing game between the aggregator and N prosumers."""

    n_prosumers: int
    d0: float
    capacity: CapacityModel
    utility: UtilitySpec
    lambda_da: float
    lambda_rt: float

    def __post_init__(self):
        if int(self.n_prosumers) != self.n_prosumers or self.n_prosumers < 1:
            raise ValidationError(f"n_prosumers must be a positive integer, got {self.n_prosumers}")
        if not self.d0 > self.capacity.cbar:
            raise ValidationError(
                f"d0={self.d0} must exceed installed capacity cbar={self.capacity.cbar}"
            )
        if self.lambda_da < 0.0 or self.lambda_rt < 0.0:
            raise ValidationError("prices lambda_da and lambda_rt must be nonnegative")


def expected_marginal_utility(
    scenario: GameScenario,
    x: float,
    draws: int = DEFAULT_DRAWS,
    seed: int = DEFAULT_SEED,
) -> float:
    """E[u'(d0 + C - x)]; exact for linear utility, Monte Carlo otherwise."""
    u = scenario.utility
    if u.kind == LINEAR:
        return u.gamma
    caps = sample(scenario.capacity, 1, seed, draws)[:, 0]
    return float(np.mean(u.marginal(scenario.d0 + caps - x)))


def expected_utility(
    scenario: GameScenario,
    x: float,
    draws: int = DEFAULT_DRAWS,
    seed: int = DEFAULT_SEED,
) -> float:
    """E[u(d0 + C - x)]; exact for linear utility, Monte Carlo otherwise."""
    u = scenario.utility
    if u.kind == LINEAR:
        return u.gamma * (scenario.d0 + scenario.capacity.mean - x)
    caps = sample(scenario.capacity, 1, seed, draws)[:, 0]
    return float(np.mean(u.value(scenario.d0 + caps - x)))


def prosumer_payoff(
    scenario: GameScenario,
    rho: float,
    x_i: float,
    x_others: float,
    draws: int = DEFAULT_DRAWS,
    seed: int = DEFAULT_SEED,
) -> float:
    """Expected payoff of one prosumer offering ``x_i`` against symmetric rivals.

    Nominal demand is bought at a fixed retail rate and only shifts the
    payoff by a constant, so it is not modeled beyond its appearance in the
    utility argument.
    """
    comp = rho * x_i
    util = expected_utility(scenario, x_i, draws=draws, seed=seed)
    pen = expected_penalty(scenario, x_i, x_others, draws=draws, seed=seed)
    return comp + util - pen


def aggregator_profit(scenario: GameScenario, rho: float, aggregate_x: float) -> float:
    """Day-ahead arbitrage margin; negative when rho exceeds lambda_da."""
    if rho < 0.0:
        raise ValidationError("rho must be nonnegative")
    return (scenario.lambda_da - rho) * aggregate_x


@dataclass(frozen=True)
class SolverDiagnostics:
    """What the equilibrium search did and whether its assumptions held."""

    grid_points: int
    refine_iterations: int
    follower_residual: float
    concavity_ok: bool
    multiple_maxima: bool
    seed: int
    draws: int
    notes: tuple[str, ...] = ()


@dataclass(frozen=True)
class EquilibriumResult:
    """Leader price, symmetric follower offer, and solve diagnostics."""

    rho_star: float
    x_star: float
    aggregate_x: float
    leader_profit: float
    n_prosumers: int
    cbar: float
    lambda_da: float
    diagnostics: SolverDiagnostics = field(repr=False, default=None)

    def __post_init__(self):
        tol = 1e-9 * (1.0 + abs(self.cbar))
        if not -tol <= self.x_star <= self.cbar + tol:
            raise ValidationError(f"x_star={self.x_star} outside [0, cbar={self.cbar}]")
        if not -tol <= self.rho_star <= self.lambda_da + tol:
            raise ValidationError(f"rho_star={self.rho_star} outside [0, lambda_da={self.lambda_da}]")
        if abs(self.aggregate_x - self.n_prosumers * self.x_star) > tol * self.n_prosumers:
            raise ValidationError("aggregate_x must equal n_prosumers * x_star")
