"""Shortfall cost sharing among prosumers.

When realized aggregate capacity falls short of the pooled offer, the
buy-back cost ``lambda_rt * (X - sum(C))+`` is split across prosumers in
proportion to their individual shortfalls ``(x_i - C_i)+``.  A prosumer who
covers their own offer pays nothing, shares always sum to the pool penalty,
and equal shortfalls pay equal shares.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .capacity import sample
from .errors import ValidationError

#: floor for any expectation that feeds a solver
MIN_DRAWS = 10_000
DEFAULT_DRAWS = 100_000
DEFAULT_SEED = 0


@dataclass(frozen=True)
class PenaltyInput:
    """One realized market outcome: offers, capacities, and the buy-back price."""

    offers: np.ndarray
    capacities: np.ndarray
    lambda_rt: float

    def __post_init__(self):
        offers = np.asarray(self.offers, dtype=float)
        caps = np.asarray(self.capacities, dtype=float)
        if offers.ndim != 1 or caps.shape != offers.shape:
            raise ValidationError("offers and capacities must be 1-D vectors of equal length")
        if np.any(offers < 0.0) or np.any(caps < 0.0):
            raise ValidationError("offers and capacities must be nonnegative")
        if self.lambda_rt < 0.0:
            raise ValidationError("lambda_rt must be nonnegative")
        object.__setattr__(self, "offers", offers)
        object.__setattr__(self, "capacities", caps)


def penalty_shares(offers, capacities, lambda_rt: float) -> np.ndarray:
    """Penalty share of every prosumer, for one draw or a batch of draws.

    ``capacities`` of shape ``(draws, n)`` broadcasts against 1-D
    ``offers`` and yields shares of the same shape.  The 0/0 case (nobody
    short) is defined as zero, which keeps the shares summing exactly to
    the pool penalty.
    """
    x = np.asarray(offers, dtype=float)
    c = np.asarray(capacities, dtype=float)
    lam = np.asarray(lambda_rt, dtype=float)
    shortfall = np.maximum(x - c, 0.0)
    pool = np.maximum(x.sum(axis=-1) - c.sum(axis=-1), 0.0)
    denom = shortfall.sum(axis=-1)
    safe = np.where(denom > 0.0, denom, 1.0)
    return (lam * pool)[..., None] * shortfall / safe[..., None]


def penalty_share(inp: PenaltyInput, i: int) -> float:
    """Share paid by prosumer ``i`` for the realized outcome ``inp``."""
    n = inp.offers.shape[0]
    if not 0 <= i < n:
        raise ValidationError(f"prosumer index {i} out of range for n={n}")
    return float(penalty_shares(inp.offers, inp.capacities, inp.lambda_rt)[i])


def penalty_draws(scenario, x_i: float, x_others: float, draws: int, seed: int) -> np.ndarray:
    """Per-draw penalty of prosumer 0 when every rival offers ``x_others``.

    Exposed so callers can form common-random-number differences and
    standard errors; :func:`expected_penalty` is its mean.
    """
    _check_offer(scenario, x_i)
    _check_offer(scenario, x_others)
    n = scenario.n_prosumers
    offers = np.full(n, float(x_others))
    offers[0] = float(x_i)
    caps = sample(scenario.capacity, n, seed, draws)
    return penalty_shares(offers, caps, scenario.lambda_rt)[:, 0]


def expected_penalty(
    scenario,
    x_i: float,
    x_others: float,
    draws: int = DEFAULT_DRAWS,
    seed: int = DEFAULT_SEED,
) -> float:
    """Monte-Carlo expected penalty share at symmetric rival offers.

    The buy-back price enters only through its mean, so ``lambda_rt`` in
    the scenario is treated as that expectation.  Deterministic given the
    seed.
    """
    if draws < MIN_DRAWS:
        raise ValidationError(f"draws={draws} is below the {MIN_DRAWS} floor")
    return float(penalty_draws(scenario, x_i, x_others, draws, seed).mean())


def _check_offer(scenario, x: float) -> None:
    if not 0.0 <= x <= scenario.capacity.cbar + 1e-12:
        raise ValidationError(
            f"offer {x} outside [0, cbar={scenario.capacity.cbar}]"
        )
