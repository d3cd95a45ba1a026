"""Solvers for the procurement game.

For a fixed aggregator price the prosumers play a symmetric game whose
unique symmetric best response solves a scalar first-order condition

    (rho - E[u'(d0 + C - x)]) / lambda_rt  =  F(x, ..., x) + h(x),

where ``F`` is the joint capacity cdf on the diagonal and ``h`` is a
correction active only for independent capacities at finite N: it accounts
for outcomes in which rivals' surplus partially covers the pool shortfall.
The aggregator then prices against the response curve x*(rho) with a grid
search refined by golden section.  The large-N independent limit replaces
the game with a scalar mean-field system in (beta, x*).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .agents import (
    EquilibriumResult,
    GameScenario,
    SolverDiagnostics,
    expected_marginal_utility,
)
from .capacity import (
    DETERMINISTIC,
    IID_UNIFORM,
    cdf_marginal,
    expected_shortfall,
    sample,
)
from .errors import SolverError, UnsupportedOperationError, ValidationError
from .penalty import DEFAULT_DRAWS, DEFAULT_SEED

DEFAULT_TOL_X = 1e-8
DEFAULT_TOL_RHO = 1e-6
DEFAULT_GRID_POINTS = 512
MAX_BISECT_ITER = 200
MF_MAX_ITER = 500

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class FollowerFixedPointSpec:
    """Inputs for one symmetric best-response solve at a fixed price."""

    scenario: GameScenario
    rho: float
    tol_x: float = DEFAULT_TOL_X
    draws: int = DEFAULT_DRAWS
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if not self.tol_x > 0.0:
            raise ValidationError("tol_x must be positive")


@dataclass(frozen=True)
class ShortfallAggregates:
    """Rival shortfall sums seen by one prosumer: signed and positive-part."""

    s_minus_i: float
    s_plus_minus_i: float

    def __post_init__(self):
        if self.s_plus_minus_i < max(self.s_minus_i, 0.0) - 1e-12:
            raise ValidationError("positive-part sum cannot fall below the signed sum or zero")


def shortfall_aggregates(offers, capacities, i: int) -> ShortfallAggregates:
    """Aggregate rival shortfalls for prosumer ``i`` in one realized outcome."""
    x = np.asarray(offers, dtype=float)
    c = np.asarray(capacities, dtype=float)
    diff = np.delete(x - c, i)
    return ShortfallAggregates(float(diff.sum()), float(np.maximum(diff, 0.0).sum()))


def offer_price_bounds(
    scenario: GameScenario, draws: int = DEFAULT_DRAWS, seed: int = DEFAULT_SEED
) -> tuple[float, float]:
    """Prices below/above which the symmetric response pins to 0 / cbar.

    For linear utility this is (gamma, lambda_rt + gamma).
    """
    rho_min = expected_marginal_utility(scenario, 0.0, draws=draws, seed=seed)
    rho_max = scenario.lambda_rt + expected_marginal_utility(
        scenario, scenario.capacity.cbar, draws=draws, seed=seed
    )
    return rho_min, rho_max


def partial_coverage_samples(
    scenario: GameScenario, x: float, draws: int, seed: int, caps: np.ndarray | None = None
) -> np.ndarray:
    """Per-draw integrand of the finite-N coverage correction at symmetric offers.

    Each draw contributes
    ``(1 + S*(s - S)/(S + x - C_i)^2) * 1{some rival has surplus and C_i is
    small enough that the pool is still short}`` where ``s``/``S`` are the
    signed and positive-part rival shortfall sums.  The weight lies in
    [0, 1]; the mean over draws estimates the correction.
    """
    if caps is None:
        caps = sample(scenario.capacity, scenario.n_prosumers, seed, draws)
    own = caps[:, 0]
    rival_diff = x - caps[:, 1:]
    s = rival_diff.sum(axis=1)
    s_plus = np.maximum(rival_diff, 0.0).sum(axis=1)
    event = (s < s_plus) & (own <= x + np.minimum(s, 0.0))
    denom = np.where(event, s_plus + x - own, 1.0)
    weight = 1.0 + s_plus * (s - s_plus) / denom**2
    return np.where(event, weight, 0.0)


def partial_coverage_term(
    scenario: GameScenario,
    x: float,
    draws: int = DEFAULT_DRAWS,
    seed: int = DEFAULT_SEED,
) -> float:
    """Monte-Carlo coverage correction; zero under full dependence.

    With identical capacities a rival with surplus implies every prosumer
    has surplus, so the event never fires and the term vanishes exactly.
    """
    model = scenario.capacity
    if not 0.0 <= x <= model.cbar + 1e-12:
        raise ValidationError(f"offer {x} outside [0, cbar={model.cbar}]")
    if model.kind != IID_UNIFORM:
        return 0.0
    if scenario.n_prosumers < 2:
        raise ValidationError("coverage correction needs at least two prosumers")
    return float(partial_coverage_samples(scenario, x, draws, seed).mean())


def follower_foc_gap(
    scenario: GameScenario,
    rho: float,
    x: float,
    draws: int = DEFAULT_DRAWS,
    seed: int = DEFAULT_SEED,
    _caps: np.ndarray | None = None,
) -> float:
    """Signed gap of the symmetric first-order condition at offer ``x``.

    Positive means the prosumer wants to offer more; strictly decreasing in
    ``x`` on the capacity support for prices strictly inside the bounds.
    """
    model = scenario.capacity
    if model.kind == DETERMINISTIC:
        raise UnsupportedOperationError("first-order gap is undefined for deterministic capacity")
    lhs = (rho - expected_marginal_utility(scenario, x, draws=draws, seed=seed)) / scenario.lambda_rt
    diag_cdf = cdf_marginal(model, x)
    h = 0.0
    if model.kind == IID_UNIFORM:
        diag_cdf = diag_cdf**scenario.n_prosumers
        if scenario.n_prosumers >= 2:
            h = float(partial_coverage_samples(scenario, x, draws, seed, caps=_caps).mean())
    return lhs - diag_cdf - h


def _response(scenario, rho, tol_x, draws, seed, caps=None):
    """Symmetric best response at one price; bisection on the FOC gap."""
    rho_min, rho_max = offer_price_bounds(scenario, draws=draws, seed=seed)
    cbar = scenario.capacity.cbar
    if rho <= rho_min:
        return 0.0, 0.0, 0
    if rho >= rho_max:
        return cbar, 0.0, 0
    if scenario.capacity.kind == DETERMINISTIC:
        # interior price and certain supply: selling dominates consuming
        return cbar, 0.0, 0

    def gap(x):
        return follower_foc_gap(scenario, rho, x, draws=draws, seed=seed, _caps=caps)

    return _bisect_decreasing(gap, 0.0, cbar, tol_x, MAX_BISECT_ITER)


def symmetric_follower_response(spec: FollowerFixedPointSpec) -> float:
    """Unique symmetric Nash offer x*(rho), with exact boundary handling."""
    caps = None
    sc = spec.scenario
    if sc.capacity.kind == IID_UNIFORM and sc.n_prosumers >= 2:
        caps = sample(sc.capacity, sc.n_prosumers, spec.seed, spec.draws)
    x, _, _ = _response(sc, spec.rho, spec.tol_x, spec.draws, spec.seed, caps=caps)
    return x


def stackelberg_solve(
    scenario: GameScenario,
    tol_rho: float = DEFAULT_TOL_RHO,
    tol_x: float = DEFAULT_TOL_X,
    grid_points: int = DEFAULT_GRID_POINTS,
    draws: int = DEFAULT_DRAWS,
    seed: int = DEFAULT_SEED,
) -> EquilibriumResult:
    """Leader's optimal price against the symmetric response curve.

    The price never exceeds lambda_da (profit would be negative), so the
    search runs a uniform grid on the clipped price interval followed by
    golden-section refinement around the best grid point.  The grid doubles
    as a concavity diagnostic: nonpositive second differences of profit
    certify the sufficient condition under which the maximizer is unique.
    """
    if grid_points < 4:
        raise ValidationError("grid_points must be at least 4")
    _warn_if_off_band(scenario)
    rho_min, rho_max = offer_price_bounds(scenario, draws=draws, seed=seed)
    lo = max(0.0, rho_min)
    hi = min(scenario.lambda_da, rho_max)
    n = scenario.n_prosumers
    caps = None
    if scenario.capacity.kind == IID_UNIFORM and n >= 2:
        caps = sample(scenario.capacity, n, seed, draws)

    cache: dict[float, float] = {}
    # solve followers well below tol_x so profit comparisons near the
    # maximizer are not drowned by root-bracketing jitter
    leader_tol_x = min(tol_x, 1e-10)

    def response(rho):
        if rho not in cache:
            cache[rho], _, _ = _response(scenario, rho, leader_tol_x, draws, seed, caps=caps)
        return cache[rho]

    def profit(rho):
        return (scenario.lambda_da - rho) * n * response(rho)

    notes: list[str] = []
    if hi <= lo:
        # nothing to trade: every admissible price draws a zero offer
        rho_star = min(scenario.lambda_da, lo)
        x_star = response(rho_star)
        notes.append("degenerate price interval; followers never offer")
        diag = SolverDiagnostics(0, 0, 0.0, True, False, seed, draws, tuple(notes))
        return EquilibriumResult(
            rho_star, x_star, n * x_star, profit(rho_star), n,
            scenario.capacity.cbar, scenario.lambda_da, diag,
        )

    grid = np.linspace(lo, hi, grid_points)
    profits = np.array([profit(r) for r in grid])
    best = int(np.argmax(profits))
    scale = max(1.0, float(np.max(np.abs(profits))))

    d2 = profits[2:] - 2.0 * profits[1:-1] + profits[:-2]
    concavity_ok = bool(np.all(d2 <= 1e-7 * scale))

    flat_tol = 1e-9 * scale
    near_best = profits >= profits[best] - flat_tol
    components = int(np.sum(np.diff(near_best.astype(int)) == 1) + near_best[0])
    multiple_maxima = components > 1
    if multiple_maxima:
        notes.append("multiple grid maxima within tolerance; uniqueness condition may fail")
    if not concavity_ok:
        notes.append("profit not concave along the price grid")

    a = float(grid[max(best - 1, 0)])
    b = float(grid[min(best + 1, grid_points - 1)])
    rho_ref, prof_ref, refine_iters = _golden_max(profit, a, b, tol_rho)
    if prof_ref >= profits[best]:
        rho_star, prof_star = float(rho_ref), float(prof_ref)
    else:
        rho_star, prof_star = float(grid[best]), float(profits[best])

    x_star = response(rho_star)
    residual = 0.0
    if scenario.capacity.kind != DETERMINISTIC and 0.0 < x_star < scenario.capacity.cbar:
        residual = abs(
            follower_foc_gap(scenario, rho_star, x_star, draws=draws, seed=seed, _caps=caps)
        )
    diag = SolverDiagnostics(
        grid_points, refine_iters, residual, concavity_ok, multiple_maxima,
        seed, draws, tuple(notes),
    )
    return EquilibriumResult(
        rho_star, x_star, n * x_star, prof_star, n,
        scenario.capacity.cbar, scenario.lambda_da, diag,
    )


@dataclass(frozen=True)
class MeanFieldSolution:
    """Large-N fixed point: shortfall-pass-through ratio and symmetric offer."""

    beta: float
    x_star: float
    residuals: tuple[float, float]
    iterations: int = 0

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValidationError(f"beta={self.beta} outside [0, 1]")


def meanfield_solve(
    scenario: GameScenario,
    rho: float,
    tol: float = 1e-8,
    max_iter: int = MF_MAX_ITER,
    damping: float = 0.5,
) -> MeanFieldSolution:
    """Solve the large-N system  beta*F(x) = (rho - E[u'])/lambda_rt  with
    beta = (x - E[C])+ / E[(x - C)+].

    Iterates x <- solve(beta), beta <- ratio(x) with a damped beta update.
    The nominal damping of 0.5 limit-cycles when the net margin is small
    (the alternation map is locally expanding there), so the update is
    safeguarded: the residual ratio(x(beta)) - beta decreases strictly in
    beta and changes sign on [0, 1], and any damped step that would leave
    the sign bracket is replaced by its midpoint.  At indifference (zero
    net margin) the maximal offer x* = E[C] is returned, matching the
    large-N equilibrium path.
    """
    model = scenario.capacity
    if model.kind != IID_UNIFORM:
        raise ValidationError("mean-field solve requires iid capacities")
    lam = scenario.lambda_rt
    mean = model.mean
    cbar = model.cbar

    def margin(x):
        return (rho - expected_marginal_utility(scenario, x)) / lam

    r0 = margin(0.0)
    if r0 < 0.0:
        return MeanFieldSolution(0.0, 0.0, (0.0, 0.0), 0)
    if r0 == 0.0:
        return MeanFieldSolution(0.0, min(mean, cbar), (0.0, 0.0), 0)
    if margin(cbar) >= 1.0:
        # offer cap binds; the gap is carried by the cap multiplier
        return MeanFieldSolution(1.0, cbar, (0.0, 0.0), 0)

    def solve_x(beta):
        def gap(x):
            return margin(x) - beta * cdf_marginal(model, x)

        if gap(cbar) >= 0.0:
            return cbar
        x, _, _ = _bisect_decreasing(gap, 0.0, cbar, 1e-12, MAX_BISECT_ITER)
        return x

    def ratio(x):
        den = expected_shortfall(model, x)
        if den <= 0.0:
            return 0.0
        return min(max((x - mean) / den, 0.0), 1.0)

    beta = 1.0
    step = damping
    lo_b, hi_b = 0.0, 1.0  # ratio(x(0+)) - 0 > 0 > ratio(x(1)) - 1
    prev_err = math.inf
    prev_sign = 0.0
    trace: list[float] = []
    for k in range(1, max_iter + 1):
        x = solve_x(beta)
        target = ratio(x)
        e1 = abs(beta * cdf_marginal(model, x) - margin(x))
        e2 = abs(target - beta)
        err = max(e1, e2)
        trace.append(err)
        if err <= tol:
            return MeanFieldSolution(beta, x, (e1, e2), k)
        sign = math.copysign(1.0, target - beta) if target != beta else 0.0
        if target > beta:
            lo_b = beta
        elif target < beta:
            hi_b = beta
        # halve on oscillation (update direction flips) or stalled error
        if sign * prev_sign < 0.0 or err >= prev_err:
            step = max(0.5 * step, 1e-3)
        prev_sign = sign
        prev_err = err
        nxt = beta + step * (target - beta)
        if not lo_b < nxt < hi_b:
            nxt = 0.5 * (lo_b + hi_b)
        beta = nxt
    raise SolverError(
        "mean-field iteration did not converge",
        residual_trace=tuple(trace[-20:]),
        step=step,
        rho=rho,
    )


def meanfield_response(scenario: GameScenario, rho: float, tol: float = 1e-8) -> float:
    """Large-N symmetric offer at one price (0 below indifference, E[C] at it)."""
    return meanfield_solve(scenario, rho, tol=tol).x_star


def meanfield_stackelberg(
    scenario: GameScenario,
    tol_rho: float = DEFAULT_TOL_RHO,
    grid_points: int = DEFAULT_GRID_POINTS,
) -> tuple[EquilibriumResult, MeanFieldSolution]:
    """Leader's price against the mean-field response curve."""
    rho_min, _ = offer_price_bounds(scenario)
    lo = max(0.0, rho_min)
    hi = scenario.lambda_da
    n = scenario.n_prosumers

    cache: dict[float, float] = {}

    def response(rho):
        if rho not in cache:
            cache[rho] = meanfield_response(scenario, rho)
        return cache[rho]

    def profit(rho):
        return (scenario.lambda_da - rho) * n * response(rho)

    if hi <= lo:
        rho_star = min(hi, lo)
        sol = meanfield_solve(scenario, rho_star)
        diag = SolverDiagnostics(0, 0, 0.0, True, False, 0, 0, ("degenerate price interval",))
        return (
            EquilibriumResult(
                rho_star, sol.x_star, n * sol.x_star, profit(rho_star), n,
                scenario.capacity.cbar, scenario.lambda_da, diag,
            ),
            sol,
        )

    grid = np.linspace(lo, hi, grid_points)
    profits = np.array([profit(r) for r in grid])
    best = int(np.argmax(profits))
    a = grid[max(best - 1, 0)]
    b = grid[min(best + 1, grid_points - 1)]
    rho_ref, prof_ref, iters = _golden_max(profit, a, b, tol_rho)
    if prof_ref >= profits[best]:
        rho_star, prof_star = rho_ref, prof_ref
    else:
        rho_star, prof_star = float(grid[best]), float(profits[best])
    sol = meanfield_solve(scenario, rho_star)
    diag = SolverDiagnostics(grid_points, iters, max(sol.residuals), True, False, 0, 0, ())
    return (
        EquilibriumResult(
            rho_star, sol.x_star, n * sol.x_star, prof_star, n,
            scenario.capacity.cbar, scenario.lambda_da, diag,
        ),
        sol,
    )


def shortfall_ratio_convergence(
    scenario: GameScenario,
    x: float,
    n_values,
    draws: int = 2000,
    seed: int = DEFAULT_SEED,
) -> list[float]:
    """Empirical pooled-to-individual shortfall ratio for growing N.

    Diagnostic for the law-of-large-numbers limit behind the mean-field
    ratio: each entry averages ``(sum_j (x - C_j))+ / sum_j (x - C_j)+``
    over draws, with 0/0 read as 0.
    """
    model = scenario.capacity
    if model.kind != IID_UNIFORM:
        raise ValidationError("ratio diagnostic requires iid capacities")
    out = []
    for idx, n in enumerate(n_values):
        caps = sample(model, int(n), seed + idx, draws)
        diff = x - caps
        num = np.maximum(diff.sum(axis=1), 0.0)
        den = np.maximum(diff, 0.0).sum(axis=1)
        ratios = np.where(den > 0.0, num / np.where(den > 0.0, den, 1.0), 0.0)
        out.append(float(ratios.mean()))
    return out


def scenario_at_price(scenario: GameScenario, wholesale_price: float) -> GameScenario:
    """Copy of the scenario with the day-ahead price replaced."""
    return replace(scenario, lambda_da=float(wholesale_price))


def _warn_if_off_band(scenario: GameScenario) -> None:
    # the numeric search stays defined off the closed-form band, but the
    # equilibrium price path pins to its boundary there; flag it
    from .closedform import sigma_band

    cap = scenario.capacity
    if cap.kind != "dependent_uniform" or scenario.utility.kind != "linear":
        return
    if scenario.lambda_da <= scenario.utility.gamma:
        return
    lo, hi = sigma_band(scenario.utility.gamma, cap.mu, scenario.lambda_da, scenario.lambda_rt)
    if not lo - 1e-12 <= cap.sigma <= hi + 1e-12:
        warnings.warn(
            f"sigma={cap.sigma:.6g} outside the closed-form band [{lo:.6g}, {hi:.6g}]; "
            "numeric equilibrium remains defined but has no closed-form counterpart",
            stacklevel=3,
        )


def _bisect_decreasing(fn, lo, hi, tol, max_iter):
    """Root of a decreasing scalar function; returns (x, fn(x), iterations)."""
    flo = fn(lo)
    if flo <= 0.0:
        return lo, flo, 0
    fhi = fn(hi)
    if fhi >= 0.0:
        return hi, fhi, 0
    fmid = flo
    for k in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        fmid = fn(mid)
        if fmid > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol:
            return 0.5 * (lo + hi), fmid, k
    raise SolverError(
        "bisection did not reach tolerance",
        bracket=(lo, hi),
        width=hi - lo,
        tol=tol,
    )


def _golden_max(fn, a, b, tol):
    """Golden-section maximization on [a, b]; returns the best point seen."""
    if b - a <= tol:
        x = 0.5 * (a + b)
        return x, fn(x), 0
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = fn(c), fn(d)
    best_x, best_f = (c, fc) if fc >= fd else (d, fd)
    iters = 0
    while b - a > tol and iters < 200:
        iters += 1
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = fn(c)
            if fc > best_f:
                best_x, best_f = c, fc
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = fn(d)
            if fd > best_f:
                best_x, best_f = d, fd
    return best_x, best_f, iters
