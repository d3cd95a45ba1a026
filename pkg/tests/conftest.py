import numpy as np
import pytest

import deragg as dg


def coverage_by_quadrature(scenario, x, m=2001):
    """Brute-force 2-D midpoint quadrature of the coverage integrand (N=2)."""
    lo, hi = scenario.capacity.support
    edges = np.linspace(lo, hi, m + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])
    c_own, c_rival = np.meshgrid(mids, mids, indexing="ij")
    s = x - c_rival
    s_plus = np.maximum(s, 0.0)
    event = (s < s_plus) & (c_own <= x + np.minimum(s, 0.0))
    denom = np.where(event, s_plus + x - c_own, 1.0)
    weight = 1.0 + s_plus * (s - s_plus) / denom**2
    cell = ((hi - lo) / m) ** 2
    return float(np.sum(np.where(event, weight, 0.0)) * cell / (hi - lo) ** 2)


def make_scenario(kind="dependent", n=1, mu=10.0, sigma=3.3, gamma=2.5,
                  lambda_da=4.0, lambda_rt=4.0, d0=20.0):
    if kind == "dependent":
        cap = dg.dependent_uniform(mu, sigma)
    elif kind == "iid":
        cap = dg.iid_uniform(mu, sigma)
    elif kind == "deterministic":
        cap = dg.deterministic(mu)
    else:
        raise ValueError(kind)
    return dg.GameScenario(n, max(d0, cap.cbar + 1.0), cap,
                           dg.linear_utility(gamma), lambda_da, lambda_rt)


@pytest.fixture
def fig3_scenario():
    # gamma=2.5, mu=10, sigma=3.3, lambda_da=lambda_rt=4
    return make_scenario()


@pytest.fixture
def iid2_scenario():
    return make_scenario(kind="iid", n=2)
