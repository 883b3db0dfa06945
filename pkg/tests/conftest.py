import warnings

import numpy as np
import pytest

from msnbargain import DataItem, HomogeneousScenario, Scenario, UserProfile, UtilityParams


def four_users(budgets=(300, 500, 400, 400), deltas=(1, 1, 1, 1), normalized=True, **kw):
    """Four users with one 10 MB block each on uniform 4 MB/s links."""
    users = [UserProfile(e, d) for e, d in zip(budgets, deltas)]
    kw.setdefault("utility_params", UtilityParams(normalized_cost=normalized))
    return HomogeneousScenario(users, (10,) * 4, 4.0, **kw).to_scenario()


def random_scenario(rng, n_users=None, max_items=5, horizon=None):
    """A small random heterogeneous instance (always valid, not always feasible)."""
    n = int(n_users or rng.integers(2, 5))
    users = [UserProfile(float(rng.uniform(60, 800)), float(rng.choice([0.0, rng.uniform(0, 1), 1.0])))
             for _ in range(n)]
    items = []
    # max_items <= n gives exactly one item per user
    for m in range(int(rng.integers(n, max(n, max_items) + 1))):
        owner = m if m < n else int(rng.integers(n))
        others = [j for j in range(n) if j != owner]
        keep = rng.random(len(others)) < 0.75
        interested = [j for j, k in zip(others, keep) if k] or [others[int(rng.integers(len(others)))]]
        items.append(DataItem(owner, float(rng.uniform(1, 15)), interested))
    cap = rng.uniform(1, 6, (n, n))
    cap = np.triu(cap, 1) + np.triu(cap, 1).T
    alpha = rng.dirichlet(np.ones(n))
    alpha[-1] = 1.0 - alpha[:-1].sum()
    return Scenario(users, items, cap, float(horizon if horizon is not None else rng.uniform(2, 25)),
                    float(rng.uniform(0, 0.03)), tuple(alpha))


def small_instances():
    """Hand-built instances with two or three airtime variables."""
    out = []
    # two users, one block each
    for e, d, g, T in [(500, 1, 0.01, 2), (80, 1, 0.0, 3), (1e6, 0, 0, 2), (60, 1, 0.02, 4)]:
        out.append(HomogeneousScenario([UserProfile(e, d), UserProfile(400, 1)], (10, 8), 4.0,
                                       airtime_horizon=T, unit_reward=g).to_scenario())
    out.append(HomogeneousScenario([UserProfile(200, 0.5), UserProfile(300, 1)], (5, 10), [[0, 2.5], [2.5, 0]],
                                   airtime_horizon=3, bargaining_power=(0.7, 0.3)).to_scenario())
    # three users, three variables, uneven links
    cap = [[0, 3, 4], [3, 0, 2], [4, 2, 0]]
    for e, T, alpha in [(500, 3, None), (120, 4, None), (300, 2, (0.5, 0.25, 0.25))]:
        users = [UserProfile(e, 1), UserProfile(400, 1), UserProfile(350, 0.3)]
        out.append(HomogeneousScenario(users, (6, 8, 4), cap, airtime_horizon=T,
                                       bargaining_power=alpha).to_scenario())
    # three users, partial interest so only two items carry airtime
    users = [UserProfile(400, 1), UserProfile(400, 1), UserProfile(250, 1)]
    items = [DataItem(0, 8, [1, 2]), DataItem(1, 6, [2]), DataItem(2, 5, [])]
    out.append(Scenario(users, items, cap, 3.0))
    items = [DataItem(0, 8, [1]), DataItem(2, 6, [0, 1]), DataItem(1, 4, [0])]
    out.append(Scenario(users, items, 3.0, 2.5, 0.015))
    return out


@pytest.fixture(autouse=True)
def _quiet_numpy():
    with warnings.catch_warnings():
        warnings.simplefilter("error", RuntimeWarning)
        yield
