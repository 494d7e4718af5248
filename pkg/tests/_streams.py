"""Random arrival streams shared by the safety and ordering tests."""

import random

from corridor_cav.geometry import ConstraintConfig, CorridorGeometry, headway
from corridor_cav.sim import Scenario, Spawn

GAP_RANGE = (4.0, 10.0)
SPEED_RANGE = (9.0, 14.0)
MAX_VEHICLES = 30


def random_stream(seed, axis="NS", gaps=GAP_RANGE, n_max=MAX_VEHICLES):
    """Poisson-like stream of 2..n_max vehicles on random routes.

    Same-route entries are pushed back until the entry headway holds, which
    the scenario validator requires.
    """
    rnd = random.Random(seed)
    geometry = CorridorGeometry(axis=axis)
    cfg = ConstraintConfig()
    routes = sorted(geometry.routes)
    t, last, spawns = 0.0, {}, []
    for _ in range(rnd.randint(2, n_max)):
        route = rnd.choice(routes)
        t += rnd.uniform(*gaps)
        v0 = rnd.uniform(*SPEED_RANGE)
        if route in last:
            t_prev, v_prev = last[route]
            t = max(t, t_prev + headway(v0, cfg) / v_prev)
        last[route] = (t, v0)
        spawns.append(Spawn(t, route, v0))
    return Scenario(geometry, cfg, spawns)
