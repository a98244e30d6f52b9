import math
import random

import pytest

from cgrlab.contact_plan import Contact, ContactPlan, NodeSpec, StateGrid, parse_contact_plan
from cgrlab.simulator import Demand

THREE_NODE_PLAN = """\
plan 3 10
node 1 inf
node 2 inf
node 3 inf
contact 1 1 2 0 10 10
contact 2 2 3 10 20 10
contact 3 1 3 20 30 10
"""


@pytest.fixture
def fig1_plan() -> ContactPlan:
    """Three nodes, one contact per state, the canonical congestion example."""
    return parse_contact_plan(THREE_NODE_PLAN)


@pytest.fixture
def fig1_demands() -> list[Demand]:
    """Both senders burst 10 packets at t=0; node 1's traffic has 30 s to
    live, node 2's has 20 s."""
    return [Demand(1, 3, 0.0, 30.0, 10), Demand(2, 3, 0.0, 20.0, 10)]


def random_small_plan(rng: random.Random, max_contacts: int = 8) -> ContactPlan:
    """A small random plan for oracle comparisons; windows may span states."""
    node_count = rng.randint(3, 5)
    states = rng.randint(2, 5)
    grid = StateGrid(states, 10.0)
    contacts = []
    for cid in range(1, rng.randint(0, max_contacts) + 1):
        a, b = rng.sample(range(1, node_count + 1), 2)
        q1 = rng.randint(1, states)
        q2 = rng.randint(q1, states)
        contacts.append(
            Contact(cid, a, b, grid.state_start(q1), grid.state_end(q2), rng.randint(1, 10))
        )
    return ContactPlan(grid, [NodeSpec(i) for i in range(1, node_count + 1)], contacts)


def random_demands(rng: random.Random, plan: ContactPlan, max_demands: int = 4) -> list[Demand]:
    grid = plan.grid
    nodes = sorted(plan.node_ids)
    demands = []
    for _ in range(rng.randint(1, max_demands)):
        src, dst = rng.sample(nodes, 2)
        t_gen = grid.state_start(rng.randint(1, grid.state_count))
        ttl = math.inf if rng.random() < 0.5 else rng.choice([10.0, 20.0, 30.0])
        demands.append(Demand(src, dst, t_gen, ttl, rng.randint(1, 5)))
    return demands
