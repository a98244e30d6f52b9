"""Independent brute-force route enumeration used to check the search code.

This deliberately re-derives the scheduling rule from scratch on raw
timestamps (no state-index helpers shared with the implementation): a
contact can carry traffic available at time t in the first whole state of
its window starting at or after t, and the traffic arrives when that
state ends. Routes may not revisit a node.
"""

from __future__ import annotations

import math

from cgrlab.contact_plan import Contact, ContactPlan

RouteKey = tuple[float, int, tuple[int, ...]]


def _arrival_after(contact: Contact, available: float, duration: float) -> float | None:
    earliest = max(available, contact.start)
    slot_start = math.ceil(earliest / duration - 1e-9) * duration
    if slot_start + duration > contact.end + 1e-9:
        return None
    return slot_start + duration


def enumerate_routes(
    plan: ContactPlan,
    source: int,
    dest: int,
    t_now: float = 0.0,
    suppressed_contacts: frozenset[int] | set[int] = frozenset(),
    suppressed_nodes: frozenset[int] | set[int] = frozenset(),
) -> list[RouteKey]:
    """Every loop-free route as (delivery_time, hops, contact ids), sorted."""
    duration = plan.grid.state_duration
    found: list[RouteKey] = []
    if source in suppressed_nodes:
        return []

    def walk(node: int, available: float, visited: set[int], seq: tuple[int, ...]) -> None:
        for c in plan.contacts:
            if c.from_node != node or c.contact_id in suppressed_contacts:
                continue
            if c.to_node in suppressed_nodes or c.to_node in visited:
                continue
            arrival = _arrival_after(c, available, duration)
            if arrival is None:
                continue
            ids = seq + (c.contact_id,)
            if c.to_node == dest:
                found.append((arrival, len(ids), ids))
            else:
                walk(c.to_node, arrival, visited | {c.to_node}, ids)

    walk(source, t_now, {source}, ())
    return sorted(found)
