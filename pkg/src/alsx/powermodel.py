"""Switching activity, dynamic power, area and a linear delay model.

Power is in normalized units (Vdd^2 * f = 1): ``activity * load capacitance``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .netlist import Cell, Netlist


def switching_activity(signal_probs) -> np.ndarray:
    p = np.asarray(signal_probs, dtype=float)
    return 2.0 * p * (1.0 - p)


def load_cap(nl: Netlist, node: int) -> float:
    """Own output capacitance plus every fanout pin it drives; PO loads count 0."""
    total = nl.cells[node].output_cap
    for m in nl.fanouts(node):
        caps = nl.cells[m].input_caps
        for i, r in enumerate(nl.fanins[m]):
            if r == node:
                total += caps[i]
    return total


def load_caps(nl: Netlist) -> np.ndarray:
    loads = np.array([c.output_cap for c in nl.cells], dtype=float)
    for m, fi in enumerate(nl.fanins):
        caps = nl.cells[m].input_caps
        for i, r in enumerate(fi):
            if r >= 0:
                loads[r] += caps[i]
    return loads


def node_power(nl: Netlist, node: int, activities) -> float:
    return float(activities[node]) * load_cap(nl, node)


def total_power(nl: Netlist, activities) -> float:
    if nl.num_nodes == 0:
        return 0.0
    return float(np.dot(np.asarray(activities, dtype=float), load_caps(nl)))


def total_area(nl: Netlist) -> float:
    return float(sum(c.area for c in nl.cells))


def power_delta(nl: Netlist, node: int, cell: Cell, fanins: list[int], activities) -> float:
    """Change in total power if ``node`` became ``cell`` driven by ``fanins``.

    Only the node itself and the drivers of its old and new pins are affected.
    """
    old = nl.cells[node]
    delta = activities[node] * (cell.output_cap - old.output_cap)
    for i, r in enumerate(nl.fanins[node]):
        if r >= 0:
            delta -= activities[r] * old.input_caps[i]
    for i, r in enumerate(fanins):
        if r >= 0:
            delta += activities[r] * cell.input_caps[i]
    return float(delta)


def arrival_times(nl: Netlist, loads=None) -> np.ndarray:
    loads = load_caps(nl) if loads is None else loads
    arr = np.zeros(nl.num_nodes)
    for n in nl.topo_order():
        t_in = max((arr[r] for r in nl.fanins[n] if r >= 0), default=0.0)
        arr[n] = t_in + nl.cells[n].stage_delay(loads[n])
    return arr


def critical_path(nl: Netlist) -> tuple[float, list[int]]:
    """Worst primary-output arrival time and one path achieving it (PI side first).

    Ties go to the lowest node id at every step.
    """
    arr = arrival_times(nl)
    best, end = 0.0, None
    for r in nl.po_drivers:
        if r >= 0 and (end is None or arr[r] > best or (arr[r] == best and r < end)):
            best, end = float(arr[r]), r
    if end is None:
        return 0.0, []
    path = [end]
    n = end
    while True:
        fi = sorted({r for r in nl.fanins[n] if r >= 0})
        if not fi:
            break
        n = max(fi, key=lambda r: (arr[r], -r))
        path.append(n)
    path.reverse()
    return best, path


def critical_delay(nl: Netlist) -> float:
    arr = arrival_times(nl)
    return max((float(arr[r]) for r in nl.po_drivers if r >= 0), default=0.0)


@dataclass
class CostReport:
    activity: np.ndarray
    load_cap: np.ndarray
    power: np.ndarray
    arrival: np.ndarray
    total_power: float
    total_area: float
    critical_delay: float
    critical_path: list[int]
    num_nodes: int
    depth: int


def cost_report(nl: Netlist, signal_probs) -> CostReport:
    act = switching_activity(signal_probs)
    loads = load_caps(nl)
    power = act * loads
    arr = arrival_times(nl, loads)
    delay, path = critical_path(nl)
    return CostReport(act, loads, power, arr, float(power.sum()), total_area(nl), delay, path,
                      nl.num_nodes, nl.depth)
