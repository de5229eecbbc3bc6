"""Greedy gate replacement under a maximum output error-rate budget.

The flow is: pick the highest switching-power nodes and some of their fanouts,
shrink their capacitance by replacement (then by removal), then reduce area
over the whole netlist.  A delay mode speeds up the critical path first.  Every
move is checked with a predictor of the worst primary-output error rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np

from .dataset import CONE_SLOTS, DEFAULT_DEPTH_LIMIT, FeatureContext, dequantize, fanin_probabilities
from .errorprop import IncrementalPropagator, signal_probabilities
from .netlist import Cell, Netlist, TechLibrary, cone
from .powermodel import (critical_delay, critical_path, load_cap, load_caps, power_delta,
                         switching_activity, total_area, total_power)
from .truthtable import (DEFAULT_PI_CAP, Candidate, exact_error_rate, local_replacement_error,
                         removal_candidates, same_arity_candidates)

TOP_FRACTION = 0.2
_TOL = 1e-12


class InvariantError(RuntimeError):
    pass


class Trial(NamedTuple):
    candidate: Candidate
    fanins: list[int]
    local_error: float


class UndoEntry(NamedTuple):
    node: int
    cell: Cell
    fanins: list[int]


class Step(NamedTuple):
    phase: str
    node: int
    old: str
    new: str
    e_pred: float
    e_out: float


@dataclass
class ApproxConfig:
    e_max: float = 0.05
    mode: str = "power"  # power | area | delay
    preserve_delay: bool = False
    pi_cap: int = DEFAULT_PI_CAP
    depth_limit: int = DEFAULT_DEPTH_LIMIT
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.e_max <= 1.0:
            raise ValueError(f"e_max must lie in [0, 1], got {self.e_max}")
        if self.mode not in ("power", "area", "delay"):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass
class OptimizationState:
    exact: Netlist
    work: Netlist
    lib: TechLibrary
    e_max: float
    predictor: object
    mode: str = "power"
    preserve_delay: bool = False
    e_out: float = 0.0
    local_errors: dict[int, float] = field(default_factory=dict)
    pins: dict[int, int] = field(default_factory=dict)  # node -> original pin it passes through
    undo_log: list[UndoEntry] = field(default_factory=list)
    trace: list[Step] = field(default_factory=list)
    v1: list[int] = field(default_factory=list)
    v2: list[int] = field(default_factory=list)
    accepted: int = 0
    rejected: int = 0
    visits: int = 0
    hooks: list = field(default_factory=list)  # called as hook(state, step) after each acceptance

    def __post_init__(self):
        self.probs = signal_probabilities(self.exact)
        self.activities = switching_activity(self.probs)
        self.levels = list(self.exact.levels)
        self.pin_probs = [fanin_probabilities(self.exact, n, self.probs) for n in range(self.exact.num_nodes)]

    @property
    def exhausted(self) -> bool:
        return self.e_out > 0 and self.e_out >= self.e_max - _TOL

    def level_order(self, nodes) -> list[int]:
        return sorted(nodes, key=lambda n: (self.levels[n], n))

    # -- moves -----------------------------------------------------------------

    def trial(self, node: int, cand: Candidate) -> Trial:
        """Resolve ``cand`` against the node's original function and fanins."""
        orig = self.exact.cells[node]
        pt = cand.passthrough
        if pt is None and cand.cell.num_inputs == 1 and orig.num_inputs != 1:
            pt = self.pins.get(node)
        eps = local_replacement_error(orig, cand.cell, pt, self.pin_probs[node])
        if cand.passthrough is not None:
            fanins = [self.exact.fanins[node][cand.passthrough]]
        elif cand.cell.num_inputs == 0:
            fanins = []
        else:
            fanins = list(self.work.fanins[node])
        return Trial(cand, fanins, eps)

    def apply(self, node: int, t: Trial):
        prev_cell, prev_fanins = self.work.replace(node, t.candidate.cell, t.fanins)
        self.undo_log.append(UndoEntry(node, prev_cell, list(prev_fanins)))
        if t.candidate.passthrough is not None:
            self.pins[node] = t.candidate.passthrough
        elif t.candidate.cell.num_inputs != 1:
            self.pins.pop(node, None)
        if t.local_error:
            self.local_errors[node] = t.local_error
        else:
            self.local_errors.pop(node, None)

    def undo(self):
        node, cell, fanins = self.undo_log.pop()
        self.work.replace(node, cell, fanins)

    def delay_after(self, node: int, t: Trial) -> float:
        prev = self.work.replace(node, t.candidate.cell, t.fanins)
        try:
            return critical_delay(self.work)
        finally:
            self.work.replace(node, *prev)


def replay_undo(work: Netlist, undo_log) -> Netlist:
    """Undo every logged replacement on a copy of ``work``."""
    nl = work.copy()
    for node, cell, fanins in reversed(undo_log):
        nl.replace(node, cell, fanins)
    return nl


# -- predictors ----------------------------------------------------------------

class OraclePredictor:
    """Exact propagation of the full local-error map to the outputs."""

    name = "oracle"
    exact = True

    def __init__(self):
        self.calls = 0

    def bind(self, state: OptimizationState):
        self.prop = IncrementalPropagator(state.exact, state.probs)

    def evaluate(self, state, node: int, trials: list[Trial]) -> Iterator[float]:
        for t in trials:
            self.calls += 1
            yield self.prop.predict(node, t.local_error)

    def commit(self, state, node: int, local_error: float):
        self.prop.commit(node, local_error)

    @property
    def node_errors(self):
        return self.prop.errors


class DnnPredictor:
    """Trained classifier; all candidates of one node go through one forward pass.

    Error estimates used as features are refreshed only inside a bounded fanout
    window after each accepted move, so each step costs O(1).
    """

    name = "dnn"
    exact = False

    def __init__(self, model, depth_limit: int = DEFAULT_DEPTH_LIMIT):
        self.model = model
        self.depth_limit = depth_limit
        self.calls = 0

    def bind(self, state: OptimizationState):
        self.prop = IncrementalPropagator(state.exact, state.probs)
        self.ctx = FeatureContext(state.work, state.lib, state.activities, self.prop.errors,
                                  levels=state.levels, depth_limit=self.depth_limit, propagator=self.prop)

    def evaluate(self, state, node: int, trials: list[Trial]) -> Iterator[float]:
        if not trials:
            return
        base = self.ctx.base(node)
        x = np.stack([self.ctx.features(node, t.candidate.cell, t.local_error, base) for t in trials])
        self.calls += len(trials)
        for cls in self.model.predict_class(x):
            yield dequantize(int(cls))

    def commit(self, state, node: int, local_error: float):
        window = cone(state.exact, node, "fanout", self.depth_limit, max_nodes=4 * CONE_SLOTS)
        self.prop.commit_local(node, local_error, window)

    @property
    def node_errors(self):
        return self.prop.errors


# -- phases --------------------------------------------------------------------

def switching_power(nl: Netlist, activities) -> np.ndarray:
    return np.asarray(activities) * load_caps(nl)


def select_candidates(nl: Netlist, activities, fraction: float = TOP_FRACTION) -> tuple[list[int], list[int]]:
    """Top switching-power nodes and the top share of their not-yet-selected fanouts."""
    n = nl.num_nodes
    if n == 0:
        return [], []
    power = switching_power(nl, activities)
    ranked = sorted(range(n), key=lambda i: (-power[i], i))
    v1 = ranked[:max(1, math.ceil(fraction * n - 1e-9))]
    chosen = set(v1)
    fo = sorted({m for i in v1 for m in nl.fanouts(i)} - chosen)
    fo.sort(key=lambda i: (-power[i], i))
    v2 = fo[:math.ceil(fraction * len(fo) - 1e-9)] if fo else []
    return v1, v2


def _try_node(state: OptimizationState, node: int, trials: list[Trial], phase: str,
              need_delay_below: float | None = None) -> bool:
    """Accept the first trial whose predicted error fits the budget."""
    state.visits += 1
    if need_delay_below is not None:
        trials = [t for t in trials if state.delay_after(node, t) <= need_delay_below + _TOL]
    if not trials:
        return False
    old = state.work.cells[node]
    pred = state.predictor
    for t, e_pred in zip(trials, pred.evaluate(state, node, trials)):
        if e_pred <= state.e_max + _TOL:
            state.apply(node, t)
            pred.commit(state, node, t.local_error)
            state.e_out = e_pred if pred.exact else max(state.e_out, e_pred)
            if state.e_out > state.e_max + _TOL:
                raise InvariantError(f"E_out {state.e_out} exceeds E_max {state.e_max}")
            state.accepted += 1
            step = Step(phase, node, old.name, t.candidate.label, e_pred, state.e_out)
            state.trace.append(step)
            for hook in state.hooks:
                hook(state, step)
            return True
        state.rejected += 1
    return False


def power_phase(state: OptimizationState) -> OptimizationState:
    lib, work, act = state.lib, state.work, state.activities
    v1 = set(state.v1)
    nodes = state.level_order(set(state.v1) | set(state.v2))
    lib_order = {c.name: i for i, c in enumerate(lib.cells)}

    def delay_cap():
        return critical_delay(work) if state.preserve_delay else None

    for node in nodes:
        if state.exhausted:
            return state
        cur = work.cells[node]
        if node in v1:
            metric = lambda c: c.output_cap
        else:
            metric = lambda c: c.total_input_cap
        cands = sorted((c for c in same_arity_candidates(lib, cur) if metric(c.cell) < metric(cur)),
                       key=lambda c: (metric(c.cell), lib_order[c.cell.name]))
        trials = [state.trial(node, c) for c in cands]
        trials = [t for t in trials if power_delta(work, node, t.candidate.cell, t.fanins, act) < 0]
        _try_node(state, node, trials, "power", delay_cap())
    # gate removal with whatever budget is left
    for node in nodes:
        if state.exhausted:
            return state
        cur = work.cells[node]
        trials = [state.trial(node, c) for c in removal_candidates(lib, cur)]
        trials = [t for t in trials if power_delta(work, node, t.candidate.cell, t.fanins, act) < 0]
        trials.sort(key=lambda t: t.local_error)
        _try_node(state, node, trials, "removal", delay_cap())
    return state


def area_phase(state: OptimizationState) -> OptimizationState:
    lib, work = state.lib, state.work
    lib_order = {c.name: i for i, c in enumerate(lib.cells)}
    keep_delay = state.preserve_delay or state.mode == "delay"
    for node in state.level_order(range(work.num_nodes)):
        if state.exhausted:
            return state
        cur = work.cells[node]
        cands = sorted((c for c in same_arity_candidates(lib, cur) if c.cell.area < cur.area),
                       key=lambda c: (c.cell.area, lib_order[c.cell.name]))
        trials = [state.trial(node, c) for c in cands]
        _try_node(state, node, trials, "area", critical_delay(work) if keep_delay and trials else None)
    return state


def delay_phase(state: OptimizationState) -> OptimizationState:
    """Swap critical-path cells for faster ones while the worst delay strictly drops."""
    lib, work = state.lib, state.work
    lib_order = {c.name: i for i, c in enumerate(lib.cells)}
    budget = work.num_nodes * len(lib)
    while budget > 0:
        delay, path = critical_path(work)
        improved = False
        for node in path:
            cur = work.cells[node]
            load = load_cap(work, node)
            now = cur.stage_delay(load)
            cands = sorted((c for c in same_arity_candidates(lib, cur) if c.cell.stage_delay(load) < now),
                           key=lambda c: (c.cell.stage_delay(load), lib_order[c.cell.name]))
            trials = [state.trial(node, c) for c in cands]
            trials = [t for t in trials if state.delay_after(node, t) < delay - _TOL]
            budget -= 1
            if _try_node(state, node, trials, "delay"):
                improved = True
                break
        if not improved:
            break
    return state


# -- driver --------------------------------------------------------------------

@dataclass
class Report:
    name: str
    mode: str
    predictor: str
    seed: int
    e_max: float
    power_before: float
    power_after: float
    area_before: float
    area_after: float
    delay_before: float
    delay_after: float
    e_out_predicted: float
    accepted: int
    rejected: int
    predictor_calls: int
    visited: int
    num_nodes: int
    e_out_exact_per_po: list[float] | None = None

    @property
    def e_out_exact_max(self) -> float | None:
        return None if self.e_out_exact_per_po is None else max(self.e_out_exact_per_po, default=0.0)

    @property
    def power_reduction(self) -> float:
        return 1 - self.power_after / self.power_before if self.power_before else 0.0

    @property
    def area_reduction(self) -> float:
        return 1 - self.area_after / self.area_before if self.area_before else 0.0

    @property
    def flagged(self) -> bool:
        m = self.e_out_exact_max
        return m is not None and m > self.e_max + _TOL

    def fields(self) -> list[tuple[str, str]]:
        f = lambda v: f"{v:.6f}"
        rows = [
            ("circuit", self.name), ("mode", self.mode), ("predictor", self.predictor),
            ("seed", str(self.seed)), ("e_max", f(self.e_max)),
            ("power_before", f(self.power_before)), ("power_after", f(self.power_after)),
            ("power_reduction", f(self.power_reduction)),
            ("area_before", f(self.area_before)), ("area_after", f(self.area_after)),
            ("area_reduction", f(self.area_reduction)),
            ("delay_before", f(self.delay_before)), ("delay_after", f(self.delay_after)),
            ("e_out_predicted", f(self.e_out_predicted)),
        ]
        if self.e_out_exact_per_po is not None:
            rows.append(("e_out_exact_per_po", ",".join(f(v) for v in self.e_out_exact_per_po)))
            rows.append(("e_out_exact_max", f(self.e_out_exact_max)))
            rows.append(("exceeds_e_max", "yes" if self.flagged else "no"))
        rows += [("accepted", str(self.accepted)), ("rejected", str(self.rejected)),
                 ("predictor_calls", str(self.predictor_calls)), ("visited", str(self.visited)),
                 ("nodes", str(self.num_nodes))]
        return rows

    def to_text(self) -> str:
        return "".join(f"{k}: {v}\n" for k, v in self.fields())


def netlist_power(nl: Netlist) -> float:
    """Total power with activities from the netlist's own signal probabilities."""
    return total_power(nl, switching_activity(signal_probabilities(nl)))


def init_state(nl: Netlist, lib: TechLibrary, config: ApproxConfig, predictor=None, hooks=()) -> OptimizationState:
    predictor = predictor or OraclePredictor()
    state = OptimizationState(nl, nl.copy(), lib, config.e_max, predictor, config.mode, config.preserve_delay,
                              hooks=list(hooks))
    state.v1, state.v2 = select_candidates(state.work, state.activities)
    predictor.bind(state)
    return state


def run_phases(state: OptimizationState) -> OptimizationState:
    if state.mode == "delay":
        delay_phase(state)
        area_phase(state)
    elif state.mode == "area":
        area_phase(state)
        power_phase(state)
    else:
        power_phase(state)
        area_phase(state)
    return state


def approximate(nl: Netlist, lib: TechLibrary, config: ApproxConfig | None = None, predictor=None,
                hooks=()) -> tuple[Netlist, Report, OptimizationState]:
    config = config or ApproxConfig()
    state = run_phases(init_state(nl, lib, config, predictor, hooks))
    out = state.work
    per_po = None
    if len(nl.inputs) <= config.pi_cap:
        per_po = exact_error_rate(nl, out, config.pi_cap).per_po
    pred = state.predictor
    report = Report(
        nl.name, config.mode, getattr(pred, "name", type(pred).__name__), config.seed, config.e_max,
        netlist_power(nl), netlist_power(out), total_area(nl), total_area(out),
        critical_delay(nl), critical_delay(out), state.e_out, state.accepted, state.rejected,
        getattr(pred, "calls", 0), state.visits, nl.num_nodes, per_po)
    return out, report, state
