"""Probabilistic signal and error propagation under fanin independence.

A node's error probability is the chance its output differs from the
fault-free value.  Per gate this is computed by enumerating input values and
input flip patterns; across the network it is propagated in topological order,
keeping separate flip probabilities for each fault-free value of a signal.
A bit-parallel Monte-Carlo fault injector provides an independent check.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping

import numpy as np

from .netlist import Cell, Netlist, NetlistError
from .truthtable import eval_cell_words, pattern_weights

_ONES = np.uint64(0xFFFFFFFFFFFFFFFF)


def signal_probabilities(nl: Netlist, pi_probs=None) -> np.ndarray:
    """P(node output = 1) for every node, inputs assumed independent."""
    pi_p = _pi_vector(nl, pi_probs, 0.5)
    probs = np.zeros(nl.num_nodes)
    for n in nl.topo_order():
        cell = nl.cells[n]
        ins = [pi_p[~r] if r < 0 else probs[r] for r in nl.fanins[n]]
        probs[n] = cell_one_probability(cell, ins)
    return probs


def cell_one_probability(cell: Cell, input_probs) -> float:
    w = pattern_weights(input_probs)
    return float(np.clip(w @ _table_bits(cell.truth_table, cell.num_inputs), 0.0, 1.0))


@lru_cache(maxsize=None)
def _table_bits(tt: int, k: int) -> np.ndarray:
    return np.array([(tt >> p) & 1 for p in range(1 << k)], dtype=float)


@lru_cache(maxsize=None)
def flip_matrix(tt: int, k: int) -> np.ndarray:
    """``D[v, e] = 1`` iff flipping the inputs selected by ``e`` changes f(v)."""
    bits = np.array([(tt >> p) & 1 for p in range(1 << k)], dtype=np.int8)
    v = np.arange(1 << k)
    return (bits[v[:, None] ^ v[None, :]] != bits[v[:, None]]).astype(float)


def combine_flips(a: float, b: float) -> float:
    """Probability of an odd number of flips from two independent sources."""
    return a + (1.0 - 2.0 * a) * b


def gate_output_error(cell: Cell, input_probs, input_errors, eps_g: float | None = None) -> float:
    """Output error probability of ``cell`` given fanin signal/error probabilities."""
    k = cell.num_inputs
    if len(input_probs) != k or len(input_errors) != k:
        raise ValueError(f"{cell.name} has {k} inputs; got {len(input_probs)} probabilities "
                         f"and {len(input_errors)} errors")
    eps_g = cell.intrinsic_error if eps_g is None else eps_g
    if k == 0 or not any(input_errors):
        return float(eps_g)
    flip = pattern_weights(input_probs) @ flip_matrix(cell.truth_table, k) @ pattern_weights(input_errors)
    return float(np.clip(combine_flips(eps_g, flip), 0.0, 1.0))


def gate_output_error_or2_eq1(p1: float, p2: float, e1: float, e2: float, eps_g: float) -> float:
    """Closed-form OR2 output error as printed with the Boolean-difference method.

    Kept for reference; it differs from exact enumeration in the joint-flip term
    whenever both input errors are nonzero.
    """
    v = eps_g + (1 - 2 * eps_g) * (e1 * (1 - p2) + e2 * (1 - p1) - 2 * e1 * e2 * (2 * p1 * p2 - 1))
    return min(1.0, max(0.0, v))


@lru_cache(maxsize=None)
def _split_tables(tt: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Flip matrix restricted to patterns where the fault-free output is 0, resp. 1."""
    d = flip_matrix(tt, k)
    bits = _table_bits(tt, k)[:, None]
    return d * (1.0 - bits), d * bits


def _flip_weights(err0, err1) -> np.ndarray:
    """``W[v, e]``: probability of flip pattern ``e`` given fault-free input pattern ``v``."""
    w = np.ones((1, 1))
    for a, b in zip(err0, err1):
        g = np.array([[1.0 - a, a], [1.0 - b, b]])
        r, c = w.shape
        w = (g[:, None, :, None] * w[None, :, None, :]).reshape(2 * r, 2 * c)
    return w


def conditional_flips(cell: Cell, input_probs, err0, err1, eps_g: float | None = None) -> tuple[float, float]:
    """Output flip probability given the fault-free output is 0, resp. 1.

    Each fanin carries its own value-conditional flip probabilities; fanins are
    independent.  Exact on fanout-free circuits, where a gate's output flip is
    correlated with its own value but not with other signals.
    """
    k = cell.num_inputs
    eps_g = cell.intrinsic_error if eps_g is None else eps_g
    pv = pattern_weights(input_probs)
    p1 = float(pv @ _table_bits(cell.truth_table, k))
    out = []
    if k and (any(err0) or any(err1)):
        w = _flip_weights(err0, err1)
        for y, (table, py) in enumerate(zip(_split_tables(cell.truth_table, k), (1.0 - p1, p1))):
            f = float(pv @ (table * w).sum(axis=1)) / py if py > 0 else 0.0
            out.append(min(1.0, max(0.0, combine_flips(eps_g, f))))
    else:
        out = [float(eps_g), float(eps_g)]
    return out[0], out[1]


def _mix(p: float, e0: float, e1: float) -> float:
    return (1.0 - p) * e0 + p * e1


@dataclass
class Propagation:
    node_errors: np.ndarray
    po_errors: np.ndarray

    @property
    def max(self) -> float:
        return float(self.po_errors.max()) if len(self.po_errors) else 0.0


def propagate_error(nl: Netlist, signal_probs: np.ndarray, injected: Mapping[int, float] | None = None,
                    pi_probs=None, pi_errors=None) -> Propagation:
    """Push error probabilities from injection points to the primary outputs.

    Flip probabilities are tracked separately for each fault-free value of a
    signal; the reported error is their mix under the signal probability.
    """
    injected = injected or {}
    pi_p = _pi_vector(nl, pi_probs, 0.5)
    pi_e = _pi_vector(nl, pi_errors, 0.0)
    cond = np.zeros((nl.num_nodes, 2))
    err = np.zeros(nl.num_nodes)
    for n in nl.topo_order():
        fi = nl.fanins[n]
        ps = [pi_p[~r] if r < 0 else signal_probs[r] for r in fi]
        e0 = [pi_e[~r] if r < 0 else cond[r, 0] for r in fi]
        e1 = [pi_e[~r] if r < 0 else cond[r, 1] for r in fi]
        c0, c1 = conditional_flips(nl.cells[n], ps, e0, e1)
        if n in injected:
            c0, c1 = combine_flips(c0, injected[n]), combine_flips(c1, injected[n])
        cond[n] = c0, c1
        err[n] = _mix(signal_probs[n], c0, c1)
    po = np.array([pi_e[~r] if r < 0 else err[r] for r in nl.po_drivers])
    return Propagation(err, po)


class IncrementalPropagator:
    """Error propagation over a fixed reference netlist with a mutable injection map.

    Signal probabilities are fixed, so each node's pattern weights are folded
    into its flip tables once; re-evaluating a candidate injection only touches
    the transitive fanout of the injected node.  ``errors`` holds the mixed
    per-node error and is updated in place.
    """

    def __init__(self, nl: Netlist, signal_probs: np.ndarray, pi_probs=None):
        self.nl = nl
        self.probs = signal_probs
        pi_p = _pi_vector(nl, pi_probs, 0.5)
        self.tables = []
        for n in range(nl.num_nodes):
            cell = nl.cells[n]
            ps = [pi_p[~r] if r < 0 else signal_probs[r] for r in nl.fanins[n]]
            pv = pattern_weights(ps)[:, None]
            p1 = float(pv[:, 0] @ _table_bits(cell.truth_table, cell.num_inputs))
            t0, t1 = _split_tables(cell.truth_table, cell.num_inputs)
            self.tables.append((pv * t0 / (1.0 - p1) if p1 < 1 else 0 * t0,
                                pv * t1 / p1 if p1 > 0 else 0 * t1))
        self.eps_g = [c.intrinsic_error for c in nl.cells]
        self.pos = {n: i for i, n in enumerate(nl.topo_order())}
        self.fanouts = [list(nl.fanouts(n)) for n in range(nl.num_nodes)]
        self.po_nodes: dict[int, list[int]] = {}
        for i, r in enumerate(nl.po_drivers):
            if r >= 0:
                self.po_nodes.setdefault(r, []).append(i)
        self.injected: dict[int, float] = {}
        self.cond: list[tuple[float, float]] = [(0.0, 0.0)] * nl.num_nodes
        self.errors = np.zeros(nl.num_nodes)
        for n in nl.topo_order():
            self.cond[n] = self._node_error(n, self.cond, None)
            self.errors[n] = self._scalar(n, self.cond[n])
        self.po_errors = self._po_vector(self.errors)

    def _node_error(self, n: int, cond, inj: float | None) -> tuple[float, float]:
        fi = self.nl.fanins[n]
        g = self.eps_g[n]
        c0 = c1 = g
        if fi:
            pairs = [(0.0, 0.0) if r < 0 else cond[r] for r in fi]
            if any(a or b for a, b in pairs):
                w = _flip_weights([a for a, _ in pairs], [b for _, b in pairs])
                t0, t1 = self.tables[n]
                c0 = combine_flips(g, float((t0 * w).sum()))
                c1 = combine_flips(g, float((t1 * w).sum()))
        if inj is None:
            inj = self.injected.get(n)
        if inj:
            c0, c1 = combine_flips(c0, inj), combine_flips(c1, inj)
        return min(1.0, max(0.0, c0)), min(1.0, max(0.0, c1))

    def _scalar(self, n: int, pair) -> float:
        return _mix(self.probs[n], *pair)

    def _po_vector(self, err) -> np.ndarray:
        return np.array([0.0 if r < 0 else err[r] for r in self.nl.po_drivers])

    @property
    def max_error(self) -> float:
        return float(self.po_errors.max()) if len(self.po_errors) else 0.0

    def _cone(self, node: int) -> list[int]:
        seen = {node}
        stack = [node]
        while stack:
            n = stack.pop()
            for m in self.fanouts[n]:
                if m not in seen:
                    seen.add(m)
                    stack.append(m)
        return sorted(seen, key=self.pos.__getitem__)

    def _trial(self, node: int, local_error: float) -> dict[int, tuple[float, float]]:
        changed: dict[int, tuple[float, float]] = {}
        view = _Overlay(self.cond, changed)
        for n in self._cone(node):
            if n != node and not any(r in changed for r in self.nl.fanins[n]):
                continue
            c = self._node_error(n, view, local_error if n == node else None)
            if c != self.cond[n]:
                changed[n] = c
        return changed

    def trial(self, node: int, local_error: float) -> tuple[dict[int, float], np.ndarray]:
        """Errors that change if ``node`` carried ``local_error``; nothing is committed."""
        changed = {n: self._scalar(n, c) for n, c in self._trial(node, local_error).items()}
        po = self.po_errors.copy()
        for n, e in changed.items():
            for i in self.po_nodes.get(n, ()):
                po[i] = e
        return changed, po

    def predict(self, node: int, local_error: float) -> float:
        _, po = self.trial(node, local_error)
        return float(po.max()) if len(po) else 0.0

    def _window(self, node: int, local_error: float, nodes) -> dict[int, tuple[float, float]]:
        changed: dict[int, tuple[float, float]] = {}
        view = _Overlay(self.cond, changed)
        changed[node] = self._node_error(node, view, local_error)
        for n in sorted(nodes, key=self.pos.__getitem__):
            if n != node:
                changed[n] = self._node_error(n, view, None)
        return changed

    def window(self, node: int, local_error: float, nodes) -> dict[int, float]:
        """Errors with ``local_error`` at ``node``, propagated only through ``nodes``."""
        return {n: self._scalar(n, c) for n, c in self._window(node, local_error, nodes).items()}

    def _store(self, node: int, local_error: float, changed):
        if local_error:
            self.injected[node] = local_error
        else:
            self.injected.pop(node, None)
        for n, c in changed.items():
            self.cond[n] = c
            self.errors[n] = e = self._scalar(n, c)
            for i in self.po_nodes.get(n, ()):
                self.po_errors[i] = e

    def commit_local(self, node: int, local_error: float, nodes):
        """Commit an injection, refreshing errors inside ``nodes`` only."""
        self._store(node, local_error, self._window(node, local_error, nodes))

    def commit(self, node: int, local_error: float):
        self._store(node, local_error, self._trial(node, local_error))


class _Overlay:
    def __init__(self, base, changes):
        self.base = base
        self.changes = changes

    def __getitem__(self, i):
        v = self.changes.get(i)
        return self.base[i] if v is None else v


def _pi_vector(nl: Netlist, values, default: float) -> np.ndarray:
    if values is None:
        return np.full(len(nl.inputs), default)
    v = np.asarray(values, dtype=float)
    if v.shape != (len(nl.inputs),):
        raise ValueError(f"expected {len(nl.inputs)} per-input values, got shape {v.shape}")
    return v


# -- Monte-Carlo fault injection -----------------------------------------------

MC_CHUNK = 1 << 18


def monte_carlo_error(nl: Netlist, injected: Mapping[int, float] | None = None, samples: int = 1_000_000,
                      seed: int = 0, pi_probs=None, pi_errors=None, jobs: int = 1) -> np.ndarray:
    """Observed per-output disagreement between faulty and fault-free simulation.

    Every node flips independently with its intrinsic error and, separately, with
    its injected probability.  Samples are split into fixed-size chunks with
    seeds spawned from ``seed``, so the result does not depend on ``jobs``.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    injected = dict(injected or {})
    pi_p = _pi_vector(nl, pi_probs, 0.5)
    pi_e = _pi_vector(nl, pi_errors, 0.0)
    sizes = [MC_CHUNK] * (samples // MC_CHUNK)
    if samples % MC_CHUNK:
        sizes.append(samples % MC_CHUNK)
    seqs = np.random.SeedSequence(seed).spawn(len(sizes))
    args = [(nl, injected, pi_p, pi_e, size, s) for size, s in zip(sizes, seqs)]
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            counts = list(ex.map(_mc_chunk_args, args))
    else:
        counts = [_mc_chunk(*a) for a in args]
    return np.sum(counts, axis=0) / samples


def _mc_chunk_args(a):
    return _mc_chunk(*a)


BERNOULLI_BITS = 32


def bernoulli_words(rng, p: float, nwords: int) -> np.ndarray:
    """Packed independent Bernoulli(p) bits, p quantized to 2**-32.

    Bit-serial comparison of a uniform random fraction against the binary
    digits of p, least significant digit first.
    """
    q = int(round(float(p) * (1 << BERNOULLI_BITS)))
    if q <= 0:
        return np.zeros(nwords, dtype=np.uint64)
    if q >= 1 << BERNOULLI_BITS:
        return np.full(nwords, _ONES, dtype=np.uint64)
    low = (q & -q).bit_length() - 1
    rand = rng.bit_generator.random_raw((BERNOULLI_BITS - low, nwords))
    x = rand[0].copy()
    for i, r in zip(range(low + 1, BERNOULLI_BITS), rand[1:]):
        if (q >> i) & 1:
            x |= r
        else:
            x &= r
    return x


def _tail_mask(size: int, nwords: int) -> np.ndarray:
    mask = np.full(nwords, _ONES, dtype=np.uint64)
    if size % 64:
        mask[-1] = np.uint64((1 << (size % 64)) - 1)
    return mask


def _popcount(words, mask) -> int:
    return int(np.bitwise_count(words & mask).sum())


def _mc_chunk(nl: Netlist, injected, pi_p, pi_e, size: int, seq) -> np.ndarray:
    rng = np.random.default_rng(seq)
    nw = (size + 63) // 64
    good_pi, bad_pi = [], []
    for p, e in zip(pi_p, pi_e):
        g = bernoulli_words(rng, p, nw)
        good_pi.append(g)
        bad_pi.append(g ^ bernoulli_words(rng, e, nw) if e > 0 else g)
    good: list = [None] * nl.num_nodes
    bad: list = [None] * nl.num_nodes
    for n in nl.topo_order():
        cell = nl.cells[n]
        fi = nl.fanins[n]
        good[n] = eval_cell_words(cell.truth_table, cell.num_inputs,
                                  [good_pi[~r] if r < 0 else good[r] for r in fi], nw)
        b = eval_cell_words(cell.truth_table, cell.num_inputs,
                            [bad_pi[~r] if r < 0 else bad[r] for r in fi], nw)
        if cell.intrinsic_error > 0:
            b = b ^ bernoulli_words(rng, cell.intrinsic_error, nw)
        inj = injected.get(n, 0.0)
        if inj > 0:
            b = b ^ bernoulli_words(rng, inj, nw)
        bad[n] = b
    mask = _tail_mask(size, nw)
    counts = []
    for r in nl.po_drivers:
        g = good_pi[~r] if r < 0 else good[r]
        b = bad_pi[~r] if r < 0 else bad[r]
        counts.append(_popcount(g ^ b, mask))
    return np.array(counts, dtype=np.int64)


def simulate_words(nl: Netlist, pi_words: list, nwords: int) -> list:
    """Packed output words of ``nl`` for packed input words."""
    vals: list = [None] * nl.num_nodes
    get = lambda r: pi_words[~r] if r < 0 else vals[r]
    for n in nl.topo_order():
        cell = nl.cells[n]
        vals[n] = eval_cell_words(cell.truth_table, cell.num_inputs, [get(r) for r in nl.fanins[n]], nwords)
    return [get(r) for r in nl.po_drivers]


def sampled_error_rate(exact: Netlist, approx: Netlist, samples: int = 1_000_000, seed: int = 0) -> np.ndarray:
    """Per-output disagreement of two netlists under uniform random inputs."""
    if len(exact.inputs) != len(approx.inputs) or len(exact.outputs) != len(approx.outputs):
        raise NetlistError("netlists have different input/output interfaces")
    if samples < 1:
        raise ValueError("samples must be >= 1")
    sizes = [MC_CHUNK] * (samples // MC_CHUNK) + ([samples % MC_CHUNK] if samples % MC_CHUNK else [])
    counts = np.zeros(len(exact.outputs), dtype=np.int64)
    for size, seq in zip(sizes, np.random.SeedSequence(seed).spawn(len(sizes))):
        rng = np.random.default_rng(seq)
        nw = (size + 63) // 64
        pis = [rng.bit_generator.random_raw(nw) for _ in exact.inputs]
        mask = _tail_mask(size, nw)
        a = simulate_words(exact, pis, nw)
        b = simulate_words(approx, pis, nw)
        counts += [_popcount(x ^ y, mask) for x, y in zip(a, b)]
    return counts / samples
