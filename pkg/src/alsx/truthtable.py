"""Exact Boolean semantics: gate tables, exhaustive simulation, Hamming errors.

Whole-circuit tables are packed 64 patterns per ``uint64`` word; bit ``i`` of
the table is the output for the input pattern whose binary encoding is ``i``
(first primary input = bit 0).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .netlist import PIN_NAMES, Cell, Netlist, NetlistError

DEFAULT_PI_CAP = 20

_ONES = np.uint64(0xFFFFFFFFFFFFFFFF)
# within-word patterns for variables 0..5
_VAR_WORDS = [np.uint64(sum(1 << b for b in range(64) if (b >> v) & 1)) for v in range(6)]


class IncompatibleReplacement(ValueError):
    pass


@dataclass(frozen=True)
class TruthTable:
    num_vars: int
    words: np.ndarray

    @classmethod
    def from_int(cls, num_vars: int, value: int) -> TruthTable:
        n = 1 << num_vars
        nwords = max(1, n // 64)
        words = np.array([(value >> (64 * w)) & 0xFFFFFFFFFFFFFFFF for w in range(nwords)], dtype=np.uint64)
        return cls(num_vars, words & _mask(num_vars))

    @classmethod
    def variable(cls, num_vars: int, var: int) -> TruthTable:
        return cls(num_vars, _var_words(num_vars, var))

    @property
    def num_bits(self) -> int:
        return 1 << self.num_vars

    def bit(self, pattern: int) -> int:
        return int(self.words[pattern // 64] >> np.uint64(pattern % 64)) & 1

    def to_int(self) -> int:
        return sum(int(w) << (64 * i) for i, w in enumerate(self.words))

    def count_ones(self) -> int:
        return int(np.bitwise_count(self.words).sum())

    def hamming(self, other: TruthTable) -> int:
        if other.num_vars != self.num_vars:
            raise ValueError("tables over different variable counts")
        return int(np.bitwise_count(self.words ^ other.words).sum())

    def distance(self, other: TruthTable) -> float:
        """Normalized Hamming distance."""
        return self.hamming(other) / self.num_bits

    def __eq__(self, other):
        return (isinstance(other, TruthTable) and self.num_vars == other.num_vars
                and bool(np.array_equal(self.words, other.words)))

    def __hash__(self):
        return hash((self.num_vars, self.words.tobytes()))


def _mask(num_vars: int) -> np.uint64:
    n = 1 << num_vars
    return _ONES if n >= 64 else np.uint64((1 << n) - 1)


def _var_words(num_vars: int, var: int) -> np.ndarray:
    nwords = max(1, (1 << num_vars) // 64)
    if var < 6:
        return np.full(nwords, _VAR_WORDS[var], dtype=np.uint64) & _mask(num_vars)
    idx = np.arange(nwords)
    return np.where((idx >> (var - 6)) & 1, _ONES, np.uint64(0)).astype(np.uint64)


def eval_cell_words(cell_table: int, arity: int, ins: list[np.ndarray], nwords: int) -> np.ndarray:
    """Bit-parallel evaluation of a cell as a sum of minterms."""
    npat = 1 << arity
    ones = bin(cell_table).count("1")
    if ones == 0:
        return np.zeros(nwords, dtype=np.uint64)
    if ones == npat:
        return np.full(nwords, _ONES, dtype=np.uint64)
    # pick the cheaper polarity
    invert = ones > npat // 2
    target = 0 if invert else 1
    out = np.zeros(nwords, dtype=np.uint64)
    for p in range(npat):
        if ((cell_table >> p) & 1) != target:
            continue
        term = np.full(nwords, _ONES, dtype=np.uint64)
        for i in range(arity):
            term &= ins[i] if (p >> i) & 1 else ~ins[i]
        out |= term
    return ~out if invert else out


def pattern_weights(probs) -> np.ndarray:
    """Probability of each input pattern for independent inputs with P(x_i=1)=probs[i]."""
    w = np.ones(1)
    for p in probs:
        w = np.concatenate((w * (1.0 - p), w * p))
    return w


def candidate_table(old: Cell, new: Cell, passthrough: int | None = None) -> int:
    """The replacement's function expressed over ``old``'s inputs.

    Same-arity cells map directly.  Removal forms: a constant cell, or ``BUF``-like
    one-input cell wired to fanin ``passthrough``.
    """
    n = old.num_inputs
    if passthrough is not None:
        if new.num_inputs != 1 or not 0 <= passthrough < n:
            raise IncompatibleReplacement(f"{new.name} cannot pass through pin {passthrough} of {old.name}")
        return sum(new.output((p >> passthrough) & 1) << p for p in range(1 << n))
    if new.num_inputs == n:
        return new.truth_table
    if new.num_inputs == 0:
        return ((1 << (1 << n)) - 1) if new.truth_table & 1 else 0
    raise IncompatibleReplacement(f"{new.name} ({new.num_inputs} inputs) cannot replace {old.name} ({n} inputs)")


def local_replacement_error(old: Cell, new: Cell, passthrough: int | None = None,
                            input_probs=None) -> float:
    """Fraction of input patterns on which ``new`` disagrees with ``old``.

    With ``input_probs`` the patterns are weighted by their probability under
    independent fanins instead of uniformly.
    """
    diff = old.truth_table ^ candidate_table(old, new, passthrough)
    npat = old.num_patterns
    if input_probs is None:
        return bin(diff).count("1") / npat
    w = pattern_weights(input_probs)
    mask = np.array([(diff >> p) & 1 for p in range(npat)], dtype=bool)
    return float(min(1.0, max(0.0, w[mask].sum())))


def simulate_node_tables(nl: Netlist, pi_cap: int = DEFAULT_PI_CAP) -> list[np.ndarray]:
    npi = len(nl.inputs)
    if npi > pi_cap:
        raise NetlistError(f"{npi} primary inputs exceed the exhaustive-simulation cap of {pi_cap}")
    nwords = max(1, (1 << npi) // 64)
    pis = [_var_words(npi, v) for v in range(npi)]
    vals: list[np.ndarray | None] = [None] * nl.num_nodes
    mask = _mask(npi)
    for n in nl.topo_order():
        cell = nl.cells[n]
        ins = [pis[~r] if r < 0 else vals[r] for r in nl.fanins[n]]
        vals[n] = eval_cell_words(cell.truth_table, cell.num_inputs, ins, nwords) & mask
    return vals  # type: ignore[return-value]


def simulate_output_tables(nl: Netlist, pi_cap: int = DEFAULT_PI_CAP) -> list[TruthTable]:
    vals = simulate_node_tables(nl, pi_cap)
    npi = len(nl.inputs)
    out = []
    for r in nl.po_drivers:
        words = _var_words(npi, ~r) if r < 0 else vals[r]
        out.append(TruthTable(npi, words))
    return out


@dataclass
class ErrorRates:
    per_po: list[float]

    @property
    def max(self) -> float:
        return max(self.per_po, default=0.0)

    @property
    def mean(self) -> float:
        return sum(self.per_po) / len(self.per_po) if self.per_po else 0.0


def exact_error_rate(exact: Netlist, approx: Netlist, pi_cap: int = DEFAULT_PI_CAP) -> ErrorRates:
    if exact.inputs != approx.inputs or exact.outputs != approx.outputs:
        raise NetlistError("primary input/output interfaces differ")
    a = simulate_output_tables(exact, pi_cap)
    b = simulate_output_tables(approx, pi_cap)
    return ErrorRates([x.distance(y) for x, y in zip(a, b)])


class Candidate(NamedTuple):
    """A replacement for a node: ``cell`` on the node's own fanins, or a one-input
    cell wired to fanin ``passthrough`` (gate removal)."""

    cell: Cell
    passthrough: int | None = None

    def fanins(self, current: list[int]) -> list[int]:
        if self.passthrough is not None:
            return [current[self.passthrough]]
        if self.cell.num_inputs == 0:
            return []
        return list(current)

    @property
    def label(self) -> str:
        if self.passthrough is None:
            return self.cell.name
        return f"{self.cell.name}@{PIN_NAMES[self.passthrough]}"


def same_arity_candidates(lib, cell: Cell) -> list[Candidate]:
    return [Candidate(c) for c in lib.cells if c.num_inputs == cell.num_inputs]


def removal_candidates(lib, cell: Cell) -> list[Candidate]:
    """Constants and fanin pass-throughs; empty for cells that are already constants."""
    if cell.num_inputs == 0:
        return []
    out = [Candidate(lib["CONST0"]), Candidate(lib["CONST1"])]
    if cell.num_inputs >= 2:
        out.extend(Candidate(lib["BUF"], i) for i in range(cell.num_inputs))
    return out
