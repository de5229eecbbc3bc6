"""Technology libraries and technology-mapped gate-level netlists.

A netlist is a DAG of cell instances.  Fanin references are plain ints:
``ref >= 0`` is a node id, ``ref < 0`` is primary input ``~ref``.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Iterable

MAX_ARITY = 6
PIN_NAMES = "ABCDEF"
OUT_PIN = "Y"
REQUIRED_CELLS = ("CONST0", "CONST1", "BUF", "INV")


class LibraryError(ValueError):
    pass


class NetlistError(ValueError):
    pass


def is_pi(ref: int) -> bool:
    return ref < 0


def pi_ref(index: int) -> int:
    return ~index


def pi_index(ref: int) -> int:
    return ~ref


@dataclass(frozen=True)
class Cell:
    name: str
    num_inputs: int
    truth_table: int
    area: float
    input_caps: tuple[float, ...]
    output_cap: float
    intrinsic_error: float = 0.0
    delay_intrinsic: float = 0.0
    delay_slope: float = 0.0

    def __post_init__(self):
        if not 0 <= self.num_inputs <= MAX_ARITY:
            raise LibraryError(f"{self.name}: arity {self.num_inputs} outside 0..{MAX_ARITY}")
        if len(self.input_caps) != self.num_inputs:
            raise LibraryError(f"{self.name}: {len(self.input_caps)} input caps for {self.num_inputs} inputs")
        if self.truth_table >> (1 << self.num_inputs):
            raise LibraryError(f"{self.name}: truth table wider than 2^{self.num_inputs} bits")
        if not 0.0 <= self.intrinsic_error <= 1.0:
            raise LibraryError(f"{self.name}: intrinsic error {self.intrinsic_error} outside [0,1]")

    @property
    def num_patterns(self) -> int:
        return 1 << self.num_inputs

    @property
    def total_input_cap(self) -> float:
        return sum(self.input_caps)

    def output(self, pattern: int) -> int:
        return (self.truth_table >> pattern) & 1

    def stage_delay(self, load: float) -> float:
        return self.delay_intrinsic + self.delay_slope * load


class TechLibrary:
    """Ordered collection of cells, indexed by name."""

    def __init__(self, cells: Iterable[Cell], require_basic: bool = True):
        self.cells: list[Cell] = list(cells)
        self.by_name: dict[str, Cell] = {}
        for c in self.cells:
            if c.name in self.by_name:
                raise LibraryError(f"duplicate cell name {c.name!r}")
            self.by_name[c.name] = c
        if require_basic:
            missing = [n for n in REQUIRED_CELLS if n not in self.by_name]
            if missing:
                raise LibraryError(f"required cell absent: {', '.join(missing)}")
            for n, arity in zip(REQUIRED_CELLS, (0, 0, 1, 1)):
                if self.by_name[n].num_inputs != arity:
                    raise LibraryError(f"required cell {n} must have {arity} inputs")
        self.index = {c.name: i for i, c in enumerate(self.cells)}
        max_in = max((max(c.input_caps, default=0.0) for c in self.cells), default=0.0)
        max_out = max((c.output_cap for c in self.cells), default=0.0)
        # normalizer for load features: largest driver plus 32 of the largest pins
        self.max_load = max_out + 32 * max_in

    def __len__(self):
        return len(self.cells)

    def __iter__(self):
        return iter(self.cells)

    def __getitem__(self, name: str) -> Cell:
        return self.by_name[name]

    def __contains__(self, name):
        return name in self.by_name

    def with_arity(self, n: int) -> list[Cell]:
        return [c for c in self.cells if c.num_inputs == n]


def parse_library(text: str) -> TechLibrary:
    """Parse the line-oriented library format.

    ``GATE <name> <area> <n> <tt_hex> <eps_g> <out_cap> <d0> <slope> IN <cap_A> ...``
    """
    cells = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            if tok[0] != "GATE" or len(tok) < 10 or tok[9] != "IN":
                raise ValueError("expected 'GATE <name> <area> <n> <tt> <eps> <out_cap> <d0> <slope> IN <caps...>'")
            name = tok[1]
            area, n = float(tok[2]), int(tok[3])
            tt = int(tok[4], 16)
            eps, out_cap, d0, slope = map(float, tok[5:9])
            caps = tuple(float(x) for x in tok[10:])
        except (ValueError, IndexError) as exc:
            raise LibraryError(f"line {lineno}: malformed gate line: {exc}") from None
        if len(caps) != n:
            raise LibraryError(f"line {lineno}: {name} has {len(caps)} input caps, expected {n}")
        if n > MAX_ARITY or n < 0:
            raise LibraryError(f"line {lineno}: {name} arity {n} outside 0..{MAX_ARITY}")
        if tt >> (1 << n):
            raise LibraryError(f"line {lineno}: {name} truth table {tok[4]} wider than 2^{n} bits")
        if min(area, out_cap, d0, slope, *caps) < 0:
            raise LibraryError(f"line {lineno}: {name} has a negative area/cap/delay value")
        try:
            cells.append(Cell(name, n, tt, area, caps, out_cap, eps, d0, slope))
        except LibraryError as exc:
            raise LibraryError(f"line {lineno}: {exc}") from None
    return TechLibrary(cells)


def format_library(lib: TechLibrary) -> str:
    lines = []
    for c in lib.cells:
        width = max(1, ((1 << c.num_inputs) + 3) // 4)
        caps = " ".join(f"{x:g}" for x in c.input_caps)
        lines.append(
            f"GATE {c.name} {c.area:g} {c.num_inputs} {c.truth_table:0{width}X} {c.intrinsic_error:g} "
            f"{c.output_cap:g} {c.delay_intrinsic:g} {c.delay_slope:g} IN {caps}".rstrip()
        )
    return "\n".join(lines) + "\n"


@dataclass
class Netlist:
    name: str
    inputs: list[str]
    outputs: list[str]
    cells: list[Cell] = field(default_factory=list)
    fanins: list[list[int]] = field(default_factory=list)
    out_nets: list[str] = field(default_factory=list)
    po_drivers: list[int] = field(default_factory=list)

    def __post_init__(self):
        self._topo: list[int] | None = None
        self._levels: list[int] | None = None
        self._fanouts: list[list[int]] | None = None

    @property
    def num_nodes(self) -> int:
        return len(self.cells)

    def __len__(self):
        return len(self.cells)

    def add_node(self, cell: Cell, fanins: list[int], net: str) -> int:
        if len(fanins) != cell.num_inputs:
            raise NetlistError(f"{cell.name} needs {cell.num_inputs} fanins, got {len(fanins)}")
        self.cells.append(cell)
        self.fanins.append(list(fanins))
        self.out_nets.append(net)
        self._invalidate()
        return len(self.cells) - 1

    def _invalidate(self):
        self._topo = self._levels = self._fanouts = None

    def copy(self) -> Netlist:
        nl = Netlist(self.name, list(self.inputs), list(self.outputs), list(self.cells),
                     [list(f) for f in self.fanins], list(self.out_nets), list(self.po_drivers))
        nl._topo = self._topo
        nl._levels = self._levels
        return nl

    def replace(self, node: int, cell: Cell, fanins: list[int] | None = None) -> tuple[Cell, list[int]]:
        """Swap the cell at ``node``; returns the previous (cell, fanins) for undo."""
        prev = (self.cells[node], self.fanins[node])
        new_fanins = list(prev[1]) if fanins is None else list(fanins)
        if len(new_fanins) != cell.num_inputs:
            raise NetlistError(f"{cell.name} needs {cell.num_inputs} fanins, got {len(new_fanins)}")
        self.cells[node] = cell
        if new_fanins != prev[1]:
            if self._fanouts is not None:
                for r in set(prev[1]):
                    if r >= 0:
                        self._fanouts[r].remove(node)
                for r in sorted(set(new_fanins)):
                    if r >= 0:
                        self._fanouts[r].append(node)
                        self._fanouts[r].sort()
            # dropping edges keeps the old order valid
            if not set(new_fanins) <= set(prev[1]):
                self._topo = None
            self._levels = None
            self.fanins[node] = new_fanins
        return prev

    # -- structure -------------------------------------------------------

    def fanouts(self, node: int) -> list[int]:
        if self._fanouts is None:
            fo: list[list[int]] = [[] for _ in self.cells]
            for n, fi in enumerate(self.fanins):
                for r in sorted(set(fi)):
                    if r >= 0:
                        fo[r].append(n)
            self._fanouts = fo
        return self._fanouts[node]

    def pi_fanouts(self) -> list[list[int]]:
        fo: list[list[int]] = [[] for _ in self.inputs]
        for n, fi in enumerate(self.fanins):
            for r in sorted(set(fi)):
                if r < 0:
                    fo[~r].append(n)
        return fo

    def topo_order(self) -> list[int]:
        if self._topo is None:
            self._topo = topo_order(self)
        return self._topo

    @property
    def levels(self) -> list[int]:
        if self._levels is None:
            lv = [0] * len(self.cells)
            for n in self.topo_order():
                lv[n] = 1 + max((lv[r] for r in self.fanins[n] if r >= 0), default=0)
            self._levels = lv
        return self._levels

    @property
    def depth(self) -> int:
        return max(self.levels, default=0)

    def ref_name(self, ref: int) -> str:
        return self.inputs[~ref] if ref < 0 else self.out_nets[ref]

    def signature(self) -> tuple:
        """Hashable structural identity (cells by name, connectivity, interface)."""
        return (tuple(self.inputs), tuple(self.outputs), tuple(self.po_drivers),
                tuple(c.name for c in self.cells), tuple(tuple(f) for f in self.fanins))


def topo_order(nl: Netlist) -> list[int]:
    """Kahn's algorithm with smallest-id-first tie breaking."""
    indeg = [0] * nl.num_nodes
    fo: list[list[int]] = [[] for _ in range(nl.num_nodes)]
    for n, fi in enumerate(nl.fanins):
        for r in fi:
            if r >= 0:
                indeg[n] += 1
                fo[r].append(n)
    heap = [n for n in range(nl.num_nodes) if indeg[n] == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        n = heapq.heappop(heap)
        order.append(n)
        for m in fo[n]:
            indeg[m] -= 1
            if indeg[m] == 0:
                heapq.heappush(heap, m)
    if len(order) != nl.num_nodes:
        stuck = sorted(set(range(nl.num_nodes)) - set(order))
        names = ", ".join(nl.out_nets[n] for n in stuck[:5])
        raise NetlistError(f"combinational cycle detected through {names}")
    return order


def cone(nl: Netlist, node: int, direction: str = "fanin", depth_limit: int = 2,
         max_nodes: int | None = None) -> list[int]:
    """Breadth-first cone around ``node`` (excluded), nearest first, ties by id.

    Primary inputs are not nodes and never appear.  ``depth_limit < 0`` means unbounded.
    """
    if direction not in ("fanin", "fanout"):
        raise ValueError(f"direction must be 'fanin' or 'fanout', not {direction!r}")
    seen = {node}
    out: list[int] = []
    frontier = [node]
    level = 0
    while frontier and (depth_limit < 0 or level < depth_limit):
        nxt = set()
        for n in frontier:
            nbrs = nl.fanins[n] if direction == "fanin" else nl.fanouts(n)
            for m in nbrs:
                if m >= 0 and m not in seen:
                    nxt.add(m)
        frontier = sorted(nxt)
        seen.update(frontier)
        out.extend(frontier)
        if max_nodes is not None and len(out) >= max_nodes:
            return out[:max_nodes]
        level += 1
    return out


# -- BLIF ---------------------------------------------------------------

def _logical_lines(text: str):
    buf, start = [], None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].rstrip()
        if start is None:
            start = lineno
        if line.endswith("\\"):
            buf.append(line[:-1])
            continue
        buf.append(line)
        joined = " ".join(buf).strip()
        if joined:
            yield start, joined.split()
        buf, start = [], None
    if buf and " ".join(buf).strip():
        yield start, " ".join(buf).split()


def parse_blif(text: str, lib: TechLibrary) -> Netlist:
    name = None
    inputs: list[str] = []
    outputs: list[str] = []
    gates = []  # (lineno, cell, {pin: net})
    for lineno, tok in _logical_lines(text):
        kw = tok[0]
        if kw == ".model":
            name = tok[1] if len(tok) > 1 else "top"
        elif kw == ".inputs":
            inputs.extend(tok[1:])
        elif kw == ".outputs":
            outputs.extend(tok[1:])
        elif kw == ".gate":
            if len(tok) < 2:
                raise NetlistError(f"line {lineno}: .gate without a cell name")
            if tok[1] not in lib:
                raise NetlistError(f"line {lineno}: unknown cell {tok[1]!r}")
            pins = {}
            for a in tok[2:]:
                if "=" not in a:
                    raise NetlistError(f"line {lineno}: malformed pin binding {a!r}")
                p, net = a.split("=", 1)
                pins[p] = net
            gates.append((lineno, lib[tok[1]], pins))
        elif kw == ".end":
            break
        elif kw in (".names", ".latch", ".subckt", ".mlatch"):
            raise NetlistError(f"line {lineno}: {kw} is not supported (mapped .gate netlists only)")
        else:
            raise NetlistError(f"line {lineno}: unexpected {kw!r}")
    if len(set(inputs)) != len(inputs):
        raise NetlistError("duplicate primary input")
    if len(set(outputs)) != len(outputs):
        raise NetlistError("duplicate primary output")

    driver: dict[str, int] = {net: pi_ref(i) for i, net in enumerate(inputs)}
    for nid, (lineno, cell, pins) in enumerate(gates):
        out = pins.get(OUT_PIN)
        if out is None:
            raise NetlistError(f"line {lineno}: {cell.name} has no {OUT_PIN}= binding")
        if out in driver:
            raise NetlistError(f"line {lineno}: net {out!r} has multiple drivers")
        driver[out] = nid

    nl = Netlist(name or "top", inputs, outputs)
    for lineno, cell, pins in gates:
        expected = set(PIN_NAMES[:cell.num_inputs]) | {OUT_PIN}
        if set(pins) != expected:
            raise NetlistError(f"line {lineno}: {cell.name} pins {sorted(pins)} != {sorted(expected)}")
        fanins = []
        for p in PIN_NAMES[:cell.num_inputs]:
            net = pins[p]
            if net not in driver:
                raise NetlistError(f"line {lineno}: net {net!r} is used but never driven (undriven net)")
            fanins.append(driver[net])
        nl.cells.append(cell)
        nl.fanins.append(fanins)
        nl.out_nets.append(pins[OUT_PIN])
    for po in outputs:
        if po not in driver:
            raise NetlistError(f"primary output {po!r} is not driven")
        nl.po_drivers.append(driver[po])
    nl.topo_order()  # raises on cycles
    return nl


def export_blif(nl: Netlist) -> str:
    lines = [f".model {nl.name}"]
    lines.append(".inputs " + " ".join(nl.inputs) if nl.inputs else ".inputs")
    lines.append(".outputs " + " ".join(nl.outputs) if nl.outputs else ".outputs")
    for n in nl.topo_order():
        cell = nl.cells[n]
        binds = [f"{PIN_NAMES[i]}={nl.ref_name(r)}" for i, r in enumerate(nl.fanins[n])]
        binds.append(f"{OUT_PIN}={nl.out_nets[n]}")
        lines.append(f".gate {cell.name} " + " ".join(binds))
    lines.append(".end")
    return "\n".join(lines) + "\n"


def read_library(path) -> TechLibrary:
    with open(path) as f:
        return parse_library(f.read())


def read_blif(path, lib: TechLibrary) -> Netlist:
    with open(path) as f:
        return parse_blif(f.read(), lib)

