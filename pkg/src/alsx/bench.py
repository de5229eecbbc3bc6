"""Shipped synthetic library, a small mapped benchmark suite, and random netlists."""

from __future__ import annotations

from importlib import resources

import numpy as np

from .netlist import Netlist, TechLibrary, parse_library

DRIVE_SUFFIX = "_X2"


def default_library() -> TechLibrary:
    return parse_library(library_path().read_text())


def library_path():
    return resources.files("alsx") / "data" / "synthetic.lib"


class Builder:
    """Construct a mapped netlist gate by gate.

    ``gate`` takes base cell names; :meth:`build` upsizes nodes that drive three
    or more pins or a primary output to the ``_X2`` variant when one exists.
    """

    def __init__(self, lib: TechLibrary, name: str):
        self.lib = lib
        self.nl = Netlist(name, [], [])

    def pi(self, name: str) -> int:
        self.nl.inputs.append(name)
        return ~(len(self.nl.inputs) - 1)

    def pis(self, prefix: str, n: int) -> list[int]:
        return [self.pi(f"{prefix}{i}") for i in range(n)]

    def gate(self, kind: str, *ins: int) -> int:
        return self.nl.add_node(self.lib[kind], list(ins), f"n{self.nl.num_nodes}")

    def po(self, name: str, ref: int):
        nl = self.nl
        if ref < 0 or nl.out_nets[ref] in nl.outputs:
            ref = self.gate("BUF", ref)
        nl.out_nets[ref] = name
        nl.outputs.append(name)
        nl.po_drivers.append(ref)

    def build(self, upsize: bool = True) -> Netlist:
        nl = self.nl
        if upsize:
            pins = [0] * nl.num_nodes
            for fi in nl.fanins:
                for r in fi:
                    if r >= 0:
                        pins[r] += 1
            po = set(r for r in nl.po_drivers if r >= 0)
            for n, cell in enumerate(nl.cells):
                strong = cell.name + DRIVE_SUFFIX
                if (pins[n] >= 3 or n in po) and strong in self.lib:
                    nl.cells[n] = self.lib[strong]
        nl._invalidate()
        nl.topo_order()
        return nl

    # composite helpers

    def xor(self, a, b):
        return self.gate("XOR2", a, b)

    def full_adder(self, a, b, c, style: str = "maj"):
        if style == "maj":
            return self.gate("XOR3", a, b, c), self.gate("MAJ3", a, b, c)
        if style == "aoi":
            # sum via XOR pair, carry = !(!(a&b) & !(c&(a^b)))
            t = self.xor(a, b)
            s = self.xor(t, c)
            return s, self.gate("NAND2", self.gate("NAND2", a, b), self.gate("NAND2", t, c))
        t = self.xor(a, b)
        return self.xor(t, c), self.gate("OR2", self.gate("AND2", a, b), self.gate("AND2", t, c))

    def half_adder(self, a, b):
        return self.xor(a, b), self.gate("AND2", a, b)


def c17(lib):
    b = Builder(lib, "c17")
    g1, g2, g3, g6, g7 = (b.pi(n) for n in ("G1", "G2", "G3", "G6", "G7"))
    n10 = b.gate("NAND2", g1, g3)
    n11 = b.gate("NAND2", g3, g6)
    n16 = b.gate("NAND2", g2, n11)
    n19 = b.gate("NAND2", n11, g7)
    b.po("G22", b.gate("NAND2", n10, n16))
    b.po("G23", b.gate("NAND2", n16, n19))
    return b.build()


def ripple_adder(lib, width: int, style: str = "maj"):
    b = Builder(lib, f"rca{width}")
    a = b.pis("a", width)
    x = b.pis("b", width)
    c = b.pi("cin")
    for i in range(width):
        s, c = b.full_adder(a[i], x[i], c, style)
        b.po(f"s{i}", s)
    b.po("cout", c)
    return b.build()


def array_multiplier(lib, width: int):
    b = Builder(lib, f"mult{width}")
    a = b.pis("a", width)
    x = b.pis("b", width)
    pp = [[b.gate("AND2", a[i], x[j]) for i in range(width)] for j in range(width)]
    b.po("p0", pp[0][0])
    row = pp[0][1:]  # partial sum bits of weight 1..width-1
    carry_out = None
    for j in range(1, width):
        new_row = []
        c = None
        for i in range(width):
            top = row[i] if i < len(row) else carry_out
            bit = pp[j][i]
            if top is None:
                s = bit
            elif c is None:
                s, c = b.half_adder(top, bit)
            else:
                s, c = b.full_adder(top, bit, c, "aoi" if (i + j) % 2 else "maj")
            new_row.append(s)
        b.po(f"p{j}", new_row[0])
        row = new_row[1:]
        carry_out = c
    for i, s in enumerate(row):
        b.po(f"p{width + i}", s)
    if carry_out is not None:
        b.po(f"p{2 * width - 1}", carry_out)
    return b.build()


def comparator(lib, width: int):
    b = Builder(lib, f"cmp{width}")
    a = b.pis("a", width)
    x = b.pis("b", width)
    gt = lt = None
    eq = None
    for i in reversed(range(width)):
        nb = b.gate("INV", x[i])
        na = b.gate("INV", a[i])
        g = b.gate("AND2", a[i], nb)
        l = b.gate("AND2", na, x[i])
        e = b.gate("XNOR2", a[i], x[i])
        if eq is None:
            gt, lt, eq = g, l, e
        else:
            gt = b.gate("OR2", gt, b.gate("AND2", eq, g))
            lt = b.gate("OR2", lt, b.gate("AND2", eq, l))
            eq = b.gate("AND2", eq, e)
    b.po("gt", gt)
    b.po("eq", eq)
    b.po("lt", lt)
    return b.build()


def mux_tree(lib, sel_bits: int):
    b = Builder(lib, f"mux{1 << sel_bits}")
    d = b.pis("d", 1 << sel_bits)
    s = b.pis("s", sel_bits)
    level = d
    for k in range(sel_bits):
        level = [b.gate("MUX2", level[i], level[i + 1], s[k]) for i in range(0, len(level), 2)]
    b.po("y", level[0])
    return b.build()


def decoder(lib, bits: int):
    b = Builder(lib, f"dec{bits}")
    a = b.pis("a", bits)
    en = b.pi("en")
    inv = [b.gate("INV", x) for x in a]
    for k in range(1 << bits):
        lits = [a[i] if (k >> i) & 1 else inv[i] for i in range(bits)] + [en]
        while len(lits) > 1:
            take = lits[:4] if len(lits) >= 4 else lits[:len(lits)]
            kind = {2: "AND2", 3: "AND3", 4: "AND4"}[len(take)]
            lits = [b.gate(kind, *take)] + lits[len(take):]
        b.po(f"y{k}", lits[0])
    return b.build()


def parity(lib, width: int):
    b = Builder(lib, f"parity{width}")
    level = b.pis("x", width)
    while len(level) > 1:
        nxt = []
        for i in range(0, len(level) - 1, 2):
            nxt.append(b.xor(level[i], level[i + 1]))
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    b.po("p", level[0])
    return b.build()


def priority_encoder(lib, width: int = 8):
    b = Builder(lib, f"prio{width}")
    r = b.pis("r", width)
    bits = (width - 1).bit_length()
    # grant[i] = r[i] & !r[j] for all j > i
    higher = None
    grants = [None] * width
    for i in reversed(range(width)):
        if higher is None:
            grants[i] = r[i]
            higher = r[i]
        else:
            grants[i] = b.gate("AND2", r[i], b.gate("INV", higher))
            higher = b.gate("OR2", higher, r[i])
    for k in range(bits):
        terms = [grants[i] for i in range(width) if (i >> k) & 1]
        while len(terms) > 1:
            take = terms[:4]
            kind = {2: "OR2", 3: "OR3", 4: "OR4"}[len(take)]
            terms = terms[len(take):] + [b.gate(kind, *take)]
        b.po(f"y{k}", terms[0])
    b.po("valid", higher)
    return b.build()


def alu(lib, width: int = 4):
    """add / and / or / xor selected by two op bits."""
    b = Builder(lib, f"alu{width}")
    a = b.pis("a", width)
    x = b.pis("b", width)
    op = b.pis("op", 2)
    c = b.gate("CONST0")
    for i in range(width):
        s, c = b.full_adder(a[i], x[i], c, "aoi")
        and_ = b.gate("AND2", a[i], x[i])
        or_ = b.gate("OR2", a[i], x[i])
        xor_ = b.gate("XOR2", a[i], x[i])
        lo = b.gate("MUX2", s, and_, op[0])
        hi = b.gate("MUX2", or_, xor_, op[0])
        b.po(f"y{i}", b.gate("MUX2", lo, hi, op[1]))
    b.po("cout", b.gate("AND2", c, b.gate("NOR2", op[0], op[1])))
    return b.build()


def benchmark_suite(lib: TechLibrary | None = None) -> list[Netlist]:
    """Small combinational circuits, all with at most 16 primary inputs."""
    lib = lib or default_library()
    return [
        c17(lib),
        ripple_adder(lib, 4, "aoi"),
        ripple_adder(lib, 6, "maj"),
        array_multiplier(lib, 3),
        array_multiplier(lib, 4),
        comparator(lib, 4),
        mux_tree(lib, 3),
        decoder(lib, 3),
        parity(lib, 9),
        priority_encoder(lib, 8),
        alu(lib, 3),
    ]


def training_suite(lib: TechLibrary | None = None) -> list[Netlist]:
    """Circuits for predictor training, disjoint in structure from :func:`benchmark_suite`."""
    lib = lib or default_library()
    return [
        ripple_adder(lib, 8, "plain"),
        array_multiplier(lib, 5),
        comparator(lib, 6),
        mux_tree(lib, 4),
        decoder(lib, 4),
        priority_encoder(lib, 16),
        alu(lib, 6),
        random_netlist(lib, 200, 16, 8, seed=11),
    ]


# -- random netlists -------------------------------------------------------------

_LOGIC_CELLS = ("INV", "BUF", "NAND2", "NOR2", "AND2", "OR2", "XOR2", "XNOR2",
                "NAND3", "NOR3", "AND3", "OR3", "AOI21", "OAI21", "MUX2", "MAJ3",
                "NAND4", "AND4", "OR4", "AOI22")


def random_netlist(lib: TechLibrary, num_nodes: int, num_inputs: int, num_outputs: int,
                   seed: int = 0, window: int = 48, name: str | None = None) -> Netlist:
    """Random layered DAG; fanins are drawn from a sliding window of recent signals.

    Every sink node is a primary output, topped up with random nodes to
    ``num_outputs``.
    """
    rng = np.random.default_rng(seed)
    kinds = [lib[k] for k in _LOGIC_CELLS if k in lib]
    nl = Netlist(name or f"rand{num_nodes}_{seed}", [f"i{k}" for k in range(num_inputs)], [])
    used = np.zeros(num_nodes, dtype=bool)
    for n in range(num_nodes):
        cell = kinds[rng.integers(len(kinds))]
        lo = max(0, n - window)
        pool = [~k for k in range(num_inputs)] if n < window else []
        pool += list(range(lo, n))
        k = min(cell.num_inputs, len(pool))
        if k < cell.num_inputs:
            cell = lib["INV"] if k else lib["CONST0"]
            k = cell.num_inputs
        fanins = [int(pool[i]) for i in rng.choice(len(pool), size=k, replace=False)]
        for r in fanins:
            if r >= 0:
                used[r] = True
        nl.add_node(cell, fanins, f"n{n}")
    sinks = [n for n in range(num_nodes) if not used[n]]
    extra = [n for n in rng.permutation(num_nodes) if used[n]][:max(0, num_outputs - len(sinks))]
    for n in sorted(sinks + [int(e) for e in extra]):
        nl.outputs.append(nl.out_nets[n])
        nl.po_drivers.append(n)
    nl.topo_order()
    return nl


def random_tree(lib: TechLibrary, num_nodes: int, seed: int = 0, name: str | None = None,
                cells: tuple[str, ...] = _LOGIC_CELLS) -> Netlist:
    """Fanout-free circuit: every node and every primary input feeds exactly one pin."""
    rng = np.random.default_rng(seed)
    kinds = [lib[k] for k in cells if k in lib]
    # grow the tree breadth-first from the root, then emit in reverse so fanins precede users
    specs = []  # (cell, child slots) where slot is ('node', idx) or ('pi',)
    open_slots: list[tuple[int, int]] = []
    remaining = num_nodes
    specs.append([kinds[rng.integers(len(kinds))], []])
    remaining -= 1
    open_slots.extend((0, i) for i in range(specs[0][0].num_inputs))
    while open_slots:
        parent, _ = open_slots.pop(0)
        if remaining > 0 and rng.random() < 0.7:
            cell = kinds[rng.integers(len(kinds))]
            specs.append([cell, []])
            child = len(specs) - 1
            specs[parent][1].append(("node", child))
            open_slots.extend((child, i) for i in range(cell.num_inputs))
            remaining -= 1
        else:
            specs[parent][1].append(("pi",))
    nl = Netlist(name or f"tree{num_nodes}_{seed}", [], [])
    ids = {}
    for idx in reversed(range(len(specs))):
        cell, kids = specs[idx]
        fanins = []
        for kid in kids:
            if kid[0] == "node":
                fanins.append(ids[kid[1]])
            else:
                nl.inputs.append(f"i{len(nl.inputs)}")
                fanins.append(~(len(nl.inputs) - 1))
        ids[idx] = nl.add_node(cell, fanins, f"n{len(nl.cells)}")
    root = ids[0]
    nl.outputs.append(nl.out_nets[root])
    nl.po_drivers.append(root)
    nl.topo_order()
    return nl
