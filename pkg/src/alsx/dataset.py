"""Training data for the error-rate predictor.

For every node and every compatible replacement the local error is injected
and propagated to the outputs; the worst output error, quantized into 2% bins,
is the label.  Feature vectors follow a fixed 93-entry layout:

=========  ==========================================================
0          current cell id, (library index + 1) / |lib|
1          replacing cell id, same scale
2          local replacement error
3          fanin count / 6
4          fanout count (capped at 32) / 32
5          level / circuit depth
6          circuit depth / 256 (capped at 1)
7..10      error probabilities of the first four fanins (0 for PIs)
11         switching activity
12         load capacitance / library max load
13..52     fanin cone, 8 slots x (cell id, level/depth, fanin/6, fanout/32, error)
53..92     fanout cone, 8 slots, same fields; the error is taken with the
           candidate's local error propagated through the slotted nodes
=========  ==========================================================

Cones are breadth-first with ``depth_limit`` 2; unused slots stay zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errorprop import IncrementalPropagator, signal_probabilities
from .netlist import Netlist, TechLibrary, cone
from .powermodel import load_cap, switching_activity
from .truthtable import (Candidate, local_replacement_error, removal_candidates,
                         same_arity_candidates, candidate_table)

NUM_FEATURES = 93
NUM_CLASSES = 51
BIN_WIDTH = 0.02
CONE_SLOTS = 8
SLOT_FIELDS = 5
DEFAULT_DEPTH_LIMIT = 2
LAYOUT_TAG = "fl1"
FANIN_SLOT0 = 13
FANOUT_SLOT0 = FANIN_SLOT0 + CONE_SLOTS * SLOT_FIELDS
HEADER = f"ALSX-DATA v1 {NUM_FEATURES} {NUM_CLASSES}"


class DatasetError(ValueError):
    pass


def quantize(e: float) -> int:
    return min(NUM_CLASSES - 1, max(0, math.floor(e / BIN_WIDTH + 0.5)))


def dequantize(label: int) -> float:
    return label * BIN_WIDTH


@dataclass
class TrainingSample:
    features: np.ndarray
    label: int
    raw_label: float


def _cell_id(lib: TechLibrary, cell) -> float:
    return (lib.index[cell.name] + 1) / len(lib)


class FeatureContext:
    """Per-netlist quantities shared by all feature vectors of one netlist state."""

    def __init__(self, nl: Netlist, lib: TechLibrary, activities, node_errors, levels=None,
                 depth_limit: int = DEFAULT_DEPTH_LIMIT, propagator: IncrementalPropagator | None = None):
        self.nl = nl
        self.propagator = propagator
        self.lib = lib
        self.activities = activities
        self.node_errors = node_errors
        self.levels = nl.levels if levels is None else levels
        self.depth = max(self.levels, default=0) or 1
        self.depth_limit = depth_limit

    def _slot(self, out: np.ndarray, at: int, m: int):
        nl = self.nl
        out[at] = _cell_id(self.lib, nl.cells[m])
        out[at + 1] = min(1.0, self.levels[m] / self.depth)
        out[at + 2] = len(nl.fanins[m]) / 6
        out[at + 3] = min(len(nl.fanouts(m)), 32) / 32
        out[at + 4] = self.node_errors[m]

    def base(self, node: int) -> np.ndarray:
        """Feature vector with the replacement-specific entries [1] and [2] left at 0."""
        nl, lib = self.nl, self.lib
        x = np.zeros(NUM_FEATURES)
        x[0] = _cell_id(lib, nl.cells[node])
        fi = nl.fanins[node]
        x[3] = len(fi) / 6
        x[4] = min(len(nl.fanouts(node)), 32) / 32
        x[5] = min(1.0, self.levels[node] / self.depth)
        x[6] = min(1.0, self.depth / 256)
        for i, r in enumerate(fi[:4]):
            x[7 + i] = 0.0 if r < 0 else self.node_errors[r]
        x[11] = self.activities[node]
        x[12] = min(1.0, load_cap(nl, node) / lib.max_load) if lib.max_load > 0 else 0.0
        ins = cone(nl, node, "fanin", self.depth_limit, max_nodes=CONE_SLOTS)
        for s, m in enumerate(ins):
            self._slot(x, FANIN_SLOT0 + s * SLOT_FIELDS, m)
        outs = cone(nl, node, "fanout", self.depth_limit, max_nodes=CONE_SLOTS)
        for s, m in enumerate(outs):
            self._slot(x, FANOUT_SLOT0 + s * SLOT_FIELDS, m)
        return x

    def features(self, node: int, replacing_cell, local_error: float, base=None) -> np.ndarray:
        x = self.base(node) if base is None else base.copy()
        x[1] = _cell_id(self.lib, replacing_cell)
        x[2] = local_error
        if self.propagator is not None:
            outs = cone(self.nl, node, "fanout", self.depth_limit, max_nodes=CONE_SLOTS)
            if outs:
                err = self.propagator.window(node, local_error, outs)
                for s, m in enumerate(outs):
                    x[FANOUT_SLOT0 + s * SLOT_FIELDS + 4] = err[m]
        return x


def extract_features(nl: Netlist, node: int, replacing_cell, local_error: float, node_errors,
                     activities, lib: TechLibrary, depth_limit: int = DEFAULT_DEPTH_LIMIT,
                     passthrough: int | None = None) -> np.ndarray:
    candidate_table(nl.cells[node], replacing_cell, passthrough)  # raises if incompatible
    ctx = FeatureContext(nl, lib, activities, node_errors, depth_limit=depth_limit)
    return ctx.features(node, replacing_cell, local_error)


def node_candidates(lib: TechLibrary, cell) -> list[Candidate]:
    return same_arity_candidates(lib, cell) + removal_candidates(lib, cell)


def fanin_probabilities(nl: Netlist, node: int, probs, pi_probs=None) -> list[float]:
    return [(0.5 if pi_probs is None else pi_probs[~r]) if r < 0 else float(probs[r]) for r in nl.fanins[node]]


def network_samples(nl: Netlist, lib: TechLibrary, depth_limit: int = DEFAULT_DEPTH_LIMIT,
                    pi_probs=None) -> list[TrainingSample]:
    probs = signal_probabilities(nl, pi_probs)
    act = switching_activity(probs)
    prop = IncrementalPropagator(nl, probs, pi_probs)
    ctx = FeatureContext(nl, lib, act, prop.errors, depth_limit=depth_limit, propagator=prop)
    samples = []
    for node in range(nl.num_nodes):
        cell = nl.cells[node]
        pin_probs = fanin_probabilities(nl, node, probs, pi_probs)
        base = ctx.base(node)
        for cand in node_candidates(lib, cell):
            eps = local_replacement_error(cell, cand.cell, cand.passthrough, pin_probs)
            raw = prop.predict(node, eps)
            samples.append(TrainingSample(ctx.features(node, cand.cell, eps, base), quantize(raw), raw))
    return samples


def generate_training_data(networks: Iterable[Netlist], lib: TechLibrary,
                           depth_limit: int = DEFAULT_DEPTH_LIMIT, jobs: int = 1) -> list[TrainingSample]:
    """Samples in network order, then node id, then library order (removals last)."""
    networks = list(networks)
    if jobs > 1 and len(networks) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            parts = list(ex.map(network_samples, networks, [lib] * len(networks),
                                [depth_limit] * len(networks)))
    else:
        parts = [network_samples(nl, lib, depth_limit) for nl in networks]
    return [s for part in parts for s in part]


def split_dataset(samples: Sequence, ratios=(0.6, 0.2, 0.2), seed: int = 0):
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("ratios must be three fractions summing to 1")
    n = len(samples)
    perm = np.random.default_rng(seed).permutation(n)
    n_train = math.floor(ratios[0] * n)
    n_val = math.floor(ratios[1] * n)
    pick = lambda idx: [samples[i] for i in idx]
    return pick(perm[:n_train]), pick(perm[n_train:n_train + n_val]), pick(perm[n_train + n_val:])


def as_arrays(samples: Sequence[TrainingSample]) -> tuple[np.ndarray, np.ndarray]:
    if not samples:
        return np.zeros((0, NUM_FEATURES)), np.zeros(0, dtype=int)
    return np.stack([s.features for s in samples]), np.array([s.label for s in samples], dtype=int)


# -- file format ----------------------------------------------------------------

def format_dataset(samples: Iterable[TrainingSample]) -> str:
    lines = [f"{HEADER} LAYOUT={LAYOUT_TAG}"]
    for s in samples:
        lines.append(",".join(repr(float(v)) for v in s.features) + f";{s.label}")
    return "\n".join(lines) + "\n"


def parse_dataset(text: str) -> list[TrainingSample]:
    lines = text.splitlines()
    if not lines:
        raise DatasetError("empty dataset file")
    head = lines[0].split()
    if " ".join(head[:4]) != HEADER:
        raise DatasetError(f"bad header {lines[0]!r}, expected {HEADER!r}")
    layout = next((t.split("=", 1)[1] for t in head[4:] if t.startswith("LAYOUT=")), LAYOUT_TAG)
    if layout != LAYOUT_TAG:
        raise DatasetError(f"feature layout {layout!r} does not match {LAYOUT_TAG!r}")
    out = []
    for lineno, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        try:
            feats, label = line.split(";")
            x = np.array([float(v) for v in feats.split(",")])
            y = int(label)
        except ValueError as exc:
            raise DatasetError(f"line {lineno}: {exc}") from None
        if x.shape != (NUM_FEATURES,) or not 0 <= y < NUM_CLASSES:
            raise DatasetError(f"line {lineno}: expected {NUM_FEATURES} features and a label in 0..{NUM_CLASSES - 1}")
        out.append(TrainingSample(x, y, dequantize(y)))
    return out


def write_dataset(samples, path):
    with open(path, "w") as f:
        f.write(format_dataset(samples))


def read_dataset(path) -> list[TrainingSample]:
    with open(path) as f:
        return parse_dataset(f.read())
