import pytest

from alsx.bench import default_library
from alsx.netlist import parse_blif, parse_library

MINI_LIB = """\
GATE CONST0 0.5 0 0 0 0 0 0 IN
GATE CONST1 0.5 0 1 0 0 0 0 IN
GATE BUF 1.0 1 2 0 1.0 1.0 0.5 IN 1.0
GATE INV 1.0 1 1 0.0 1.0 1.0 0.5 IN 1.0
GATE NAND2 2.0 2 7 0.0 1.2 1.0 0.5 IN 1.0 1.0
GATE NOR2 2.0 2 1 0.0 1.3 1.0 0.5 IN 1.0 1.0
GATE AND2 2.5 2 8 0.0 1.1 1.2 0.5 IN 1.0 1.0
GATE OR2 2.5 2 E 0.0 1.1 1.2 0.5 IN 1.0 1.0
"""


@pytest.fixture(scope="session")
def lib():
    return default_library()


@pytest.fixture(scope="session")
def mini_lib():
    return parse_library(MINI_LIB)


def blif(lib, body: str, inputs="a b", outputs="y", name="t"):
    return parse_blif(f".model {name}\n.inputs {inputs}\n.outputs {outputs}\n{body}\n.end\n", lib)


def separable_task(n=200, seed=0):
    """Labels are a fixed linear function of three binary features; the rest is noise."""
    import numpy as np
    rng = np.random.default_rng(seed)
    x = rng.random((n, 93))
    bits = rng.integers(0, 2, size=(n, 3))
    x[:, :3] = bits
    y = bits @ np.array([5, 10, 20])
    return x, y
