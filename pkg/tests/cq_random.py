"""Random small constraint systems for the implication-chain tests."""

import numpy as np

from daecert.cq import ConstraintSystem
from daecert.expr import Layout, VectorFunction
from daecert.problem import parse_set

TARGETS = {
    1: ["zero(1)", "nonpositive(1)", "union(zero(1), nonpositive(1))"],
    2: ["zero(2)", "nonpositive(2)", "product(zero(1), nonpositive(1))",
        "union(product(zero(1), nonpositive(1)), product(nonpositive(1), zero(1)))"],
}
CONTROLS = {
    1: ["box([-1], [1])", "box([0], [1])", "free(1)", "union(box([-1], [0]), point([1]))"],
    2: ["box([0, 0], [1, 1])", "free(2)", "polyhedron([[1, 1]], [0])", "product(box([0], [1]), free(1))"],
}


def random_system(rng) -> ConstraintSystem:
    """Polynomial map of degree <= 2 vanishing at the origin, which is feasible."""
    nx, ny, nu, m = (int(rng.integers(1, 3)), int(rng.integers(0, 3)), int(rng.integers(1, 3)), int(rng.integers(1, 3)))
    layout = Layout.of(x=nx, y=ny, u=nu)
    names = [f"x{i + 1}" for i in range(nx)] + [f"y{i + 1}" for i in range(ny)] + [f"u{i + 1}" for i in range(nu)]
    rows = []
    for _ in range(m):
        terms = []
        for _ in range(int(rng.integers(1, 4))):
            c = int(rng.integers(-2, 3)) or 1
            vs = rng.choice(names, size=int(rng.integers(1, 3)))
            terms.append(f"({c}) * " + " * ".join(vs))
        rows.append(" + ".join(terms))
    return ConstraintSystem(
        VectorFunction.parse(rows, layout),
        parse_set(str(rng.choice(TARGETS[m]))),
        parse_set(str(rng.choice(CONTROLS[nu]))),
    )
