import numpy as np
import pytest

from quadadapt import forest as F


def make_block_mesh():
    """Non-conforming balanced mesh with three refinement levels built from
    2 x 2 sibling-block refinements (no isolated families)."""
    f = F.new_brick(1, 1, (0.0, 0.0, 1.0, 1.0), uniform_level=3)
    blk = [c.key for c in f.leaves
           if 0.25 <= c.anchor[0] < 0.5 and 0.25 <= c.anchor[1] < 0.5]
    f, _ = F.refine(f, blk)
    f = F.balance_2to1(f)
    blk2 = [c.key for c in f.leaves
            if c.level == 4 and 0.3125 <= c.anchor[0] < 0.4375
            and 0.3125 <= c.anchor[1] < 0.4375]
    f, _ = F.refine(f, blk2)
    f = F.balance_2to1(f)
    return f, F.extract_mesh(f)


@pytest.fixture(scope="session")
def block_forest_mesh():
    return make_block_mesh()


@pytest.fixture(scope="session")
def uniform_mesh():
    f = F.new_brick(2, 2, (0.0, 0.0, 1.0, 1.0), uniform_level=2)
    return F.extract_mesh(f)


def random_biquadratic(rng):
    """A random biquadratic with its gradient, vectorized over arrays."""
    C = rng.normal(size=(3, 3))

    def u(x, y):
        acc = 0.0
        for i in range(3):
            for j in range(3):
                acc = acc + C[i, j] * x ** i * y ** j
        return acc

    def du(x, y):
        gx = 0.0
        gy = 0.0
        for i in range(3):
            for j in range(3):
                if i:
                    gx = gx + i * C[i, j] * x ** (i - 1) * y ** j
                if j:
                    gy = gy + j * C[i, j] * x ** i * y ** (j - 1)
        return np.asarray(gx), np.asarray(gy)

    return u, du
