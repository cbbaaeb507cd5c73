import numpy as np
import pytest

from mireg.geom import RigidTransform


def random_rotation(rng):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def random_transform(rng, scale=5.0):
    return RigidTransform(random_rotation(rng), rng.uniform(-scale, scale, 3))


def block_adjacency(sizes, rng=None):
    """Binary block-diagonal matrix; rows optionally shuffled. Returns (adj, labels)."""
    labels = np.repeat(np.arange(len(sizes)), sizes)
    if rng is not None:
        labels = labels[rng.permutation(labels.size)]
    adj = (labels[:, None] == labels[None, :]).astype(np.int8)
    return adj, labels


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance lines, echoed in the terminal summary so they survive output capture
ACCEPTANCE_LINES = []


def report(label, ok, detail):
    line = f"{label}: {'PASS' if ok else 'FAIL'} | {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
