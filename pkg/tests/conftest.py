import numpy as np
import pytest

from mentor import autodiff as ad
from mentor.models import ModelSpec
from mentor.synthetic import SyntheticTaskSpec, generate_synthetic_task

EPS = 1e-3


def numeric_grad(f, arrays, i, eps=EPS):
    """Central differences of scalar ``f(*arrays)`` with respect to ``arrays[i]``."""
    x = arrays[i]
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        j = it.multi_index
        old = x[j]
        x[j] = old + eps
        hi = f(*arrays)
        x[j] = old - eps
        lo = f(*arrays)
        x[j] = old
        g[j] = (hi - lo) / (2 * eps)
    return g


def grad_check(fn, *arrays, eps=EPS):
    """Max relative error over all inputs of ``fn`` (tensors in, scalar tensor out)."""
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    tensors = [ad.Tensor(a.copy(), requires_grad=True) for a in arrays]
    fn(*tensors).backward()

    def scalar(*xs):
        with ad.no_grad():
            return fn(*[ad.Tensor(x) for x in xs]).item()

    worst = 0.0
    for i, t in enumerate(tensors):
        num = numeric_grad(scalar, arrays, i, eps)
        scale = max(np.abs(num).max(), 1e-8)
        worst = max(worst, np.abs(t.grad - num).max() / scale)
    return worst


def spread(rng, shape, margin=0.05):
    """Random values kept away from zero so kinks are not straddled."""
    x = rng.uniform(margin, 1.0, size=shape)
    return x * rng.choice([-1.0, 1.0], size=shape)


def distinct(rng, shape, gap=0.01):
    """Random values with pairwise gaps of at least ``gap``."""
    n = int(np.prod(shape))
    return (rng.permutation(n) * gap + rng.uniform(0, gap / 4)).reshape(shape) - n * gap / 2


@pytest.fixture(scope="session")
def tiny_task():
    spec = SyntheticTaskSpec(extent=16, n_train=40, n_val=20, n_test=30, seed=3)
    return generate_synthetic_task(spec)


@pytest.fixture(scope="session")
def tiny_model_spec():
    return ModelSpec(input_extent=16, base_width=4, depth=2)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
