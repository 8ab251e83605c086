import numpy as np
import pytest

from ganens import _native
from ganens.numerics import Layer, MlpParams

BACKENDS = ["python"] + (["cython"] if _native.BACKEND == "cython" else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


def random_mlp(rng, sizes, activations, scale=0.7, slope=0.2):
    layers = []
    for n_in, n_out, act in zip(sizes[:-1], sizes[1:], activations):
        layers.append(Layer(rng.normal(0, scale, (n_out, n_in)), rng.normal(0, scale, n_out), act, slope))
    return MlpParams(tuple(layers))


def central_diff(f, x0, h=1e-5):
    x0 = np.asarray(x0, dtype=np.float64)
    grad = np.empty_like(x0)
    for i in range(x0.size):
        xp, xm = x0.copy(), x0.copy()
        xp.flat[i] += h
        xm.flat[i] -= h
        grad.flat[i] = (f(xp) - f(xm)) / (2 * h)
    return grad


def max_rel_err(a, b, floor=1e-6):
    a, b = np.ravel(a), np.ravel(b)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


ACCEPTANCE_LINES: list = []


def report(criterion: int, ok: bool, detail: str) -> bool:
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
