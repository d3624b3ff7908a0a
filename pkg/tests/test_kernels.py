import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from predictorlab import kernels
from predictorlab.errors import InvalidArgument
from predictorlab.plant import StrictFeedbackPlant, catalog_get

compiled_only = pytest.mark.skipif(not kernels.HAVE_COMPILED, reason="extension not built")

PARITY_PLANTS = ["example4", "linear2", "example3", "lti", "integrator"]
# numpy's vectorised tanh/sin may differ from the C library by an ulp, so
# plants using them are compared to a few ulps instead of bit for bit
TRANSCENDENTAL = {"example3"}


def _same(name, a, b):
    a, b = np.asarray(a), np.asarray(b)
    if name in TRANSCENDENTAL:
        return np.allclose(a, b, rtol=1e-12, atol=1e-13)
    return np.array_equal(a, b)


def _pair(name):
    plant = catalog_get(name)
    n = plant.n
    gain = -np.arange(2, n + 2, dtype=float)
    ddir = np.eye(n)[0] if name != "lti" else np.array([1.0, 0.5])
    return (plant, kernels.make_model(plant, gain, ddir, backend="python"),
            kernels.make_model(plant, gain, ddir, backend="compiled"))


@compiled_only
@pytest.mark.parametrize("name", PARITY_PLANTS)
@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2 ** 31 - 1))
def test_integrate_backends_agree(name, seed):
    plant, py, cc = _pair(name)
    rng = np.random.default_rng(seed)
    n = plant.n
    x, z = rng.uniform(-3, 3, n), rng.uniform(-3, 3, n)
    w = float(rng.uniform(-3, 3))
    nsteps = int(rng.integers(1, 40))
    dvals = rng.uniform(-1, 1, 2 * nsteps + 1)
    a = py.integrate(x, z, w, 1e-3, nsteps, 0.7, -0.4, dvals)
    b = cc.integrate(x, z, w, 1e-3, nsteps, 0.7, -0.4, dvals)
    for pa, pb in zip(a, b):
        assert _same(name, pa, pb)


@compiled_only
@pytest.mark.parametrize("name", PARITY_PLANTS)
def test_flow_and_picard_backends_agree(name):
    plant, py, cc = _pair(name)
    rng = np.random.default_rng(7)
    n = plant.n
    for _ in range(5):
        x0 = rng.uniform(-5, 5, n)
        dur = rng.uniform(0.01, 0.2, 3)
        vals = rng.uniform(-5, 5, 3)
        assert _same(name, py.flow(x0, dur, vals, 1e-3), cc.flow(x0, dur, vals, 1e-3))
        grid = rng.uniform(-2, 2, (65, n))
        U = np.cumsum(rng.uniform(-1, 1, 65))
        assert _same(name, py.picard_step(grid, U, 0.25), cc.picard_step(grid, U, 0.25))


def test_backend_selection():
    plant = catalog_get("example4")
    assert kernels.make_model(plant, backend="python").compiled is False
    if kernels.HAVE_COMPILED:
        assert kernels.make_model(plant).compiled is True
    with pytest.raises(InvalidArgument):
        kernels.make_model(plant, backend="gpu")


def test_non_separable_plant_falls_back_to_python():
    plant = StrictFeedbackPlant(1, [lambda x: np.tanh(x[..., 0])], [lambda x, u: 0.5], L=1.0,
                                G=0.5, r=0.1, tau=0.1)
    assert not kernels.can_compile(plant)
    model = kernels.make_model(plant)
    assert model.compiled is False
    with pytest.raises(InvalidArgument):
        kernels.make_model(plant, backend="compiled")


def test_environment_forces_pure_python():
    env = dict(os.environ, PREDICTORLAB_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import predictorlab as p; print(p.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
