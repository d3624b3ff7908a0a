"""Backend selection for the hot kernels.

The compiled extension :mod:`predictorlab._ckernels` is used when it was
built and the plant is separable with constant disturbance gains; anything
else runs on the numpy reference in :mod:`predictorlab._pykernels`.  Setting
``PREDICTORLAB_PURE_PYTHON=1`` before import disables the extension.
"""

import os

import numpy as np

from . import _pykernels
from .errors import InvalidArgument
from .plant import NONLINEARITIES, LtiPlant

try:
    if os.environ.get("PREDICTORLAB_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-Python backend requested")
    from . import _ckernels
except ImportError:
    _ckernels = None

HAVE_COMPILED = _ckernels is not None
BACKEND = "compiled" if HAVE_COMPILED else "python"


def _compiled_args(plant, obs_gain, d_dir):
    n = plant.n
    obs_gain = np.zeros(n) if obs_gain is None else np.asarray(obs_gain, dtype=float)
    if isinstance(plant, LtiPlant):
        dd = np.zeros(plant.G_mat.shape[1]) if d_dir is None else np.asarray(d_dir, dtype=float)
        dist = plant.G_mat @ dd
        empty_i = np.zeros(0, dtype=np.int32)
        return (plant.A, plant.B, plant.c, dist, obs_gain, empty_i, empty_i, empty_i,
                np.zeros(0))
    g = plant.g_constant
    if plant.terms is None or g is None:
        return None
    dd = np.zeros(n) if d_dir is None else np.asarray(d_dir, dtype=float)
    A, B, c = plant.linear_part()
    terms = plant.terms
    return (A, B, c, g * dd, obs_gain,
            np.array([t.row for t in terms], dtype=np.int32),
            np.array([t.col for t in terms], dtype=np.int32),
            np.array([NONLINEARITIES[t.kind][0] for t in terms], dtype=np.int32),
            np.array([t.coef for t in terms], dtype=float))


def can_compile(plant) -> bool:
    return HAVE_COMPILED and _compiled_args(plant, None, None) is not None


def make_model(plant, obs_gain=None, d_dir=None, backend: str = "auto"):
    """Kernel object with ``integrate``, ``flow`` and ``picard_step`` methods.

    ``backend`` is ``"auto"``, ``"python"`` or ``"compiled"``; ``"compiled"``
    raises if the extension is missing or the plant is not separable.
    """
    if backend not in ("auto", "python", "compiled"):
        raise InvalidArgument(f"unknown backend {backend!r}")
    if backend != "python" and HAVE_COMPILED:
        args = _compiled_args(plant, obs_gain, d_dir)
        if args is not None:
            return _ckernels.CModel(*args)
    if backend == "compiled":
        raise InvalidArgument("compiled backend unavailable for this plant")
    return _pykernels.PyModel(plant, obs_gain, d_dir)
