"""Hot numeric kernels with two interchangeable backends.

The numba backend is the default. Set ``STRUCTCORE_NUMBA=0`` to force the
pure-numpy fallback; it is also selected automatically when numba is not
importable. Both backends implement the same contracts and agree to within
floating-point rounding; each is individually deterministic for any thread
count.
"""

import importlib
import os

from . import numpy_impl

_FLAG = os.environ.get("STRUCTCORE_NUMBA", "1").strip().lower()
_WANT_NUMBA = _FLAG not in ("0", "false", "off", "no")

numba_impl = None
if _WANT_NUMBA:
    try:
        numba_impl = importlib.import_module(".numba_impl", __name__)
    except ImportError:
        numba_impl = None

if numba_impl is not None:
    active = numba_impl
    BACKEND = "numba"
else:
    active = numpy_impl
    BACKEND = "numpy"


def get_backend(name=None):
    """Return a kernel module by name ('numba' | 'numpy'), default active."""
    if name is None:
        return active
    if name == "numpy":
        return numpy_impl
    if name == "numba":
        if numba_impl is None:
            raise RuntimeError("numba backend unavailable (not installed or disabled)")
        return numba_impl
    raise ValueError(f"unknown kernel backend {name!r}")


knn_mean_sqdist = active.knn_mean_sqdist
kcenter_greedy = active.kcenter_greedy
bilinear_upsample = active.bilinear_upsample
gaussian_blur = active.gaussian_blur
matmul_f64acc = active.matmul_f64acc
routing_mean_min_sqdist = active.routing_mean_min_sqdist
