"""Hot batched kernels with a numba path and a pure-numpy fallback.

The numba implementations are used when numba imports cleanly, unless the
environment variable ``CKNTOOLS_DISABLE_NUMBA`` is set to a truthy value
before the first import of :mod:`ckntools`.  Both backends expose the same
functions with identical signatures; ``BACKEND`` names the active one.

Array layouts (leading axis is always the batch of points):

* metric ``G[b, i, j] = g_ij``
* metric jacobian ``dG[b, i, j, k] = d_k g_ij``
* Christoffel ``Gamma[b, k, i, j] = Gamma^k_ij``
* field jacobian ``J[b, i, k] = d_k h^i``
* covariant jacobian ``D[b, k, j] = nabla_k h^j``
"""
import os

from . import numpy_impl

_FLAG = os.environ.get("CKNTOOLS_DISABLE_NUMBA", "").strip().lower()
NUMBA_DISABLED = _FLAG in {"1", "true", "yes", "on"}

try:
    if NUMBA_DISABLED:
        raise ImportError("numba disabled by CKNTOOLS_DISABLE_NUMBA")
    from . import numba_impl
except ImportError:
    numba_impl = None

_impl = numpy_impl if numba_impl is None else numba_impl
BACKEND = "numpy" if numba_impl is None else "numba"

spd_inverse = _impl.spd_inverse
christoffel = _impl.christoffel
covariant_jacobian = _impl.covariant_jacobian
quad_form = _impl.quad_form
smooth_step = _impl.smooth_step
norm_gradient = _impl.norm_gradient
density_divergence = _impl.density_divergence

__all__ = [
    "BACKEND",
    "NUMBA_DISABLED",
    "christoffel",
    "covariant_jacobian",
    "density_divergence",
    "norm_gradient",
    "numba_impl",
    "numpy_impl",
    "quad_form",
    "smooth_step",
    "spd_inverse",
]
