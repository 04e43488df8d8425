"""Backend selection for the bracket kernels.

The compiled module is used when it was built and importable; setting
``MOMENTFLOW_PURE_PYTHON=1`` forces the numpy fallback.
"""
import os

from . import _pykernels

if os.environ.get("MOMENTFLOW_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = _pykernels

BACKEND = _impl.BACKEND

# layout helpers always come from the python module (cached index arrays)
pair_index = _pykernels.pair_index
unpack = _pykernels.unpack
pack = _pykernels.pack

act_packed = _impl.act_packed
moment_packed = _impl.moment_packed
sphere_field = _impl.sphere_field
transport_packed = _impl.transport_packed


def backends():
    """All importable kernel modules keyed by backend name."""
    found = {"python": _pykernels}
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        found["cython"] = _ckernels
    return found
