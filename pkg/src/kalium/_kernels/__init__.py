"""Hot numerical kernels with a compiled core and a numpy fallback.

The compiled extension is used when it was built and importable; setting
``KALIUM_PURE_PYTHON=1`` forces the fallback. ``BACKEND`` names the active
implementation.
"""
import os

from . import _pyfallback

if os.environ.get("KALIUM_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pyfallback
else:
    try:
        from . import _cext as _impl
    except ImportError:  # extension not built
        _impl = _pyfallback

BACKEND = "cython" if _impl is not _pyfallback else "python"

kde_sum = _impl.kde_sum
wlasso_gram = _impl.wlasso_gram


def backends():
    """Return ``{name: module}`` for every importable implementation."""
    found = {"python": _pyfallback}
    try:
        from . import _cext
    except ImportError:
        pass
    else:
        found["cython"] = _cext
    return found
