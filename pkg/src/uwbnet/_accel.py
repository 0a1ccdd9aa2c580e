"""Numba switch for the hot kernels.

Set ``UWBNET_DISABLE_NUMBA=1`` to force the pure-numpy code paths (useful for
debugging and for the backend comparison benchmark). If numba cannot be
imported the fallback is used automatically.
"""
import os

_FALSY = {"", "0", "false", "no", "off"}

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def _env_disabled():
    return os.environ.get("UWBNET_DISABLE_NUMBA", "").strip().lower() not in _FALSY


USE_NUMBA = HAVE_NUMBA and not _env_disabled()


def njit(func):
    """Compile ``func`` with numba when available, else return it unchanged."""
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True)(func)


def jitable(func):
    """Make a helper callable both from Python and from jitted kernels."""
    if not HAVE_NUMBA:
        return func
    from numba.extending import register_jitable

    return register_jitable(func)


def backend():
    return "numba" if USE_NUMBA else "numpy"


def pick(numba_impl, numpy_impl, use_numba=None):
    """Choose an implementation; ``use_numba=None`` follows the env flag."""
    if use_numba is None:
        use_numba = USE_NUMBA
    if use_numba and HAVE_NUMBA:
        return numba_impl
    return numpy_impl
