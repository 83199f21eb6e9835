"""Numba acceleration toggle.

Hot kernels ship in two versions: an ``@njit``-compiled loop form and a
vectorized pure-numpy form. ``LEVYPRICER_NUMBA=0`` forces the numpy path
(the numba path is the default whenever numba imports cleanly). Both
paths stay importable so tests and ``benchmarks/bench_kernels.py`` can
compare them directly.
"""

import os


def _flag_enabled() -> bool:
    return os.environ.get("LEVYPRICER_NUMBA", "1").lower() not in ("0", "false", "no", "off")


try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        """Decorator passthrough so modules still import without numba."""
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(fn):
            return fn

        return wrap


USE_NUMBA = HAVE_NUMBA and _flag_enabled()
