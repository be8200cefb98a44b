"""Selects the compiled integration kernel, falling back to pure Python.

Set ``SWFF_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _pykernel

EV_SLEEP, EV_WAKE, EV_MIN, EV_SIGMA_UP, EV_SIGMA_DOWN = range(5)

if os.environ.get("SWFF_PURE_PYTHON") == "1":
    run = _pykernel.run
    BACKEND = "python"
else:
    try:
        from ._kernel import run
        BACKEND = "cython"
    except ImportError:
        run = _pykernel.run
        BACKEND = "python"

py_run = _pykernel.run
