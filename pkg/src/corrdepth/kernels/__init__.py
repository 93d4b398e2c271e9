"""Kernel backend selection.

The compiled Cython backend is used when importable; otherwise the numpy
fallback.  Override with CORRDEPTH_BACKEND=cython|python (``cython`` raises
if the extension is missing).
"""

import os

from . import _pykernels

_choice = os.environ.get("CORRDEPTH_BACKEND", "auto").lower()
if _choice not in ("auto", "cython", "python"):
    raise ImportError(f"unknown CORRDEPTH_BACKEND value: {_choice!r}")

_impl = None
if _choice in ("auto", "cython"):
    try:
        from . import _ckernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        if _choice == "cython":
            raise ImportError(
                "CORRDEPTH_BACKEND=cython but the compiled backend is not "
                "built; run `pip install -e .` or `python setup.py "
                "build_ext --inplace`")
        _impl = None
if _impl is None:
    _impl = _pykernels

corr_volume = _impl.corr_volume
avg_pool2x2 = _impl.avg_pool2x2
lookup_windows = _impl.lookup_windows
conv3x3 = _impl.conv3x3
upsample2x = _impl.upsample2x


def backend_name() -> str:
    """Name of the active kernel backend: 'cython' or 'python'."""
    return _impl.BACKEND
