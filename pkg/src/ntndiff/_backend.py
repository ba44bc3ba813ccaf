"""Kernel backend selection.

The compiled extension is used when it imports; ``NTN_BACKEND=python`` forces
the numpy fallback and ``NTN_BACKEND=compiled`` makes a missing extension an
ImportError instead of a silent fallback.
"""
import logging
import os

from . import _pykernels

log = logging.getLogger(__name__)


def _load_compiled():
    from . import _ckernels
    return _ckernels


def select(choice=None):
    choice = (choice or os.environ.get("NTN_BACKEND", "auto")).lower()
    if choice == "python":
        return _pykernels
    if choice == "compiled":
        return _load_compiled()
    if choice != "auto":
        raise ImportError(f"unknown NTN_BACKEND {choice!r}")
    try:
        return _load_compiled()
    except ImportError:
        log.debug("compiled kernels unavailable, using numpy fallback")
        return _pykernels


def available():
    """Names of the backends importable in this environment."""
    names = ["python"]
    try:
        _load_compiled()
        names.append("compiled")
    except ImportError:
        pass
    return names


kernels = select()
BACKEND = kernels.NAME
