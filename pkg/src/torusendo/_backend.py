"""Select the kernel implementation at import time.

The compiled ``_ckernels`` extension is preferred; ``TORUSENDO_PURE=1``
forces the numpy fallback.  ``use(name)`` switches at runtime (tests and the
benchmark use it to compare both).
"""
import logging
import os

from . import _pykernels

log = logging.getLogger(__name__)

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_IMPLS = {"python": _pykernels}
if _ckernels is not None:
    _IMPLS["cython"] = _ckernels

if os.environ.get("TORUSENDO_PURE") == "1" or _ckernels is None:
    kernels = _pykernels
    name = "python"
else:
    kernels = _ckernels
    name = "cython"


def available():
    return sorted(_IMPLS)


def use(which):
    """Switch the active backend; returns the previous name."""
    global kernels, name
    if which not in _IMPLS:
        raise ValueError(f"backend {which!r} not available (have {available()})")
    prev = name
    kernels, name = _IMPLS[which], which
    log.debug("kernel backend -> %s", which)
    return prev


def threads():
    """Worker cap from ``TORUSENDO_THREADS`` (default: CPU count)."""
    try:
        n = int(os.environ.get("TORUSENDO_THREADS", "0"))
    except ValueError:
        n = 0
    return max(1, n or (os.cpu_count() or 1))


def parallel_map(work, chunks):
    """``[work(c) for c in chunks]`` on up to ``threads()`` workers, results in input order."""
    chunks = list(chunks)
    nt = min(threads(), len(chunks))
    if nt <= 1:
        return [work(c) for c in chunks]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=nt) as ex:
        return list(ex.map(work, chunks))
