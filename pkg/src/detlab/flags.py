"""Runtime flags for spectral proximity, truncation and convergence trouble.

Outside a :func:`collect_flags` block a flag is an ordinary warning. Inside
one it is recorded on the current thread's collector instead, so concurrent
report builders never see each other's flags.
"""

from __future__ import annotations

import contextlib
import threading
import warnings


class SpectralFlag(UserWarning):
    """Base class; ``code`` is the short tag written into reports."""

    code = "flag"


class EigenvalueProximity(SpectralFlag):
    code = "eigenvalue-proximity"


class TruncationFlag(SpectralFlag):
    code = "truncation"


class ConvergenceFlag(SpectralFlag):
    code = "non-convergence"


_local = threading.local()


def _stack() -> list:
    if not hasattr(_local, "stack"):
        _local.stack = []
    return _local.stack


def raise_flag(category: type[SpectralFlag], message: str) -> None:
    stack = _stack()
    if not stack:
        warnings.warn(message, category, stacklevel=3)
        return
    tag = f"{category.code}: {message}"
    for bucket in stack:
        if tag not in bucket:
            bucket.append(tag)


@contextlib.contextmanager
def collect_flags():
    """Collect flags raised on this thread as ``"code: message"`` strings.

    Duplicates are dropped and first-appearance order is kept.
    """
    bucket: list[str] = []
    stack = _stack()
    stack.append(bucket)
    try:
        yield bucket
    finally:
        stack.remove(bucket)
