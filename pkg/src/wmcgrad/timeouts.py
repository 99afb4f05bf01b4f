"""Wall-clock limits for single gradient computations."""

from __future__ import annotations

import signal
from contextlib import contextmanager

# how far past its budget a computation may run before the alarm lands
# (the signal is handled between bytecodes, so a long numpy call finishes first)
TIMEOUT_GRACE = 1.0


class GradientTimeout(Exception):
    pass


@contextmanager
def time_limit(seconds: float | None):
    """Raise :class:`GradientTimeout` after ``seconds`` of wall time.

    Relies on ``SIGALRM``: it only arms in the main thread of a process and
    silently does nothing elsewhere.
    """
    if not seconds or not hasattr(signal, "setitimer"):
        yield
        return

    def _fire(signum, frame):
        raise GradientTimeout(f"exceeded {seconds:g} s")

    try:
        previous = signal.signal(signal.SIGALRM, _fire)
    except ValueError:
        yield
        return
    signal.setitimer(signal.ITIMER_REAL, seconds)
    try:
        yield
    finally:
        signal.setitimer(signal.ITIMER_REAL, 0)
        signal.signal(signal.SIGALRM, previous)
