"""Process-level runtime knobs."""

import os


def thread_count() -> int:
    """Worker cap from PLPDE_THREADS; defaults to serial execution."""
    try:
        return max(1, int(os.environ.get("PLPDE_THREADS", "1")))
    except ValueError:
        return 1
