"""glibc malloc tuning: keep large numpy buffers on the heap for reuse.

Training allocates multi-MB scratch arrays every step; with default glibc
settings those go through mmap/munmap and the page-fault cost dominates the
actual math (measured ~4x slowdown). Raising the mmap and trim thresholds
makes the allocator recycle them. No effect on results, only on speed.
"""

import ctypes
import ctypes.util


def tune_malloc() -> bool:
    try:
        path = ctypes.util.find_library("c")
        libc = ctypes.CDLL(path) if path else ctypes.CDLL(None)
        m_trim_threshold, m_mmap_threshold = -1, -3
        ok1 = libc.mallopt(m_mmap_threshold, 1 << 30)
        ok2 = libc.mallopt(m_trim_threshold, 1 << 30)
        return bool(ok1 and ok2)
    except (OSError, AttributeError, TypeError):
        return False


TUNED = tune_malloc()
