"""Small shared helpers."""

from __future__ import annotations

import os

__all__ = ["worker_count", "is_power_of_two"]


def worker_count() -> int:
    """Worker cap for internal parallelism; the TNT_THREADS environment
    variable overrides the CPU count."""
    env = os.environ.get("TNT_THREADS")
    if env is not None:
        try:
            n = int(env)
        except ValueError as exc:
            raise ValueError(f"TNT_THREADS={env!r} is not an integer") from exc
        if n < 1:
            raise ValueError(f"TNT_THREADS must be positive, got {n}")
        return n
    return os.cpu_count() or 1


def is_power_of_two(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0
