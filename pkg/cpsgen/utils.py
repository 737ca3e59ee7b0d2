import hashlib
import os
import sys
import threading
import typing as t
from concurrent.futures import ThreadPoolExecutor

_enable_all_logs = False
_ENABLED_LOGS: set[str] = {"err", "log"}

WORKERS_ENV = "CPSGEN_WORKERS"


def enable_log(kind: str):
    global _enable_all_logs

    if kind == "":
        return

    if kind == "all":
        _enable_all_logs = True

    _ENABLED_LOGS.add(kind)


def log(kind: str, *args: t.Any):
    if not _enable_all_logs and kind not in _ENABLED_LOGS:
        return

    leader = "\x1b[1;32m"
    if kind == "err":
        leader = "\x1b[1;31m"
    elif kind == "log":
        leader = "\x1b[1;34m"

    print(f"{leader}[{kind}]\x1b[0m", *args, file=sys.stderr)


def derive_seed(master: int, *parts: t.Any) -> int:
    """
    Derive a reproducible 63-bit seed from a master seed and any number of
    labels (model name, generator, suite size, repeat index...).
    """
    raw = ":".join([str(master), *(str(p) for p in parts)])
    digest = hashlib.sha256(raw.encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def worker_count(default: int | None = None) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log("err", f"ignoring non-integer {WORKERS_ENV}={env!r}")

    if default is not None:
        return max(1, default)

    return max(1, min(8, os.cpu_count() or 1))


_T = t.TypeVar("_T")
_R = t.TypeVar("_R")


def run_pool(
    func: t.Callable[[_T], _R],
    items: t.Iterable[_T],
    workers: int | None = None,
) -> list[_R]:
    """
    Run `func` over `items` on a bounded thread pool. Results come back in
    input order, whatever order the work items complete in.
    """
    items = list(items)
    workers = worker_count(workers)

    if workers == 1 or len(items) <= 1:
        return [func(item) for item in items]

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


class Counter:
    """A thread-safe monotonically increasing counter."""

    def __init__(self):
        self._value = 0
        self._lock = threading.Lock()

    def add(self, amount: int = 1) -> int:
        with self._lock:
            self._value += amount
            return self._value

    @property
    def value(self) -> int:
        with self._lock:
            return self._value
