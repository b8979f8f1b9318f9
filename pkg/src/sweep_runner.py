"""Process-pool fan-out for prime-range sweeps with graceful SIGTERM/SIGINT shutdown handling."""

import logging
import signal
import threading
from collections.abc import Callable, Sequence
from concurrent.futures import FIRST_COMPLETED, Future, ProcessPoolExecutor, wait
from types import FrameType

logger = logging.getLogger(__name__)


class SweepInterrupted(RuntimeError):
    """Raised when a shutdown signal stops a sweep before every chunk finished."""

    def __init__(self, completed: int, total: int):
        super().__init__(f"Sweep interrupted after {completed}/{total} chunks")
        self.completed = completed
        self.total = total


def partition[T](items: Sequence[T], parts: int) -> list[list[T]]:
    """
    Split items into at most `parts` contiguous, non-empty chunks of near-equal size.

    The split depends only on len(items) and parts, so results merged in chunk
    order are identical for any worker count.
    """
    if parts < 1:
        raise ValueError(f"parts must be >= 1, got {parts}")
    n = len(items)
    parts = min(parts, n) or 1
    size, extra = divmod(n, parts)
    chunks: list[list[T]] = []
    start = 0
    for i in range(parts):
        stop = start + size + (1 if i < extra else 0)
        if stop > start:
            chunks.append(list(items[start:stop]))
        start = stop
    return chunks


def partition_range(lo: int, hi: int, parts: int) -> list[tuple[int, int]]:
    """Split the half-open integer range [lo, hi) into contiguous sub-ranges."""
    if hi <= lo:
        return []
    parts = max(1, min(parts, hi - lo))
    step = -(-(hi - lo) // parts)
    return [(start, min(start + step, hi)) for start in range(lo, hi, step)]


class ParallelSweep:
    """Runs a chunk function over worker processes and stops cleanly on SIGTERM/SIGINT."""

    def __init__(self, workers: int = 1):
        """
        Args:
            workers: Number of worker processes; 1 runs every chunk in-process
        """
        if workers < 1:
            raise ValueError(f"workers must be >= 1, got {workers}")
        self.workers = workers
        self._shutdown_requested = False
        self._inline_progress: tuple[int, int] | None = None

    def _handle_shutdown(self, signum: int, frame: FrameType | None) -> None:
        """Handle shutdown signals gracefully."""
        sig_name = "SIGTERM" if signum == signal.SIGTERM else "SIGINT"
        logger.info("Received %s, stopping sweep after in-flight chunks...", sig_name)
        self._shutdown_requested = True
        # An inline chunk may run for minutes; stop it where it is
        if self._inline_progress is not None:
            completed, total = self._inline_progress
            self._inline_progress = None
            raise SweepInterrupted(completed, total)

    def _install_handlers(self) -> dict[int, object]:
        # signal.signal only works from the main thread
        if threading.current_thread() is not threading.main_thread():
            return {}
        previous: dict[int, object] = {}
        for sig in (signal.SIGTERM, signal.SIGINT):
            previous[sig] = signal.getsignal(sig)
            signal.signal(sig, self._handle_shutdown)
        return previous

    @staticmethod
    def _restore_handlers(previous: dict[int, object]) -> None:
        for sig, handler in previous.items():
            signal.signal(sig, handler)  # type: ignore[arg-type]

    def map_chunks[T, R](self, func: Callable[[T], R], chunks: Sequence[T]) -> list[R]:
        """
        Apply func to every chunk and return the results in chunk order.

        Args:
            func: Module-level (picklable) function evaluated per chunk
            chunks: Work items, typically from partition() or partition_range()

        Returns:
            One result per chunk, in the order of `chunks`

        Raises:
            SweepInterrupted: If a shutdown signal arrives before all chunks finish
        """
        self._shutdown_requested = False
        total = len(chunks)
        if total == 0:
            return []

        previous = self._install_handlers()
        try:
            if self.workers == 1 or total == 1:
                return self._run_inline(func, chunks)
            return self._run_pool(func, chunks)
        finally:
            self._restore_handlers(previous)

    def _run_inline[T, R](self, func: Callable[[T], R], chunks: Sequence[T]) -> list[R]:
        results: list[R] = []
        total = len(chunks)
        try:
            for index, chunk in enumerate(chunks):
                self._inline_progress = (index, total)
                results.append(func(chunk))
                self._inline_progress = None
                if self._shutdown_requested:
                    raise SweepInterrupted(index + 1, total)
        finally:
            self._inline_progress = None
        return results

    def _run_pool[T, R](self, func: Callable[[T], R], chunks: Sequence[T]) -> list[R]:
        results: dict[int, R] = {}
        logger.debug("Dispatching %d chunks to %d workers", len(chunks), self.workers)
        with ProcessPoolExecutor(max_workers=min(self.workers, len(chunks))) as pool:
            pending: dict[Future[R], int] = {pool.submit(func, chunk): i for i, chunk in enumerate(chunks)}
            while pending:
                done, _ = wait(pending, timeout=0.5, return_when=FIRST_COMPLETED)
                for future in done:
                    index = pending.pop(future)
                    try:
                        results[index] = future.result()
                    except Exception:
                        logger.exception("Sweep chunk %d failed", index)
                        for other in pending:
                            other.cancel()
                        raise
                if self._shutdown_requested:
                    for future in pending:
                        future.cancel()
                    raise SweepInterrupted(len(results), len(chunks))
        return [results[i] for i in range(len(chunks))]
