"""Parallel parameter scans with results merged in input order."""

import logging
from collections.abc import Callable
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from concurrent.futures import as_completed
from dataclasses import dataclass
from typing import Generic
from typing import TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


@dataclass
class SweepOutcome(Generic[T, R]):
    """Result of one sweep task, or the error that stopped it."""

    index: int
    item: T
    result: R | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def run_sweep(
    func: Callable[[T], R],
    items: Sequence[T],
    threads: int = 1,
    label: str = "task",
    progress_callback: Callable[[int, str], None] | None = None,
) -> list[SweepOutcome[T, R]]:
    """Apply ``func`` to every item on a thread pool.

    Outcomes are stored at the position of their input, so the returned list
    has the same order for any number of workers. A failing task is logged
    and recorded in its outcome; it does not stop the other tasks.

    Args:
        func: Callable evaluated once per item
        items: Inputs of the sweep
        threads: Number of worker threads
        label: Name used in log and progress messages
        progress_callback: Optional callback receiving (completed, message)

    Returns:
        One SweepOutcome per item, in input order
    """
    if threads < 1:
        raise ValueError(f"threads must be at least 1, got {threads}")

    outcomes: list[SweepOutcome[T, R]] = [
        SweepOutcome(index=i, item=item) for i, item in enumerate(items)
    ]
    total = len(outcomes)
    completed = 0

    logger.info(f"Running {total} {label}s with {threads} worker(s)")

    with ThreadPoolExecutor(max_workers=threads) as executor:
        future_to_index = {
            executor.submit(func, outcome.item): outcome.index for outcome in outcomes
        }

        for future in as_completed(future_to_index):
            index = future_to_index[future]
            try:
                outcomes[index].result = future.result()
            except Exception as e:
                logger.error(f"{label.capitalize()} {index} failed: {e}")
                outcomes[index].error = str(e)

            completed += 1
            if progress_callback:
                progress_callback(completed, f"{label.capitalize()}s ({completed}/{total})")
            logger.debug(f"Completed {label} {completed}/{total} (index {index})")

    failures = sum(1 for outcome in outcomes if not outcome.ok)
    if failures:
        logger.warning(f"{failures} of {total} {label}s failed")
    return outcomes
