"""
Monte-Carlo block fan-out.

Blocks are independent (each owns a seeded generator), so results are
collected back in block order regardless of completion order or job count.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Sequence, Tuple, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")

Block = Tuple[int, int]  # (block index, size)


def run_blocks(task: Callable[[int, int], T], plan: Sequence[Block], jobs: int = 1) -> List[T]:
    """Run ``task(block, size)`` for every block; results in plan order."""
    if jobs < 1:
        raise ValueError(f"jobs must be >= 1, got {jobs}")
    if jobs == 1 or len(plan) <= 1:
        return [task(block, size) for block, size in plan]

    logger.debug(f"Running {len(plan)} blocks on {jobs} threads")
    with ThreadPoolExecutor(max_workers=jobs, thread_name_prefix="mc") as executor:
        futures = [executor.submit(task, block, size) for block, size in plan]
        return [future.result() for future in futures]
