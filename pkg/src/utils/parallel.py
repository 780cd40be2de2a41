# /src/utils/parallel.py
import sys
from multiprocessing import Pool
from typing import Callable, List, Optional, Sequence, TypeVar

import mpmath

from loguru import logger
from tqdm import tqdm

from src.config import configure_precision, get_config

T = TypeVar("T")
R = TypeVar("R")


def _init_worker(precision: int) -> None:
    configure_precision(precision)


def progress(iterable, total: Optional[int] = None, desc: str = ""):
    return tqdm(
        iterable,
        total=total,
        desc=desc,
        ncols=100,
        disable=not sys.stderr.isatty(),
    )


def parallel_map(
    fn: Callable[[T], R],
    items: Sequence[T],
    workers: Optional[int] = None,
    desc: str = "",
    chunksize: int = 16,
) -> List[R]:
    """
    Map a module-level function over items, in input order.

    With more than one worker the items are processed in a process pool whose
    workers inherit the current mpmath precision.
    """
    workers = get_config().WORKERS if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in progress(items, total=len(items), desc=desc)]

    logger.debug(f"{desc or 'parallel_map'}: {len(items)} items on {workers} workers")
    with Pool(processes=workers, initializer=_init_worker, initargs=(mpmath.mp.prec,)) as pool:
        return list(progress(pool.imap(fn, items, chunksize=chunksize), total=len(items), desc=desc))
