from __future__ import annotations

import threading
from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable, Generic, Sequence, Tuple, TypeVar

import numpy as np

from .constants import CACHE_MAX_ENTRIES, CACHE_QUANTUM

T = TypeVar("T")
Key = Tuple[int, ...]


@dataclass
class CacheStats:
    hits: int = 0
    misses: int = 0
    evictions: int = 0

    def reset(self) -> None:
        self.hits = 0
        self.misses = 0
        self.evictions = 0

    @property
    def hit_rate(self) -> float:
        total = self.hits + self.misses
        return 0.0 if total == 0 else self.hits / total


class SolveCache(Generic[T]):
    """
    Bounded LRU memo for expensive forward evaluations keyed by a quantized parameter vector.

      - key: round((theta - lower) / (quantum * range)) per component
      - at most max_entries values; the least recently used one goes first
      - get_or_compute() counts hits, misses and evictions in CacheStats
      - lock-protected so concurrent chains may share one cache
    """

    def __init__(
        self,
        bounds: Sequence[Tuple[float, float]],
        quantum: float = CACHE_QUANTUM,
        max_entries: int = CACHE_MAX_ENTRIES,
    ) -> None:
        if max_entries < 1:
            raise ValueError("max_entries must be at least 1")
        arr = np.asarray(bounds, dtype=float).reshape(-1, 2)
        self._lower = arr[:, 0]
        self._step = quantum * (arr[:, 1] - arr[:, 0])
        self.max_entries = max_entries
        self._store: "OrderedDict[Key, T]" = OrderedDict()
        self._lock = threading.Lock()
        self.cache_stats = CacheStats()

    def __len__(self) -> int:
        return len(self._store)

    def __contains__(self, theta: Sequence[float]) -> bool:
        return self.key(theta) in self._store

    def key(self, theta: Sequence[float]) -> Key:
        q = np.rint((np.asarray(theta, dtype=float) - self._lower) / self._step)
        return tuple(int(v) for v in q)

    def get_or_compute(self, theta: Sequence[float], compute: Callable[[], T]) -> T:
        key = self.key(theta)
        with self._lock:
            if key in self._store:
                self._store.move_to_end(key)
                self.cache_stats.hits += 1
                return self._store[key]
        value = compute()
        with self._lock:
            self.cache_stats.misses += 1
            if key in self._store:
                self._store.move_to_end(key)
                return self._store[key]
            self._store[key] = value
            while len(self._store) > self.max_entries:
                self._store.popitem(last=False)
                self.cache_stats.evictions += 1
        return value

    def clear(self) -> None:
        with self._lock:
            self._store.clear()
            self.cache_stats.reset()
