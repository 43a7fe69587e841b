"""Set-associative LRU cache simulation over access traces.

Byte addresses are array base + element offset * element size.  Distinct
arrays get disjoint line-aligned base regions, staggered by one extra line
each so equal-sized buffers do not start in the same cache set (separately
allocated arrays rarely share alignment in practice, and perfect alignment
manufactures conflict storms that say nothing about the access pattern).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .errors import ShapeError


@dataclass(frozen=True)
class CacheConfig:
    line_bytes: int = 64
    capacity_bytes: int = 32768
    associativity: int = 8
    element_bytes: int = 8  # float64 and int64
    policy: str = "lru"

    def __post_init__(self):
        for v in (self.line_bytes, self.capacity_bytes, self.associativity):
            if v & (v - 1) or v <= 0:
                raise ShapeError(f"cache parameters must be powers of two, got {v}")
        if self.capacity_bytes % (self.line_bytes * self.associativity):
            raise ShapeError("capacity must be divisible by line*associativity")
        if self.policy != "lru":
            raise ShapeError(f"unsupported policy {self.policy!r}")

    @property
    def sets(self) -> int:
        return self.capacity_bytes // (self.line_bytes * self.associativity)


@dataclass
class CacheStats:
    hits: int = 0
    misses: int = 0
    evictions: int = 0
    per_array: dict = field(default_factory=dict)  # name -> [hits, misses]

    @property
    def accesses(self) -> int:
        return self.hits + self.misses

    def note(self, name: str, hit: bool):
        h = self.per_array.setdefault(name, [0, 0])
        if hit:
            self.hits += 1
            h[0] += 1
        else:
            self.misses += 1
            h[1] += 1


def placement(regions: Sequence[tuple[str, int]], cfg: CacheConfig) -> dict[str, int]:
    """Byte base address per array: line-aligned, disjoint, each staggered by
    one extra line relative to the previous region."""
    bases = {}
    cur = 0
    for k, (name, elems) in enumerate(regions):
        cur = -(-cur // cfg.line_bytes) * cfg.line_bytes + (k + 1) * cfg.line_bytes
        bases[name] = cur
        cur += elems * cfg.element_bytes
    return bases


class Cache:
    """Reference set-associative LRU cache, one access at a time."""

    def __init__(self, cfg: CacheConfig):
        self.cfg = cfg
        n = cfg.sets * cfg.associativity
        self.tags = [-1] * n
        self.stamps = [0] * n
        self.clock = 0
        self.evictions = 0

    def touch(self, byte_addr: int) -> bool:
        """Access one byte address; True on hit."""
        cfg = self.cfg
        line = byte_addr // cfg.line_bytes
        base = (line % cfg.sets) * cfg.associativity
        self.clock += 1
        for w in range(cfg.associativity):
            if self.tags[base + w] == line:
                self.stamps[base + w] = self.clock
                return True
        lru = base
        for w in range(1, cfg.associativity):
            if self.stamps[base + w] < self.stamps[lru]:
                lru = base + w
        if self.tags[lru] >= 0:
            self.evictions += 1
        self.tags[lru] = line
        self.stamps[lru] = self.clock
        return False


def simulate(
    trace: Iterable[tuple[str, int, str]],
    cfg: Optional[CacheConfig] = None,
    regions: Optional[Sequence[tuple[str, int]]] = None,
) -> CacheStats:
    """Run the LRU model over a trace of (array, element offset, kind).

    ``regions`` fixes sizes and placement order; without it the trace is
    buffered first and regions are inferred from the largest offsets, in
    first-appearance order.
    """
    cfg = cfg or CacheConfig()
    if regions is None:
        trace = list(trace)
        sizes: dict[str, int] = {}
        order: list[str] = []
        for name, off, _ in trace:
            if name not in sizes:
                order.append(name)
                sizes[name] = 0
            sizes[name] = max(sizes[name], off + 1)
        regions = [(n, sizes[n]) for n in order]
    bases = placement(regions, cfg)

    cache = Cache(cfg)
    stats = CacheStats()
    for name, off, _kind in trace:
        hit = cache.touch(bases[name] + off * cfg.element_bytes)
        stats.note(name, hit)
    stats.evictions = cache.evictions
    return stats
