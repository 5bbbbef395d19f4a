"""Offline trace post-processing: sanitize, coalesce, free-annotate, encode.

The pipeline turns a raw event stream into the replayable artifact:

    sanitize          drop activity on maps without creation events, on
                      copies of such maps, and on maps whose keys showed
                      unstable hashes
    coalesce          merge uninterrupted same-outcome iterator-advance
                      runs into one counted opcode
    insert_free_events  add one FreeMap/FreeIter immediately after each
                      object's last use
    encode            renumber ids into dense reusable slots and key
                      indexes, and pack everything into int32 opcode
                      triples

Processed trace file format: magic "MPT1", u32 version=1, then a single
zlib/DEFLATE stream compressing the payload:

    u32 key count | i32 key hashes | u32 max_map_slots | u32 max_iter_slots |
    u64 op-triple count | op triples (3 x i32 each)

Each triple is (word, operand1, operand2). The word carries the op kind in
bits 0-7 plus op-specific flags: outcome in bit 8 (hit/update/yielded);
for IterNew the view in bits 9-10; for Create the load factor thousandths
in bits 9-18 and the spread flag in bit 19. Operands:

    Create       map slot, requested capacity
    CreateCopy   map slot, source map slot
    Get/Put/Remove/ContainsKey   map slot, key index
    Clear        map slot, 0
    IterNew      map slot, iterator slot
    IterAdvance  iterator slot, step count
    IterRemove   iterator slot, 0
    FreeMap      map slot, 0
    FreeIter     iterator slot, 0
"""

from __future__ import annotations

import heapq
import struct
import zlib
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import TraceFormatError, TraceIntegrityError
from .tracer import (
    RawEvent,
    RawOpKind,
    RawTrace,
    unpack_create_aux,
    unpack_iternew_aux,
)

MAGIC = b"MPT1"
VERSION = 1

OP_KIND_MASK = 0xFF
OUTCOME_BIT = 1 << 8
VIEW_SHIFT = 9
VIEW_MASK = 0x3
LF_SHIFT = 9
LF_MASK = 0x3FF
SPREAD_BIT = 1 << 19

_MAP_OPS = frozenset(
    (
        RawOpKind.CREATE,
        RawOpKind.CREATE_COPY,
        RawOpKind.GET,
        RawOpKind.PUT,
        RawOpKind.REMOVE,
        RawOpKind.CONTAINS_KEY,
        RawOpKind.CLEAR,
        RawOpKind.ITER_NEW,
        RawOpKind.FREE_MAP,
    )
)
_ITER_OPS = frozenset((RawOpKind.ITER_ADVANCE, RawOpKind.ITER_REMOVE, RawOpKind.FREE_ITER))
_KEYED_OPS = frozenset(
    (RawOpKind.GET, RawOpKind.PUT, RawOpKind.REMOVE, RawOpKind.CONTAINS_KEY)
)
_MAP_MUTATORS = frozenset((RawOpKind.PUT, RawOpKind.REMOVE, RawOpKind.CLEAR))


@dataclass(frozen=True, slots=True)
class Characterization:
    """Operation-mix tallies for one processed trace."""

    events: int = 0
    creates: int = 0
    reads: int = 0
    writes: int = 0
    iterates: int = 0
    bytes: int = 0

    def as_dict(self) -> dict[str, int]:
        return {
            "events": self.events,
            "creates": self.creates,
            "reads": self.reads,
            "writes": self.writes,
            "iterates": self.iterates,
            "bytes": self.bytes,
        }


@dataclass(slots=True)
class ProcessedTrace:
    """The replayable artifact: dense key hashes, slot bounds, opcode triples."""

    key_hashes: np.ndarray  # int32, index = key index
    max_map_slots: int
    max_iter_slots: int
    ops: np.ndarray  # int32, flat (word, op1, op2) triples
    encoded_size: int
    counts: Characterization

    @property
    def op_count(self) -> int:
        return len(self.ops) // 3

    def triples(self):
        ops = self.ops
        for i in range(0, len(ops), 3):
            yield int(ops[i]), int(ops[i + 1]), int(ops[i + 2])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ProcessedTrace):
            return NotImplemented
        return (
            self.max_map_slots == other.max_map_slots
            and self.max_iter_slots == other.max_iter_slots
            and np.array_equal(self.key_hashes, other.key_hashes)
            and np.array_equal(self.ops, other.ops)
            and self.counts == other.counts
        )


def _iter_map_of(events: list[RawEvent]) -> dict[int, int]:
    """iterator id -> owning map id, from IterNew events."""
    owners: dict[int, int] = {}
    for e in events:
        if e.op is RawOpKind.ITER_NEW:
            iter_id, _ = unpack_iternew_aux(e.aux)
            owners[iter_id] = e.map_id
    return owners


def sanitize(raw: RawTrace) -> RawTrace:
    """Drop events that cannot be replayed consistently.

    Removed: activity on maps with no creation event in the trace
    (foreign maps), on maps that touched a key whose recorded hash was
    unstable (poisoned), on copies of removed maps (transitively), and on
    iterators of removed maps. Order of surviving events is unchanged.
    """
    events = raw.events

    key_hash: dict[int, int] = {}
    poisoned_keys: set[int] = set()
    for e in events:
        if e.key_id is None:
            continue
        seen = key_hash.get(e.key_id)
        if seen is None:
            key_hash[e.key_id] = e.hash
        elif seen != e.hash:
            poisoned_keys.add(e.key_id)

    created: set[int] = set()
    referenced: set[int] = set()
    copy_edges: list[tuple[int, int]] = []
    poisoned_maps: set[int] = set()
    for e in events:
        if e.op is RawOpKind.CREATE:
            created.add(e.map_id)
        elif e.op is RawOpKind.CREATE_COPY:
            created.add(e.map_id)
            referenced.add(e.aux)
            copy_edges.append((e.map_id, e.aux))
        if e.op in _MAP_OPS:
            referenced.add(e.map_id)
            if e.key_id is not None and e.key_id in poisoned_keys:
                poisoned_maps.add(e.map_id)

    dropped = (referenced - created) | poisoned_maps
    changed = True
    while changed:
        changed = False
        for copy_id, source_id in copy_edges:
            if source_id in dropped and copy_id not in dropped:
                dropped.add(copy_id)
                changed = True

    iter_owner = _iter_map_of(events)
    out = []
    for e in events:
        if e.op in _ITER_OPS:
            owner = iter_owner.get(e.map_id)
            if owner is None or owner in dropped:
                continue
        elif e.map_id in dropped:
            continue
        out.append(e)
    return RawTrace(out)


def coalesce(raw: RawTrace) -> RawTrace:
    """Merge consecutive same-outcome advances of one iterator.

    A run is broken by any mutating operation on the iterator's map (put,
    remove, clear, or an iterator-remove through any of its iterators) and
    by an outcome flip (yielding vs. exhausted), so the merged step count
    always equals the number of recorded yields for yielding runs.
    """
    iter_owner = _iter_map_of(raw.events)
    out: list[RawEvent] = []
    # iterator id -> [index in out, outcome, count]
    open_runs: dict[int, list[int]] = {}
    runs_by_map: dict[int, set[int]] = {}

    def close(iter_id: int) -> None:
        run = open_runs.pop(iter_id, None)
        if run is None:
            return
        idx, _, count = run
        out[idx] = replace(out[idx], aux=count)
        runs_by_map[iter_owner[iter_id]].discard(iter_id)

    def close_map(map_id: int) -> None:
        for iter_id in list(runs_by_map.get(map_id, ())):
            close(iter_id)

    for e in raw.events:
        if e.op is RawOpKind.ITER_ADVANCE:
            run = open_runs.get(e.map_id)
            if run is not None and run[1] == e.outcome:
                run[2] += e.aux
                continue
            close(e.map_id)
            out.append(e)
            open_runs[e.map_id] = [len(out) - 1, e.outcome, e.aux]
            runs_by_map.setdefault(iter_owner[e.map_id], set()).add(e.map_id)
            continue
        if e.op in _MAP_MUTATORS:
            close_map(e.map_id)
        elif e.op is RawOpKind.ITER_REMOVE:
            close_map(iter_owner[e.map_id])
        out.append(e)
    for iter_id in list(open_runs):
        close(iter_id)
    return RawTrace(out)


def insert_free_events(raw: RawTrace) -> RawTrace:
    """Place one FreeMap/FreeIter directly after each object's last use.

    A map's uses include every event of its iterators and every copy made
    from it, so the map is provably final when its free event runs.
    """
    iter_owner = _iter_map_of(raw.events)
    last_map: dict[int, int] = {}
    last_iter: dict[int, int] = {}
    for i, e in enumerate(raw.events):
        if e.op in _ITER_OPS:
            last_iter[e.map_id] = i
            last_map[iter_owner[e.map_id]] = i
        else:
            last_map[e.map_id] = i
            if e.op is RawOpKind.CREATE_COPY:
                last_map[e.aux] = i
            elif e.op is RawOpKind.ITER_NEW:
                iter_id, _ = unpack_iternew_aux(e.aux)
                last_iter[iter_id] = i

    frees_iter: dict[int, list[int]] = {}
    frees_map: dict[int, list[int]] = {}
    for iter_id, idx in last_iter.items():
        frees_iter.setdefault(idx, []).append(iter_id)
    for map_id, idx in last_map.items():
        frees_map.setdefault(idx, []).append(map_id)

    out: list[RawEvent] = []
    for i, e in enumerate(raw.events):
        out.append(e)
        for iter_id in sorted(frees_iter.get(i, ())):
            out.append(RawEvent(e.thread_id, RawOpKind.FREE_ITER, iter_id))
        for map_id in sorted(frees_map.get(i, ())):
            out.append(RawEvent(e.thread_id, RawOpKind.FREE_MAP, map_id))
    return RawTrace(out)


class _SlotAllocator:
    """Dense slots with lowest-free-first reuse."""

    def __init__(self):
        self.high_water = 0
        self._free: list[int] = []
        self._live: dict[int, int] = {}  # object id -> slot

    def acquire(self, obj_id: int) -> int:
        if self._free:
            slot = heapq.heappop(self._free)
        else:
            slot = self.high_water
            self.high_water += 1
        self._live[obj_id] = slot
        return slot

    def slot_of(self, obj_id: int) -> int:
        try:
            return self._live[obj_id]
        except KeyError:
            raise TraceIntegrityError(f"object {obj_id} is not live") from None

    def release(self, obj_id: int) -> int:
        slot = self.slot_of(obj_id)
        del self._live[obj_id]
        heapq.heappush(self._free, slot)
        return slot

    @property
    def live_count(self) -> int:
        return len(self._live)


def encode(raw: RawTrace) -> ProcessedTrace:
    """Pack a sanitized, coalesced, free-annotated stream into opcode triples."""
    maps = _SlotAllocator()
    iters = _SlotAllocator()
    key_index: dict[int, int] = {}
    key_hashes: list[int] = []
    words: list[int] = []

    def key_of(e: RawEvent) -> int:
        idx = key_index.get(e.key_id)
        if idx is None:
            idx = len(key_hashes)
            key_index[e.key_id] = idx
            key_hashes.append(e.hash)
        elif key_hashes[idx] != e.hash:
            raise TraceIntegrityError(
                f"key {e.key_id} hash changed; trace was not sanitized"
            )
        return idx

    for e in raw.events:
        op = e.op
        word = int(op)
        if op is RawOpKind.CREATE:
            capacity, lf, spread = unpack_create_aux(e.aux)
            if capacity > 0x7FFFFFFF:
                raise TraceIntegrityError(f"requested capacity {capacity} overflows i32")
            word |= (lf << LF_SHIFT) | (SPREAD_BIT if spread else 0)
            words += (word, maps.acquire(e.map_id), capacity)
        elif op is RawOpKind.CREATE_COPY:
            src = maps.slot_of(e.aux)
            words += (word, maps.acquire(e.map_id), src)
        elif op in _KEYED_OPS:
            word |= OUTCOME_BIT if e.outcome else 0
            words += (word, maps.slot_of(e.map_id), key_of(e))
        elif op is RawOpKind.CLEAR:
            words += (word, maps.slot_of(e.map_id), 0)
        elif op is RawOpKind.ITER_NEW:
            iter_id, view = unpack_iternew_aux(e.aux)
            word |= int(view) << VIEW_SHIFT
            words += (word, maps.slot_of(e.map_id), iters.acquire(iter_id))
        elif op is RawOpKind.ITER_ADVANCE:
            word |= OUTCOME_BIT if e.outcome else 0
            words += (word, iters.slot_of(e.map_id), e.aux)
        elif op is RawOpKind.ITER_REMOVE:
            words += (word, iters.slot_of(e.map_id), 0)
        elif op is RawOpKind.FREE_MAP:
            words += (word, maps.release(e.map_id), 0)
        elif op is RawOpKind.FREE_ITER:
            words += (word, iters.release(e.map_id), 0)
        else:  # pragma: no cover - enum is closed
            raise TraceIntegrityError(f"unencodable op {op}")

    if maps.live_count or iters.live_count:
        raise TraceIntegrityError(
            "input is missing free events; run insert_free_events first"
        )

    trace = ProcessedTrace(
        key_hashes=np.asarray(key_hashes, dtype=np.int32),
        max_map_slots=maps.high_water,
        max_iter_slots=iters.high_water,
        ops=np.asarray(words, dtype=np.int32),
        encoded_size=0,
        counts=Characterization(),
    )
    data = to_bytes(trace)
    trace.encoded_size = len(data)
    trace.counts = stats(trace)
    return trace


def process(raw: RawTrace) -> ProcessedTrace:
    """Full post-processing pipeline: sanitize, coalesce, free-annotate, encode."""
    return encode(insert_free_events(coalesce(sanitize(raw))))


def stats(trace: ProcessedTrace) -> Characterization:
    """Tally the operation mix: creates, reads, writes, iterates, total events."""
    kinds = trace.ops[0::3] & OP_KIND_MASK
    count = np.bincount(kinds, minlength=int(RawOpKind.FREE_ITER) + 1)

    def n(*ops: RawOpKind) -> int:
        return int(sum(count[int(o)] for o in ops))

    return Characterization(
        events=trace.op_count,
        creates=n(RawOpKind.CREATE, RawOpKind.CREATE_COPY),
        reads=n(RawOpKind.GET, RawOpKind.CONTAINS_KEY),
        writes=n(RawOpKind.PUT, RawOpKind.REMOVE, RawOpKind.CLEAR),
        iterates=n(RawOpKind.ITER_NEW, RawOpKind.ITER_ADVANCE, RawOpKind.ITER_REMOVE),
        bytes=trace.encoded_size,
    )


# -- serialization ----------------------------------------------------------------


def to_bytes(trace: ProcessedTrace) -> bytes:
    payload = b"".join(
        (
            struct.pack("<I", len(trace.key_hashes)),
            trace.key_hashes.astype("<i4").tobytes(),
            struct.pack("<II", trace.max_map_slots, trace.max_iter_slots),
            struct.pack("<Q", trace.op_count),
            trace.ops.astype("<i4").tobytes(),
        )
    )
    return MAGIC + struct.pack("<I", VERSION) + zlib.compress(payload)


def decode(data: bytes) -> ProcessedTrace:
    if len(data) < 8:
        raise TraceFormatError("shorter than the 8-byte header", offset=0)
    if data[:4] != MAGIC:
        raise TraceFormatError(f"bad magic {data[:4]!r}, expected {MAGIC!r}", offset=0)
    (version,) = struct.unpack_from("<I", data, 4)
    if version != VERSION:
        raise TraceFormatError(f"unsupported version {version}", offset=4)
    try:
        payload = zlib.decompress(data[8:])
    except zlib.error as exc:
        raise TraceFormatError(f"corrupt DEFLATE payload: {exc}", offset=8) from None

    # Offsets below are relative to the decompressed payload.
    pos = 0

    def need(nbytes: int, what: str) -> int:
        nonlocal pos
        if pos + nbytes > len(payload):
            raise TraceFormatError(f"payload truncated reading {what}", offset=pos)
        start = pos
        pos += nbytes
        return start

    (key_count,) = struct.unpack_from("<I", payload, need(4, "key count"))
    key_hashes = np.frombuffer(
        payload, dtype="<i4", count=key_count, offset=need(4 * key_count, "key hashes")
    ).astype(np.int32)
    map_slots, iter_slots = struct.unpack_from("<II", payload, need(8, "slot bounds"))
    (op_count,) = struct.unpack_from("<Q", payload, need(8, "op count"))
    ops = np.frombuffer(
        payload, dtype="<i4", count=op_count * 3, offset=need(12 * op_count, "op triples")
    ).astype(np.int32)
    if pos != len(payload):
        raise TraceFormatError(
            f"{len(payload) - pos} trailing bytes after op triples", offset=pos
        )

    trace = ProcessedTrace(
        key_hashes=key_hashes,
        max_map_slots=map_slots,
        max_iter_slots=iter_slots,
        ops=ops,
        encoded_size=len(data),
        counts=Characterization(),
    )
    trace.counts = stats(trace)
    return trace


def write_processed(trace: ProcessedTrace, path: str | Path) -> None:
    Path(path).write_bytes(to_bytes(trace))


def read_processed(path: str | Path) -> ProcessedTrace:
    return decode(Path(path).read_bytes())
