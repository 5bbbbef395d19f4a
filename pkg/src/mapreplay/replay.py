"""Replay of processed traces against one pluggable map implementation.

Setup preallocates every mockup key and the map/iterator slot arrays so the
timed phase creates nothing but maps and iterators. The replay phase is a
single dispatch loop over the opcode triples, bound to exactly one adapter
class per run (monomorphic replay):

    timing      lean loop, wall-clock of the dispatch loop only
    counting    adapter must be RefMap; OpCounters aggregated at FreeMap
    validating  every outcome bit compared against the recorded one, state
                digests captured at each FreeMap

Put always stores the one shared VALUE_TOKEN; recorded traces carry no
value information. Copy construction uses the run's default configuration
(the override's, when set), sized to its source by the adapter itself.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

from .errors import ConfigError, FidelityError, TraceIntegrityError
from .postproc import (
    LF_MASK,
    LF_SHIFT,
    OP_KIND_MASK,
    SPREAD_BIT,
    VIEW_MASK,
    VIEW_SHIFT,
    ProcessedTrace,
)
from .refmap import (
    DEFAULT_CONFIG,
    MapConfig,
    OpCounters,
    PyDictMap,
    RefMap,
    View,
)

MODES = ("timing", "counting", "validating")


class _ValueToken:
    __slots__ = ()

    def __repr__(self) -> str:
        return "<value>"


#: The single opaque value stored by every replayed put.
VALUE_TOKEN = _ValueToken()


class MockupKey:
    """Stand-in for an application key: preserved hash, identity equality."""

    __slots__ = ("index", "_hash")

    def __init__(self, index: int, hash32: int):
        self.index = index
        self._hash = hash32

    def hash32(self) -> int:
        return self._hash

    def __eq__(self, other: object) -> bool:
        return self is other or (isinstance(other, MockupKey) and other.index == self.index)

    def __hash__(self) -> int:
        return self.index

    def __repr__(self) -> str:
        return f"MockupKey({self.index}, hash={self._hash})"


@dataclass(frozen=True, slots=True)
class ConfigOverride:
    """Replay-time substitute for creates that recorded the default config."""

    dic: int
    lf_milli: int = DEFAULT_CONFIG.load_factor_milli

    def config(self) -> MapConfig:
        return MapConfig(self.dic, self.lf_milli, DEFAULT_CONFIG.spread_hashes)


def override_config(dic: int, lf_milli: int = DEFAULT_CONFIG.load_factor_milli) -> ConfigOverride:
    """Rule: creates recorded with the default (capacity, load factor,
    spreading) are constructed with (dic, lf_milli) instead; creates with
    explicit non-default arguments keep their recorded configuration."""
    return ConfigOverride(dic, lf_milli)


@dataclass(slots=True)
class ReplayResult:
    elapsed: float
    ops_executed: int
    factory_calls: int
    counters: OpCounters | None = None
    digests: dict[int, int] | None = None  # FreeMap op index -> state digest
    map_digests: list[int] | None = None  # digests in map-creation order


class ReplaySession:
    """Decoded trace plus everything preallocated for repeated replays."""

    def __init__(self, trace: ProcessedTrace, memory_budget: int | None = None):
        required = len(trace.key_hashes) + trace.max_map_slots + trace.max_iter_slots
        if memory_budget is not None and required > memory_budget:
            raise ConfigError(
                f"trace needs {len(trace.key_hashes)} mockup keys, "
                f"{trace.max_map_slots} map slots and {trace.max_iter_slots} iterator "
                f"slots ({required} objects), above the budget of {memory_budget}"
            )
        self.trace = trace
        self.keys = [
            MockupKey(i, int(h)) for i, h in enumerate(trace.key_hashes)
        ]
        self._ops: list[int] = trace.ops.tolist()

    def replay(
        self,
        factory: type,
        mode: str = "timing",
        override: ConfigOverride | None = None,
    ) -> ReplayResult:
        if mode not in MODES:
            raise ConfigError(f"unknown replay mode {mode!r}; expected one of {MODES}")
        if mode == "counting" and not (isinstance(factory, type) and issubclass(factory, RefMap)):
            raise ConfigError("counting mode requires a RefMap-based adapter")
        if mode == "timing":
            return self._replay_timing(factory, override)
        return self._replay_checked(factory, mode, override)

    # -- timing loop: no checks beyond what Python itself enforces -----------

    def _replay_timing(self, factory: type, override: ConfigOverride | None) -> ReplayResult:
        ops = self._ops
        keys = self.keys
        maps: list = [None] * self.trace.max_map_slots
        iters: list = [None] * self.trace.max_iter_slots
        default_cfg = override.config() if override else DEFAULT_CONFIG
        factory_calls = 0
        i = 0
        n = len(ops)
        start = time.perf_counter()
        try:
            while i < n:
                word = ops[i]
                a = ops[i + 1]
                b = ops[i + 2]
                i += 3
                kind = word & OP_KIND_MASK
                if kind == 3:  # GET
                    maps[a].get(keys[b])
                elif kind == 4:  # PUT
                    maps[a].put(keys[b], VALUE_TOKEN)
                elif kind == 9:  # ITER_ADVANCE
                    it = iters[a]
                    for _ in range(b):
                        it.advance()
                elif kind == 6:  # CONTAINS_KEY
                    maps[a].contains_key(keys[b])
                elif kind == 5:  # REMOVE
                    maps[a].remove(keys[b])
                elif kind == 8:  # ITER_NEW
                    iters[b] = maps[a].iterator(View((word >> VIEW_SHIFT) & VIEW_MASK))
                elif kind == 10:  # ITER_REMOVE
                    iters[a].remove()
                elif kind == 1:  # CREATE
                    maps[a] = factory(_create_config(word, b, override))
                    factory_calls += 1
                elif kind == 2:  # CREATE_COPY
                    maps[a] = factory.copy_of(maps[b], default_cfg)
                    factory_calls += 1
                elif kind == 7:  # CLEAR
                    maps[a].clear()
                elif kind == 11:  # FREE_MAP
                    maps[a] = None
                elif kind == 12:  # FREE_ITER
                    iters[a] = None
                else:
                    raise TraceIntegrityError(f"op {(i - 3) // 3}: unknown opcode {kind}")
        except AttributeError as exc:
            raise TraceIntegrityError(
                f"op {(i - 3) // 3}: slot used after free ({exc})"
            ) from None
        elapsed = time.perf_counter() - start
        return ReplayResult(elapsed, n // 3, factory_calls)

    # -- checked loop: counting and validating modes --------------------------

    def _replay_checked(
        self, factory: type, mode: str, override: ConfigOverride | None
    ) -> ReplayResult:
        validating = mode == "validating"
        counting = mode == "counting"
        ops = self._ops
        keys = self.keys
        maps: list = [None] * self.trace.max_map_slots
        iters: list = [None] * self.trace.max_iter_slots
        default_cfg = override.config() if override else DEFAULT_CONFIG
        counters = OpCounters() if counting else None
        digests: dict[int, int] = {}
        map_digests: list[int] = []
        create_ordinal: dict[int, int] = {}  # slot -> ordinal of current occupant
        created = 0
        factory_calls = 0

        def live_map(slot: int, op_index: int):
            m = maps[slot]
            if m is None:
                raise TraceIntegrityError(f"op {op_index}: map slot {slot} used after free")
            return m

        def live_iter(slot: int, op_index: int):
            it = iters[slot]
            if it is None:
                raise TraceIntegrityError(
                    f"op {op_index}: iterator slot {slot} used after free"
                )
            return it

        def check(flag: bool, recorded: int, op_index: int, what: str) -> None:
            if int(flag) != recorded:
                raise FidelityError(
                    f"{what}: replay produced {'hit' if flag else 'miss'} but the "
                    f"trace recorded {'hit' if recorded else 'miss'}",
                    op_index=op_index,
                )

        start = time.perf_counter()
        n = len(ops)
        for i in range(0, n, 3):
            word = ops[i]
            a = ops[i + 1]
            b = ops[i + 2]
            kind = word & OP_KIND_MASK
            op_index = i // 3
            recorded = (word >> 8) & 1
            if kind == 3:  # GET
                got = live_map(a, op_index).get(keys[b])
                if validating:
                    check(got is not None, recorded, op_index, "get")
            elif kind == 4:  # PUT
                old = live_map(a, op_index).put(keys[b], VALUE_TOKEN)
                if validating:
                    check(old is not None, recorded, op_index, "put")
            elif kind == 9:  # ITER_ADVANCE
                it = live_iter(a, op_index)
                for _ in range(b):
                    item = it.advance()
                    if validating:
                        check(item is not None, recorded, op_index, "iterator advance")
            elif kind == 6:  # CONTAINS_KEY
                found = live_map(a, op_index).contains_key(keys[b])
                if validating:
                    check(found, recorded, op_index, "containsKey")
            elif kind == 5:  # REMOVE
                old = live_map(a, op_index).remove(keys[b])
                if validating:
                    check(old is not None, recorded, op_index, "remove")
            elif kind == 8:  # ITER_NEW
                iters[b] = live_map(a, op_index).iterator(
                    View((word >> VIEW_SHIFT) & VIEW_MASK)
                )
            elif kind == 10:  # ITER_REMOVE
                live_iter(a, op_index).remove()
            elif kind == 1:  # CREATE
                maps[a] = factory(_create_config(word, b, override))
                create_ordinal[a] = created
                created += 1
                factory_calls += 1
                if validating:
                    map_digests.append(0)
            elif kind == 2:  # CREATE_COPY
                maps[a] = factory.copy_of(live_map(b, op_index), default_cfg)
                create_ordinal[a] = created
                created += 1
                factory_calls += 1
                if validating:
                    map_digests.append(0)
            elif kind == 7:  # CLEAR
                live_map(a, op_index).clear()
            elif kind == 11:  # FREE_MAP
                m = live_map(a, op_index)
                if counting:
                    counters.add(m.counters)
                if validating and hasattr(m, "state_digest"):
                    d = m.state_digest()
                    digests[op_index] = d
                    map_digests[create_ordinal[a]] = d
                maps[a] = None
            elif kind == 12:  # FREE_ITER
                live_iter(a, op_index)
                iters[a] = None
            else:
                raise TraceIntegrityError(f"op {op_index}: unknown opcode {kind}")
        elapsed = time.perf_counter() - start
        return ReplayResult(
            elapsed,
            n // 3,
            factory_calls,
            counters=counters,
            digests=digests if validating else None,
            map_digests=map_digests if validating else None,
        )


def _create_config(word: int, capacity: int, override: ConfigOverride | None) -> MapConfig:
    lf = (word >> LF_SHIFT) & LF_MASK
    spread = bool(word & SPREAD_BIT)
    if (
        override is not None
        and capacity == DEFAULT_CONFIG.initial_capacity
        and lf == DEFAULT_CONFIG.load_factor_milli
        and spread == DEFAULT_CONFIG.spread_hashes
    ):
        return override.config()
    return MapConfig(capacity, lf, spread)


def setup(trace: ProcessedTrace, memory_budget: int | None = None) -> ReplaySession:
    """Build a ReplaySession: mockup keys and slot arrays, no maps yet."""
    return ReplaySession(trace, memory_budget)


def replay(
    session: ReplaySession,
    factory: type,
    mode: str = "timing",
    override: ConfigOverride | None = None,
) -> ReplayResult:
    """Interpret the session's opcode stream against one adapter class."""
    return session.replay(factory, mode, override)


#: Named adapter implementations selectable from the command line.
IMPLEMENTATIONS: dict[str, type] = {
    "refmap": RefMap,
    "pydict": PyDictMap,
}


def get_implementation(name: str) -> type:
    try:
        return IMPLEMENTATIONS[name]
    except KeyError:
        known = ", ".join(sorted(IMPLEMENTATIONS))
        raise ConfigError(f"unknown implementation {name!r}; known: {known}") from None
