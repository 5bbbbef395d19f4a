"""A tour of the reference hash map: buckets, thresholds, and work counters.

The reference map mirrors the classic chained design: a lazily allocated
power-of-two table, a resize threshold of capacity * load factor, chains
that grow at the tail, and a table that never shrinks. Its counters turn
structural work (resizes, collision probes, bucket scans) into exact,
noise-free integers.
"""

from mapreplay import MapConfig, RefMap, View, iterate, normalize_capacity, threshold
from mapreplay.workloads import IntKey

print("=== capacities and thresholds ===")
for requested in (1, 13, 16, 17, 100, 2**30 + 1):
    print(f"requested {requested:>12} -> table capacity {normalize_capacity(requested)}")
print(f"default threshold: 16 * 0.75 = {threshold(16, 750)} entries before doubling")

print("\n=== lazy allocation and the resize schedule ===")
m = RefMap()  # default: capacity 16, load factor 0.75
print(f"before any insert: capacity={m.capacity()} (table not yet allocated)")
for i in range(49):
    before = m.counters.resizes
    m.put(IntKey(i, hash32=i), i)
    if m.counters.resizes != before:
        print(f"insert #{i + 1:>2}: resized to capacity {m.capacity()}")
print(f"after 49 inserts: size={m.size()}, capacity={m.capacity()}, "
      f"entries rehashed in total: {m.counters.entries_moved}")

print("\n=== collision chains ===")
c = RefMap()
for i in range(4):
    c.put(IntKey(i, hash32=0x5EED), i)  # four distinct keys, one shared hash
c.counters.reset()
c.get(IntKey(3, hash32=0x5EED))
print(f"hit at chain position 4 cost {c.counters.collision_probes} probes")
c.get(IntKey(99, hash32=0x5EED))
print(f"miss in the same bucket cost {c.counters.collision_probes - 3} more probes")

print("\n=== iteration scans every slot once ===")
sparse = RefMap(MapConfig(128))
for i in range(8):
    sparse.put(IntKey(i), i)
sparse.counters.reset()
yielded = iterate(sparse, View.ENTRIES)
print(f"8 entries in a 128-slot table: yielded {yielded}, "
      f"buckets scanned {sparse.counters.buckets_scanned}")

dense = RefMap()  # 8 entries, capacity 16
for i in range(8):
    dense.put(IntKey(i), i)
dense.counters.reset()
iterate(dense, View.ENTRIES)
print(f"same 8 entries in a 16-slot table: buckets scanned "
      f"{dense.counters.buckets_scanned} (iteration favors small tables)")

print("\n=== clear never shrinks ===")
m.clear()
print(f"after clear: size={m.size()}, capacity still {m.capacity()}")

print("\n=== state digests ===")
a, b = RefMap(), RefMap()
for i in range(10):
    a.put(IntKey(i), "anything")
    b.put(IntKey(i), "else entirely")
print(f"same keys, different values -> equal digests: "
      f"{a.state_digest() == b.state_digest()} (values are opaque)")
b.put(IntKey(10), 0)
print(f"one extra mapping -> digests differ: {a.state_digest() != b.state_digest()}")
