"""Speculative side buffer attached to each L1 (data and instruction sides).

Speculative fills land here instead of in the L1.  Each line is tagged
with the timestamp of the instruction that brought it in; reads and
overwrites are timestamp-guarded so that no information can flow from a
younger (more speculative) instruction to an older one:

* a read hits only if the line's timestamp is not after the reader's;
* a fill may take a free slot, or evict only lines whose timestamp is
  not before the filler's (the highest-timestamped eligible victim is
  chosen, since only the youngest instruction may learn the set is full);
* a squash invalidates every line younger than the squash point in a
  single cycle, via the parallel valid/timestamp registers.

Lines are never dirty here, and a line valid in this buffer is never
simultaneously valid in the attached L1.  With ``timeguard=False`` the
buffer degrades to a flush-on-squash-only victim structure (the
flush-only protection mode), which keeps no ordering guarantees.
"""

from dataclasses import dataclass


@dataclass
class GhostLine:
    tag: int = -1            # line address
    ts: int = 0
    uts: int = 0
    valid: bool = False
    origin_level: str = ""   # cache level the data came from: "l1"/"l2"/"mem"
    noncoherent: bool = False


class GhostCache:
    def __init__(self, sets, ways, *, timeguard, not_after, counters=None,
                 line_shift=6):
        self.sets = sets
        self.ways = ways
        self.line_shift = line_shift
        self.timeguard = timeguard
        # not_after(line_ts, line_uts, ts, uts) -> bool
        self.not_after = not_after
        self.counters = counters if counters is not None else {}
        self.lines = [[GhostLine() for _ in range(ways)] for _ in range(sets)]
        self._fifo = [0] * sets  # replacement pointer for non-timeguarded mode

    def _set(self, line_addr):
        return self.lines[(line_addr >> self.line_shift) % self.sets]

    def _bump(self, key, n=1):
        self.counters[key] = self.counters.get(key, 0) + n

    def lookup(self, line_addr, ts, uts):
        """TimeGuarded read: a hit requires a valid tag match whose
        timestamp is not after the reader's.  A guarded line is
        indistinguishable from an absent one."""
        for way in self._set(line_addr):
            if way.valid and way.tag == line_addr:
                if not self.timeguard or self.not_after(way.ts, way.uts, ts, uts):
                    return way
                self._bump("timeguard_blocks")
                return None
        return None

    def fill(self, line_addr, ts, uts, origin_level="mem", noncoherent=False):
        """Store a line; returns True if stored, False if rejected.

        Rejection (no free slot and no eligible victim) is a defined
        outcome: the data still goes to the core, it just is not cached.
        """
        st = self._set(line_addr)
        victim = None
        if self.timeguard:
            free = None
            for way in st:
                if way.valid and way.tag == line_addr:
                    # duplicate tags are never allowed in a set: reuse the
                    # matching way if eligible, else the line is already
                    # visible to this filler and the fill is redundant
                    if self.not_after(ts, uts, way.ts, way.uts):
                        victim = way
                        break
                    return True
                if not way.valid and free is None:
                    free = way
            else:
                if free is not None:
                    victim = free
                else:
                    for way in st:
                        if self.not_after(ts, uts, way.ts, way.uts):
                            if victim is None or self.not_after(victim.ts, victim.uts,
                                                               way.ts, way.uts):
                                victim = way
        else:
            for way in st:
                if way.valid and way.tag == line_addr:
                    victim = way
                    break
            else:
                for way in st:
                    if not way.valid:
                        victim = way
                        break
                else:
                    si = (line_addr >> self.line_shift) % self.sets
                    idx = self._fifo[si]
                    self._fifo[si] = (idx + 1) % self.ways
                    victim = st[idx]
        if victim is None:
            self._bump("fills_rejected")
            return False
        victim.tag = line_addr
        victim.ts = ts
        victim.uts = uts
        victim.valid = True
        victim.origin_level = origin_level
        victim.noncoherent = noncoherent
        return True

    def extract(self, line_addr, ts, uts):
        """On commit of a load: remove and return the matching line the
        committing instruction is allowed to read, if any."""
        for way in self._set(line_addr):
            if way.valid and way.tag == line_addr:
                if not self.timeguard or self.not_after(way.ts, way.uts, ts, uts):
                    out = GhostLine(way.tag, way.ts, way.uts, True,
                                    way.origin_level, way.noncoherent)
                    way.valid = False
                    self._bump("lines_extracted")
                    return out
                return None
        return None

    def flush(self, ts, uts):
        """Squash wipe: invalidate every line younger than ``ts``.

        Constant-time regardless of how many lines are wiped.  Without
        timeguarding the whole buffer is cleared.
        """
        n = 0
        for st in self.lines:
            for way in st:
                if way.valid and (not self.timeguard
                                  or not self.not_after(way.ts, way.uts, ts, uts)):
                    way.valid = False
                    n += 1
        self._bump("flush_count")
        return n

    def invalidate(self, line_addr):
        for way in self._set(line_addr):
            if way.valid and way.tag == line_addr:
                way.valid = False

    def has(self, line_addr):
        return any(w.valid and w.tag == line_addr for w in self._set(line_addr))

    def valid_lines(self):
        for st in self.lines:
            for way in st:
                if way.valid:
                    yield way
