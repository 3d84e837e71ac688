"""Cache hierarchy: per-core L1s with speculative side buffers, a shared
L2, fixed-latency main memory, timestamped MSHRs, a commit-trained stride
prefetcher, and a simplified two-core directory.

Timing rules that keep younger (more speculative) requests invisible to
older ones:

* miss timestamps propagate into every MSHR level;
* when a level's MSHRs are full, an older request cancels the
  youngest-timestamped entry and takes its slot (leapfrog); the victim's
  load is retried once a register frees;
* when an older request hits an in-flight MSHR for the same line, the
  miss restarts its latency with the older timestamp (timeleap), which
  may cascade into further leapfrogs below;
* speculative fills go to the side buffer only; the non-speculative
  L1/L2 change only through non-speculative accesses, commit-time
  extraction, or prefetches.

With ``mode="unsafe"`` none of this applies (speculative fills pollute
the L1/L2 directly); ``mode="flush_only"`` keeps the side buffer and its
squash wipe but drops every ordering rule.
"""

COUNTER_KEYS = (
    "timeguard_blocks", "fills_rejected", "flush_count", "lines_extracted",
    "mshr_leapfrogs", "timeleaps", "retries", "prefetches_issued", "replays",
)

from .ghost_cache import GhostCache


class Cache:
    """Set-associative tag store with LRU replacement and dirty bits."""

    def __init__(self, sets, ways, line_shift=6):
        self.sets = sets
        self.ways = ways
        self.line_shift = line_shift
        # per set: list of [tag, dirty, lru]; most recent has highest lru
        self.lines = [[] for _ in range(sets)]
        self._tick = 0

    def _set(self, line_addr):
        return self.lines[(line_addr >> self.line_shift) % self.sets]

    def lookup(self, line_addr):
        return any(e[0] == line_addr for e in self._set(line_addr))

    def touch(self, line_addr):
        for e in self._set(line_addr):
            if e[0] == line_addr:
                self._tick += 1
                e[2] = self._tick
                return

    def mark_dirty(self, line_addr):
        for e in self._set(line_addr):
            if e[0] == line_addr:
                e[1] = True
                return

    def install(self, line_addr, dirty=False):
        """Install a line; returns (evicted_tag, evicted_dirty) or None."""
        st = self._set(line_addr)
        self._tick += 1
        for e in st:
            if e[0] == line_addr:
                e[1] = e[1] or dirty
                e[2] = self._tick
                return None
        evicted = None
        if len(st) >= self.ways:
            victim = min(st, key=lambda e: e[2])
            st.remove(victim)
            evicted = (victim[0], victim[1])
        st.append([line_addr, dirty, self._tick])
        return evicted

    def invalidate(self, line_addr):
        st = self._set(line_addr)
        for e in st:
            if e[0] == line_addr:
                st.remove(e)
                return True
        return False

    def contents(self):
        """Replacement-order-insensitive snapshot (for purity checks)."""
        return frozenset((i, e[0], e[1]) for i, st in enumerate(self.lines) for e in st)


class MshrEntry:
    __slots__ = ("addr", "ts", "uts", "core", "spec", "is_write", "targets",
                 "parents", "child", "deliver_at", "origin", "orphan")

    def __init__(self, addr, ts, uts, core, spec, is_write=False):
        self.addr = addr
        self.ts = ts
        self.uts = uts
        self.core = core
        self.spec = spec
        self.is_write = is_write
        self.targets = []     # completion callbacks: (kind, instr, core)
        self.parents = []     # upper-level MshrEntry objects waiting on us
        self.child = None
        self.deliver_at = None
        self.origin = "mem"
        self.orphan = False


class MshrFile:
    def __init__(self, name, cap):
        self.name = name
        self.cap = cap
        self.entries = []
        self.waiters = []     # (kind, instr, core) to wake when a slot frees

    def find(self, addr, core=None):
        for e in self.entries:
            if e.addr == addr and (core is None or e.core == core):
                return e
        return None

    def full(self):
        return len(self.entries) >= self.cap


class MemorySystem:
    def __init__(self, cfg, ncores, not_after):
        self.cfg = cfg
        self.ncores = ncores
        self.not_after = not_after     # not_after(ts, uts, ts2, uts2)
        self.mode = cfg.mode
        self.counters = {k: 0 for k in COUNTER_KEYS}
        self.cores = []                # wired by the machine

        shift = cfg.line_bytes.bit_length() - 1
        self.l1d = [Cache(cfg.l1_sets, cfg.l1_ways, shift) for _ in range(ncores)]
        self.l1i = [Cache(cfg.l1_sets, cfg.l1_ways, shift) for _ in range(ncores)]
        self.l2 = Cache(cfg.l2_sets, cfg.l2_ways, shift)

        has_ghost = self.mode in ("flush_only", "ghostminion")
        tg = self.mode == "ghostminion"
        mk = lambda: GhostCache(cfg.ghost_sets, cfg.ghost_ways, timeguard=tg,
                                not_after=not_after, counters=self.counters,
                                line_shift=shift)
        self.dghost = [mk() if has_ghost else None for _ in range(ncores)]
        self.ighost = [mk() if (has_ghost and cfg.icache_minion) else None
                       for _ in range(ncores)]

        self.l1d_file = [MshrFile(f"l1d{c}", cfg.l1_mshrs) for c in range(ncores)]
        self.l1i_file = [MshrFile(f"l1i{c}", cfg.l1_mshrs) for c in range(ncores)]
        self.l2_file = MshrFile("l2", cfg.l2_mshrs)

        # two-core directory: line -> {core: "M"|"E"|"S"} over L1D contents
        self.directory = {}

        # stride prefetcher at the L2 (reference prediction table)
        self.rpt = [None] * cfg.rpt_entries   # [pc, last_line, stride, conf]

        self._events = []                     # (cycle, fn) background actions

    # ------------------------------------------------------------------ util

    def _bump(self, key, n=1):
        self.counters[key] += n

    def _lru_visible(self, spec):
        """Replacement state is soft state: under protection it may only be
        updated by non-speculative activity."""
        return (not spec) or self.mode == "unsafe"

    def _ghost_for(self, core, kind):
        return self.ighost[core] if kind == "i" else self.dghost[core]

    def _l1_for(self, core, kind):
        return self.l1i[core] if kind == "i" else self.l1d[core]

    def _file_for(self, core, kind):
        return self.l1i_file[core] if kind == "i" else self.l1d_file[core]

    def at(self, cycle, fn):
        self._events.append((cycle, fn))

    # ------------------------------------------------------------- directory

    def _remote_owner(self, line, core):
        """Core id holding this line Exclusive/Modified in a remote L1."""
        for c, st in self.directory.get(line, {}).items():
            if c != core and st in ("M", "E"):
                return c
        return None

    def _dir_install(self, line, core):
        holders = self.directory.setdefault(line, {})
        holders[core] = "E" if not holders else "S"
        if len(holders) > 1:
            for c in holders:
                holders[c] = "S"

    def _dir_remove(self, line, core):
        holders = self.directory.get(line)
        if holders and core in holders:
            del holders[core]
            if not holders:
                del self.directory[line]

    def _downgrade(self, line, requester):
        """A remote Exclusive/Modified copy is demoted to Shared; a dirty
        copy is written back to the L2.  Returns True if any state changed."""
        owner = self._remote_owner(line, requester)
        if owner is None:
            return False
        holders = self.directory[line]
        if holders[owner] == "M":
            # dirty data is written back to the shared L2; the owner keeps
            # a clean Shared copy
            self.l2.install(line, dirty=True)
            for e in self.l1d[owner]._set(line):
                if e[0] == line:
                    e[1] = False
        holders[owner] = "S"
        return True

    def upgrade_for_store(self, line, core):
        """Acquire Modified for a committing store.  Remote L1 and side
        buffer copies are invalidated in constant time.  Returns the extra
        latency paid (0 when the line was already exclusively held)."""
        if self.ncores == 1:
            return 0
        cost = 0
        for c in range(self.ncores):
            if c == core:
                continue
            holders = self.directory.get(line, {})
            if c in holders:
                self.l1d[c].invalidate(line)
                self._dir_remove(line, c)
                cost = self.cfg.coh_lat
            for g in (self.dghost[c], self.ighost[c]):
                if g is not None:
                    g.invalidate(line)
        holders = self.directory.get(line, {})
        if core in holders:
            if holders[core] == "S":
                cost = max(cost, self.cfg.coh_lat)
            holders[core] = "M"
        return cost

    # ------------------------------------------------------------- L1 install

    def _install_l1(self, core, kind, line, dirty=False):
        l1 = self._l1_for(core, kind)
        evicted = l1.install(line, dirty)
        g = self._ghost_for(core, kind)
        if g is not None:
            g.invalidate(line)  # a line never lives in both structures
        if kind == "d" and self.ncores > 1:
            self._dir_install(line, core)
        if evicted:
            etag, edirty = evicted
            if kind == "d" and self.ncores > 1:
                self._dir_remove(etag, core)
            if edirty:
                self.l2.install(etag, dirty=True)

    # ------------------------------------------------------------- MSHR logic

    def _wake(self, file):
        if not file.waiters:
            return
        waiters, file.waiters = file.waiters, []
        for kind, obj, core in waiters:
            if kind == "ifetch":
                self.cores[core].fetch_retry_wake()
            else:
                self.cores[core].load_retry_wake(obj)

    def _free_entry(self, file, entry):
        if entry in file.entries:
            file.entries.remove(entry)
            self._wake(file)

    def _orphan_child(self, entry):
        child = entry.child
        entry.child = None
        if child is None:
            return
        if entry in child.parents:
            child.parents.remove(entry)
        if not child.parents and not child.targets:
            child.orphan = True

    def _cancel_entry(self, file, entry, blocking_file):
        """Leapfrog/squash cancellation: targets must reattempt once the
        blocking level frees; in-flight lower activity is abandoned."""
        for t in entry.targets:
            blocking_file.waiters.append(t)
        entry.targets = []
        for parent in list(entry.parents):
            pf = self._owner_file(parent)
            parent.child = None
            self._cancel_entry(pf, parent, blocking_file)
            self._free_entry(pf, parent)
        entry.parents = []
        self._orphan_child(entry)
        self._free_entry(file, entry)

    def _owner_file(self, entry):
        for files in (self.l1d_file, self.l1i_file):
            f = files[entry.core]
            if entry in f.entries:
                return f
        return self.l2_file

    def _mshr_request(self, file, line, ts, uts, core, spec, cycle, *,
                      target=None, parent=None, is_write=False, is_l2=False):
        """Returns ("pending", entry) or ("retry", file)."""
        guarded = self.mode == "ghostminion"
        merge_core = core if (guarded and is_l2 and self.ncores > 1) else None
        existing = file.find(line, merge_core) if merge_core is not None else file.find(line)
        if existing is not None and (merge_core is None or existing.core == core):
            existing.orphan = False   # re-adopted by a live requester
            if guarded and existing.ts != ts and self.not_after(ts, uts, existing.ts, existing.uts):
                # timeleap: the older request restarts the miss so its
                # timing is unaffected by the younger in-flight one
                self._bump("timeleaps")
                existing.ts, existing.uts = ts, uts
                existing.spec = spec
                existing.core = core
                self._orphan_child(existing)
                self._dispatch_lower(file, existing, cycle, is_l2=is_l2)
                if existing.deliver_at == "failed":
                    # restart could not get a lower-level register: the
                    # whole access waits on the blocking level
                    if target is not None:
                        self.l2_file.waiters.append(target)
                    return ("retry", self.l2_file)
            if target is not None:
                existing.targets.append(target)
            if parent is not None and parent not in existing.parents:
                existing.parents.append(parent)
                parent.child = existing
            return ("pending", existing)
        if file.full():
            victim = None
            if guarded:
                for e in file.entries:
                    if merge_core is not None and e.core != core:
                        continue
                    if victim is None or self.not_after(victim.ts, victim.uts, e.ts, e.uts):
                        victim = e
                if victim is not None and self.not_after(ts, uts, victim.ts, victim.uts) \
                        and (victim.ts != ts or victim.uts != uts):
                    self._bump("mshr_leapfrogs")
                    self._cancel_entry(file, victim, file)
                else:
                    victim = None
            if victim is None:
                self._bump("retries")
                if target is not None:
                    file.waiters.append(target)
                return ("retry", file)
        entry = MshrEntry(line, ts, uts, core, spec, is_write)
        if target is not None:
            entry.targets.append(target)
        if parent is not None:
            entry.parents.append(parent)
            parent.child = entry
        file.entries.append(entry)
        self._dispatch_lower(file, entry, cycle, is_l2=is_l2)
        if entry.deliver_at == "failed":
            return ("retry", self.l2_file)
        return ("pending", entry)

    def _dispatch_lower(self, file, entry, cycle, *, is_l2):
        cfg = self.cfg
        if is_l2:
            entry.origin = "mem"
            entry.deliver_at = cycle + cfg.l2_lat + cfg.mem_lat
            return
        if self.l2.lookup(entry.addr):
            if self._lru_visible(entry.spec):
                self.l2.touch(entry.addr)
            entry.origin = "l2"
            entry.deliver_at = cycle + cfg.l1_lat + cfg.l2_lat
            return
        entry.deliver_at = None
        res = self._mshr_request(self.l2_file, entry.addr, entry.ts, entry.uts,
                                 entry.core, entry.spec, cycle, parent=entry, is_l2=True)
        if res[0] == "retry":
            # the whole access fails at the L2: release our slot and make
            # the targets wait on the blocking level
            for t in entry.targets:
                self.l2_file.waiters.append(t)
            entry.targets = []
            self._free_entry(file, entry)
            entry.deliver_at = "failed"

    # ------------------------------------------------------------- accesses

    def data_access(self, core, instr, line, ts, uts, spec, cycle):
        """A load reaching the memory system.  Returns
        ("hit", ready_cycle, origin, noncoherent) | ("pending",) |
        ("retry", level_name)."""
        cfg = self.cfg
        g = self.dghost[core]
        if g is not None:
            hit = g.lookup(line, ts, uts)
            if hit is not None:
                return ("hit", cycle + cfg.l1_lat, hit.origin_level or "ghost",
                        hit.noncoherent)
        if self.l1d[core].lookup(line):
            if self._lru_visible(spec):
                self.l1d[core].touch(line)
            return ("hit", cycle + cfg.l1_lat, "l1", False)

        coh_extra = 0
        if self.ncores > 1 and self._remote_owner(line, core) is not None:
            if spec and self.mode == "ghostminion":
                # forward a non-coherent copy without touching remote state;
                # the consumer must be revalidated at commit
                ready = cycle + cfg.l1_lat + cfg.coh_lat
                def fill(g=g, line=line, ts=ts, uts=uts):
                    g.fill(line, ts, uts, origin_level="l2", noncoherent=True)
                self.at(ready, fill)
                return ("hit", ready, "l2", True)
            self._downgrade(line, core)
            coh_extra = cfg.coh_lat

        res = self._mshr_request(self.l1d_file[core], line, ts, uts, core, spec,
                                 cycle + coh_extra, target=("load", instr, core))
        if res[0] == "retry":
            return ("retry", res[1].name)
        return ("pending",)

    def ifetch_access(self, core, line, ts, uts, cycle):
        cfg = self.cfg
        g = self.ighost[core]
        if g is not None:
            hit = g.lookup(line, ts, uts)
            if hit is not None:
                return ("hit", cycle + cfg.l1_lat, hit.origin_level or "ghost", False)
        if self.l1i[core].lookup(line):
            if self._lru_visible(True):
                self.l1i[core].touch(line)
            return ("hit", cycle + cfg.l1_lat, "l1", False)
        res = self._mshr_request(self.l1i_file[core], line, ts, uts, core, True,
                                 cycle, target=("ifetch", None, core))
        if res[0] == "retry":
            return ("retry", res[1].name)
        return ("pending",)

    def store_access(self, core, instr, line, cycle):
        """Committing store: non-speculative write-allocate write."""
        cfg = self.cfg
        cost = self.upgrade_for_store(line, core)
        g = self.dghost[core]
        if g is not None:
            g.invalidate(line)   # speculative copies of the line are now stale
        if self.l1d[core].lookup(line):
            self.l1d[core].touch(line)
            self.l1d[core].mark_dirty(line)
            if self.ncores > 1:
                self.directory.setdefault(line, {})[core] = "M"
            return ("hit", cycle + cfg.l1_lat + cost)
        res = self._mshr_request(self.l1d_file[core], line, instr.ts, instr.uts,
                                 core, False, cycle + cost,
                                 target=("store", instr, core), is_write=True)
        if res[0] == "retry":
            return ("retry", res[1].name)
        return ("pending",)

    def replay_access(self, core, instr, line, cycle):
        """Commit-time revalidation of a load that consumed a non-coherent
        forwarded copy: reissue non-speculatively."""
        cfg = self.cfg
        self._bump("replays")
        g = self.dghost[core]
        if g is not None:
            g.invalidate(line)
        coh = cfg.coh_lat if (self.ncores > 1 and self._downgrade(line, core)) else 0
        if self.l1d[core].lookup(line):
            self.l1d[core].touch(line)
            return ("hit", cycle + cfg.l1_lat + coh)
        res = self._mshr_request(self.l1d_file[core], line, instr.ts, instr.uts,
                                 core, False, cycle + coh,
                                 target=("replay", instr, core))
        if res[0] == "retry":
            return ("retry", res[1].name)
        return ("pending",)

    # ------------------------------------------------------- commit services

    def commit_extract(self, core, kind, line, ts, uts, cycle):
        """Free-slotting: on commit, move the committing instruction's line
        from the side buffer into the L1.  Returns the level the line was
        originally brought in from, or None if nothing was extracted."""
        g = self._ghost_for(core, kind)
        l1 = self._l1_for(core, kind)
        if g is not None:
            ln = g.extract(line, ts, uts)
            if ln is not None:
                if ln.noncoherent:
                    return None   # handled by the replay path instead
                self._install_l1(core, kind, line)
                return ln.origin_level
        if l1.lookup(line):
            l1.touch(line)
            return "l1"
        if self.cfg.async_reload and g is not None:
            def reload(core=core, kind=kind, line=line):
                self._install_l1(core, kind, line)
            self.at(cycle + self.cfg.mem_lat, reload)
        return None

    def prefetch_notify(self, pc, line, origin, cycle):
        """Train the L2 stride prefetcher from the committed access stream.
        Only accesses that were brought in from the L2 or below train it."""
        if origin not in ("l2", "mem"):
            return
        cfg = self.cfg
        idx = (pc // 4) % cfg.rpt_entries
        e = self.rpt[idx]
        if e is None or e[0] != pc:
            self.rpt[idx] = [pc, line, 0, 0]
            return
        stride = line - e[1]
        if stride != 0 and stride == e[2]:
            e[3] = min(e[3] + 1, 3)
        else:
            e[2] = stride
            e[3] = 1 if stride != 0 else 0
        e[1] = line
        if e[3] >= cfg.rpt_confidence and e[2] != 0:
            nxt = line + e[2]
            if nxt >= 0 and not self.l2.lookup(nxt):
                self._bump("prefetches_issued")
                self.at(cycle + cfg.mem_lat, lambda a=nxt: self.l2.install(a))

    # -------------------------------------------------------------- squash

    def squash_flush(self, core, ts, uts, cycle):
        """Misspeculation wipe: single-cycle invalidate of every side-buffer
        line younger than the squash point, and (under full protection)
        cancellation of every younger in-flight miss of this core."""
        for g in (self.dghost[core], self.ighost[core]):
            if g is not None:
                g.flush(ts, uts)
        if self.mode != "ghostminion":
            return
        for file in (self.l1d_file[core], self.l1i_file[core], self.l2_file):
            for e in list(file.entries):
                if e.core != core:
                    continue
                if not self.not_after(e.ts, e.uts, ts, uts):
                    e.targets = []   # targets are squashed; drop, don't retry
                    for parent in list(e.parents):
                        pf = self._owner_file(parent)
                        parent.child = None
                        parent.targets = []
                        self._free_entry(pf, parent)
                    e.parents = []
                    self._orphan_child(e)
                    self._free_entry(file, e)

    # ---------------------------------------------------------------- tick

    def tick(self, cycle):
        # L2-level completions feed parent L1 MSHRs after the L1 transit
        for e in list(self.l2_file.entries):
            if e.deliver_at == cycle:
                if not e.orphan:
                    if (not e.spec) or self.mode == "unsafe":
                        self.l2.install(e.addr)
                    for parent in e.parents:
                        parent.deliver_at = cycle + self.cfg.l1_lat
                        parent.origin = e.origin
                        parent.child = None
                e.parents = []
                self._free_entry(self.l2_file, e)
        # L1-level completions deliver to the core and install the line
        for core in range(self.ncores):
            for kind, file in (("d", self.l1d_file[core]), ("i", self.l1i_file[core])):
                for e in list(file.entries):
                    if e.deliver_at == cycle:
                        if not e.orphan:
                            self._deliver_l1(core, kind, e, cycle)
                            if e.is_write and kind == "d" and self.ncores > 1:
                                self.directory.setdefault(e.addr, {})[core] = "M"
                        self._free_entry(file, e)
        if self._events:
            due = [ev for ev in self._events if ev[0] <= cycle]
            if due:
                self._events = [ev for ev in self._events if ev[0] > cycle]
                for _, fn in due:
                    fn()

    def _deliver_l1(self, core, kind, entry, cycle):
        g = self._ghost_for(core, kind)
        if entry.spec and g is not None:
            g.fill(entry.addr, entry.ts, entry.uts, origin_level=entry.origin)
        else:
            self._install_l1(core, kind, entry.addr, dirty=entry.is_write)
        for t in entry.targets:
            tkind, obj, tcore = t
            if tkind == "ifetch":
                self.cores[tcore].fetch_line_ready(entry.addr, cycle)
            elif tkind == "load":
                self.cores[tcore].load_complete(obj, cycle, entry.origin)
            elif tkind == "store":
                self.cores[tcore].store_write_complete(obj, cycle)
            elif tkind == "replay":
                self.cores[tcore].replay_complete(obj, cycle)
        entry.targets = []

    # ------------------------------------------------------------ snapshots

    def nonspec_state(self):
        """Full non-speculative cache state, for purity comparisons."""
        return (tuple(c.contents() for c in self.l1d),
                tuple(c.contents() for c in self.l1i),
                self.l2.contents())

    def rpt_state(self):
        return tuple(tuple(e) if e else None for e in self.rpt)

    def check_invariants(self):
        """Exclusivity, cleanliness, and (two-core) directory safety."""
        for core in range(self.ncores):
            for kind in ("d", "i"):
                g = self._ghost_for(core, kind)
                if g is None:
                    continue
                l1 = self._l1_for(core, kind)
                for way in g.valid_lines():
                    assert not l1.lookup(way.tag), \
                        f"line {way.tag:#x} in both L1{kind} and its side buffer"
            g = self.dghost[core]
            if g is not None and self.ncores > 1 and self.mode == "ghostminion":
                for way in g.valid_lines():
                    if not way.noncoherent:
                        assert self._remote_owner(way.tag, core) is None, \
                            f"unflagged speculative copy of {way.tag:#x} with remote owner"
