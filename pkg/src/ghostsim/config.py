"""Run configuration: core widths, cache geometry, protection mode, flags.

Configs are plain key=value text files (``#`` comments allowed) and are
fully deterministic: there is no seed here, only in the fuzz generator.
"""

from dataclasses import dataclass, fields

MODES = ("unsafe", "flush_only", "ghostminion")


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    # core
    width: int = 4
    rob: int = 64
    lq: int = 16
    sq: int = 16
    fetchq: int = 16
    alu_units: int = 4
    mul_units: int = 2
    div_units: int = 1
    mem_ports: int = 2
    alu_lat: int = 1
    mul_lat: int = 3
    div_lat: int = 12
    squash_penalty: int = 5
    # caches (per-core L1 + speculative buffer, shared L2)
    line_bytes: int = 64
    l1_sets: int = 32
    l1_ways: int = 2
    l1_lat: int = 2
    l1_mshrs: int = 4
    l2_sets: int = 128
    l2_ways: int = 8
    l2_lat: int = 20
    l2_mshrs: int = 20
    mem_lat: int = 100
    ghost_sets: int = 16
    ghost_ways: int = 2
    # coherence (two-core mode)
    coh_lat: int = 20
    # prefetcher
    rpt_entries: int = 64
    rpt_confidence: int = 2
    # protection
    mode: str = "ghostminion"
    async_reload: bool = False
    coherence_mode: bool = False
    icache_minion: bool = True
    # debug / harness
    warm_icache: bool = False
    debug_unbounded_ts: bool = False
    check_invariants: bool = False
    max_cycles: int = 1_000_000

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.rob < 2:
            raise ConfigError("rob must be at least 2")

    @property
    def window(self) -> int:
        """Timestamp window size: twice the ROB capacity."""
        return 2 * self.rob

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        kinds = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"config line {lineno}: expected key = value")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key not in kinds:
                raise ConfigError(f"config line {lineno}: unknown key {key!r}")
            kind = kinds[key]
            if kind in ("bool", bool):
                if val.lower() not in ("true", "false", "0", "1"):
                    raise ConfigError(f"config line {lineno}: bad boolean {val!r}")
                kwargs[key] = val.lower() in ("true", "1")
            elif kind in ("int", int):
                try:
                    kwargs[key] = int(val, 0)
                except ValueError:
                    raise ConfigError(f"config line {lineno}: bad integer {val!r}")
            else:
                kwargs[key] = val
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_text(fh.read())
