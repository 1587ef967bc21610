"""DRAM organization, addressing, adjacency, and timing vocabulary.

Everything else in the package speaks in terms of these types. Addresses are
linear byte addresses over the whole device, laid out row-major:
channel -> rank -> bank -> row -> byte-in-row. Real memory controllers
interleave more aggressively; the simple layout keeps bank/row decomposition
easy to reason about in traces and is noted as a modeling choice.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import EdgeRowError

_SUBARRAY_SIZES = (512, 1024)
_CACHELINE_SIZES = (32, 64)


@dataclass(frozen=True)
class DramGeometry:
    """Static organization of one synthetic DRAM device."""

    channels: int = 1
    ranks_per_channel: int = 1
    banks_per_rank: int = 8
    rows_per_bank: int = 65536
    rows_per_subarray: int = 1024
    row_size_bytes: int = 2048
    cacheline_bytes: int = 32
    word_bits: int = 64

    def __post_init__(self):
        counts = (
            self.channels,
            self.ranks_per_channel,
            self.banks_per_rank,
            self.rows_per_bank,
            self.rows_per_subarray,
            self.row_size_bytes,
            self.cacheline_bytes,
            self.word_bits,
        )
        if any(c < 1 for c in counts):
            raise ValueError("all geometry counts must be >= 1")
        if self.rows_per_subarray not in _SUBARRAY_SIZES:
            raise ValueError(f"rows_per_subarray must be one of {_SUBARRAY_SIZES}")
        if self.cacheline_bytes not in _CACHELINE_SIZES:
            raise ValueError(f"cacheline_bytes must be one of {_CACHELINE_SIZES}")
        if self.word_bits != 64:
            raise ValueError("word_bits is fixed at 64")
        if self.rows_per_bank % self.rows_per_subarray:
            raise ValueError("rows_per_bank must be divisible by rows_per_subarray")
        if self.row_size_bytes % self.cacheline_bytes:
            raise ValueError("row_size_bytes must be divisible by cacheline_bytes")

    @property
    def subarrays_per_bank(self) -> int:
        return self.rows_per_bank // self.rows_per_subarray

    @property
    def cachelines_per_row(self) -> int:
        """Number of subarray-column positions in a row."""
        return self.row_size_bytes // self.cacheline_bytes

    @property
    def cacheline_bits(self) -> int:
        return self.cacheline_bytes * 8

    @property
    def words_per_cacheline(self) -> int:
        return self.cacheline_bits // self.word_bits

    @property
    def banks_total(self) -> int:
        return self.channels * self.ranks_per_channel * self.banks_per_rank

    @property
    def bank_size_bytes(self) -> int:
        return self.rows_per_bank * self.row_size_bytes

    @property
    def capacity_bytes(self) -> int:
        return self.banks_total * self.bank_size_bytes

    def flat_bank(self, channel: int, rank: int, bank: int) -> int:
        """Collapse (channel, rank, bank) into a single device-wide bank index."""
        return (channel * self.ranks_per_channel + rank) * self.banks_per_rank + bank

    def key(self) -> tuple:
        """Hashable identity used for geometry-compatibility checks."""
        return (
            self.channels,
            self.ranks_per_channel,
            self.banks_per_rank,
            self.rows_per_bank,
            self.rows_per_subarray,
            self.row_size_bytes,
            self.cacheline_bytes,
            self.word_bits,
        )


@dataclass(frozen=True)
class Location:
    """One decoded byte address."""

    channel: int
    rank: int
    bank: int
    subarray: int
    row: int
    column_byte: int
    cacheline_index: int

    def flat_bank(self, geo: DramGeometry) -> int:
        return geo.flat_bank(self.channel, self.rank, self.bank)


def decode_address(addr: int, geo: DramGeometry) -> Location:
    if addr < 0 or addr >= geo.capacity_bytes:
        raise IndexError(f"address {addr:#x} outside device capacity {geo.capacity_bytes:#x}")
    column_byte = addr % geo.row_size_bytes
    rest = addr // geo.row_size_bytes
    row = rest % geo.rows_per_bank
    rest //= geo.rows_per_bank
    bank = rest % geo.banks_per_rank
    rest //= geo.banks_per_rank
    rank = rest % geo.ranks_per_channel
    channel = rest // geo.ranks_per_channel
    return Location(
        channel=channel,
        rank=rank,
        bank=bank,
        subarray=row // geo.rows_per_subarray,
        row=row,
        column_byte=column_byte,
        cacheline_index=column_byte // geo.cacheline_bytes,
    )


def encode_address(loc: Location, geo: DramGeometry) -> int:
    if not (0 <= loc.channel < geo.channels):
        raise IndexError("channel out of range")
    if not (0 <= loc.rank < geo.ranks_per_channel):
        raise IndexError("rank out of range")
    if not (0 <= loc.bank < geo.banks_per_rank):
        raise IndexError("bank out of range")
    if not (0 <= loc.row < geo.rows_per_bank):
        raise IndexError("row out of range")
    if not (0 <= loc.column_byte < geo.row_size_bytes):
        raise IndexError("column byte out of range")
    rest = (loc.channel * geo.ranks_per_channel + loc.rank) * geo.banks_per_rank + loc.bank
    rest = rest * geo.rows_per_bank + loc.row
    return rest * geo.row_size_bytes + loc.column_byte


def make_location(geo: DramGeometry, *, channel=0, rank=0, bank=0, row=0, column_byte=0) -> Location:
    """Convenience constructor that fills in the derived subarray/cacheline fields."""
    return Location(
        channel=channel,
        rank=rank,
        bank=bank,
        subarray=row // geo.rows_per_subarray,
        row=row,
        column_byte=column_byte,
        cacheline_index=column_byte // geo.cacheline_bytes,
    )


@dataclass(frozen=True)
class RowRemapScheme:
    """Logical-to-physical row mapping within a bank.

    "identity" is the common case: logical row N sits physically between
    N-1 and N+1. "paired" models parts whose consecutive logical row pairs
    {2Q, 2Q+1} share one physical wordline region, so the rows physically
    adjacent to a victim are reached at logical distance 2.
    """

    kind: str = "identity"

    def __post_init__(self):
        if self.kind not in ("identity", "paired"):
            raise ValueError(f"unknown remap kind {self.kind!r}")

    @property
    def aggressor_distance(self) -> int:
        return 1 if self.kind == "identity" else 2

    def physical_row(self, logical: int) -> int:
        return logical if self.kind == "identity" else logical // 2

    def logical_rows(self, physical: int) -> tuple[int, ...]:
        if self.kind == "identity":
            return (physical,)
        return (2 * physical, 2 * physical + 1)

    def physical_rows_per_bank(self, rows_per_bank: int) -> int:
        if self.kind == "paired" and rows_per_bank % 2:
            raise ValueError("paired remapping requires an even rows_per_bank")
        return rows_per_bank if self.kind == "identity" else rows_per_bank // 2


IDENTITY_REMAP = RowRemapScheme("identity")
PAIRED_REMAP = RowRemapScheme("paired")


def aggressor_rows(victim: int, scheme: RowRemapScheme, rows_per_bank: int) -> tuple[int, int]:
    """Rows a double-sided hammer of `victim` must activate.

    Edge rows have no full aggressor pair and raise; characterization sweeps
    skip them rather than hammering single-sided.
    """
    if scheme.kind == "paired" and rows_per_bank % 2:
        raise ValueError("paired remapping requires an even rows_per_bank")
    d = scheme.aggressor_distance
    low, high = victim - d, victim + d
    if low < 0 or high >= rows_per_bank:
        raise EdgeRowError(f"row {victim} has no aggressor pair at distance {d}")
    return (low, high)


@dataclass(frozen=True)
class TimingParams:
    """Core timing constraints, in the units their names carry."""

    t_rcd_ns: float
    t_ras_ns: float
    t_rp_ns: float
    t_rc_ns: float
    t_refw_ms: float
    t_refi_us: float
    clock_period_ns: float

    def __post_init__(self):
        vals = (
            self.t_rcd_ns,
            self.t_ras_ns,
            self.t_rp_ns,
            self.t_rc_ns,
            self.t_refw_ms,
            self.t_refi_us,
            self.clock_period_ns,
        )
        if any(v <= 0 for v in vals):
            raise ValueError("all timing parameters must be strictly positive")
        if self.t_rc_ns < self.t_ras_ns + self.t_rp_ns - 1e-9:
            raise ValueError("t_rc_ns must cover t_ras_ns + t_rp_ns")

    @property
    def t_refw_ns(self) -> float:
        return self.t_refw_ms * 1e6

    @property
    def t_refi_ns(self) -> float:
        return self.t_refi_us * 1e3

    @property
    def refresh_intervals_per_window(self) -> int:
        return round(self.t_refw_ns / self.t_refi_ns)


_GEOMETRY_PRESETS = {
    "ddr3": DramGeometry(
        channels=1, ranks_per_channel=1, banks_per_rank=8,
        rows_per_bank=32768, rows_per_subarray=512,
        row_size_bytes=8192, cacheline_bytes=64,
    ),
    "ddr4": DramGeometry(
        channels=1, ranks_per_channel=1, banks_per_rank=16,
        rows_per_bank=16384, rows_per_subarray=512,
        row_size_bytes=8192, cacheline_bytes=64,
    ),
    "lpddr4": DramGeometry(
        channels=2, ranks_per_channel=1, banks_per_rank=8,
        rows_per_bank=65536, rows_per_subarray=1024,
        row_size_bytes=2048, cacheline_bytes=32,
    ),
}

_TIMING_PRESETS = {
    "ddr3": TimingParams(
        t_rcd_ns=13.75, t_ras_ns=38.75, t_rp_ns=13.75, t_rc_ns=52.5,
        t_refw_ms=64.0, t_refi_us=7.8125, clock_period_ns=1.25,
    ),
    "ddr4": TimingParams(
        t_rcd_ns=13.75, t_ras_ns=35.0, t_rp_ns=15.0, t_rc_ns=50.0,
        t_refw_ms=64.0, t_refi_us=7.8125, clock_period_ns=1.25,
    ),
    "lpddr4": TimingParams(
        t_rcd_ns=18.125, t_ras_ns=41.875, t_rp_ns=18.125, t_rc_ns=60.0,
        t_refw_ms=32.0, t_refi_us=3.90625, clock_period_ns=0.625,
    ),
}

GEOMETRY_PRESET_NAMES = tuple(sorted(_GEOMETRY_PRESETS))


def geometry_preset(name: str, **overrides) -> DramGeometry:
    """Named geometry, optionally with field overrides (e.g. a smaller rows_per_bank
    for desk-scale experiments)."""
    try:
        base = _GEOMETRY_PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown geometry preset {name!r}; have {GEOMETRY_PRESET_NAMES}") from None
    if not overrides:
        return base
    from dataclasses import asdict

    fields = asdict(base)
    unknown = set(overrides) - set(fields)
    if unknown:
        raise ValueError(f"unknown geometry fields: {sorted(unknown)}")
    fields.update(overrides)
    return DramGeometry(**fields)


def timing_preset(name: str, **overrides) -> TimingParams:
    try:
        base = _TIMING_PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown timing preset {name!r}; have {GEOMETRY_PRESET_NAMES}") from None
    if not overrides:
        return base
    from dataclasses import asdict

    fields = asdict(base)
    unknown = set(overrides) - set(fields)
    if unknown:
        raise ValueError(f"unknown timing fields: {sorted(unknown)}")
    fields.update(overrides)
    return TimingParams(**fields)
