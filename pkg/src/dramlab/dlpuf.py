"""Device fingerprints from activation-failure patterns.

A segment of memory is read repeatedly at a reduced activation delay; the set
of bits that fail more than a tenth of the time is stable per device and
distinct across devices, so it serves as an authentication token. Failure
counters live in rows reserved at the top of each bank, and challenges that
would overlap that reservation are rejected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .chipsynth import (
    DataPattern,
    REFERENCE_TRCD_NS,
    REFERENCE_TEMP_C,
    SyntheticChip,
    activation_flip_probabilities,
)
from .errors import ConfigError
from .geometry import DramGeometry

SEGMENT_BYTES = 8192
COUNTER_FILTER_FRACTION = 0.10
READ_TIME_US = 3.4
BYTES_PER_READ = 32
ACCEPT_THRESHOLD = 0.65
DISTINCT_THRESHOLD = 0.25
TEMPERATURE_BUCKET_C = 5.0
GOOD_SEGMENT_MIN_CELLS = 512


def counter_width_bits(n_iterations: int) -> int:
    """Smallest width that can hold counts 0..n."""
    if n_iterations < 1:
        raise ConfigError("need at least one iteration")
    return math.ceil(math.log2(n_iterations + 1))


def counter_buffer_bits(n_iterations: int, segment_bytes: int = SEGMENT_BYTES) -> int:
    return segment_bytes * 8 * counter_width_bits(n_iterations)


def mem_total_bits(n_iterations: int, segment_bytes: int = SEGMENT_BYTES) -> int:
    """Segment under test plus its counter buffer."""
    return segment_bytes * 8 + counter_buffer_bits(n_iterations, segment_bytes)


def eval_time_ms(n_iterations: int, segment_bytes: int = SEGMENT_BYTES) -> float:
    """n iterations of one read per 32-byte beat across the segment."""
    reads = segment_bytes / BYTES_PER_READ
    return n_iterations * reads * READ_TIME_US * 1e-3


def rows_per_segment(geo: DramGeometry) -> int:
    if SEGMENT_BYTES % geo.row_size_bytes == 0:
        return SEGMENT_BYTES // geo.row_size_bytes
    if geo.row_size_bytes % SEGMENT_BYTES == 0:
        return 1  # segment occupies part of one row
    raise ConfigError("row size and segment size are incompatible")


def reserved_rows(geo: DramGeometry, n_iterations: int) -> int:
    """Rows at the top of each bank holding the failure counters."""
    buffer_bytes = counter_buffer_bits(n_iterations) // 8
    return math.ceil(buffer_bytes / geo.row_size_bytes)


def segments_per_bank(geo: DramGeometry) -> int:
    rps = rows_per_segment(geo)
    if rps == 1 and geo.row_size_bytes > SEGMENT_BYTES:
        return geo.rows_per_bank * (geo.row_size_bytes // SEGMENT_BYTES)
    return geo.rows_per_bank // rps


def usable_segments(geo: DramGeometry, n_iterations: int = 100):
    """Segment ids that do not collide with the counter reservation."""
    per_bank = segments_per_bank(geo)
    reserved = reserved_rows(geo, n_iterations)
    rps = rows_per_segment(geo)
    if geo.row_size_bytes > SEGMENT_BYTES:
        per_row = geo.row_size_bytes // SEGMENT_BYTES
        usable = (geo.rows_per_bank - reserved) * per_row
    else:
        usable = (geo.rows_per_bank - reserved) // rps
    for bank in range(geo.banks_total):
        yield from range(bank * per_bank, bank * per_bank + usable)


@dataclass(frozen=True)
class PufChallenge:
    segment_id: int
    trcd_ns: float = REFERENCE_TRCD_NS
    n_iterations: int = 100
    temperature_c: float = REFERENCE_TEMP_C
    pattern: DataPattern = DataPattern.SOLID1

    def __post_init__(self):
        if self.n_iterations < 1:
            raise ConfigError("need at least one iteration")
        if self.segment_id < 0:
            raise ConfigError("segment_id must be non-negative")


@dataclass(frozen=True)
class PufResponse:
    chip_seed: int
    segment_id: int
    temperature_c: float
    bits: frozenset

    @property
    def bucket(self) -> float:
        return temperature_bucket(self.temperature_c)


def temperature_bucket(temperature_c: float) -> float:
    return round(temperature_c / TEMPERATURE_BUCKET_C) * TEMPERATURE_BUCKET_C


def _segment_span(chip: SyntheticChip, segment_id: int, n_iterations: int):
    """(flat_bank, first_row, rows, byte_offset_in_row) for a segment.

    Segments tile each bank bottom-up in 8 KiB units; the counter reservation
    occupies the top rows of every bank.
    """
    geo = chip.geo
    per_bank = segments_per_bank(geo)
    total = geo.banks_total * per_bank
    if segment_id >= total:
        raise ConfigError(f"segment_id {segment_id} out of range (chip has {total})")
    bank = segment_id // per_bank
    local = segment_id % per_bank
    rps = rows_per_segment(geo)
    if geo.row_size_bytes > SEGMENT_BYTES:
        seg_per_row = geo.row_size_bytes // SEGMENT_BYTES
        row = local // seg_per_row
        offset = (local % seg_per_row) * SEGMENT_BYTES
        first, rows = row, 1
    else:
        first, rows, offset = local * rps, rps, 0
    reserved_first = geo.rows_per_bank - reserved_rows(geo, n_iterations)
    if first + rows > reserved_first:
        raise ConfigError(
            f"segment {segment_id} overlaps the counter reservation "
            f"(rows {reserved_first}..{geo.rows_per_bank - 1})"
        )
    return bank, first, rows, offset


def _segment_cells(chip: SyntheticChip, bank: int, first_row: int, rows: int, offset: int):
    """Slice of the chip's cell arrays inside the segment, plus each cell's
    position index within the segment (0 .. SEGMENT_BYTES*8 - 1)."""
    geo = chip.geo
    cpr = geo.cachelines_per_row
    lo = (bank * geo.rows_per_bank + first_row) * cpr
    hi = (bank * geo.rows_per_bank + first_row + rows) * cpr
    i0 = int(np.searchsorted(chip.ac_key, lo, side="left"))
    i1 = int(np.searchsorted(chip.ac_key, hi, side="left"))
    idx = np.arange(i0, i1)
    if offset:
        col0 = offset // geo.cacheline_bytes
        ncols = SEGMENT_BYTES // geo.cacheline_bytes
        col = chip.ac_key[idx] % cpr
        idx = idx[(col >= col0) & (col < col0 + ncols)]
        base_col = col0
    else:
        base_col = 0
    key = chip.ac_key[idx]
    row_in_seg = key // cpr % geo.rows_per_bank - first_row
    col_in_seg = key % cpr - base_col
    cl_bits = geo.cacheline_bits
    cols_per_seg_row = SEGMENT_BYTES // geo.cacheline_bytes if offset or rows == 1 else cpr
    pos = (row_in_seg * cols_per_seg_row + col_in_seg) * cl_bits + chip.ac_bit[idx]
    return idx, pos.astype(np.int64)


def segment_cell_count(chip: SyntheticChip, segment_id: int, n_iterations: int = 100) -> int:
    bank, first, rows, offset = _segment_span(chip, segment_id, n_iterations)
    idx, _ = _segment_cells(chip, bank, first, rows, offset)
    return int(idx.size)


def segment_is_good(chip: SyntheticChip, segment_id: int, n_iterations: int = 100) -> bool:
    """A segment is worth enrolling when it holds enough failure-prone cells."""
    return segment_cell_count(chip, segment_id, n_iterations) >= GOOD_SEGMENT_MIN_CELLS


def filter_counters(counts: np.ndarray, n_iterations: int) -> np.ndarray:
    """Keep cells failing in strictly more than a tenth of iterations."""
    return np.asarray(counts) > COUNTER_FILTER_FRACTION * n_iterations


def evaluate_puf(chip: SyntheticChip, challenge: PufChallenge, rng: np.random.Generator) -> PufResponse:
    bank, first, rows, offset = _segment_span(chip, challenge.segment_id, challenge.n_iterations)
    idx, pos = _segment_cells(chip, bank, first, rows, offset)
    if idx.size:
        sl = slice(int(idx[0]), int(idx[-1]) + 1)
        sel = idx - idx[0]
        p = activation_flip_probabilities(
            chip, sl, challenge.trcd_ns, challenge.temperature_c, challenge.pattern
        )[sel]
        counts = rng.binomial(challenge.n_iterations, p)
        keep = filter_counters(counts, challenge.n_iterations)
        bits = frozenset(int(b) for b in pos[keep])
    else:
        bits = frozenset()
    return PufResponse(
        chip_seed=chip.seed,
        segment_id=challenge.segment_id,
        temperature_c=challenge.temperature_c,
        bits=bits,
    )


def response_jaccard(a: PufResponse, b: PufResponse) -> float:
    sa, sb = a.bits, b.bits
    if not sa and not sb:
        return 1.0
    return len(sa & sb) / len(sa | sb)


@dataclass
class AuthResult:
    accepted: bool
    reason: str
    jaccard: float = 0.0
    bucket: float = None


@dataclass
class GoldenKeyStore:
    """Enrolled responses keyed by device, segment, and temperature bucket."""

    threshold: float = ACCEPT_THRESHOLD
    _golden: dict = field(default_factory=dict)

    def enroll(self, device_id: str, response: PufResponse) -> None:
        key = (device_id, response.segment_id, response.bucket)
        self._golden[key] = response.bits

    def buckets_for(self, device_id: str, segment_id: int):
        return sorted(
            b for (d, s, b) in self._golden if d == device_id and s == segment_id
        )

    def authenticate(self, device_id: str, response: PufResponse) -> AuthResult:
        if not response.bits:
            return AuthResult(False, "empty response")
        buckets = self.buckets_for(device_id, response.segment_id)
        if not buckets:
            return AuthResult(False, "unknown device or segment")
        target = response.bucket
        bucket = min(buckets, key=lambda b: (abs(b - target), b))
        golden = self._golden[(device_id, response.segment_id, bucket)]
        union = golden | response.bits
        j = (len(golden & response.bits) / len(union)) if union else 1.0
        if j >= self.threshold:
            return AuthResult(True, "ok", j, bucket)
        return AuthResult(False, "similarity below threshold", j, bucket)
