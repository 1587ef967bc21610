"""True random numbers from activation-failure timing violations.

Cells that fail close to half the time under a reduced activation delay are
located once, then harvested by alternating reads between two words in
distinct rows of the same bank (every access forces a fresh activation).
Identification counts 3-bit symbols over a simulated read stream and keeps
cells whose eight symbol counts all sit within 10% of the expected count.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc, gammaincc

from .chipsynth import (
    REFERENCE_TEMP_C,
    REFERENCE_TRCD_NS,
    SyntheticChip,
    activation_flip_probabilities,
)
from .errors import ConfigError, RngUnavailableError

SYMBOL_BITS = 3
N_SYMBOLS = 8
SYMBOL_TOLERANCE = 0.10
MIN_READS = N_SYMBOLS * SYMBOL_BITS  # one expected count per symbol
CANDIDATE_BAND = (0.30, 0.70)
WORD_DENSITY_MAX = 4
ENTROPY_FLOOR = 0.9507
ALPHA = 1e-4
ENERGY_NJ_PER_BIT = 4.4  # documentation constant, no power model behind it
IDLE_INTERLEAVED_MBPS = 83.1  # documentation constant


@dataclass(frozen=True)
class WordCells:
    """One selected word and the harvested bit positions inside it."""

    flat_bank: int
    row: int
    word: int  # word index within the row
    bits: tuple  # bit positions within the word, ascending

    def __post_init__(self):
        if not 1 <= len(self.bits) <= WORD_DENSITY_MAX:
            raise ValueError(f"word must carry 1..{WORD_DENSITY_MAX} cells")
        if tuple(sorted(set(self.bits))) != self.bits:
            raise ValueError("bit positions must be ascending and unique")


@dataclass(frozen=True)
class RngCellMap:
    """Two harvest words per usable bank, rows distinct within a bank."""

    geo_key: tuple
    temperature_c: float
    reads: int
    trcd_ns: float
    entries: dict = field(default_factory=dict)  # flat_bank -> (WordCells, WordCells)

    def __post_init__(self):
        for bank, pair in self.entries.items():
            first, second = pair
            if first.flat_bank != bank or second.flat_bank != bank:
                raise ValueError("entry filed under the wrong bank")
            if first.row == second.row:
                raise ValueError("the two selected words must lie in distinct rows")

    @property
    def banks(self):
        return sorted(self.entries)

    @property
    def bits_per_half(self) -> int:
        """RNG bits produced by one half-loop (one word read per bank)."""
        return sum(len(self.entries[b][0].bits) for b in self.banks) if self.entries else 0

    def bank_bits(self, flat_bank: int) -> int:
        first, second = self.entries[flat_bank]
        return len(first.bits) + len(second.bits)


def _symbol_probs(p: np.ndarray) -> np.ndarray:
    """[n, 8] probability of each 3-bit symbol for Bernoulli(p) bits."""
    q = 1.0 - p
    out = np.empty((p.size, N_SYMBOLS))
    for s in range(N_SYMBOLS):
        prob = np.ones_like(p)
        for b in range(SYMBOL_BITS):
            prob = prob * (p if (s >> b) & 1 else q)
        out[:, s] = prob
    return out


def identify_rng_cells(
    chip: SyntheticChip,
    reads: int = 1000,
    temperature_c: float = REFERENCE_TEMP_C,
    rng: np.random.Generator | None = None,
    trcd_ns: float = REFERENCE_TRCD_NS,
) -> RngCellMap:
    """Locate cells whose failure stream looks like a fair coin.

    Each candidate's `reads`-bit stream is grouped into non-overlapping 3-bit
    symbols; the cell qualifies iff all eight symbol counts fall within 10%
    of reads/24. Counts are drawn as one multinomial per cell, which is
    distribution-identical to walking the stream. Candidates are pre-screened
    to failure probabilities in [0.30, 0.70]; anything outside cannot pass
    the count filter except with negligible probability.
    """
    if reads < MIN_READS:
        raise ConfigError(
            f"need at least {MIN_READS} reads (one expected count per symbol)"
        )
    if rng is None:
        rng = np.random.default_rng()
    geo = chip.geo
    n_cells = chip.n_activation_cells
    map_kwargs = dict(
        geo_key=geo.key(), temperature_c=temperature_c, reads=reads, trcd_ns=trcd_ns
    )
    if n_cells == 0:
        return RngCellMap(entries={}, **map_kwargs)

    p_all = activation_flip_probabilities(chip, slice(None), trcd_ns, temperature_c, None)
    cand = np.flatnonzero((p_all >= CANDIDATE_BAND[0]) & (p_all <= CANDIDATE_BAND[1]))
    if cand.size == 0:
        return RngCellMap(entries={}, **map_kwargs)

    n_sym = reads // SYMBOL_BITS
    expected = n_sym / N_SYMBOLS
    lo, hi = (1 - SYMBOL_TOLERANCE) * expected, (1 + SYMBOL_TOLERANCE) * expected
    counts = rng.multinomial(n_sym, _symbol_probs(p_all[cand]))
    ok = ((counts >= lo) & (counts <= hi)).all(axis=1)
    qualified = cand[ok]
    if qualified.size == 0:
        return RngCellMap(entries={}, **map_kwargs)

    cpr = geo.cachelines_per_row
    wpc = geo.cacheline_bits // geo.word_bits
    key = chip.ac_key[qualified]
    bank_row = key // cpr
    col = key % cpr
    bit = chip.ac_bit[qualified]
    word_in_row = col * wpc + bit // geo.word_bits
    bit_in_word = bit % geo.word_bits

    by_word: dict = {}
    for br, w, b in zip(bank_row.tolist(), word_in_row.tolist(), bit_in_word.tolist()):
        by_word.setdefault((br // geo.rows_per_bank, br % geo.rows_per_bank, w), []).append(b)

    entries = {}
    by_bank: dict = {}
    for (bank, row, w), bits in by_word.items():
        bits = tuple(sorted(set(bits))[:WORD_DENSITY_MAX])
        by_bank.setdefault(bank, []).append((-len(bits), row, w, bits))
    for bank, words in by_bank.items():
        words.sort()
        neg, row, w, bits = words[0]
        first = WordCells(bank, row, w, bits)
        second = None
        for neg2, row2, w2, bits2 in words[1:]:
            if row2 != row:
                second = WordCells(bank, row2, w2, bits2)
                break
        if second is not None:
            entries[bank] = (first, second)
    return RngCellMap(entries=entries, **map_kwargs)


@dataclass(frozen=True)
class Bitstream:
    bits: np.ndarray  # uint8 of 0/1
    chip_seed: int
    temperature_c: float
    emission_order: tuple  # (flat_bank, row, word, bit) per position in one full loop

    def __len__(self) -> int:
        return int(self.bits.size)

    def source_of(self, i: int):
        """Which cell produced bit i (the loop repeats in a fixed order)."""
        return self.emission_order[i % len(self.emission_order)]


def generate_bits(
    chip: SyntheticChip,
    cmap: RngCellMap,
    num_bits: int,
    rng: np.random.Generator | None = None,
    temperature_c: float | None = None,
) -> Bitstream:
    """Harvest bits by alternating activations between each bank's two words.

    Emission order per loop: first-half word of every bank, then second-half
    word of every bank, banks ascending, bit positions ascending. The stream
    stops at exactly num_bits.
    """
    if num_bits < 0:
        raise ValueError("num_bits must be non-negative")
    temperature = cmap.temperature_c if temperature_c is None else temperature_c
    if num_bits == 0:
        return Bitstream(np.zeros(0, dtype=np.uint8), chip.seed, temperature, ())
    if not cmap.entries:
        raise RngUnavailableError("no usable banks in the cell map")
    if cmap.geo_key != chip.geo.key():
        raise ConfigError("cell map was built for a different geometry")
    if rng is None:
        rng = np.random.default_rng()

    geo = chip.geo
    wpc = geo.cacheline_bits // geo.word_bits
    order = []
    cell_idx = []
    for half in (0, 1):
        for bank in cmap.banks:
            wc = cmap.entries[bank][half]
            for b in wc.bits:
                col = wc.word // wpc
                cl_bit = (wc.word % wpc) * geo.word_bits + b
                sl = chip.cells_in_cacheline(bank, wc.row, col)
                hit = np.flatnonzero(chip.ac_bit[sl] == cl_bit)
                if hit.size != 1:
                    raise RngUnavailableError(
                        f"mapped cell (bank {bank}, row {wc.row}, word {wc.word}, "
                        f"bit {b}) is absent from the chip"
                    )
                cell_idx.append(sl.start + int(hit[0]))
                order.append((bank, wc.row, wc.word, b))
    cell_idx = np.asarray(cell_idx)
    p = activation_flip_probabilities(chip, cell_idx, cmap.trcd_ns, temperature, None)
    loops = math.ceil(num_bits / p.size)
    draws = rng.random((loops, p.size)) < p
    bits = draws.reshape(-1)[:num_bits].astype(np.uint8)
    return Bitstream(bits, chip.seed, temperature, tuple(order))


def loop_runtime_ns(t_rc_ns: float, banks_used: int, clock_period_ns: float) -> float:
    """One full loop issues two row activations per bank; with few banks the
    cycle is bound by t_RC per half, with many by 4-cycle command spacing."""
    return 2.0 * max(t_rc_ns, banks_used * 4 * clock_period_ns)


def throughput_estimate(cmap: RngCellMap, banks_used: int, loop_runtime_ns: float) -> float:
    """Bits per second: the sum of per-bank data over one loop runtime."""
    if banks_used < 0 or banks_used > len(cmap.entries):
        raise ConfigError(f"banks_used must be within 0..{len(cmap.entries)}")
    if loop_runtime_ns <= 0:
        raise ValueError("loop runtime must be positive")
    total = sum(cmap.bank_bits(b) for b in cmap.banks[:banks_used])
    return total / loop_runtime_ns * 1e9


def latency_estimate_ns(num_bits: int, bits_per_half: int, t_rc_ns: float) -> float:
    """Time to satisfy a one-shot request, each half-loop bounded by t_RC."""
    if bits_per_half <= 0:
        raise RngUnavailableError("no RNG bits per half-loop")
    return math.ceil(num_bits / bits_per_half) * t_rc_ns


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    passed: bool


@dataclass(frozen=True)
class RandomnessReport:
    n_bits: int
    entropy_per_bit: float
    entropy_ok: bool
    tests: dict
    alpha: float

    @property
    def all_passed(self) -> bool:
        return self.entropy_ok and all(t.passed for t in self.tests.values())


def shannon_entropy(bits: np.ndarray) -> float:
    p1 = float(np.mean(bits)) if bits.size else 0.0
    if p1 in (0.0, 1.0):
        return 0.0
    p0 = 1.0 - p1
    return float(-p1 * math.log2(p1) - p0 * math.log2(p0))


def _monobit(bits: np.ndarray) -> tuple:
    s = abs(int(2 * int(bits.sum()) - bits.size)) / math.sqrt(bits.size)
    return s, float(erfc(s / math.sqrt(2)))


def _runs(bits: np.ndarray) -> tuple:
    n = bits.size
    pi = float(bits.mean())
    if abs(pi - 0.5) >= 2 / math.sqrt(n):
        return float("inf"), 0.0  # frequency prerequisite failed
    v = int(np.count_nonzero(np.diff(bits))) + 1
    num = abs(v - 2 * n * pi * (1 - pi))
    den = 2 * math.sqrt(2 * n) * pi * (1 - pi)
    return v, float(erfc(num / den))


def _block_frequency(bits: np.ndarray, m: int = 128) -> tuple:
    n_blocks = bits.size // m
    if n_blocks < 1:
        return 0.0, 0.0
    pis = bits[: n_blocks * m].reshape(n_blocks, m).mean(axis=1)
    chi2 = 4.0 * m * float(((pis - 0.5) ** 2).sum())
    return chi2, float(gammaincc(n_blocks / 2.0, chi2 / 2.0))


_LONGEST_RUN_TABLES = (
    # (min stream length, block size, bucket upper-bounds, bucket probabilities)
    (750000, 10000, (10, 11, 12, 13, 14, 15, 16),
     (0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727)),
    (6272, 128, (4, 5, 6, 7, 8, 9),
     (0.1174, 0.2430, 0.2493, 0.1752, 0.1027, 0.1124)),
    (128, 8, (1, 2, 3, 4),
     (0.2148, 0.3672, 0.2305, 0.1875)),
)


def _longest_run_per_block(bits: np.ndarray, m: int) -> np.ndarray:
    n_blocks = bits.size // m
    blocks = bits[: n_blocks * m].reshape(n_blocks, m)
    padded = np.zeros((n_blocks, m + 2), dtype=np.int8)
    padded[:, 1:-1] = blocks
    runs = np.zeros(n_blocks, dtype=np.int64)
    # run lengths via cumulative count resets at zeros
    acc = np.zeros(n_blocks, dtype=np.int64)
    for j in range(1, m + 1):
        acc = (acc + 1) * padded[:, j]
        runs = np.maximum(runs, acc)
    return runs


def _longest_run(bits: np.ndarray) -> tuple:
    for min_n, m, uppers, probs in _LONGEST_RUN_TABLES:
        if bits.size >= min_n:
            break
    else:
        return 0.0, 0.0
    runs = _longest_run_per_block(bits, m)
    k = len(uppers) - 1
    counts = np.zeros(k + 1, dtype=np.int64)
    clipped = np.clip(runs, uppers[0], uppers[-1])
    for i, u in enumerate(uppers):
        counts[i] = int(np.count_nonzero(clipped == u))
    n_blocks = runs.size
    exp = np.asarray(probs) * n_blocks
    chi2 = float((((counts - exp) ** 2) / exp).sum())
    return chi2, float(gammaincc(k / 2.0, chi2 / 2.0))


def randomness_report(stream: Bitstream, alpha: float = ALPHA) -> RandomnessReport:
    """Five in-repo checks; full-suite validation uses exported streams."""
    bits = np.asarray(stream.bits, dtype=np.int8)
    if bits.size < 100:
        raise ValueError("need at least 100 bits")
    entropy = shannon_entropy(bits)
    tests = {}
    for name, fn in (
        ("monobit", _monobit),
        ("runs", _runs),
        ("block_frequency", _block_frequency),
        ("longest_run", _longest_run),
    ):
        stat, p = fn(bits)
        tests[name] = TestResult(stat, p, p >= alpha)
    return RandomnessReport(
        n_bits=int(bits.size),
        entropy_per_bit=entropy,
        entropy_ok=entropy >= ENTROPY_FLOOR,
        tests=tests,
        alpha=alpha,
    )


def export_bitstream(stream: Bitstream, path) -> dict:
    """Raw little-endian packed bits plus a JSON sidecar for external suites."""
    packed = np.packbits(stream.bits, bitorder="little")
    with open(path, "wb") as fh:
        fh.write(packed.tobytes())
    meta = {
        "n_bits": len(stream),
        "chip_seed": stream.chip_seed,
        "temperature_c": stream.temperature_c,
        "emission_order": [list(x) for x in stream.emission_order],
        "sha256": hashlib.sha256(packed.tobytes()).hexdigest(),
    }
    sidecar = str(path) + ".json"
    with open(sidecar, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
    return {"stream": str(path), "sidecar": sidecar, **meta}
