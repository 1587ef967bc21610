"""Testing routines and metrics over synthetic chips.

Activation-failure sweeps walk every cacheline of every row with a closed-row
activate-and-read; disturbance sweeps hammer every interior victim row
double-sided. Both record failures as coordinate sets with the conditions
attached, and the profile builders reduce those sets to reusable artifacts
(weak-column profiles, hammer-count profiles).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .geometry import DramGeometry
from .chipsynth import (
    ALL_PATTERNS,
    DataPattern,
    SyntheticChip,
    activation_flip_probabilities,
    ecc_visible_coords,
    sample_hammer,
    REFERENCE_TEMP_C,
)

DEFAULT_TRCD_NS = 18.0
PROFILE_ITERATION_CAP = 2000


@dataclass
class FailureBitmap:
    """Set of (flat_bank, row, col, bit) failure coordinates plus the
    conditions they were observed under."""

    coords: set
    geo: DramGeometry
    data_pattern: DataPattern = None
    trcd_ns: float = None
    temperature_c: float = None
    iterations: int = 0
    hc: int = None

    def __post_init__(self):
        self.coords = set(self.coords)

    def __len__(self):
        return len(self.coords)

    def __iter__(self):
        return iter(self.coords)

    def __contains__(self, coord):
        return coord in self.coords

    def local_bitlines(self) -> set:
        """(bank, subarray, col, bit) quadruples: one per local bitline that
        showed at least one failing cell."""
        rps = self.geo.rows_per_subarray
        return {(b, r // rps, c, bit) for (b, r, c, bit) in self.coords}

    def subarray_columns(self) -> set:
        rps = self.geo.rows_per_subarray
        return {(b, r // rps, c) for (b, r, c, bit) in self.coords}

    def words(self, word_bits: int = 64) -> dict:
        """Flip count per (bank, row, word index)."""
        out = {}
        for (b, r, c, bit) in self.coords:
            w = (c * self.geo.cacheline_bits + bit) // word_bits
            key = (b, r, w)
            out[key] = out.get(key, 0) + 1
        return out

    def union(self, other: "FailureBitmap") -> "FailureBitmap":
        return FailureBitmap(
            coords=self.coords | other.coords,
            geo=self.geo,
            data_pattern=self.data_pattern if self.data_pattern == other.data_pattern else None,
            trcd_ns=self.trcd_ns if self.trcd_ns == other.trcd_ns else None,
            temperature_c=self.temperature_c if self.temperature_c == other.temperature_c else None,
            iterations=self.iterations + other.iterations,
            hc=self.hc if self.hc == other.hc else None,
        )


def _cell_coords(chip: SyntheticChip, idx: np.ndarray):
    cpr = chip.geo.cachelines_per_row
    rows = chip.geo.rows_per_bank
    key = chip.ac_key[idx]
    col = key % cpr
    row = (key // cpr) % rows
    bank = key // (cpr * rows)
    return bank, row, col, chip.ac_bit[idx]


def activation_fail_counts(
    chip: SyntheticChip,
    pattern: DataPattern,
    reduced_trcd_ns: float,
    temperature_c: float,
    iterations: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Per-activation-cell failure counts over `iterations` full-chip passes,
    aligned with the chip's cell arrays.

    Cells fail independently, so drawing a binomial count per cell is
    distributed identically to walking rows cacheline-by-cacheline and
    accumulating single-pass outcomes.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    p = activation_flip_probabilities(chip, slice(None), reduced_trcd_ns, temperature_c, pattern)
    return rng.binomial(iterations, p)


def run_activation_failure_test(
    chip: SyntheticChip,
    pattern: DataPattern,
    reduced_trcd_ns: float,
    temperature_c: float,
    iterations: int,
    rng: np.random.Generator,
    default_trcd_ns: float = DEFAULT_TRCD_NS,
) -> FailureBitmap:
    """Union of failures over `iterations` passes at a reduced activation delay.

    Each pass visits every cacheline of every row in column order with a
    closed-row access, so every weak cell is exposed once per pass as the
    first-accessed cacheline of its row activation.
    """
    if reduced_trcd_ns >= default_trcd_ns:
        raise ValueError("the test delay must be below the default activation delay")
    counts = activation_fail_counts(chip, pattern, reduced_trcd_ns, temperature_c, iterations, rng)
    idx = np.flatnonzero(counts > 0)
    bank, row, col, bit = _cell_coords(chip, idx)
    coords = set(zip(bank.tolist(), row.tolist(), col.tolist(), bit.tolist()))
    return FailureBitmap(
        coords=coords,
        geo=chip.geo,
        data_pattern=pattern,
        trcd_ns=reduced_trcd_ns,
        temperature_c=temperature_c,
        iterations=iterations,
    )


def coverage(per_pattern_bitmaps: dict) -> dict:
    """Fraction of all discovered weak local bitlines each pattern found."""
    if not per_pattern_bitmaps:
        raise ValueError("need at least one pattern's bitmap")
    per_pattern = {p: bm.local_bitlines() for p, bm in per_pattern_bitmaps.items()}
    universe = set().union(*per_pattern.values())
    if not universe:
        return {p: 0.0 for p in per_pattern}
    return {p: len(found) / len(universe) for p, found in per_pattern.items()}


def fprob(fail_counts, iterations: int, cells_per_bitline: int = None) -> float:
    """Failure probability of one local bitline: total observed fails over
    total cell-trials. `cells_per_bitline` defaults to the number of counts
    given; pass the structural cell count to include never-failing cells."""
    counts = list(fail_counts)
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if cells_per_bitline is None:
        cells_per_bitline = len(counts)
    if cells_per_bitline < 1:
        raise ValueError("cells_per_bitline must be >= 1")
    total = float(sum(counts))
    return total / (iterations * cells_per_bitline)


def jaccard(s1, s2) -> float:
    """Similarity of two failure sets; two empty sets count as identical."""
    a = s1.coords if isinstance(s1, FailureBitmap) else set(s1)
    b = s2.coords if isinstance(s2, FailureBitmap) else set(s2)
    union = a | b
    if not union:
        return 1.0
    return len(a & b) / len(union)


@dataclass
class WeakColumnProfile:
    """Per-(bank, subarray) bit vector over subarray columns; a set bit means
    the column needs the default activation delay."""

    geo: DramGeometry
    weak: np.ndarray = None  # bool [banks_total, subarrays_per_bank, cachelines_per_row]

    def __post_init__(self):
        shape = (self.geo.banks_total, self.geo.subarrays_per_bank, self.geo.cachelines_per_row)
        if self.weak is None:
            self.weak = np.zeros(shape, dtype=bool)
        else:
            self.weak = np.asarray(self.weak, dtype=bool)
            if self.weak.shape != shape:
                raise ValueError(f"weak array must have shape {shape}")

    def mark(self, bank: int, subarray: int, col: int):
        self.weak[bank, subarray, col] = True

    def is_weak(self, bank: int, subarray: int, col: int) -> bool:
        return bool(self.weak[bank, subarray, col])

    def weak_count(self) -> int:
        return int(self.weak.sum())

    def weak_fraction(self) -> float:
        return float(self.weak.mean())

    def column_weak_anywhere(self, bank: int) -> np.ndarray:
        """Per-column OR across subarrays: the coarse (global-column) view."""
        return self.weak[bank].any(axis=0)

    def triples(self) -> set:
        b, s, c = np.nonzero(self.weak)
        return set(zip(b.tolist(), s.tolist(), c.tolist()))

    @classmethod
    def from_chip(cls, chip: SyntheticChip) -> "WeakColumnProfile":
        """Ground-truth profile straight from the chip's weak-column map."""
        prof = cls(geo=chip.geo)
        for (b, s, c) in chip.weak_columns:
            prof.weak[b, s, c] = True
        return prof

    @classmethod
    def from_bitmap(cls, bitmap: FailureBitmap) -> "WeakColumnProfile":
        prof = cls(geo=bitmap.geo)
        for (b, s, c) in bitmap.subarray_columns():
            prof.weak[b, s, c] = True
        return prof


def build_weak_profile(
    chip: SyntheticChip,
    patterns,
    temperatures,
    rng: np.random.Generator,
    reduced_trcd_ns: float = 10.0,
    iteration_cap: int = PROFILE_ITERATION_CAP,
):
    """Discover weak subarray columns by repeated single-pass tests.

    For each (pattern, temperature) combination, passes continue until one
    yields at most one failing bit on a local bitline never seen to fail
    before. Returns (profile, total passes used). Bitlines already seen under
    earlier combinations do not count as new.
    """
    patterns = list(patterns)
    temperatures = list(temperatures)
    if not patterns or not temperatures:
        raise ValueError("need at least one pattern and one temperature")
    profile = WeakColumnProfile(geo=chip.geo)
    seen_bitlines = set()
    iterations_used = 0
    for pattern in patterns:
        for temp in temperatures:
            for _ in range(iteration_cap):
                bitmap = run_activation_failure_test(chip, pattern, reduced_trcd_ns, temp, 1, rng)
                iterations_used += 1
                new_bits = sum(
                    1
                    for (b, r, c, bit) in bitmap.coords
                    if (b, r // chip.geo.rows_per_subarray, c, bit) not in seen_bitlines
                )
                seen_bitlines |= bitmap.local_bitlines()
                for (b, s, c) in bitmap.subarray_columns():
                    profile.weak[b, s, c] = True
                if new_bits <= 1:
                    break
    return profile, iterations_used


@dataclass
class HcProfile:
    """Hammer-count landmarks extracted from a characterization sweep."""

    rowhammerable: bool
    hc_first: int = None
    hc_second: int = None
    hc_third: int = None
    sweep: tuple = ()
    flip_counts: dict = field(default_factory=dict)            # hc -> union flip count
    pattern_flip_counts: dict = field(default_factory=dict)    # pattern -> count at max hc

    def __post_init__(self):
        landmarks = [x for x in (self.hc_first, self.hc_second, self.hc_third) if x is not None]
        if landmarks != sorted(landmarks):
            raise ValueError("hammer-count landmarks must be non-decreasing")

    @property
    def worst_pattern(self) -> DataPattern:
        if not self.pattern_flip_counts:
            return None
        best = max(self.pattern_flip_counts.values())
        for p in ALL_PATTERNS:
            if self.pattern_flip_counts.get(p) == best:
                return p
        return None


def default_t_rc_ns(type_node: str) -> float:
    if type_node.startswith("ddr3"):
        return 52.5
    if type_node.startswith("ddr4"):
        return 50.0
    return 60.0


HAMMER_WINDOW_NS = 32e6  # refresh must stay disabled for the whole core loop


def interior_victim_rows(chip: SyntheticChip):
    d = chip.remap.aggressor_distance
    return range(d, chip.geo.rows_per_bank - d)


def run_rowhammer_characterization(
    chip: SyntheticChip,
    patterns,
    hc_sweep,
    rng: np.random.Generator,
    t_rc_ns: float = None,
    victim_rows=None,
    flat_banks=None,
    deterministic: bool = False,
    ecc: str = "auto",
) -> dict:
    """Double-sided hammer sweep: per (pattern, hc), hammer every victim row
    and union the visible flips.

    The core loop per victim must fit in the window a real test can keep
    refresh disabled for; each hammer costs two activations. Data is restored
    after each victim, so per-victim samples are independent. On-die ECC
    ("auto": lpddr4 profiles only) filters each victim's flips word-by-word
    before they become visible.
    """
    patterns = list(patterns)
    hc_sweep = sorted(int(h) for h in hc_sweep)
    if not patterns or not hc_sweep:
        raise ValueError("need at least one pattern and one hammer count")
    if t_rc_ns is None:
        t_rc_ns = default_t_rc_ns(chip.profile.type_node)
    worst = max(hc_sweep) * 2 * t_rc_ns
    if worst > HAMMER_WINDOW_NS:
        raise ConfigError(
            f"hammer count {max(hc_sweep)} needs {worst / 1e6:.1f} ms of disabled refresh; "
            f"limit is {HAMMER_WINDOW_NS / 1e6:.0f} ms"
        )
    if ecc == "auto":
        use_ecc = chip.profile.type_node.startswith("lpddr4")
    else:
        use_ecc = bool(ecc)
    if victim_rows is None:
        victim_rows = interior_victim_rows(chip)
    victim_rows = list(victim_rows)
    if flat_banks is None:
        flat_banks = range(chip.geo.banks_total)
    flat_banks = list(flat_banks)

    results = {}
    for pattern in patterns:
        for hc in hc_sweep:
            coords = set()
            for bank in flat_banks:
                for victim in victim_rows:
                    flips = sample_hammer(
                        chip, victim, hc, rng,
                        flat_bank=bank, pattern=pattern, deterministic=deterministic,
                    )
                    if use_ecc and flips:
                        flips = ecc_visible_coords(flips, chip.geo)
                    coords |= flips
            results[(pattern, hc)] = FailureBitmap(
                coords=coords, geo=chip.geo, data_pattern=pattern,
                temperature_c=REFERENCE_TEMP_C, iterations=1, hc=hc,
            )
    return results


def extract_hc_profile(char_results: dict) -> HcProfile:
    """Reduce sweep results to first/second/third-flip hammer counts.

    hc_second/hc_third are the smallest hammer counts at which some single
    64-bit word holds >= 2 / >= 3 flips. A chip with no flips anywhere in the
    sweep is reported not disturbable at these hammer counts.
    """
    if not char_results:
        raise ValueError("empty characterization results")
    sweep = sorted({hc for (_, hc) in char_results})
    by_hc = {}
    for (pattern, hc), bitmap in char_results.items():
        if hc in by_hc:
            by_hc[hc] = by_hc[hc].union(bitmap)
        else:
            by_hc[hc] = bitmap
    hc_first = hc_second = hc_third = None
    flip_counts = {}
    for hc in sweep:
        bm = by_hc[hc]
        flip_counts[hc] = len(bm)
        if len(bm) and hc_first is None:
            hc_first = hc
        if len(bm):
            word_counts = bm.words()
            if hc_second is None and any(v >= 2 for v in word_counts.values()):
                hc_second = hc
            if hc_third is None and any(v >= 3 for v in word_counts.values()):
                hc_third = hc
    max_hc = sweep[-1]
    pattern_counts = {
        pattern: len(bitmap)
        for (pattern, hc), bitmap in char_results.items()
        if hc == max_hc
    }
    return HcProfile(
        rowhammerable=hc_first is not None,
        hc_first=hc_first,
        hc_second=hc_second,
        hc_third=hc_third,
        sweep=tuple(sweep),
        flip_counts=flip_counts,
        pattern_flip_counts=pattern_counts,
    )


def locate_hc_first(
    chip: SyntheticChip,
    rng: np.random.Generator = None,
    pattern: DataPattern = None,
    t_rc_ns: float = None,
    start: int = 1000,
    rel_tol: float = 0.05,
    victim_rows=None,
    flat_banks=None,
) -> int:
    """Smallest flipping hammer count, found by geometric search plus
    bisection to the requested relative tolerance.

    Uses the deterministic threshold compare, so the answer is exact up to
    the tolerance of the bisection interval.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    if t_rc_ns is None:
        t_rc_ns = default_t_rc_ns(chip.profile.type_node)
    hc_limit = int(HAMMER_WINDOW_NS / (2 * t_rc_ns))

    def flips_at(hc: int) -> bool:
        res = run_rowhammer_characterization(
            chip, [pattern or chip.profile.worst_hammer_pattern], [hc], rng,
            t_rc_ns=t_rc_ns, victim_rows=victim_rows, flat_banks=flat_banks,
            deterministic=True, ecc=False,
        )
        (_, bitmap), = res.items()
        return len(bitmap) > 0

    lo, hi = None, None
    hc = max(1, int(start))
    while hc <= hc_limit:
        if flips_at(hc):
            hi = hc
            break
        lo = hc
        hc = int(hc * 1.25) + 1
    if hi is None:
        raise ConfigError(f"no flips up to the {hc_limit}-hammer window limit")
    if lo is None:
        lo = 0
    while hi - lo > 1 and (hi - lo) / hi > rel_tol:
        mid = (lo + hi) // 2
        if flips_at(mid):
            hi = mid
        else:
            lo = mid
    return hi
