"""Reduced-latency access policy driven by a weak-column profile.

Three independently switchable mechanisms:
* variable-latency reads: reads to subarray columns with no known weak cells
  use the reduced activation delay, others the default;
* column reordering: the address map sends cacheline 0 (the most common first
  access of a newly activated row) to the strongest global column;
* reduced-latency writes: writes never sample the bitline early, so they
  always use the aggressively reduced delay.

A compatibility flag coarsens weakness to whole global columns, which models
the earlier design this policy improves on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .characterize import WeakColumnProfile
from .chipsynth import SyntheticChip, activation_flip_probabilities
from .geometry import DramGeometry, Location

DEFAULT_TRCD_CYCLES = 29
REDUCED_READ_TRCD_CYCLES = 18
WRITE_TRCD_CYCLES = 7


@dataclass
class ColumnReorderMap:
    """Per-bank permutation of global column indices (logical -> physical)."""

    geo: DramGeometry
    perm: np.ndarray = None  # int [banks_total, cachelines_per_row]

    def __post_init__(self):
        shape = (self.geo.banks_total, self.geo.cachelines_per_row)
        if self.perm is None:
            self.perm = np.tile(np.arange(shape[1]), (shape[0], 1))
        else:
            self.perm = np.asarray(self.perm, dtype=np.int64)
            if self.perm.shape != shape:
                raise ValueError(f"permutation must have shape {shape}")
        for bank in range(shape[0]):
            if not np.array_equal(np.sort(self.perm[bank]), np.arange(shape[1])):
                raise ValueError(f"bank {bank} mapping is not a permutation")

    def physical_column(self, bank: int, logical_col: int) -> int:
        return int(self.perm[bank, logical_col])

    def is_identity(self) -> bool:
        return bool((self.perm == np.arange(self.perm.shape[1])).all())


def build_reorder_map(profile: WeakColumnProfile) -> ColumnReorderMap:
    """Swap cacheline 0 with the global column that is weak in the fewest
    subarrays (ties to the lowest index), per bank."""
    geo = profile.geo
    reorder = ColumnReorderMap(geo=geo)
    for bank in range(geo.banks_total):
        weak_per_col = profile.weak[bank].sum(axis=0)
        strongest = int(np.argmin(weak_per_col))
        perm = reorder.perm[bank]
        perm[0], perm[strongest] = strongest, 0
    return reorder


@dataclass
class SolarConfig:
    """Access-latency policy: which delay each request is entitled to."""

    profile: WeakColumnProfile
    reorder: ColumnReorderMap = None
    vlc: bool = True
    rsc: bool = True
    rlw: bool = True
    flydram_compat: bool = False
    trcd_default_cycles: int = DEFAULT_TRCD_CYCLES
    trcd_reduced_read_cycles: int = REDUCED_READ_TRCD_CYCLES
    trcd_write_cycles: int = WRITE_TRCD_CYCLES

    def __post_init__(self):
        if not self.trcd_write_cycles < self.trcd_reduced_read_cycles < self.trcd_default_cycles:
            raise ValueError("need write < reduced read < default activation cycles")
        if self.reorder is None or not self.rsc:
            self.reorder = ColumnReorderMap(geo=self.profile.geo)
        self._global_weak = np.stack(
            [self.profile.column_weak_anywhere(b) for b in range(self.profile.geo.banks_total)]
        )

    def effective_column(self, bank: int, logical_col: int) -> int:
        return self.reorder.physical_column(bank, logical_col) if self.rsc else logical_col


MODE_FLAGS = {
    "baseline": dict(vlc=False, rsc=False, rlw=False, flydram_compat=False),
    "vlc": dict(vlc=True, rsc=False, rlw=False, flydram_compat=False),
    "rsc": dict(vlc=True, rsc=True, rlw=False, flydram_compat=False),
    "rlw": dict(vlc=False, rsc=False, rlw=True, flydram_compat=False),
    "solar": dict(vlc=True, rsc=True, rlw=True, flydram_compat=False),
    "flydram": dict(vlc=True, rsc=False, rlw=False, flydram_compat=True),
}


def solar_mode(mode: str, profile: WeakColumnProfile, reorder: ColumnReorderMap = None) -> SolarConfig:
    """Named policy bundles; "rsc" includes variable-latency reads because a
    reorder map changes nothing unless read latency can vary."""
    if mode not in MODE_FLAGS:
        raise ValueError(f"unknown mode {mode!r}; have {sorted(MODE_FLAGS)}")
    flags = MODE_FLAGS[mode]
    if reorder is None and flags["rsc"]:
        reorder = build_reorder_map(profile)
    return SolarConfig(profile=profile, reorder=reorder, **flags)


def trcd_for_access(cfg: SolarConfig, loc: Location, is_write: bool, row_was_closed: bool) -> int:
    """Activation delay (in cycles) this access is entitled to.

    Open-row accesses return the default, which the timing model ignores
    (no activation happens). Writes drive the bitline instead of sampling it,
    so they are safe at the aggressive write delay regardless of the profile.
    """
    if not row_was_closed:
        return cfg.trcd_default_cycles
    if is_write:
        return cfg.trcd_write_cycles if cfg.rlw else cfg.trcd_default_cycles
    bank = loc.flat_bank(cfg.profile.geo)
    col = cfg.effective_column(bank, loc.cacheline_index)
    if cfg.flydram_compat:
        weak = bool(cfg._global_weak[bank, col])
        return cfg.trcd_default_cycles if weak else cfg.trcd_reduced_read_cycles
    if not cfg.vlc:
        return cfg.trcd_default_cycles
    weak = cfg.profile.is_weak(bank, loc.subarray, col)
    return cfg.trcd_default_cycles if weak else cfg.trcd_reduced_read_cycles


def profile_storage_bits(geo: DramGeometry) -> int:
    """One bit per (bank, subarray, subarray column)."""
    return geo.banks_total * geo.subarrays_per_bank * geo.cachelines_per_row


@dataclass
class ReadSafetyResult:
    accesses: int
    reduced_reads: int
    corruptions: int

    @property
    def reduced_fraction(self) -> float:
        return self.reduced_reads / self.accesses if self.accesses else 0.0


def simulate_read_safety(
    chip: SyntheticChip,
    cfg: SolarConfig,
    n_accesses: int,
    rng: np.random.Generator,
    clock_period_ns: float = 0.625,
    pattern=None,
    temperature_c: float = 50.0,
) -> ReadSafetyResult:
    """Closed-row reads at policy-chosen delays, counting visible flips.

    Accesses are uniform over (bank, row, cacheline). The policy maps the
    logical cacheline through the reorder, and the flip model samples the
    physically accessed cacheline at the granted delay.
    """
    from .chipsynth import DataPattern, SAFE_TRCD_NS

    if pattern is None:
        pattern = DataPattern.SOLID1
    geo = chip.geo
    banks = rng.integers(0, geo.banks_total, size=n_accesses)
    rows = rng.integers(0, geo.rows_per_bank, size=n_accesses)
    cols = rng.integers(0, geo.cachelines_per_row, size=n_accesses)
    reduced = 0
    corruptions = 0
    default_ns = cfg.trcd_default_cycles * clock_period_ns
    reduced_ns = cfg.trcd_reduced_read_cycles * clock_period_ns
    for bank, row, col in zip(banks.tolist(), rows.tolist(), cols.tolist()):
        phys_col = cfg.effective_column(bank, col)
        subarray = row // geo.rows_per_subarray
        if cfg.flydram_compat:
            weak = bool(cfg._global_weak[bank, phys_col])
        elif cfg.vlc:
            weak = cfg.profile.is_weak(bank, subarray, phys_col)
        else:
            weak = True  # no variable latency: everything at the default delay
        trcd_ns = default_ns if weak else reduced_ns
        if not weak:
            reduced += 1
        if trcd_ns >= SAFE_TRCD_NS:
            continue
        sl = chip.cells_in_cacheline(bank, row, phys_col)
        if sl.start == sl.stop:
            continue
        p = activation_flip_probabilities(chip, sl, trcd_ns, temperature_c, pattern)
        if (rng.random(p.size) < p).any():
            corruptions += 1
    return ReadSafetyResult(accesses=n_accesses, reduced_reads=reduced, corruptions=corruptions)
