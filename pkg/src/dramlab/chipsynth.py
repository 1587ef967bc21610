"""Synthetic chip generation and fault sampling.

A SyntheticChip is a deterministic function of (manufacturer profile, geometry,
seed). It carries two sparse cell populations:

* activation-weak cells: bits that can flip when a row is activated with a
  reduced row-to-column delay and read before the sense amplifiers settle.
  They live only on weak local bitlines (subarray columns), and only the
  first-accessed cacheline of a newly activated row is exposed.
* disturbance-weak cells: bits with a finite hammer-count threshold. Repeated
  activation of physically adjacent rows flips them once the accumulated
  pressure crosses the threshold.

Sampling never mutates the chip; every stochastic operation consumes an
explicit numpy Generator so parallel workers can hold disjoint streams.
"""

from __future__ import annotations

import enum
import json
import hashlib
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import TemperatureRangeError
from .geometry import (
    DramGeometry,
    Location,
    RowRemapScheme,
    IDENTITY_REMAP,
    PAIRED_REMAP,
)

# Activation-failure timing envelope (ns). No failures at or above the safe
# threshold; the step factor reaches 1.0 at the reference delay.
SAFE_TRCD_NS = 14.0
REFERENCE_TRCD_NS = 10.0
TRCD_STEP_SLOPE_NS = 4.0

REFERENCE_TEMP_C = 50.0
TEMP_MIN_C = 40.0
TEMP_MAX_C = 70.0
TEMP_STEP_C = 5.0

# Disturbance model shape: per-cell flip probability is logistic in
# log(pressure/threshold); steepness 10 puts 2x threshold above 0.999.
HAMMER_LOGISTIC_STEEPNESS = 10.0

# Pressure a single activation exerts on rows at odd physical distances.
# Each nearest neighbor receives 0.5, so a double-sided pair at distance 1
# delivers exactly one unit of pressure per hammer to the victim.
ADJACENT_PRESSURE = 0.5
PRESSURE_DECAY = 20.0
MAX_VICTIM_OFFSET = 6


class DataPattern(enum.IntEnum):
    """Data backgrounds written before a test; they sensitize different cells."""

    SOLID0 = 0
    SOLID1 = 1
    COLSTRIPE0 = 2
    COLSTRIPE1 = 3
    CHECKERED0 = 4
    CHECKERED1 = 5
    ROWSTRIPE0 = 6
    ROWSTRIPE1 = 7


ALL_PATTERNS = tuple(DataPattern)


def pattern_mask(patterns) -> int:
    m = 0
    for p in patterns:
        m |= 1 << int(p)
    return m


@dataclass(frozen=True)
class ManufacturerProfile:
    """Statistics a chip is synthesized from.

    The headline numbers (weak-column fractions, minimum hammer counts) are
    calibration targets; the distribution shapes are model choices exposed
    here so experiments can override them.
    """

    name: str
    type_node: str
    weak_col_fraction_mean: float
    weak_col_fraction_sd: float
    rows_per_subarray: int
    hc_first_min: int
    # per-weak-column density of activation-weak cells, Beta(mean, concentration)
    cell_density_mean: float = 0.35
    cell_density_conc: float = 12.0
    # fraction of activation-weak cells pinned at failure probability 1/2
    rng_band_fraction: float = 0.05
    rng_cell_word_density_max: int = 4
    # probability each data pattern sensitizes a given activation-weak cell
    sensitizing_pattern_weights: tuple = (0.55, 0.8, 0.45, 0.45, 0.6, 0.6, 0.5, 0.5)
    # disturbance population
    hammer_cell_per_bit: float = 7.5e-4
    hammer_threshold_exponent: float = 2.0
    hammer_threshold_cap_multiple: float = 200.0
    hammer_cluster_fraction: float = 0.02
    worst_hammer_pattern: DataPattern = DataPattern.ROWSTRIPE1
    hammer_pattern_weight: float = 0.7
    temp_odds_sigma: float = 0.25
    default_remap_kind: str = "identity"

    def __post_init__(self):
        if self.name not in ("A", "B", "C"):
            raise ValueError("manufacturer name must be A, B, or C")
        for frac in (
            self.weak_col_fraction_mean,
            self.cell_density_mean,
            self.rng_band_fraction,
            self.hammer_pattern_weight,
        ):
            if not 0.0 <= frac <= 1.0:
                raise ValueError("profile fractions must lie in [0, 1]")
        if any(not 0.0 <= w <= 1.0 for w in self.sensitizing_pattern_weights):
            raise ValueError("pattern weights must lie in [0, 1]")
        if len(self.sensitizing_pattern_weights) != len(ALL_PATTERNS):
            raise ValueError("need one sensitizing weight per data pattern")
        if self.hc_first_min <= 0:
            raise ValueError("hc_first_min must be positive")
        if not 1 <= self.rng_cell_word_density_max <= 4:
            raise ValueError("rng_cell_word_density_max must be in [1, 4]")
        if self.hammer_threshold_cap_multiple <= 1.0:
            raise ValueError("hammer_threshold_cap_multiple must exceed 1")
        if self.hammer_threshold_exponent <= 0:
            raise ValueError("hammer_threshold_exponent must be positive")

    @property
    def default_remap(self) -> RowRemapScheme:
        return IDENTITY_REMAP if self.default_remap_kind == "identity" else PAIRED_REMAP

    def to_dict(self) -> dict:
        d = asdict(self)
        d["worst_hammer_pattern"] = int(self.worst_hammer_pattern)
        d["sensitizing_pattern_weights"] = list(self.sensitizing_pattern_weights)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ManufacturerProfile":
        d = dict(d)
        d["worst_hammer_pattern"] = DataPattern(d["worst_hammer_pattern"])
        d["sensitizing_pattern_weights"] = tuple(d["sensitizing_pattern_weights"])
        return cls(**d)


_MFR_BASE = {
    # (weak-column fraction mean, sd), subarray rows, weak-cell density Beta mean/conc
    "A": dict(weak_col_fraction_mean=0.037, weak_col_fraction_sd=0.004,
              cell_density_mean=0.42, cell_density_conc=14.0),
    "B": dict(weak_col_fraction_mean=0.025, weak_col_fraction_sd=0.003,
              cell_density_mean=0.38, cell_density_conc=10.0),
    "C": dict(weak_col_fraction_mean=0.022, weak_col_fraction_sd=0.003,
              cell_density_mean=0.16, cell_density_conc=6.0),
}

# Minimum observed hammer count to first flip, per (manufacturer, type-node),
# and the data pattern that flips the most cells on that combination.
_HC_TABLE = {
    ("A", "ddr3-old"): (69200, DataPattern.CHECKERED0),
    ("B", "ddr3-old"): (157000, DataPattern.CHECKERED0),
    ("C", "ddr3-old"): (155000, DataPattern.CHECKERED1),
    ("A", "ddr3-new"): (85000, DataPattern.CHECKERED0),
    ("B", "ddr3-new"): (22400, DataPattern.CHECKERED0),
    ("C", "ddr3-new"): (24000, DataPattern.CHECKERED0),
    ("A", "ddr4-old"): (17500, DataPattern.ROWSTRIPE1),
    ("B", "ddr4-old"): (30000, DataPattern.ROWSTRIPE1),
    ("C", "ddr4-old"): (87000, DataPattern.ROWSTRIPE0),
    ("A", "ddr4-new"): (10000, DataPattern.ROWSTRIPE0),
    ("B", "ddr4-new"): (25000, DataPattern.ROWSTRIPE0),
    ("C", "ddr4-new"): (40000, DataPattern.CHECKERED1),
    ("A", "lpddr4-1x"): (43200, DataPattern.CHECKERED1),
    ("B", "lpddr4-1x"): (16800, DataPattern.CHECKERED0),
    ("A", "lpddr4-1y"): (4800, DataPattern.ROWSTRIPE1),
    ("C", "lpddr4-1y"): (9600, DataPattern.ROWSTRIPE1),
}


def manufacturer_profile(name: str, type_node: str = "lpddr4-1y", **overrides) -> ManufacturerProfile:
    """Registry lookup. Only measured (manufacturer, type-node) combinations exist."""
    key = (name, type_node)
    if key not in _HC_TABLE:
        have = sorted(f"{m}/{t}" for m, t in _HC_TABLE)
        raise ValueError(f"no profile for manufacturer {name!r} on {type_node!r}; have {have}")
    hc_min, worst = _HC_TABLE[key]
    base = dict(_MFR_BASE[name])
    rows_sub = 1024 if (name == "A" and type_node.startswith("lpddr4")) else 512
    remap_kind = "paired" if key == ("B", "lpddr4-1x") else "identity"
    params = dict(
        name=name,
        type_node=type_node,
        rows_per_subarray=rows_sub,
        hc_first_min=hc_min,
        worst_hammer_pattern=worst,
        default_remap_kind=remap_kind,
        **base,
    )
    params.update(overrides)
    return ManufacturerProfile(**params)


def profile_names() -> list:
    return sorted(_HC_TABLE)


# Failure-probability band reserved for deliberate coin-flip cells. Cells from
# the general Beta draw are pushed out of it so membership stays exact.
_RNG_BAND_LOW = 0.4
_RNG_BAND_HIGH = 0.6
_FPROB_BETA_A = 0.22
_FPROB_BETA_B = 0.22


def _trim_fprob(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 1e-9, 1.0)
    lo = (x > _RNG_BAND_LOW) & (x < 0.5)
    hi = (x >= 0.5) & (x < _RNG_BAND_HIGH)
    x[lo] = _RNG_BAND_LOW
    x[hi] = _RNG_BAND_HIGH
    return x


def _sample_distinct(rng: np.random.Generator, space: int, k: int) -> np.ndarray:
    """k distinct integers from [0, space) without materializing the space."""
    if k >= space:
        return np.arange(space, dtype=np.int64)
    got = np.empty(0, dtype=np.int64)
    want = k
    while want > 0:
        draw = rng.integers(0, space, size=int(want * 1.1) + 16, dtype=np.int64)
        got = np.unique(np.concatenate([got, draw]))
        want = k - got.size
    # unique() sorted the pool; a fixed-seed shuffle keeps selection unbiased
    rng.shuffle(got)
    return got[:k]


@dataclass
class SyntheticChip:
    """Immutable-by-convention fault map of one device."""

    geo: DramGeometry
    seed: int
    profile: ManufacturerProfile
    remap: RowRemapScheme

    # weak subarray columns: parallel arrays + a set for membership tests
    wc_bank: np.ndarray = field(repr=False, default=None)
    wc_subarray: np.ndarray = field(repr=False, default=None)
    wc_col: np.ndarray = field(repr=False, default=None)

    # activation-weak cells, sorted by (cacheline key, bit)
    ac_key: np.ndarray = field(repr=False, default=None)
    ac_bit: np.ndarray = field(repr=False, default=None)
    ac_fprob: np.ndarray = field(repr=False, default=None)
    ac_mask: np.ndarray = field(repr=False, default=None)
    ac_odds: np.ndarray = field(repr=False, default=None)
    ac_is_rng: np.ndarray = field(repr=False, default=None)

    # disturbance-weak cells, sorted by (rowkey, col, bit)
    hm_rowkey: np.ndarray = field(repr=False, default=None)
    hm_col: np.ndarray = field(repr=False, default=None)
    hm_bit: np.ndarray = field(repr=False, default=None)
    hm_threshold: np.ndarray = field(repr=False, default=None)
    hm_mask: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        self._wc_set = set(zip(self.wc_bank.tolist(), self.wc_subarray.tolist(), self.wc_col.tolist()))

    @property
    def n_activation_cells(self) -> int:
        return int(self.ac_key.size)

    @property
    def n_hammer_cells(self) -> int:
        return int(self.hm_rowkey.size)

    @property
    def weak_columns(self) -> frozenset:
        """Set of (flat bank, subarray, column) triples."""
        return frozenset(self._wc_set)

    def is_weak_column(self, flat_bank: int, subarray: int, col: int) -> bool:
        return (flat_bank, subarray, col) in self._wc_set

    def cacheline_key(self, flat_bank: int, row: int, col: int) -> int:
        return (flat_bank * self.geo.rows_per_bank + row) * self.geo.cachelines_per_row + col

    def cells_in_cacheline(self, flat_bank: int, row: int, col: int) -> slice:
        key = self.cacheline_key(flat_bank, row, col)
        lo = np.searchsorted(self.ac_key, key, side="left")
        hi = np.searchsorted(self.ac_key, key, side="right")
        return slice(int(lo), int(hi))

    def hammer_cells_in_row(self, flat_bank: int, row: int) -> slice:
        key = flat_bank * self.geo.rows_per_bank + row
        lo = np.searchsorted(self.hm_rowkey, key, side="left")
        hi = np.searchsorted(self.hm_rowkey, key, side="right")
        return slice(int(lo), int(hi))

    def canonical_bytes(self) -> bytes:
        """Stable byte serialization of the entire fault map."""
        header = json.dumps(
            {
                "geometry": list(self.geo.key()),
                "seed": self.seed,
                "profile": self.profile.to_dict(),
                "remap": self.remap.kind,
            },
            sort_keys=True,
        ).encode()
        chunks = [header]
        for arr in (
            self.wc_bank, self.wc_subarray, self.wc_col,
            self.ac_key, self.ac_bit, self.ac_fprob, self.ac_mask, self.ac_odds,
            self.ac_is_rng,
            self.hm_rowkey, self.hm_col, self.hm_bit, self.hm_threshold, self.hm_mask,
        ):
            chunks.append(np.ascontiguousarray(arr).tobytes())
        return b"\x00".join(chunks)

    def content_hash(self) -> str:
        return hashlib.sha256(self.canonical_bytes()).hexdigest()

    @classmethod
    def from_cells(
        cls,
        geo: DramGeometry,
        *,
        cells=(),
        hammer_cells=(),
        weak_cols=None,
        profile: ManufacturerProfile = None,
        remap: RowRemapScheme = IDENTITY_REMAP,
        seed: int = 0,
    ) -> "SyntheticChip":
        """Hand-built chip for experiments with exactly placed cells.

        cells: iterables of (flat_bank, row, col, bit, fprob, patterns, temp_odds)
        hammer_cells: iterables of (flat_bank, row, col, bit, threshold, patterns)
        weak_cols: optional explicit weak-column triples; defaults to the
        columns implied by `cells`.
        """
        if profile is None:
            profile = manufacturer_profile("A", "lpddr4-1y")
        cpr = geo.cachelines_per_row
        ac = sorted(
            (
                ( (b * geo.rows_per_bank + r) * cpr + c, bit, fp, pattern_mask(pats), odds)
                for (b, r, c, bit, fp, pats, odds) in cells
            ),
            key=lambda t: (t[0], t[1]),
        )
        hm = sorted(
            (
                (b * geo.rows_per_bank + r, c, bit, th, pattern_mask(pats))
                for (b, r, c, bit, th, pats) in hammer_cells
            ),
            key=lambda t: (t[0], t[1], t[2]),
        )
        if weak_cols is None:
            weak_cols = set()
            for (b, r, c, bit, fp, pats, odds) in cells:
                weak_cols.add((b, r // geo.rows_per_subarray, c))
        weak_cols = sorted(weak_cols)
        return cls(
            geo=geo,
            seed=seed,
            profile=profile,
            remap=remap,
            wc_bank=np.array([w[0] for w in weak_cols], dtype=np.int32),
            wc_subarray=np.array([w[1] for w in weak_cols], dtype=np.int32),
            wc_col=np.array([w[2] for w in weak_cols], dtype=np.int32),
            ac_key=np.array([t[0] for t in ac], dtype=np.int64),
            ac_bit=np.array([t[1] for t in ac], dtype=np.uint16),
            ac_fprob=np.array([t[2] for t in ac], dtype=np.float64),
            ac_mask=np.array([t[3] for t in ac], dtype=np.uint8),
            ac_odds=np.array([t[4] for t in ac], dtype=np.float64),
            ac_is_rng=np.array([abs(t[2] - 0.5) < 1e-12 for t in ac], dtype=bool),
            hm_rowkey=np.array([t[0] for t in hm], dtype=np.int64),
            hm_col=np.array([t[1] for t in hm], dtype=np.int32),
            hm_bit=np.array([t[2] for t in hm], dtype=np.int16),
            hm_threshold=np.array([t[3] for t in hm], dtype=np.float64),
            hm_mask=np.array([t[4] for t in hm], dtype=np.uint8),
        )


def synthesize_chip(
    profile: ManufacturerProfile,
    geo: DramGeometry,
    seed: int,
    remap: RowRemapScheme = None,
) -> SyntheticChip:
    """Draw one chip from the profile's statistics, deterministically in seed."""
    if profile.rows_per_subarray != geo.rows_per_subarray:
        raise ValueError(
            f"profile expects {profile.rows_per_subarray}-row subarrays, "
            f"geometry has {geo.rows_per_subarray}"
        )
    if remap is None:
        remap = profile.default_remap
    rng = np.random.default_rng(seed)

    # weak subarray columns
    frac = float(np.clip(rng.normal(profile.weak_col_fraction_mean, profile.weak_col_fraction_sd), 0.0, 1.0))
    n_banks = geo.banks_total
    n_sub = geo.subarrays_per_bank
    cpr = geo.cachelines_per_row
    slots = n_banks * n_sub * cpr
    weak_mask = rng.random(slots) < frac
    weak_slots = np.flatnonzero(weak_mask)
    wc_bank = (weak_slots // (n_sub * cpr)).astype(np.int32)
    wc_subarray = ((weak_slots // cpr) % n_sub).astype(np.int32)
    wc_col = (weak_slots % cpr).astype(np.int32)

    # activation-weak cells inside each weak column
    a = profile.cell_density_mean * profile.cell_density_conc
    b = (1.0 - profile.cell_density_mean) * profile.cell_density_conc
    densities = rng.beta(a, b, size=weak_slots.size) if weak_slots.size else np.empty(0)
    col_positions = geo.rows_per_subarray * geo.cacheline_bits
    keys, bits = [], []
    for i in range(weak_slots.size):
        k = int(rng.binomial(col_positions, densities[i]))
        if k == 0:
            continue
        pos = rng.choice(col_positions, size=k, replace=False)
        row_in_sub = pos // geo.cacheline_bits
        bit = pos % geo.cacheline_bits
        row = wc_subarray[i] * geo.rows_per_subarray + row_in_sub
        keys.append((int(wc_bank[i]) * geo.rows_per_bank + row) * cpr + int(wc_col[i]))
        bits.append(bit)
    if keys:
        ac_key = np.concatenate(keys).astype(np.int64)
        ac_bit = np.concatenate(bits)
    else:
        ac_key = np.empty(0, dtype=np.int64)
        ac_bit = np.empty(0, dtype=np.int64)
    n_cells = ac_key.size

    is_band = rng.random(n_cells) < profile.rng_band_fraction
    fprob = _trim_fprob(rng.beta(_FPROB_BETA_A, _FPROB_BETA_B, size=n_cells))
    fprob[is_band] = 0.5

    weights = np.asarray(profile.sensitizing_pattern_weights)
    mask_bits = rng.random((n_cells, len(ALL_PATTERNS))) < weights
    ac_mask = np.zeros(n_cells, dtype=np.uint8)
    for j in range(len(ALL_PATTERNS)):
        ac_mask |= mask_bits[:, j].astype(np.uint8) << j
    # a cell that no pattern sensitizes would be dead weight
    dead = ac_mask == 0
    ac_mask[dead] |= np.uint8(1 << int(np.argmax(weights)))

    ac_odds = rng.lognormal(mean=0.6745 * profile.temp_odds_sigma,
                            sigma=profile.temp_odds_sigma, size=n_cells)

    # cap deliberate coin-flip cells per 64-bit word
    wpc = geo.words_per_cacheline
    word_id = ac_key * wpc + ac_bit // geo.word_bits
    band_idx = np.flatnonzero(is_band)
    if band_idx.size:
        order = np.argsort(word_id[band_idx], kind="stable")
        wids = word_id[band_idx][order]
        new_group = np.r_[True, wids[1:] != wids[:-1]]
        group_start = np.flatnonzero(new_group)
        group_no = np.cumsum(new_group) - 1
        rank = np.arange(wids.size) - group_start[group_no]
        demote = band_idx[order[rank >= profile.rng_cell_word_density_max]]
        if demote.size:
            is_band[demote] = False
            fprob[demote] = _trim_fprob(rng.beta(_FPROB_BETA_A, _FPROB_BETA_B, size=demote.size))

    order = np.lexsort((ac_bit, ac_key))
    ac_key = ac_key[order]
    ac_bit = ac_bit[order].astype(np.uint16)
    ac_fprob = fprob[order]
    ac_mask = ac_mask[order]
    ac_odds = ac_odds[order]
    ac_is_rng = is_band[order]

    # disturbance-weak cells, uniform over the whole device
    total_bits = geo.capacity_bytes * 8
    n_h = int(rng.binomial(min(total_bits, 2**62), profile.hammer_cell_per_bit))
    pos = _sample_distinct(rng, total_bits, n_h)
    bank_bits = geo.bank_size_bytes * 8
    row_bits = geo.row_size_bytes * 8
    hm_bank = pos // bank_bits
    within = pos % bank_bits
    hm_row = within // row_bits
    bit_in_row = within % row_bits
    hm_col = (bit_in_row // geo.cacheline_bits).astype(np.int64)
    hm_bit = (bit_in_row % geo.cacheline_bits).astype(np.int64)

    m = float(profile.hc_first_min)
    beta = profile.hammer_threshold_exponent
    cap = m * profile.hammer_threshold_cap_multiple
    u = rng.random(n_h)
    hm_threshold = (m**beta + u * (cap**beta - m**beta)) ** (1.0 / beta)

    worst_bit = np.uint8(1 << int(profile.worst_hammer_pattern))
    hm_mask = np.full(n_h, worst_bit, dtype=np.uint8)
    for j in range(len(ALL_PATTERNS)):
        if j == int(profile.worst_hammer_pattern):
            continue
        hm_mask |= (rng.random(n_h) < profile.hammer_pattern_weight).astype(np.uint8) << j

    if n_h:
        # plant the chip's weakest cell exactly at the profile minimum and give
        # it a same-word partner so multi-flip words exist near the floor
        min_idx = int(rng.integers(n_h))
        hm_threshold[min_idx] = m
        cluster = rng.random(n_h) < profile.hammer_cluster_fraction
        cluster[min_idx] = True
        c_idx = np.flatnonzero(cluster)
        word_base = (hm_col[c_idx] * geo.cacheline_bits + hm_bit[c_idx]) // 64 * 64
        partner_in_word = (hm_bit[c_idx] % 64 + 1 + rng.integers(0, 63, size=c_idx.size)) % 64
        partner_bit_in_row = word_base + partner_in_word
        p_bank = hm_bank[c_idx]
        p_row = hm_row[c_idx]
        p_col = partner_bit_in_row // geo.cacheline_bits
        p_bit = partner_bit_in_row % geo.cacheline_bits
        p_thresh = hm_threshold[c_idx] * rng.uniform(1.05, 2.4, size=c_idx.size)
        p_mask = np.full(c_idx.size, worst_bit, dtype=np.uint8)
        for j in range(len(ALL_PATTERNS)):
            if j == int(profile.worst_hammer_pattern):
                continue
            p_mask |= (rng.random(c_idx.size) < profile.hammer_pattern_weight).astype(np.uint8) << j
        hm_bank = np.concatenate([hm_bank, p_bank])
        hm_row = np.concatenate([hm_row, p_row])
        hm_col = np.concatenate([hm_col, p_col])
        hm_bit = np.concatenate([hm_bit, p_bit])
        hm_threshold = np.concatenate([hm_threshold, p_thresh])
        hm_mask = np.concatenate([hm_mask, p_mask])

    hm_rowkey = hm_bank * geo.rows_per_bank + hm_row
    order = np.lexsort((hm_bit, hm_col, hm_rowkey))

    return SyntheticChip(
        geo=geo,
        seed=seed,
        profile=profile,
        remap=remap,
        wc_bank=wc_bank,
        wc_subarray=wc_subarray,
        wc_col=wc_col,
        ac_key=ac_key,
        ac_bit=ac_bit,
        ac_fprob=ac_fprob,
        ac_mask=ac_mask,
        ac_odds=ac_odds,
        ac_is_rng=ac_is_rng,
        hm_rowkey=hm_rowkey[order].astype(np.int64),
        hm_col=hm_col[order].astype(np.int32),
        hm_bit=hm_bit[order].astype(np.int16),
        hm_threshold=hm_threshold[order],
        hm_mask=hm_mask[order],
    )


def trcd_step_factor(trcd_ns: float) -> float:
    """Multiplier on base failure probability; 0 at/above the safe threshold,
    1 at the reference delay, growing linearly as the delay shrinks further."""
    if trcd_ns >= SAFE_TRCD_NS:
        return 0.0
    return (SAFE_TRCD_NS - trcd_ns) / TRCD_STEP_SLOPE_NS


def _check_temperature(temperature_c: float):
    if not TEMP_MIN_C <= temperature_c <= TEMP_MAX_C:
        raise TemperatureRangeError(
            f"temperature {temperature_c} outside model range [{TEMP_MIN_C}, {TEMP_MAX_C}] C"
        )


def activation_flip_probabilities(
    chip: SyntheticChip,
    idx,
    trcd_ns: float,
    temperature_c: float,
    pattern: DataPattern | None,
) -> np.ndarray:
    """Vectorized per-cell flip probability for the given access conditions.

    `idx` selects cells (slice or index array). Temperature scales each cell's
    odds by its private factor per 5 C step away from the 50 C reference.
    `pattern` None means every cell is driven with a pattern that sensitizes
    it, so no mask gating applies (used when content is chosen per word).
    """
    _check_temperature(temperature_c)
    if trcd_ns <= 0:
        raise ValueError("trcd_ns must be positive")
    fprob = chip.ac_fprob[idx]
    mask = chip.ac_mask[idx]
    odds_factor = chip.ac_odds[idx]
    step = trcd_step_factor(trcd_ns)
    p = np.clip(fprob * step, 0.0, 1.0)
    if pattern is not None:
        sensitized = (mask & np.uint8(1 << int(pattern))) != 0
        p = np.where(sensitized, p, 0.0)
    dt = (temperature_c - REFERENCE_TEMP_C) / TEMP_STEP_C
    if dt != 0.0:
        interior = (p > 0.0) & (p < 1.0)
        odds = p[interior] / (1.0 - p[interior]) * odds_factor[interior] ** dt
        p[interior] = odds / (1.0 + odds)
    return p


def sample_activation_read(
    chip: SyntheticChip,
    loc: Location,
    trcd_ns: float,
    temperature_c: float,
    pattern: DataPattern,
    rng: np.random.Generator,
) -> set:
    """Bit positions (within the accessed cacheline) that flip on one
    closed-row activate-and-read at the given delay and temperature."""
    sl = chip.cells_in_cacheline(loc.flat_bank(chip.geo), loc.row, loc.cacheline_index)
    p = activation_flip_probabilities(chip, sl, trcd_ns, temperature_c, pattern)
    if p.size == 0 or trcd_ns >= SAFE_TRCD_NS:
        return set()
    flips = rng.random(p.size) < p
    return set(int(b) for b in chip.ac_bit[sl][flips])


def hammer_flip_probability(threshold, pressure, steepness: float = HAMMER_LOGISTIC_STEEPNESS):
    """Logistic in log(pressure/threshold); 0 at zero pressure."""
    threshold = np.asarray(threshold, dtype=np.float64)
    pressure = np.asarray(pressure, dtype=np.float64)
    shape = np.broadcast(threshold, pressure).shape
    ratio = np.divide(threshold, pressure, out=np.full(shape, np.inf), where=pressure > 0)
    with np.errstate(over="ignore"):
        p = 1.0 / (1.0 + ratio**steepness)
    return p if p.shape else float(p)


def victim_pressure_kernel() -> dict:
    """Pressure per hammer (one activation of each aggressor) felt at even
    physical offsets from the victim. Offset 0 receives exactly 1.0."""
    w = {
        1: ADJACENT_PRESSURE,
        3: ADJACENT_PRESSURE / PRESSURE_DECAY,
        5: ADJACENT_PRESSURE / PRESSURE_DECAY**2,
        7: ADJACENT_PRESSURE / PRESSURE_DECAY**3,
    }
    kernel = {}
    for off in range(0, MAX_VICTIM_OFFSET + 1, 2):
        kernel[off] = w[abs(off - 1)] + w[abs(off + 1)]
        if off:
            kernel[-off] = kernel[off]
    return kernel


_PRESSURE_KERNEL = victim_pressure_kernel()


def sample_hammer(
    chip: SyntheticChip,
    victim_row: int,
    hc: int,
    rng: np.random.Generator,
    *,
    flat_bank: int = 0,
    pattern: DataPattern = None,
    deterministic: bool = False,
) -> set:
    """Flips caused by hc double-sided hammers of victim_row.

    Returns (flat_bank, row, col, bit) coordinates. Rows at even physical
    offsets up to +-6 from the victim feel geometrically decaying pressure;
    the aggressor rows themselves never flip (their own activation restores
    them). `deterministic` replaces sampling with a hard threshold compare,
    which pins the minimum flipping hammer count exactly.
    """
    if hc < 0:
        raise ValueError("hammer count must be >= 0")
    if pattern is None:
        pattern = chip.profile.worst_hammer_pattern
    if hc == 0:
        return set()
    geo = chip.geo
    remap = chip.remap
    phys_victim = remap.physical_row(victim_row)
    phys_rows = remap.physical_rows_per_bank(geo.rows_per_bank)
    out = set()
    pat_bit = np.uint8(1 << int(pattern))
    for off, weight in _PRESSURE_KERNEL.items():
        phys = phys_victim + off
        if phys < 0 or phys >= phys_rows:
            continue
        pressure = hc * weight
        for row in remap.logical_rows(phys):
            if row >= geo.rows_per_bank:
                continue
            sl = chip.hammer_cells_in_row(flat_bank, row)
            if sl.start == sl.stop:
                continue
            sensitized = (chip.hm_mask[sl] & pat_bit) != 0
            thresh = chip.hm_threshold[sl]
            if deterministic:
                flips = sensitized & (pressure >= thresh)
            else:
                p = hammer_flip_probability(thresh, pressure)
                flips = sensitized & (rng.random(thresh.size) < p)
            if flips.any():
                cols = chip.hm_col[sl][flips]
                bits = chip.hm_bit[sl][flips]
                out.update(
                    (flat_bank, row, int(c), int(b)) for c, b in zip(cols.tolist(), bits.tolist())
                )
    return out


def apply_on_die_ecc(flips, word_bits: int = 128, policy: str = "passthrough") -> set:
    """Visible flips after a single-error-correcting code over one word.

    Exactly one flip is corrected away; two or more exceed the code's
    guarantee, and this model fixes that undefined branch to pass-through
    (real parts may also miscorrect; that behavior is out of scope).
    """
    if policy != "passthrough":
        raise ValueError("only the pass-through multi-error policy is modeled")
    flips = set(flips)
    for f in flips:
        if not 0 <= f < word_bits:
            raise ValueError(f"flip position {f} outside {word_bits}-bit word")
    if len(flips) <= 1:
        return set()
    return flips


def ecc_visible_coords(coords, geo: DramGeometry, word_bits: int = 128) -> set:
    """Apply the on-die code word-by-word to (bank, row, col, bit) coordinates."""
    by_word = {}
    for (bank, row, col, bit) in coords:
        pos = col * geo.cacheline_bits + bit
        word = pos // word_bits
        by_word.setdefault((bank, row, word), set()).add(pos % word_bits)
    out = set()
    for (bank, row, word), flips in by_word.items():
        for p in apply_on_die_ecc(flips, word_bits=word_bits):
            pos = word * word_bits + p
            out.add((bank, row, pos // geo.cacheline_bits, pos % geo.cacheline_bits))
    return out
