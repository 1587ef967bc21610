"""Experiment configs, profile persistence, sweep running, and the CLI.

Everything persisted is JSON (human-diffable at desk scale) except exported
bitstreams, which stay binary with a JSON sidecar. Profile files carry a
format version, the owning chip seed, a geometry hash checked on load, and a
checksum over the whole body. CSV reports key every row by (config hash,
seed) so any row can be reproduced byte-identically from its config.

Exit codes: 0 success, 2 configuration error (including profile version or
geometry mismatches), 3 unsupported mechanism, 4 I/O or corrupted file.
"""

from __future__ import annotations

import argparse
import base64
import csv
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import dlpuf, drange
from .characterize import (
    HcProfile,
    WeakColumnProfile,
    build_weak_profile,
    extract_hc_profile,
    locate_hc_first,
    run_activation_failure_test,
    run_rowhammer_characterization,
)
from .chipsynth import (
    ALL_PATTERNS,
    DataPattern,
    SyntheticChip,
    manufacturer_profile,
    profile_names,
    synthesize_chip,
)
from .dlpuf import GoldenKeyStore, PufChallenge
from .drange import Bitstream, RngCellMap, WordCells
from .errors import (
    ConfigError,
    DramLabError,
    GeometryMismatchError,
    ProfileCorruptionError,
    ProfileVersionError,
    TemperatureRangeError,
    TraceParseError,
    UnsupportedMechanismError,
)
from .geometry import (
    GEOMETRY_PRESET_NAMES,
    DramGeometry,
    RowRemapScheme,
    geometry_preset,
    timing_preset,
)
from .rhmitigate import (
    MitigationKind,
    MrlocParams,
    ProhitParams,
    build_double_sided_attack,
    evaluate_safety,
    make_mitigation,
)
from .solar import MODE_FLAGS, solar_mode

FORMAT_VERSION = 1
OUT_DIR_ENV = "DRAMLAB_OUT"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_UNSUPPORTED = 3
EXIT_IO = 4

PROFILE_KINDS = ("chip_recipe", "weak_columns", "rng_cells", "key_store", "hc_profile")

# which subcommand produces each profile kind; used in actionable errors
GENERATING_SUBCOMMAND = {
    "chip_recipe": "dramlab chip synth",
    "weak_columns": "dramlab profile build --kind weak",
    "rng_cells": "dramlab profile build --kind rng",
    "hc_profile": "dramlab profile build --kind hc",
    "key_store": "dramlab puf enroll",
}


# ---------------------------------------------------------------------------
# canonical JSON and hashing


def canonical_json(obj) -> str:
    """Stable text form: sorted keys, no whitespace."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(mapping: dict) -> str:
    return hashlib.sha256(canonical_json(mapping).encode()).hexdigest()[:16]


def geometry_hash(geo: DramGeometry) -> str:
    return hashlib.sha256(canonical_json(list(geo.key())).encode()).hexdigest()[:16]


def geometry_to_dict(geo: DramGeometry) -> dict:
    return asdict(geo)


def geometry_from_dict(d: dict) -> DramGeometry:
    allowed = {f.name for f in fields(DramGeometry)}
    unknown = set(d) - allowed
    if unknown:
        raise ProfileCorruptionError(f"unknown geometry fields: {sorted(unknown)}")
    try:
        return DramGeometry(**d)
    except (TypeError, ValueError) as exc:
        raise ProfileCorruptionError(f"bad geometry block: {exc}") from None


# ---------------------------------------------------------------------------
# profile files


@dataclass(frozen=True)
class ProfileFile:
    """Versioned, checksummed container for anything worth keeping."""

    kind: str
    geometry: DramGeometry
    payload: dict
    chip_seed: int = None

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise ValueError(f"kind must be one of {PROFILE_KINDS}")


def save_profile(pf: ProfileFile, path) -> str:
    body = {
        "format_version": FORMAT_VERSION,
        "kind": pf.kind,
        "chip_seed": pf.chip_seed,
        "geometry": geometry_to_dict(pf.geometry),
        "geometry_hash": geometry_hash(pf.geometry),
        "payload": pf.payload,
    }
    body["checksum"] = hashlib.sha256(canonical_json(body).encode()).hexdigest()
    with open(path, "w") as fh:
        fh.write(canonical_json(body))
        fh.write("\n")
    return str(path)


def load_profile(path, geo: DramGeometry = None, kind: str = None) -> ProfileFile:
    """Load and verify; `geo`/`kind` add caller-side expectations."""
    with open(path) as fh:
        text = fh.read()
    try:
        body = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProfileCorruptionError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(body, dict) or "checksum" not in body:
        raise ProfileCorruptionError(f"{path}: missing checksum")
    declared = body.pop("checksum")
    actual = hashlib.sha256(canonical_json(body).encode()).hexdigest()
    if declared != actual:
        raise ProfileCorruptionError(f"{path}: checksum mismatch")
    version = body.get("format_version")
    if version != FORMAT_VERSION:
        raise ProfileVersionError(
            f"{path}: format version {version!r}, this build reads {FORMAT_VERSION}"
        )
    file_geo = geometry_from_dict(body.get("geometry", {}))
    if body.get("geometry_hash") != geometry_hash(file_geo):
        raise ProfileCorruptionError(f"{path}: geometry hash does not match its geometry")
    if geo is not None and geometry_hash(geo) != body["geometry_hash"]:
        raise GeometryMismatchError(
            f"{path}: profile recorded for geometry {body['geometry_hash']}, "
            f"requested {geometry_hash(geo)}"
        )
    if kind is not None and body.get("kind") != kind:
        raise ConfigError(
            f"{path}: holds {body.get('kind')!r}, need {kind!r}; "
            f"generate one with `{GENERATING_SUBCOMMAND[kind]}`"
        )
    return ProfileFile(
        kind=body["kind"],
        geometry=file_geo,
        payload=body["payload"],
        chip_seed=body.get("chip_seed"),
    )


# ---------------------------------------------------------------------------
# payload codecs


def encode_weak_profile(prof: WeakColumnProfile) -> dict:
    packed = np.packbits(prof.weak.astype(np.uint8).ravel())
    return {
        "shape": list(prof.weak.shape),
        "packed": base64.b64encode(packed.tobytes()).decode("ascii"),
    }


def decode_weak_profile(payload: dict, geo: DramGeometry) -> WeakColumnProfile:
    shape = tuple(payload["shape"])
    n = int(np.prod(shape))
    raw = np.frombuffer(base64.b64decode(payload["packed"]), dtype=np.uint8)
    bits = np.unpackbits(raw)
    if bits.size < n:
        raise ProfileCorruptionError("weak-column payload shorter than its shape")
    return WeakColumnProfile(geo=geo, weak=bits[:n].astype(bool).reshape(shape))


def encode_rng_map(cmap: RngCellMap) -> dict:
    entries = {}
    for bank in cmap.banks:
        first, second = cmap.entries[bank]
        entries[str(bank)] = [
            [w.row, w.word, list(w.bits)] for w in (first, second)
        ]
    return {
        "geo_key": list(cmap.geo_key),
        "temperature_c": cmap.temperature_c,
        "reads": cmap.reads,
        "trcd_ns": cmap.trcd_ns,
        "entries": entries,
    }


def decode_rng_map(payload: dict) -> RngCellMap:
    entries = {}
    for bank_s, pair in payload["entries"].items():
        bank = int(bank_s)
        entries[bank] = tuple(
            WordCells(flat_bank=bank, row=row, word=word, bits=tuple(bits))
            for row, word, bits in pair
        )
    return RngCellMap(
        geo_key=tuple(payload["geo_key"]),
        temperature_c=payload["temperature_c"],
        reads=payload["reads"],
        trcd_ns=payload["trcd_ns"],
        entries=entries,
    )


def encode_key_store(store: GoldenKeyStore) -> dict:
    rows = [
        [device, segment, bucket, sorted(bits)]
        for (device, segment, bucket), bits in sorted(store._golden.items())
    ]
    return {"threshold": store.threshold, "entries": rows}


def decode_key_store(payload: dict) -> GoldenKeyStore:
    store = GoldenKeyStore(threshold=payload["threshold"])
    for device, segment, bucket, bits in payload["entries"]:
        store._golden[(device, int(segment), float(bucket))] = frozenset(
            int(b) for b in bits
        )
    return store


def encode_hc_profile(hcp: HcProfile) -> dict:
    return {
        "rowhammerable": hcp.rowhammerable,
        "hc_first": hcp.hc_first,
        "hc_second": hcp.hc_second,
        "hc_third": hcp.hc_third,
        "sweep": list(hcp.sweep),
        "flip_counts": sorted([int(k), int(v)] for k, v in hcp.flip_counts.items()),
        "pattern_flip_counts": sorted(
            [int(k), int(v)] for k, v in hcp.pattern_flip_counts.items()
        ),
    }


def decode_hc_profile(payload: dict) -> HcProfile:
    return HcProfile(
        rowhammerable=payload["rowhammerable"],
        hc_first=payload["hc_first"],
        hc_second=payload["hc_second"],
        hc_third=payload["hc_third"],
        sweep=tuple(payload["sweep"]),
        flip_counts={k: v for k, v in payload["flip_counts"]},
        pattern_flip_counts={
            DataPattern(k): v for k, v in payload["pattern_flip_counts"]
        },
    )


def chip_recipe_payload(
    manufacturer: str, type_node: str, seed: int, remap_kind: str = None,
    profile_overrides: dict = None,
) -> dict:
    return {
        "manufacturer": manufacturer,
        "type_node": type_node,
        "seed": seed,
        "remap": remap_kind,
        "profile_overrides": dict(profile_overrides or {}),
    }


def chip_from_recipe(pf: ProfileFile) -> SyntheticChip:
    if pf.kind != "chip_recipe":
        raise ConfigError(f"expected a chip recipe, got {pf.kind!r}")
    p = pf.payload
    prof = manufacturer_profile(
        p["manufacturer"], p["type_node"], **p.get("profile_overrides", {})
    )
    remap = RowRemapScheme(p["remap"]) if p.get("remap") else None
    return synthesize_chip(prof, pf.geometry, p["seed"], remap)


def decode_payload(pf: ProfileFile):
    """Materialize the object a profile file holds."""
    if pf.kind == "weak_columns":
        return decode_weak_profile(pf.payload, pf.geometry)
    if pf.kind == "rng_cells":
        return decode_rng_map(pf.payload)
    if pf.kind == "key_store":
        return decode_key_store(pf.payload)
    if pf.kind == "hc_profile":
        return decode_hc_profile(pf.payload)
    if pf.kind == "chip_recipe":
        return chip_from_recipe(pf)
    raise ConfigError(f"no decoder for kind {pf.kind!r}")


# ---------------------------------------------------------------------------
# experiment configuration


MODES = ("solar", "puf", "rng", "mitigate", "combined")
_MECHANISM_NAMES = tuple(k.value for k in MitigationKind)


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: a mode plus every knob its pipelines read.

    Sweep axes irrelevant to the selected mode may stay at their defaults;
    they still participate in the config hash so rows remain reproducible.
    """

    mode: str
    geometry: str = "lpddr4"
    geometry_overrides: dict = field(default_factory=dict)
    manufacturer: str = "A"
    type_node: str = "lpddr4-1y"
    seeds: tuple = (1,)
    temperature_c: float = 50.0
    # sweep axes
    trcd_sweep_ns: tuple = ()
    hc_sweep: tuple = ()
    temperature_sweep_c: tuple = ()
    banks: tuple = ()
    hc_first_sweep: tuple = (2000,)
    # solar / combined
    n_accesses: int = 100_000
    solar_modes: tuple = ("baseline", "flydram", "solar")
    # puf
    n_evaluations: int = 10
    segment: int = None
    puf_iterations: int = 100
    puf_trcd_ns: float = 10.0
    # rng
    rng_bits: int = 100_000
    rng_reads: int = 1000
    # mitigate
    mechanisms: tuple = ("none", "para")
    hammers: int = None
    ber_target: float = 1e-15
    prohit_p_insert: float = 0.02
    prohit_p_evict: float = 0.5
    prohit_p_promote: float = 0.1
    mrloc_queue_size: int = 512
    mrloc_p_min: float = 0.0005
    mrloc_p_max: float = 0.01
    # combined-mode inputs
    chip_recipe: str = None
    solar_profile: str = None
    rng_map: str = None
    key_store: str = None
    puf_device: str = "device-0"
    # output
    out_dir: str = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.geometry not in GEOMETRY_PRESET_NAMES:
            raise ConfigError(
                f"geometry must be one of {GEOMETRY_PRESET_NAMES}, got {self.geometry!r}"
            )
        if not self.seeds:
            raise ConfigError("seeds must not be empty")
        if any(int(s) != s or s < 0 for s in self.seeds):
            raise ConfigError("seeds must be non-negative integers")
        for name in self.mechanisms:
            if name not in _MECHANISM_NAMES:
                raise ConfigError(
                    f"unknown mechanism {name!r}; have {_MECHANISM_NAMES}"
                )
        for name in self.solar_modes:
            if name not in MODE_FLAGS:
                raise ConfigError(
                    f"unknown access-policy mode {name!r}; have {tuple(MODE_FLAGS)}"
                )
        for axis_name, axis in (
            ("trcd_sweep_ns", self.trcd_sweep_ns),
            ("hc_sweep", self.hc_sweep),
            ("hc_first_sweep", self.hc_first_sweep),
        ):
            if any(v <= 0 for v in axis):
                raise ConfigError(f"{axis_name} values must be positive")
        if any(b < 0 for b in self.banks):
            raise ConfigError("banks must be non-negative flat indices")
        if self.n_accesses < 1:
            raise ConfigError("n_accesses must be at least 1")
        if self.n_evaluations < 1:
            raise ConfigError("n_evaluations must be at least 1")
        if self.rng_bits < 0:
            raise ConfigError("rng_bits must be non-negative")
        if self.rng_reads < drange.MIN_READS:
            raise ConfigError(f"rng_reads must be at least {drange.MIN_READS}")
        if self.hammers is not None and self.hammers < 1:
            raise ConfigError("hammers must be at least 1")
        if self.mode == "mitigate" and not self.hc_first_sweep:
            raise ConfigError("mitigate mode needs a non-empty hc_first_sweep")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("experiment config must be a JSON object")
        allowed = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - allowed)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        coerced = {}
        for f in fields(cls):
            if f.name not in d:
                continue
            v = d[f.name]
            if isinstance(f.default, tuple) or f.name in (
                "seeds", "trcd_sweep_ns", "hc_sweep", "temperature_sweep_c",
                "banks", "hc_first_sweep", "solar_modes", "mechanisms",
            ):
                if not isinstance(v, (list, tuple)):
                    raise ConfigError(f"{f.name} must be a list")
                v = tuple(v)
            coerced[f.name] = v
        return cls(**coerced)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @property
    def hash(self) -> str:
        return config_hash(self.to_dict())

    def geometry_object(self) -> DramGeometry:
        return geometry_preset(self.geometry, **self.geometry_overrides)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    return ExperimentConfig.from_dict(raw)


# ---------------------------------------------------------------------------
# CSV reporting


def write_csv(path, columns, rows) -> str:
    """Byte-deterministic CSV: fixed column order, repr floats, LF endings."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_csv_cell(row.get(c, "")) for c in columns])
    return str(path)


def _csv_cell(v):
    if isinstance(v, np.generic):
        v = v.item()
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return v


def read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    if not rows:
        raise ConfigError(f"{path}: empty CSV")
    header, data = rows[0], rows[1:]
    return header, [dict(zip(header, r)) for r in data]


def summarize_rows(header, rows, by: str = None):
    """Per-group count/mean/min/max for every numeric column."""
    if by is not None and by not in header:
        raise ConfigError(f"no column {by!r} to group by")
    groups = {}
    for r in rows:
        groups.setdefault(r[by] if by else "all", []).append(r)
    numeric = []
    for col in header:
        if col in ("config_hash", by):
            continue
        try:
            for r in rows:
                if r[col] != "":
                    float(r[col])
            numeric.append(col)
        except ValueError:
            continue
    out = []
    for gname in sorted(groups):
        for col in numeric:
            vals = [float(r[col]) for r in groups[gname] if r[col] != ""]
            if not vals:
                continue
            out.append({
                "group": gname,
                "column": col,
                "count": len(vals),
                "mean": sum(vals) / len(vals),
                "min": min(vals),
                "max": max(vals),
            })
    return ["group", "column", "count", "mean", "min", "max"], out


# ---------------------------------------------------------------------------
# experiment pipelines


def _seeded(seed: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), *tags])


def _chip_for(cfg: ExperimentConfig, seed: int, **profile_overrides) -> SyntheticChip:
    prof = manufacturer_profile(cfg.manufacturer, cfg.type_node, **profile_overrides)
    return synthesize_chip(prof, cfg.geometry_object(), seed)


def _rows_solar(cfg: ExperimentConfig, seed: int) -> list:
    chip = _chip_for(cfg, seed)
    wprof = WeakColumnProfile.from_chip(chip)
    timing = timing_preset(cfg.geometry)
    rows = []
    for mode_name in cfg.solar_modes:
        pol = solar_mode(mode_name, wprof)
        res = solar_simulate(chip, pol, cfg, seed, timing)
        rows.append({
            "config_hash": cfg.hash,
            "seed": seed,
            "policy": mode_name,
            "accesses": res.accesses,
            "reduced_reads": res.reduced_reads,
            "reduced_fraction": res.reduced_fraction,
            "corruptions": res.corruptions,
            "weak_fraction": wprof.weak_fraction(),
        })
    return rows


def solar_simulate(chip, pol, cfg, seed, timing):
    from .solar import simulate_read_safety

    return simulate_read_safety(
        chip, pol, cfg.n_accesses, _seeded(seed, 1),
        clock_period_ns=timing.clock_period_ns, temperature_c=cfg.temperature_c,
    )


def _pick_segment(chip: SyntheticChip, cfg: ExperimentConfig) -> int:
    if cfg.segment is not None:
        return cfg.segment
    for seg in dlpuf.usable_segments(chip.geo, cfg.puf_iterations):
        if dlpuf.segment_is_good(chip, seg, cfg.puf_iterations):
            return seg
    raise ConfigError("chip has no good segment; enroll needs >= 512 weak cells")


def _rows_puf(cfg: ExperimentConfig, seed: int) -> list:
    chip = _chip_for(cfg, seed)
    segment = _pick_segment(chip, cfg)
    challenge = PufChallenge(
        segment_id=segment, trcd_ns=cfg.puf_trcd_ns,
        n_iterations=cfg.puf_iterations, temperature_c=cfg.temperature_c,
    )
    store = GoldenKeyStore()
    golden = dlpuf.evaluate_puf(chip, challenge, _seeded(seed, 2, 0))
    store.enroll(cfg.puf_device, golden)
    rows = []
    for i in range(1, cfg.n_evaluations):
        resp = dlpuf.evaluate_puf(chip, challenge, _seeded(seed, 2, i))
        auth = store.authenticate(cfg.puf_device, resp)
        rows.append({
            "config_hash": cfg.hash,
            "seed": seed,
            "segment": segment,
            "evaluation": i,
            "jaccard": auth.jaccard,
            "accepted": auth.accepted,
            "bucket_c": auth.bucket,
            "eval_time_ms": dlpuf.eval_time_ms(cfg.puf_iterations),
        })
    return rows


def _rows_rng(cfg: ExperimentConfig, seed: int) -> list:
    chip = _chip_for(cfg, seed)
    cmap = drange.identify_rng_cells(
        chip, reads=cfg.rng_reads, temperature_c=cfg.temperature_c,
        rng=_seeded(seed, 3, 0),
    )
    if cfg.banks:
        kept = {b: cmap.entries[b] for b in cfg.banks if b in cmap.entries}
        cmap = RngCellMap(
            geo_key=cmap.geo_key, temperature_c=cmap.temperature_c,
            reads=cmap.reads, trcd_ns=cmap.trcd_ns, entries=kept,
        )
    timing = timing_preset(cfg.geometry)
    stream = drange.generate_bits(chip, cmap, cfg.rng_bits, _seeded(seed, 3, 1))
    report = drange.randomness_report(stream)
    loop_ns = drange.loop_runtime_ns(
        timing.t_rc_ns, len(cmap.banks), timing.clock_period_ns
    )
    row = {
        "config_hash": cfg.hash,
        "seed": seed,
        "banks_used": len(cmap.banks),
        "bits": report.n_bits,
        "entropy_per_bit": report.entropy_per_bit,
        "entropy_ok": report.entropy_ok,
        "all_passed": report.all_passed,
        "throughput_mbps": drange.throughput_estimate(cmap, len(cmap.banks), loop_ns),
    }
    for name, t in sorted(report.tests.items()):
        row[f"p_{name}"] = t.p_value
    return [row]


def _mechanism_params(cfg: ExperimentConfig, kind: MitigationKind) -> dict:
    extra = {}
    if kind is MitigationKind.PROHIT:
        extra["prohit"] = ProhitParams(
            p_insert=cfg.prohit_p_insert,
            p_evict=cfg.prohit_p_evict,
            p_promote=cfg.prohit_p_promote,
        )
    if kind is MitigationKind.MRLOC:
        extra["mrloc"] = MrlocParams(
            queue_size=cfg.mrloc_queue_size,
            p_min=cfg.mrloc_p_min,
            p_max=cfg.mrloc_p_max,
        )
    return extra


def _worst_victim(chip: SyntheticChip):
    """Interior logical row holding the lowest disturbance threshold."""
    geo = chip.geo
    d = chip.remap.aggressor_distance
    for i in np.argsort(chip.hm_threshold, kind="stable"):
        key = int(chip.hm_rowkey[i])
        victim = key % geo.rows_per_bank
        if d <= victim < geo.rows_per_bank - d:
            return victim, key // geo.rows_per_bank
    raise ConfigError("chip has no interior disturbance-weak row to attack")


def _rows_mitigate(cfg: ExperimentConfig, seed: int, hc_first: int) -> list:
    chip = _chip_for(cfg, seed, hc_first_min=hc_first)
    geo = chip.geo
    timing = timing_preset(cfg.geometry)
    victim, attack_bank = _worst_victim(chip)
    hammers = cfg.hammers if cfg.hammers is not None else int(hc_first * 1.5)
    background = (
        chip.remap.physical_row(max(0, victim - 40)),
        chip.remap.physical_row(min(geo.rows_per_bank - 1, victim + 40)),
    )
    trace = build_double_sided_attack(
        chip, victim, hammers, timing.t_rc_ns,
        background_rows=background, background_every=8,
    )
    rows = []
    for name in cfg.mechanisms:
        kind = MitigationKind(name)
        base = {
            "config_hash": cfg.hash,
            "seed": seed,
            "hc_first": hc_first,
            "mechanism": name,
            "hammers": hammers,
        }
        try:
            state = make_mitigation(
                kind, hc_first, t_rc_ns=timing.t_rc_ns,
                t_refw_ns=timing.t_refw_ns, t_refi_ns=timing.t_refi_ns,
                ber_target=cfg.ber_target, **_mechanism_params(cfg, kind),
            )
        except (UnsupportedMechanismError, ConfigError) as exc:
            rows.append({**base, "supported": False, "reason": str(exc)})
            continue
        res = evaluate_safety(
            chip, state, trace, _seeded(seed, 4, hc_first), flat_bank=attack_bank,
        )
        rows.append({
            **base,
            "supported": True,
            "reason": "",
            "flips": res.flips,
            "mitigation_refreshes": res.mitigation_refreshes,
            "mitigation_ns": res.mitigation_ns,
            "auto_refresh_rows": res.auto_refresh_rows,
            "activations": res.activations,
            "max_pressure": res.max_pressure,
            "para_p": state.para_p if kind is MitigationKind.PARA else "",
        })
    return rows


def _require_profile(cfg: ExperimentConfig, attr: str, kind: str, geo: DramGeometry):
    path = getattr(cfg, attr)
    if not path:
        raise ConfigError(
            f"combined mode needs `{attr}` ({kind}); "
            f"generate one with `{GENERATING_SUBCOMMAND[kind]}`"
        )
    return decode_payload(load_profile(path, geo=geo, kind=kind))


def _rows_combined(cfg: ExperimentConfig, seed: int) -> list:
    geo = cfg.geometry_object()
    timing = timing_preset(cfg.geometry)
    wprof = _require_profile(cfg, "solar_profile", "weak_columns", geo)
    cmap = _require_profile(cfg, "rng_map", "rng_cells", geo)
    store = _require_profile(cfg, "key_store", "key_store", geo)
    if cfg.chip_recipe:
        chip = decode_payload(load_profile(cfg.chip_recipe, geo=geo, kind="chip_recipe"))
    else:
        chip = _chip_for(cfg, seed)

    # regular accesses run at the access policy's per-column timings
    pol = solar_mode("solar", wprof)
    res = solar_simulate(chip, pol, cfg, seed, timing)

    # a PUF evaluation preempts with the fingerprint timing on its segment
    devices = sorted({d for (d, _, _) in store._golden})
    segments = sorted({s for (_, s, _) in store._golden})
    puf_row = {"puf_accepted": "", "puf_jaccard": "", "puf_device": "", "puf_segment": ""}
    if devices and segments:
        device, segment = devices[0], segments[0]
        challenge = PufChallenge(
            segment_id=segment, trcd_ns=cfg.puf_trcd_ns,
            n_iterations=cfg.puf_iterations, temperature_c=cfg.temperature_c,
        )
        resp = dlpuf.evaluate_puf(chip, challenge, _seeded(seed, 5, 0))
        auth = store.authenticate(device, resp)
        puf_row = {
            "puf_accepted": auth.accepted,
            "puf_jaccard": auth.jaccard,
            "puf_device": device,
            "puf_segment": segment,
        }

    # TRNG requests preempt with the harvest timing on their own cells
    stream = drange.generate_bits(chip, cmap, cfg.rng_bits, _seeded(seed, 5, 1))
    report = drange.randomness_report(stream) if len(stream) >= 100 else None

    return [{
        "config_hash": cfg.hash,
        "seed": seed,
        "accesses": res.accesses,
        "reduced_fraction": res.reduced_fraction,
        "corruptions": res.corruptions,
        **puf_row,
        "puf_eval_ms": dlpuf.eval_time_ms(cfg.puf_iterations),
        "rng_bits": len(stream),
        "rng_entropy": report.entropy_per_bit if report else "",
        "rng_all_passed": report.all_passed if report else "",
        "rng_latency_ns": drange.latency_estimate_ns(
            len(stream), cmap.bits_per_half, timing.t_rc_ns
        ) if cmap.entries else "",
    }]


_COLUMNS = {
    "solar": [
        "config_hash", "seed", "policy", "accesses", "reduced_reads",
        "reduced_fraction", "corruptions", "weak_fraction",
    ],
    "puf": [
        "config_hash", "seed", "segment", "evaluation", "jaccard", "accepted",
        "bucket_c", "eval_time_ms",
    ],
    "rng": [
        "config_hash", "seed", "banks_used", "bits", "entropy_per_bit",
        "entropy_ok", "p_block_frequency", "p_longest_run", "p_monobit",
        "p_runs", "all_passed", "throughput_mbps",
    ],
    "mitigate": [
        "config_hash", "seed", "hc_first", "mechanism", "hammers", "supported",
        "flips", "mitigation_refreshes", "mitigation_ns", "auto_refresh_rows",
        "activations", "max_pressure", "para_p", "reason",
    ],
    "combined": [
        "config_hash", "seed", "accesses", "reduced_fraction", "corruptions",
        "puf_device", "puf_segment", "puf_accepted", "puf_jaccard",
        "puf_eval_ms", "rng_bits", "rng_entropy", "rng_all_passed",
        "rng_latency_ns",
    ],
}


def _tasks_for(cfg: ExperimentConfig) -> list:
    """Sweep points in their deterministic merge order."""
    if cfg.mode == "mitigate":
        return [(seed, hc) for seed in cfg.seeds for hc in cfg.hc_first_sweep]
    return [(seed,) for seed in cfg.seeds]


def _run_task(payload) -> list:
    cfg_dict, task = payload
    cfg = ExperimentConfig.from_dict(cfg_dict)
    if cfg.mode == "solar":
        return _rows_solar(cfg, *task)
    if cfg.mode == "puf":
        return _rows_puf(cfg, *task)
    if cfg.mode == "rng":
        return _rows_rng(cfg, *task)
    if cfg.mode == "mitigate":
        return _rows_mitigate(cfg, *task)
    if cfg.mode == "combined":
        return _rows_combined(cfg, *task)
    raise ConfigError(f"no pipeline for mode {cfg.mode!r}")


def resolve_out_dir(explicit: str = None) -> str:
    out = explicit or os.environ.get(OUT_DIR_ENV) or os.getcwd()
    os.makedirs(out, exist_ok=True)
    return out


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> list:
    """Execute every sweep point and write one CSV per report type.

    Workers receive only the config dict and their sweep point; rows are
    merged in sweep order, so the output is identical at any thread count.
    """
    tasks = _tasks_for(cfg)
    payloads = [(cfg.to_dict(), t) for t in tasks]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(_run_task, payloads))
    else:
        chunks = [_run_task(p) for p in payloads]
    rows = [row for chunk in chunks for row in chunk]
    out_dir = resolve_out_dir(cfg.out_dir)
    path = os.path.join(out_dir, f"{cfg.mode}_{cfg.hash}.csv")
    write_csv(path, _COLUMNS[cfg.mode], rows)
    return [path]


# ---------------------------------------------------------------------------
# CLI


def _parse_overrides(pairs) -> dict:
    out = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigError(f"override must look like name=value, got {pair!r}")
        k, v = pair.split("=", 1)
        out[k] = int(v)
    return out


def _parse_patterns(text: str):
    if text == "all":
        return list(ALL_PATTERNS)
    names = {p.name.lower(): p for p in DataPattern}
    out = []
    for part in text.split(","):
        part = part.strip().lower()
        if part not in names:
            raise ConfigError(f"unknown pattern {part!r}; have {sorted(names)} or 'all'")
        out.append(names[part])
    return out


def _load_chip(path, geo: DramGeometry = None) -> SyntheticChip:
    return decode_payload(load_profile(path, geo=geo, kind="chip_recipe"))


def _out_path(args, default_name: str) -> str:
    if getattr(args, "out", None):
        return args.out
    return os.path.join(resolve_out_dir(args.out_dir), default_name)


def _cmd_chip_synth(args) -> int:
    overrides = _parse_overrides(args.geometry_override)
    geo = geometry_preset(args.geometry, **overrides)
    payload = chip_recipe_payload(
        args.manufacturer, args.type_node, args.seed, args.remap
    )
    pf = ProfileFile(kind="chip_recipe", geometry=geo, payload=payload,
                     chip_seed=args.seed)
    chip = chip_from_recipe(pf)  # validates manufacturer/type-node/geometry now
    path = save_profile(pf, _out_path(args, f"chip_s{args.seed}.json"))
    print(f"chip recipe -> {path}")
    print(f"  weak subarray columns: {chip.wc_bank.size}")
    print(f"  activation-weak cells: {chip.ac_key.size}")
    print(f"  disturbance-weak cells: {chip.hm_rowkey.size}")
    return EXIT_OK


def _cmd_char_act(args) -> int:
    chip = _load_chip(args.chip)
    rows = []
    for pattern in _parse_patterns(args.patterns):
        bitmap = run_activation_failure_test(
            chip, pattern, args.trcd, args.temperature, args.iterations,
            _seeded(args.seed, 10, int(pattern)),
        )
        rows.append({
            "seed": args.seed,
            "pattern": pattern.name,
            "trcd_ns": args.trcd,
            "temperature_c": args.temperature,
            "iterations": args.iterations,
            "failing_cells": len(bitmap),
            "local_bitlines": len(bitmap.local_bitlines()),
        })
    path = write_csv(
        _out_path(args, "char_act.csv"),
        ["seed", "pattern", "trcd_ns", "temperature_c", "iterations",
         "failing_cells", "local_bitlines"],
        rows,
    )
    print(f"activation characterization -> {path}")
    return EXIT_OK


def _cmd_char_rh(args) -> int:
    chip = _load_chip(args.chip)
    hc_sweep = sorted(int(x) for x in args.hc.split(","))
    geo = chip.geo
    mid = geo.rows_per_bank // 2
    victims = range(max(2, mid - args.victims // 2), min(geo.rows_per_bank - 2, mid + args.victims // 2))
    results = run_rowhammer_characterization(
        chip, _parse_patterns(args.patterns), hc_sweep,
        _seeded(args.seed, 11), victim_rows=victims, flat_banks=(args.bank,),
    )
    rows = [
        {"seed": args.seed, "pattern": pattern.name, "hc": hc, "flips": len(bitmap)}
        for (pattern, hc), bitmap in sorted(results.items(), key=lambda kv: (int(kv[0][0]), kv[0][1]))
    ]
    path = write_csv(
        _out_path(args, "char_rh.csv"),
        ["seed", "pattern", "hc", "flips"], rows,
    )
    print(f"hammer characterization -> {path}")
    if args.hc_profile:
        hcp = extract_hc_profile(results)
        save_profile(
            ProfileFile(kind="hc_profile", geometry=chip.geo,
                        payload=encode_hc_profile(hcp), chip_seed=chip.seed),
            args.hc_profile,
        )
        print(f"hammer-count profile -> {args.hc_profile}")
    return EXIT_OK


def _cmd_profile_build(args) -> int:
    chip = _load_chip(args.chip)
    if args.kind == "weak":
        if args.method == "exact":
            prof = WeakColumnProfile.from_chip(chip)
        else:
            prof, _ = build_weak_profile(
                chip, _parse_patterns(args.patterns), [args.temperature],
                _seeded(args.seed, 12), reduced_trcd_ns=args.trcd,
            )
        pf = ProfileFile(kind="weak_columns", geometry=chip.geo,
                         payload=encode_weak_profile(prof), chip_seed=chip.seed)
        default_name = f"weak_s{chip.seed}.json"
    elif args.kind == "rng":
        cmap = drange.identify_rng_cells(
            chip, reads=args.reads, temperature_c=args.temperature,
            rng=_seeded(args.seed, 13), trcd_ns=args.trcd,
        )
        pf = ProfileFile(kind="rng_cells", geometry=chip.geo,
                         payload=encode_rng_map(cmap), chip_seed=chip.seed)
        default_name = f"rng_s{chip.seed}.json"
    else:  # hc
        hc_first = int(locate_hc_first(chip, _seeded(args.seed, 14)))
        hcp = HcProfile(rowhammerable=True, hc_first=hc_first, sweep=(hc_first,))
        pf = ProfileFile(kind="hc_profile", geometry=chip.geo,
                         payload=encode_hc_profile(hcp), chip_seed=chip.seed)
        default_name = f"hc_s{chip.seed}.json"
    path = save_profile(pf, _out_path(args, default_name))
    print(f"{args.kind} profile -> {path}")
    return EXIT_OK


def _cmd_solar_sim(args) -> int:
    chip = _load_chip(args.chip)
    wprof = decode_weak_profile(
        load_profile(args.profile, geo=chip.geo, kind="weak_columns").payload, chip.geo
    )
    timing = timing_preset(args.geometry)
    pol = solar_mode(args.mode, wprof)
    from .solar import simulate_read_safety

    res = simulate_read_safety(
        chip, pol, args.accesses, _seeded(args.seed, 15),
        clock_period_ns=timing.clock_period_ns, temperature_c=args.temperature,
    )
    path = write_csv(
        _out_path(args, "solar_sim.csv"),
        ["seed", "policy", "accesses", "reduced_reads", "reduced_fraction", "corruptions"],
        [{
            "seed": args.seed, "policy": args.mode, "accesses": res.accesses,
            "reduced_reads": res.reduced_reads,
            "reduced_fraction": res.reduced_fraction, "corruptions": res.corruptions,
        }],
    )
    print(f"read-safety simulation -> {path}")
    return EXIT_OK


def _cmd_puf_enroll(args) -> int:
    chip = _load_chip(args.chip)
    if os.path.exists(args.keys):
        store = decode_key_store(
            load_profile(args.keys, geo=chip.geo, kind="key_store").payload
        )
    else:
        store = GoldenKeyStore()
    challenge = PufChallenge(
        segment_id=args.segment, trcd_ns=args.trcd,
        n_iterations=args.iterations, temperature_c=args.temperature,
    )
    resp = dlpuf.evaluate_puf(chip, challenge, _seeded(args.seed, 16))
    store.enroll(args.device, resp)
    save_profile(
        ProfileFile(kind="key_store", geometry=chip.geo,
                    payload=encode_key_store(store), chip_seed=chip.seed),
        args.keys,
    )
    print(
        f"enrolled {args.device} segment {args.segment} "
        f"bucket {resp.bucket:g}C ({len(resp.bits)} bits) -> {args.keys}"
    )
    return EXIT_OK


def _cmd_puf_auth(args) -> int:
    chip = _load_chip(args.chip)
    store = decode_key_store(
        load_profile(args.keys, geo=chip.geo, kind="key_store").payload
    )
    challenge = PufChallenge(
        segment_id=args.segment, trcd_ns=args.trcd,
        n_iterations=args.iterations, temperature_c=args.temperature,
    )
    resp = dlpuf.evaluate_puf(chip, challenge, _seeded(args.seed, 17))
    auth = store.authenticate(args.device, resp)
    verdict = "ACCEPT" if auth.accepted else "REJECT"
    j = f"{auth.jaccard:.4f}" if auth.jaccard is not None else "-"
    print(f"{verdict} device={args.device} segment={args.segment} "
          f"jaccard={j} reason={auth.reason}")
    return EXIT_OK


def _cmd_rng_gen(args) -> int:
    chip = _load_chip(args.chip)
    cmap = decode_rng_map(
        load_profile(args.map, geo=chip.geo, kind="rng_cells").payload
    )
    stream = drange.generate_bits(chip, cmap, args.bits, _seeded(args.seed, 18))
    out = _out_path(args, f"bits_s{chip.seed}.bin")
    meta = drange.export_bitstream(stream, out)
    print(f"{meta['n_bits']} bits -> {meta['stream']} (+ sidecar)")
    return EXIT_OK


def load_bitstream(path) -> Bitstream:
    """Rehydrate an exported stream, verifying the sidecar checksum."""
    sidecar = str(path) + ".json"
    with open(sidecar) as fh:
        meta = json.load(fh)
    with open(path, "rb") as fh:
        packed = fh.read()
    if hashlib.sha256(packed).hexdigest() != meta["sha256"]:
        raise ProfileCorruptionError(f"{path}: bitstream does not match its sidecar")
    bits = np.unpackbits(np.frombuffer(packed, dtype=np.uint8), bitorder="little")
    return Bitstream(
        bits=bits[: meta["n_bits"]].astype(np.uint8),
        chip_seed=meta["chip_seed"],
        temperature_c=meta["temperature_c"],
        emission_order=tuple(tuple(x) for x in meta["emission_order"]),
    )


def _cmd_rng_test(args) -> int:
    stream = load_bitstream(args.stream)
    report = drange.randomness_report(stream, alpha=args.alpha)
    rows = [{
        "bits": report.n_bits,
        "entropy_per_bit": report.entropy_per_bit,
        "entropy_ok": report.entropy_ok,
        "all_passed": report.all_passed,
    }]
    for name, t in sorted(report.tests.items()):
        rows[0][f"p_{name}"] = t.p_value
    cols = ["bits", "entropy_per_bit", "entropy_ok"] + sorted(
        f"p_{n}" for n in report.tests
    ) + ["all_passed"]
    if args.out:
        path = write_csv(args.out, cols, rows)
        print(f"randomness report -> {path}")
    else:
        print(",".join(cols))
        print(",".join(str(_csv_cell(rows[0][c])) for c in cols))
    return EXIT_OK


def _cmd_rh_mitigate(args) -> int:
    cfg = ExperimentConfig(
        mode="mitigate",
        geometry=args.geometry,
        geometry_overrides=_parse_overrides(args.geometry_override),
        manufacturer=args.manufacturer,
        type_node=args.type_node,
        seeds=(args.seed,),
        mechanisms=tuple(args.mechanism.split(",")),
        hc_first_sweep=tuple(int(x) for x in args.hc_first.split(",")),
        hammers=args.hammers,
        out_dir=args.out_dir,
    )
    paths = run_experiment(cfg, threads=args.threads)
    for p in paths:
        print(f"mitigation report -> {p}")
    _, rows = read_csv(paths[0])
    if rows and all(r["supported"] == "0" for r in rows):
        raise UnsupportedMechanismError(
            "; ".join(sorted({r["reason"] for r in rows}))
        )
    return EXIT_OK


def _cmd_combined_run(args) -> int:
    cfg = load_config(args.config)
    if args.out_dir and not cfg.out_dir:
        cfg = replace(cfg, out_dir=args.out_dir)
    paths = run_experiment(cfg, threads=args.threads)
    for p in paths:
        print(f"report -> {p}")
    return EXIT_OK


def _cmd_report(args) -> int:
    header, rows = read_csv(args.infile)
    cols, out_rows = summarize_rows(header, rows, by=args.by)
    if args.out:
        path = write_csv(args.out, cols, out_rows)
        print(f"summary -> {path}")
    else:
        print(",".join(cols))
        for r in out_rows:
            print(",".join(str(_csv_cell(r[c])) for c in cols))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dramlab",
        description="Synthetic DRAM timing-margin laboratory.",
    )
    parser.add_argument("--seed", type=int, default=1, help="default RNG seed")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker processes for sweeps")
    parser.add_argument("--out-dir", default=None,
                        help=f"output directory (or ${OUT_DIR_ENV})")
    groups = parser.add_subparsers(dest="group", required=True)

    # The global options are also accepted after the subcommand. SUPPRESS keeps
    # the subparser from clobbering a value parsed at the top level.
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS)
    common.add_argument("--out-dir", default=argparse.SUPPRESS)

    def sub(group_parser, name, func, **kw):
        p = group_parser.add_parser(name, parents=[common], **kw)
        p.set_defaults(func=func)
        return p

    chip = groups.add_parser("chip").add_subparsers(dest="action", required=True)
    p = sub(chip, "synth", _cmd_chip_synth, help="synthesize a chip recipe")
    p.add_argument("--manufacturer", default="A", choices=sorted({m for (m, _) in profile_names()}))
    p.add_argument("--type-node", default="lpddr4-1y")
    p.add_argument("--geometry", default="lpddr4", choices=GEOMETRY_PRESET_NAMES)
    p.add_argument("--geometry-override", action="append", metavar="FIELD=N")
    p.add_argument("--remap", default=None, choices=("identity", "paired"))
    p.add_argument("--out", default=None)

    char = groups.add_parser("char").add_subparsers(dest="action", required=True)
    p = sub(char, "act", _cmd_char_act, help="activation-failure test")
    p.add_argument("--chip", required=True)
    p.add_argument("--trcd", type=float, default=10.0)
    p.add_argument("--temperature", type=float, default=50.0)
    p.add_argument("--iterations", type=int, default=16)
    p.add_argument("--patterns", default="all")
    p.add_argument("--out", default=None)
    p = sub(char, "rh", _cmd_char_rh, help="double-sided hammer sweep")
    p.add_argument("--chip", required=True)
    p.add_argument("--hc", default="10000,30000,100000", help="comma list")
    p.add_argument("--patterns", default="all")
    p.add_argument("--victims", type=int, default=64, help="rows around mid-bank")
    p.add_argument("--bank", type=int, default=0)
    p.add_argument("--hc-profile", default=None, help="also write an hc profile here")
    p.add_argument("--out", default=None)

    prof = groups.add_parser("profile").add_subparsers(dest="action", required=True)
    p = sub(prof, "build", _cmd_profile_build, help="build a persisted profile")
    p.add_argument("--chip", required=True)
    p.add_argument("--kind", required=True, choices=("weak", "rng", "hc"))
    p.add_argument("--method", default="exact", choices=("exact", "measure"),
                   help="weak profile: ground truth or measured discovery")
    p.add_argument("--patterns", default="all")
    p.add_argument("--temperature", type=float, default=50.0)
    p.add_argument("--trcd", type=float, default=10.0)
    p.add_argument("--reads", type=int, default=1000)
    p.add_argument("--out", default=None)

    sol = groups.add_parser("solar").add_subparsers(dest="action", required=True)
    p = sub(sol, "sim", _cmd_solar_sim, help="closed-row read-safety simulation")
    p.add_argument("--chip", required=True)
    p.add_argument("--profile", required=True)
    p.add_argument("--mode", default="solar", choices=sorted(MODE_FLAGS))
    p.add_argument("--accesses", type=int, default=100_000)
    p.add_argument("--temperature", type=float, default=50.0)
    p.add_argument("--geometry", default="lpddr4", choices=GEOMETRY_PRESET_NAMES)
    p.add_argument("--out", default=None)

    puf = groups.add_parser("puf").add_subparsers(dest="action", required=True)
    for name, func in (("enroll", _cmd_puf_enroll), ("auth", _cmd_puf_auth)):
        p = sub(puf, name, func, help=f"{name} a device fingerprint")
        p.add_argument("--chip", required=True)
        p.add_argument("--keys", required=True, help="key-store profile path")
        p.add_argument("--device", required=True)
        p.add_argument("--segment", type=int, required=True)
        p.add_argument("--temperature", type=float, default=50.0)
        p.add_argument("--iterations", type=int, default=100)
        p.add_argument("--trcd", type=float, default=10.0)

    rng = groups.add_parser("rng").add_subparsers(dest="action", required=True)
    p = sub(rng, "gen", _cmd_rng_gen, help="harvest a bitstream")
    p.add_argument("--chip", required=True)
    p.add_argument("--map", required=True, help="rng-cells profile path")
    p.add_argument("--bits", type=int, default=1_000_000)
    p.add_argument("--out", default=None)
    p = sub(rng, "test", _cmd_rng_test, help="run the in-repo randomness checks")
    p.add_argument("--stream", required=True, help="exported .bin path")
    p.add_argument("--alpha", type=float, default=drange.ALPHA)
    p.add_argument("--out", default=None)

    rh = groups.add_parser("rh").add_subparsers(dest="action", required=True)
    p = sub(rh, "mitigate", _cmd_rh_mitigate, help="mitigation sweep on an attack trace")
    p.add_argument("--mechanism", default="none,para", help="comma list")
    p.add_argument("--hc-first", default="2000", help="comma list of thresholds")
    p.add_argument("--hammers", type=int, default=None)
    p.add_argument("--manufacturer", default="A")
    p.add_argument("--type-node", default="lpddr4-1y")
    p.add_argument("--geometry", default="lpddr4", choices=GEOMETRY_PRESET_NAMES)
    p.add_argument("--geometry-override", action="append", metavar="FIELD=N")

    comb = groups.add_parser("combined").add_subparsers(dest="action", required=True)
    p = sub(comb, "run", _cmd_combined_run, help="run an experiment config file")
    p.add_argument("--config", required=True)

    rep = groups.add_parser("report").add_subparsers(dest="action", required=True)
    p = sub(rep, "summarize", _cmd_report, help="summarize a report CSV")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--by", default=None, help="group rows by this column")
    p.add_argument("--out", default=None)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad arguments, matching the config-error code
        return int(exc.code or 0)
    try:
        return args.func(args) or EXIT_OK
    except UnsupportedMechanismError as exc:
        print(f"unsupported: {exc}", file=sys.stderr)
        return EXIT_UNSUPPORTED
    except (ProfileCorruptionError,) as exc:
        print(f"corrupt file: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ProfileVersionError, GeometryMismatchError,
            TemperatureRangeError, TraceParseError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DramLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
