"""Trace-driven bank-timing simulator.

Open-row state machines at bank granularity with FR-FCFS scheduling (row
hits first, then oldest), simple in-order cores holding one outstanding
request each, a round-robin auto-refresh schedule, and hooks for the
reduced-latency access policy and hammer mitigations. The per-core IPC proxy
is requests served per cycle; absolute values are meaningless, ratios
against a baseline run of the same trace are the metric.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .chipsynth import SAFE_TRCD_NS, SyntheticChip, activation_flip_probabilities
from .errors import TraceParseError
from .geometry import DramGeometry, Location, TimingParams, decode_address, encode_address
from .rhmitigate import MitigationKind, MitigationState, on_activate, on_refresh_tick
from .solar import SolarConfig, trcd_for_access

BURST_CYCLES = 4


@dataclass(frozen=True)
class MemRequest:
    arrival_ns: float
    address: int
    is_write: bool
    core_id: int

    def __post_init__(self):
        if self.arrival_ns < 0:
            raise ValueError("arrival_ns must be non-negative")
        if self.core_id < 0:
            raise ValueError("core_id must be non-negative")


def parse_trace(source) -> list:
    """Parse `arrival_ns core_id R|W hex_address` lines.

    `source` is a path, an open file, or an iterable of lines. Blank lines
    and lines starting with '#' are skipped. Arrivals must be non-decreasing
    per core.
    """
    if isinstance(source, (str, bytes)):
        with open(source) as fh:
            return parse_trace(fh)
    requests = []
    last_arrival: dict = {}
    for line_no, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 4:
            raise TraceParseError(line_no, f"expected 4 fields, got {len(parts)}")
        try:
            arrival = float(parts[0])
            core = int(parts[1])
            op = parts[2].upper()
            address = int(parts[3], 16)
        except ValueError as exc:
            raise TraceParseError(line_no, str(exc)) from None
        if op not in ("R", "W"):
            raise TraceParseError(line_no, f"op must be R or W, got {parts[2]!r}")
        if arrival < last_arrival.get(core, 0.0):
            raise TraceParseError(line_no, f"arrival {arrival} decreases for core {core}")
        last_arrival[core] = arrival
        requests.append(MemRequest(arrival, address, op == "W", core))
    return requests


def write_trace(path, requests) -> None:
    with open(path, "w") as fh:
        for r in requests:
            op = "W" if r.is_write else "R"
            fh.write(f"{r.arrival_ns:.3f} {r.core_id} {op} {r.address:x}\n")


@dataclass
class SimMetrics:
    total_ns: float
    clock_period_ns: float
    n_banks: int
    served: int
    row_hits: int
    closed_activations: int
    closed_reads: int
    reduced_reads: int
    corrupted_reads: int
    per_core_served: dict
    mitigation_ns: float
    mitigation_refresh_rows: int
    auto_refresh_ns: float
    bank_busy_ns: dict

    @property
    def total_cycles(self) -> float:
        return self.total_ns / self.clock_period_ns

    @property
    def per_core_ipc(self) -> dict:
        cycles = self.total_cycles
        return {c: n / cycles for c, n in self.per_core_served.items()}

    @property
    def row_hit_rate(self) -> float:
        return self.row_hits / self.served if self.served else 0.0

    @property
    def reduced_read_fraction(self) -> float:
        return self.reduced_reads / self.closed_reads if self.closed_reads else 0.0

    @property
    def bandwidth_overhead(self) -> float:
        """Mitigation-consumed bank time over total bank time."""
        return self.mitigation_ns / (self.total_ns * self.n_banks) if self.total_ns else 0.0


@dataclass
class _Bank:
    open_row: int = -1
    busy_until: float = 0.0
    busy_ns: float = 0.0
    act_ns: float = -1e18
    queue: list = field(default_factory=list)
    backlog: list = field(default_factory=list)
    next_refresh: float = 0.0
    refresh_tick: float = 0.0
    rr_row: int = 0
    state: MitigationState = None


def run_trace(
    trace,
    geo: DramGeometry,
    timing: TimingParams,
    solar_cfg: SolarConfig = None,
    mitigation=None,
    chip: SyntheticChip = None,
    rng: np.random.Generator = None,
    queue_capacity: int = 64,
    temperature_c: float = 50.0,
) -> SimMetrics:
    """Simulate a request trace and account bank time.

    `mitigation` is a MitigationState (copied per bank) or a zero-argument
    factory producing one per bank. A shrunken-refresh-window mechanism
    replaces the bank's refresh schedule and owns its accounting; everything
    else adds RefreshAction blackouts on top of the regular schedule.
    `chip` enables corruption sampling on closed-row reads served below the
    safe activation delay.
    """
    requests = list(trace)
    if rng is None:
        rng = np.random.default_rng()
    clock = timing.clock_period_ns
    cas_ns = timing.t_rcd_ns  # column-access stand-in, never policy-reduced
    burst_ns = BURST_CYCLES * clock
    default_trcd_ns = (
        solar_cfg.trcd_default_cycles * clock if solar_cfg else timing.t_rcd_ns
    )

    cores: dict = {}
    for r in requests:
        loc = decode_address(r.address, geo)
        cores.setdefault(r.core_id, []).append((r, loc))
    for cid, lst in cores.items():
        arr = [r.arrival_ns for r, _ in lst]
        if any(b < a for a, b in zip(arr, arr[1:])):
            raise ValueError(f"arrivals decrease for core {cid}")

    banks = [_Bank() for _ in range(geo.banks_total)]
    for b in banks:
        b.refresh_tick = timing.t_refi_ns
        b.next_refresh = timing.t_refi_ns
        if mitigation is not None:
            st = mitigation() if callable(mitigation) else copy.deepcopy(mitigation)
            b.state = st
            if st.kind is MitigationKind.INCREASED_REFRESH:
                b.refresh_tick = st.refresh_window_ns / st.intervals_per_window
                b.next_refresh = b.refresh_tick

    mitigation_ns = 0.0
    mitigation_rows = 0
    auto_refresh_ns = 0.0
    row_hits = 0
    closed_acts = 0
    closed_reads = 0
    reduced_reads = 0
    corrupted = 0
    served = 0
    per_core_served: dict = {}
    end_ns = 0.0

    # head of each core's stream becomes visible at its arrival
    pointers = {cid: 0 for cid in cores}
    for cid, lst in cores.items():
        r, loc = lst[0]
        _admit(banks[loc.flat_bank(geo)], r, loc, r.arrival_ns, queue_capacity)

    def catch_up_refresh(bank: _Bank, now: float):
        nonlocal mitigation_ns, mitigation_rows, auto_refresh_ns
        while bank.next_refresh <= now:
            start = max(bank.busy_until, bank.next_refresh)
            bank.busy_until = start + timing.t_rc_ns
            bank.busy_ns += timing.t_rc_ns
            bank.open_row = -1
            bank.rr_row = (bank.rr_row + 1) % geo.rows_per_bank
            if bank.state is not None and bank.state.kind is MitigationKind.INCREASED_REFRESH:
                bank.state.mitigation_refreshes += 1
                mitigation_rows += 1
                mitigation_ns += timing.t_rc_ns
            else:
                auto_refresh_ns += timing.t_rc_ns
            if bank.state is not None:
                act = on_refresh_tick(bank.state, bank.next_refresh, rng)
                if act.rows:
                    cost = len(act.rows) * timing.t_rc_ns
                    bank.busy_until += cost
                    bank.busy_ns += cost
                    mitigation_ns += cost
                    mitigation_rows += len(act.rows)
            bank.next_refresh += bank.refresh_tick

    total = len(requests)
    while served < total:
        best_bank = None
        best_t = None
        for bi, bank in enumerate(banks):
            if not bank.queue:
                continue
            visible = min(e[2] for e in bank.queue)
            t = max(bank.busy_until, visible)
            if best_t is None or t < best_t:
                best_t, best_bank = t, bi
        bank = banks[best_bank]
        now = best_t
        while bank.next_refresh <= now:
            catch_up_refresh(bank, now)
            now = max(bank.busy_until, min(e[2] for e in bank.queue))

        ready = [e for e in bank.queue if e[2] <= now]
        hits = [e for e in ready if bank.open_row == e[1].row]
        pick = min(hits or ready, key=lambda e: (e[2], e[0].arrival_ns))
        bank.queue.remove(pick)
        req, loc, visible_ns = pick

        start = max(now, visible_ns)
        latency = 0.0
        if bank.open_row == loc.row:
            row_hits += 1
        else:
            if bank.open_row >= 0:
                pre_start = max(start, bank.act_ns + timing.t_ras_ns)
                latency += (pre_start - start) + timing.t_rp_ns
            closed_acts += 1
            if not req.is_write:
                closed_reads += 1
            if solar_cfg is not None:
                cyc = trcd_for_access(solar_cfg, loc, req.is_write, True)
                trcd_ns = cyc * clock
            else:
                trcd_ns = default_trcd_ns
            if not req.is_write and trcd_ns < default_trcd_ns:
                reduced_reads += 1
            if (
                chip is not None
                and not req.is_write
                and trcd_ns < SAFE_TRCD_NS
            ):
                fb = loc.flat_bank(geo)
                col = (
                    solar_cfg.effective_column(fb, loc.cacheline_index)
                    if solar_cfg
                    else loc.cacheline_index
                )
                sl = chip.cells_in_cacheline(fb, loc.row, col)
                if sl.start != sl.stop:
                    p = activation_flip_probabilities(
                        chip, sl, trcd_ns, temperature_c, None
                    )
                    if (rng.random(p.size) < p).any():
                        corrupted += 1
            latency += trcd_ns
            bank.act_ns = start + latency - trcd_ns
            bank.open_row = loc.row
            if bank.state is not None:
                act = on_activate(bank.state, loc.row, start, rng)
                if act.rows:
                    mitigation_ns += act.cost_ns
                    mitigation_rows += len(act.rows)
                    bank.busy_until = max(bank.busy_until, start) + act.cost_ns
                    bank.busy_ns += act.cost_ns
        latency += cas_ns + burst_ns
        done = start + latency
        bank.busy_until = max(bank.busy_until, done)
        bank.busy_ns += latency
        served += 1
        per_core_served[req.core_id] = per_core_served.get(req.core_id, 0) + 1
        end_ns = max(end_ns, done)

        # the core may now issue its next request
        cid = req.core_id
        pointers[cid] += 1
        if pointers[cid] < len(cores[cid]):
            nxt, nloc = cores[cid][pointers[cid]]
            _admit(
                banks[nloc.flat_bank(geo)],
                nxt,
                nloc,
                max(nxt.arrival_ns, done),
                queue_capacity,
            )
        _drain_backlog(bank, queue_capacity)

    for bank in banks:
        catch_up_refresh(bank, end_ns)

    return SimMetrics(
        total_ns=end_ns,
        clock_period_ns=clock,
        n_banks=geo.banks_total,
        served=served,
        row_hits=row_hits,
        closed_activations=closed_acts,
        closed_reads=closed_reads,
        reduced_reads=reduced_reads,
        corrupted_reads=corrupted,
        per_core_served=per_core_served,
        mitigation_ns=mitigation_ns,
        mitigation_refresh_rows=mitigation_rows,
        auto_refresh_ns=auto_refresh_ns,
        bank_busy_ns={i: b.busy_ns for i, b in enumerate(banks)},
    )


def _admit(bank: _Bank, req: MemRequest, loc: Location, visible_ns: float, cap: int):
    entry = (req, loc, visible_ns)
    if len(bank.queue) < cap:
        bank.queue.append(entry)
    else:
        bank.backlog.append(entry)


def _drain_backlog(bank: _Bank, cap: int):
    while bank.backlog and len(bank.queue) < cap:
        bank.queue.append(bank.backlog.pop(0))


def weighted_speedup(per_core_ipc: dict, baseline_ipc: dict) -> float:
    """Sum of per-core IPC ratios; a run against itself gives the core count."""
    if not per_core_ipc:
        raise ValueError("no cores")
    if set(per_core_ipc) != set(baseline_ipc):
        raise ValueError("core sets differ")
    for c, v in baseline_ipc.items():
        if v == 0:
            raise ValueError(f"baseline IPC for core {c} is zero")
    return sum(per_core_ipc[c] / baseline_ipc[c] for c in per_core_ipc)


def weighted_speedup_pct(per_core_ipc: dict, baseline_ipc: dict) -> float:
    """Weighted speedup normalized so baseline-vs-itself reads 100."""
    return 100.0 * weighted_speedup(per_core_ipc, baseline_ipc) / len(per_core_ipc)


def bandwidth_overhead(metrics: SimMetrics) -> float:
    return metrics.bandwidth_overhead


def gen_streaming(
    geo: DramGeometry,
    n_requests: int,
    n_cores: int = 4,
    gap_ns: float = 10.0,
    write_frac: float = 0.0,
    rng: np.random.Generator = None,
) -> list:
    """Sequential cacheline walks, each core in its own region."""
    if rng is None:
        rng = np.random.default_rng(0)
    region = geo.capacity_bytes // max(n_cores, 1)
    out = []
    for i in range(n_requests):
        core = i % n_cores
        step = i // n_cores
        addr = (core * region + step * geo.cacheline_bytes) % geo.capacity_bytes
        addr -= addr % geo.cacheline_bytes
        is_write = rng.random() < write_frac
        out.append(MemRequest(i * gap_ns, addr, is_write, core))
    return out


def gen_random(
    geo: DramGeometry,
    n_requests: int,
    n_cores: int = 4,
    gap_ns: float = 10.0,
    write_frac: float = 0.2,
    rng: np.random.Generator = None,
) -> list:
    if rng is None:
        rng = np.random.default_rng(0)
    n_lines = geo.capacity_bytes // geo.cacheline_bytes
    lines = rng.integers(0, n_lines, size=n_requests)
    writes = rng.random(n_requests) < write_frac
    return [
        MemRequest(i * gap_ns, int(lines[i]) * geo.cacheline_bytes, bool(writes[i]), i % n_cores)
        for i in range(n_requests)
    ]


def gen_hammer_attack(
    geo: DramGeometry,
    victim_row: int,
    hammers: int,
    flat_bank: int = 0,
    gap_ns: float = 50.0,
    core_id: int = 0,
    start_ns: float = 0.0,
) -> list:
    """Alternating reads of the victim's two neighbor rows, cacheline 0."""
    if not 1 <= victim_row < geo.rows_per_bank - 1:
        raise ValueError("victim must have two neighbors")
    out = []
    t = start_ns
    bank = flat_bank % geo.banks_per_rank
    for h in range(hammers):
        for row in (victim_row - 1, victim_row + 1):
            addr = encode_address(
                Location(0, 0, bank, row // geo.rows_per_subarray, row, 0, 0), geo
            )
            out.append(MemRequest(t, addr, False, core_id))
            t += gap_ns
    return out


def gen_first_access_biased(
    geo: DramGeometry,
    n_requests: int,
    n_cores: int = 4,
    gap_ns: float = 10.0,
    burst: int = 4,
    p_cl0: float = 0.222,
    p_cl1: float = 0.066,
    rng: np.random.Generator = None,
) -> list:
    """Random-row bursts whose first access lands on cacheline 0 with
    probability 22.2%, cacheline 1 with 6.6%, else uniformly elsewhere."""
    if rng is None:
        rng = np.random.default_rng(0)
    out = []
    cpr = geo.cachelines_per_row
    t = 0.0
    n_bursts = 0
    while len(out) < n_requests:
        core = n_bursts % n_cores
        n_bursts += 1
        bank = int(rng.integers(0, geo.banks_per_rank))
        row = int(rng.integers(0, geo.rows_per_bank))
        u = rng.random()
        if u < p_cl0:
            first = 0
        elif u < p_cl0 + p_cl1:
            first = 1 % cpr
        else:
            first = int(rng.integers(0, cpr))
        for k in range(burst):
            if len(out) >= n_requests:
                break
            col = (first + k) % cpr
            loc = Location(0, 0, bank, row // geo.rows_per_subarray, row,
                           col * geo.cacheline_bytes, col)
            out.append(MemRequest(t, encode_address(loc, geo), False, core))
            t += gap_ns
    return out
