"""Hammer mitigation mechanisms behind one policy interface.

Each mechanism observes row activations and decides which neighboring rows to
refresh. A replay harness drives a mechanism plus a synthetic chip's
deterministic flip thresholds and counts the flips that get through, along
with the refresh work spent.

Mechanisms: probabilistic adjacent refresh (para), shrunken refresh window
(increased_refresh), hot/cold capture tables (prohit), recency queue (mrloc),
pruned per-row counters (twice, and twice_ideal without the table bound),
and the omniscient oracle (ideal) that refreshes a row exactly when its
un-refreshed adjacent-activation count reaches hc_first - 1.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from collections import OrderedDict
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .chipsynth import ADJACENT_PRESSURE, SyntheticChip
from .errors import ConfigError, UnsupportedMechanismError

TABLE_OPERATING_POINT = 2000  # published hot/cold table and queue tuning
INCREASED_REFRESH_MIN_HC = 32768
HOUR_NS = 3600.0 * 1e9
DEFAULT_REFW_NS = 64e6
DEFAULT_REFI_NS = 7812.5


class MitigationKind(str, Enum):
    NONE = "none"
    INCREASED_REFRESH = "increased_refresh"
    PARA = "para"
    PROHIT = "prohit"
    MRLOC = "mrloc"
    TWICE = "twice"
    TWICE_IDEAL = "twice_ideal"
    IDEAL = "ideal"


ZERO_FLIP_KINDS = (
    MitigationKind.INCREASED_REFRESH,
    MitigationKind.TWICE,
    MitigationKind.TWICE_IDEAL,
    MitigationKind.IDEAL,
)


@dataclass(frozen=True)
class RefreshAction:
    rows: tuple = ()
    cost_ns: float = 0.0


@dataclass(frozen=True)
class ProhitParams:
    """Capture-table tuning; the source design gives no numbers, so all
    values must be stated explicitly."""

    p_insert: float
    p_evict: float
    p_promote: float
    hot_size: int = 4
    cold_size: int = 12

    def __post_init__(self):
        for name in ("p_insert", "p_evict", "p_promote"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1]")
        if self.hot_size < 1 or self.cold_size < 1:
            raise ConfigError("table sizes must be positive")


@dataclass(frozen=True)
class MrlocParams:
    """Recency-queue tuning. The refresh probability is linear in how
    recently the victim was enqueued; that form is an interpretation, the
    source describes the adjustment only qualitatively."""

    queue_size: int = 512
    p_min: float = 0.0005
    p_max: float = 0.01

    def __post_init__(self):
        if self.queue_size < 1:
            raise ConfigError("queue_size must be positive")
        if not 0.0 <= self.p_min <= self.p_max <= 1.0:
            raise ConfigError("need 0 <= p_min <= p_max <= 1")


def para_probability(
    hc_first: int,
    ber_target: float = 1e-15,
    t_rc_ns: float = 50.0,
    hours: float = 1.0,
) -> float:
    """Smallest per-neighbor refresh probability keeping the chance of an
    un-interrupted run of hc_first hammers below ber_target over an hour of
    back-to-back activations.

    Each hammer is two adjacent activations, each an independent refresh
    opportunity, so one hammer passes unnoticed with probability (1-p)^2.
    The run bound is the expected number of failure runs of length hc_first
    (renewal form): q^hc + (N - hc) * (1 - q) * q^hc for N hammers.
    """
    if hc_first < 2:
        raise ConfigError("hc_first must be at least 2")
    if not 0 < ber_target < 1:
        raise ConfigError("ber_target must be in (0, 1)")
    n_hammers = hours * HOUR_NS / t_rc_ns / 2.0

    def run_bound(p: float) -> float:
        if p <= 0.0:
            return 1.0
        log_q = 2.0 * math.log1p(-p) if p < 1.0 else -math.inf
        log_run = hc_first * log_q
        if log_run == -math.inf:
            return 0.0
        tail = math.exp(log_run)
        starts = max(n_hammers - hc_first, 0.0)
        return tail + starts * -math.expm1(log_q) * tail

    lo, hi = 0.0, 1.0
    while (hi - lo) > 1e-6 * max(hi, 1e-12):
        mid = (lo + hi) / 2.0
        if run_bound(mid) <= ber_target:
            hi = mid
        else:
            lo = mid
    return hi


def increased_refresh_window(hc_first: int, t_rc_ns: float) -> float:
    """Refresh window (ns) that outruns the threshold: hc_first activations
    of back-to-back hammering fit exactly one window."""
    if hc_first <= 0:
        raise ConfigError("hc_first must be positive")
    if hc_first < INCREASED_REFRESH_MIN_HC:
        raise UnsupportedMechanismError(
            f"increased refresh does not scale below hc_first {INCREASED_REFRESH_MIN_HC}"
        )
    return hc_first * t_rc_ns


@dataclass
class MitigationState:
    kind: MitigationKind
    hc_first: int
    t_rc_ns: float = 50.0
    t_refw_ns: float = DEFAULT_REFW_NS
    t_refi_ns: float = DEFAULT_REFI_NS
    para_p: float = 0.0
    prohit: ProhitParams = None
    mrloc: MrlocParams = None
    refresh_window_ns: float = None  # set for increased_refresh
    t_rh: float = None  # set for twice variants
    mitigation_refreshes: int = 0
    _counters: dict = field(default_factory=dict)  # ideal / twice: row -> count
    _twice_life: dict = field(default_factory=dict)  # twice: row -> intervals alive
    _hot: OrderedDict = field(default_factory=OrderedDict)
    _cold: OrderedDict = field(default_factory=OrderedDict)
    _queue: OrderedDict = None  # mrloc: row -> insertion sequence number
    _seq: int = 0

    @property
    def intervals_per_window(self) -> float:
        return self.t_refw_ns / self.t_refi_ns

    def _refresh(self, rows) -> RefreshAction:
        rows = tuple(rows)
        self.mitigation_refreshes += len(rows)
        for r in rows:
            self.note_refreshed(r)
        return RefreshAction(rows=rows, cost_ns=len(rows) * self.t_rc_ns)

    def note_refreshed(self, row: int) -> None:
        """A row's charge was restored (by us or by the refresh schedule)."""
        self._counters.pop(row, None)
        self._twice_life.pop(row, None)
        self._hot.pop(row, None)
        self._cold.pop(row, None)
        if self._queue is not None:
            self._queue.pop(row, None)


def make_mitigation(
    kind: MitigationKind | str,
    hc_first: int,
    t_rc_ns: float = 50.0,
    t_refw_ns: float = DEFAULT_REFW_NS,
    t_refi_ns: float = DEFAULT_REFI_NS,
    prohit: ProhitParams = None,
    mrloc: MrlocParams = None,
    ber_target: float = 1e-15,
) -> MitigationState:
    kind = MitigationKind(kind)
    if hc_first < 2:
        raise ConfigError("hc_first must be at least 2")
    state = MitigationState(
        kind=kind, hc_first=hc_first, t_rc_ns=t_rc_ns,
        t_refw_ns=t_refw_ns, t_refi_ns=t_refi_ns,
    )
    if kind is MitigationKind.PARA:
        state.para_p = para_probability(hc_first, ber_target, t_rc_ns)
    elif kind is MitigationKind.INCREASED_REFRESH:
        state.refresh_window_ns = increased_refresh_window(hc_first, t_rc_ns)
    elif kind in (MitigationKind.TWICE, MitigationKind.TWICE_IDEAL):
        state.t_rh = hc_first / 4.0
        if kind is MitigationKind.TWICE and state.t_rh < state.intervals_per_window:
            raise ConfigError(
                f"counter table does not scale: t_RH {state.t_rh:.0f} is below "
                f"{state.intervals_per_window:.0f} refresh intervals per window"
            )
    elif kind is MitigationKind.PROHIT:
        if hc_first != TABLE_OPERATING_POINT:
            raise UnsupportedMechanismError(
                f"capture tables are tuned only for hc_first {TABLE_OPERATING_POINT}"
            )
        if prohit is None:
            raise ConfigError("prohit parameters are required, there are no defaults")
        state.prohit = prohit
    elif kind is MitigationKind.MRLOC:
        if hc_first != TABLE_OPERATING_POINT:
            raise UnsupportedMechanismError(
                f"recency queue is tuned only for hc_first {TABLE_OPERATING_POINT}"
            )
        state.mrloc = mrloc if mrloc is not None else MrlocParams()
        state._queue = OrderedDict()
    return state


def on_activate(
    state: MitigationState, row: int, now_ns: float, rng: np.random.Generator
) -> RefreshAction:
    """Feed one activation of `row`; neighbors are row ± 1 in the same bank."""
    kind = state.kind
    victims = (row - 1, row + 1)
    if kind in (MitigationKind.NONE, MitigationKind.INCREASED_REFRESH):
        return RefreshAction()
    if kind is MitigationKind.PARA:
        hit = [v for v in victims if rng.random() < state.para_p]
        return state._refresh(hit) if hit else RefreshAction()
    if kind is MitigationKind.IDEAL:
        due = []
        for v in victims:
            c = state._counters.get(v, 0) + 1
            if c >= state.hc_first - 1:
                due.append(v)
            else:
                state._counters[v] = c
        return state._refresh(due) if due else RefreshAction()
    if kind in (MitigationKind.TWICE, MitigationKind.TWICE_IDEAL):
        due = []
        for v in victims:
            c = state._counters.get(v, 0) + 1
            state._twice_life.setdefault(v, 0)
            if c > state.t_rh:
                due.append(v)
            else:
                state._counters[v] = c
        return state._refresh(due) if due else RefreshAction()
    if kind is MitigationKind.PROHIT:
        for v in victims:
            if v in state._hot:
                state._hot.move_to_end(v)
            elif v in state._cold:
                if rng.random() < state.prohit.p_promote:
                    del state._cold[v]
                    if len(state._hot) >= state.prohit.hot_size:
                        demoted, _ = state._hot.popitem(last=False)
                        state._cold[demoted] = True
                    state._hot[v] = True
                else:
                    state._cold.move_to_end(v)
            else:
                if rng.random() < state.prohit.p_insert:
                    if len(state._cold) >= state.prohit.cold_size:
                        if rng.random() < state.prohit.p_evict:
                            state._cold.popitem(last=False)
                        else:
                            continue
                    state._cold[v] = True
        return RefreshAction()  # refreshes happen at refresh-command boundaries
    if kind is MitigationKind.MRLOC:
        q = state._queue
        params = state.mrloc
        due = []
        for v in victims:
            state._seq += 1
            if v in q:
                oldest = next(iter(q.values()))  # insertion order = seq order
                newest = next(reversed(q.values()))
                recency = 1.0 if newest == oldest else (q[v] - oldest) / (newest - oldest)
                p = params.p_min + (params.p_max - params.p_min) * recency
                del q[v]
                if rng.random() < p:
                    due.append(v)
                    continue
            q[v] = state._seq
            if len(q) > params.queue_size:
                q.popitem(last=False)
        return state._refresh(due) if due else RefreshAction()
    raise ConfigError(f"unhandled mechanism {kind}")


def on_refresh_tick(
    state: MitigationState, now_ns: float, rng: np.random.Generator
) -> RefreshAction:
    """Work piggybacked on refresh commands: the capture tables refresh their
    hottest entry; the counter table prunes entries too slow to matter."""
    if state.kind is MitigationKind.PROHIT:
        if state._hot:
            hottest = next(reversed(state._hot))
            del state._hot[hottest]
            return state._refresh((hottest,))
        return RefreshAction()
    if state.kind is MitigationKind.TWICE:
        # prune rows whose pace cannot reach t_RH within the window
        rate = state.t_rh / state.intervals_per_window
        drop = []
        for row, life in state._twice_life.items():
            state._twice_life[row] = life + 1
            if state._counters.get(row, 0) < rate * (life + 1):
                drop.append(row)
        for row in drop:
            state._counters.pop(row, None)
            state._twice_life.pop(row, None)
        return RefreshAction()
    return RefreshAction()  # twice_ideal keeps every counter: nothing to prune


@dataclass
class SafetyResult:
    flips: int
    mitigation_refreshes: int
    mitigation_ns: float
    auto_refresh_rows: int
    activations: int
    max_pressure: float

    def __int__(self) -> int:
        return self.flips


def build_double_sided_attack(
    chip: SyntheticChip,
    victim_row: int,
    hammers: int,
    t_rc_ns: float,
    start_ns: float = 0.0,
    background_rows: tuple = (),
    background_every: int = 0,
) -> list:
    """(time_ns, physical_row) activations alternating the two rows
    physically adjacent to the logical victim, optionally interleaving
    background activations every `background_every` hammers."""
    from .geometry import aggressor_rows

    scheme = chip.remap
    aggr = [
        scheme.physical_row(a)
        for a in aggressor_rows(victim_row, scheme, chip.geo.rows_per_bank)
    ]
    trace = []
    t = start_ns
    bg_i = 0
    for h in range(hammers):
        for a in aggr:
            trace.append((t, a))
            t += t_rc_ns
        if background_every and (h + 1) % background_every == 0:
            trace.append((t, background_rows[bg_i % len(background_rows)]))
            bg_i += 1
            t += t_rc_ns
    return trace


def evaluate_safety(
    chip: SyntheticChip,
    state: MitigationState,
    attack_trace,
    rng: np.random.Generator,
    flat_bank: int = 0,
) -> SafetyResult:
    """Replay activations through the mechanism and the chip's thresholds.

    Flips are deterministic here: a victim cell flips once its row's
    un-refreshed adjacent-activation pressure (half a hammer per adjacent
    activation) reaches the cell's threshold. Each cell is counted once.
    The regular refresh schedule runs alongside, one tick per refresh
    interval walking the rows round-robin; the shrunken-window mechanism
    replaces that schedule with its own and owns the refresh accounting.
    """
    geo = chip.geo
    phys_rows = geo.rows_per_bank
    logical = None
    if chip.remap.kind == "paired":
        phys_rows //= 2
        logical = chip.remap.logical_rows

    thr: dict = {}

    def thresholds_for(prow: int):
        if prow in thr:
            return thr[prow]
        rows = logical(prow) if logical else (prow,)
        vals = []
        for lr in rows:
            sl = chip.hammer_cells_in_row(flat_bank, lr)
            vals.extend(chip.hm_threshold[sl].tolist())
        vals.sort()
        thr[prow] = vals
        return vals

    pressure: dict = {}
    crossed: dict = {}
    max_crossed: dict = {}

    if state.kind is MitigationKind.INCREASED_REFRESH:
        window_ns = state.refresh_window_ns
        schedule_is_mitigation = True
    else:
        window_ns = state.t_refw_ns
        schedule_is_mitigation = False
    tick_ns = window_ns / state.intervals_per_window
    rows_per_tick = phys_rows / state.intervals_per_window

    mitigation_ns = 0.0
    auto_rows = 0
    rr_next = 0
    rr_carry = 0.0
    next_tick = tick_ns
    max_pressure = 0.0
    n_acts = 0

    def refresh_row(prow: int):
        nonlocal max_pressure
        if prow in pressure:
            max_pressure = max(max_pressure, pressure[prow])
        pressure.pop(prow, None)
        crossed.pop(prow, None)
        state.note_refreshed(prow)

    def bump(prow: int):
        p = pressure.get(prow, 0.0) + ADJACENT_PRESSURE
        pressure[prow] = p
        vals = thresholds_for(prow)
        if vals:
            c = crossed.get(prow, 0)
            if c < len(vals) and p >= vals[c]:
                c = bisect_right(vals, p)
                crossed[prow] = c
                if c > max_crossed.get(prow, 0):
                    max_crossed[prow] = c

    for now_ns, row in attack_trace:
        while next_tick <= now_ns:
            act = on_refresh_tick(state, next_tick, rng)
            if act.rows:
                mitigation_ns += act.cost_ns
                for r in act.rows:
                    refresh_row(r)
            rr_carry += rows_per_tick
            while rr_carry >= 1.0:
                refresh_row(rr_next)
                auto_rows += 1
                if schedule_is_mitigation:
                    state.mitigation_refreshes += 1
                    mitigation_ns += state.t_rc_ns
                rr_next = (rr_next + 1) % phys_rows
                rr_carry -= 1.0
            next_tick += tick_ns
        n_acts += 1
        refresh_row(row)  # an activation restores the row's own cells
        for nb in (row - 1, row + 1):
            if 0 <= nb < phys_rows:
                bump(nb)
        act = on_activate(state, row, now_ns, rng)
        if act.rows:
            mitigation_ns += act.cost_ns
            for r in act.rows:
                refresh_row(r)

    for prow, p in pressure.items():
        max_pressure = max(max_pressure, p)
    flips = sum(max_crossed.values())
    if schedule_is_mitigation:
        auto_rows = 0
    return SafetyResult(
        flips=flips,
        mitigation_refreshes=state.mitigation_refreshes,
        mitigation_ns=mitigation_ns,
        auto_refresh_rows=auto_rows,
        activations=n_acts,
        max_pressure=max_pressure,
    )
