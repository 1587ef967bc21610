import numpy as np
import pytest

from dramlab import tracesim as ts
from dramlab.characterize import WeakColumnProfile
from dramlab.errors import TraceParseError
from dramlab.geometry import Location, encode_address
from dramlab.rhmitigate import (
    MitigationKind,
    MitigationState,
    MrlocParams,
    ProhitParams,
    make_mitigation,
)
from dramlab.solar import solar_mode

CLOCK = 0.625
CAS = 18.125
TRCD = 18.125
TRP = 18.125
TRAS = 41.875
BURST = ts.BURST_CYCLES * CLOCK


def _addr(geo, row, col_byte=0, bank=0):
    return encode_address(
        Location(0, 0, bank, row // geo.rows_per_subarray, row, col_byte,
                 col_byte // geo.cacheline_bytes), geo)


def test_hand_computed_schedule(geo_lp_small, timing_lp):
    # one core, one bank: closed read, row hit, conflict, hit, conflict back
    geo = geo_lp_small
    trace = [
        ts.MemRequest(0.0, _addr(geo, 100, 0), False, 0),
        ts.MemRequest(5.0, _addr(geo, 100, 32), False, 0),
        ts.MemRequest(10.0, _addr(geo, 200, 0), False, 0),
        ts.MemRequest(15.0, _addr(geo, 200, 160), False, 0),
        ts.MemRequest(20.0, _addr(geo, 100, 0), False, 0),
    ]
    m = ts.run_trace(trace, geo, timing_lp, rng=np.random.default_rng(0))
    assert m.total_ns == pytest.approx(193.75, abs=1e-9)
    assert m.served == 5
    assert m.row_hits == 2
    assert m.closed_activations == 3
    assert m.bank_busy_ns[0] == pytest.approx(193.75, abs=1e-9)
    assert all(v == 0 for k, v in m.bank_busy_ns.items() if k != 0)
    assert m.mitigation_ns == 0.0
    assert m.bandwidth_overhead == 0.0
    assert m.row_hit_rate == pytest.approx(0.4)


def test_precharge_waits_for_tras(geo_lp_small, timing_lp):
    geo = geo_lp_small
    trace = [
        ts.MemRequest(0.0, _addr(geo, 100), False, 0),
        ts.MemRequest(0.0, _addr(geo, 200), False, 0),
    ]
    m = ts.run_trace(trace, geo, timing_lp, rng=np.random.default_rng(0))
    assert m.total_ns == pytest.approx(TRAS + TRP + TRCD + CAS + BURST, abs=1e-9)


def test_row_hit_skips_activation(geo_lp_small, timing_lp):
    geo = geo_lp_small
    trace = [
        ts.MemRequest(0.0, _addr(geo, 300, 0), False, 0),
        ts.MemRequest(0.0, _addr(geo, 300, 64), False, 0),
    ]
    m = ts.run_trace(trace, geo, timing_lp, rng=np.random.default_rng(0))
    assert m.total_ns == pytest.approx(TRCD + 2 * (CAS + BURST), abs=1e-9)
    assert m.row_hits == 1


@pytest.fixture(scope="module")
def solar_cfgs(chip_a):
    wprof = WeakColumnProfile.from_chip(chip_a)
    return solar_mode("baseline", wprof), solar_mode("solar", wprof), wprof


def test_solar_reduces_strong_column_read(chip_a, timing_lp, solar_cfgs):
    cfg_base, cfg_solar, wprof = solar_cfgs
    geo = chip_a.geo
    strong = int(np.flatnonzero(~wprof.column_weak_anywhere(0))[0])
    one = [ts.MemRequest(0.0, _addr(geo, 50, strong * geo.cacheline_bytes), False, 0)]
    mb = ts.run_trace(one, geo, timing_lp, solar_cfg=cfg_base,
                      rng=np.random.default_rng(0))
    msol = ts.run_trace(one, geo, timing_lp, solar_cfg=cfg_solar,
                        rng=np.random.default_rng(0))
    assert mb.total_ns == pytest.approx(29 * CLOCK + CAS + BURST, abs=1e-9)
    assert msol.total_ns == pytest.approx(18 * CLOCK + CAS + BURST, abs=1e-9)
    assert mb.reduced_read_fraction == 0.0
    assert msol.reduced_read_fraction == 1.0
    assert msol.corrupted_reads == 0


def _trace_set(geo):
    return {
        "streaming": ts.gen_streaming(geo, 1200, n_cores=4, gap_ns=8.0),
        "random": ts.gen_random(geo, 1200, n_cores=4, gap_ns=8.0,
                                rng=np.random.default_rng(1)),
        "biased": ts.gen_first_access_biased(geo, 1200, n_cores=4, gap_ns=8.0,
                                             rng=np.random.default_rng(2)),
        "hammer": ts.gen_hammer_attack(geo, victim_row=1000, hammers=300,
                                       gap_ns=30.0),
    }


def test_solar_never_slower_and_work_conserved(chip_a, timing_lp, solar_cfgs):
    cfg_base, cfg_solar, _ = solar_cfgs
    geo = chip_a.geo
    for name, tr in _trace_set(geo).items():
        base = ts.run_trace(tr, geo, timing_lp, solar_cfg=cfg_base,
                            rng=np.random.default_rng(0))
        sol = ts.run_trace(tr, geo, timing_lp, solar_cfg=cfg_solar,
                           rng=np.random.default_rng(0))
        ncores = len(base.per_core_ipc)
        assert ts.weighted_speedup(base.per_core_ipc, base.per_core_ipc) == \
            pytest.approx(ncores, abs=1e-12)
        assert ts.weighted_speedup_pct(base.per_core_ipc, base.per_core_ipc) == \
            pytest.approx(100.0, abs=1e-9)
        ws = ts.weighted_speedup(sol.per_core_ipc, base.per_core_ipc)
        assert ws >= ncores - 1e-9, name
        assert sol.total_ns <= base.total_ns + 1e-6, name
        # a bank can never be busy longer than the run plus one refresh
        for b, busy in base.bank_busy_ns.items():
            assert busy <= base.total_ns + timing_lp.t_rc_ns + 1e-6, (name, b)


def test_weighted_speedup_validation():
    with pytest.raises(ValueError):
        ts.weighted_speedup({}, {})
    with pytest.raises(ValueError):
        ts.weighted_speedup({0: 1.0}, {1: 1.0})
    with pytest.raises(ValueError):
        ts.weighted_speedup({0: 1.0}, {0: 0.0})


def _factory(kind, timing, hc=2000, **kw):
    return lambda: make_mitigation(
        kind, hc, t_rc_ns=timing.t_rc_ns, t_refw_ns=timing.t_refw_ns,
        t_refi_ns=timing.t_refi_ns, **kw)


def test_mitigation_overhead_ordering(geo_lp_small, timing_lp):
    geo = geo_lp_small
    tr = ts.gen_hammer_attack(geo, victim_row=1000, hammers=500, gap_ns=30.0)
    res = {}
    for label, factory in {
        "none": _factory(MitigationKind.NONE, timing_lp),
        "para": _factory(MitigationKind.PARA, timing_lp),
        "prohit": _factory(MitigationKind.PROHIT, timing_lp,
                           prohit=ProhitParams(p_insert=0.02, p_evict=0.5,
                                               p_promote=0.1)),
        "mrloc": _factory(MitigationKind.MRLOC, timing_lp, mrloc=MrlocParams()),
    }.items():
        res[label] = ts.run_trace(tr, geo, timing_lp, mitigation=factory,
                                  rng=np.random.default_rng(5))
    assert res["none"].bandwidth_overhead == 0.0
    assert res["para"].bandwidth_overhead > 0.0
    assert res["prohit"].bandwidth_overhead <= res["para"].bandwidth_overhead
    assert res["mrloc"].bandwidth_overhead <= res["para"].bandwidth_overhead


def test_ideal_counter_idle_on_light_load(geo_lp_small, timing_lp):
    tr = ts.gen_streaming(geo_lp_small, 1200, n_cores=4, gap_ns=8.0)
    m = ts.run_trace(tr, geo_lp_small, timing_lp,
                     mitigation=_factory(MitigationKind.IDEAL, timing_lp, hc=200_000),
                     rng=np.random.default_rng(5))
    assert m.bandwidth_overhead < 1e-6


def test_para_unit_probability_costs_more(geo_lp_small, timing_lp):
    geo = geo_lp_small
    tr = ts.gen_hammer_attack(geo, victim_row=1000, hammers=500, gap_ns=30.0)
    default = ts.run_trace(tr, geo, timing_lp,
                           mitigation=_factory(MitigationKind.PARA, timing_lp),
                           rng=np.random.default_rng(5))
    always = ts.run_trace(
        tr, geo, timing_lp,
        mitigation=lambda: MitigationState(
            kind=MitigationKind.PARA, hc_first=2000, t_rc_ns=timing_lp.t_rc_ns,
            t_refw_ns=timing_lp.t_refw_ns, t_refi_ns=timing_lp.t_refi_ns,
            para_p=1.0),
        rng=np.random.default_rng(5))
    assert always.bandwidth_overhead > default.bandwidth_overhead


def test_increased_refresh_overhead_matches_schedule(geo_lp_small, timing_lp):
    tr = ts.gen_streaming(geo_lp_small, 1200, n_cores=4, gap_ns=8.0)
    m = ts.run_trace(tr, geo_lp_small, timing_lp,
                     mitigation=_factory(MitigationKind.INCREASED_REFRESH,
                                         timing_lp, hc=32768),
                     rng=np.random.default_rng(5))
    intervals = timing_lp.t_refw_ns / timing_lp.t_refi_ns
    tick = 32768 * timing_lp.t_rc_ns / intervals
    assert m.bandwidth_overhead == pytest.approx(timing_lp.t_rc_ns / tick, abs=0.02)
    assert m.auto_refresh_ns == 0.0


def test_determinism(geo_lp_small, timing_lp):
    geo = geo_lp_small
    tr = ts.gen_hammer_attack(geo, victim_row=1000, hammers=300, gap_ns=30.0)
    runs = [ts.run_trace(tr, geo, timing_lp,
                         mitigation=_factory(MitigationKind.PARA, timing_lp),
                         rng=np.random.default_rng(9)) for _ in range(2)]
    assert runs[0].total_ns == runs[1].total_ns
    assert runs[0].mitigation_ns == runs[1].mitigation_ns
    assert runs[0].per_core_served == runs[1].per_core_served


def test_parse_trace_good_lines():
    reqs = ts.parse_trace(["# comment", "", "0.0 0 R 100", "5.0 0 W 1a0"])
    assert len(reqs) == 2
    assert reqs[0].address == 0x100 and not reqs[0].is_write
    assert reqs[1].address == 0x1A0 and reqs[1].is_write


@pytest.mark.parametrize("lines,fragment,line_no", [
    (["0.0 0 R"], "4 fields", 1),
    (["0.0 0 X 100"], "R or W", 1),
    (["zz 0 R 100"], "", 1),
    (["0.0 0 R 100", "5.0 0 R 100", "1.0 0 R 100"], "decreases", 3),
])
def test_parse_trace_errors(lines, fragment, line_no):
    with pytest.raises(TraceParseError) as err:
        ts.parse_trace(lines)
    assert fragment in str(err.value)
    assert err.value.line_no == line_no


def test_trace_file_round_trip(geo_lp_small, tmp_path):
    geo = geo_lp_small
    trace = [
        ts.MemRequest(0.0, _addr(geo, 100, 0), False, 0),
        ts.MemRequest(7.5, _addr(geo, 200, 64), True, 1),
    ]
    path = tmp_path / "t.trace"
    ts.write_trace(path, trace)
    back = ts.parse_trace(str(path))
    assert [(r.arrival_ns, r.address, r.is_write, r.core_id) for r in back] == \
        [(r.arrival_ns, r.address, r.is_write, r.core_id) for r in trace]


def test_request_validation():
    with pytest.raises(ValueError):
        ts.MemRequest(-1.0, 0, False, 0)
    with pytest.raises(ValueError):
        ts.MemRequest(0.0, 0, False, -1)


def test_hammer_generator_shape(geo_lp_small):
    with pytest.raises(ValueError):
        ts.gen_hammer_attack(geo_lp_small, victim_row=0, hammers=1)
    tr = ts.gen_hammer_attack(geo_lp_small, victim_row=100, hammers=5)
    assert len(tr) == 10
    assert all(not r.is_write for r in tr)
