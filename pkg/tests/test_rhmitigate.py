import math

import numpy as np
import pytest

from dramlab import rhmitigate as rh
from dramlab.errors import ConfigError, UnsupportedMechanismError

HC = 2000  # the planted minimum threshold of the chip_hammer fixture
VICTIM = 322


def _attack(chip, hammers, victim=VICTIM, **kw):
    return rh.build_double_sided_attack(chip, victim, hammers, t_rc_ns=50.0, **kw)


def test_para_probability_decreasing_in_threshold():
    ps = [rh.para_probability(hc) for hc in (1000, 2000, 8000, 32768)]
    assert all(a > b for a, b in zip(ps, ps[1:]))
    assert 0.0 < ps[-1] < ps[0] < 1.0


def _run_bound(p, hc_first, t_rc_ns=50.0, hours=1.0):
    n = hours * rh.HOUR_NS / t_rc_ns / 2.0
    log_q = 2.0 * math.log1p(-p)
    tail = math.exp(hc_first * log_q)
    return tail + max(n - hc_first, 0.0) * -math.expm1(log_q) * tail


def test_para_probability_is_tight():
    for hc in (2000, 32768):
        p = rh.para_probability(hc, ber_target=1e-15)
        assert _run_bound(p, hc) <= 1e-15
        assert _run_bound(0.999 * p, hc) > 1e-15


def test_para_probability_validation():
    with pytest.raises(ConfigError):
        rh.para_probability(1)
    with pytest.raises(ConfigError):
        rh.para_probability(2000, ber_target=0.0)
    with pytest.raises(ConfigError):
        rh.para_probability(2000, ber_target=1.0)


def test_increased_refresh_window():
    assert rh.increased_refresh_window(32768, 50.0) == 32768 * 50.0
    assert rh.increased_refresh_window(65536, 45.0) == 65536 * 45.0
    with pytest.raises(UnsupportedMechanismError):
        rh.increased_refresh_window(32767, 50.0)
    with pytest.raises(ConfigError):
        rh.increased_refresh_window(0, 50.0)


def test_make_mitigation_gates():
    with pytest.raises(ConfigError):
        rh.make_mitigation("ideal", 1)
    with pytest.raises(ValueError):
        rh.make_mitigation("no-such-mechanism", HC)
    # the counter table needs t_RH at or above one count per refresh interval
    with pytest.raises(ConfigError):
        rh.make_mitigation("twice", 16384)
    ok = rh.make_mitigation("twice", 32768)
    assert ok.t_rh == 8192.0
    assert rh.make_mitigation("twice", 131072).t_rh == 32768.0
    # the idealized table has no such floor
    assert rh.make_mitigation("twice_ideal", HC).t_rh == HC / 4.0
    with pytest.raises(UnsupportedMechanismError):
        rh.make_mitigation("increased_refresh", rh.INCREASED_REFRESH_MIN_HC - 1)
    assert rh.make_mitigation(
        "increased_refresh", rh.INCREASED_REFRESH_MIN_HC
    ).refresh_window_ns == rh.INCREASED_REFRESH_MIN_HC * 50.0


def test_prohit_and_mrloc_operating_point():
    params = rh.ProhitParams(p_insert=0.1, p_evict=0.5, p_promote=0.2)
    with pytest.raises(UnsupportedMechanismError):
        rh.make_mitigation("prohit", HC + 1, prohit=params)
    with pytest.raises(ConfigError):
        rh.make_mitigation("prohit", HC)  # no built-in defaults
    st = rh.make_mitigation("prohit", HC, prohit=params)
    assert st.prohit is params
    with pytest.raises(UnsupportedMechanismError):
        rh.make_mitigation("mrloc", HC - 1)
    st = rh.make_mitigation("mrloc", HC)
    assert st.mrloc == rh.MrlocParams()


def test_params_validation():
    with pytest.raises(ConfigError):
        rh.ProhitParams(p_insert=1.5, p_evict=0.5, p_promote=0.2)
    with pytest.raises(ConfigError):
        rh.ProhitParams(p_insert=0.1, p_evict=0.5, p_promote=0.2, hot_size=0)
    with pytest.raises(ConfigError):
        rh.MrlocParams(queue_size=0)
    with pytest.raises(ConfigError):
        rh.MrlocParams(p_min=0.5, p_max=0.1)


def test_ideal_fires_just_before_threshold():
    state = rh.make_mitigation("ideal", 10)
    rng = np.random.default_rng(0)
    for i in range(1, 9):
        assert rh.on_activate(state, 100, i * 50.0, rng).rows == ()
    act = rh.on_activate(state, 100, 9 * 50.0, rng)
    assert set(act.rows) == {99, 101}
    assert act.cost_ns == 2 * 50.0
    assert state.mitigation_refreshes == 2


def test_para_unit_probability_refreshes_both_neighbors():
    state = rh.MitigationState(kind=rh.MitigationKind.PARA, hc_first=HC, para_p=1.0)
    act = rh.on_activate(state, 5, 0.0, np.random.default_rng(0))
    assert set(act.rows) == {4, 6}


def test_none_never_acts():
    state = rh.make_mitigation("none", HC)
    rng = np.random.default_rng(0)
    for i in range(50):
        assert rh.on_activate(state, 7, i * 50.0, rng).rows == ()
    assert state.mitigation_refreshes == 0


def test_prohit_refreshes_hottest_on_tick():
    params = rh.ProhitParams(p_insert=1.0, p_evict=1.0, p_promote=1.0)
    state = rh.make_mitigation("prohit", HC, prohit=params)
    rng = np.random.default_rng(0)
    rh.on_activate(state, 100, 0.0, rng)   # victims enter the cold table
    rh.on_activate(state, 100, 50.0, rng)  # and get promoted to hot
    assert state._hot
    act = rh.on_refresh_tick(state, 100.0, rng)
    assert len(act.rows) == 1
    assert act.rows[0] in (99, 101)
    # an empty table does no work
    empty = rh.make_mitigation("prohit", HC, prohit=params)
    assert rh.on_refresh_tick(empty, 0.0, rng).rows == ()


def test_twice_prunes_slow_rows_but_ideal_keeps_them():
    rng = np.random.default_rng(0)
    state = rh.make_mitigation("twice", 65536)
    rh.on_activate(state, 100, 0.0, rng)
    assert 99 in state._counters
    # one count after a full interval is far below the required pace
    rh.on_refresh_tick(state, 1.0, rng)
    assert 99 not in state._counters
    ideal = rh.make_mitigation("twice_ideal", 65536)
    rh.on_activate(ideal, 100, 0.0, rng)
    rh.on_refresh_tick(ideal, 1.0, rng)
    assert 99 in ideal._counters


def test_attack_trace_shape(chip_hammer):
    trace = _attack(chip_hammer, 10)
    assert len(trace) == 20
    rows = {r for _, r in trace}
    assert rows == {VICTIM - 1, VICTIM + 1}
    times = [t for t, _ in trace]
    assert times == sorted(times)
    assert times[1] - times[0] == 50.0
    bg = _attack(chip_hammer, 10, background_rows=(5,), background_every=2)
    assert len(bg) == 25
    assert sum(1 for _, r in bg if r == 5) == 5


def test_unmitigated_attack_flips(chip_hammer):
    state = rh.make_mitigation("none", HC)
    res = rh.evaluate_safety(chip_hammer, state, _attack(chip_hammer, 3 * HC),
                             np.random.default_rng(1))
    assert res.flips > 0
    assert res.activations == 6 * HC
    assert res.mitigation_refreshes == 0
    assert res.auto_refresh_rows > 0
    assert res.max_pressure >= HC
    assert int(res) == res.flips


def test_below_threshold_attack_is_safe(chip_hammer):
    state = rh.make_mitigation("none", HC)
    res = rh.evaluate_safety(chip_hammer, state, _attack(chip_hammer, HC // 2 - 10),
                             np.random.default_rng(1))
    assert res.flips == 0


def test_counter_mechanisms_stop_the_attack(chip_hammer):
    trace = _attack(chip_hammer, 3 * HC)
    results = {}
    for kind in ("ideal", "twice_ideal", "para"):
        state = rh.make_mitigation(kind, HC)
        results[kind] = rh.evaluate_safety(
            chip_hammer, state, trace, np.random.default_rng(2))
    for kind, res in results.items():
        assert res.flips == 0, kind
        assert res.mitigation_refreshes > 0, kind
    # the perfect counter waits until the last safe moment, the conservative
    # table refreshes at a quarter of the threshold
    assert results["ideal"].mitigation_refreshes <= results["twice_ideal"].mitigation_refreshes


def test_para_refreshes_grow_as_threshold_falls(chip_hammer):
    trace = _attack(chip_hammer, 2000)
    counts = []
    for hc in (8000, 4000, 2000):
        state = rh.make_mitigation("para", hc)
        counts.append(rh.evaluate_safety(
            chip_hammer, state, trace, np.random.default_rng(3)).mitigation_refreshes)
    assert counts[0] < counts[1] < counts[2]


def test_increased_refresh_owns_the_schedule(chip_hammer):
    state = rh.make_mitigation("increased_refresh", 32768)
    res = rh.evaluate_safety(chip_hammer, state, _attack(chip_hammer, 2000),
                             np.random.default_rng(4))
    assert res.auto_refresh_rows == 0
    assert res.mitigation_refreshes > 0
    assert res.mitigation_ns == res.mitigation_refreshes * 50.0


def test_refresh_action_defaults():
    act = rh.RefreshAction()
    assert act.rows == ()
    assert act.cost_ns == 0.0
