import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dramlab import characterize as ch
from dramlab import chipsynth as cs
from dramlab.errors import ConfigError


def test_no_failures_at_safe_trcd(chip_a):
    bm = ch.run_activation_failure_test(
        chip_a, cs.DataPattern.SOLID1, cs.SAFE_TRCD_NS, 50.0, 4,
        np.random.default_rng(0))
    assert len(bm) == 0


def test_failures_present_at_reduced_trcd(chip_a):
    bm = ch.run_activation_failure_test(
        chip_a, cs.DataPattern.SOLID1, 10.0, 50.0, 4, np.random.default_rng(0))
    assert len(bm) > 0


def test_test_delay_must_be_reduced(chip_a):
    with pytest.raises(ValueError):
        ch.run_activation_failure_test(
            chip_a, cs.DataPattern.SOLID1, 18.0, 50.0, 1, np.random.default_rng(0))


def test_failures_only_in_weak_columns(chip_a):
    geo = chip_a.geo
    bm = ch.run_activation_failure_test(
        chip_a, cs.DataPattern.SOLID1, 10.0, 50.0, 4, np.random.default_rng(1))
    weak = set(chip_a.weak_columns)
    for (bank, row, col, bit) in bm.coords:
        assert (bank, row // geo.rows_per_subarray, col) in weak


def test_weak_profile_from_chip_matches_ground_truth(chip_a, weak_profile):
    assert weak_profile.triples() == set(chip_a.weak_columns)
    assert weak_profile.weak_fraction() == pytest.approx(
        len(chip_a.weak_columns)
        / (chip_a.geo.banks_total * chip_a.geo.subarrays_per_bank
           * chip_a.geo.cachelines_per_row))


def test_weak_profile_from_bitmap_subset_of_truth(chip_a, weak_profile):
    bm = ch.run_activation_failure_test(
        chip_a, cs.DataPattern.SOLID1, 10.0, 50.0, 8, np.random.default_rng(2))
    measured = ch.WeakColumnProfile.from_bitmap(bm)
    assert measured.triples() <= weak_profile.triples()
    assert measured.triples()


def test_is_weak_and_column_weak_anywhere(chip_a, weak_profile):
    geo = chip_a.geo
    b, s, c = next(iter(sorted(chip_a.weak_columns)))
    assert weak_profile.is_weak(b, s, c)
    anywhere = weak_profile.column_weak_anywhere(b)
    assert anywhere.shape == (geo.cachelines_per_row,)
    assert anywhere[c]


def test_build_weak_profile_stops_and_is_sound(chip_hammer):
    profile, passes = ch.build_weak_profile(
        chip_hammer, [cs.DataPattern.SOLID1], [50.0], np.random.default_rng(0))
    assert 1 <= passes <= ch.PROFILE_ITERATION_CAP
    truth = set(chip_hammer.weak_columns)
    found = profile.triples()
    assert found <= truth
    assert found


def test_coverage_fractions(chip_a):
    bitmaps = {}
    rng = np.random.default_rng(3)
    for p in (cs.DataPattern.SOLID0, cs.DataPattern.SOLID1):
        bitmaps[p] = ch.run_activation_failure_test(chip_a, p, 10.0, 50.0, 4, rng)
    cov = ch.coverage(bitmaps)
    assert set(cov) == {cs.DataPattern.SOLID0, cs.DataPattern.SOLID1}
    for v in cov.values():
        assert 0.0 <= v <= 1.0
    assert max(cov.values()) > 0
    with pytest.raises(ValueError):
        ch.coverage({})


def test_fprob_helper():
    assert ch.fprob([3, 1], iterations=4) == pytest.approx(0.5)
    assert ch.fprob([0, 0], iterations=10) == 0.0
    assert ch.fprob([2], iterations=2, cells_per_bitline=4) == pytest.approx(0.25)


def test_jaccard_known_values():
    assert ch.jaccard({1, 2}, {1, 2}) == 1.0
    assert ch.jaccard({1, 2}, {3, 4}) == 0.0
    assert ch.jaccard({1, 2, 3}, {2, 3, 4}) == pytest.approx(0.5)
    # two identical (even empty) sets agree perfectly
    assert ch.jaccard(set(), set()) == 1.0


@settings(max_examples=80, deadline=None)
@given(st.sets(st.integers(0, 30)), st.sets(st.integers(0, 30)))
def test_jaccard_properties(a, b):
    j = ch.jaccard(a, b)
    assert 0.0 <= j <= 1.0
    assert j == ch.jaccard(b, a)
    if a == b:
        assert j == 1.0
    if (a or b) and not (a & b):
        assert j == 0.0


def test_locate_hc_first_close_to_model_min(chip_hammer):
    loc = ch.locate_hc_first(chip_hammer, start=500, rel_tol=0.05)
    tmin = float(chip_hammer.hm_threshold.min())
    assert abs(loc - tmin) / tmin <= 0.06


def test_hammer_sweep_inclusion_and_extract(chip_hammer):
    pat = chip_hammer.profile.worst_hammer_pattern
    sweep = [1000, 2000, 4000, 8000, 16000]
    res = ch.run_rowhammer_characterization(
        chip_hammer, [pat], sweep, np.random.default_rng(4),
        deterministic=True, ecc=False)
    prev = set()
    for hc in sweep:
        cur = res[(pat, hc)].coords
        assert prev <= cur
        prev = cur
    assert len(res[(pat, 1000)]) == 0  # below the planted minimum threshold
    assert len(res[(pat, 16000)]) > 0
    hp = ch.extract_hc_profile(res)
    assert hp.rowhammerable
    assert hp.hc_first == 2000
    assert hp.flip_counts[2000] >= 1
    assert hp.hc_second is None or hp.hc_second >= hp.hc_first


def test_extract_not_rowhammerable(chip_hammer):
    pat = chip_hammer.profile.worst_hammer_pattern
    res = ch.run_rowhammer_characterization(
        chip_hammer, [pat], [500, 1000], np.random.default_rng(5),
        deterministic=True, ecc=False)
    hp = ch.extract_hc_profile(res)
    assert not hp.rowhammerable
    assert hp.hc_first is None


def test_hammer_window_gate(chip_hammer):
    pat = chip_hammer.profile.worst_hammer_pattern
    with pytest.raises(ConfigError):
        ch.run_rowhammer_characterization(
            chip_hammer, [pat], [10**9], np.random.default_rng(0))


def test_interior_victim_rows_avoid_edges(chip_hammer):
    rows = list(ch.interior_victim_rows(chip_hammer))
    assert rows
    d = chip_hammer.remap.aggressor_distance
    for r in rows:
        assert d <= r < chip_hammer.geo.rows_per_bank - d


def test_flips_even_offsets_never_aggressors(chip_hammer):
    pat = chip_hammer.profile.worst_hammer_pattern
    victim = 322  # planted minimum-threshold row
    flips = cs.sample_hammer(chip_hammer, victim, 300_000,
                             np.random.default_rng(6), pattern=pat)
    assert flips
    rows = {row for (_, row, _, _) in flips}
    assert all((row - victim) % 2 == 0 and abs(row - victim) <= 6 for row in rows)
    assert victim - 1 not in rows and victim + 1 not in rows
