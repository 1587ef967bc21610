import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dramlab.errors import EdgeRowError
from dramlab.geometry import (
    GEOMETRY_PRESET_NAMES,
    IDENTITY_REMAP,
    PAIRED_REMAP,
    DramGeometry,
    Location,
    RowRemapScheme,
    aggressor_rows,
    decode_address,
    encode_address,
    geometry_preset,
    make_location,
    timing_preset,
)


def test_preset_names():
    assert set(GEOMETRY_PRESET_NAMES) == {"ddr3", "ddr4", "lpddr4"}


def test_lpddr4_preset_exact():
    g = geometry_preset("lpddr4")
    assert g.channels == 2 and g.banks_per_rank == 8
    assert g.rows_per_bank == 65536 and g.rows_per_subarray == 1024
    assert g.row_size_bytes == 2048 and g.cacheline_bytes == 32
    assert g.banks_total == 16
    assert g.cachelines_per_row == 64
    assert g.cacheline_bits == 256


def test_ddr3_ddr4_presets():
    d3 = geometry_preset("ddr3")
    assert d3.banks_total == 8 and d3.rows_per_bank == 32768
    assert d3.rows_per_subarray == 512 and d3.row_size_bytes == 8192
    assert d3.cacheline_bytes == 64
    d4 = geometry_preset("ddr4")
    assert d4.banks_total == 16 and d4.rows_per_bank == 16384


def test_lpddr4_timing_exact():
    t = timing_preset("lpddr4")
    assert t.t_rcd_ns == 18.125
    assert t.t_ras_ns == 41.875
    assert t.t_rp_ns == 18.125
    assert t.t_rc_ns == 60.0
    assert t.clock_period_ns == 0.625
    assert t.t_refw_ns == 32e6
    assert t.t_refi_ns == pytest.approx(3906.25)
    # tRCD lands on a whole cycle count
    assert t.t_rcd_ns / t.clock_period_ns == 29


def test_ddr_timing_presets():
    t3 = timing_preset("ddr3")
    assert (t3.t_rcd_ns, t3.t_ras_ns, t3.t_rp_ns, t3.t_rc_ns) == (13.75, 38.75, 13.75, 52.5)
    assert t3.clock_period_ns == 1.25
    t4 = timing_preset("ddr4")
    assert (t4.t_rcd_ns, t4.t_ras_ns, t4.t_rp_ns, t4.t_rc_ns) == (13.75, 35.0, 15.0, 50.0)


def test_preset_overrides():
    g = geometry_preset("lpddr4", rows_per_bank=4096, channels=1)
    assert g.rows_per_bank == 4096 and g.banks_total == 8
    with pytest.raises(ValueError):
        geometry_preset("lpddr4", rows_per_blah=1)
    with pytest.raises(ValueError):
        geometry_preset("hbm3")


def test_geometry_validation():
    with pytest.raises(ValueError):
        DramGeometry(rows_per_subarray=777)
    with pytest.raises(ValueError):
        DramGeometry(cacheline_bytes=48)
    with pytest.raises(ValueError):
        DramGeometry(channels=0)
    with pytest.raises(ValueError):
        DramGeometry(word_bits=32)


def test_key_identity():
    a = geometry_preset("lpddr4")
    b = geometry_preset("lpddr4")
    c = geometry_preset("lpddr4", rows_per_bank=4096)
    assert a.key() == b.key()
    assert a.key() != c.key()


def test_location_flat_bank():
    g = geometry_preset("lpddr4")
    loc = Location(channel=1, rank=0, bank=3, subarray=0, row=10,
                   column_byte=0, cacheline_index=0)
    assert loc.flat_bank(g) == 1 * 8 + 3


def test_make_location_derives_fields():
    g = geometry_preset("lpddr4")
    loc = make_location(g, bank=2, row=2050, column_byte=70)
    assert loc.subarray == 2050 // g.rows_per_subarray
    assert loc.cacheline_index == 70 // g.cacheline_bytes
    assert loc.bank == 2 and loc.row == 2050


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_address_round_trip(data):
    g = geometry_preset("lpddr4", rows_per_bank=4096)
    loc = make_location(
        g,
        channel=data.draw(st.integers(0, g.channels - 1)),
        bank=data.draw(st.integers(0, g.banks_per_rank - 1)),
        row=data.draw(st.integers(0, g.rows_per_bank - 1)),
        column_byte=data.draw(st.integers(0, g.row_size_bytes - 1)),
    )
    back = decode_address(encode_address(loc, g), g)
    assert back == loc


def test_identity_remap():
    assert IDENTITY_REMAP.physical_row(17) == 17
    assert IDENTITY_REMAP.logical_rows(17) == (17,)
    assert IDENTITY_REMAP.aggressor_distance == 1
    assert IDENTITY_REMAP.physical_rows_per_bank(2048) == 2048


def test_paired_remap():
    assert PAIRED_REMAP.physical_row(6) == 3
    assert PAIRED_REMAP.physical_row(7) == 3
    assert PAIRED_REMAP.logical_rows(3) == (6, 7)
    assert PAIRED_REMAP.aggressor_distance == 2
    assert PAIRED_REMAP.physical_rows_per_bank(2048) == 1024


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([IDENTITY_REMAP, PAIRED_REMAP]))
def test_remap_round_trip(row, scheme):
    assert row in scheme.logical_rows(scheme.physical_row(row))


def test_aggressor_rows_identity():
    assert aggressor_rows(100, IDENTITY_REMAP, 2048) == (99, 101)


def test_aggressor_rows_paired():
    # victim logical 100 lives in physical row 50; physical neighbors 49 and 51
    # map back to logical 98 (pair head) and 102
    lo, hi = aggressor_rows(100, PAIRED_REMAP, 2048)
    assert PAIRED_REMAP.physical_row(lo) == 49
    assert PAIRED_REMAP.physical_row(hi) == 51


def test_aggressor_rows_edge():
    with pytest.raises(EdgeRowError):
        aggressor_rows(0, IDENTITY_REMAP, 2048)
    with pytest.raises(EdgeRowError):
        aggressor_rows(2047, IDENTITY_REMAP, 2048)


def test_capacity():
    g = geometry_preset("lpddr4")
    assert g.capacity_bytes == 2 * 1 * 8 * 65536 * 2048
