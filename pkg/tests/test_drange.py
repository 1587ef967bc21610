import numpy as np
import pytest

from dramlab import drange, persistcli
from dramlab.errors import ConfigError, ProfileCorruptionError, RngUnavailableError


@pytest.fixture(scope="module")
def cmap(chip_a):
    return drange.identify_rng_cells(chip_a, reads=240, rng=np.random.default_rng(3))


@pytest.fixture(scope="module")
def stream(chip_a, cmap):
    return drange.generate_bits(chip_a, cmap, 200_000, np.random.default_rng(9))


def test_min_reads_gate(chip_a):
    with pytest.raises(ConfigError):
        drange.identify_rng_cells(chip_a, reads=drange.MIN_READS - 1)


def test_identify_deterministic(chip_a, cmap):
    again = drange.identify_rng_cells(chip_a, reads=240, rng=np.random.default_rng(3))
    assert again.entries == cmap.entries
    other = drange.identify_rng_cells(chip_a, reads=240, rng=np.random.default_rng(4))
    assert other.geo_key == cmap.geo_key


def test_map_shape(chip_a, cmap):
    assert set(cmap.banks) <= set(range(chip_a.geo.banks_total))
    assert cmap.entries, "no bank qualified"
    for bank, (first, second) in cmap.entries.items():
        assert first.flat_bank == second.flat_bank == bank
        assert first.row != second.row
        assert 1 <= len(first.bits) <= drange.WORD_DENSITY_MAX
        assert 1 <= len(second.bits) <= drange.WORD_DENSITY_MAX


def test_mapped_cells_are_coin_cells(chip_a, cmap):
    # every mapped bit must trace back to a cell whose failure probability
    # is exactly one half at the reference corner
    geo = chip_a.geo
    wpc = geo.cacheline_bits // geo.word_bits
    from dramlab.chipsynth import activation_flip_probabilities
    for bank, pair in cmap.entries.items():
        for wc in pair:
            col = wc.word // wpc
            sl = chip_a.cells_in_cacheline(bank, wc.row, col)
            for b in wc.bits:
                cl_bit = (wc.word % wpc) * geo.word_bits + b
                hit = np.flatnonzero(chip_a.ac_bit[sl] == cl_bit)
                assert hit.size == 1
                p = activation_flip_probabilities(
                    chip_a, np.array([sl.start + int(hit[0])]),
                    cmap.trcd_ns, cmap.temperature_c, None)
                assert p[0] == 0.5


def test_generate_deterministic(chip_a, cmap, stream):
    again = drange.generate_bits(chip_a, cmap, 200_000, np.random.default_rng(9))
    assert np.array_equal(again.bits, stream.bits)
    assert len(stream) == 200_000
    assert stream.emission_order


def test_generate_edge_cases(chip_a, cmap):
    with pytest.raises(ValueError):
        drange.generate_bits(chip_a, cmap, -1)
    empty = drange.generate_bits(chip_a, cmap, 0)
    assert len(empty) == 0
    bare = drange.RngCellMap(entries={}, geo_key=cmap.geo_key,
                             temperature_c=cmap.temperature_c,
                             reads=cmap.reads, trcd_ns=cmap.trcd_ns)
    with pytest.raises(RngUnavailableError):
        drange.generate_bits(chip_a, bare, 10)


def test_source_of_loops(stream):
    n = len(stream.emission_order)
    assert stream.source_of(0) == stream.emission_order[0]
    assert stream.source_of(n + 2) == stream.emission_order[2]


def test_report_on_stream(stream):
    report = drange.randomness_report(stream)
    assert report.all_passed
    assert report.entropy_per_bit >= drange.ENTROPY_FLOOR
    assert set(report.tests) == {"monobit", "runs", "block_frequency", "longest_run"}


def test_report_rejects_constant_stream():
    fake = drange.Bitstream(np.zeros(10_000, dtype=np.uint8), 0, 50.0, ((0, 0, 0, 0),))
    report = drange.randomness_report(fake)
    assert not report.tests["monobit"].passed
    assert not report.entropy_ok
    assert not report.all_passed


def test_report_rejects_alternating_stream():
    bits = np.tile(np.array([0, 1], dtype=np.uint8), 5_000)
    fake = drange.Bitstream(bits, 0, 50.0, ((0, 0, 0, 0),))
    report = drange.randomness_report(fake)
    # a perfect 0101 pattern is balanced but has far too many runs
    assert report.tests["monobit"].passed
    assert not report.tests["runs"].passed


def test_report_accepts_fair_coin():
    bits = (np.random.default_rng(0).random(1_000_000) < 0.5).astype(np.uint8)
    report = drange.randomness_report(drange.Bitstream(bits, 0, 50.0, ((0, 0, 0, 0),)))
    assert report.all_passed


def test_report_needs_bits():
    with pytest.raises(ValueError):
        drange.randomness_report(drange.Bitstream(
            np.zeros(10, dtype=np.uint8), 0, 50.0, ((0, 0, 0, 0),)))


def test_shannon_entropy_values():
    assert drange.shannon_entropy(np.zeros(100, dtype=np.uint8)) == 0.0
    assert drange.shannon_entropy(np.ones(100, dtype=np.uint8)) == 0.0
    half = np.tile(np.array([0, 1], dtype=np.uint8), 50)
    assert drange.shannon_entropy(half) == 1.0


def test_throughput_additive_over_banks(cmap):
    loop = drange.loop_runtime_ns(50.0, len(cmap.banks), 0.625)
    totals = [drange.throughput_estimate(cmap, k, loop)
              for k in range(len(cmap.banks) + 1)]
    assert totals[0] == 0.0
    per_bank = [drange.bank_rate(cmap, b, loop) if hasattr(drange, "bank_rate")
                else cmap.bank_bits(b) / loop * 1e9 for b in cmap.banks]
    for k in range(1, len(totals)):
        assert totals[k] == pytest.approx(totals[k - 1] + per_bank[k - 1])


def test_throughput_validation(cmap):
    with pytest.raises(ConfigError):
        drange.throughput_estimate(cmap, len(cmap.entries) + 1, 100.0)
    with pytest.raises(ValueError):
        drange.throughput_estimate(cmap, 1, 0.0)


def test_loop_runtime_regimes():
    # few banks: t_RC bound; many banks: command-spacing bound
    assert drange.loop_runtime_ns(50.0, 1, 0.625) == 100.0
    assert drange.loop_runtime_ns(50.0, 32, 0.625) == 2 * 32 * 4 * 0.625


def test_latency_estimate(cmap):
    per_half = cmap.bits_per_half
    assert per_half > 0
    one = drange.latency_estimate_ns(1, per_half, 50.0)
    assert one == 50.0
    assert drange.latency_estimate_ns(per_half + 1, per_half, 50.0) == 100.0
    with pytest.raises(RngUnavailableError):
        drange.latency_estimate_ns(10, 0, 50.0)


def test_export_round_trip(stream, tmp_path):
    path = tmp_path / "stream.bin"
    meta = drange.export_bitstream(stream, path)
    assert meta["n_bits"] == len(stream)
    back = persistcli.load_bitstream(path)
    assert np.array_equal(back.bits, stream.bits)
    assert back.chip_seed == stream.chip_seed
    assert back.emission_order == stream.emission_order


def test_export_detects_corruption(stream, tmp_path):
    path = tmp_path / "stream.bin"
    drange.export_bitstream(stream, path)
    blob = bytearray(path.read_bytes())
    blob[0] ^= 0xFF
    path.write_bytes(bytes(blob))
    with pytest.raises(ProfileCorruptionError):
        persistcli.load_bitstream(path)
