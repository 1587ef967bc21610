"""Shared fixtures: small chips that keep the suite fast but exercise every
mechanism. Session scope because synthesis dominates test runtime."""
import numpy as np
import pytest

from dramlab.characterize import WeakColumnProfile
from dramlab.chipsynth import manufacturer_profile, synthesize_chip
from dramlab.geometry import DramGeometry, geometry_preset, timing_preset


@pytest.fixture(scope="session")
def geo_two_bank():
    return DramGeometry(
        banks_per_rank=2, rows_per_bank=2048, rows_per_subarray=1024,
        row_size_bytes=2048, cacheline_bytes=32,
    )


@pytest.fixture(scope="session")
def chip_a(geo_two_bank):
    return synthesize_chip(manufacturer_profile("A", "lpddr4-1x"), geo_two_bank, seed=7)


@pytest.fixture(scope="session")
def weak_profile(chip_a):
    return WeakColumnProfile.from_chip(chip_a)


@pytest.fixture(scope="session")
def geo_hammer():
    return DramGeometry(
        banks_per_rank=1, rows_per_bank=1024, rows_per_subarray=512,
        row_size_bytes=2048, cacheline_bytes=32,
    )


@pytest.fixture(scope="session")
def chip_hammer(geo_hammer):
    prof = manufacturer_profile("A", "ddr4-new", hc_first_min=2000,
                                hammer_cell_per_bit=3e-4)
    return synthesize_chip(prof, geo_hammer, seed=5)


@pytest.fixture(scope="session")
def timing_lp():
    return timing_preset("lpddr4")


@pytest.fixture(scope="session")
def geo_lp_small():
    return geometry_preset("lpddr4", channels=1, rows_per_bank=2048)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
