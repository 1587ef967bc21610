"""dramlab: a desk-scale DRAM timing-margin laboratory.

Synthesizes per-chip fault maps from manufacturer statistics, reproduces the
characterization methodology (activation-failure sweeps, disturbance sweeps),
and builds four mechanisms on top of the resulting profiles: reduced-latency
access policies, a latency-based physical unclonable function, a runtime
true-random-number generator, and a suite of row-disturbance mitigations
evaluated in a trace-driven bank-timing simulator.
"""

__version__ = "0.1.0"

from .geometry import (
    DramGeometry,
    TimingParams,
    Location,
    RowRemapScheme,
    IDENTITY_REMAP,
    PAIRED_REMAP,
    decode_address,
    encode_address,
    aggressor_rows,
    geometry_preset,
    timing_preset,
)
from .chipsynth import (
    DataPattern,
    ManufacturerProfile,
    SyntheticChip,
    manufacturer_profile,
    synthesize_chip,
    sample_activation_read,
    sample_hammer,
    apply_on_die_ecc,
)
