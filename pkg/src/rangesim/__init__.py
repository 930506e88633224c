"""Multiuser initial-ranging receiver for OFDMA uplinks, plus its simulator.

The package splits into four layers: :mod:`rangesim.cxmath` (small dense
complex linear algebra), :mod:`rangesim.airmodel` (ground truth and uplink
signal synthesis), :mod:`rangesim.ranger` (the subspace-based detector and
estimators) and :mod:`rangesim.simlab` (Monte Carlo harness, metrics, CSV
output).  The ``rangesim`` console script in :mod:`rangesim.cli` drives
sweeps from flat config files.
"""

from .airmodel import (
    ChannelProfile,
    TileLayout,
    TileObservations,
    UserTruth,
    cfo_attenuation,
    channel_freq_response,
    code_entry,
    code_matrix,
    draw_channel,
    effective_offsets,
    synthesize_model_mode,
    synthesize_waveform_mode,
    tile_average_response,
)
from .cxmath import (
    HermitianSpectrum,
    forward_backward,
    general_eigenvalues,
    hermitian_evd,
    ls_rotation,
)
from .errors import (
    ConfigError,
    DimensionError,
    NumericalError,
    RangingError,
    RankDeficiencyError,
    ValidationError,
)
from .ranger import (
    FreqEstimate,
    RangerConfig,
    RangingReport,
    TimingEstimate,
    detect_codes,
    esprit_phases,
    estimate_num_codes,
    freq_snapshots,
    map_cfo,
    map_timing,
    range_subchannel,
    sample_corr,
    tile_snapshots,
)
from .simlab import (
    MetricsRow,
    SimConfig,
    TrialResult,
    compute_metrics,
    draw_users,
    emit_csv,
    esprit_periodogram_gap,
    load_config,
    noise_variance,
    oracle_periodogram,
    run_sweep,
    run_trial,
    timing_error_event,
)

__version__ = "0.1.0"
