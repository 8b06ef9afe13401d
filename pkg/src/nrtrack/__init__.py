"""5G NR synchronization-signal positioning simulator for high-speed trains.

Seedable end-to-end pipeline: SS-burst waveform synthesis, beam-swept radio
channel, correlation-based TOA/AOD estimation and EKF tracking, with error
statistics exported as CSV.
"""

from .geometry import (
    SPEED_OF_LIGHT,
    DeploymentConfig,
    RRHSite,
    TrackProfile,
    TrainKinematics,
    deploy_rrhs,
    kinematics_at,
    los_geometry,
    paper_scale_profile,
    select_serving_rrhs,
)
from .channel import (
    LinkBudgetParams,
    ShadowingField,
    TdlRealization,
    UlaConfig,
    apply_link,
    beam_gain,
    max_doppler,
    noise_floor,
    panel_gain,
    path_loss,
    received_power,
    superpose_rrhs,
    tdl_d_taps,
    unit_tap,
)
from .waveform import (
    BasebandBuffer,
    BurstSchedule,
    Numerology,
    ResourceGrid,
    SSBlockLayout,
    assemble_ss_block,
    block_reference_waveform,
    gen_pss,
    gen_sss,
    ofdm_demodulate,
    ofdm_modulate,
    reference_waveform,
    schedule_burst_set,
)
from .estimator import (
    BlockSegment,
    CorrelationProfile,
    RrhMeasurement,
    cross_correlate,
    estimate_aod,
    estimate_toa,
    measure_rrh,
    segment_blocks,
)
from .tracker import (
    MeasurementSet,
    MotionModel,
    StateEstimate,
    build_F,
    build_Q,
    initial_state,
    jacobian,
    measurement_fn,
    predict,
    run_filter,
    update,
)
from .config import ConfigError, SimConfig, load_config, parse_config
from .harness import (
    EpochRecord,
    MeasurementRecord,
    MetricsSummary,
    compute_metrics,
    export_records,
    metrics_from_csv,
    run_simulation,
    simulate_measurements,
    track_epochs,
)

__version__ = "0.1.0"
