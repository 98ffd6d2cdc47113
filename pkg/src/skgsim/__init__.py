"""Physical-layer secret key generation between a drone and a ground station.

Simulates Rician fading with Friis path loss and spatially correlated
log-normal shadowing, partitions the flight grid into isohypses of equal
expected eavesdropper gain, and maximizes the secret-key rate over the
drone's position distribution within an isohypse.
"""

from .calibration import (
    CalibrationParams,
    estimation_sigma,
    kappa_from_rho,
    noise_from_snr_min,
    rho_from_kappa,
    snr_linear,
)
from .capacity import (
    CapacityResult,
    ChannelMatrix,
    OptimizationOutcome,
    PositionDistribution,
    Quantizer,
    channel_matrix,
    class_capacity,
    mutual_information,
    optimize_distribution,
    optimize_over_isohypses,
    output_pmd,
    upper_bound,
)
from .channel import (
    ChannelParams,
    GainMap,
    PathlossParams,
    ShadowingField,
    build_gain_map,
    expected_gain_factor,
    pathloss_db,
    pathloss_vector,
    sample_received_gain,
    sample_received_gains,
    sample_shadowing_field,
    shadowing_covariance,
)
from .config import ExperimentConfig
from .geometry import PositionGrid, ReceiverConfig
from .partition import IsohypsePartition, auto_delta, build_partition, largest_classes
from .protocol import (
    KeyMaterial,
    ProtocolReport,
    TrajectoryPlan,
    estimate_leakage,
    execute_transmissions,
    run_protocol,
    run_training,
    sample_trajectory,
)
from .scenario import Scenario, build_scenario

__version__ = "0.1.0"
