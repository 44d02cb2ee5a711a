"""Wi-Fi angle-of-arrival location privacy simulator.

Models a snooping access point that localizes a client from its uplink
CSI, and the client-side precoders that push the direct path behind a
reflection so the AP picks the wrong bearing.
"""
from .attacker import (
    AngleDistanceProfile,
    LocalizationEstimate,
    Peak,
    ProfileGrid,
    SpotFiEstimator,
    localize_single_ap,
    music_profile,
    select_direct,
    smooth_csi,
    triangulate,
)
from .defender import (
    ObfuscatingPrecoder,
    ObfuscationPolicy,
    PathKnowledge,
    beamform_delay_precoder,
    make_path_knowledge,
    matched_precoder,
    mirage_precoder,
    null_space_basis,
    nulling_precoder,
)
from .geometry import ApPose, Environment, PathComponent, Reflector, bearing_to, enumerate_paths
from .phy import (
    ArrayConfig,
    ChannelMatrix,
    OfdmConfig,
    Precoder,
    add_noise,
    apply_precoder,
    rssi_db,
    steering_vector,
    synthesize_csi,
)

__version__ = "0.1.0"

__all__ = [
    "AngleDistanceProfile", "ApPose", "ArrayConfig", "ChannelMatrix", "Environment",
    "LocalizationEstimate", "ObfuscatingPrecoder", "ObfuscationPolicy", "OfdmConfig",
    "PathComponent", "PathKnowledge", "Peak", "Precoder", "ProfileGrid", "Reflector",
    "SpotFiEstimator", "add_noise", "apply_precoder", "beamform_delay_precoder", "bearing_to",
    "enumerate_paths", "localize_single_ap", "make_path_knowledge", "matched_precoder",
    "mirage_precoder", "music_profile", "null_space_basis", "nulling_precoder", "rssi_db",
    "select_direct", "smooth_csi", "steering_vector", "synthesize_csi", "triangulate",
]
