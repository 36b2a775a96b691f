"""Tracking of time-varying wideband massive-MIMO UAV channels under Doppler and beam squint."""

from .channel import (PathParams, Selectivity, SelectivityClass, StackedChannel, SystemConfig,
                      bs_steering, classify, correlation_closed_form, doppler_steering,
                      normalized_correlation, pilot_channel, stacked_channel,
                      synthesize_pilot_observation)
from .downlink import DownlinkConfig
from .ekf import EkfSettings, track_doa
from .errors import ConfigError, ModelCollapsedError, SingularSystemError
from .gcs import GcsSettings, track_uplink
from .harness import ExperimentSpec, run_experiment
from .metrics import mse_metrics

__all__ = [
    "ConfigError", "DownlinkConfig", "EkfSettings", "ExperimentSpec", "GcsSettings",
    "ModelCollapsedError", "PathParams", "Selectivity", "SelectivityClass", "SingularSystemError",
    "StackedChannel", "SystemConfig", "bs_steering", "classify", "correlation_closed_form",
    "doppler_steering", "mse_metrics", "normalized_correlation", "pilot_channel", "run_experiment",
    "stacked_channel", "synthesize_pilot_observation", "track_doa", "track_uplink",
]

__version__ = "0.1.0"
