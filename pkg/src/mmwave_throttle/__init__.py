"""Power, thermal and throttling models for 5G mmWave user equipment."""

__version__ = "0.1.0"

from .errors import ConfigError, ModelError, RankDeficientError, TraceFormatError
from .power import (ModelRegistry, PowerBreakdown, PowerModel, additivity_check,
                    decompose_power, fit_power_model, predict_power, synthetic_truth)
from .thermal import (SteadySample, SteadyThermalModel, ThermalNetwork, default_network,
                      estimate_r4, simulate_transient, skin_temp_steady, steady_state_temps)
from .traces import (TraceSample, TrainingGridConfig, generate_training_grid, load_traces,
                     save_traces, synth_traces)
