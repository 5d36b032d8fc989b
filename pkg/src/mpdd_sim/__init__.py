"""Simulator for doubly-dispersive MIMO links with stacked intelligent metasurfaces.

Building blocks: array responses (`arrays`), SIM/RIS construction
(`metasurface`), delay-Doppler channel assembly (`channel`), OFDM/OTFS/AFDM
modems (`waveforms`), SIM phase optimization (`optimizer`), GaBP/LMMSE/ZF
detection (`detectors`), and a Monte-Carlo harness (`simulate`, `cli`).
"""

from .arrays import PathAngles, UlaSpec, UpaSpec, ula_response, upa_response
from .channel import (CpPhaseRule, DdPath, EffectiveChannel, FrameDims, MimoLink,
                      PathConfig, PathSet, RisLegPaths, ZERO_CP_RULE, apply_channel,
                      assemble_hbar, build_g, delay_shift_matrix, doppler_phase_diag,
                      sample_paths, spatial_factor, ris_spatial_factor)
from .config import ExperimentConfig, config_from_dict, load_config
from .detectors import GabpDetector, GabpResult, LmmseDetector, ZfDetector
from .errors import ConfigurationError, GeometryError, MpddSimError, NumericalFailure
from .metasurface import (RisPanel, SimLayerGeometry, SimStack, build_sim_stack,
                          correlation_matrix, correlation_root, diffraction_matrix,
                          phase_layer_matrix, sim_transfer)
from .optimizer import (AscentConfig, AscentResult, ObjectiveContext, SimPhaseOptimizer,
                        ascend, grad_rx, grad_tx, objective_value)
from .rng import as_rng, spawn_rng
from .simulate import BerRecord, export_channel, run_ber, run_optimize
from .waveforms import (AfdmModem, OfdmModem, OtfsModem, afdm_chirp_rate, cpp_phase_rule,
                        effective_channel, modem_for, qpsk_demap, qpsk_map)

__version__ = "0.1.0"
