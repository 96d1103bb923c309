"""Checkpoint export and reference-forward tooling for the sifigan engine.

Two jobs, both on the far side of the engine's file formats: `export`
turns training-framework checkpoints into .sfgw weight files, and `oracle`
recomputes the generator's forward pass independently so the engine has
something to be checked against.  Nothing in here imports the engine.
"""

from .audio import read_stage_dumps, read_wav, write_stage_dumps, write_wav
from .bundles import Utterance, read_bundle, write_bundle
from .compare import compare_outputs, estimate_f0, localize_divergence, mel_l1, rel_l2
from .config import GeneratorConfig, load_config, save_config
from .errors import BridgeError, ExportError, FormatError
from .export import export_checkpoint, fold_weight_norm
from .inventory import param_count, tap_order, tensor_inventory
from .name_map import build_name_map, load_name_map, save_name_map, validate_name_map
from .oracle import OracleResult, oracle_forward, run_oracle
from .sfgw import read_sfgw, write_sfgw

__version__ = "0.1.0"

__all__ = [
    "BridgeError",
    "ExportError",
    "FormatError",
    "GeneratorConfig",
    "OracleResult",
    "Utterance",
    "build_name_map",
    "compare_outputs",
    "estimate_f0",
    "export_checkpoint",
    "fold_weight_norm",
    "load_config",
    "load_name_map",
    "localize_divergence",
    "mel_l1",
    "oracle_forward",
    "param_count",
    "read_bundle",
    "read_sfgw",
    "read_stage_dumps",
    "read_wav",
    "rel_l2",
    "run_oracle",
    "save_config",
    "save_name_map",
    "tap_order",
    "tensor_inventory",
    "validate_name_map",
    "write_bundle",
    "write_sfgw",
    "write_stage_dumps",
    "write_wav",
]
