"""Layer-wise execution-time models for DNN accelerators.

Benchmark a device (or the bundled synthetic oracle), fit a platform model
made of refined roofline constants, statistical efficiency forests and
fusion classifiers, then estimate network latency layer by layer.
"""

from .bench import LayerRecord, SweepSpec, generate_configs, run_benchmark
from .estimate import EstimationReport, estimate_layer, estimate_network
from .experiment import CharacterizationPlan, EvalResult, characterize, evaluate_networks
from .fitting import FitConfig, InsufficientDataError, fit_platform_model
from .graph import GraphError, LayerKind, LayerSpec, NetworkGraph, load_graph, make_layer, parse_graph
from .models import FAMILIES, PlatformModel, load_platform_model, save_platform_model
from .oracle import MemoryTerm, OracleDevice, OracleSpec, default_oracle
from .synth import nas_network, random_network

__version__ = "0.1.0"

__all__ = [
    "CharacterizationPlan", "EstimationReport", "EvalResult", "FAMILIES", "FitConfig", "GraphError",
    "InsufficientDataError", "LayerKind", "LayerRecord", "LayerSpec", "MemoryTerm", "NetworkGraph", "OracleDevice",
    "OracleSpec", "PlatformModel", "SweepSpec", "characterize", "default_oracle", "estimate_layer",
    "estimate_network", "evaluate_networks", "fit_platform_model", "generate_configs", "load_graph",
    "load_platform_model", "make_layer", "nas_network", "parse_graph", "random_network", "run_benchmark",
    "save_platform_model",
]
