"""Source-free domain adaptation with a class-balanced proxy source domain and mixup.

Everything runs on small synthetic shifts with a numpy MLP and hand-written
backprop. See ``sfmix.harness`` for the end-to-end runner and
``sfmix.cli`` for the command line.
"""

from .config import ExperimentConfig, dump_config, load_config, parse_config
from .data import Dataset, ShiftSpec, UnlabeledView, generate_shift_pair
from .harness import ExperimentRecord, ablation_matrix, emit_report, load_records, run
from .mixadapt import AdaptConfig, MixupConfig, adapt
from .model import FreezeMask, Network, init_network, load_checkpoint, save_checkpoint
from .proxy import ProxyConfig, ProxyDomain, build_proxy
from .pseudo import MemoryBank, PseudoConfig

__version__ = "0.1.0"

__all__ = [
    "AdaptConfig", "Dataset", "ExperimentConfig", "ExperimentRecord", "FreezeMask", "MemoryBank",
    "MixupConfig", "Network", "ProxyConfig", "ProxyDomain", "PseudoConfig", "ShiftSpec",
    "UnlabeledView", "ablation_matrix", "adapt", "build_proxy", "dump_config", "emit_report",
    "generate_shift_pair", "init_network", "load_checkpoint", "load_config", "load_records",
    "parse_config", "run", "save_checkpoint",
]
