"""Joint multicarrier precoding for secondary users, AU pilot jamming and PU
interference protection with rate-splitting, SDMA and NOMA transmitters."""

from .channels import ChannelSet, ScenarioConfig, channel_set_for, generate_channel_set, load_config
from .metrics import PrecoderSet, RateReport, rate_report
from .solver import SolverConfig, ao_admm_solve, audit_solution, solve_scheme
from .thresholds import ThresholdSet, assemble_thresholds

__all__ = [
    "ChannelSet", "ScenarioConfig", "channel_set_for", "generate_channel_set", "load_config",
    "PrecoderSet", "RateReport", "rate_report",
    "SolverConfig", "ao_admm_solve", "audit_solution", "solve_scheme",
    "ThresholdSet", "assemble_thresholds",
]

__version__ = "0.1.0"
