"""Rigidity-based flocking control with Gaussian-process compensation of unknown forces."""

from .config import ScenarioConfig, parse_config, preset
from .control import Gains, decentralized_control_agent, learning_control, nominal_control
from .gp import GPModel, KernelParams, add_observation, posterior
from .network import Framework, rigidity_matrix
from .sim import DisturbanceSpec, ForceTerm, SimSettings, run_scenario

__version__ = "0.1.0"
