"""ghostsim: a cycle-level out-of-order core and cache-hierarchy simulator
for checking that transient (squashed) execution cannot influence the
timing of committed execution.
"""

from .config import ConfigError, RunConfig
from .isa import ParseError, Program, load_program
from .machine import Machine, SimTimeout

__all__ = [
    "ConfigError", "RunConfig", "ParseError", "Program", "load_program",
    "Machine", "SimTimeout",
]

__version__ = "0.1.0"
