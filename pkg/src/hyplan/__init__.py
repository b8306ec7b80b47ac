"""hyplan: forward-search planning and validation for hybrid domains.

A task mixes instantaneous actions with autonomous processes whose effects
are ODEs; searching forward, a waiting transition numerically integrates the
active processes and truncates time intervals at zero-crossing events.  An
off-line validator replays plans with a high-precision integrator.
"""

__version__ = "0.1.0"

from .errors import HyplanError
from .model import Action, FluentDecl, Process, SimConfig, Task
from .parser import parse_domain, parse_problem
from .search import Plan, SearchOptions, search_bfs, search_gbfs
from .terms import State, eval_formula, eval_term
from .validate import validate_plan

__all__ = [
    "Action",
    "FluentDecl",
    "HyplanError",
    "Plan",
    "Process",
    "SearchOptions",
    "SimConfig",
    "State",
    "Task",
    "eval_formula",
    "eval_term",
    "parse_domain",
    "parse_problem",
    "search_bfs",
    "search_gbfs",
    "validate_plan",
    "__version__",
]
