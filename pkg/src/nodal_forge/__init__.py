"""nodal-forge - nodal sets of Laplace eigenfunctions on collapsing simplicial metrics."""

from .api import check_oracle, run_lab
from .scenario import Scenario, load_scenario

__version__ = "0.1.0"
