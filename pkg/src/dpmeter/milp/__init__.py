"""Self-contained mixed-integer linear programming machinery.

``LinearMip`` holds a minimization problem with bounded columns, range
rows, and an integrality mask.  ``solve_lp`` is a bounded-variable primal
simplex; ``solve_milp`` wraps it in depth-first branch and bound.
"""

from .model import LinearMip, MipBuilder, check_feasibility
from .simplex import LpResult, SimplexSolver, solve_lp
from .branch_bound import MilpResult, solve_milp

__all__ = [
    "LinearMip",
    "LpResult",
    "MilpResult",
    "MipBuilder",
    "SimplexSolver",
    "check_feasibility",
    "solve_lp",
    "solve_milp",
]
