"""Harmonic cocycles (correctors) of random conductance environments.

Finite-volume toolkit on the torus Z_L^d: environment generation, cocycle
path sums, the periodic cell problem and effective conductivity,
sublinearity / Poincare / Holder diagnostics, and the random walk with its
martingale harness.
"""

__version__ = "0.1.0"

from corrector_lab.cocycle import (
    CocycleField,
    closedness_residual,
    coboundary,
    evaluate,
    mean_vector,
    potential,
)
from corrector_lab.environment import (
    Environment,
    GeneratorModel,
    TorusShape,
    bar_c,
    conductance,
    generate_environment,
    load_environment,
    save_environment,
)
from corrector_lab.solver import (
    CorrectorSolution,
    EffectiveTensor,
    apply_operator,
    dense_oracle_solve,
    effective_tensor,
    harmonic_cocycle,
    harmonicity_residual,
    solve_corrector,
)
