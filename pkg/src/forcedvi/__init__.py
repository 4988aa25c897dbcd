"""Structure-preserving integrators for forced and constrained Lagrangian systems.

Build discrete triples (action sum plus left/right discrete forces) from a
quadrature rule and a boundary-value method, step them with forced
variational or constrained multiplier maps, and measure orders against a
refinement oracle. The ``harness`` module exposes the ``vi`` command line
for the bundled experiments.
"""

from .numkit import (
    DEFAULT_TOL,
    NoConvergenceError,
    NonFiniteValueError,
    SingularJacobianError,
    ToleranceSpec,
    fd_gradient,
    fd_jacobian,
    solve_newton,
)
from .quadrature import (
    LengthMismatchError,
    QuadratureRule,
    UnknownRuleError,
    apply_rule,
    composite_simpson,
    make_rule,
)
from .bvp import (
    BVPSolution,
    NonFiniteStateError,
    OneStepMethod,
    UnknownMethodError,
    integrate_to_nodes,
    make_method,
    shoot_bvp,
)
from .discretization import (
    DiscreteTriple,
    EquivalenceReport,
    TripleProvenance,
    check_strong_equivalence,
    d1_lagrangian,
    d2_lagrangian,
    exact_triple,
    midpoint_triple,
    mixed_triple,
    recipe_triple,
    sample_endpoint_pairs,
)
from .integrators import (
    ConstraintDistribution,
    DiracStepRecord,
    DiracStructureReport,
    PhasePoint,
    RankDeficientConstraintsError,
    Retraction,
    default_retraction,
    dirac_minus_step,
    dirac_plus_step,
    euler_lagrange_step,
    hamiltonian_step,
    legendre_minus,
    legendre_plus,
    symplecticity_defect,
    verify_dirac_structure,
)
from .systems import (
    ConstrainedSystem,
    EnergyUnavailableError,
    ForcedLagrangianSystem,
    OverdampedError,
    alpha_oscillator,
    check_accel_consistency,
    damped_oscillator,
    energy,
    free_particle,
    quintic_cancellation,
    rlc_capacitor_charge,
    rlc_circuit,
)

__version__ = "0.1.0"
