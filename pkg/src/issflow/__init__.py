"""issflow: a numerical laboratory for input-to-state stability of gradient methods.

The package studies two dynamical systems built from a smooth loss on an open
subset of Euclidean space — the perturbed gradient flow and noisy steepest
descent with exact line search — and verifies quantitative stability claims
about them numerically: dissipation inequalities along trajectories, ISS
envelopes assembled from comparison functions, empirical input gains, decrease
lemmas for disturbed steps, and forward invariance of gain sublevel sets.  The
linear-quadratic regulator policy-gradient loss is the flagship non-convex,
non-globally-Lipschitz example; quadratics and custom polynomials serve as
transparent baselines.

Layering (lowest first): :mod:`errors`, :mod:`comparison` (monotone comparison
curves and KL decay curves), :mod:`domains` (open domains, size functions,
samplers), :mod:`problems` (loss objects), :mod:`linctrl` (Lyapunov/Riccati
solvers), :mod:`lqr` (the policy-gradient loss), :mod:`flow` (continuous
time), :mod:`descent` (discrete time), and :mod:`harness` (config-driven CLI
experiments with CSV/SVG artifacts).
"""

from .comparison import (
    DecreaseClipWarning,
    KLCurve,
    MonotoneCurve,
    add_linear_term,
    compose,
    invert_curve,
    kl_from_decrease,
    linear_curve,
    majorize_kinfty,
    monotone_minorant,
    pw_from_samples,
    scale_curve,
)
from .descent import (
    DecreaseReport,
    DescentSystem,
    DescentTrace,
    DtCertificate,
    DtCertificateReport,
    DtIssReport,
    InvarianceReport,
    LipschitzProfile,
    NoiseModel,
    StepOutcome,
    absolute_noise,
    build_dt_lyapunov_certificate,
    check_gradient_nonvanishing,
    check_pmu_invariance,
    constant_noise,
    decaying_noise,
    descent_step,
    descent_step_detail,
    dt_gamma_construction,
    dt_iss_check,
    lambda_max,
    line_search,
    lipschitz_profile,
    make_descent_system,
    relative_noise,
    run_descent,
    verify_decrease,
    zero_noise,
)
from .domains import (
    OpenDomain,
    SizeAxiomReport,
    SizeFunction,
    ball_sampler,
    box_sampler,
    check_size_axioms,
    compare_sizes,
    full_space,
    kurzweil_size,
    norm_size,
    open_box,
    open_interval,
    scalar_gain_domain,
    size_from_loss,
    sublevel_sampler,
)
from .errors import (
    ContractError,
    CoverageError,
    DomainError,
    DomainExitError,
    MinimumViolationError,
    NumericError,
    StabilizabilityError,
)
from .flow import (
    EnvelopeReport,
    FlowTrace,
    GainEstimate,
    InputSignal,
    IssEnvelope,
    LissReport,
    PerturbedGradientSystem,
    check_liss,
    constant_input,
    decaying_input,
    estimate_gain,
    flow_dissipation,
    integrate,
    iss_envelope,
    make_flow_system,
    piecewise_constant_input,
    quadratic_gain_curve,
    sinusoidal_input,
    verify_iss_trace,
    zero_input,
)
from .linctrl import (
    CostWeights,
    LinearSystem,
    is_hurwitz,
    solve_dual_lyapunov,
    solve_lyapunov,
    solve_riccati,
    spectral_abscissa,
)
from .lqr import (
    LQRInstance,
    make_lqr,
    pl_alpha_curve,
    pl_constant,
    sample_stabilizing_gains,
    scalar_closed_form,
    scalar_lqr,
    stabilizing_gain_domain,
)
from .problems import SmoothLoss, polynomial_loss, quadratic_loss, stuck_example_loss

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # errors
    "ContractError",
    "CoverageError",
    "DomainError",
    "DomainExitError",
    "MinimumViolationError",
    "NumericError",
    "StabilizabilityError",
    # comparison
    "DecreaseClipWarning",
    "KLCurve",
    "MonotoneCurve",
    "add_linear_term",
    "compose",
    "invert_curve",
    "kl_from_decrease",
    "linear_curve",
    "majorize_kinfty",
    "monotone_minorant",
    "pw_from_samples",
    "scale_curve",
    # domains
    "OpenDomain",
    "SizeAxiomReport",
    "SizeFunction",
    "ball_sampler",
    "box_sampler",
    "check_size_axioms",
    "compare_sizes",
    "full_space",
    "kurzweil_size",
    "norm_size",
    "open_box",
    "open_interval",
    "scalar_gain_domain",
    "size_from_loss",
    "sublevel_sampler",
    # problems
    "SmoothLoss",
    "polynomial_loss",
    "quadratic_loss",
    "stuck_example_loss",
    # linctrl
    "CostWeights",
    "LinearSystem",
    "is_hurwitz",
    "solve_dual_lyapunov",
    "solve_lyapunov",
    "solve_riccati",
    "spectral_abscissa",
    # lqr
    "LQRInstance",
    "make_lqr",
    "pl_alpha_curve",
    "pl_constant",
    "sample_stabilizing_gains",
    "scalar_closed_form",
    "scalar_lqr",
    "stabilizing_gain_domain",
    # flow
    "EnvelopeReport",
    "FlowTrace",
    "GainEstimate",
    "InputSignal",
    "IssEnvelope",
    "LissReport",
    "PerturbedGradientSystem",
    "check_liss",
    "constant_input",
    "decaying_input",
    "estimate_gain",
    "flow_dissipation",
    "integrate",
    "iss_envelope",
    "make_flow_system",
    "piecewise_constant_input",
    "quadratic_gain_curve",
    "sinusoidal_input",
    "verify_iss_trace",
    "zero_input",
    # descent
    "DecreaseReport",
    "DescentSystem",
    "DescentTrace",
    "DtCertificate",
    "DtCertificateReport",
    "DtIssReport",
    "InvarianceReport",
    "LipschitzProfile",
    "NoiseModel",
    "StepOutcome",
    "absolute_noise",
    "build_dt_lyapunov_certificate",
    "check_gradient_nonvanishing",
    "check_pmu_invariance",
    "constant_noise",
    "decaying_noise",
    "descent_step",
    "descent_step_detail",
    "dt_gamma_construction",
    "dt_iss_check",
    "lambda_max",
    "line_search",
    "lipschitz_profile",
    "make_descent_system",
    "relative_noise",
    "run_descent",
    "verify_decrease",
    "zero_noise",
]
