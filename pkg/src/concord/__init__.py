"""Agreement coefficients for paired measurements under elliptical models.

Lin's concordance coefficient and the L_p agreement coefficients, with
Gaussian and multivariate Laplace estimation, mean-equality tests,
U-statistic estimators, goodness-of-fit diagnostics and a simulation harness.
"""

__version__ = "0.1.0"

from .coefficients import (  # noqa: E402
    L1,
    LIN,
    AgreementValue,
    CoefficientKind,
    lin_ec,
    lin_gaussian,
    lin_laplace,
    rho1_ec,
    rho1_gaussian,
    rho_p_from_rho_c,
    scaled_phi_gaussian,
)
from .estimation import ConvergenceSpec, ModelFit, estimate_agreement, fit, fit_gaussian, fit_laplace  # noqa: E402
from .estimation import fit_laplace_constrained, laplace_weights, sample_moments  # noqa: E402
from .gof import GofReport, gof_report, jarque_bera  # noqa: E402
from .inference import (  # noqa: E402
    TestResult,
    bootstrap_se,
    fit_lin_se,
    fit_rho_p_se,
    hotelling_t2,
    lin_asymptotic_variance,
    test_means,
)
from .sampling import BivariateSample, DegenerateDataError, ModelParams, sample  # noqa: E402
from .simulation import SimCell, SimScenario, render_tables, run_scenario  # noqa: E402
from .ustat import UStatEstimate, ustat, ustat_estimate  # noqa: E402

__all__ = [
    "AgreementValue", "BivariateSample", "CoefficientKind", "ConvergenceSpec", "DegenerateDataError",
    "GofReport", "L1", "LIN", "ModelFit", "ModelParams", "SimCell", "SimScenario", "TestResult",
    "UStatEstimate", "bootstrap_se", "estimate_agreement", "fit", "fit_gaussian", "fit_laplace",
    "fit_laplace_constrained", "fit_lin_se", "fit_rho_p_se", "gof_report", "hotelling_t2", "jarque_bera",
    "laplace_weights", "lin_asymptotic_variance", "lin_ec", "lin_gaussian", "lin_laplace", "render_tables",
    "rho1_ec", "rho1_gaussian", "rho_p_from_rho_c", "run_scenario", "sample", "sample_moments",
    "scaled_phi_gaussian", "test_means", "ustat", "ustat_estimate",
]
