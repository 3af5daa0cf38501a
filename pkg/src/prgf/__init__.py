"""Prior-guided random gradient-free estimation and query-based black-box attacks."""
from .attack import AttackConfig, AttackTrace, aggregate, pgd_step, project, run_attack, success_rate_curve
from .core import make_rng, normalize, sample_biased, sample_unit_sphere, SamplerSpec, target_covariance
from .errors import (BudgetExhaustedError, ConfigurationError, DegenerateGradientError, DegenerateSampleError,
                     DimensionMismatchError, InvalidDimensionError, MalformedRequestError, OracleError,
                     PartialEstimateError, PrgfError, TransportError)
from .estimator import (EstimatorConfig, GradientEstimate, METHODS, estimate_averaging, estimate_gradient,
                        estimate_prgf, estimate_rgf, expected_beta, expected_beta_subspace, lambda_star,
                        lambda_star_subspace, mu_star, mu_star_subspace)
from .kernels import BACKEND
from .oracle import LossOracle, QueryLedger, SyntheticModelSpec, make_synthetic
from .prior import (FixedPriorSource, PriorStats, SyntheticPriorSource, TransferPrior, estimate_A, estimate_alpha,
                    estimate_grad_norm, make_synthetic_prior)
from .remote import RemoteOracle, connect, serve
from .subspace import SubspaceBasis, make_subspace

__version__ = "0.1.0"
