"""Batch Bayesian active learning by maximising log-determinants of
predictive-probability covariances, with BALD and BatchBALD baselines."""

from .acquisition import (
    AcquisitionScore, bald_score, bald_scores, batchbald_greedy, batchbald_joint_score, bbb_score,
)
from .errors import (
    BBBError, CapacityError, ConfigError, DegeneratePoolError, DomainError, FitError, MatrixError,
)
from .gp import Dataset, GPJointPosterior, KernelParams, LaplaceGPC, fit_laplace, posterior_joint
from .normal import Bvn2, bvn_orthant, bvn_upper, orthant_prob, std_normal_cdf
from .probcov import (
    ClassProbCov, ProbSampleTensor, analytic_class_cov, ledoit_wolf_shrink, probit_cov,
    probit_mean, sample_gp_probs, sampled_class_cov,
)
from .selection import (
    AcquisitionResult, AnalyticGPOracle, LandscapeGrid, MatrixOracle, SampledOracle,
    greedy_logdet_select, grid_joint_maximize,
)

__version__ = "0.1.0"
