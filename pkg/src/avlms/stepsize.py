"""Maximal stable step-sizes and contraction factors for averaged LMS.

The covariance of the iterates contracts through the operator
T(gamma) = H_L + H_R - gamma M on symmetric matrices.  The largest usable
step-size is the supremum of gamma keeping T positive definite, which is
the reciprocal of the top generalized eigenvalue of the symmetric-definite
pencil (M, H_L + H_R).  This module computes that threshold, the classical
deterministic threshold 2/L, the universal bound 2/Tr(H), and the
contraction factors of I - gamma*T and I - gamma*H together with an
analytic upper bound on their maximum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import SingularOperatorError
from .moments import MomentSet
from .operators import SymOperator, left_right_operator


def contraction_generator(moments: MomentSet, gamma: float) -> SymOperator:
    """The operator T(gamma) = H_L + H_R - gamma * M on symmetric matrices."""
    b = left_right_operator(moments.hmat, moments.basis)
    return SymOperator(
        basis=moments.basis, matrix=b.matrix - gamma * moments.fourth_moment.matrix
    )


def gamma_max(moments: MomentSet) -> float:
    """Supremum of step-sizes keeping T(gamma) positive definite.

    Solved exactly as a generalized symmetric-definite eigenproblem: the
    threshold is 1/lambda_max of the pencil (M, H_L + H_R).  Returns +inf
    when the fourth moment vanishes.
    """
    if moments.mu <= 0:
        raise SingularOperatorError(
            "second-moment matrix must be positive definite",
            smallest_eigenvalue=moments.mu,
        )
    mmat = moments.fourth_moment.matrix
    bmat = left_right_operator(moments.hmat, moments.basis).matrix
    if moments.basis.size == 1:
        lam_top = mmat[0, 0] / bmat[0, 0]
    else:
        lam_top = float(
            scipy.linalg.eigh(mmat, bmat, eigvals_only=True, subset_by_index=[mmat.shape[0] - 1, mmat.shape[0] - 1])[0]
        )
    if lam_top <= 1e-300:
        return math.inf
    return 1.0 / lam_top


def gamma_max_det(moments: MomentSet) -> float:
    """Largest step-size for deterministic gradient descent, 2/L."""
    return 2.0 / moments.lmax


def trace_step_bound(moments: MomentSet) -> float:
    """The universal upper bound 2/Tr(H) on the stochastic threshold."""
    return 2.0 / moments.trace_h


@dataclass(frozen=True)
class ContractionFactors:
    """Spectral radii of I - gamma*T and I - gamma*H, and their max."""

    rho_t: float
    rho_h: float

    @property
    def rho(self) -> float:
        return max(self.rho_t, self.rho_h)


def contraction_factors(moments: MomentSet, gamma: float) -> ContractionFactors:
    """Measured contraction factors at a given step-size.

    Values above 1 are returned as-is; they signal a step-size beyond the
    stable range rather than an error.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    tau = contraction_generator(moments, gamma).eigenvalues()
    rho_t = float(np.abs(1.0 - gamma * tau).max())
    lam = np.linalg.eigvalsh(moments.hmat)
    rho_h = float(np.abs(1.0 - gamma * lam).max())
    return ContractionFactors(rho_t=rho_t, rho_h=rho_h)


def contraction_rate_bound(gamma: float, mu: float, g_max: float, dim: int) -> float:
    """Analytic upper bound on the contraction factor rho for 0 < gamma < g_max.

    In dimension >= 2 the bound is 1 - 2*gamma*(1 - gamma/g_max)*mu on the
    upper half of the stable range and 1 - gamma*mu below it; in dimension
    one it is the max of |1 - gamma*mu| and the first expression.
    """
    if not 0 < gamma < g_max:
        raise ValueError(f"gamma must lie in (0, {g_max}), got {gamma}")
    ratio = gamma / g_max
    upper = 1.0 - 2.0 * gamma * (1.0 - ratio) * mu
    if dim == 1:
        return max(abs(1.0 - gamma * mu), upper)
    if ratio >= 0.5:
        return upper
    return 1.0 - gamma * mu


def smallest_t_eigenvalue(moments: MomentSet, gamma: float) -> float:
    """Smallest eigenvalue of T(gamma); positive iff gamma is stable."""
    return float(contraction_generator(moments, gamma).eigenvalues()[0])


@dataclass(frozen=True)
class GammaDiagnostics:
    gamma: float
    rho_t: float
    rho_h: float
    rho: float
    rate_bound: float | None
    t_positive: bool


@dataclass(frozen=True, eq=False)
class StepSizeReport:
    """Step-size thresholds of an instance plus per-gamma diagnostics.

    The invariants gamma_max <= 2/Tr(H) <= gamma_max_det hold for every
    distribution; ``sample_count`` carries through the draw count when the
    fourth moment was estimated rather than exact.
    """

    moments: MomentSet
    gamma_max: float
    gamma_max_det: float
    trace_bound: float
    mu: float
    sample_count: int | None = None

    def mu_t(self, gamma: float) -> float:
        return smallest_t_eigenvalue(self.moments, gamma)

    def at(self, gamma: float) -> GammaDiagnostics:
        factors = contraction_factors(self.moments, gamma)
        if 0 < gamma < self.gamma_max:
            bound = contraction_rate_bound(gamma, self.mu, self.gamma_max, self.moments.dim)
        else:
            bound = None
        return GammaDiagnostics(
            gamma=gamma,
            rho_t=factors.rho_t,
            rho_h=factors.rho_h,
            rho=factors.rho,
            rate_bound=bound,
            t_positive=self.mu_t(gamma) > 0,
        )


def step_size_report(moments: MomentSet) -> StepSizeReport:
    return StepSizeReport(
        moments=moments,
        gamma_max=gamma_max(moments),
        gamma_max_det=gamma_max_det(moments),
        trace_bound=trace_step_bound(moments),
        mu=moments.mu,
        sample_count=moments.n_samples,
    )
