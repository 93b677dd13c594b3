"""Problem specifications and the moment objects every analysis consumes.

A least-squares instance is described by the distribution of the input
vector X, the optimum w*, a start point w0, and a noise model for
Y = X^T w* + eps.  Three backends are supported so that each closed form
has at least one backend where it is exact:

* analytic zero-mean Gaussian inputs with a known covariance,
* a finite set of atoms with probabilities (optionally carrying labels),
* an ingested sample set (atoms with uniform weights and residual noise).

From a specification, :func:`compute_moments` produces the second-moment
matrix, the fourth-moment operator, the noise covariance E[eps^2 X X^T]
and the rank-one start matrix eta0 eta0^T used everywhere else.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, SchemeError, SpecError
from .operators import (
    MAX_DIM,
    SymBasis,
    SymOperator,
    _as_symmetric,
    _rank_one_coords,
    fourth_moment_operator_from_samples,
    operator_from_map,
)

RANK_TOL = 1e-10  # smallest eigenvalue of H below this times trace -> rank deficient


@dataclass(frozen=True)
class GaussianDesign:
    """X ~ N(0, cov) with a known covariance."""

    cov: np.ndarray


@dataclass(frozen=True)
class DiscreteDesign:
    """X drawn from finitely many atoms; ys, when present, pins Y per atom."""

    xs: np.ndarray
    probs: np.ndarray
    ys: np.ndarray | None = None


@dataclass(frozen=True)
class IndependentGaussianNoise:
    """Y = X^T w* + sigma * Z with Z standard normal, independent of X."""

    sigma: float


@dataclass(frozen=True)
class ResidualNoise:
    """Y comes with the data; the residual y - x^T w* plays the role of eps."""


Design = GaussianDesign | DiscreteDesign
Noise = IndependentGaussianNoise | ResidualNoise


@dataclass(frozen=True)
class ProblemSpec:
    """A complete least-squares instance.

    ``kind`` is one of "gaussian", "discrete", "empirical"; empirical specs
    are discrete designs with uniform row weights and residual noise whose
    optimum is the exact least-squares fit of the ingested rows.
    """

    dim: int
    design: Design
    w_star: np.ndarray
    w0: np.ndarray
    noise: Noise
    kind: str

    @property
    def eta0(self) -> np.ndarray:
        return self.w0 - self.w_star

    @staticmethod
    def gaussian(cov, w_star=None, w0=None, sigma: float = 0.0) -> "ProblemSpec":
        cov = _as_symmetric(cov, "cov")
        d = cov.shape[0]
        if d > MAX_DIM:
            raise SpecError(f"dimension {d} exceeds the supported cap {MAX_DIM}")
        if np.linalg.eigvalsh(cov)[0] <= RANK_TOL * max(np.trace(cov), 1e-300):
            raise SpecError("gaussian covariance must be positive definite")
        w_star = _vector(w_star, d, default=0.0)
        w0 = _vector(w0, d, default=0.0)
        if sigma < 0:
            raise SpecError("sigma must be nonnegative")
        cov.setflags(write=False)
        return ProblemSpec(d, GaussianDesign(cov), w_star, w0, IndependentGaussianNoise(float(sigma)), "gaussian")

    @staticmethod
    def discrete(xs, probs=None, ys=None, w_star=None, w0=None, sigma: float = 0.0,
                 kind: str = "discrete") -> "ProblemSpec":
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        n, d = xs.shape
        if n == 0:
            raise SpecError("discrete design needs at least one atom")
        if d > MAX_DIM:
            raise SpecError(f"dimension {d} exceeds the supported cap {MAX_DIM}")
        if probs is None:
            probs = np.full(n, 1.0 / n)
        else:
            probs = np.asarray(probs, dtype=float)
            if probs.shape != (n,):
                raise SpecError("one probability per atom is required")
            if probs.min() < 0:
                raise SpecError("atom probabilities must be nonnegative")
            if abs(probs.sum() - 1.0) > 1e-12:
                raise SpecError(f"atom probabilities sum to {probs.sum()!r}, not 1")
            probs = probs / probs.sum()
        w0 = _vector(w0, d, default=0.0)
        if ys is not None:
            ys = np.asarray(ys, dtype=float)
            if ys.shape != (n,):
                raise SpecError("one label per atom is required")
            if w_star is not None:
                raise SpecError("residual specs compute w_star from the data; do not pass it")
            hmat = np.einsum("t,ti,tj->ij", probs, xs, xs)
            _require_full_rank(hmat, kind)
            w_star = np.linalg.solve(hmat, np.einsum("t,ti,t->i", probs, xs, ys))
            noise: Noise = ResidualNoise()
        else:
            if sigma < 0:
                raise SpecError("sigma must be nonnegative")
            w_star = _vector(w_star, d, default=0.0)
            noise = IndependentGaussianNoise(float(sigma))
        for arr in (xs, probs) + (() if ys is None else (ys,)):
            arr.setflags(write=False)
        return ProblemSpec(d, DiscreteDesign(xs, probs, ys), w_star, w0, noise, kind)

    @staticmethod
    def empirical(xs, ys, w0=None) -> "ProblemSpec":
        """Spec for an ingested sample set: uniform rows, residual noise."""
        return ProblemSpec.discrete(xs, ys=ys, w0=w0, kind="empirical")


def _vector(v, d: int, default: float) -> np.ndarray:
    if v is None:
        out = np.full(d, default)
    else:
        out = np.asarray(v, dtype=float).reshape(-1)
        if out.shape != (d,):
            raise DimensionError(f"expected a vector of length {d}, got shape {out.shape}")
        out = out.copy()
    out.setflags(write=False)
    return out


def _require_full_rank(hmat: np.ndarray, kind: str) -> None:
    w = np.linalg.eigvalsh(hmat)
    if w[0] <= RANK_TOL * max(np.trace(hmat), 1e-300):
        raise SpecError(
            f"{kind} second-moment matrix is rank deficient "
            f"(smallest eigenvalue {w[0]:.3e} vs trace {np.trace(hmat):.3e})"
        )


@dataclass(frozen=True, eq=False)
class MomentSet:
    """All moment objects of an instance, in one immutable bundle.

    ``fourth_moment`` acts on symmetric A as E[(X^T A X) X X^T]; ``sigma0``
    is E[eps^2 X X^T]; ``e0`` is the rank-one matrix eta0 eta0^T.
    ``n_samples`` records the draw count when the fourth moment was
    estimated from samples rather than computed exactly.
    """

    dim: int
    basis: SymBasis
    hmat: np.ndarray
    fourth_moment: SymOperator
    sigma0: np.ndarray
    e0: np.ndarray
    trace_h: float
    mu: float
    lmax: float
    n_samples: int | None = None

    def __post_init__(self):
        for arr in (self.hmat, self.sigma0, self.e0):
            arr.setflags(write=False)


def _assemble(basis, hmat, fourth, sigma0, e0, n_samples=None) -> MomentSet:
    w = np.linalg.eigvalsh(hmat)
    return MomentSet(
        dim=basis.dim,
        basis=basis,
        hmat=hmat,
        fourth_moment=fourth,
        sigma0=0.5 * (sigma0 + sigma0.T),
        e0=e0,
        trace_h=float(np.trace(hmat)),
        mu=float(w[0]),
        lmax=float(w[-1]),
        n_samples=n_samples,
    )


def gaussian_fourth_moment(hmat: np.ndarray, basis: SymBasis | None = None) -> SymOperator:
    """Fourth-moment operator of X ~ N(0, H): A -> 2 H A H + Tr(A H) H."""
    hmat = _as_symmetric(hmat, "hmat")
    if np.linalg.eigvalsh(hmat)[0] < -1e-12 * max(np.trace(np.abs(hmat)), 1.0):
        raise SpecError("gaussian fourth moment needs a positive semidefinite covariance")
    if basis is None:
        basis = SymBasis(hmat.shape[0])

    def act(mats):
        hm = np.einsum("ij,qjk->qik", hmat, mats)
        hmh = np.einsum("qij,jk->qik", hm, hmat)
        tr = np.einsum("qij,ji->q", mats, hmat)
        return 2.0 * hmh + tr[:, None, None] * hmat

    return operator_from_map(act, basis)


def _atom_residuals(spec: ProblemSpec) -> np.ndarray:
    design = spec.design
    if not isinstance(design, DiscreteDesign) or design.ys is None:
        raise SpecError("residuals are only defined for specs carrying labels")
    return design.ys - design.xs @ spec.w_star


def compute_moments(spec: ProblemSpec) -> MomentSet:
    """Exact moments of a specification.

    Gaussian designs use the closed-form fourth moment; discrete designs
    use exact weighted atom averages.  Under independent Gaussian noise
    the noise covariance factorizes to sigma^2 H.
    """
    basis = SymBasis(spec.dim)
    eta0 = spec.eta0
    e0 = np.outer(eta0, eta0)
    design = spec.design
    if isinstance(design, GaussianDesign):
        hmat = design.cov
        fourth = gaussian_fourth_moment(hmat, basis)
        sigma0 = spec.noise.sigma**2 * hmat
        return _assemble(basis, hmat, fourth, sigma0, e0)
    xs, probs = design.xs, design.probs
    hmat = np.einsum("t,ti,tj->ij", probs, xs, xs)
    hmat = 0.5 * (hmat + hmat.T)
    _require_full_rank(hmat, spec.kind)
    fourth = fourth_moment_operator_from_samples(xs, basis, weights=probs)
    if isinstance(spec.noise, ResidualNoise):
        eps = _atom_residuals(spec)
        sigma0 = np.einsum("t,ti,tj->ij", probs * eps**2, xs, xs)
    else:
        sigma0 = spec.noise.sigma**2 * hmat
    return _assemble(basis, hmat, fourth, sigma0, e0)


def _atom_c_inverse(spec: ProblemSpec, c_inverse) -> np.ndarray:
    """Evaluate and validate a density ratio dq/dp on the atoms of a spec."""
    design = spec.design
    xs = design.xs
    ys = design.ys if design.ys is not None else xs @ spec.w_star
    cinv = np.asarray(c_inverse(xs, ys), dtype=float).reshape(-1)
    if cinv.shape != (xs.shape[0],):
        raise SchemeError("c_inverse must return one value per atom")
    if cinv.min() < 0:
        raise SchemeError("c_inverse must be nonnegative")
    total = float(design.probs @ cinv)
    if abs(total - 1.0) > 1e-10:
        raise SchemeError(f"c_inverse has expectation {total!r} under the spec, not 1")
    nonzero_x = np.einsum("ti,ti->t", xs, xs) > 0
    if np.any(nonzero_x & (cinv == 0.0) & (design.probs > 0)):
        raise SchemeError(
            "c_inverse vanishes on an atom with X != 0; the original "
            "distribution is not absolutely continuous w.r.t. the proposal"
        )
    return cinv


def reweighted_moments(
    spec: ProblemSpec, c_inverse, mc_samples: int = 200_000, seed: int = 0
) -> MomentSet:
    """Moments of the importance-resampled instance.

    Resampling with density ratio c^{-1} = dq/dp and rescaling samples by
    sqrt(c) leaves every second-order moment (H in particular, and the
    start matrix) unchanged, while each fourth-order object picks up a
    factor c = 1/c_inverse per atom: the fourth-moment operator becomes
    E[c (X^T A X) X X^T] and the noise covariance E[c eps^2 X X^T].
    Exact for discrete designs; Gaussian designs fall back to a seeded
    Monte Carlo estimate with ``mc_samples`` draws (recorded in the
    result's ``n_samples``).
    """
    base = compute_moments(spec)
    design = spec.design
    if isinstance(design, DiscreteDesign):
        cinv = _atom_c_inverse(spec, c_inverse)
        xs, probs = design.xs, design.probs
        live = (np.einsum("ti,ti->t", xs, xs) > 0) & (probs > 0)
        c = np.zeros_like(cinv)
        c[live] = 1.0 / cinv[live]
        u = _rank_one_coords(xs, base.basis)
        wts = probs * c
        m4 = (u * wts[:, None]).T @ u
        fourth = SymOperator(basis=base.basis, matrix=0.5 * (m4 + m4.T))
        if isinstance(spec.noise, ResidualNoise):
            eps2 = _atom_residuals(spec) ** 2
        else:
            eps2 = np.full(xs.shape[0], spec.noise.sigma**2)
        sigma0 = np.einsum("t,ti,tj->ij", wts * eps2, xs, xs)
        return _assemble(base.basis, base.hmat, fourth, sigma0, base.e0)
    # Gaussian design: atomize by Monte Carlo.
    rng = np.random.default_rng(seed)
    root = _sqrt_psd(design.cov)
    xs = rng.standard_normal((mc_samples, spec.dim)) @ root.T
    ys = xs @ spec.w_star
    cinv = np.asarray(c_inverse(xs, ys), dtype=float).reshape(-1)
    if cinv.min() <= 0:
        raise SchemeError(
            "c_inverse must stay positive on Gaussian draws (X != 0 almost surely)"
        )
    mean = cinv.mean()
    se = cinv.std(ddof=1) / np.sqrt(mc_samples)
    if abs(mean - 1.0) > max(4.0 * se, 1e-6):
        raise SchemeError(f"c_inverse has sample mean {mean!r}, not 1")
    c = 1.0 / cinv
    u = _rank_one_coords(xs, base.basis)
    m4 = (u * (c / mc_samples)[:, None]).T @ u
    fourth = SymOperator(basis=base.basis, matrix=0.5 * (m4 + m4.T))
    sigma0 = spec.noise.sigma**2 * np.einsum("t,ti,tj->ij", c / mc_samples, xs, xs)
    return _assemble(base.basis, base.hmat, fourth, sigma0, base.e0, n_samples=mc_samples)


def _sqrt_psd(cov: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(cov)
    return v @ np.diag(np.sqrt(np.clip(w, 0.0, None))) @ v.T


@dataclass(frozen=True)
class CrossTermReport:
    """Exactness check for the bias/variance split.

    ``terms[i, j, k]`` estimates E[X_i X_j X_k eps]; the split into bias
    plus variance covariances is exact when every entry vanishes.
    """

    terms: np.ndarray
    max_abs: float
    max_stderr: float
    decomposable: bool


def check_cross_term_condition(spec: ProblemSpec) -> CrossTermReport:
    """Estimate all d^3 third-moment-times-residual terms of a spec."""
    d = spec.dim
    design = spec.design
    if isinstance(design, GaussianDesign) or isinstance(spec.noise, IndependentGaussianNoise):
        # eps independent of X with mean zero kills every term exactly.
        terms = np.zeros((d, d, d))
        return CrossTermReport(terms, 0.0, 0.0, True)
    xs, probs = design.xs, design.probs
    eps = _atom_residuals(spec)
    terms = np.einsum("t,ti,tj,tk->ijk", probs * eps, xs, xs, xs)
    if spec.kind == "empirical":
        n = xs.shape[0]
        second = np.einsum("t,ti,tj,tk->ijk", probs * eps**2, xs**2, xs**2, xs**2)
        stderr = np.sqrt(np.maximum(second - terms**2, 0.0) / n)
    else:
        stderr = np.zeros_like(terms)  # exact expectation, no sampling noise
    scale = (max(np.trace(np.einsum("t,ti,tj->ij", probs, xs, xs)), 1e-300)) ** 1.5
    scale *= np.sqrt(max((probs * eps**2).sum(), 1e-300)) + 1e-300
    atol = 1e-12 * scale
    ok = np.all(np.abs(terms) <= np.maximum(3.0 * stderr, atol))
    return CrossTermReport(
        terms, float(np.abs(terms).max()), float(stderr.max()), bool(ok)
    )
