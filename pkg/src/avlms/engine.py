"""Stochastic simulation of averaged constant-step-size LMS.

Runs the recursion w_i = w_{i-1} - gamma X_i (X_i^T w_{i-1} - Y_i) with
incremental averaging, over vectorized replicate blocks, and reports the
exact excess risk (w - w*)^T H (w - w*) of the averaged iterate against
the specification's true second moment.  Three modes isolate the error
components: "bias" forces the noise to zero, "variance" starts at the
optimum, "total" does neither.

Randomness contract: the master seed spawns two child streams (inputs
first, noise second); replicate r consumes row r of every block drawn
from those streams.  Identical seeds therefore give bit-identical
trajectories, input draws are shared across modes and (via a common
uniform sequence) across discrete sampling schemes, and results do not
depend on how replicates would be scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SchemeError, SpecError
from .moments import (
    DiscreteDesign,
    GaussianDesign,
    ProblemSpec,
    ResidualNoise,
    _atom_c_inverse,
    _sqrt_psd,
)

DIVERGENCE_NORM = 1e12

MODES = ("bias", "variance", "total")


@dataclass(frozen=True)
class RunConfig:
    """One simulation request.

    ``n`` counts averaged iterates (w_0 through w_{n-1}, i.e. n - 1
    updates).  ``record_at`` lists the iterate counts to log; when absent,
    every ``record_stride``-th count (and n itself) is logged.
    """

    gamma: float
    n: int
    replicates: int = 1
    mode: str = "total"
    seed: int = 0
    record_stride: int = 1
    record_at: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        if self.record_stride < 1:
            raise ValueError("record_stride must be at least 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")

    def record_points(self) -> list[int]:
        if self.record_at is not None:
            pts = sorted({int(m) for m in self.record_at})
            if not pts or pts[0] < 1 or pts[-1] > self.n:
                raise ValueError("record_at entries must lie in [1, n]")
            return pts
        pts = list(range(self.record_stride, self.n + 1, self.record_stride))
        if not pts or pts[-1] != self.n:
            pts.append(self.n)
        return pts


@dataclass
class Trajectory:
    """Averaged-iterate risk along one run, averaged over replicates."""

    iterations: np.ndarray
    risk: np.ndarray
    standard_error: np.ndarray
    mode: str
    gamma: float | None = None
    diverged: bool = False
    diverged_at: int | None = None
    label: str = ""


def lms_step(w: np.ndarray, sample: tuple[np.ndarray, float], gamma: float) -> np.ndarray:
    """One constant-step update; a zero input vector leaves w unchanged."""
    x, y = sample
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    if x.shape != w.shape:
        raise ValueError("weight and input dimensions differ")
    return w - gamma * (x @ w - y) * x


def _spec_second_moment(spec: ProblemSpec) -> np.ndarray:
    design = spec.design
    if isinstance(design, GaussianDesign):
        return design.cov
    return np.einsum("t,ti,tj->ij", design.probs, design.xs, design.xs)


class _Sampler:
    """Vectorized (X, Y) block draws for a spec, optionally resampled.

    With a scheme, atoms are drawn from q = c_inverse * p through a shared
    uniform sequence and every sample is scaled by sqrt(c); the Gaussian
    backend supports only the uniform scheme.
    """

    def __init__(self, spec: ProblemSpec, scheme=None, noiseless: bool = False):
        self.spec = spec
        self.noiseless = noiseless
        design = spec.design
        self.gaussian = isinstance(design, GaussianDesign)
        if self.gaussian:
            if scheme is not None:
                raise SchemeError(
                    "resampled streams need an atomized spec; Gaussian designs "
                    "support only uniform sampling"
                )
            self._root = _sqrt_psd(design.cov)
            self.sigma = spec.noise.sigma
            return
        xs, probs, ys = design.xs, design.probs, design.ys
        if scheme is None:
            weights = probs
            self._scale = None
        else:
            c_inv = scheme.c_inverse if hasattr(scheme, "c_inverse") else scheme
            cinv = _atom_c_inverse(spec, c_inv)
            weights = probs * cinv
            total = weights.sum()
            if abs(total - 1.0) > 1e-10:
                raise SchemeError(f"proposal weights sum to {total!r}, not 1")
            weights = weights / total
            scale = np.zeros_like(cinv)
            live = cinv > 0
            scale[live] = 1.0 / np.sqrt(cinv[live])
            self._scale = scale
        self._cum = np.cumsum(weights)
        self._cum[-1] = 1.0
        self._xs = xs
        self._ys_model = xs @ spec.w_star
        self._ys = ys if ys is not None else None
        self.residual = isinstance(spec.noise, ResidualNoise)
        self.sigma = 0.0 if self.residual else spec.noise.sigma

    def draw(self, gen_x: np.random.Generator, gen_eps: np.random.Generator, size: int):
        if self.gaussian:
            x = gen_x.standard_normal((size, self.spec.dim)) @ self._root.T
            y = x @ self.spec.w_star
            if not self.noiseless and self.sigma > 0:
                y = y + self.sigma * gen_eps.standard_normal(size)
            return x, y
        idx = np.searchsorted(self._cum, gen_x.random(size), side="right")
        x = self._xs[idx]
        if self.noiseless or (self.residual and self._ys is None):
            y = self._ys_model[idx]
        elif self.residual:
            y = self._ys[idx]
        else:
            y = self._ys_model[idx]
            if self.sigma > 0:
                y = y + self.sigma * gen_eps.standard_normal(size)
        if self._scale is not None:
            s = self._scale[idx]
            x = x * s[:, None]
            y = y * s
        return x, y


def _generators(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(children[0]), np.random.default_rng(children[1])


def _drive(spec, config: RunConfig, update, sampler: _Sampler, w0: np.ndarray,
           label: str = "", gamma_label: float | None = None) -> Trajectory:
    """Shared replicate-vectorized loop for all update rules."""
    gen_x, gen_eps = _generators(config.seed)
    reps, d = config.replicates, spec.dim
    hmat = _spec_second_moment(spec)
    w_star = spec.w_star
    w = np.tile(w0, (reps, 1)).astype(float)
    wbar = w.copy()
    points = config.record_points()
    iters, risks, errs = [], [], []

    def record(m: int) -> None:
        diff = wbar - w_star
        r = np.einsum("ri,ij,rj->r", diff, hmat, diff)
        iters.append(m)
        risks.append(float(r.mean()))
        errs.append(float(r.std(ddof=1) / np.sqrt(reps)) if reps > 1 else 0.0)

    next_idx = 0
    diverged_at = None
    if points[0] == 1:
        record(1)
        next_idx = 1
    for m in range(2, config.n + 1):
        x, y = sampler.draw(gen_x, gen_eps, reps)
        w = update(w, x, y, m)
        if not np.all(np.isfinite(w)) or np.einsum("ri,ri->r", w, w).max() > DIVERGENCE_NORM**2:
            diverged_at = m
            break
        wbar += (w - wbar) / m
        if next_idx < len(points) and points[next_idx] == m:
            record(m)
            next_idx += 1
    return Trajectory(
        iterations=np.array(iters, dtype=int),
        risk=np.array(risks),
        standard_error=np.array(errs),
        mode=config.mode,
        gamma=gamma_label if gamma_label is not None else config.gamma,
        diverged=diverged_at is not None,
        diverged_at=diverged_at,
        label=label,
    )


def run_averaged_lms(spec: ProblemSpec, config: RunConfig, scheme=None) -> Trajectory:
    """Averaged constant-step LMS under the requested mode.

    Risk is the testing error against the spec's true second moment; with
    a sampling scheme the objective (and hence H and w*) is unchanged and
    the stream is the scaled resampled one.
    """
    sampler = _Sampler(spec, scheme, noiseless=config.mode == "bias")
    w0 = spec.w_star if config.mode == "variance" else spec.w0
    gamma = config.gamma

    def update(w, x, y, _m):
        resid = np.einsum("ri,ri->r", x, w) - y
        return w - gamma * resid[:, None] * x

    return _drive(spec, config, update, sampler, w0,
                  label=getattr(scheme, "name", "uniform") if scheme else "uniform")


def importance_sampled_stream(spec: ProblemSpec, scheme, seed: int, block: int = 1024):
    """Infinite stream of sqrt(c)-scaled samples drawn from the proposal.

    Second moments of the yielded pairs match the original distribution;
    fourth-order moments pick up the factor c.
    """
    sampler = _Sampler(spec, scheme)
    gen_x, gen_eps = _generators(seed)
    while True:
        xs, ys = sampler.draw(gen_x, gen_eps, block)
        for t in range(block):
            yield xs[t], float(ys[t])


def nlms_run(spec: ProblemSpec, n: int, seed: int, replicates: int = 1,
             record_at: tuple[int, ...] | None = None) -> Trajectory:
    """Normalized LMS on the norm-proportional resampled stream.

    Update w -= x (x^T w - y) / (x^T x), scale-invariant in the sample, so
    it coincides with plain averaged LMS at gamma = 1/E[X^T X] under the
    norm-proportional scheme and shared draws.
    """
    from .sampling import optimal_bias_scheme

    scheme = optimal_bias_scheme(spec)
    if isinstance(spec.design, DiscreteDesign):
        norms = np.einsum("ti,ti->t", spec.design.xs, spec.design.xs)
        if norms.min() <= 0:
            raise SpecError("normalized LMS needs X != 0 on every atom")
    config = RunConfig(gamma=1.0, n=n, replicates=replicates, mode="total",
                       seed=seed, record_at=record_at)
    sampler = _Sampler(spec, scheme)

    def update(w, x, y, _m):
        sq = np.einsum("ri,ri->r", x, x)
        resid = np.einsum("ri,ri->r", x, w) - y
        return w - (resid / sq)[:, None] * x

    gamma_label = 1.0 / float(np.trace(_spec_second_moment(spec)))
    return _drive(spec, config, update, sampler, spec.w0, label="nlms",
                  gamma_label=gamma_label)


def isgd_run(spec: ProblemSpec, step_schedule, n: int, seed: int, replicates: int = 1,
             record_at: tuple[int, ...] | None = None) -> Trajectory:
    """Implicit-update SGD baseline with a per-iteration step schedule.

    Update w -= gamma_i / (1 + gamma_i x^T x) * x (x^T w - y); approaches
    the normalized update for large gamma_i and freezes for gamma_i -> 0.
    """
    if callable(step_schedule):
        schedule = step_schedule
    else:
        steps = np.asarray(step_schedule, dtype=float)

        def schedule(i: int) -> float:
            return float(steps[min(i - 1, len(steps) - 1)])

    config = RunConfig(gamma=1.0, n=n, replicates=replicates, mode="total",
                       seed=seed, record_at=record_at)
    sampler = _Sampler(spec)

    def update(w, x, y, m):
        g = schedule(m - 1)
        if g <= 0:
            raise ValueError("step schedule must stay positive")
        sq = np.einsum("ri,ri->r", x, x)
        resid = np.einsum("ri,ri->r", x, w) - y
        return w - (g / (1.0 + g * sq) * resid)[:, None] * x

    return _drive(spec, config, update, sampler, spec.w0, label="isgd", gamma_label=None)


def class_weighted_spec(spec: ProblemSpec, weights: dict | None = None) -> ProblemSpec:
    """Rescale a binary-labelled spec so each class carries chosen weight.

    Every atom (x, y) becomes (sqrt(c_y) x, sqrt(c_y) y); by default
    c_y = 1/P(Y = y), giving both classes the same total loss weight.  The
    optimum and all moments change accordingly (the new optimum is
    recomputed from the reweighted data).
    """
    design = spec.design
    if not isinstance(design, DiscreteDesign) or design.ys is None:
        raise SpecError("class weighting needs a labelled discrete or empirical spec")
    labels = np.unique(design.ys)
    if len(labels) != 2:
        raise SpecError(f"class weighting needs exactly two label values, found {len(labels)}")
    if weights is None:
        weights = {}
        for lab in labels:
            mass = float(design.probs[design.ys == lab].sum())
            if mass <= 0:
                raise SpecError(f"class {lab!r} has zero probability")
            weights[float(lab)] = 1.0 / mass
    else:
        weights = {float(k): float(v) for k, v in weights.items()}
        for lab in labels:
            if float(lab) not in weights:
                raise SpecError(f"missing weight for class {lab!r}")
    scale = np.sqrt(np.array([weights[float(lab)] for lab in design.ys]))
    return ProblemSpec.discrete(
        design.xs * scale[:, None],
        probs=design.probs,
        ys=design.ys * scale,
        w0=spec.w0,
        kind=spec.kind,
    )
