"""Shared deterministic problem batteries for the test suite."""

import numpy as np
import pytest

from avlms import ProblemSpec


def make_gaussian(d: int, sigma: float, seed: int) -> ProblemSpec:
    rg = np.random.default_rng(seed)
    a = rg.standard_normal((d, d))
    cov = a @ a.T / d + 0.1 * np.eye(d)
    return ProblemSpec.gaussian(
        cov, w_star=rg.standard_normal(d), w0=rg.standard_normal(d), sigma=sigma
    )


def make_discrete(d: int, n_atoms: int, seed: int, residual: bool) -> ProblemSpec:
    rg = np.random.default_rng(seed)
    xs = rg.standard_normal((n_atoms, d)) * rg.uniform(0.5, 2.0, size=(n_atoms, 1))
    probs = rg.uniform(0.2, 1.0, n_atoms)
    probs /= probs.sum()
    if residual:
        ys = xs @ rg.standard_normal(d) + rg.standard_normal(n_atoms)
        return ProblemSpec.discrete(xs, probs, ys=ys, w0=rg.standard_normal(d))
    return ProblemSpec.discrete(
        xs, probs, w_star=rg.standard_normal(d), w0=rg.standard_normal(d),
        sigma=rg.uniform(0.2, 1.5),
    )


def make_empirical(d: int, rows: int, seed: int) -> ProblemSpec:
    rg = np.random.default_rng(seed)
    a = rg.standard_normal((d, d))
    cov = a @ a.T / d + 0.2 * np.eye(d)
    xs = rg.standard_normal((rows, d)) @ np.linalg.cholesky(cov).T
    ys = xs @ rg.standard_normal(d) + 0.5 * rg.standard_normal(rows)
    return ProblemSpec.empirical(xs, ys, w0=rg.standard_normal(d))


def full_battery() -> list[tuple[str, ProblemSpec]]:
    """22 deterministic specs: 8 Gaussian, 8 discrete, 6 empirical."""
    specs = []
    for i, d in enumerate([1, 2, 3, 4, 5, 6, 2, 3]):
        specs.append((f"gauss-{i}", make_gaussian(d, 0.3 + 0.2 * i, 100 + i)))
    for i, d in enumerate([1, 2, 3, 4]):
        specs.append((f"disc-res-{i}", make_discrete(d, d + 4, 200 + i, residual=True)))
        specs.append((f"disc-ind-{i}", make_discrete(d, d + 5, 300 + i, residual=False)))
    for i, d in enumerate([1, 2, 3, 4, 5, 6]):
        specs.append((f"emp-{i}", make_empirical(d, 40 + 30 * i, 400 + i)))
    return specs


@pytest.fixture(scope="session")
def battery():
    return full_battery()
