"""The regularized Gaussian measure at finite truncation.

Provides sampling, Gauss-Hermite and Monte-Carlo expectations and the
Cameron-Martin structure (dual pairing, covariance map and its inverse).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import BudgetExceeded, NotSPD
from .model import ModelSpec, covariance

DEFAULT_GH_LEVEL_1D = 128
DEFAULT_GH_LEVEL_ND = 16
MAX_GH_LEVEL = 256
MAX_MC_SAMPLES = 4_000_000


@dataclass(frozen=True)
class GaussianMeasure:
    """Centred Gaussian with covariance ``cov`` = L L^T."""

    cov: np.ndarray
    chol: np.ndarray
    inv: np.ndarray
    logdet: float

    @property
    def dim(self) -> int:
        return self.cov.shape[0]


@dataclass(frozen=True)
class ExpectationResult:
    value: float
    error: float
    method: str  # "quadrature" | "monte-carlo"
    count: int


def build_measure(spec_or_cov) -> GaussianMeasure:
    """Construct the measure from a ModelSpec or an SPD covariance matrix."""
    if isinstance(spec_or_cov, ModelSpec):
        cov = covariance(spec_or_cov)
    else:
        cov = np.atleast_2d(np.asarray(spec_or_cov, dtype=float))
    cov = 0.5 * (cov + cov.T)
    try:
        chol = sla.cholesky(cov, lower=True)
    except sla.LinAlgError as exc:
        raise NotSPD("covariance is not positive definite") from exc
    inv = sla.cho_solve((chol, True), np.eye(cov.shape[0]))
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
    return GaussianMeasure(cov=cov, chol=chol, inv=inv, logdet=logdet)


def sample(measure: GaussianMeasure, count: int, seed: int) -> np.ndarray:
    """Draw ``count`` fields psi = L z, deterministic given ``seed``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((count, measure.dim))
    return z @ measure.chol.T


def cm_inner(measure: GaussianMeasure, t: np.ndarray, s: np.ndarray) -> float:
    """Reproducing-kernel inner product <T, S> = T^T C S of dual vectors."""
    return float(np.asarray(t) @ measure.cov @ np.asarray(s))


def r_nu(measure: GaussianMeasure, t: np.ndarray) -> np.ndarray:
    """Map a dual vector to its Cameron-Martin representative C T."""
    return measure.cov @ np.asarray(t, dtype=float)


def r_nu_inverse(measure: GaussianMeasure, phi: np.ndarray) -> np.ndarray:
    """Inverse of :func:`r_nu` by a linear solve."""
    return sla.cho_solve((measure.chol, True), np.asarray(phi, dtype=float))


# -- quadrature machinery ---------------------------------------------


def gauss_hermite_nodes(level: int, dim: int):
    """Tensorized probabilists' Gauss-Hermite rule for N(0, I_dim).

    Returns nodes of shape (level**dim, dim) and weights summing to one.
    """
    x, w = np.polynomial.hermite_e.hermegauss(level)
    w = w / np.sqrt(2.0 * np.pi)
    if dim == 1:
        return x[:, None], w
    grids = np.meshgrid(*([x] * dim), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=-1)
    weights = np.ones(level**dim)
    for axis in range(dim):
        weights *= np.meshgrid(*([w] * dim), indexing="ij")[axis].ravel()
    return nodes, weights


def default_level(dim: int) -> int:
    return DEFAULT_GH_LEVEL_1D if dim == 1 else DEFAULT_GH_LEVEL_ND


def _quadrature_value(measure: GaussianMeasure, g, level: int) -> float:
    nodes, weights = gauss_hermite_nodes(level, measure.dim)
    psi = nodes @ measure.chol.T
    vals = np.asarray(g(psi), dtype=float)
    return float(weights @ vals)


def expectation(
    measure: GaussianMeasure,
    g,
    method: str = "quadrature",
    target_error: float = 1e-10,
    level: int | None = None,
    samples: int = 100_000,
    seed: int = 0,
) -> ExpectationResult:
    """Expectation of ``g`` under the measure.

    ``g`` must accept an array of fields of shape (n, M) and return n values.
    Quadrature is tensorized Gauss-Hermite through the Cholesky factor and
    refines the level until two consecutive rules agree within the target;
    Monte-Carlo returns the sample mean with a standard-error estimate.
    """
    if method == "quadrature":
        if measure.dim > 4:
            raise BudgetExceeded("quadrature expectations are limited to M <= 4")
        lvl = level if level is not None else default_level(measure.dim)
        value = _quadrature_value(measure, g, lvl)
        while True:
            nxt = min(2 * lvl, MAX_GH_LEVEL)
            refined = _quadrature_value(measure, g, nxt)
            err = abs(refined - value)
            if err <= target_error:
                return ExpectationResult(refined, err, "quadrature", nxt**measure.dim)
            if nxt >= MAX_GH_LEVEL or nxt**measure.dim > 2_000_000:
                raise BudgetExceeded(
                    f"quadrature error {err:.3e} above target {target_error:.3e} "
                    f"at level {nxt}"
                )
            value, lvl = refined, nxt
    elif method == "monte-carlo":
        n = samples
        while True:
            psi = sample(measure, n, seed)
            vals = np.asarray(g(psi), dtype=float)
            mean = float(vals.mean())
            se = float(vals.std(ddof=1) / np.sqrt(n))
            if se <= target_error or n >= MAX_MC_SAMPLES:
                if se > target_error:
                    raise BudgetExceeded(
                        f"MC standard error {se:.3e} above target {target_error:.3e} "
                        f"at {n} samples"
                    )
                return ExpectationResult(mean, se, "monte-carlo", n)
            n = min(4 * n, MAX_MC_SAMPLES)
    else:
        raise ValueError(f"unknown expectation method {method!r}")


def fernique_growth_check(
    measure: GaussianMeasure, alpha: float | None = None,
    samples: int = 100_000, seed: int = 7,
) -> bool:
    """Sampled check that exp[alpha |psi|^2] has a stable mean under the measure.

    Used to admit mildly unbounded (odd) interactions: a diverging running
    mean signals a non-integrable tilt.
    """
    lam_max = float(np.linalg.eigvalsh(measure.cov).max())
    if alpha is None:
        alpha = 0.25 / lam_max
    psi = sample(measure, samples, seed)
    vals = np.exp(alpha * np.sum(psi**2, axis=1))
    if not np.all(np.isfinite(vals)):
        return False
    # a single sample carrying a visible fraction of the total signals a
    # heavy tail whose sample mean will not stabilise
    top_share = float(vals.max() / vals.sum())
    return top_share <= 0.02
