"""Gaussian representations and the energies used to compare them.

Every word is a Gaussian density N(mean, Sigma) with Sigma restricted to a
spherical (one shared variance) or diagonal (one variance per axis)
covariance.  This module is the pure numerical kernel: the log expected
likelihood inner product, the KL divergence, their analytic gradients, and
the mean/variance of dot products between samples from two Gaussians.

All functions here are stateless and operate on float64 arrays.  Variance
arrays carry the covariance representation by shape: ``(1,)`` for spherical,
``(d,)`` for diagonal.  The ``*_arrays`` variants accept leading batch axes
and are what the trainer calls in bulk; the object-level API wraps them for
single pairs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

SPHERICAL = "spherical"
DIAGONAL = "diagonal"
COV_KINDS = (SPHERICAL, DIAGONAL)

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class Gaussian:
    """One embedding: a mean vector and a restricted covariance.

    ``var`` holds the covariance diagonal: a single entry when ``kind`` is
    spherical, ``d`` entries when diagonal.  Entries must be strictly
    positive; the kernel asserts this rather than repairing it (clamping is
    the optimizer's job).
    """

    mean: np.ndarray
    var: np.ndarray
    kind: str = DIAGONAL

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        var = np.asarray(self.var, dtype=np.float64)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "var", var)
        if mean.ndim != 1 or var.ndim != 1:
            raise ValueError("mean and var must be 1-d arrays")
        if self.kind not in COV_KINDS:
            raise ValueError(f"unknown covariance kind {self.kind!r}")
        expect = 1 if self.kind == SPHERICAL else mean.shape[0]
        if var.shape[0] != expect:
            raise ValueError(
                f"{self.kind} covariance over d={mean.shape[0]} needs "
                f"{expect} entries, got {var.shape[0]}"
            )
        if not np.all(np.isfinite(mean)):
            raise ValueError("mean has non-finite entries")
        if not np.all(np.isfinite(var)) or np.any(var <= 0.0):
            raise ValueError("covariance entries must be finite and > 0")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class EnergyGradient:
    """Gradients of an energy with respect to both arguments.

    Covariance gradients match the representation of the inputs: per-entry
    for diagonal, a single tied value (the sum over the diagonal, i.e. the
    trace of the matrix gradient) for spherical.
    """

    d_mean_i: np.ndarray
    d_mean_j: np.ndarray
    d_cov_i: np.ndarray
    d_cov_j: np.ndarray


@dataclass(frozen=True)
class DotProductMoments:
    mean_z: float
    var_z: float


def _check_pair(a: Gaussian, b: Gaussian) -> None:
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    if a.kind != b.kind:
        raise ValueError(f"covariance kind mismatch: {a.kind} vs {b.kind}")


def _sum_entries(x: np.ndarray, d: int) -> np.ndarray:
    """Sum a per-diagonal-entry quantity over all d entries.

    ``x`` has shape ``(..., k)`` with k in {1, d}; entries of a spherical
    representation are implicitly replicated d times, so the k=1 case
    multiplies by d instead of materializing the broadcast.
    """
    k = x.shape[-1]
    s = x.sum(axis=-1)
    if k == 1 and d != 1:
        s = s * d
    return s


def _restrict_cov_grad(entry_grad: np.ndarray, k: int, d: int) -> np.ndarray:
    """Collapse a per-entry covariance gradient to representation shape k.

    A spherical variance is one tied parameter, so its gradient is the sum
    of the per-entry gradients (chain rule through the tie).
    """
    if k == 1:
        g = entry_grad.sum(axis=-1, keepdims=True)
        if entry_grad.shape[-1] == 1 and d != 1:
            g = g * d
        return g
    if entry_grad.shape[-1] == 1:
        return np.broadcast_to(entry_grad, entry_grad.shape[:-1] + (d,)).copy()
    return entry_grad


def el_energy_arrays(mean_a, var_a, mean_b, var_b) -> np.ndarray:
    """log N(0; mean_a - mean_b, Sigma_a + Sigma_b), batched.

    = -1/2 log det(Sa+Sb) - 1/2 (ma-mb)^T (Sa+Sb)^-1 (ma-mb) - d/2 log 2pi
    """
    d = mean_a.shape[-1]
    s = var_a + var_b
    delta = mean_a - mean_b
    logdet = _sum_entries(np.log(s), d)
    maha = (delta * delta / s).sum(axis=-1)
    return -0.5 * logdet - 0.5 * maha - 0.5 * d * LOG_2PI


def el_energy_with_grads(mean_a, var_a, mean_b, var_b):
    """Fused energy + gradients for the log expected likelihood.

    Returns (energy, d_mean_a, d_mean_b, d_cov_a, d_cov_b).  With
    D = (Sa+Sb)^-1 (ma-mb): d/dma = -D, d/dmb = +D, and both covariance
    gradients are the diagonal of (D D^T - (Sa+Sb)^-1) / 2, collapsed to a
    single tied value for spherical inputs.
    """
    d = mean_a.shape[-1]
    k = var_a.shape[-1]
    s = var_a + var_b
    delta = mean_a - mean_b
    inv_s = 1.0 / s
    big_delta = delta * inv_s
    energy = (
        -0.5 * _sum_entries(np.log(s), d)
        - 0.5 * (delta * big_delta).sum(axis=-1)
        - 0.5 * d * LOG_2PI
    )
    d_mean_a = -big_delta
    entry = 0.5 * (big_delta * big_delta - inv_s)
    d_cov = _restrict_cov_grad(entry, k, d)
    return energy, d_mean_a, -d_mean_a, d_cov, d_cov.copy()


def el_grad_arrays(mean_a, var_a, mean_b, var_b):
    """Gradients of ``el_energy_arrays`` w.r.t. both means and variances."""
    return el_energy_with_grads(mean_a, var_a, mean_b, var_b)[1:]


def kl_energy_arrays(mean_a, var_a, mean_b, var_b) -> np.ndarray:
    """KL(N_b || N_a), batched.

    = 1/2 (tr(Sa^-1 Sb) + (ma-mb)^T Sa^-1 (ma-mb) - d - log det Sb/det Sa)
    """
    d = mean_a.shape[-1]
    delta = mean_a - mean_b
    trace = _sum_entries(var_b / var_a, d)
    maha = (delta * delta / var_a).sum(axis=-1)
    logdet = _sum_entries(np.log(var_b), d) - _sum_entries(np.log(var_a), d)
    return 0.5 * (trace + maha - d - logdet)


def kl_energy_with_grads(mean_a, var_a, mean_b, var_b):
    """Fused -KL(N_b || N_a) energy + its gradients.

    Returns (energy, d_mean_a, d_mean_b, d_cov_a, d_cov_b) where energy is
    the *negative* divergence (the training score).  With
    D' = Sa^-1 (ma-mb): d/dma = -D', d/dmb = +D',
    d/dSa = (Sa^-1 Sb Sa^-1 + D' D'^T - Sa^-1) / 2 on the diagonal,
    d/dSb = (Sb^-1 - Sa^-1) / 2 on the diagonal.
    """
    d = mean_a.shape[-1]
    k = var_a.shape[-1]
    inv_a = 1.0 / var_a
    delta = mean_a - mean_b
    big_delta = delta * inv_a
    ratio = var_b * inv_a
    kl = 0.5 * (
        _sum_entries(ratio, d)
        + (delta * big_delta).sum(axis=-1)
        - d
        - _sum_entries(np.log(ratio), d)
    )
    d_mean_a = -big_delta
    entry_a = 0.5 * (ratio * inv_a + big_delta * big_delta - inv_a)
    entry_b = 0.5 * (1.0 / var_b - inv_a)
    d_cov_a = _restrict_cov_grad(entry_a, k, d)
    d_cov_b = _restrict_cov_grad(entry_b, k, d)
    return -kl, d_mean_a, -d_mean_a, d_cov_a, d_cov_b


def kl_grad_arrays(mean_a, var_a, mean_b, var_b):
    """Gradients of -KL(N_b || N_a) (the KL energy), batched."""
    return kl_energy_with_grads(mean_a, var_a, mean_b, var_b)[1:]


def log_el_energy(a: Gaussian, b: Gaussian) -> float:
    """Log of the expected likelihood inner product between two Gaussians.

    Symmetric in its arguments.
    """
    _check_pair(a, b)
    return float(el_energy_arrays(a.mean, a.var, b.mean, b.var))


def grad_log_el(a: Gaussian, b: Gaussian) -> EnergyGradient:
    """Analytic gradient of ``log_el_energy`` w.r.t. both arguments."""
    _check_pair(a, b)
    dma, dmb, dca, dcb = el_grad_arrays(a.mean, a.var, b.mean, b.var)
    return EnergyGradient(dma, dmb, dca, dcb)


def kl_energy(a: Gaussian, b: Gaussian) -> float:
    """KL(N_b || N_a): how badly b's density codes under a.

    Nonnegative, zero iff the parameters coincide, asymmetric.  The
    associated training energy is the negative of this value.
    """
    _check_pair(a, b)
    return float(kl_energy_arrays(a.mean, a.var, b.mean, b.var))


def grad_kl(a: Gaussian, b: Gaussian) -> EnergyGradient:
    """Analytic gradient of -KL(N_b || N_a) w.r.t. both arguments.

    Signs follow the energy convention: ascending the returned direction
    increases -KL (pulls b inside a).
    """
    _check_pair(a, b)
    dma, dmb, dca, dcb = kl_grad_arrays(a.mean, a.var, b.mean, b.var)
    return EnergyGradient(dma, dmb, dca, dcb)


def dot_product_moments(a: Gaussian, b: Gaussian) -> DotProductMoments:
    """Mean and variance of x^T y for independent x ~ N_a, y ~ N_b.

    mean_z = ma^T mb
    var_z  = ma^T Sb ma + mb^T Sa mb + tr(Sa Sb)

    The variance couples each mean with the *other* distribution's
    covariance; this is the form a Monte-Carlo estimate confirms.
    """
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    d = a.dim
    mean_z = float(a.mean @ b.mean)
    var_z = float(
        (a.mean * a.mean * b.var).sum()
        + (b.mean * b.mean * a.var).sum()
        + _sum_entries(a.var * b.var, d)
    )
    return DotProductMoments(mean_z=mean_z, var_z=var_z)


def dot_product_range(a: Gaussian, b: Gaussian, c: float) -> tuple[float, float]:
    """Interval mean_z -/+ c standard deviations of the dot product."""
    if c < 0:
        raise ValueError("c must be nonnegative")
    m = dot_product_moments(a, b)
    half = c * float(np.sqrt(m.var_z))
    return m.mean_z - half, m.mean_z + half


def cosine_of_means(a: Gaussian, b: Gaussian) -> float:
    """Cosine similarity between the two mean vectors."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    na = float(np.linalg.norm(a.mean))
    nb = float(np.linalg.norm(b.mean))
    if na == 0.0 or nb == 0.0:
        warnings.warn("cosine of a zero-norm mean is defined as 0", RuntimeWarning)
        return 0.0
    return float(a.mean @ b.mean) / (na * nb)


def cosine_of_distributions(a: Gaussian, b: Gaussian) -> float:
    """Cosine between the densities under the expected likelihood inner product.

    exp(logE(a,b) - logE(a,a)/2 - logE(b,b)/2); equals 1 when a == b.
    """
    _check_pair(a, b)
    ab = log_el_energy(a, b)
    aa = log_el_energy(a, a)
    bb = log_el_energy(b, b)
    return float(np.exp(ab - 0.5 * aa - 0.5 * bb))
