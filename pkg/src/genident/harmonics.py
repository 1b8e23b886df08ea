"""Geometric-harmonics regression and local-bijectivity (Jacobian) checks.

A Gaussian kernel eigenbasis on the training inputs serves as the function
basis; out-of-sample values come from the Nystrom extension of each retained
eigenvector, and the extension formula differentiates in closed form, which is
what the determinant checks rely on.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .dmaps import median_epsilon, pairwise_sq_dists
from .errors import DomainError

__all__ = [
    "GHModel",
    "JacobianReport",
    "gh_fit",
    "gh_predict",
    "gh_gradient",
    "distance_to_training",
    "jacobian_report",
]

DEFAULT_RETAIN = 250
DEFAULT_DELTA = 1e-9


@dataclass(frozen=True)
class GHModel:
    """Fitted geometric-harmonics regressor (immutable, thread-safe)."""

    training_inputs: np.ndarray  # (N, d)
    epsilon_star: float
    eigenvalues: np.ndarray  # retained sigma_alpha, descending
    eigenvectors: np.ndarray  # (N, r) orthonormal basis columns
    coefficients: np.ndarray  # (r, n_targets) projections <f, psi_alpha>
    output_scaling: tuple[np.ndarray, np.ndarray] | None = field(default=None)
    target_names: tuple[str, ...] | None = None

    @property
    def n_retained(self) -> int:
        return len(self.eigenvalues)

    def projected_targets(self) -> np.ndarray:
        """The delta-truncated projection of the training targets."""
        return self.eigenvectors @ self.coefficients


@dataclass(frozen=True)
class JacobianReport:
    determinants: np.ndarray
    sign_consistent: bool
    min_abs: float


def gh_fit(inputs: np.ndarray, targets: np.ndarray, epsilon_star: float | None = None, *,
           retain: int = DEFAULT_RETAIN, delta: float = DEFAULT_DELTA,
           epsilon_mult: float = 1.0, output_scaling=None,
           target_names=None) -> GHModel:
    """Project target columns onto the kernel eigenbasis of the inputs.

    ``retain`` caps the basis size; eigenvalues below ``delta`` times the
    leading one are dropped regardless (they make the Nystrom division
    explode).  When ``epsilon_star`` is omitted it defaults to ``epsilon_mult``
    times the median squared pairwise distance of the inputs.
    """
    X = np.atleast_2d(np.asarray(inputs, dtype=float))
    F = np.asarray(targets, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    n = X.shape[0]
    if F.shape[0] != n:
        raise DomainError("inputs and targets must have matching row counts")
    if retain < 1:
        raise DomainError("retain must be >= 1")
    if n < 2:
        raise DomainError("need at least two training rows")
    if epsilon_star is None:
        epsilon_star = median_epsilon(X, epsilon_mult)
    if epsilon_star <= 0:
        raise DomainError("epsilon_star must be positive")

    W = np.exp(pairwise_sq_dists(X) / (-2.0 * epsilon_star))
    k = min(retain, n)
    if n > 3000 and k < n // 4:
        vals, vecs = scipy.sparse.linalg.eigsh(W, k=k, which="LA")
        order = np.argsort(vals)[::-1]
        vals, vecs = vals[order], vecs[:, order]
    else:
        vals, vecs = scipy.linalg.eigh(W, subset_by_index=(n - k, n - 1))
        vals, vecs = vals[::-1].copy(), vecs[:, ::-1].copy()
    keep = vals > delta * vals[0]
    if not np.all(keep):
        warnings.warn(f"dropped {int((~keep).sum())} eigenpair(s) below the "
                      f"delta * sigma_0 floor")
    vals, vecs = vals[keep], vecs[:, keep]
    coeff = vecs.T @ F
    return GHModel(X.copy(), float(epsilon_star), vals, vecs, coeff,
                   output_scaling=output_scaling,
                   target_names=tuple(target_names) if target_names else None)


def _kernel_to_training(m: GHModel, x_new: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    X = np.atleast_2d(np.asarray(x_new, dtype=float))
    if X.shape[1] != m.training_inputs.shape[1]:
        raise DomainError(
            f"input dimension {X.shape[1]} does not match training dimension "
            f"{m.training_inputs.shape[1]}")
    d2 = pairwise_sq_dists(X, m.training_inputs)
    return X, np.exp(d2 / (-2.0 * m.epsilon_star))


def gh_predict(m: GHModel, x_new: np.ndarray) -> np.ndarray:
    """Nystrom extension of the fitted targets to new points.

    On a training point this reproduces the projected (not raw) target.  Far
    from the training set the kernel vanishes and predictions decay to zero.
    """
    X, K = _kernel_to_training(m, x_new)
    psi_ext = K @ (m.eigenvectors / m.eigenvalues[None, :])
    out = psi_ext @ m.coefficients
    return out[0] if np.asarray(x_new).ndim == 1 else out


def distance_to_training(m: GHModel, x_new: np.ndarray) -> np.ndarray:
    """Extrapolation diagnostic: nearest training distance in kernel-scale units."""
    X = np.atleast_2d(np.asarray(x_new, dtype=float))
    d2 = pairwise_sq_dists(X, m.training_inputs)
    return np.sqrt(d2.min(axis=1) / m.epsilon_star)


def gh_gradient(m: GHModel, x_new: np.ndarray) -> np.ndarray:
    """Closed-form gradient of the extension at new points.

    Differentiating the kernel in the Nystrom formula gives, per retained
    basis function, a weighted sum of (training_point - x) displacement
    vectors; shape is (d, n_targets) for a single point, else
    (m, d, n_targets).
    """
    single = np.asarray(x_new).ndim == 1
    X, K = _kernel_to_training(m, x_new)
    diff = m.training_inputs[None, :, :] - X[:, None, :]  # (m, N, d)
    wk = K[:, :, None] * diff / m.epsilon_star  # (m, N, d)
    psi_grad = np.einsum("mnd,nr->mdr", wk, m.eigenvectors / m.eigenvalues[None, :],
                         optimize=True)
    grad = psi_grad @ m.coefficients  # (m, d, n_targets)
    return grad[0] if single else grad


def jacobian_report(m: GHModel, points: np.ndarray) -> JacobianReport:
    """Jacobian determinants of a square map at each point, plus sign consistency."""
    X = np.atleast_2d(np.asarray(points, dtype=float))
    d = m.training_inputs.shape[1]
    t = m.coefficients.shape[1]
    if d != t:
        raise DomainError(f"Jacobian check needs a square map, got {d} -> {t}")
    grads = gh_gradient(m, X)  # (m, d, d)
    dets = np.linalg.det(np.swapaxes(grads, 1, 2))
    sign_consistent = bool(np.all(dets > 0) or np.all(dets < 0))
    return JacobianReport(dets, sign_consistent, float(np.abs(dets).min()))
