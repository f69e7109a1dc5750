"""Conditional mean embedding estimation and RKHS inner products.

The embedding of P(X | Z = z) into the space induced by a kernel k over X is
estimated from paired samples as ``mu_z = k_anchors^T (L + gamma I)^{-1}
ell_anchors(z)``, where L is the Gram of a kernel ell over the conditioning
variable.  Inner products ``<f, mu_z>`` then evaluate conditional
expectations of RKHS functions.

Two estimator forms are supported.  ``generic`` works for any kernel over X.
``factored`` exploits the collider product structure k = (r + 1) * ell: the
embedding factorizes into an x1-part against the offset kernel r + 1 times
the conditioning feature map, which needs far fewer kernel evaluations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kernels import ColliderKernel, _as_points
from .numerics import PsdFactorization, cholesky_psd


@dataclass(frozen=True)
class CmeFit:
    """Fitted conditional mean embedding.

    Anchors may include unlabeled covariate samples; no targets are involved.
    The (L + gamma I) factorization is cached at fit time, so conditioning on
    a new point costs one triangular solve.
    """

    anchors_x: np.ndarray
    anchors_z: np.ndarray
    ell: object
    gamma: float
    mode: str
    x_kernel: object
    chol: PsdFactorization = field(repr=False)

    def weights(self, z_points) -> np.ndarray:
        """Embedding weights a(z) = (L + gamma I)^{-1} ell_anchors(z).

        Returns an (n_anchors, n_z) column per conditioning point.
        """
        z_points = _as_points(z_points)
        return self.chol.solve(self.ell.gram(self.anchors_z, z_points))


def fit_cme(x_samples, z_samples, ell, gamma: float, mode: str = "factored", x_kernel=None) -> CmeFit:
    """Fit the embedding on paired (x, z) anchor samples.

    ``x_kernel`` is the kernel over X whose space the embedding lives in; the
    factored mode requires a ColliderKernel whose second factor is ``ell``.
    """
    x_samples = _as_points(x_samples)
    z_samples = _as_points(z_samples)
    if x_samples.shape[0] == 0:
        raise ValueError("cannot fit an embedding on an empty sample")
    if x_samples.shape[0] != z_samples.shape[0]:
        raise ValueError("x and z sample counts disagree")
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    if mode not in ("generic", "factored"):
        raise ValueError(f"unknown mode {mode!r}")
    if x_kernel is None:
        raise ValueError("an X-space kernel is required")
    if mode == "factored":
        if not isinstance(x_kernel, ColliderKernel):
            raise ValueError("factored mode requires a collider product kernel")
        if x_kernel.cond_kernel != ell:
            raise ValueError("factored mode requires ell to be the kernel's second factor")
    big_l = ell.gram(z_samples, z_samples)
    chol = cholesky_psd(big_l + gamma * np.eye(big_l.shape[0]))
    return CmeFit(
        anchors_x=x_samples,
        anchors_z=z_samples,
        ell=ell,
        gamma=gamma,
        mode=mode,
        x_kernel=x_kernel,
        chol=chol,
    )


def cme_embed_eval(fit: CmeFit, z, x):
    """Evaluate the embedded function mu_{X|Z=z} at point(s) x.

    ``z`` is a single conditioning point; ``x`` may be one point or a batch.
    """
    x_pts = _as_points(x)
    a = fit.weights(_as_points(z))[:, 0]
    if fit.mode == "generic":
        values = fit.x_kernel.gram(x_pts, fit.anchors_x) @ a
    else:
        k = fit.x_kernel
        x1, x2 = k.split(x_pts)
        anchors1 = fit.anchors_x[:, : k.d1]
        values = (k.offset_gram(x1, anchors1) @ a) * fit.ell.gram(x2, _as_points(z))[:, 0]
    if np.ndim(x) == 1:
        return float(values[0])
    return values


@dataclass(frozen=True)
class DualFunction:
    """RKHS element in dual form f = sum_i coefficients[i] * k(anchors[i], .)."""

    coefficients: np.ndarray
    anchors: np.ndarray
    kernel: object

    def __call__(self, points) -> np.ndarray:
        return self.kernel.gram(_as_points(points), self.anchors) @ self.coefficients


def cme_inner(f: DualFunction, fit: CmeFit, z) -> float:
    """Inner product <f, mu_{X|Z=z}>, i.e. the conditional expectation of f.

    By the reproducing property this is the embedded function evaluated at
    f's anchors, weighted by f's coefficients; in generic mode it reduces to
    ``alpha^T K_cross a(z)`` and in factored mode to the analogue with the
    offset first factor and a diagonal conditioning term.
    """
    if f.kernel != fit.x_kernel:
        raise ValueError("f lives in a different space than the embedding")
    values = cme_embed_eval(fit, z, _as_points(f.anchors))
    return float(np.dot(np.asarray(f.coefficients, dtype=float), values))
