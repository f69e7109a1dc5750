"""Projection of regressors onto the zero-conditional-expectation subspace.

When the optimal regressor satisfies E[f(X) | X2] = 0 (the independence a
collider structure buys), any fitted regressor improves by subtracting an
estimate of its own conditional expectation.  Four routes are provided:

- generic two-stage projection around any base regressor,
- closed-form projected kernel ridge (the two stages fused analytically),
- ridge regression carried out directly in the projected kernel's space,
- the general-boundary variant that first removes a parent-block regression
  f0(x3) and projects the residual conditioning on (x2, x3).

Targets are centered by their training mean before any fit and the mean is
added back at prediction, so the zero-expectation convention holds for
uncentered data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cme import CmeFit, fit_cme
from .kernels import (
    ColliderKernel,
    GaussianKernel,
    ProjectedKernel,
    _as_points,
    fit_projected_kernel,
    median_sqdist,
)
from .numerics import solve_regularized
from .regressors import KrrSpec, _as_targets


def _stack_anchors(x, unlabeled_x) -> np.ndarray:
    x = _as_points(x)
    if unlabeled_x is None:
        return x
    unlabeled_x = np.asarray(unlabeled_x, dtype=float)
    if unlabeled_x.size == 0:
        return x
    return np.vstack([x, _as_points(unlabeled_x)])


@dataclass(frozen=True)
class MeanCenteringSpec:
    """Wrap any regressor spec: fit on mean-centered targets, add it back."""

    inner: object

    def fit(self, x, y):
        y = _as_targets(y)
        mean = float(y.mean())
        return _CenteredModel(self.inner.fit(x, y - mean), mean)


@dataclass(frozen=True)
class _CenteredModel:
    inner: object
    mean: float

    def predict(self, points) -> np.ndarray:
        return self.inner.predict(points) + self.mean


@dataclass(frozen=True)
class ProjectedRegressor:
    """Two-stage projected regressor: base minus its conditional-mean fit.

    ``stage2`` regresses the conditioning block (columns from ``d1`` on) onto
    the base model's predictions; prediction is a single subtraction.
    """

    base: object
    stage2: object
    d1: int
    mean: float

    def predict(self, points) -> np.ndarray:
        points = _as_points(points)
        return self.mean + self.base.predict(points) - self.stage2.predict(points[:, self.d1 :])


def project_regressor(base_spec, stage2_spec, x, y, unlabeled_x, d1: int) -> ProjectedRegressor:
    """Fit base on labeled data, then its conditional mean on all covariates.

    Stage two uses labeled and unlabeled covariates but never targets, so
    extra unlabeled samples sharpen the projection for free.
    """
    x = _as_points(x)
    y = _as_targets(y)
    if x.shape[0] == 0:
        raise ValueError("labeled data is empty")
    mean = float(y.mean())
    base = base_spec.fit(x, y - mean)
    anchors = _stack_anchors(x, unlabeled_x)
    stage2 = stage2_spec.fit(anchors[:, d1:], base.predict(anchors))
    return ProjectedRegressor(base=base, stage2=stage2, d1=d1, mean=mean)


@dataclass(frozen=True)
class PkrrFit:
    """Closed-form projected kernel ridge regression.

    Prediction is ``alpha^T (k_x(.) - correction(.)) + mean`` where the
    correction carries the embedding-estimated conditional expectation of
    each training feature map.
    """

    kernel: ColliderKernel
    lam: float
    x_train: np.ndarray
    alpha: np.ndarray
    cme: CmeFit
    mode: str
    mean: float

    def predict(self, points) -> np.ndarray:
        points = _as_points(points)
        k = self.kernel
        k_x = k.gram(self.x_train, points)
        z = points[:, k.d1 :]
        w = self.cme.weights(z)  # (m, np)
        if self.mode == "generic":
            k_cross = k.gram(self.x_train, self.cme.anchors_x)
            correction = k_cross @ w
        else:
            anchors1 = self.cme.anchors_x[:, : k.d1]
            offset = k.offset_gram(self.x_train[:, : k.d1], anchors1)  # (n, m)
            correction = k.cond_kernel.gram(self.x_train[:, k.d1 :], z) * (offset @ w)
        return self.alpha @ (k_x - correction) + self.mean


def pkrr_fit(x, y, unlabeled_x, kernel: ColliderKernel, lam: float, gamma: float, mode: str = "factored") -> PkrrFit:
    """Fit ridge regression, then project it through an embedding estimate.

    The embedding is anchored on labeled plus unlabeled covariates; the ridge
    stage sees only labeled data.
    """
    x = _as_points(x)
    y = _as_targets(y)
    mean = float(y.mean())
    alpha = solve_regularized(kernel.gram(x, x), lam, y - mean)
    anchors = _stack_anchors(x, unlabeled_x)
    cme = fit_cme(anchors, anchors[:, kernel.d1 :], kernel.cond_kernel, gamma, mode=mode, x_kernel=kernel)
    return PkrrFit(kernel=kernel, lam=lam, x_train=x, alpha=alpha, cme=cme, mode=mode, mean=mean)


def pkrr_predict(fit: PkrrFit, points) -> np.ndarray:
    return fit.predict(points)


@dataclass(frozen=True)
class HpKrrFit:
    """Ridge regression solved directly in the projected kernel's space."""

    projected: ProjectedKernel
    lam: float
    x_train: np.ndarray
    beta: np.ndarray
    mean: float

    def predict(self, points) -> np.ndarray:
        return self.beta @ self.projected.gram(self.x_train, points) + self.mean


def hpkrr_fit(x, y, unlabeled_x, kernel: ColliderKernel, lam: float, gamma: float) -> HpKrrFit:
    """Build the projected kernel from an embedding fit, then solve ridge in it.

    The projected Gram is positive semi-definite only up to embedding
    estimation error, so the solve runs under the escalating jitter policy.
    """
    x = _as_points(x)
    y = _as_targets(y)
    mean = float(y.mean())
    anchors = _stack_anchors(x, unlabeled_x)
    cme = fit_cme(anchors, anchors[:, kernel.d1 :], kernel.cond_kernel, gamma, mode="factored", x_kernel=kernel)
    projected = fit_projected_kernel(kernel, cme)
    big_kp = projected.gram(x, x)
    big_kp = 0.5 * (big_kp + big_kp.T)
    beta = solve_regularized(big_kp, lam, y - mean)
    return HpKrrFit(projected=projected, lam=lam, x_train=x, beta=beta, mean=mean)


def hpkrr_predict(fit: HpKrrFit, points) -> np.ndarray:
    return fit.predict(points)


@dataclass(frozen=True)
class GeneralColliderFit:
    """Parent-block regression plus projected residual model.

    Points are laid out (x1, x2, x3).  Prediction adds the parent-block fit
    f0(x3) to the residual model's projected prediction; with an empty x3
    block f0 degenerates to the training mean and the simple-collider
    estimator is recovered exactly.
    """

    f0: object | None
    f0_value: float
    residual: object
    d1: int
    d2: int
    d3: int

    def predict(self, points) -> np.ndarray:
        points = _as_points(points)
        if self.f0 is None:
            base = np.full(points.shape[0], self.f0_value)
        else:
            base = self.f0.predict(points[:, self.d1 + self.d2 :])
        return base + self.residual.predict(points)

    def f0_predict(self, x3) -> np.ndarray:
        if self.f0 is None:
            x3 = np.asarray(x3, dtype=float)
            n = x3.shape[0] if x3.ndim else 1
            return np.full(n, self.f0_value)
        return self.f0.predict(x3)


def general_fit(
    x,
    y,
    d1: int,
    d2: int,
    d3: int,
    unlabeled_x,
    kernel: ColliderKernel,
    lam: float,
    gamma: float,
    method: str = "pkrr",
    f0_spec=None,
    base_spec=None,
    stage2_spec=None,
) -> GeneralColliderFit:
    """Fit f0 on (x3, y), project the residual regression conditioning on (x2, x3).

    ``kernel`` is a collider kernel whose second factor runs over the
    concatenated (x2, x3) block.  ``method`` picks the residual estimator:
    two-stage, pkrr, or hpkrr.
    """
    x = _as_points(x)
    y = _as_targets(y)
    if x.shape[1] != d1 + d2 + d3:
        raise ValueError(f"expected {d1 + d2 + d3} columns, got {x.shape[1]}")
    if kernel.d1 != d1 or kernel.d2 != d2 + d3:
        raise ValueError("kernel blocks disagree with (d1, d2 + d3)")

    if d3 == 0:
        f0 = None
        f0_value = float(y.mean())
        residual_targets = y - f0_value
    else:
        x3 = x[:, d1 + d2 :]
        if f0_spec is None:
            f0_spec = _default_f0_spec(x3, y)
        f0 = MeanCenteringSpec(f0_spec).fit(x3, y)
        f0_value = 0.0
        residual_targets = y - f0.predict(x3)

    if method == "pkrr":
        residual = pkrr_fit(x, residual_targets, unlabeled_x, kernel, lam, gamma)
    elif method == "hpkrr":
        residual = hpkrr_fit(x, residual_targets, unlabeled_x, kernel, lam, gamma)
    elif method == "two-stage":
        base = base_spec if base_spec is not None else KrrSpec(kernel=kernel, lam=lam)
        stage2 = stage2_spec if stage2_spec is not None else KrrSpec(kernel=kernel.cond_kernel, lam=gamma)
        residual = project_regressor(base, stage2, x, residual_targets, unlabeled_x, d1)
    else:
        raise ValueError(f"unknown method {method!r}")
    return GeneralColliderFit(f0=f0, f0_value=f0_value, residual=residual, d1=d1, d2=d2, d3=d3)


def _default_f0_spec(x3, y, folds: int = 5) -> KrrSpec:
    """Parent-block ridge with its own lengthscale/weight grid, k-fold tuned."""
    med = median_sqdist(x3)
    n = x3.shape[0]
    folds = min(folds, n)
    fold_ids = np.arange(n) % folds
    best = None
    for mult in (0.5, 1.0, 2.0, 5.0):
        kernel = GaussianKernel(mult * med)
        for lam in (1e-3, 1e-2, 1e-1, 1.0):
            spec = MeanCenteringSpec(KrrSpec(kernel, lam))
            sse = 0.0
            for f in range(folds):
                hold = fold_ids == f
                model = spec.fit(x3[~hold], y[~hold])
                sse += float(np.sum((model.predict(x3[hold]) - y[hold]) ** 2))
            key = (sse / n, -lam, -mult)
            if best is None or key < best[0]:
                best = (key, KrrSpec(kernel, lam))
    return best[1]


def general_predict(fit: GeneralColliderFit, points) -> np.ndarray:
    return fit.predict(points)
