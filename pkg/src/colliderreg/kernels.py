"""Kernel evaluations and Gram assembly.

Three kernel families live here: the Gaussian kernel
``exp(-||u - u'||^2 / theta)``, the collider product kernel
``(r(x1, x1') + 1) * ell(x2, x2')`` over concatenated inputs, and the
projected kernel obtained by removing the conditional-expectation component
from each feature map through a fitted conditional mean embedding.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:  # pragma: no cover
    from .cme import CmeFit

# Column tile width for Gram assembly; keeps distance blocks cache-resident
# when point sets reach the thousands.
_TILE = 256


def _as_points(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2:
        raise ValueError(f"points must be a (n, d) array, got shape {a.shape}")
    return a


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.empty((a.shape[0], b.shape[0]))
    a_sq = np.einsum("ij,ij->i", a, a)[:, None]
    for j in range(0, b.shape[0], _TILE):
        blk = b[j : j + _TILE]
        d = a_sq + np.einsum("ij,ij->i", blk, blk)[None, :] - 2.0 * (a @ blk.T)
        np.maximum(d, 0.0, out=d)
        out[:, j : j + blk.shape[0]] = d
    return out


@dataclass(frozen=True)
class GaussianKernel:
    """Gaussian kernel with lengthscale theta: k(u, u') = exp(-||u-u'||^2/theta)."""

    lengthscale: float

    def __post_init__(self):
        if self.lengthscale <= 0:
            raise ValueError(f"lengthscale must be positive, got {self.lengthscale}")

    def gram(self, a, b) -> np.ndarray:
        a, b = _as_points(a), _as_points(b)
        if a.shape[1] != b.shape[1]:
            raise ValueError(f"point dimensions disagree: {a.shape[1]} vs {b.shape[1]}")
        return np.exp(-_sq_dists(a, b) / self.lengthscale)

    @property
    def diag_value(self) -> float:
        return 1.0


@dataclass(frozen=True)
class ColliderKernel:
    """Product kernel (r + 1) * ell over points split as (x1, x2).

    The +1 offset on the first factor keeps functions constant in x1 inside
    the induced space, which is what makes conditional-expectation removal a
    well-defined projection of that space.
    """

    child_kernel: GaussianKernel
    cond_kernel: GaussianKernel
    d1: int
    d2: int

    def __post_init__(self):
        if self.d1 < 1 or self.d2 < 1:
            raise ValueError("both input blocks need at least one dimension")

    def split(self, x) -> tuple[np.ndarray, np.ndarray]:
        x = _as_points(x)
        if x.shape[1] != self.d1 + self.d2:
            raise ValueError(
                f"expected {self.d1 + self.d2} columns, got {x.shape[1]}"
            )
        return x[:, : self.d1], x[:, self.d1 :]

    def gram(self, a, b) -> np.ndarray:
        a1, a2 = self.split(a)
        b1, b2 = self.split(b)
        return (self.child_kernel.gram(a1, b1) + 1.0) * self.cond_kernel.gram(a2, b2)

    def offset_gram(self, a1, b1) -> np.ndarray:
        """Gram of the offset first factor r + 1 over x1 blocks."""
        return self.child_kernel.gram(a1, b1) + 1.0

    @property
    def diag_value(self) -> float:
        return (self.child_kernel.diag_value + 1.0) * self.cond_kernel.diag_value


def median_sqdist(points, cap: int = 512) -> float:
    """Median pairwise squared distance, the usual lengthscale heuristic.

    Uses at most ``cap`` points (deterministically strided) and floors the
    result so degenerate point sets still give a usable lengthscale.
    """
    points = _as_points(points)
    if points.shape[0] > cap:
        stride = -(-points.shape[0] // cap)
        points = points[::stride]
    d = _sq_dists(points, points)
    off_diag = d[~np.eye(d.shape[0], dtype=bool)]
    if off_diag.size == 0:
        return 1.0
    return max(float(np.median(off_diag)), 1e-12)


def kernel_eval(kernel, a, b) -> float:
    """Single kernel evaluation k(a, b)."""
    return float(kernel.gram(_as_points(a), _as_points(b))[0, 0])


def gram(kernel, a, b) -> np.ndarray:
    """Gram matrix of pairwise kernel evaluations over two point sets."""
    return kernel.gram(a, b)


@dataclass(frozen=True)
class ProjectedKernel:
    """Kernel of the subspace with zero conditional expectation.

    Evaluations are inner products of projected feature maps
    ``<k_x - mu_x, k_x' - mu_x'>`` where ``mu_x`` is the embedding of the
    conditional distribution given the x2 block of x, estimated by ``cme``.
    Expanding the bilinear form gives four terms; the final ``<mu, mu'>``
    term enters with a PLUS sign, which is what keeps Gram matrices positive
    semi-definite (up to embedding estimation error).  ``mu_term_sign`` exists
    only so tests can pin that a minus sign there produces indefinite Grams.
    """

    base: ColliderKernel
    cme: "CmeFit"
    anchor_offset_gram: np.ndarray
    mu_term_sign: float = 1.0

    def gram(self, a, b) -> np.ndarray:
        k = self.base
        a1, a2 = k.split(a)
        b1, b2 = k.split(b)
        anchors1 = self.cme.anchors_x[:, : k.d1]
        wa = self.cme.weights(a2)  # (m, na)
        wb = self.cme.weights(b2)  # (m, nb)
        r_ab = k.offset_gram(a1, b1)
        r_anchor_b = k.offset_gram(anchors1, b1)  # (m, nb)
        r_anchor_a = k.offset_gram(anchors1, a1)  # (m, na)
        core = (
            r_ab
            - wa.T @ r_anchor_b
            - r_anchor_a.T @ wb
            + self.mu_term_sign * (wa.T @ self.anchor_offset_gram @ wb)
        )
        return k.cond_kernel.gram(a2, b2) * core

    def eval(self, x, x_prime) -> float:
        return float(self.gram(_as_points(x), _as_points(x_prime))[0, 0])


def fit_projected_kernel(kernel: ColliderKernel, cme: "CmeFit", mu_term_sign: float = 1.0) -> ProjectedKernel:
    """Assemble the projected kernel from a fitted conditional mean embedding.

    The embedding must be factored over the same kernel pair: its conditioning
    kernel is the collider kernel's second factor and its anchors carry the
    full (x1, x2) points.
    """
    if cme.mode != "factored":
        raise ValueError("projected kernels require a factored-mode embedding")
    if cme.ell is not kernel.cond_kernel and cme.ell != kernel.cond_kernel:
        raise ValueError("embedding conditioning kernel differs from the collider kernel's")
    anchors1 = cme.anchors_x[:, : kernel.d1]
    return ProjectedKernel(
        base=kernel,
        cme=cme,
        anchor_offset_gram=kernel.offset_gram(anchors1, anchors1),
        mu_term_sign=mu_term_sign,
    )


def projected_kernel_eval(fit: ProjectedKernel, x, x_prime) -> float:
    """Projected kernel evaluation at a pair of (x1, x2) points."""
    return fit.eval(x, x_prime)


def general_projected_kernel_eval(fit: ProjectedKernel, x, x_prime) -> float:
    """Projected kernel evaluation when conditioning on a joint (x2, x3) block.

    The general structure is identical: the collider kernel's second factor
    runs over the concatenated conditioning block, so points are laid out as
    (x1, x2, x3) and the x3 block may be empty.
    """
    return fit.eval(x, x_prime)
