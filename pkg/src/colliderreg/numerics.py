"""Dense symmetric linear algebra, seeded RNG streams, Gaussian sampling.

Everything here operates on plain numpy arrays in double precision.
Regularized solves always go through a Cholesky factorization of the
(jittered) system matrix, never an explicit inverse.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve


class FactorizationError(RuntimeError):
    """A symmetric matrix could not be factorized, even after jitter escalation."""


def _as_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    return a


def _require_symmetric(a: np.ndarray, rtol: float = 1e-8) -> None:
    scale = np.abs(a).max() if a.size else 0.0
    if np.abs(a - a.T).max() > rtol * max(scale, 1e-300):
        raise ValueError("matrix is not symmetric within tolerance")


@dataclass(frozen=True)
class JitterPolicy:
    """Escalation policy for Cholesky of nearly-PSD matrices.

    The first attempt is always jitter-free.  On failure, jitter starts at
    ``initial`` (default 1e-10 * trace/n) and multiplies by 10 up to
    ``max_escalations`` further times.
    """

    initial: float | None = None
    max_escalations: int = 6

    def ladder(self, a: np.ndarray) -> list[float]:
        n = a.shape[0]
        base = self.initial
        if base is None:
            trace = float(np.trace(a))
            base = 1e-10 * trace / n if trace > 0 else 1e-10
        return [0.0] + [base * 10.0**e for e in range(self.max_escalations + 1)]


DEFAULT_JITTER = JitterPolicy()


@dataclass(frozen=True)
class PsdFactorization:
    """Lower-triangular Cholesky factor of ``a + jitter * I``.

    The applied jitter is carried explicitly; it is never silent.
    """

    lower: np.ndarray
    jitter: float

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        return cho_solve((self.lower, True), b)

    def reconstruct(self) -> np.ndarray:
        return self.lower @ self.lower.T


def cholesky_psd(a, policy: JitterPolicy = DEFAULT_JITTER) -> PsdFactorization:
    """Factor a symmetric PSD matrix, escalating jitter until it succeeds.

    Raises ValueError if ``a`` is not symmetric and FactorizationError if no
    jitter on the policy's ladder makes the matrix factorizable.
    """
    a = _as_matrix(a)
    _require_symmetric(a)
    if not a.any():
        # Rank-zero matrix: L = 0 reproduces it exactly but numpy's strict
        # Cholesky rejects it.
        return PsdFactorization(lower=np.zeros_like(a), jitter=0.0)
    eye = np.eye(a.shape[0])
    for jitter in policy.ladder(a):
        try:
            lower = np.linalg.cholesky(a + jitter * eye)
        except np.linalg.LinAlgError:
            continue
        return PsdFactorization(lower=lower, jitter=jitter)
    raise FactorizationError(
        f"matrix of size {a.shape[0]} not factorizable after "
        f"{policy.max_escalations} jitter escalations"
    )


def solve_regularized(k, lam: float, b, policy: JitterPolicy = DEFAULT_JITTER) -> np.ndarray:
    """Return ``(K + lam*I)^{-1} B`` through a Cholesky factorization."""
    k = _as_matrix(k)
    if lam <= 0:
        raise ValueError(f"regularizer must be positive, got {lam}")
    b = np.asarray(b, dtype=float)
    if b.shape[0] != k.shape[0]:
        raise ValueError(f"dimension mismatch: K is {k.shape}, B has {b.shape[0]} rows")
    fact = cholesky_psd(k + lam * np.eye(k.shape[0]), policy)
    return fact.solve(b)


def min_eigenvalue(a) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    a = _as_matrix(a)
    _require_symmetric(a)
    return float(np.linalg.eigvalsh(a)[0])


@dataclass
class RngStream:
    """Counter-based random stream addressed by (seed, path).

    Backed by the Philox bit generator keyed through a SeedSequence spawn
    path, so identical (seed, path) pairs replay identical sequences and
    distinct paths are statistically independent.  A stream is single-owner:
    parallel work must split via :meth:`substream`, never share one instance.
    """

    seed: int
    path: tuple[int, ...] = ()
    _gen: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ss = np.random.SeedSequence(self.seed, spawn_key=self.path)
        self._gen = np.random.Generator(np.random.Philox(ss))

    def substream(self, *path: int) -> "RngStream":
        return RngStream(self.seed, self.path + tuple(int(p) for p in path))

    def standard_normal(self, shape) -> np.ndarray:
        return self._gen.standard_normal(shape)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        return self._gen.uniform(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)


def sample_gaussian(rng: RngStream, mean, cov, count: int) -> np.ndarray:
    """Draw ``count`` rows from N(mean, cov) via the jittered Cholesky factor."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = _as_matrix(cov)
    if cov.shape[0] != mean.shape[0]:
        raise ValueError("mean and covariance dimensions disagree")
    fact = cholesky_psd(cov)
    z = rng.standard_normal((count, mean.shape[0]))
    return mean + z @ fact.lower.T


class ConditionalGaussian:
    """Conditioning of a zero-mean joint Gaussian on a fixed index set.

    Precomputes the gain matrix W = S_uo S_oo^{-1} and the conditional
    covariance so repeated conditioning on new observed values is a single
    matrix-vector product.
    """

    def __init__(self, sigma, observed):
        sigma = _as_matrix(sigma)
        _require_symmetric(sigma)
        observed = np.asarray(sorted(set(int(i) for i in observed)), dtype=int)
        if observed.size and (observed.min() < 0 or observed.max() >= sigma.shape[0]):
            raise ValueError("observed indices out of range")
        unobserved = np.setdiff1d(np.arange(sigma.shape[0]), observed)
        s_oo = sigma[np.ix_(observed, observed)]
        s_uo = sigma[np.ix_(unobserved, observed)]
        s_uu = sigma[np.ix_(unobserved, unobserved)]
        if observed.size:
            fact = cholesky_psd(s_oo)
            self.gain = fact.solve(s_uo.T).T
        else:
            self.gain = np.zeros((unobserved.size, 0))
        cov = s_uu - self.gain @ s_uo.T
        self.cov = 0.5 * (cov + cov.T)
        self.observed = observed
        self.unobserved = unobserved

    def mean(self, values) -> np.ndarray:
        values = np.atleast_1d(np.asarray(values, dtype=float))
        if values.shape[0] != self.observed.size:
            raise ValueError("observed value count disagrees with index set")
        return self.gain @ values


def conditional_gaussian(sigma, observed, values) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of the unobserved block given observed = values.

    The joint is assumed zero-mean; unobserved coordinates keep ascending
    index order.
    """
    cond = ConditionalGaussian(sigma, observed)
    return cond.mean(values), cond.cov
