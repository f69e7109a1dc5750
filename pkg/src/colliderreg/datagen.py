"""Synthetic data generation with retained latents.

Three generators share the SimDataset container:

- ``simulate``: a latent Gaussian (z1, z2, y) with covariance built so that y
  is exactly uncorrelated with the z2 block, pushed through coordinatewise
  nonlinear maps, x1 = g1(z1) + eps and x2 = g2(z2).
- ``simulate_general``: a parent block x3 driving both y and x2, with the
  children block x1 colliding all three, so y is independent of x2 given x3
  but not given (x3, x1).
- ``fixture_indicator_collider``: y, x2 independent standard normals and
  x1 = y * 1{x2 > 0}; the optimal regressor x1 * 1{x2 > 0} is mean-independent
  of x2 without being independent of it.

Every generator retains its latent draws row-wise, which is what lets the
latent-conditioned oracle Monte-Carlo conditional expectations of arbitrary
predictors.  Note the oracle conditions on the latent z2 rather than on
x2 = g2(z2); since g2 is not globally injective this is a finer sigma-algebra,
so oracle-based gap estimates upper-bound the x2-conditioned gap.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .numerics import ConditionalGaussian, RngStream, cholesky_psd, min_eigenvalue, sample_gaussian


def g1(u) -> np.ndarray:
    """Coordinatewise warp applied to the children block: u + 0.1 cos(2 pi u^2)."""
    u = np.asarray(u, dtype=float)
    return u + 0.1 * np.cos(2.0 * np.pi * u * u)


def g2(u) -> np.ndarray:
    """Coordinatewise warp applied to the conditioning block: u + 0.1 sin(2 pi u^2)."""
    u = np.asarray(u, dtype=float)
    return u + 0.1 * np.sin(2.0 * np.pi * u * u)


@dataclass(frozen=True)
class SigmaSpec:
    """Latent covariance with the target decorrelated from the z2 block."""

    d1: int
    d2: int
    matrix: np.ndarray

    def __post_init__(self):
        k = self.d1 + self.d2 + 1
        if self.matrix.shape != (k, k):
            raise ValueError(f"expected a {k}x{k} covariance, got {self.matrix.shape}")
        if min_eigenvalue(self.matrix) < -1e-10:
            raise ValueError("covariance is not positive semi-definite")
        if np.abs(np.diag(self.matrix) - 1.0).max() > 1e-12:
            raise ValueError("covariance diagonal is not normalized to 1")
        y_row = self.matrix[self.y_index, self.d1 : self.d1 + self.d2]
        if self.d2 and np.abs(y_row).max() > 1e-12:
            raise ValueError("target row is not orthogonal to the z2 block")

    @property
    def y_index(self) -> int:
        return self.d1 + self.d2


def make_sigma(d1: int, d2: int, rng: RngStream) -> SigmaSpec:
    """Build the latent covariance from rank-4 random factors.

    Unit-normalized Gaussian columns are drawn, the z2 columns are
    orthogonalized against the target column, a 0.01 ridge is added and
    variances are normalized to 1.  The orthogonalization makes the
    target / z2 covariances exactly zero.
    """
    if d1 < 1 or d2 < 1:
        raise ValueError("both blocks need at least one dimension")
    k = d1 + d2 + 1
    m = rng.standard_normal((4, k))
    m /= np.linalg.norm(m, axis=0)
    m_y = m[:, -1]
    for i in range(d1, d1 + d2):
        m[:, i] -= (m[:, i] @ m_y) * m_y
    sigma = m.T @ m + 0.01 * np.eye(k)
    scale = np.sqrt(np.diag(sigma))
    sigma = sigma / np.outer(scale, scale)
    sigma = 0.5 * (sigma + sigma.T)
    # Orthogonalized entries are exact zeros up to rounding; snap them so the
    # independence encoding survives the normalization arithmetic.
    sigma[d1 : d1 + d2, -1] = 0.0
    sigma[-1, d1 : d1 + d2] = 0.0
    np.fill_diagonal(sigma, 1.0)
    return SigmaSpec(d1=d1, d2=d2, matrix=sigma)


@dataclass(frozen=True)
class SplitSizes:
    train: int = 50
    semi: int = 100
    validation: int = 100
    test: int = 200
    oracle_test: int = 500


SPLIT_ORDER = ("train", "semi", "validation", "test", "oracle_test")


@dataclass(frozen=True)
class Split:
    """One sample split; y is absent on the semi-supervised split."""

    x1: np.ndarray
    x2: np.ndarray
    y: np.ndarray | None = None
    x3: np.ndarray | None = None

    @property
    def x(self) -> np.ndarray:
        parts = [self.x1, self.x2] + ([self.x3] if self.x3 is not None else [])
        return np.hstack(parts)

    @property
    def n(self) -> int:
        return self.x1.shape[0]


@dataclass
class SimDataset:
    """Splits plus retained latents and generator metadata."""

    kind: str
    splits: dict[str, Split]
    latents: dict[str, dict[str, np.ndarray]]
    meta: dict

    def split(self, name: str) -> Split:
        if name not in self.splits:
            raise KeyError(f"dataset has no split {name!r}")
        return self.splits[name]


def simulate(spec: SigmaSpec, sigma_noise: float, sizes: SplitSizes, rng: RngStream, g1=g1, g2=g2) -> SimDataset:
    """Draw all splits from the latent Gaussian generator.

    Per row: (z1, z2, y) ~ N(0, Sigma), eps ~ N(0, sigma_noise^2 I), then
    x1 = g1(z1) + eps and x2 = g2(z2).  The target is the untransformed
    latent y coordinate.  Each split consumes its own substream, so growing
    one split leaves the others bit-identical.
    """
    if sigma_noise < 0:
        raise ValueError("noise scale must be nonnegative")
    d1, d2 = spec.d1, spec.d2
    splits: dict[str, Split] = {}
    latents: dict[str, dict[str, np.ndarray]] = {}
    for si, name in enumerate(SPLIT_ORDER):
        n = getattr(sizes, name)
        # One substream per drawn component, so growing a split size leaves
        # every other draw (and the prefix of this one) bit-identical.
        joint = sample_gaussian(rng.substream(si, 0), np.zeros(d1 + d2 + 1), spec.matrix, n)
        eps = sigma_noise * rng.substream(si, 1).standard_normal((n, d1))
        z1, z2, y = joint[:, :d1], joint[:, d1 : d1 + d2], joint[:, -1]
        splits[name] = Split(x1=g1(z1) + eps, x2=g2(z2), y=None if name == "semi" else y)
        latents[name] = {"z1": z1, "z2": z2, "y": y, "eps": eps}
    meta = {
        "kind": "linear",
        "d1": d1,
        "d2": d2,
        "sigma_noise": float(sigma_noise),
        "sigma": spec,
        "seed": rng.seed,
        "stream": list(rng.path),
    }
    return SimDataset(kind="linear", splits=splits, latents=latents, meta=meta)


@dataclass(frozen=True)
class GeneralScales:
    """Coefficient and noise scales for the general-boundary generator."""

    beta: float = 1.0
    mix: float = 1.0
    child_target: float = 1.0
    child_others: float = 1.0
    child_parents: float = 1.0
    noise_y: float = 0.5
    noise_x2: float = 0.5
    noise_x1: float = 0.1


def simulate_general(
    d1: int,
    d2: int,
    d3: int,
    scales: GeneralScales,
    rng: RngStream,
    sizes: SplitSizes,
) -> SimDataset:
    """General-boundary generator: x3 -> {y, x2}, all three -> x1.

    x3 ~ N(0, I); y = beta.x3 + nu_y; x2 = g2(A x3 + nu_2);
    x1 = g1(y*b_y + B2 x2 + B3 x3) + eps.  Independent noises give
    y independent of x2 given x3, violated once x1 enters the conditioning.
    """
    if d1 < 1 or d2 < 1 or d3 < 1:
        raise ValueError("all three blocks need at least one dimension")
    coef_rng = rng.substream(100)
    beta = scales.beta * coef_rng.standard_normal(d3) / np.sqrt(d3)
    mix = scales.mix * coef_rng.standard_normal((d2, d3)) / np.sqrt(d3)
    b_y = scales.child_target * coef_rng.standard_normal(d1)
    b2 = scales.child_others * coef_rng.standard_normal((d1, d2)) / np.sqrt(d2)
    b3 = scales.child_parents * coef_rng.standard_normal((d1, d3)) / np.sqrt(d3)

    splits: dict[str, Split] = {}
    latents: dict[str, dict[str, np.ndarray]] = {}
    for si, name in enumerate(SPLIT_ORDER):
        n = getattr(sizes, name)
        x3 = rng.substream(si, 0).standard_normal((n, d3))
        nu_y = scales.noise_y * rng.substream(si, 1).standard_normal(n)
        y = x3 @ beta + nu_y
        nu2 = scales.noise_x2 * rng.substream(si, 2).standard_normal((n, d2))
        x2 = g2(x3 @ mix.T + nu2)
        eps = scales.noise_x1 * rng.substream(si, 3).standard_normal((n, d1))
        x1 = g1(y[:, None] * b_y + x2 @ b2.T + x3 @ b3.T) + eps
        splits[name] = Split(x1=x1, x2=x2, y=None if name == "semi" else y, x3=x3)
        latents[name] = {"x3": x3, "nu_y": nu_y, "y": y, "nu2": nu2, "eps": eps}
    meta = {
        "kind": "general",
        "d1": d1,
        "d2": d2,
        "d3": d3,
        "scales": scales,
        "beta": beta,
        "mix": mix,
        "b_y": b_y,
        "b2": b2,
        "b3": b3,
        "seed": rng.seed,
        "stream": list(rng.path),
    }
    return SimDataset(kind="general", splits=splits, latents=latents, meta=meta)


def fixture_indicator_collider(
    n: int,
    rng: RngStream,
    semi: int = 0,
    validation: int = 0,
    test: int = 0,
    oracle_test: int = 0,
) -> SimDataset:
    """Independent y, x2 ~ N(0,1) with x1 = y * 1{x2 > 0}.

    The optimal regressor x1 * 1{x2 > 0} is attached in the metadata together
    with its exact risk E[y^2 1{x2 <= 0}] = 0.5.
    """
    sizes = SplitSizes(train=n, semi=semi, validation=validation, test=test, oracle_test=oracle_test)
    splits: dict[str, Split] = {}
    latents: dict[str, dict[str, np.ndarray]] = {}
    for si, name in enumerate(SPLIT_ORDER):
        count = getattr(sizes, name)
        y = rng.substream(si, 0).standard_normal(count)
        x2 = rng.substream(si, 1).standard_normal(count)
        x1 = y * (x2 > 0)
        splits[name] = Split(x1=x1[:, None], x2=x2[:, None], y=None if name == "semi" else y)
        latents[name] = {"y": y}

    def optimal_predictor(points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return points[:, 0] * (points[:, 1] > 0)

    meta = {
        "kind": "indicator",
        "d1": 1,
        "d2": 1,
        "seed": rng.seed,
        "stream": list(rng.path),
        "optimal_predictor": optimal_predictor,
        "optimal_risk": 0.5,
    }
    return SimDataset(kind="indicator", splits=splits, latents=latents, meta=meta)


def latent_conditional_variance(spec: SigmaSpec) -> float:
    """Exact Var(y | z1, z2) of the latent Gaussian generator.

    Conditioning the observed covariates can only leave more target variance
    than conditioning the full latents, so this is a valid Var(y | x) floor.
    """
    observed = list(range(spec.d1 + spec.d2))
    cond = ConditionalGaussian(spec.matrix, observed)
    return float(cond.cov[0, 0])


class LatentOracle:
    """Conditional re-sampler for one dataset split.

    For a given row it redraws the non-conditioned coordinates from the
    generator's exact conditional law (conditioning block held fixed) and
    rebuilds full covariate points, enabling Monte-Carlo estimates of
    E[h(X) | conditioning block] for arbitrary predictors h.
    """

    def __init__(self, dataset: SimDataset, split: str = "oracle_test"):
        self.dataset = dataset
        self.split_name = split
        self.split = dataset.split(split)
        self.latents = dataset.latents[split]
        if dataset.kind == "linear":
            d1, d2 = dataset.meta["d1"], dataset.meta["d2"]
            sigma = dataset.meta["sigma"].matrix
            self._cond = ConditionalGaussian(sigma, range(d1, d1 + d2))
            self._chol = cholesky_psd(self._cond.cov)
        elif dataset.kind not in ("general", "indicator"):
            raise ValueError(f"no oracle for generator kind {dataset.kind!r}")

    @property
    def n_rows(self) -> int:
        return self.split.n

    def draws(self, row: int, m: int, rng: RngStream) -> np.ndarray:
        """m fresh covariate points conditioned on the row's conditioning block."""
        return self.draws_batch([row], m, rng)

    def draws_batch(self, rows, m: int, rng: RngStream) -> np.ndarray:
        """Stacked draws for several rows: shape (len(rows) * m, d)."""
        if m < 1:
            raise ValueError("need at least one draw")
        rows = np.asarray(rows, dtype=int)
        ds, split = self.dataset, self.split
        kind = ds.kind
        if kind == "linear":
            d1 = ds.meta["d1"]
            sigma_noise = ds.meta["sigma_noise"]
            z2 = self.latents["z2"][rows]  # (r, d2)
            means = z2 @ self._cond.gain.T  # (r, d1 + 1) over (z1, y)
            z = rng.standard_normal((rows.size, m, d1 + 1))
            draws = means[:, None, :] + z @ self._chol.lower.T
            z1 = draws[..., :d1]
            eps = sigma_noise * rng.standard_normal((rows.size, m, d1))
            x1 = g1(z1) + eps
            x2 = np.repeat(split.x2[rows], m, axis=0)
            return np.hstack([x1.reshape(rows.size * m, d1), x2])
        if kind == "general":
            meta = ds.meta
            d1 = meta["d1"]
            x2 = split.x2[rows]
            x3 = split.x3[rows]
            mean_y = x3 @ meta["beta"]
            y = mean_y[:, None] + meta["scales"].noise_y * rng.standard_normal((rows.size, m))
            drift = x2 @ meta["b2"].T + x3 @ meta["b3"].T  # (r, d1)
            arg = y[..., None] * meta["b_y"] + drift[:, None, :]
            eps = meta["scales"].noise_x1 * rng.standard_normal((rows.size, m, d1))
            x1 = (g1(arg) + eps).reshape(rows.size * m, d1)
            return np.hstack([x1, np.repeat(x2, m, axis=0), np.repeat(x3, m, axis=0)])
        # indicator fixture: y ~ N(0,1) independent of the conditioning value
        x2 = split.x2[rows]
        y = rng.standard_normal((rows.size, m))
        x1 = (y * (x2 > 0)).reshape(rows.size * m, 1)
        return np.hstack([x1, np.repeat(x2, m, axis=0)])


def oracle_conditional_expectation(
    h,
    dataset: SimDataset,
    row: int,
    m: int,
    rng: RngStream,
    split: str = "oracle_test",
) -> float:
    """Monte-Carlo E[h(X) | conditioning block of the given row]."""
    oracle = LatentOracle(dataset, split)
    values = np.asarray(h(oracle.draws(row, m, rng)), dtype=float)
    return float(values.mean())


# ---------------------------------------------------------------------------
# Serialization


def _fmt(value: float) -> str:
    return repr(float(value))


def _write_csv(path: Path, header: list[str], columns: list[np.ndarray]) -> None:
    rows = columns[0].shape[0] if columns else 0
    with path.open("w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(rows):
            fh.write(",".join(_fmt(col[i]) for col in columns) + "\n")


def _block_columns(prefix: str, block: np.ndarray) -> tuple[list[str], list[np.ndarray]]:
    if block.ndim == 1:
        block = block[:, None]
    names = [f"{prefix}_{j}" for j in range(block.shape[1])]
    return names, [block[:, j] for j in range(block.shape[1])]


def write_dataset(dataset: SimDataset, outdir, overwrite: bool = False) -> list[Path]:
    """Write split CSVs, a latent sidecar CSV and a JSON descriptor.

    Split files carry columns x1_0.., x2_0.., [x3_..], [y]; the sidecar holds
    one row per (split, row) with the generator's latent draws.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    targets = [outdir / f"{name}.csv" for name in SPLIT_ORDER if name in dataset.splits]
    targets += [outdir / "latents.csv", outdir / "metadata.json"]
    if not overwrite:
        existing = [p for p in targets if p.exists()]
        if existing:
            raise FileExistsError(f"refusing to overwrite {existing[0]}")

    written: list[Path] = []
    for name in SPLIT_ORDER:
        if name not in dataset.splits:
            continue
        split = dataset.splits[name]
        header: list[str] = []
        columns: list[np.ndarray] = []
        for prefix, block in (("x1", split.x1), ("x2", split.x2), ("x3", split.x3)):
            if block is None:
                continue
            names, cols = _block_columns(prefix, block)
            header += names
            columns += cols
        if split.y is not None:
            header.append("y")
            columns.append(split.y)
        path = outdir / f"{name}.csv"
        _write_csv(path, header, columns)
        written.append(path)

    sidecar = outdir / "latents.csv"
    with sidecar.open("w", encoding="utf-8") as fh:
        keys = sorted({k for lat in dataset.latents.values() for k in lat})
        header = ["split", "row"]
        widths: dict[str, int] = {}
        for key in keys:
            sample = next(lat[key] for lat in dataset.latents.values() if key in lat)
            widths[key] = 1 if sample.ndim == 1 else sample.shape[1]
            header += [key] if widths[key] == 1 else [f"{key}_{j}" for j in range(widths[key])]
        fh.write(",".join(header) + "\n")
        for name in SPLIT_ORDER:
            if name not in dataset.latents:
                continue
            lat = dataset.latents[name]
            n = dataset.splits[name].n
            for i in range(n):
                cells = [name, str(i)]
                for key in keys:
                    block = lat[key]
                    if block.ndim == 1:
                        cells.append(_fmt(block[i]))
                    else:
                        cells += [_fmt(v) for v in block[i]]
                fh.write(",".join(cells) + "\n")
    written.append(sidecar)

    meta_path = outdir / "metadata.json"
    meta_path.write_text(json.dumps(_meta_to_json(dataset.meta), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    written.append(meta_path)
    return written


def _meta_to_json(meta: dict) -> dict:
    out = {}
    for key, value in meta.items():
        if callable(value):
            continue
        if isinstance(value, SigmaSpec):
            out[key] = {"d1": value.d1, "d2": value.d2, "matrix": value.matrix.tolist()}
        elif isinstance(value, GeneralScales):
            out[key] = value.__dict__
        elif isinstance(value, np.ndarray):
            out[key] = value.tolist()
        else:
            out[key] = value
    return out
