"""Synthetic mixtures, train/test splits and per-block distance normalization."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateBlockError, ShapeError


@dataclass(frozen=True)
class PointSet:
    points: np.ndarray  # [n, d]
    block_layout: tuple[tuple[int, int], ...] = ()
    block_scales: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2:
            raise ShapeError(f"points must be a 2-D array, got shape {pts.shape}")
        object.__setattr__(self, "points", pts)
        layout = tuple((int(o), int(w)) for o, w in self.block_layout) or ((0, pts.shape[1]),)
        pos = 0
        for off, width in layout:
            if off != pos or width <= 0:
                raise ShapeError(f"block layout {layout} does not tile [0, {pts.shape[1]})")
            pos += width
        if pos != pts.shape[1]:
            raise ShapeError(f"block layout {layout} does not tile [0, {pts.shape[1]})")
        object.__setattr__(self, "block_layout", layout)
        if self.block_scales is not None:
            scales = tuple(float(s) for s in self.block_scales)
            if len(scales) != len(layout) or any(not s > 0 for s in scales):
                raise ValueError("block scales must be positive, one per block")
            object.__setattr__(self, "block_scales", scales)

    def __len__(self):
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def subset(self, idx) -> "PointSet":
        return replace(self, points=self.points[idx])


@dataclass(frozen=True)
class Component:
    mean: np.ndarray
    cov: np.ndarray
    weight: float


@dataclass(frozen=True)
class MixtureSpec:
    components: tuple[Component, ...]
    dim: int = field(init=False)

    def __post_init__(self):
        comps = []
        for c in self.components:
            mean = np.asarray(c.mean, dtype=np.float64).ravel()
            cov = np.asarray(c.cov, dtype=np.float64)
            if cov.ndim == 1:
                cov = np.diag(cov)
            comps.append(Component(mean, cov, float(c.weight)))
        if not comps:
            raise ValueError("mixture needs at least one component")
        dim = comps[0].mean.size
        for i, c in enumerate(comps):
            if c.mean.size != dim or c.cov.shape != (dim, dim):
                raise ShapeError(f"component {i} has inconsistent dimensions")
            if not np.allclose(c.cov, c.cov.T, rtol=0, atol=1e-12):
                raise ValueError(f"component {i}: covariance is not symmetric")
            try:
                np.linalg.cholesky(c.cov)
            except np.linalg.LinAlgError:
                raise ValueError(f"component {i}: covariance is not positive definite") from None
            if c.weight < 0:
                raise ValueError(f"component {i}: negative weight")
        total = sum(c.weight for c in comps)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"mixture weights sum to {total!r}, expected 1")
        object.__setattr__(self, "components", tuple(comps))
        object.__setattr__(self, "dim", dim)

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components])

    @property
    def means(self) -> np.ndarray:
        return np.stack([c.mean for c in self.components])


def isotropic_mixture(means, sigma, weights=None) -> MixtureSpec:
    means = np.asarray(means, dtype=np.float64)
    k, d = means.shape
    if weights is None:
        weights = [1.0 / k] * k
    return MixtureSpec(tuple(Component(m, np.eye(d) * sigma ** 2, w) for m, w in zip(means, weights)))


def ring_mixture(n_modes: int = 8, radius: float = 6.0, sigma: float = 0.3) -> MixtureSpec:
    angles = 2 * np.pi * np.arange(n_modes) / n_modes
    means = radius * np.column_stack([np.cos(angles), np.sin(angles)])
    return isotropic_mixture(means, sigma)


def imbalanced_bimodal(weights=(0.9, 0.1), offset: float = 5.0, sigma: float = 1.0) -> MixtureSpec:
    """Major mode at (-offset, 0), minor mode at (+offset, 0)."""
    return isotropic_mixture([[-offset, 0.0], [offset, 0.0]], sigma, list(weights))


PRESETS = {"ring8": ring_mixture, "bimodal_imbalanced": imbalanced_bimodal}


def sample_mixture(spec: MixtureSpec, n: int, seed) -> PointSet:
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    which = rng.choice(len(spec.components), size=n, p=spec.weights)
    z = rng.standard_normal((n, spec.dim))
    out = np.empty((n, spec.dim))
    for k, c in enumerate(spec.components):
        sel = which == k
        chol = np.linalg.cholesky(c.cov)
        out[sel] = c.mean + z[sel] @ chol.T
    return PointSet(out)


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.8
    test: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if not (self.train > 0 and self.test > 0 and self.train + self.test <= 1 + 1e-12):
            raise ValueError(f"infeasible split fractions ({self.train}, {self.test})")


def split_sizes(n: int, split: SplitSpec) -> tuple[int, int]:
    # round() guards against 0.8 * 1000 == 800.0000000000001 style noise
    n_train = int(round(split.train * n))
    n_test = int(round(split.test * n))
    if n_train + n_test > n:
        n_test = n - n_train
    return n_train, n_test


def train_test_split(data: PointSet, split: SplitSpec, return_indices: bool = False):
    n_train, n_test = split_sizes(len(data), split)
    if n_train < 1 or n_test < 1:
        raise ValueError(f"split of {len(data)} points leaves an empty side")
    perm = np.random.default_rng(split.seed).permutation(len(data))
    tr, te = perm[:n_train], perm[n_train:n_train + n_test]
    if return_indices:
        return data.subset(tr), data.subset(te), tr, te
    return data.subset(tr), data.subset(te)


def _mean_pairwise_exact(x: np.ndarray, chunk: int = 256) -> float:
    n = x.shape[0]
    total = 0.0
    for start in range(0, n, chunk):
        blk = x[start:start + chunk]
        diff = blk[:, None, :] - x[None, :, :]
        d = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        # keep only j > i
        rows = np.arange(start, start + blk.shape[0])[:, None]
        total += d[np.arange(n)[None, :] > rows].sum()
    return total / (n * (n - 1) / 2)


def _mean_pairwise_sampled(x: np.ndarray, n_pairs: int, rng: np.random.Generator) -> float:
    n = x.shape[0]
    i = rng.integers(0, n, size=n_pairs)
    j = rng.integers(0, n - 1, size=n_pairs)
    j = j + (j >= i)  # uniform over j != i
    diff = x[i] - x[j]
    return float(np.sqrt(np.einsum("ij,ij->i", diff, diff)).mean())


def mean_pairwise_distance(x: np.ndarray, exact_limit: int = 2000, n_pairs: int = 1_000_000,
                           seed=0) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] < 2:
        return 0.0
    if x.shape[0] <= exact_limit:
        return _mean_pairwise_exact(x)
    return _mean_pairwise_sampled(x, n_pairs, np.random.default_rng(seed))


def block_normalize(reference: PointSet, targets: Sequence[PointSet], exact_limit: int = 2000,
                    n_pairs: int = 1_000_000, seed=0) -> tuple[np.ndarray, list[PointSet]]:
    """Scale every feature block so its mean pairwise distance over ``reference`` is one.

    Returns the per-block scales and the rescaled targets. Sets with more than
    ``exact_limit`` points use ``n_pairs`` seeded random pairs instead of all pairs.
    """
    layout = reference.block_layout
    for t in targets:
        if t.block_layout != layout:
            raise ShapeError("targets must share the reference block layout")
    scales = np.empty(len(layout))
    for b, (off, width) in enumerate(layout):
        s = mean_pairwise_distance(reference.points[:, off:off + width], exact_limit, n_pairs, seed)
        if not s > 0:
            raise DegenerateBlockError(b)
        scales[b] = s
    out = []
    for t in targets:
        pts = t.points.copy()
        for (off, width), s in zip(layout, scales):
            pts[:, off:off + width] /= s
        out.append(PointSet(pts, layout, tuple(scales)))
    return scales, out


def _sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".blocks.json")


def write_pointset(path, ps: PointSet) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{i}" for i in range(ps.dim)])
        for row in ps.points:
            w.writerow([repr(float(v)) for v in row])
    meta = {"block_layout": [list(b) for b in ps.block_layout],
            "block_scales": None if ps.block_scales is None else list(ps.block_scales)}
    _sidecar(path).write_text(json.dumps(meta, indent=2) + "\n")


def read_pointset(path) -> PointSet:
    """Read a CSV of feature vectors (header ``x0,...``); block sidecar is optional."""
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header, body = rows[0], [r for r in rows[1:] if r]
    try:
        pts = np.array([[float(v) for v in r] for r in body], dtype=np.float64).reshape(len(body), len(header))
    except ValueError as exc:
        raise ValueError(f"{path}: malformed row ({exc})") from None
    if not np.all(np.isfinite(pts)):
        raise ValueError(f"{path}: non-finite values")
    side = _sidecar(path)
    if side.exists():
        meta = json.loads(side.read_text())
        return PointSet(pts, tuple(tuple(b) for b in meta.get("block_layout") or ()),
                        meta.get("block_scales"))
    return PointSet(pts)


def nearest_component(spec: MixtureSpec, points: np.ndarray) -> np.ndarray:
    d2 = ((np.asarray(points)[:, None, :] - spec.means[None, :, :]) ** 2).sum(-1)
    return d2.argmin(axis=1)


def mode_fraction(points: np.ndarray, mean, sigma: float, n_sigma: float = 3.0) -> float:
    """Fraction of ``points`` within ``n_sigma * sigma`` of ``mean``."""
    pts = np.asarray(points)
    if len(pts) == 0:
        return 0.0
    dist = np.sqrt(((pts - np.asarray(mean)) ** 2).sum(axis=1))
    return float(np.mean(dist <= n_sigma * sigma))

