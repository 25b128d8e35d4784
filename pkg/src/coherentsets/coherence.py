"""Extract coherent set pairs from singular vectors and score them.

A pair (A0, A1) is read off the second right/left singular vectors by
thresholding; its quality is the two-term conditional-overlap ratio rho
(bounded by 1 + sigma_2) and, independently, the Monte-Carlo survival
fraction kappa of noisy trajectories launched inside A0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .flows import VelocityField, wrap_points
from .spectral import RealField


class DegenerateMaskError(ValueError):
    """Thresholding produced an empty or full set."""


@dataclass
class CoherentPair:
    """Boolean masks of a candidate coherent pair on a plot grid.

    Masks are node indicators; each node stands for the grid cell at its
    upper right, so volumes are node counts times the cell volume.
    """

    a0_mask: np.ndarray
    a1_mask: np.ndarray
    theta: float
    cell_volume: float
    lengths: tuple[float, ...]
    rho: float | None = None
    kappa: float | None = None

    @property
    def volume_a0(self) -> float:
        return float(self.a0_mask.sum() * self.cell_volume)

    @property
    def volume_a1(self) -> float:
        return float(self.a1_mask.sum() * self.cell_volume)

    def complement(self) -> "CoherentPair":
        return CoherentPair(
            ~self.a0_mask, ~self.a1_mask, self.theta, self.cell_volume, self.lengths
        )


def threshold_pair(v2: RealField, u2: RealField, theta: float = 0.0) -> CoherentPair:
    """A0 = {v2 > theta}, A1 = {u2 > 0}; rejects empty/full masks."""
    if v2.grid != u2.grid:
        raise ValueError("v2 and u2 must live on the same plot grid")
    a0 = v2.values > theta
    a1 = u2.values > 0.0
    for name, mask in (("A0", a0), ("A1", a1)):
        if not mask.any() or mask.all():
            raise DegenerateMaskError(f"{name} is degenerate at theta={theta}")
    return CoherentPair(a0, a1, float(theta), v2.grid.quad_weight, v2.grid.lengths)


def coherence_ratio(operator, pair: CoherentPair) -> float:
    """<P 1_A0, 1_A1>/m(A0) + <P 1_A0c, 1_A1c>/m(A0c).

    `operator` is a TransferMatrix or TransitionMatrix (anything exposing
    pair_overlap and node_shape).  Exceeds 1 for coherent pairs, with
    rho - 1 <= sigma_2 by the singular-value relaxation.
    """
    if pair.a0_mask.shape != operator.node_shape():
        raise ValueError(
            f"pair masks {pair.a0_mask.shape} do not match operator grid "
            f"{operator.node_shape()}"
        )
    v0, v0c = pair.volume_a0, pair.a0_mask.size * pair.cell_volume - pair.volume_a0
    if v0 <= 0 or v0c <= 0:
        raise DegenerateMaskError("zero-volume set in coherence ratio")
    top = operator.pair_overlap(pair.a0_mask, pair.a1_mask)
    bottom = operator.pair_overlap(~pair.a0_mask, ~pair.a1_mask)
    return top / v0 + bottom / v0c


def line_search_threshold(
    v2: RealField,
    u2: RealField,
    operator,
    thetas=None,
    n_quantiles: int = 64,
) -> CoherentPair:
    """Scan thresholds and return the pair with the largest ratio.

    Default candidates are interior quantiles of v2 (robust to the vector's
    scale); ties break toward the threshold closest to zero.
    """
    if thetas is None:
        qs = (np.arange(n_quantiles) + 0.5) / n_quantiles
        thetas = np.unique(np.quantile(v2.values.ravel(), qs))
    best = None
    for theta in np.atleast_1d(thetas):
        try:
            pair = threshold_pair(v2, u2, float(theta))
        except DegenerateMaskError:
            continue
        rho = coherence_ratio(operator, pair)
        pair.rho = rho
        if (
            best is None
            or rho > best.rho + 1e-12
            or (abs(rho - best.rho) <= 1e-12 and abs(theta) < abs(best.theta))
        ):
            best = pair
    if best is None:
        raise DegenerateMaskError("every candidate threshold was degenerate")
    return best


# -- Monte-Carlo validation ---------------------------------------------------


@dataclass(frozen=True)
class SdeRun:
    """Euler-Maruyama settings: particle count, step dt, RNG seed."""

    particles: int = 100_000
    dt: float = 0.05
    seed: int = 0
    batch_size: int = 250_000

    def __post_init__(self):
        if self.particles < 1 or self.dt <= 0 or self.batch_size < 1:
            raise ValueError("invalid SDE run parameters")


@dataclass
class KappaEstimate:
    kappa: float
    stderr: float
    particles: int


def _mask_lookup(mask: np.ndarray, points: np.ndarray, lengths) -> np.ndarray:
    pts = wrap_points(points, lengths)
    M = mask.shape[0]
    widths = np.asarray(lengths) / M
    idx = np.minimum((pts / widths).astype(int), M - 1)
    return mask[tuple(idx[:, a] for a in range(pts.shape[1]))]


def _sample_in_mask(mask, lengths, n, rng) -> np.ndarray:
    d = len(lengths)
    out = np.empty((n, d))
    have = 0
    while have < n:
        draw = rng.uniform(0.0, 1.0, size=(max(2 * (n - have), 1024), d)) * np.asarray(lengths)
        keep = draw[_mask_lookup(mask, draw, lengths)]
        take = min(len(keep), n - have)
        out[have : have + take] = keep[:take]
        have += take
    return out


def sde_kappa(
    flow: VelocityField,
    epsilon: float,
    pair: CoherentPair,
    run: SdeRun,
    t0: float,
    t1: float,
) -> KappaEstimate:
    """Fraction of noisy trajectories from A0 that end in A1.

    Particles start uniformly in A0 (rejection sampling on the mask) and
    follow x <- x + b dt + eps*sqrt(dt)*xi with periodic wrap.  Batches use
    independent spawned RNG streams, so the estimate depends only on the
    master seed, not on batch scheduling.
    """
    if not pair.a0_mask.any():
        raise DegenerateMaskError("A0 is empty")
    n_steps = max(1, round((t1 - t0) / run.dt))
    dt = (t1 - t0) / n_steps
    lengths = pair.lengths
    n_batches = (run.particles + run.batch_size - 1) // run.batch_size
    streams = np.random.SeedSequence(run.seed).spawn(n_batches)
    hits = 0
    for ib in range(n_batches):
        n = min(run.batch_size, run.particles - ib * run.batch_size)
        rng = np.random.default_rng(streams[ib])
        x = _sample_in_mask(pair.a0_mask, lengths, n, rng)
        root_dt = np.sqrt(dt)
        for i in range(n_steps):
            t = t0 + i * dt
            x = x + flow.velocity_at(t, x) * dt
            if epsilon > 0:
                x = x + epsilon * root_dt * rng.standard_normal(x.shape)
            x = wrap_points(x, lengths)
        hits += int(_mask_lookup(pair.a1_mask, x, lengths).sum())
    kappa = hits / run.particles
    stderr = float(np.sqrt(max(kappa * (1.0 - kappa), 1e-300) / run.particles))
    return KappaEstimate(kappa, stderr, run.particles)


# -- clustering ---------------------------------------------------------------


def kmeans_partition(
    fields: list[RealField], k: int, seed: int = 0, restarts: int = 8,
    max_iter: int = 300,
) -> np.ndarray:
    """Lloyd's algorithm over per-node singular-vector features.

    k-means++ seeding, best of `restarts` runs by within-cluster sum of
    squares; deterministic given the seed.  Returns integer labels shaped
    like the fields' grid.
    """
    if not fields:
        raise ValueError("need at least one feature field")
    shape = fields[0].values.shape
    X = np.stack([f.values.ravel() for f in fields], axis=1)
    if k < 2 or k > X.shape[0]:
        raise ValueError(f"k={k} out of range for {X.shape[0]} nodes")
    streams = np.random.SeedSequence(seed).spawn(restarts)
    best_labels, best_wcss = None, np.inf
    for st in streams:
        rng = np.random.default_rng(st)
        centers = _kmeanspp(X, k, rng)
        labels = None
        for _ in range(max_iter):
            dist = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
            new_labels = dist.argmin(axis=1)
            if labels is not None and np.array_equal(new_labels, labels):
                break
            labels = new_labels
            for c in range(k):
                sel = labels == c
                if sel.any():
                    centers[c] = X[sel].mean(axis=0)
        wcss = float(((X - centers[labels]) ** 2).sum())
        if wcss < best_wcss - 1e-12:
            best_wcss, best_labels = wcss, labels
    return best_labels.reshape(shape)


def _kmeanspp(X: np.ndarray, k: int, rng) -> np.ndarray:
    n = X.shape[0]
    centers = [X[rng.integers(n)]]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        probs = d2 / d2.sum() if d2.sum() > 0 else np.full(n, 1.0 / n)
        centers.append(X[rng.choice(n, p=probs)])
        d2 = np.minimum(d2, ((X - centers[-1]) ** 2).sum(axis=1))
    return np.stack(centers)
