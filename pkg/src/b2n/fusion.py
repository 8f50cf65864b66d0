"""Score fusion for the two-stage model.

A fitted model combines the detector score s_D and classifier score s_C of a
detection into one ensemble score

    E(s_D, s_C) = Pbar(s_D, s_C) - Nbar(s_D, s_C)

where Nbar is the upper-right-quadrant running maximum of a 2-D Gaussian KDE
fitted to negative validation detections (false detects plus off-class true
detects), and Pbar is the lower-left-quadrant running maximum of a KDE of
positive detections. The quadrant maxima make both terms monotone: if every
score of detection B is below detection A's, B is scored at least as
negative as A. With no positive validation samples (zero-shot) Pbar is
replaced by min(x, y), which is already its own lower-left envelope.

Scores are pre-sigmoid logits, normalized per coordinate by a min-max map
fitted on the negative sample. Values outside the negative range map outside
[0, 1]; queries are clamped to the grid domain before envelope lookup, which
is the correct extremal extension because envelopes are monotone.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import B2NError, MissingClassifierScore
from .geodata import Detection


class DegenerateScores(B2NError):
    """A score coordinate is constant across the fitting sample."""


DEFAULT_GRID_SIZE = 512
DEFAULT_DOMAIN = (-0.25, 1.25)
BANDWIDTH_FLOOR = 1e-3


@dataclass(frozen=True)
class ScoreNormalizer:
    """Per-coordinate linear maps sending the fitted sample onto [0, 1]."""

    d_offset: float
    d_scale: float
    c_offset: float
    c_scale: float

    def normalize(self, s_d, s_c):
        return ((np.asarray(s_d, dtype=np.float64) - self.d_offset) / self.d_scale,
                (np.asarray(s_c, dtype=np.float64) - self.c_offset) / self.c_scale)


IDENTITY_NORMALIZER = ScoreNormalizer(0.0, 1.0, 0.0, 1.0)


def fit_normalizer(neg_scores) -> ScoreNormalizer:
    """Min-max maps from the negative validation sample, one per coordinate."""
    pts = np.asarray(neg_scores, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
        raise ValueError("need at least 2 (s_d, s_c) pairs")
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    if lo[0] == hi[0] or lo[1] == hi[1]:
        raise DegenerateScores("constant score coordinate in fitting sample")
    return ScoreNormalizer(lo[0], hi[0] - lo[0], lo[1], hi[1] - lo[1])


def _cell_centers(grid_size: int, domain: tuple[float, float]) -> np.ndarray:
    lo, hi = domain
    step = (hi - lo) / grid_size
    return lo + (np.arange(grid_size) + 0.5) * step


def silverman_bandwidth(values: np.ndarray) -> float:
    """1.06 * sigma * n^(-1/5), floored at 1e-3; sigma is the sample std."""
    n = len(values)
    sigma = float(np.std(values, ddof=1)) if n > 1 else 0.0
    return max(1.06 * sigma * n ** (-0.2), BANDWIDTH_FLOOR)


@dataclass(frozen=True)
class KdeSurface:
    """Product-Gaussian KDE evaluated at the centers of a square grid.

    grid[i, j] is the density at (x_i, y_j); axis 0 follows the detector
    score, axis 1 the classifier score.
    """

    grid: np.ndarray
    domain: tuple[float, float]
    bandwidths: tuple[float, float]
    sample_count: int

    def riemann_integral(self) -> float:
        lo, hi = self.domain
        cell = (hi - lo) / self.grid.shape[0]
        return float(self.grid.sum() * cell * cell)


def fit_kde(points, grid_size: int, domain: tuple[float, float] = DEFAULT_DOMAIN,
            bandwidth=None) -> KdeSurface:
    """Fit a 2-D Gaussian KDE and rasterize it onto the grid.

    ``bandwidth`` overrides Silverman's per-axis rule; give a scalar for both
    axes or an (h_x, h_y) pair.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if pts.shape[0] < 1 or pts.shape[1] != 2:
        raise ValueError("need at least one (x, y) point")
    if bandwidth is None:
        hx, hy = silverman_bandwidth(pts[:, 0]), silverman_bandwidth(pts[:, 1])
    elif np.isscalar(bandwidth):
        hx = hy = float(bandwidth)
    else:
        hx, hy = map(float, bandwidth)
    centers = _cell_centers(grid_size, domain)
    # grid[i, j] = mean_k phi_hx(x_i - px_k) * phi_hy(y_j - py_k)
    kx = np.exp(-0.5 * ((centers[:, None] - pts[None, :, 0]) / hx) ** 2)
    ky = np.exp(-0.5 * ((centers[:, None] - pts[None, :, 1]) / hy) ** 2)
    norm = 1.0 / (2.0 * np.pi * hx * hy * len(pts))
    grid = norm * (kx @ ky.T)
    return KdeSurface(grid, domain, (hx, hy), len(pts))


UPPER_RIGHT = "upper_right"
LOWER_LEFT = "lower_left"


@dataclass(frozen=True)
class EnvelopeGrid:
    """Quadrant running maximum of a density grid.

    ``upper_right`` grids are non-increasing along +x and +y; ``lower_left``
    grids are non-decreasing. Queries interpolate bilinearly between cell
    centers and clamp to the outermost centers, so the directional
    monotonicity carries over to continuous evaluation.
    """

    grid: np.ndarray
    direction: str
    domain: tuple[float, float]

    def evaluate(self, x, y) -> np.ndarray:
        g = self.grid
        size = g.shape[0]
        lo, hi = self.domain
        step = (hi - lo) / size
        tx = np.clip((np.asarray(x, dtype=np.float64) - lo) / step - 0.5,
                     0.0, size - 1.0)
        ty = np.clip((np.asarray(y, dtype=np.float64) - lo) / step - 0.5,
                     0.0, size - 1.0)
        i0 = np.minimum(tx.astype(np.int64), size - 2)
        j0 = np.minimum(ty.astype(np.int64), size - 2)
        fx, fy = tx - i0, ty - j0
        return ((1 - fx) * (1 - fy) * g[i0, j0] + fx * (1 - fy) * g[i0 + 1, j0]
                + (1 - fx) * fy * g[i0, j0 + 1] + fx * fy * g[i0 + 1, j0 + 1])


def upper_right_envelope(surface: KdeSurface) -> EnvelopeGrid:
    """Nbar: each cell gets the maximum over cells at or above it on both axes."""
    env = np.maximum.accumulate(surface.grid[::-1, :], axis=0)[::-1, :]
    env = np.maximum.accumulate(env[:, ::-1], axis=1)[:, ::-1]
    return EnvelopeGrid(env, UPPER_RIGHT, surface.domain)


def lower_left_envelope(surface: KdeSurface) -> EnvelopeGrid:
    """Pbar: each cell gets the maximum over cells at or below it on both axes."""
    env = np.maximum.accumulate(surface.grid, axis=0)
    env = np.maximum.accumulate(env, axis=1)
    return EnvelopeGrid(env, LOWER_LEFT, surface.domain)


class ZeroShotMin:
    """Positive-side substitute when no target-class validation samples exist.

    Evaluates min(x, y) analytically; min is coordinate-wise non-decreasing,
    so it is its own lower-left envelope and needs no rasterization.
    """

    def evaluate(self, x, y) -> np.ndarray:
        return np.minimum(np.asarray(x, dtype=np.float64),
                          np.asarray(y, dtype=np.float64))

    def __repr__(self):
        return "ZeroShotMin()"


ZERO_SHOT_MIN = ZeroShotMin()


@dataclass(frozen=True)
class FusionModel:
    normalizer: ScoreNormalizer
    n_bar: EnvelopeGrid
    p_bar: EnvelopeGrid | ZeroShotMin

    @property
    def zero_shot(self) -> bool:
        return isinstance(self.p_bar, ZeroShotMin)

    @property
    def domain(self) -> tuple[float, float]:
        return self.n_bar.domain


def fit_fusion(neg, pos=None, grid_size: int = DEFAULT_GRID_SIZE,
               domain: tuple[float, float] = DEFAULT_DOMAIN,
               bandwidth=None) -> FusionModel:
    """Fit normalizer and envelopes from raw validation score pairs.

    ``neg`` holds the negative-class pairs (false detects and off-class true
    detects); ``pos`` the target-class pairs, or None for the zero-shot
    min(x, y) substitute.
    """
    normalizer = fit_normalizer(neg)
    neg_n = np.column_stack(normalizer.normalize(*np.asarray(neg, dtype=np.float64).T))
    n_bar = upper_right_envelope(fit_kde(neg_n, grid_size, domain, bandwidth))
    if pos is None or len(pos) == 0:
        p_bar: EnvelopeGrid | ZeroShotMin = ZERO_SHOT_MIN
    else:
        pos_n = np.column_stack(normalizer.normalize(*np.asarray(pos, dtype=np.float64).T))
        p_bar = lower_left_envelope(fit_kde(pos_n, grid_size, domain, bandwidth))
    return FusionModel(normalizer, n_bar, p_bar)


def ensemble_scores(model: FusionModel, s_d, s_c) -> np.ndarray:
    """Vectorized E = Pbar - Nbar over arrays of raw score pairs."""
    lo, hi = model.domain
    x, y = model.normalizer.normalize(s_d, s_c)
    x, y = np.clip(x, lo, hi), np.clip(y, lo, hi)
    return model.p_bar.evaluate(x, y) - model.n_bar.evaluate(x, y)


def ensemble_score(model: FusionModel, det: Detection) -> float:
    if det.s_c is None:
        raise MissingClassifierScore("detection has no classifier score")
    return float(ensemble_scores(model, det.s_d, det.s_c))


def apply_fusion(model: FusionModel, dets: list[Detection]) -> list[Detection]:
    """Set the fused field on every detection, preserving order."""
    for i, det in enumerate(dets):
        if det.s_c is None:
            raise MissingClassifierScore(f"detection {i} has no classifier score")
    if not dets:
        return []
    scores = ensemble_scores(model, np.array([d.s_d for d in dets]),
                             np.array([d.s_c for d in dets]))
    return [replace(d, fused=float(s)) for d, s in zip(dets, scores)]
