"""Linear histogram matching between color distributions.

Fits an affine map that whitens the content image's RGB covariance
(Mahalanobis whitening) and recolors it with the style image's covariance
and mean:

    p  ->  A (p - mu_content) + mu_style,   A = S_style^(1/2) S_content^(-1/2)

with symmetric principal square roots from eigendecompositions. Covariances
are ridge-regularized so flat-color images stay finite. Used standalone as a
style-domain color mapper and as the deterministic preprocessing step ahead
of neural style transfer (which itself is not part of this toolkit).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import B2NError
from .raster import ImageBuffer


class SingularCovariance(B2NError):
    """Covariance not positive definite even after regularization."""


DEFAULT_RIDGE = 1e-3


@dataclass(frozen=True)
class LinearColorMap:
    matrix: np.ndarray          # 3x3
    mu_content: np.ndarray      # 3-vector, 8-bit units
    mu_style: np.ndarray        # 3-vector, 8-bit units


def _sqrt_and_inv_sqrt(cov: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    eigval, eigvec = np.linalg.eigh(cov)
    if np.any(eigval <= 0):
        raise SingularCovariance(f"non-positive eigenvalue {eigval.min()}")
    root = np.sqrt(eigval)
    return (eigvec * root) @ eigvec.T, (eigvec / root) @ eigvec.T


def fit_color_map(content_pixels, style_pixels,
                  ridge: float = DEFAULT_RIDGE) -> LinearColorMap:
    """Fit the whitening-based map from N x 3 pixel samples (8-bit units)."""
    content = np.asarray(content_pixels, dtype=np.float64).reshape(-1, 3)
    style = np.asarray(style_pixels, dtype=np.float64).reshape(-1, 3)
    if len(content) < 4 or len(style) < 4:
        raise ValueError("need at least 4 pixels per side")
    mu_c, mu_s = content.mean(axis=0), style.mean(axis=0)
    reg = ridge * np.eye(3)
    cov_c = np.cov(content, rowvar=False) + reg
    cov_s = np.cov(style, rowvar=False) + reg
    root_s, _ = _sqrt_and_inv_sqrt(cov_s)
    _, inv_root_c = _sqrt_and_inv_sqrt(cov_c)
    return LinearColorMap(root_s @ inv_root_c, mu_c, mu_s)


def apply_color_map(cmap: LinearColorMap, img: ImageBuffer) -> ImageBuffer:
    """Recolor an image through the affine map, clamped and rounded to 8 bits."""
    rgb = img.rgb().astype(np.float64).reshape(-1, 3)
    mapped = (rgb - cmap.mu_content) @ cmap.matrix.T + cmap.mu_style
    out = np.clip(np.rint(mapped), 0, 255).astype(np.uint8)
    out = out.reshape(img.height, img.width, 3)
    if img.has_alpha:
        out = np.concatenate([out, img.data[:, :, 3:4]], axis=2)
    return ImageBuffer(np.ascontiguousarray(out))


def fit_from_images(content: ImageBuffer, style: ImageBuffer,
                    ridge: float = DEFAULT_RIDGE) -> LinearColorMap:
    return fit_color_map(content.rgb().reshape(-1, 3),
                         style.rgb().reshape(-1, 3), ridge)
