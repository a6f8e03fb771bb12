"""Per-band complexity metrics: entropy, variance, flatness, edge density."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable

import numpy as np
from scipy import ndimage

STABILITY = 1e-12
EDGE_THRESHOLD = 0.1


@dataclass(frozen=True)
class BandMetrics:
    entropy: float
    variance: float
    flatness: float
    edge_density: float
    degenerate: bool = False

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "BandMetrics":
        return cls(
            float(d["entropy"]),
            float(d["variance"]),
            float(d["flatness"]),
            float(d["edge_density"]),
            bool(d.get("degenerate", False)),
        )


def _rescale(band: np.ndarray, top: float) -> tuple[np.ndarray, bool]:
    lo, hi = band.min(), band.max()
    if hi <= lo:
        return np.zeros_like(band), True
    return (band - lo) * (top / (hi - lo)), False


def shannon_entropy(scaled255: np.ndarray) -> float:
    counts = np.bincount(np.clip(np.rint(scaled255), 0, 255).astype(np.intp).ravel(), minlength=256)
    p = counts / counts.sum()
    return max(0.0, float(-(p * np.log2(p + STABILITY)).sum()))


def spectral_flatness(scaled255: np.ndarray) -> float:
    x = scaled255.ravel()
    geo = np.exp(np.mean(np.log(x + STABILITY)))
    return float(geo / (x.mean() + STABILITY))


def sobel_magnitude(band01: np.ndarray) -> np.ndarray:
    gx = ndimage.sobel(band01, axis=1, mode="reflect")
    gy = ndimage.sobel(band01, axis=0, mode="reflect")
    return np.hypot(gx, gy)


def edge_density(band01: np.ndarray, threshold: float = EDGE_THRESHOLD) -> float:
    return float(np.mean(sobel_magnitude(band01) > threshold))


def band_metrics(band) -> BandMetrics:
    """Metrics of one band after per-band min-max rescaling.

    H, variance and flatness use the [0, 255] scale; edge density uses [0, 1].
    A constant band rescales to zeros and is flagged ``degenerate`` with F = 0.
    """
    band = np.asarray(band, dtype=np.float64)
    if band.ndim != 2 or band.size < 4:
        raise ValueError("band must be a 2-D array with at least 4 pixels")
    if not np.all(np.isfinite(band)):
        raise ValueError("band contains non-finite values")
    s255, degenerate = _rescale(band, 255.0)
    s01, _ = _rescale(band, 1.0)
    return BandMetrics(
        entropy=shannon_entropy(s255),
        variance=float(np.var(s255)),
        flatness=0.0 if degenerate else min(1.0, spectral_flatness(s255)),
        edge_density=edge_density(s01),
        degenerate=degenerate,
    )


def dataset_band_metrics(images: Iterable[np.ndarray], band_index: int) -> BandMetrics:
    """Per-metric arithmetic mean of :func:`band_metrics` over (C, H, W) images."""
    rows = [band_metrics(np.asarray(img)[band_index]) for img in images]
    if not rows:
        raise ValueError("empty dataset")
    m = np.array([[r.entropy, r.variance, r.flatness, r.edge_density] for r in rows])
    h, v, f, e = m.mean(axis=0)
    return BandMetrics(float(h), float(v), float(f), float(e), all(r.degenerate for r in rows))
