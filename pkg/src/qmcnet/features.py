"""Six-channel input construction (RGB, EVI, NDVI, texture entropy) and patching."""

from __future__ import annotations

import numpy as np

CHANNELS = ("R", "G", "B", "EVI", "NDVI", "Entropy")
NDVI_EPS = 1e-8
EVI_GUARD = 1e-6
ENTROPY_RADIUS = 5


def _same_shape(*bands: np.ndarray) -> list[np.ndarray]:
    arrs = [np.asarray(b, dtype=np.float64) for b in bands]
    if any(a.shape != arrs[0].shape for a in arrs):
        raise ValueError(f"band shapes differ: {[a.shape for a in arrs]}")
    return arrs


def compute_ndvi(nir, red) -> np.ndarray:
    nir, red = _same_shape(nir, red)
    return (nir - red) / (nir + red + NDVI_EPS)


def compute_evi(nir, red, blue) -> np.ndarray:
    """EVI on [0, 1] reflectances, zeroed where the denominator vanishes and clamped to [-1, 1]."""
    nir, red, blue = _same_shape(nir, red, blue)
    den = nir + 6.0 * red - 7.5 * blue + 1.0
    ok = np.abs(den) > EVI_GUARD
    evi = np.zeros_like(nir)
    np.divide(2.5 * (nir - red), den, out=evi, where=ok)
    return np.clip(evi, -1.0, 1.0)


def minmax(x: np.ndarray) -> np.ndarray:
    """Rescale to [0, 1]; a constant array maps to zeros."""
    x = np.asarray(x, dtype=np.float64)
    lo, hi = x.min(), x.max()
    if hi <= lo:
        return np.zeros_like(x)
    return (x - lo) / (hi - lo)


def disk_offsets(radius: int = ENTROPY_RADIUS) -> np.ndarray:
    r = np.arange(-radius, radius + 1)
    dy, dx = np.meshgrid(r, r, indexing="ij")
    keep = dy**2 + dx**2 <= radius**2
    return np.stack([dy[keep], dx[keep]], axis=1)


def local_entropy(gray_u8: np.ndarray, radius: int = ENTROPY_RADIUS) -> np.ndarray:
    """Shannon entropy (bits) of the 8-bit histogram in a disk around each pixel.

    Borders are handled by symmetric reflection.
    """
    img = np.asarray(gray_u8)
    if img.ndim != 2:
        raise ValueError("expected a 2-D image")
    h, w = img.shape
    offsets = disk_offsets(radius)
    padded = np.pad(img.astype(np.intp), radius, mode="symmetric")
    hist = np.zeros((h * w, 256), dtype=np.int32)
    rows = np.arange(h * w)
    for dy, dx in offsets:
        window = padded[radius + dy : radius + dy + h, radius + dx : radius + dx + w]
        hist[rows, window.ravel()] += 1
    p = hist / len(offsets)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log2(p), 0.0)
    return (-terms.sum(axis=1)).reshape(h, w)


def grayscale_u8(r, g, b) -> np.ndarray:
    """Unweighted RGB mean of the jointly min-max scaled bands, quantized to 8 bits."""
    rgb = minmax(np.stack(_same_shape(r, g, b)))
    return np.rint(rgb.mean(axis=0) * 255.0).astype(np.uint8)


def entropy_map(r, g, b, radius: int = ENTROPY_RADIUS) -> np.ndarray:
    r, g, b = _same_shape(r, g, b)
    if r.ndim != 2 or min(r.shape) < 3:
        raise ValueError(f"entropy map needs an image of at least 3x3, got {r.shape}")
    return minmax(local_entropy(grayscale_u8(r, g, b), radius))


def six_channel(red, green, blue, nir) -> np.ndarray:
    """Stack R, G, B, EVI, NDVI, Entropy into a (6, H, W) array."""
    red, green, blue, nir = _same_shape(red, green, blue, nir)
    return np.stack(
        [
            red,
            green,
            blue,
            compute_evi(nir, red, blue),
            compute_ndvi(nir, red),
            entropy_map(red, green, blue),
        ]
    )


def scale_channels(image: np.ndarray) -> np.ndarray:
    """Per-image, per-channel min-max scaling of a (C, H, W) array to [0, 1]."""
    return np.stack([minmax(c) for c in image])


def extract_patches(image: np.ndarray, p: int) -> np.ndarray:
    """Non-overlapping p x p patches, flattened row-major.

    ``image`` is (H, W) or (C, H, W); the result is (gh, gw, p*p) or
    (C, gh, gw, p*p) with patches in row-major grid order.
    """
    img = np.asarray(image)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[None]
    c, h, w = img.shape
    if p < 1 or h % p or w % p:
        raise ValueError(f"patch size {p} does not tile a {h}x{w} image")
    gh, gw = h // p, w // p
    out = img.reshape(c, gh, p, gw, p).transpose(0, 1, 3, 2, 4).reshape(c, gh, gw, p * p)
    return out[0] if squeeze else out


def assemble_patches(patches: np.ndarray, p: int) -> np.ndarray:
    """Inverse of :func:`extract_patches`."""
    arr = np.asarray(patches)
    squeeze = arr.ndim == 3
    if squeeze:
        arr = arr[None]
    c, gh, gw, _ = arr.shape
    out = arr.reshape(c, gh, gw, p, p).transpose(0, 1, 3, 2, 4).reshape(c, gh * p, gw * p)
    return out[0] if squeeze else out
