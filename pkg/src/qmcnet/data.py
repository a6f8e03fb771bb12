"""QSAT dataset container, stratified splits and the synthetic generator.

QSAT layout (all integers little-endian)::

    magic      4 bytes   b"QSAT"
    version    uint16    1
    count      uint32    number of samples
    height     uint32
    width      uint32
    channels   uint16    C
    classes    uint16    K
    C x name   uint8 length + UTF-8 bytes   channel names
    K x name   uint8 length + UTF-8 bytes   class names
    count x record:
        C*H*W float32  channel-major, row-major rasters
        uint8          label
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .features import CHANNELS, six_channel

MAGIC = b"QSAT"
VERSION = 1
_HEADER = struct.Struct("<4sHIIIHH")

SPLIT_SCHEMES = {
    "eurosat-70-15-15": (0.70, 0.15, 0.15),
}


@dataclass
class Dataset:
    images: np.ndarray  # (N, C, H, W) float32
    labels: np.ndarray  # (N,) uint8
    channel_names: tuple[str, ...]
    class_names: tuple[str, ...]

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        self.channel_names = tuple(self.channel_names)
        self.class_names = tuple(self.class_names)
        if self.images.ndim != 4:
            raise ValueError("images must be (N, C, H, W)")
        if len(self.images) < 1 or len(self.images) != len(self.labels):
            raise ValueError("need at least one sample and one label per image")
        if self.images.shape[1] != len(self.channel_names):
            raise ValueError("channel name count does not match image channels")
        if self.labels.max() >= len(self.class_names):
            raise ValueError("label outside the class list")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def image_size(self) -> tuple[int, int]:
        return self.images.shape[2], self.images.shape[3]

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def channels(self, names) -> np.ndarray:
        """Images restricted to ``names`` in the given order, float64."""
        missing = [n for n in names if n not in self.channel_names]
        if missing:
            raise ValueError(f"dataset lacks channels {missing}; has {self.channel_names}")
        idx = [self.channel_names.index(n) for n in names]
        return self.images[:, idx].astype(np.float64)

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices, dtype=np.intp)
        return Dataset(self.images[indices], self.labels[indices], self.channel_names, self.class_names)


def _write_names(names) -> bytes:
    out = b""
    for n in names:
        raw = n.encode("utf-8")
        if len(raw) > 255:
            raise ValueError(f"name too long: {n!r}")
        out += bytes([len(raw)]) + raw
    return out


def _read_names(buf: bytes, pos: int, count: int) -> tuple[list[str], int]:
    names = []
    for _ in range(count):
        ln = buf[pos]
        names.append(buf[pos + 1 : pos + 1 + ln].decode("utf-8"))
        pos += 1 + ln
    return names, pos


def _record_dtype(c: int, h: int, w: int) -> np.dtype:
    return np.dtype([("x", "<f4", (c, h, w)), ("y", "u1")])


def to_bytes(ds: Dataset) -> bytes:
    n, c, h, w = ds.images.shape
    header = _HEADER.pack(MAGIC, VERSION, n, h, w, c, ds.num_classes)
    header += _write_names(ds.channel_names) + _write_names(ds.class_names)
    rec = np.empty(n, dtype=_record_dtype(c, h, w))
    rec["x"] = ds.images
    rec["y"] = ds.labels
    return header + rec.tobytes()


def from_bytes(buf: bytes) -> Dataset:
    if len(buf) < _HEADER.size:
        raise ValueError("truncated QSAT header")
    magic, version, n, h, w, c, k = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise ValueError("not a QSAT file (bad magic)")
    if version != VERSION:
        raise ValueError(f"unsupported QSAT version {version}")
    pos = _HEADER.size
    channels, pos = _read_names(buf, pos, c)
    classes, pos = _read_names(buf, pos, k)
    dt = _record_dtype(c, h, w)
    if len(buf) - pos != n * dt.itemsize:
        raise ValueError("QSAT payload size does not match header")
    rec = np.frombuffer(buf, dtype=dt, count=n, offset=pos)
    return Dataset(rec["x"].copy(), rec["y"].copy(), channels, classes)


def write_qsat(path, ds: Dataset) -> None:
    Path(path).write_bytes(to_bytes(ds))


def read_qsat(path) -> Dataset:
    return from_bytes(Path(path).read_bytes())


# --- feature engineering / conversion --------------------------------------


def engineer_features(ds: Dataset) -> Dataset:
    """Ensure the six model channels exist, deriving them from R, G, B, NIR if needed."""
    if all(c in ds.channel_names for c in CHANNELS):
        return ds
    raw = ds.channels(("R", "G", "B", "NIR"))
    six = np.stack([six_channel(*img) for img in raw])
    return Dataset(six, ds.labels, CHANNELS, ds.class_names)


def from_band_arrays(red, green, blue, nir, labels, class_names, scale: float = 1.0) -> Dataset:
    """Build a six-channel dataset from (N, H, W) band stacks.

    ``scale`` converts raw values to [0, 1] reflectance (1e-4 for Sentinel-2
    digital numbers, 1/255 for 8-bit NAIP tiles).
    """
    bands = [np.asarray(b, dtype=np.float64) * scale for b in (red, green, blue, nir)]
    six = np.stack([six_channel(*px) for px in zip(*bands)])
    return Dataset(six, labels, CHANNELS, class_names)


SAT6_CLASSES = ("building", "barren_land", "trees", "grassland", "road", "water")


def from_sat6_csv(x_csv, y_csv, limit: int | None = None) -> Dataset:
    """SAT-6 CSV export: one 28x28x4 (R, G, B, NIR) row per image, one-hot labels."""
    x = np.loadtxt(x_csv, delimiter=",", max_rows=limit).reshape(-1, 28, 28, 4)
    y = np.loadtxt(y_csv, delimiter=",", max_rows=limit).reshape(len(x), -1).argmax(axis=1)
    r, g, b, nir = (x[..., i] for i in range(4))
    return from_band_arrays(r, g, b, nir, y, SAT6_CLASSES, scale=1 / 255)


def from_npz(path) -> Dataset:
    """Arrays ``red``, ``green``, ``blue``, ``nir``, ``labels``, ``class_names`` and optional ``scale``."""
    z = np.load(path, allow_pickle=False)
    scale = float(z["scale"]) if "scale" in z else 1.0
    return from_band_arrays(z["red"], z["green"], z["blue"], z["nir"], z["labels"], [str(c) for c in z["class_names"]], scale)


# --- splits -----------------------------------------------------------------


def _allocate(n: int, fractions) -> list[int]:
    """Largest-remainder split of ``n`` items into the given fractions."""
    ideal = np.array(fractions, dtype=np.float64) * n
    counts = np.floor(ideal + 1e-9).astype(int)
    order = np.argsort(-(ideal - counts), kind="stable")
    for i in order[: n - counts.sum()]:
        counts[i] += 1
    return counts.tolist()


def stratified_split(labels, fractions, seed: int) -> list[np.ndarray]:
    """Per-class shuffled partition; index sets are sorted and disjoint."""
    labels = np.asarray(labels)
    fractions = tuple(float(f) for f in fractions)
    if any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"split fractions must be non-negative and sum to 1, got {fractions}")
    needed = sum(f > 0 for f in fractions)
    rng = np.random.default_rng(seed)
    parts: list[list[np.ndarray]] = [[] for _ in fractions]
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        if len(idx) < needed:
            raise ValueError(f"class {cls} has {len(idx)} samples, fewer than the {needed} splits")
        idx = rng.permutation(idx)
        counts = _allocate(len(idx), fractions)
        if any(f > 0 and k == 0 for f, k in zip(fractions, counts)):
            raise ValueError(f"class {cls} is too small to populate every split")
        start = 0
        for part, k in zip(parts, counts):
            part.append(idx[start : start + k])
            start += k
    return [np.sort(np.concatenate(p)) if p else np.array([], dtype=np.intp) for p in parts]


def make_splits(labels, scheme: str = "eurosat-70-15-15", seed: int = 0, fractions=None) -> dict[str, np.ndarray]:
    """Train/val/test index sets.

    ``eurosat-70-15-15``: stratified 70/15/15. ``sat6-10pct-80-20``: stratified
    10% subsample, split 80/20 into train/test, then 20% of train held out as
    validation. ``custom``: ``fractions`` = (train, val, test).
    """
    labels = np.asarray(labels)
    if scheme == "sat6-10pct-80-20":
        sample, _ = stratified_split(labels, (0.1, 0.9), seed)
        train, test = (sample[i] for i in stratified_split(labels[sample], (0.8, 0.2), seed + 1))
        fit, val = (train[i] for i in stratified_split(labels[train], (0.8, 0.2), seed + 2))
        return {"train": fit, "val": val, "test": test}
    if scheme == "custom":
        if fractions is None:
            raise ValueError("custom split needs fractions")
        fr = tuple(fractions)
    elif scheme in SPLIT_SCHEMES:
        fr = SPLIT_SCHEMES[scheme]
    else:
        raise ValueError(f"unknown split scheme {scheme!r}")
    train, val, test = stratified_split(labels, fr, seed)
    return {"train": train, "val": val, "test": test}


# --- synthetic data ---------------------------------------------------------


def _class_profile(c: int, k: int) -> dict:
    frac = c / max(k - 1, 1)
    return {
        "rgb": np.array([0.35 - 0.2 * frac, 0.3 - 0.05 * frac, 0.25 - 0.1 * frac]),
        "nir": 0.15 + 0.5 * frac,
        "angle": np.pi * c / k,
        "period": 4.0 + 2.0 * (c % 2),
        "amp": 0.08 + 0.04 * (c % 3),
    }


def synth_dataset(seed: int = 0, n: int = 600, classes: int = 4, size: int = 16) -> Dataset:
    """Deterministic six-channel toy data.

    Each class has its own reflectance profile (so NDVI/EVI levels differ)
    and its own oriented stripe texture (so local entropy and patch
    structure differ). Labels cycle through the classes.
    """
    if classes < 2:
        raise ValueError("need at least two classes")
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    labels = np.arange(n) % classes
    images = np.empty((n, 6, size, size), dtype=np.float32)
    for i, c in enumerate(labels):
        prof = _class_profile(int(c), classes)
        theta = prof["angle"] + rng.uniform(-0.15, 0.15)
        phase = rng.uniform(0, 2 * np.pi)
        wave = np.sin(2 * np.pi / prof["period"] * (xx * np.cos(theta) + yy * np.sin(theta)) + phase)
        texture = prof["amp"] * wave + 0.02 * rng.standard_normal((size, size))
        shift = rng.normal(0.0, 0.02, size=4)
        rgb = [np.clip(prof["rgb"][j] + shift[j] + texture * (0.6 + 0.2 * j), 0.0, 1.0) for j in range(3)]
        nir = np.clip(prof["nir"] + shift[3] + 1.5 * texture, 0.0, 1.0)
        images[i] = six_channel(*rgb, nir)
    return Dataset(images, labels.astype(np.uint8), CHANNELS, tuple(f"class_{c}" for c in range(classes)))
