"""QMC-Net: per-band projection -> band circuits -> feature map -> attention head."""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .designer import BANDS, assignment
from .sim import CircuitIR, circuit_vjp, run_circuit

CHECKPOINT_FORMAT = "qmcnet-checkpoint"
DROPOUT_TENSOR_ID = 1


def worker_count() -> int:
    env = os.environ.get("QMC_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass(frozen=True)
class BandEncoder:
    """One input band: projection width and the circuit it feeds.

    ``circuit=None`` is the classical substitute used by the no-quantum
    ablation: the projection passes through tanh instead of a circuit.
    """

    band: str
    width: int
    circuit: CircuitIR | None = None

    def __post_init__(self):
        if self.circuit is not None and self.circuit.num_qubits != self.width:
            raise ValueError(f"{self.band}: width {self.width} != circuit qubits {self.circuit.num_qubits}")
        if self.circuit is not None and self.circuit.num_encoding_features != self.width:
            raise ValueError(f"{self.band}: circuit must take one encoding feature per qubit")


@dataclass
class ModelConfig:
    encoders: tuple[BandEncoder, ...]
    patch_size: int
    image_size: tuple[int, int]
    num_classes: int
    hidden: int = 128
    dropout: float = 0.3
    residual: bool = False

    def __post_init__(self):
        self.encoders = tuple(self.encoders)
        self.image_size = tuple(self.image_size)
        h, w = self.image_size
        if not self.encoders:
            raise ValueError("model needs at least one band")
        if len({e.band for e in self.encoders}) != len(self.encoders):
            raise ValueError("every band must appear once")
        if h % self.patch_size or w % self.patch_size:
            raise ValueError(f"patch size {self.patch_size} does not divide {h}x{w}")
        if self.num_classes < 2:
            raise ValueError("need at least two classes")

    @property
    def bands(self) -> tuple[str, ...]:
        return tuple(e.band for e in self.encoders)

    @property
    def channels(self) -> int:
        return sum(e.width for e in self.encoders)

    @property
    def grid(self) -> tuple[int, int]:
        return self.image_size[0] // self.patch_size, self.image_size[1] // self.patch_size

    @classmethod
    def from_assignment(
        cls,
        name: str,
        *,
        patch_size: int,
        image_size: tuple[int, int],
        num_classes: int,
        bands=None,
        no_quantum: bool = False,
        **kw,
    ) -> "ModelConfig":
        circuits = assignment(name)
        chosen = BANDS if bands is None else tuple(b for b in BANDS if b in set(bands))
        if not chosen:
            raise ValueError("empty band subset")
        unknown = set(bands or ()) - set(BANDS)
        if unknown:
            raise ValueError(f"unknown bands {sorted(unknown)}")
        enc = tuple(
            BandEncoder(b, circuits[b].num_qubits, None if no_quantum else circuits[b]) for b in chosen
        )
        return cls(enc, patch_size, image_size, num_classes, **kw)

    def to_dict(self) -> dict:
        return {
            "encoders": [
                {"band": e.band, "width": e.width, "circuit": None if e.circuit is None else e.circuit.to_dict()}
                for e in self.encoders
            ],
            "patch_size": self.patch_size,
            "image_size": list(self.image_size),
            "num_classes": self.num_classes,
            "hidden": self.hidden,
            "dropout": self.dropout,
            "residual": self.residual,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        enc = tuple(
            BandEncoder(e["band"], e["width"], None if e["circuit"] is None else CircuitIR.from_dict(e["circuit"]))
            for e in d["encoders"]
        )
        return cls(
            enc, d["patch_size"], tuple(d["image_size"]), d["num_classes"], d["hidden"], d["dropout"], d["residual"]
        )


def param_count(config: ModelConfig) -> dict[str, int]:
    """Closed-form trainable parameter counts (running statistics excluded)."""
    p2 = config.patch_size**2
    c, h, k = config.channels, config.hidden, config.num_classes
    classical = sum(p2 * e.width + e.width for e in config.encoders)
    classical += c + 1  # attention 1x1 conv
    if config.residual:
        classical += 9 * c * c + c + 2 * c
    classical += c * h + h + 2 * h + h * k + k
    quantum = sum(e.circuit.num_variational_params for e in config.encoders if e.circuit is not None)
    return {"classical": classical, "quantum": quantum}


def init_params(config: ModelConfig, seed: int) -> tuple[dict, dict]:
    """Uniform +-sqrt(1/fan_in) for classical weights, U[-0.1, 0.1] for circuit angles."""
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    buffers: dict[str, np.ndarray] = {}

    def uni(shape, fan_in):
        bound = np.sqrt(1.0 / fan_in)
        return rng.uniform(-bound, bound, size=shape)

    p2 = config.patch_size**2
    for e in config.encoders:
        params[f"encoder.{e.band}.weight"] = uni((e.width, p2), p2)
        params[f"encoder.{e.band}.bias"] = uni((e.width,), p2)
        if e.circuit is not None:
            params[f"circuit.{e.band}.theta"] = rng.uniform(-0.1, 0.1, size=e.circuit.num_variational_params)
    c, h, k = config.channels, config.hidden, config.num_classes
    if config.residual:
        params["residual.conv.weight"] = uni((c, c, 3, 3), 9 * c)
        params["residual.conv.bias"] = uni((c,), 9 * c)
        params["residual.bn.weight"] = np.ones(c)
        params["residual.bn.bias"] = np.zeros(c)
        buffers["residual.bn.running_mean"] = np.zeros(c)
        buffers["residual.bn.running_var"] = np.ones(c)
    params["attention.weight"] = uni((1, c, 1, 1), c)
    params["attention.bias"] = uni((1,), c)
    params["mlp.fc1.weight"] = uni((h, c), c)
    params["mlp.fc1.bias"] = uni((h,), c)
    params["mlp.bn.weight"] = np.ones(h)
    params["mlp.bn.bias"] = np.zeros(h)
    buffers["mlp.bn.running_mean"] = np.zeros(h)
    buffers["mlp.bn.running_var"] = np.ones(h)
    params["mlp.fc2.weight"] = uni((k, h), h)
    params["mlp.fc2.bias"] = uni((k,), h)
    return params, buffers


def is_quantum(name: str) -> bool:
    return name.startswith("circuit.")


def patchify(x: np.ndarray, p: int) -> np.ndarray:
    """(N, H, W) -> (N * G, p * p), row-major grid and row-major pixels."""
    n, h, w = x.shape
    gh, gw = h // p, w // p
    return x.reshape(n, gh, p, gw, p).transpose(0, 1, 3, 2, 4).reshape(n * gh * gw, p * p)


@dataclass
class QMCNet:
    config: ModelConfig
    params: dict = field(default_factory=dict)
    buffers: dict = field(default_factory=dict)
    seed: int = 0
    step: int = 0

    @classmethod
    def create(cls, config: ModelConfig, seed: int = 0) -> "QMCNet":
        params, buffers = init_params(config, seed)
        return cls(config, params, buffers, seed)

    # -- encoder ---------------------------------------------------------

    def encode_band(self, index: int, band_images: np.ndarray) -> tuple[np.ndarray, tuple]:
        """Per-patch <Z> for one band, shape (N * G, width)."""
        e = self.config.encoders[index]
        patches = patchify(band_images, self.config.patch_size)
        angles, lin_cache = nn.linear_forward(
            patches, self.params[f"encoder.{e.band}.weight"], self.params[f"encoder.{e.band}.bias"]
        )
        if e.circuit is None:
            out = np.tanh(angles)
        else:
            out = run_circuit(e.circuit, self.params[f"circuit.{e.band}.theta"], angles)
        return out, (angles, lin_cache, out)

    def _encode_backward(self, index: int, dz: np.ndarray, cache) -> dict:
        e = self.config.encoders[index]
        angles, lin_cache, out = cache
        grads = {}
        if e.circuit is None:
            dangles = dz * (1.0 - out**2)
        else:
            key = f"circuit.{e.band}.theta"
            grads[key], dangles = circuit_vjp(e.circuit, self.params[key], angles, dz)
        _, dw, db = nn.linear_backward(dangles, lin_cache)
        grads[f"encoder.{e.band}.weight"] = dw
        grads[f"encoder.{e.band}.bias"] = db
        return grads

    def _map(self, fn, items):
        workers = min(worker_count(), len(items))
        if workers <= 1:
            return [fn(*it) for it in items]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda it: fn(*it), items))

    def feature_map(self, x: np.ndarray) -> tuple[np.ndarray, list]:
        """Aggregated (N, C, gh, gw) map of circuit outputs, bands in config order."""
        x = self._check_input(x)
        n = x.shape[0]
        gh, gw = self.config.grid
        results = self._map(self.encode_band, [(i, x[:, i]) for i in range(len(self.config.encoders))])
        parts = [out.reshape(n, gh, gw, -1).transpose(0, 3, 1, 2) for out, _ in results]
        return np.concatenate(parts, axis=1), [c for _, c in results]

    def _check_input(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        want = (len(self.config.encoders), *self.config.image_size)
        if x.ndim != 4 or x.shape[1:] != want:
            raise ValueError(f"expected input of shape (N, {want[0]}, {want[1]}, {want[2]}), got {x.shape}")
        return x

    # -- full pipeline -----------------------------------------------------

    def forward(self, x: np.ndarray, train: bool = False, step: int | None = None) -> tuple[np.ndarray, dict]:
        """Logits (N, K) and a trace for :meth:`backward`."""
        p = self.params
        step = self.step if step is None else step
        fmap, enc_caches = self.feature_map(x)
        n, c, gh, gw = fmap.shape
        trace = {"enc": enc_caches, "fmap_shape": fmap.shape}
        feats = fmap
        if self.config.residual:
            conv, trace["res_conv"] = nn.conv2d_forward(fmap, p["residual.conv.weight"], p["residual.conv.bias"])
            bn, trace["res_bn"] = nn.batchnorm_forward(
                conv,
                p["residual.bn.weight"],
                p["residual.bn.bias"],
                self.buffers["residual.bn.running_mean"],
                self.buffers["residual.bn.running_var"],
                train,
            )
            feats, trace["res_relu"] = nn.relu_forward(fmap + bn)
        att_logits, trace["att_conv"] = nn.conv2d_forward(feats, p["attention.weight"], p["attention.bias"])
        att = nn.spatial_softmax(att_logits.reshape(n, gh * gw))
        flat = feats.reshape(n, c, gh * gw)
        context = np.einsum("ng,ncg->nc", att, flat)
        trace.update(att=att, flat=flat)
        h1, trace["fc1"] = nn.linear_forward(context, p["mlp.fc1.weight"], p["mlp.fc1.bias"])
        h2, trace["bn"] = nn.batchnorm_forward(
            h1, p["mlp.bn.weight"], p["mlp.bn.bias"], self.buffers["mlp.bn.running_mean"], self.buffers["mlp.bn.running_var"], train
        )
        h3, trace["relu"] = nn.relu_forward(h2)
        h4, trace["drop"] = nn.dropout_forward(h3, self.config.dropout, train, self.seed, step, DROPOUT_TENSOR_ID)
        logits, trace["fc2"] = nn.linear_forward(h4, p["mlp.fc2.weight"], p["mlp.fc2.bias"])
        trace["context"] = context
        return logits, trace

    def backward(self, trace: dict, dlogits: np.ndarray) -> dict:
        """Gradients of every trainable parameter given dL/dlogits."""
        g: dict[str, np.ndarray] = {}
        dh4, g["mlp.fc2.weight"], g["mlp.fc2.bias"] = nn.linear_backward(dlogits, trace["fc2"])
        dh3 = nn.dropout_backward(dh4, trace["drop"])
        dh2 = nn.relu_backward(dh3, trace["relu"])
        dh1, g["mlp.bn.weight"], g["mlp.bn.bias"] = nn.batchnorm_backward(dh2, trace["bn"])
        dctx, g["mlp.fc1.weight"], g["mlp.fc1.bias"] = nn.linear_backward(dh1, trace["fc1"])

        att, flat = trace["att"], trace["flat"]
        n, c, gh, gw = trace["fmap_shape"]
        dflat = att[:, None, :] * dctx[:, :, None]
        datt = np.einsum("nc,ncg->ng", dctx, flat)
        datt_logits = nn.spatial_softmax_backward(datt, att).reshape(n, 1, gh, gw)
        dfeats, g["attention.weight"], g["attention.bias"] = nn.conv2d_backward(datt_logits, trace["att_conv"])
        dfeats = dfeats + dflat.reshape(n, c, gh, gw)

        if self.config.residual:
            dsum = nn.relu_backward(dfeats, trace["res_relu"])
            dconv, g["residual.bn.weight"], g["residual.bn.bias"] = nn.batchnorm_backward(dsum, trace["res_bn"])
            dres, g["residual.conv.weight"], g["residual.conv.bias"] = nn.conv2d_backward(dconv, trace["res_conv"])
            dfmap = dsum + dres
        else:
            dfmap = dfeats

        offsets = np.cumsum([0] + [e.width for e in self.config.encoders])
        items = []
        for i, cache in enumerate(trace["enc"]):
            part = dfmap[:, offsets[i] : offsets[i + 1]]
            items.append((i, part.transpose(0, 2, 3, 1).reshape(n * gh * gw, -1), cache))
        for band_grads in self._map(self._encode_backward, items):
            g.update(band_grads)
        return g

    def loss_and_grads(self, x, labels, step: int | None = None) -> tuple[float, dict, np.ndarray]:
        logits, trace = self.forward(x, train=True, step=step)
        loss, dlogits = nn.cross_entropy(logits, labels)
        return loss, self.backward(trace, dlogits), logits

    def predict_logits(self, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
        outs = [self.forward(x[i : i + batch_size], train=False)[0] for i in range(0, len(x), batch_size)]
        return np.concatenate(outs, axis=0)

    # -- persistence -------------------------------------------------------

    def save(self, path, extra: dict | None = None) -> None:
        """Write ``manifest.json`` and ``params.bin`` (little-endian float64) into ``path``."""
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        groups = [("param", k, v) for k, v in self.params.items()] + [("buffer", k, v) for k, v in self.buffers.items()]
        manifest = {
            "format": CHECKPOINT_FORMAT,
            "version": 1,
            "config": self.config.to_dict(),
            "seed": self.seed,
            "step": self.step,
            "groups": [{"name": k, "kind": kind, "shape": list(v.shape)} for kind, k, v in groups],
            "extra": extra or {},
        }
        blob = b"".join(np.ascontiguousarray(v, dtype="<f8").tobytes() for _, _, v in groups)
        (path / "params.bin").write_bytes(blob)
        (path / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> tuple["QMCNet", dict]:
        path = Path(path)
        manifest = json.loads((path / "manifest.json").read_text())
        if manifest.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path} is not a QMC-Net checkpoint")
        blob = np.frombuffer((path / "params.bin").read_bytes(), dtype="<f8")
        params, buffers, pos = {}, {}, 0
        for grp in manifest["groups"]:
            size = int(np.prod(grp["shape"]))
            arr = blob[pos : pos + size].reshape(grp["shape"]).astype(np.float64)
            pos += size
            (params if grp["kind"] == "param" else buffers)[grp["name"]] = arr
        if pos != blob.size:
            raise ValueError("parameter blob size does not match manifest")
        model = cls(ModelConfig.from_dict(manifest["config"]), params, buffers, manifest["seed"], manifest["step"])
        return model, manifest.get("extra", {})
