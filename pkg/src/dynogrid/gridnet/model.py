"""Learned BEV dynamic-grid predictor.

Per scan, points are binned into vertical pillars over the shared BEV
footprint, passed through a per-point affine + tanh and max-pooled per pillar
into a dense feature map. Two stride-2 convolutions compress each map into a
latent; the flattened latent, concatenated with an embedding of the ego
body-frame velocity, drives an LSTM across the scan history. The final hidden
state is decoded through two upsample+conv blocks into per-cell logits at
grid resolution; sigmoid gives the dynamic probability of each column.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..core import PointCloudScan, to_world
from ..grids import DynamicGrid, PillarSpec
from . import autodiff as ad
from .autodiff import Tensor


@dataclass(frozen=True)
class GridNetConfig:
    """Network widths and history length. The defaults are desk-scale; all of
    them are config-file overridable."""

    pillar_channels: int = 16
    compress_channels: tuple = (16, 16)
    velocity_channels: int = 16
    lstm_hidden: int = 128
    decoder_channels: tuple = (16, 16)
    history: int = 3

    def to_dict(self) -> dict:
        return {
            "pillar_channels": self.pillar_channels,
            "compress_channels": list(self.compress_channels),
            "velocity_channels": self.velocity_channels,
            "lstm_hidden": self.lstm_hidden,
            "decoder_channels": list(self.decoder_channels),
            "history": self.history,
        }

    @staticmethod
    def from_dict(d: dict) -> "GridNetConfig":
        base = GridNetConfig()
        return GridNetConfig(
            pillar_channels=int(d.get("pillar_channels", base.pillar_channels)),
            compress_channels=tuple(d.get("compress_channels", base.compress_channels)),
            velocity_channels=int(d.get("velocity_channels", base.velocity_channels)),
            lstm_hidden=int(d.get("lstm_hidden", base.lstm_hidden)),
            decoder_channels=tuple(d.get("decoder_channels", base.decoder_channels)),
            history=int(d.get("history", base.history)),
        )


@dataclass
class PillarData:
    """Raw per-pillar point features for one scan, ready for the network.

    features : (P, max_points, 8) float64, zero-padded
    valid : (P, max_points) bool mask of real points
    ix, iy : (P,) unique cell indices
    """

    features: np.ndarray
    valid: np.ndarray
    ix: np.ndarray
    iy: np.ndarray


def build_pillars(points_world: np.ndarray, spec: PillarSpec) -> PillarData:
    """Bin world-frame points into pillars and compute the fixed 8-wide
    feature layout. Points are ordered lexicographically inside each pillar
    before the per-pillar cap is applied, so the result is independent of
    input point order."""
    pts = np.asarray(points_world, dtype=np.float64).reshape(-1, 3)
    if len(pts):
        idx = spec.cell_index(pts[:, :2])
        inb = spec.in_bounds(idx)
        pts, idx = pts[inb], idx[inb]
    if len(pts) == 0:
        return PillarData(
            features=np.zeros((0, spec.max_points_per_pillar, 8)),
            valid=np.zeros((0, spec.max_points_per_pillar), dtype=bool),
            ix=np.zeros(0, dtype=np.int64),
            iy=np.zeros(0, dtype=np.int64),
        )
    flat = idx[:, 0] * spec.grid_extent + idx[:, 1]
    order = np.lexsort((pts[:, 2], pts[:, 1], pts[:, 0], flat))
    pts, flat = pts[order], flat[order]
    starts = np.flatnonzero(np.diff(flat, prepend=flat[0] - 1))
    ends = np.append(starts[1:], len(flat))
    cap = spec.max_points_per_pillar
    centers = spec.cell_centers_1d()

    p = len(starts)
    feats = np.zeros((p, cap, 8))
    valid = np.zeros((p, cap), dtype=bool)
    ix = np.empty(p, dtype=np.int64)
    iy = np.empty(p, dtype=np.int64)
    for i, (a, b) in enumerate(zip(starts, ends)):
        chunk = pts[a : min(b, a + cap)]
        m = len(chunk)
        cell = flat[a]
        ix[i] = cell // spec.grid_extent
        iy[i] = cell % spec.grid_extent
        mean = chunk.mean(axis=0)
        feats[i, :m, 0:3] = chunk
        feats[i, :m, 3:6] = chunk - mean
        feats[i, :m, 6] = chunk[:, 0] - centers[ix[i]]
        feats[i, :m, 7] = chunk[:, 1] - centers[iy[i]]
        valid[i, :m] = True
    return PillarData(features=feats, valid=valid, ix=ix, iy=iy)


class GridNetModel:
    """Parameter container plus the differentiable forward pass."""

    def __init__(self, spec: PillarSpec, config: GridNetConfig, seed: int = 0, zero_init: bool = False):
        self.spec = spec
        self.config = config
        n = spec.grid_extent
        self.n1 = (n - 1) // 2 + 1
        self.n2 = (self.n1 - 1) // 2 + 1
        c1 = config.pillar_channels
        ca, cb = config.compress_channels
        cv = config.velocity_channels
        h = config.lstm_hidden
        cd, cm = config.decoder_channels
        self.lstm_input = cb * self.n2 * self.n2 + cv

        # Fixed input normalization: absolute coordinates come in as meters
        # over the whole footprint, offsets as fractions of a cell; without
        # rescaling the tanh pillar net saturates immediately.
        half = spec.half_extent
        cell = spec.cell_size
        self.feature_scale = np.array(
            [1.0 / half, 1.0 / half, 1.0 / half, 1.0 / cell, 1.0 / cell, 0.5, 1.0 / cell, 1.0 / cell]
        )

        rng = np.random.default_rng(seed)

        def init(*shape, gain: float = 5.0 / 3.0):
            # Tanh-gain scaling; without it the stacked tanh blocks shrink the
            # input-dependent signal until biases dominate training.
            if zero_init:
                return Tensor(np.zeros(shape), requires_grad=True)
            fan_in = shape[0] if len(shape) <= 2 else int(np.prod(shape[1:]))
            s = gain * np.sqrt(3.0 / max(fan_in, 1))
            return Tensor(rng.uniform(-s, s, size=shape), requires_grad=True)

        def zeros(*shape):
            return Tensor(np.zeros(shape), requires_grad=True)

        self.params: dict[str, Tensor] = {
            "pillar.w": init(8, c1),
            "pillar.b": zeros(c1),
            "comp1.w": init(ca, c1, 3, 3),
            "comp1.b": zeros(ca),
            "comp2.w": init(cb, ca, 3, 3),
            "comp2.b": zeros(cb),
            "vel.w": init(3, cv),
            "vel.b": zeros(cv),
            "lstm.wx": init(self.lstm_input, 4 * h),
            "lstm.wh": init(h, 4 * h),
            "lstm.b": zeros(4 * h),
            "dec_seed.w": init(h, cd * self.n2 * self.n2),
            "dec_seed.b": zeros(cd * self.n2 * self.n2),
            "dec1.w": init(cm, cd, 3, 3),
            "dec1.b": zeros(cm),
            "dec2.w": init(cm, cm, 3, 3),
            "dec2.b": zeros(cm),
            "head.w": init(1, cm, 1, 1),
            "head.b": zeros(1),
        }
        if not zero_init:
            # Forget-gate bias starts open so early training retains state.
            b = self.params["lstm.b"].data
            b[h : 2 * h] = 1.0

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def encode_pillars(self, scan_or_points, pillars: PillarData | None = None) -> Tensor:
        """Dense (C1, n, n) BEV feature map for one scan. Accepts a
        PointCloudScan (transformed to world frame) or an (N, 3) world-frame
        array; precomputed PillarData short-circuits binning."""
        if pillars is None:
            if isinstance(scan_or_points, PointCloudScan):
                pts = to_world(scan_or_points)
            else:
                pts = np.asarray(scan_or_points, dtype=np.float64).reshape(-1, 3)
            pillars = build_pillars(pts, self.spec)
        n = self.spec.grid_extent
        c1 = self.config.pillar_channels
        p = pillars.features.shape[0]
        if p == 0:
            return ad.scatter_cells(Tensor(np.zeros((0, c1))), pillars.ix, pillars.iy, n)
        cap = self.spec.max_points_per_pillar
        flat = Tensor((pillars.features * self.feature_scale).reshape(p * cap, 8))
        h = ad.tanh(flat @ self.params["pillar.w"] + self.params["pillar.b"])
        h = ad.reshape(h, (p, cap, c1))
        # Mask padding slots out of the max with a large negative offset.
        offset = Tensor(np.where(pillars.valid, 0.0, -1e30)[:, :, None])
        pooled = ad.max_axis(h + offset, axis=1)
        return ad.scatter_cells(pooled, pillars.ix, pillars.iy, n)

    def _compress(self, bev: Tensor) -> Tensor:
        z = ad.tanh(ad.conv2d(bev, self.params["comp1.w"], self.params["comp1.b"], stride=2, pad=1))
        z = ad.tanh(ad.conv2d(z, self.params["comp2.w"], self.params["comp2.b"], stride=2, pad=1))
        return z

    def _lstm_step(self, x: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
        nh = self.config.lstm_hidden
        gates = x @ self.params["lstm.wx"] + h @ self.params["lstm.wh"] + self.params["lstm.b"]
        i = ad.sigmoid(ad.narrow(gates, 1, 0, nh))
        f = ad.sigmoid(ad.narrow(gates, 1, nh, nh))
        g = ad.tanh(ad.narrow(gates, 1, 2 * nh, nh))
        o = ad.sigmoid(ad.narrow(gates, 1, 3 * nh, nh))
        c_next = f * c + i * g
        h_next = o * ad.tanh(c_next)
        return h_next, c_next

    def forward_tensor(self, scans: Sequence, velocities: Sequence, pillars: Sequence[PillarData] | None = None) -> Tensor:
        """Probability grid as a graph node; used directly by training."""
        t_len = self.config.history
        if len(scans) != t_len or len(velocities) != t_len:
            raise ValueError(f"expected a history of exactly {t_len} scans and velocities")
        n = self.spec.grid_extent
        h = Tensor(np.zeros((1, self.config.lstm_hidden)))
        c = Tensor(np.zeros((1, self.config.lstm_hidden)))
        for t in range(t_len):
            bev = self.encode_pillars(scans[t], None if pillars is None else pillars[t])
            lat = self._compress(bev)
            lat_flat = ad.reshape(lat, (1, lat.size))
            v = Tensor(np.asarray(velocities[t], dtype=np.float64).reshape(1, 3))
            vemb = ad.tanh(v @ self.params["vel.w"] + self.params["vel.b"])
            x = ad.concat([lat_flat, vemb], axis=1)
            h, c = self._lstm_step(x, h, c)
        cd = self.config.decoder_channels[0]
        seed = ad.tanh(h @ self.params["dec_seed.w"] + self.params["dec_seed.b"])
        seed = ad.reshape(seed, (cd, self.n2, self.n2))
        u = ad.upsample_to(seed, self.n1, self.n1)
        u = ad.tanh(ad.conv2d(u, self.params["dec1.w"], self.params["dec1.b"], stride=1, pad=1))
        u = ad.upsample_to(u, n, n)
        u = ad.tanh(ad.conv2d(u, self.params["dec2.w"], self.params["dec2.b"], stride=1, pad=1))
        logits = ad.conv2d(u, self.params["head.w"], self.params["head.b"], stride=1, pad=0)
        return ad.sigmoid(ad.reshape(logits, (n, n)))

    def forward(self, scans: Sequence, velocities: Sequence, pillars: Sequence[PillarData] | None = None) -> DynamicGrid:
        probs = self.forward_tensor(scans, velocities, pillars)
        stamp = scans[-1].stamp if isinstance(scans[-1], PointCloudScan) else 0.0
        return DynamicGrid(stamp=stamp, probs=probs.data, spec=self.spec)


def forward(model: GridNetModel, scans: Sequence, velocities: Sequence) -> DynamicGrid:
    return model.forward(scans, velocities)


def encode_pillars(scan, spec: PillarSpec, model: GridNetModel) -> Tensor:
    if model.spec != spec:
        raise ValueError("model was built for a different pillar spec")
    return model.encode_pillars(scan)


# ---------------------------------------------------------------------------
# weights files: a JSON manifest next to a flat little-endian float64 blob


WEIGHTS_FORMAT = "dynogrid.weights"
WEIGHTS_VERSION = 1


def save_weights(model: GridNetModel, manifest_path) -> None:
    manifest_path = Path(manifest_path)
    data_name = manifest_path.stem + ".bin"
    tensors = []
    offset = 0
    blobs = []
    for name in sorted(model.params):
        arr = model.params[name].data
        tensors.append({"name": name, "shape": list(arr.shape), "offset": offset, "count": int(arr.size)})
        blobs.append(arr.astype("<f8").tobytes())
        offset += arr.size
    manifest = {
        "format": WEIGHTS_FORMAT,
        "version": WEIGHTS_VERSION,
        "dtype": "<f8",
        "data_file": data_name,
        "pillar_spec": {
            "cell_size": model.spec.cell_size,
            "grid_extent": model.spec.grid_extent,
            "max_points_per_pillar": model.spec.max_points_per_pillar,
        },
        "config": model.config.to_dict(),
        "tensors": tensors,
    }
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    (manifest_path.parent / data_name).write_bytes(b"".join(blobs))


def load_weights(manifest_path) -> GridNetModel:
    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format") != WEIGHTS_FORMAT:
        raise ValueError(f"not a {WEIGHTS_FORMAT} manifest")
    ps = manifest["pillar_spec"]
    spec = PillarSpec(
        cell_size=float(ps["cell_size"]),
        grid_extent=int(ps["grid_extent"]),
        max_points_per_pillar=int(ps["max_points_per_pillar"]),
    )
    config = GridNetConfig.from_dict(manifest["config"])
    model = GridNetModel(spec, config, zero_init=True)
    raw = np.frombuffer((manifest_path.parent / manifest["data_file"]).read_bytes(), dtype="<f8")
    for entry in manifest["tensors"]:
        name = entry["name"]
        if name not in model.params:
            raise ValueError(f"unknown tensor {name!r} in weights file")
        chunk = raw[entry["offset"] : entry["offset"] + entry["count"]]
        model.params[name].data = chunk.reshape(entry["shape"]).astype(np.float64)
    return model
