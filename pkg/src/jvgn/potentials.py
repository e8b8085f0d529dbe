"""Regions, scenes and the unary / binary potential networks.

Both networks share one shape: project the visual feature to the language
dimension, gate it elementwise with the phrase encoding, L2-normalize, and
reduce to a scalar score. Scores are turned into potentials by a softmax over
the regions (unary) or over all ordered region pairs (binary).
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad


@dataclass(frozen=True)
class Region:
    box: tuple[float, float, float, float]
    appearance: np.ndarray

    def __post_init__(self):
        x1, y1, x2, y2 = (float(v) for v in self.box)
        if not (x1 < x2 and y1 < y2):
            raise ValueError(f"degenerate box {self.box}")
        app = np.asarray(self.appearance, dtype=np.float64)
        if app.ndim != 1 or not np.all(np.isfinite(app)):
            raise ValueError("appearance must be a finite vector")
        object.__setattr__(self, "box", (x1, y1, x2, y2))
        object.__setattr__(self, "appearance", app)

    @property
    def area(self) -> float:
        x1, y1, x2, y2 = self.box
        return (x2 - x1) * (y2 - y1)


@dataclass(frozen=True)
class Scene:
    width: float
    height: float
    regions: tuple[Region, ...]

    def __post_init__(self):
        object.__setattr__(self, "regions", tuple(self.regions))
        if self.width <= 0 or self.height <= 0:
            raise ValueError("scene width and height must be positive")
        if not self.regions:
            raise ValueError("a scene needs at least one region")
        dims = {r.appearance.shape for r in self.regions}
        if len(dims) != 1:
            raise ValueError("regions disagree on appearance dimension")
        for i, r in enumerate(self.regions):
            x1, y1, x2, y2 = r.box
            if x1 < 0 or y1 < 0 or x2 > self.width or y2 > self.height:
                raise ValueError(f"region {i} box {r.box} leaves the {self.width}x{self.height} image")

    @property
    def num_regions(self) -> int:
        return len(self.regions)

    def boxes(self) -> np.ndarray:
        return np.array([r.box for r in self.regions])

    def appearance(self) -> np.ndarray:
        return np.stack([r.appearance for r in self.regions])

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "regions": [{"box": list(r.box), "appearance": r.appearance.tolist()} for r in self.regions],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Scene":
        return cls(doc["width"], doc["height"],
                   tuple(Region(tuple(r["box"]), np.array(r["appearance"], dtype=np.float64))
                         for r in doc["regions"]))

    @classmethod
    def load(cls, path: str | Path) -> "Scene":
        return cls.from_dict(json.loads(Path(path).read_text()))


def spatial_features(region: Region, width: float, height: float) -> np.ndarray:
    """[x_tl/W, y_tl/H, x_br/W, y_br/H, box_area/(W*H)]."""
    if width <= 0 or height <= 0:
        raise ValueError("width and height must be positive")
    x1, y1, x2, y2 = region.box
    return np.array([x1 / width, y1 / height, x2 / width, y2 / height,
                     (x2 - x1) * (y2 - y1) / (width * height)])


def scene_spatial_features(scene: Scene) -> np.ndarray:
    return np.stack([spatial_features(r, scene.width, scene.height) for r in scene.regions])


def region_features(scene: Scene, params, appearance=None) -> ad.Tensor:
    """(N, D_app + D_sp) matrix of appearance concatenated with projected layout.

    ``appearance`` may override the scene's appearance matrix, e.g. with a
    Tensor when gradients with respect to the inputs are wanted.
    """
    app = scene.appearance() if appearance is None else appearance
    proj = ad.add(ad.matmul(scene_spatial_features(scene), params["sp_w"]), params["sp_b"])
    return ad.concat_last(app, proj)


def region_feature(region: Region, width: float, height: float, params) -> np.ndarray:
    sp = spatial_features(region, width, height)
    proj = sp @ ad.value_of(params["sp_w"]) + ad.value_of(params["sp_b"])
    return np.concatenate([region.appearance, proj])


def _gate_and_score(pre: ad.Tensor, encoding, w2, b2) -> ad.Tensor:
    gated = ad.mul(pre, encoding)
    return ad.add(ad.dot_vec(ad.l2_normalize(gated), w2), b2)


def _lift(encoding, extra_axes: int):
    """(D,) stays as is; (P, D) becomes (P, 1, ..., 1, D) to broadcast over regions."""
    encoding = ad.as_tensor(encoding)
    if encoding.value.ndim == 1:
        return encoding, None
    p, d = encoding.shape
    return ad.reshape(encoding, (p,) + (1,) * extra_axes + (d,)), p


def unary_log_potentials(features, encoding, params) -> ad.Tensor:
    """Log unary potentials: (N,) for one node encoding, (P, N) for a (P, D_w) stack."""
    pre = ad.add(ad.matmul(features, params["un_w1"]), params["un_b1"])
    enc, batch = _lift(encoding, 1)
    scores = _gate_and_score(pre, enc, params["un_w2"], params["un_b2"])
    return ad.log_softmax(scores, None if batch is None else 1)


def binary_log_potentials(features, encoding, params) -> ad.Tensor:
    """Log binary tables indexed (subject region, object region).

    (N, N) for one edge encoding, (P, N, N) for a (P, D_w) stack. The first
    layer acts on the concatenation [x_subject; x_object]; it is evaluated as
    x_subject @ W_top + x_object @ W_bottom, the same product without
    materializing the N*N concatenations.
    """
    features = ad.as_tensor(features)
    n, dx = features.shape
    w1 = params["bi_w1"]
    top = ad.matmul(features, ad.getitem(w1, slice(0, dx)))
    bottom = ad.matmul(features, ad.getitem(w1, slice(dx, 2 * dx)))
    pre = ad.add(ad.add(ad.reshape(top, (n, 1, -1)), ad.reshape(bottom, (1, n, -1))), params["bi_b1"])
    enc, batch = _lift(encoding, 2)
    scores = _gate_and_score(pre, enc, params["bi_w2"], params["bi_b2"])
    return ad.log_softmax(scores, None if batch is None else 2)


def unary_potentials(scene: Scene, node_encoding, params) -> np.ndarray:
    feats = region_features(scene, params)
    return np.exp(unary_log_potentials(feats, node_encoding, params).value)


def binary_potentials(scene: Scene, edge_encoding, params) -> np.ndarray:
    feats = region_features(scene, params)
    return np.exp(binary_log_potentials(feats, edge_encoding, params).value)
