"""Model dimensions, the trainable parameter set and checkpoint I/O."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .encoder import Vocabulary

CHECKPOINT_FORMAT = "jvgn-checkpoint"
CHECKPOINT_VERSION = 1
INIT_SCALE = 0.08


@dataclass(frozen=True)
class ModelDims:
    d_emb: int = 300
    d_w: int = 128
    d_app: int = 32
    d_sp: int = 8

    @property
    def d_x(self) -> int:
        return self.d_app + self.d_sp

    @classmethod
    def full_scale(cls) -> "ModelDims":
        return cls(d_emb=300, d_w=2348, d_app=2048, d_sp=512)


def param_shapes(dims: ModelDims, vocab_size: int) -> dict[str, tuple[int, ...]]:
    """Every trainable array, in the fixed order used for flattening."""
    dx = dims.d_x
    return {
        "embedding": (vocab_size, dims.d_emb),
        "enc_w": (dims.d_emb, dims.d_w),
        "enc_b": (dims.d_w,),
        "sp_w": (5, dims.d_sp),
        "sp_b": (dims.d_sp,),
        "un_w1": (dx, dims.d_w),
        "un_b1": (dims.d_w,),
        "un_w2": (dims.d_w,),
        "un_b2": (),
        "bi_w1": (2 * dx, dims.d_w),
        "bi_b1": (dims.d_w,),
        "bi_w2": (dims.d_w,),
        "bi_b2": (),
    }


class Weights:
    """Tensor view of a ModelParams for one forward pass."""

    def __init__(self, params: "ModelParams", requires_grad: bool, frozen: frozenset[str] = frozenset()):
        self.vocab = params.vocab
        self.dims = params.dims
        self.tensors = {
            k: Tensor(v, requires_grad=requires_grad and k not in frozen, name=k)
            for k, v in params.arrays.items()
        }

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def grads(self) -> dict[str, np.ndarray]:
        return {k: (t.grad if t.grad is not None else np.zeros_like(t.value))
                for k, t in self.tensors.items()}


class ModelParams:
    """All trainable arrays plus the vocabulary and dimensions they assume."""

    def __init__(self, dims: ModelDims, vocab: Vocabulary, arrays: dict[str, np.ndarray]):
        shapes = param_shapes(dims, len(vocab))
        if set(arrays) != set(shapes):
            raise ValueError(f"parameter names {sorted(arrays)} != {sorted(shapes)}")
        self.dims = dims
        self.vocab = vocab
        self.arrays = {}
        for k, shape in shapes.items():
            a = np.array(arrays[k], dtype=np.float64)
            if a.shape != shape:
                raise ValueError(f"{k}: shape {a.shape} != {shape}")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{k}: non-finite entries")
            self.arrays[k] = a

    @classmethod
    def init(cls, vocab: Vocabulary, dims: ModelDims = ModelDims(), seed: int = 0) -> "ModelParams":
        rng = np.random.default_rng(seed)
        arrays = {k: rng.uniform(-INIT_SCALE, INIT_SCALE, size=s)
                  for k, s in param_shapes(dims, len(vocab)).items()}
        arrays["embedding"][0] = 0.0
        return cls(dims, vocab, arrays)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def weights(self, requires_grad: bool = False, frozen=frozenset()) -> Weights:
        return Weights(self, requires_grad, frozenset(frozen))

    def copy(self) -> "ModelParams":
        return ModelParams(self.dims, self.vocab, {k: v.copy() for k, v in self.arrays.items()})

    @property
    def num_parameters(self) -> int:
        return sum(a.size for a in self.arrays.values())

    def flat(self) -> np.ndarray:
        return np.concatenate([self.arrays[k].ravel() for k in param_shapes(self.dims, len(self.vocab))])

    def with_flat(self, flat: np.ndarray) -> "ModelParams":
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.num_parameters:
            raise ValueError("flat vector has the wrong length")
        out, pos = {}, 0
        for k, shape in param_shapes(self.dims, len(self.vocab)).items():
            n = int(np.prod(shape)) if shape else 1
            out[k] = flat[pos:pos + n].reshape(shape)
            pos += n
        return ModelParams(self.dims, self.vocab, out)

    def flat_names(self) -> list[str]:
        """``name[i,j]`` label for every flat index (used in gradient reports)."""
        names = []
        for k, shape in param_shapes(self.dims, len(self.vocab)).items():
            if not shape:
                names.append(k)
            else:
                names.extend(f"{k}{list(ix)}" for ix in np.ndindex(*shape))
        return names

    # --- checkpoints ----------------------------------------------------------

    def to_dict(self, extra: dict | None = None) -> dict:
        doc = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "dims": asdict(self.dims),
            "vocab": self.vocab.to_dict(),
            "arrays": {k: {"shape": list(a.shape), "data": a.ravel().tolist()}
                       for k, a in self.arrays.items()},
        }
        if extra:
            doc["extra"] = extra
        return doc

    def save(self, path: str | Path, extra: dict | None = None) -> None:
        Path(path).write_text(json.dumps(self.to_dict(extra)))

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelParams":
        if doc.get("format") != CHECKPOINT_FORMAT:
            raise ValueError("not a jvgn checkpoint")
        if doc.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
        arrays = {k: np.array(v["data"], dtype=np.float64).reshape(v["shape"])
                  for k, v in doc["arrays"].items()}
        return cls(ModelDims(**doc["dims"]), Vocabulary.from_dict(doc["vocab"]), arrays)

    @classmethod
    def load(cls, path: str | Path) -> tuple["ModelParams", dict]:
        doc = json.loads(Path(path).read_text())
        return cls.from_dict(doc), doc.get("extra", {})
