"""Synthetic grounding scenes whose referent can only be told apart through context.

A scene holds the referent, several same-noun distractors, the mentioned
context objects and filler objects. Boxes are resampled until exactly one
joint assignment of (referent, contexts) satisfies every relation in the
expression, so both the referent and each context object have a unique
correct region.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import scene_graph as sgm
from .expr_parser import Grammar, default_grammar, parse_expression, tokenize
from .potentials import Region, Scene
from .scene_graph import SceneGraph
from .training import DET, GT, iou

DATASET_FORMAT = "jvgn-dataset"
DATASET_VERSION = 1

# signed margins in image-normalized units: positive means the relation holds
RELATION_MARGINS = {
    ("left", "of"): lambda s, o: o[0] - s[2],
    ("to", "the", "left", "of"): lambda s, o: o[0] - s[2],
    ("right", "of"): lambda s, o: s[0] - o[2],
    ("to", "the", "right", "of"): lambda s, o: s[0] - o[2],
    ("above",): lambda s, o: o[1] - s[3],
    ("below",): lambda s, o: s[1] - o[3],
}


class GenerationError(RuntimeError):
    pass


@dataclass
class SynthSpec:
    num_train: int = 2000
    num_val: int = 200
    num_test: int = 500
    regions: int = 8
    nouns: list[str] = field(default_factory=lambda: ["ball", "cube", "cylinder", "cone"])
    attributes: list[str] = field(default_factory=lambda: ["red", "blue", "green", "yellow"])
    relations: list[list[str]] = field(default_factory=lambda: [
        ["left", "of"], ["right", "of"], ["above"], ["below"]])
    min_nodes: int = 2
    max_nodes: int = 3
    min_distractors: int = 2
    max_distractors: int = 2
    # chance that a distractor also copies the referent's attribute
    same_attribute_prob: float = 1.0
    # chance that a context object gets a look-alike elsewhere in the scene
    context_distractor_prob: float = 0.5
    appearance_dim: int = 32
    noise: float = 0.3
    width: float = 640.0
    height: float = 480.0
    min_box: float = 0.08
    max_box: float = 0.22
    max_pair_iou: float = 0.3
    min_margin: float = 0.02
    setting: str = GT
    det_jitter: int = 1
    max_retries: int = 2000

    def validate(self, grammar: Grammar) -> None:
        if self.regions < 2:
            raise ValueError("at least 2 regions are needed to make a referent ambiguous")
        if not self.nouns or not self.attributes or not self.relations:
            raise ValueError("noun, attribute and relation inventories must be non-empty")
        if not 1 <= self.min_nodes <= self.max_nodes:
            raise ValueError("need 1 <= min_nodes <= max_nodes")
        if self.min_distractors < 0 or self.max_distractors < self.min_distractors:
            raise ValueError("bad distractor range")
        need = 1 + self.max_distractors + 2 * (self.max_nodes - 1)
        if need > self.regions:
            raise ValueError(f"{self.regions} regions cannot hold {need} mentioned objects and look-alikes")
        if self.setting not in (GT, DET):
            raise ValueError(f"unknown setting {self.setting!r}")
        for n in self.nouns:
            if n not in grammar.nouns:
                raise ValueError(f"noun {n!r} not in grammar")
        for a in self.attributes:
            if a not in grammar.attributes:
                raise ValueError(f"attribute {a!r} not in grammar")
        for r in self.relations:
            if tuple(r) not in grammar.relations:
                raise ValueError(f"relation {r!r} not in grammar")
            if tuple(r) not in RELATION_MARGINS:
                raise ValueError(f"no placement rule for relation {' '.join(r)!r}")
        if len(self.nouns) * len(self.attributes) < self.max_nodes:
            raise ValueError("fewer (noun, attribute) types than nodes per expression")

    @classmethod
    def from_dict(cls, doc: dict) -> "SynthSpec":
        return cls(**doc)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Example:
    id: str
    scene: Scene
    expression: str
    graph: SceneGraph
    referent_region: int
    context_regions: list[int]  # gt region for every node, indexed by node id
    setting: str = GT
    gt_box: tuple | None = None

    def __post_init__(self):
        if self.gt_box is None:
            self.gt_box = self.scene.regions[self.referent_region].box
        self.gt_box = tuple(float(v) for v in self.gt_box)
        n = self.scene.num_regions
        if not 0 <= self.referent_region < n or any(not 0 <= c < n for c in self.context_regions):
            raise ValueError("ground-truth region index out of range")
        if len(self.context_regions) != self.graph.num_nodes:
            raise ValueError("need one ground-truth region per node")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "setting": self.setting,
            "expression": self.expression,
            "scene": self.scene.to_dict(),
            "scene_graph": sgm.to_dict(self.graph),
            "referent_region": self.referent_region,
            "context_regions": list(self.context_regions),
            "gt_box": list(self.gt_box),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Example":
        return cls(
            id=doc["id"],
            scene=Scene.from_dict(doc["scene"]),
            expression=doc["expression"],
            graph=sgm.from_dict(doc["scene_graph"]),
            referent_region=int(doc["referent_region"]),
            context_regions=[int(c) for c in doc["context_regions"]],
            setting=doc.get("setting", GT),
            gt_box=tuple(doc["gt_box"]) if doc.get("gt_box") is not None else None,
        )


class _Generator:
    def __init__(self, spec: SynthSpec, grammar: Grammar, seed: int):
        self.spec = spec
        self.grammar = grammar
        self.rng = np.random.default_rng(seed)
        d = spec.appearance_dim
        proto_rng = np.random.default_rng([seed, 1])
        self.noun_proto = {n: proto_rng.normal(size=d) for n in spec.nouns}
        self.attr_proto = {a: proto_rng.normal(size=d) for a in spec.attributes}
        self.types = [(n, a) for n in spec.nouns for a in spec.attributes]

    def prototype(self, t) -> np.ndarray:
        noun, attr = t
        return (self.noun_proto[noun] + self.attr_proto[attr]) / np.sqrt(2.0)

    def sample_boxes(self) -> list[tuple]:
        s, rng = self.spec, self.rng
        boxes = []
        for _ in range(s.regions):
            for _ in range(200):
                w = rng.uniform(s.min_box, s.max_box)
                h = rng.uniform(s.min_box, s.max_box)
                x = rng.uniform(0, 1 - w)
                y = rng.uniform(0, 1 - h)
                b = (x, y, x + w, y + h)
                if all(iou(b, o) <= s.max_pair_iou for o in boxes):
                    boxes.append(b)
                    break
            else:
                return []
        return boxes

    def layout(self):
        """Draw object types and relations, then boxes until the grounding is unique."""
        s, rng = self.spec, self.rng
        m = int(rng.integers(s.min_nodes, s.max_nodes + 1))
        pick = rng.permutation(len(self.types))[:m]
        node_types = [self.types[i] for i in pick]
        rels = [tuple(s.relations[int(rng.integers(len(s.relations)))]) for _ in range(m - 1)]
        ref_noun, ref_attr = node_types[0]

        region_types = [node_types[0]]
        for _ in range(int(rng.integers(s.min_distractors, s.max_distractors + 1))):
            if rng.random() < s.same_attribute_prob or len(s.attributes) == 1:
                region_types.append(node_types[0])
            else:
                others = [a for a in s.attributes if a != ref_attr]
                region_types.append((ref_noun, others[int(rng.integers(len(others)))]))
        for t in node_types[1:]:
            region_types.append(t)
            if rng.random() < s.context_distractor_prob:
                region_types.append(t)
        mentioned = set(node_types) | set(region_types)
        # with a tiny inventory fillers repeat mentioned types; the uniqueness
        # check below still rejects ambiguous layouts
        fillers = [t for t in self.types if t not in mentioned] or sorted(mentioned)
        while len(region_types) < s.regions:
            region_types.append(fillers[int(rng.integers(len(fillers)))])
        region_types = [region_types[i] for i in rng.permutation(len(region_types))]

        for _ in range(s.max_retries):
            boxes = self.sample_boxes()
            if not boxes:
                continue
            solution = self._unique_solution(boxes, region_types, node_types, rels)
            if solution is not None:
                return node_types, rels, region_types, boxes, solution
        raise GenerationError(f"no unique layout found after {s.max_retries} retries")

    def _unique_solution(self, boxes, region_types, node_types, rels):
        cands = [[i for i, t in enumerate(region_types) if t == nt] for nt in node_types]
        found = None
        for assign in itertools.product(*cands):
            if len(set(assign)) != len(assign):
                continue
            ok = True
            for k, rel in enumerate(rels):
                margin = RELATION_MARGINS[rel](boxes[assign[0]], boxes[assign[k + 1]])
                if abs(margin) < self.spec.min_margin:
                    return None
                ok = ok and margin > 0
            if ok:
                if found is not None:
                    return None
                found = list(assign)
        return found

    def phrase(self, t) -> str:
        noun, attr = t
        return f"the {attr} {noun}"

    def example(self, ex_id: str) -> Example:
        s = self.spec
        node_types, rels, region_types, boxes, solution = self.layout()
        words = [self.phrase(node_types[0])]
        for rel, t in zip(rels, node_types[1:]):
            words.append(" ".join(rel))
            words.append(self.phrase(t))
        expression = " ".join(words)
        graph = parse_expression(tokenize(expression), self.grammar)

        apps = [self.prototype(t) + s.noise * self.rng.normal(size=s.appearance_dim) for t in region_types]
        pix = [(b[0] * s.width, b[1] * s.height, b[2] * s.width, b[3] * s.height) for b in boxes]
        if s.setting == DET:
            pix, apps, solution = self._add_jitter(pix, apps, solution)
        scene = Scene(s.width, s.height, tuple(Region(b, a) for b, a in zip(pix, apps)))
        return Example(ex_id, scene, expression, graph, solution[0], solution, s.setting)

    def _add_jitter(self, pix, apps, solution):
        """Append shifted copies of each mentioned object, then shuffle all regions."""
        s, rng = self.spec, self.rng
        pix, apps = list(pix), list(apps)
        for idx in solution:
            x1, y1, x2, y2 = pix[idx]
            w = x2 - x1
            for _ in range(s.det_jitter):
                target = rng.uniform(0.0, 1.0)
                shift = w * (1 - target) / (1 + target) * (1 if rng.random() < 0.5 else -1)
                nx1 = min(max(x1 + shift, 0.0), s.width - w)
                pix.append((nx1, y1, nx1 + w, y2))
                apps.append(apps[idx] + s.noise * rng.normal(size=s.appearance_dim))
        perm = rng.permutation(len(pix))
        inv = np.argsort(perm)
        return [pix[i] for i in perm], [apps[i] for i in perm], [int(inv[i]) for i in solution]


def generate_synthetic_dataset(spec: SynthSpec, seed: int,
                               grammar: Grammar | None = None) -> dict[str, list[Example]]:
    """Deterministic train/val/test splits for ``seed``."""
    grammar = grammar or default_grammar()
    spec.validate(grammar)
    gen = _Generator(spec, grammar, seed)
    out = {}
    for split, n in (("train", spec.num_train), ("val", spec.num_val), ("test", spec.num_test)):
        out[split] = [gen.example(f"{split}-{i:06d}") for i in range(n)]
    return out


def save_dataset(root: str | Path, dataset: dict[str, list[Example]], spec: SynthSpec | None = None,
                 seed: int | None = None, grammar: Grammar | None = None) -> Path:
    """One JSON file per example plus ``manifest.json``."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    splits = {}
    for split, examples in dataset.items():
        (root / split).mkdir(exist_ok=True)
        files = []
        for ex in examples:
            rel = f"{split}/{ex.id}.json"
            (root / rel).write_text(json.dumps(ex.to_dict(), sort_keys=True))
            files.append(rel)
        splits[split] = files
    manifest = {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "seed": seed,
        "spec": spec.to_dict() if spec is not None else None,
        "grammar": (grammar or default_grammar()).to_dict(),
        "splits": splits,
    }
    (root / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1))
    return root


def load_dataset(root: str | Path) -> tuple[dict[str, list[Example]], dict]:
    root = Path(root)
    manifest = json.loads((root / "manifest.json").read_text())
    if manifest.get("format") != DATASET_FORMAT:
        raise ValueError(f"{root} is not a jvgn dataset")
    data = {split: [Example.from_dict(json.loads((root / f).read_text())) for f in files]
            for split, files in manifest["splits"].items()}
    return data, manifest
