"""Command line entry point.

Every command writes one JSON document to stdout and a short human-readable
summary to stderr, so stdout can be piped straight into other tools.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import asdict
from pathlib import Path

from . import scene_graph as sgm
from .checks import grad_check, oracle_check
from .encoder import Vocabulary, load_pretrained_embeddings
from .evaluation import evaluate
from .expr_parser import Grammar, ParseError, default_grammar, parse_expression
from .model import predict
from .params import ModelDims, ModelParams
from .potentials import Scene
from .synth import SynthSpec, generate_synthetic_dataset, load_dataset, save_dataset
from .training import TrainConfig, fit


def _grammar(path) -> Grammar:
    return Grammar.load(path) if path else default_grammar()


def _emit(doc, summary: str, out_path=None) -> None:
    text = json.dumps(doc, sort_keys=True)
    if out_path:
        Path(out_path).write_text(text + "\n")
    print(text)
    print(summary, file=sys.stderr)


def cmd_parse(args) -> int:
    g = parse_expression(args.expr, _grammar(args.grammar))
    _emit(sgm.to_dict(g), f"{g.num_nodes} nodes, {len(g.edges)} edges, referent {g.referent}")
    return 0


def cmd_ground(args) -> int:
    params, _ = ModelParams.load(args.ckpt)
    scene = Scene.load(args.scene)
    graph = parse_expression(args.expr, _grammar(args.grammar))
    res = predict(params, scene, graph, not args.unary_only)
    doc = res.to_dict()
    doc["scene_graph"] = sgm.to_dict(graph)
    r = res.referent_grounding
    _emit(doc, f"referent -> region {r} (p={res.referent_marginal[r]:.3f})", args.json)
    return 0


def cmd_train(args) -> int:
    cfg_doc = json.loads(Path(args.config).read_text()) if args.config else {}
    dims = ModelDims(**cfg_doc.pop("dims", {}))
    pretrained = cfg_doc.pop("pretrained", None)
    split = cfg_doc.pop("split", "train")
    if args.seed is not None:
        cfg_doc["seed"] = args.seed
    config = TrainConfig(**cfg_doc)
    data, manifest = load_dataset(args.data)
    grammar = Grammar.from_dict(manifest["grammar"]) if manifest.get("grammar") else default_grammar()
    params = ModelParams.init(Vocabulary(grammar.lexicon()), dims, seed=config.seed)
    if pretrained:
        n = load_pretrained_embeddings(pretrained, params)
        print(f"loaded {n} pretrained vectors", file=sys.stderr)
    t0 = time.perf_counter()
    res = fit(data[split], config, params,
              on_epoch=lambda m, _: print(f"epoch {m.epoch} loss {m.loss:.4f} acc {m.referent_acc:.4f}",
                                          file=sys.stderr))
    elapsed = time.perf_counter() - t0
    history = [asdict(m) for m in res.history]
    res.params.save(args.out, extra={"config": config.to_dict(), "history": history})
    last = res.history[-1] if res.history else None
    summary = f"trained {len(res.history)} epochs in {elapsed:.1f}s"
    if last:
        summary += f", final loss {last.loss:.4f}, train referent acc {last.referent_acc:.4f}"
    _emit({"checkpoint": str(args.out), "config": config.to_dict(), "history": history,
           "seconds": elapsed}, summary)
    return 0


def cmd_eval(args) -> int:
    params, _ = ModelParams.load(args.ckpt)
    data, _ = load_dataset(args.data)
    out = evaluate(data[args.split], params, not args.unary_only)
    _emit(out, f"{args.split}: referent acc {out['referent_acc']:.4f}, "
               f"supporting acc {out['supporting_acc']:.4f} over {out['examples']} examples")
    return 0


def cmd_gen_synth(args) -> int:
    spec = SynthSpec.from_dict(json.loads(Path(args.spec).read_text())) if args.spec else SynthSpec()
    seed = 0 if args.seed is None else args.seed
    grammar = _grammar(args.grammar)
    data = generate_synthetic_dataset(spec, seed, grammar)
    root = save_dataset(args.out, data, spec, seed, grammar)
    counts = {k: len(v) for k, v in data.items()}
    _emit({"out": str(root), "seed": seed, "splits": counts}, f"wrote {counts} to {root}")
    return 0


def cmd_oracle_check(args) -> int:
    t0 = time.perf_counter()
    rep = oracle_check(args.trials, args.max_nodes, args.max_regions, 0 if args.seed is None else args.seed)
    doc = asdict(rep) | {"seconds": time.perf_counter() - t0}
    _emit(doc, f"max |BP - enumeration| = {rep.max_marginal_error:.3e} over {rep.trials} trials")
    return 0


def cmd_grad_check(args) -> int:
    t0 = time.perf_counter()
    rep = grad_check(args.instances, 0 if args.seed is None else args.seed, args.h)
    doc = asdict(rep) | {"seconds": time.perf_counter() - t0}
    _emit(doc, f"max relative error {rep.max_relative_error:.3e} over {rep.parameters_checked} "
               f"parameters ({rep.worst})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="jvgn", description="Scene-graph grounding with belief propagation.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--seed", type=int, default=None)
        sp.set_defaults(fn=fn)
        return sp

    sp = add("parse", cmd_parse, "parse an expression into a scene graph")
    sp.add_argument("--expr", required=True)
    sp.add_argument("--grammar")

    sp = add("ground", cmd_ground, "ground an expression in a scene")
    sp.add_argument("--scene", required=True)
    sp.add_argument("--expr", required=True)
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--json", help="also write the result to this file")
    sp.add_argument("--grammar")
    sp.add_argument("--unary-only", action="store_true", help="ground every node by its unary row")

    sp = add("train", cmd_train, "train on a generated dataset")
    sp.add_argument("--data", required=True)
    sp.add_argument("--config", help="JSON with TrainConfig fields plus optional dims/pretrained/split")
    sp.add_argument("--out", required=True)

    sp = add("eval", cmd_eval, "evaluate a checkpoint")
    sp.add_argument("--data", required=True)
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--split", default="test")
    sp.add_argument("--unary-only", action="store_true")

    sp = add("gen-synth", cmd_gen_synth, "generate a synthetic dataset")
    sp.add_argument("--spec")
    sp.add_argument("--out", required=True)
    sp.add_argument("--grammar")

    sp = add("oracle-check", cmd_oracle_check, "compare BP with brute-force enumeration")
    sp.add_argument("--trials", type=int, default=1000)
    sp.add_argument("--max-nodes", type=int, default=5)
    sp.add_argument("--max-regions", type=int, default=6)

    sp = add("grad-check", cmd_grad_check, "compare gradients with finite differences")
    sp.add_argument("--instances", type=int, default=20)
    sp.add_argument("--h", type=float, default=1e-5)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
    try:
        return args.fn(args)
    except (ParseError, sgm.SchemaError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
