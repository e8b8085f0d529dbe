import json

from jvgn.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_parse(capsys):
    code, out, err = run(capsys, "parse", "--expr", "the man in the red jacket on skis")
    assert code == 0 and "3 nodes" in err
    assert [n["head"] for n in json.loads(out)["nodes"]] == [["man"], ["jacket"], ["skis"]]


def test_parse_error(capsys):
    code, _, err = run(capsys, "parse", "--expr", "the zebra")
    assert code == 2 and "zebra" in err


def test_pipeline(tmp_path, capsys):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"num_train": 12, "num_val": 0, "num_test": 6}))
    data = tmp_path / "d"
    assert run(capsys, "gen-synth", "--spec", str(spec), "--seed", "2", "--out", str(data))[0] == 0
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"epochs": 1, "batch_size": 4, "dims": {"d_emb": 6, "d_w": 6}}))
    ckpt = tmp_path / "ck.json"
    code, out, _ = run(capsys, "train", "--data", str(data), "--config", str(cfg), "--out", str(ckpt), "--seed", "0")
    assert code == 0 and len(json.loads(out)["history"]) == 1 and ckpt.exists()
    code, out, _ = run(capsys, "eval", "--data", str(data), "--ckpt", str(ckpt))
    assert code == 0 and json.loads(out)["examples"] == 6

    ex = json.loads((data / "test" / "test-000000.json").read_text())
    scene = tmp_path / "scene.json"
    scene.write_text(json.dumps(ex["scene"]))
    res = tmp_path / "res.json"
    code, out, _ = run(capsys, "ground", "--scene", str(scene), "--expr", ex["expression"], "--ckpt", str(ckpt),
                       "--json", str(res))
    doc = json.loads(out)
    assert code == 0 and doc == json.loads(res.read_text())
    assert len(doc["marginals"]) == len(doc["groundings"]) == len(ex["scene_graph"]["nodes"])


def test_checks(capsys):
    code, out, _ = run(capsys, "oracle-check", "--trials", "20", "--seed", "1")
    assert code == 0 and json.loads(out)["max_marginal_error"] < 1e-9
    code, out, _ = run(capsys, "grad-check", "--instances", "2", "--seed", "1")
    assert code == 0 and json.loads(out)["max_relative_error"] < 1e-4
