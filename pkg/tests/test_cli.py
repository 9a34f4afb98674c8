"""End-to-end CLI tests (in-process main() invocations)."""

import json

import pytest

from scotkit.cli import main
from scotkit.dataset import load_records, save_records, synth_generate


@pytest.fixture()
def corpus(tmp_path):
    path = tmp_path / "corpus.jsonl"
    save_records(path, synth_generate(seed=3, n=5, max_entities=4))
    return path


def run(capsys, *argv) -> tuple[int, str, str]:
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


SCENE = {
    "entities": [
        {"id": "a", "phrase": "red apple", "category": "apple", "size": "small"},
        {"id": "b", "phrase": "blue bench", "category": "bench", "size": "medium"},
    ],
    "constraints": [
        {"kind": "left_of", "a": "a", "b": "b"},
        {"kind": "non_overlap", "a": "a", "b": "b"},
    ],
    "tail": "in a park.",
}


class TestEncodeDecode:
    def test_encode_then_decode_round_trip(self, tmp_path, corpus, capsys):
        code, out, _ = run(capsys, "encode", str(corpus))
        assert code == 0
        lines = out.strip().splitlines()
        assert len(lines) == 5
        instr_file = tmp_path / "instr.txt"
        instr_file.write_text(out)
        code, out2, _ = run(capsys, "decode", str(instr_file))
        assert code == 0
        originals = load_records(corpus)
        for line, original in zip(out2.strip().splitlines(), originals):
            doc = json.loads(line)
            assert [e["box"] for e in doc["entities"]] == [
                e.box.as_list() for e in original.entities
            ]

    def test_encode_missing_file(self, capsys, tmp_path):
        code, _, err = run(capsys, "encode", str(tmp_path / "nope.jsonl"))
        assert code == 2
        assert "error" in err

    def test_decode_invalid_instruction(self, capsys, tmp_path):
        bad = tmp_path / "bad.txt"
        bad.write_text("cat <|box|>1,2<|/box|>\n")
        code, _, err = run(capsys, "decode", str(bad))
        assert code == 1


class TestPlanCheckRepair:
    def test_plan(self, tmp_path, capsys):
        spec_file = tmp_path / "scene.json"
        spec_file.write_text(json.dumps(SCENE))
        code, out, _ = run(capsys, "plan", str(spec_file), "--seed", "0")
        assert code == 0
        doc = json.loads(out)
        assert set(doc) == {"reasoning", "prompt", "objects"}
        assert list(doc["objects"]) == ["1. red apple", "2. blue bench"]
        assert "red apple<|bbox_1|>" in doc["prompt"]

    def test_plan_determinism(self, tmp_path, capsys):
        spec_file = tmp_path / "scene.json"
        spec_file.write_text(json.dumps(SCENE))
        _, out1, _ = run(capsys, "plan", str(spec_file), "--seed", "4")
        _, out2, _ = run(capsys, "plan", str(spec_file), "--seed", "4")
        assert out1 == out2

    def test_check_and_repair(self, tmp_path, capsys):
        scene = dict(SCENE)
        scene["boxes"] = {"a": [600, 0, 700, 100], "b": [100, 0, 200, 100]}
        scene_file = tmp_path / "scene.json"
        scene_file.write_text(json.dumps(scene))
        code, out, _ = run(capsys, "check", str(scene_file))
        assert code == 0
        report = json.loads(out)
        assert report["total_magnitude"] > 0
        assert report["violations"][0]["constraint"]["kind"] == "left_of"

        code, out, _ = run(capsys, "repair", str(scene_file))
        assert code == 0
        repaired = json.loads(out)
        assert repaired["residual"] == []
        boxes = repaired["boxes"]
        assert sum(boxes["a"][0::2]) / 2 <= sum(boxes["b"][0::2]) / 2

    def test_check_requires_boxes(self, tmp_path, capsys):
        scene_file = tmp_path / "scene.json"
        scene_file.write_text(json.dumps(SCENE))
        code, _, err = run(capsys, "check", str(scene_file))
        assert code == 1 and "boxes" in err


class TestEval:
    def test_perfect_predictions(self, tmp_path, corpus, capsys):
        code, out, _ = run(
            capsys, "eval", "--refs", str(corpus), "--preds", str(corpus)
        )
        assert code == 0
        assert "SR:    100.00" in out
        assert "I-SR:  100.00" in out
        assert "mIoU:  100.00" in out


class TestRender:
    def test_render_planner_output(self, tmp_path, capsys):
        doc = {
            "reasoning": "r",
            "prompt": "a cat<|bbox_1|>",
            "objects": {"1. cat": [100, 100, 400, 400]},
        }
        in_file = tmp_path / "plan.json"
        in_file.write_text(json.dumps(doc))
        out_file = tmp_path / "plan.svg"
        code, out, _ = run(capsys, "render", str(in_file), str(out_file))
        assert code == 0
        svg = out_file.read_text()
        assert "1. cat" in svg

    def test_render_determinism(self, tmp_path, capsys):
        doc = {"boxes": {"a": [0, 0, 500, 500], "b": [500, 500, 1000, 1000]}}
        in_file = tmp_path / "plan.json"
        in_file.write_text(json.dumps(doc))
        f1, f2 = tmp_path / "a.svg", tmp_path / "b.svg"
        run(capsys, "render", str(in_file), str(f1))
        run(capsys, "render", str(in_file), str(f2))
        assert f1.read_bytes() == f2.read_bytes()


class TestDataset:
    def test_synth_stats_convert(self, tmp_path, capsys):
        out_file = tmp_path / "synth.jsonl"
        code, _, _ = run(
            capsys, "dataset", "synth", "--seed", "1", "--n", "20",
            "--max-entities", "6", "--output", str(out_file),
        )
        assert code == 0
        code, out, _ = run(capsys, "dataset", "stats", str(out_file))
        assert code == 0
        doc = json.loads(out)
        assert doc["count"] == 20

        code, out, _ = run(capsys, "dataset", "convert", str(out_file))
        assert code == 0
        assert len(out.strip().splitlines()) == 20

    def test_synth_determinism(self, tmp_path, capsys):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        run(capsys, "dataset", "synth", "--seed", "9", "--n", "10", "--output", str(a))
        run(capsys, "dataset", "synth", "--seed", "9", "--n", "10", "--output", str(b))
        assert a.read_bytes() == b.read_bytes()


class TestToy:
    def test_train_sample_gradcheck(self, tmp_path, capsys):
        instr_file = tmp_path / "instr.txt"
        instr_file.write_text("a red box <|box|>400,400,600,600<|/box|>\n")
        ckpt = tmp_path / "model.ckpt"
        curve = tmp_path / "curve.txt"
        code, out, _ = run(
            capsys, "toy", "train", "--instruction", str(instr_file),
            "--output", str(ckpt), "--curve", str(curve),
            "--steps", "30", "--batch-size", "32",
        )
        assert code == 0
        doc = json.loads(out)
        assert ckpt.exists() and curve.exists()
        assert doc["first100_mean"] > 0

        code, out, _ = run(
            capsys, "toy", "sample", "--model", str(ckpt),
            "--instruction", str(instr_file), "--n", "50", "--seed", "3",
        )
        assert code == 0
        doc = json.loads(out)
        assert doc["n"] == 50
        assert 0.0 <= doc["in_box_fraction"] <= 1.0

        code, out, _ = run(capsys, "toy", "gradcheck")
        assert code == 0
        assert json.loads(out)["max_relative_error"] <= 1e-4

    def test_checkpoint_determinism(self, tmp_path, capsys):
        instr_file = tmp_path / "instr.txt"
        instr_file.write_text("a red box <|box|>400,400,600,600<|/box|>\n")
        c1, c2 = tmp_path / "m1.ckpt", tmp_path / "m2.ckpt"
        for ckpt in (c1, c2):
            run(
                capsys, "toy", "train", "--instruction", str(instr_file),
                "--output", str(ckpt), "--steps", "20", "--batch-size", "16",
            )
        assert c1.read_bytes() == c2.read_bytes()
