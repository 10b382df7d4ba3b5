import json

import pytest

from rorokit.cli import main, thread_count, thread_map
from rorokit.layout import load_corpus
from rorokit.relations import Relation
from rorokit.synth import SynthConfig, synth_generate


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def write_corpus(tmp_path, n_docs=8, mix=None, seed=0, name="corpus.jsonl"):
    path = tmp_path / name
    config = SynthConfig(n_docs=n_docs, mix=mix or {"chain": 1.0})
    from rorokit.layout import save_corpus

    save_corpus(synth_generate(config, seed=seed), path)
    return path


TRAIN_CFG = {
    "rop": {"epochs": 6, "batch_size": 4, "seed": 0, "val_fraction": 0.2},
    "encoder": {"layers": 0, "model_dim": 16, "heads": 2},
}


def write_config(tmp_path, obj, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return path


# --- validate / stats / closure / convert ---


def test_validate_clean_corpus(tmp_path, capsys):
    corpus = write_corpus(tmp_path)
    code, out, _ = run(capsys, "validate", str(corpus))
    assert code == 0
    assert json.loads(out)["ok"] is True


def test_validate_reports_cycles(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text(
        json.dumps(
            {
                "id": "loop",
                "page": [100, 100],
                "segments": [
                    {"id": 0, "box": [0, 0, 40, 40],
                     "words": [{"text": "a", "box": [0, 0, 10, 10]}]},
                    {"id": 1, "box": [50, 50, 90, 90],
                     "words": [{"text": "b", "box": [50, 50, 60, 60]}]},
                ],
                "isdr": [[0, 1], [1, 0]],
            }
        )
        + "\n"
    )
    code, out, err = run(capsys, "validate", str(bad))
    assert code == 1
    report = json.loads(out)["documents"][0]
    assert report["id"] == "loop" and report["cycle"] is not None
    assert "loop" in err


def test_validate_missing_file(capsys):
    code, _, err = run(capsys, "validate", "/nonexistent/corpus.jsonl")
    assert code == 2 and "error" in err


def test_stats_counts(tmp_path, capsys):
    corpus = write_corpus(tmp_path, n_docs=5)
    code, out, err = run(capsys, "stats", str(corpus))
    assert code == 0
    stats = json.loads(out)
    loaded = load_corpus(corpus)
    assert stats["documents"] == 5
    assert stats["segments"] == sum(d.n_segments for d in loaded.documents)
    assert stats["pairs"] == sum(len(d.isdr) for d in loaded.documents)
    assert stats["nonlinear_fraction"] == 0.0  # pure chains
    assert "documents 5" in err


def test_stats_empty_corpus(tmp_path, capsys):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    code, out, _ = run(capsys, "stats", str(empty))
    assert code == 0
    stats = json.loads(out)
    assert stats["documents"] == 0 and stats["nonlinear_fraction"] is None


def test_closure_command(tmp_path, capsys):
    rel = tmp_path / "rel.json"
    rel.write_text('{"n": 3, "pairs": [[0, 1], [1, 2]]}')
    out_path = tmp_path / "closed.json"
    code, _, _ = run(capsys, "closure", str(rel), "-o", str(out_path))
    assert code == 0
    closed = json.loads(out_path.read_text())
    assert [0, 2] in closed["pairs"]


def test_closure_bad_json_exits_2(tmp_path, capsys):
    rel = tmp_path / "rel.json"
    rel.write_text("{not json")
    code, _, _ = run(capsys, "closure", str(rel))
    assert code == 2


def test_convert_produces_word_level_corpus(tmp_path, capsys):
    corpus = write_corpus(tmp_path, n_docs=3)
    out_path = tmp_path / "words.jsonl"
    code, _, _ = run(capsys, "convert", str(corpus), "-o", str(out_path))
    assert code == 0
    original = load_corpus(corpus)
    converted = load_corpus(out_path)
    for before, after in zip(original.documents, converted.documents):
        assert after.n_segments == before.n_words
        assert all(len(seg.words) == 1 for seg in after.segments)


# --- synth ---


def test_synth_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    for path in (a, b):
        code, _, _ = run(capsys, "synth", "--seed", "4", "--n-docs", "6",
                         "-o", str(path))
        assert code == 0
    assert a.read_bytes() == b.read_bytes()


def test_synth_forms_flag(tmp_path, capsys):
    path = tmp_path / "forms.jsonl"
    code, _, _ = run(capsys, "synth", "--forms", "--n-docs", "10",
                     "--seed", "0", "-o", str(path))
    assert code == 0
    corpus = load_corpus(path)
    assert len(corpus) == 10
    assert all(d.links is not None for d in corpus.documents)
    assert all(d.id.startswith("form-") for d in corpus.documents)


def test_synth_stdout_is_jsonl(tmp_path, capsys):
    code, out, _ = run(capsys, "synth", "--seed", "1", "--n-docs", "2")
    assert code == 0
    lines = [l for l in out.splitlines() if l.strip()]
    assert len(lines) == 2 and all(json.loads(l)["id"] for l in lines)


def test_synth_bad_config_exits_1(tmp_path, capsys):
    cfg = write_config(tmp_path, {"synth": {"mix": {"spiral": 1.0}}})
    code, _, _ = run(capsys, "synth", "--config", str(cfg))
    assert code == 1


# --- train / eval / predict pipeline ---


def test_pipeline_train_eval_predict(tmp_path, capsys):
    corpus = write_corpus(tmp_path, n_docs=8)
    cfg = write_config(tmp_path, TRAIN_CFG)
    model = tmp_path / "model.json"

    code, out, err = run(capsys, "train", str(corpus), "--model", str(model),
                         "--config", str(cfg))
    assert code == 0 and model.exists()
    report = json.loads(out)
    assert report["epochs_run"] >= 1 and str(model) in err

    code, out, _ = run(capsys, "eval", str(corpus), "--model", str(model),
                       "--heuristic")
    assert code == 0
    table = json.loads(out)
    assert [row["name"] for row in table["systems"]] == ["heuristic", "model"]
    assert table["ceiling"]["mean_best_recall"] == 1.0  # chains

    predicted = tmp_path / "pred.jsonl"
    code, out, _ = run(capsys, "predict", str(corpus), "--model", str(model),
                       "--out-corpus", str(predicted))
    assert code == 0 and predicted.exists()
    summary = json.loads(out)
    assert set(summary) == {"documents", "acyclic_fraction"}
    assert len(summary["documents"]) == 8
    reloaded = load_corpus(predicted, allow_cyclic=True)
    assert len(reloaded) == 8


def test_train_is_byte_deterministic(tmp_path, capsys):
    corpus = write_corpus(tmp_path, n_docs=6)
    cfg = write_config(tmp_path, TRAIN_CFG)
    models = []
    for name in ("m1.json", "m2.json"):
        path = tmp_path / name
        code, _, _ = run(capsys, "train", str(corpus), "--model", str(path),
                         "--config", str(cfg))
        assert code == 0
        models.append(path.read_bytes())
    assert models[0] == models[1]


def test_eval_without_systems_exits_1(tmp_path, capsys):
    corpus = write_corpus(tmp_path, n_docs=2)
    code, _, err = run(capsys, "eval", str(corpus))
    assert code == 1 and "nothing to evaluate" in err


def test_eval_split_filter(tmp_path, capsys):
    path = tmp_path / "split.jsonl"
    from rorokit.layout import save_corpus

    corpus = synth_generate(
        SynthConfig(n_docs=10, mix={"chain": 1.0}, train_fraction=0.8), seed=0
    )
    save_corpus(corpus, path)
    code, out, _ = run(capsys, "eval", str(path), "--heuristic",
                       "--split", "test", "--no-ceiling")
    assert code == 0
    assert json.loads(out)["systems"][0]["docs"] == 2


# --- demo and render ---


def test_demo_rore_command(tmp_path, capsys):
    cfg = write_config(
        tmp_path,
        {
            "demo": {"n_docs": 16, "epochs": 2, "seed": 1},
            "encoder": {"layers": 1, "model_dim": 16, "heads": 2},
        },
    )
    code, out, err = run(capsys, "demo-rore", "--config", str(cfg))
    assert code == 0
    result = json.loads(out)
    assert {"f1_vanilla", "f1_rore"} <= set(result)
    assert "f1_rore" in err


def test_demo_rore_pseudo_needs_model(tmp_path, capsys):
    cfg = write_config(
        tmp_path,
        {"demo": {"n_docs": 8, "epochs": 1, "label_source": "pseudo"}},
    )
    code, _, err = run(capsys, "demo-rore", "--config", str(cfg))
    assert code == 1 and "model" in err


def test_render_document(tmp_path, capsys):
    corpus = write_corpus(tmp_path, n_docs=2)
    doc_id = load_corpus(corpus).documents[1].id
    svg_path = tmp_path / "doc.svg"
    code, _, _ = run(capsys, "render", str(corpus), "--doc", doc_id,
                     "-o", str(svg_path))
    assert code == 0
    first = svg_path.read_bytes()
    code, _, _ = run(capsys, "render", str(corpus), "--doc", doc_id,
                     "-o", str(svg_path))
    assert code == 0 and svg_path.read_bytes() == first
    assert b"<svg" in first


def test_render_unknown_doc_exits_1(tmp_path, capsys):
    corpus = write_corpus(tmp_path, n_docs=1)
    code, _, _ = run(capsys, "render", str(corpus), "--doc", "missing")
    assert code == 1


# --- parallelism helpers ---


def test_thread_count_default(monkeypatch):
    monkeypatch.delenv("ROROKIT_THREADS", raising=False)
    assert thread_count() == 1
    monkeypatch.setenv("ROROKIT_THREADS", "3")
    assert thread_count() == 3
    monkeypatch.setenv("ROROKIT_THREADS", "0")
    assert thread_count() == 1
    monkeypatch.setenv("ROROKIT_THREADS", "many")
    with pytest.raises(ValueError):
        thread_count()


def test_thread_map_preserves_order(monkeypatch):
    monkeypatch.setenv("ROROKIT_THREADS", "4")
    assert thread_map(lambda x: x * x, range(10)) == [x * x for x in range(10)]
    monkeypatch.setenv("ROROKIT_THREADS", "1")
    assert thread_map(lambda x: -x, [3, 1, 2]) == [-3, -1, -2]


def test_usage_error_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == 2
