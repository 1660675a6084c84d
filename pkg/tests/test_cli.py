import csv
import json

import pytest

from mrfrec.cli import main


@pytest.fixture(scope="module")
def corpus_file(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    cfg = d / "synth.cfg"
    cfg.write_text("n_records = 200\nseed = 3\n")
    out = d / "records.tsv"
    assert main(["synth-gen", "--config", str(cfg), "--out", str(out)]) == 0
    return out


def run(*argv):
    return main([str(a) for a in argv])


def test_synth_gen_outputs(corpus_file):
    lines = corpus_file.read_text().splitlines()
    assert len(lines) == 200 and lines[0].startswith("syn000\t")
    truth = corpus_file.with_name(corpus_file.name + ".truth.tsv").read_text().splitlines()
    assert all(len(t.split("\t")) == 3 for t in truth)
    prov = json.loads(corpus_file.with_name(corpus_file.name + ".runconfig.json").read_text())
    assert prov["synth_config"]["n_records"] == "200"


def test_synth_gen_deterministic(tmp_path):
    for name in ("a", "b"):
        assert run("synth-gen", "--seed", 9, "--out", tmp_path / name) == 0
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_build_graph_and_stats(corpus_file, tmp_path, capsys):
    out = tmp_path / "edges.tsv"
    assert run("build-graph", "--corpus", corpus_file, "--task", "sd", "--out", out) == 0
    first = out.read_text().splitlines()[0].split("\t")
    assert first[0].startswith("disease_") and int(first[2]) >= 1
    assert "SD-EMKN" in capsys.readouterr().out
    assert run("stats", "--corpus", corpus_file) == 0
    rows = [line.split("\t") for line in capsys.readouterr().out.splitlines()]
    assert rows[0] == ["subgraph", "part", "type", "size", "degree mean", "degree median"]
    assert [r[0] for r in rows[1:]] == ["SD-EMKN", "SD-EMKN", "DTr-EMKN", "DTr-EMKN", "ST-EMKN", "ST-EMKN"]


def test_train_twice_byte_identical(corpus_file, tmp_path):
    paths = []
    for name in ("a.json", "b.json"):
        out = tmp_path / name
        assert run("train", "--corpus", corpus_file, "--method", "trans", "--dim", 16, "--epochs", 5,
                   "--seed", 7, "--n-train", 140, "--out", out) == 0
        paths.append(out)
    assert paths[0].read_bytes() == paths[1].read_bytes()
    blob = json.loads(paths[0].read_text())
    assert blob["run_config"]["method"] == "trans" and "out" not in blob["run_config"]
    with open(str(paths[0]) + ".loss.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["epoch", "objective"] and len(rows) == 6


@pytest.fixture(scope="module")
def lfm_model(corpus_file, tmp_path_factory):
    out = tmp_path_factory.mktemp("model") / "lfm.json"
    assert run("train", "--corpus", corpus_file, "--method", "lfm", "--dim", 8, "--epochs", 3,
               "--n-train", 140, "--out", out) == 0
    return out


def test_evaluate_methods_table(corpus_file, tmp_path):
    out = tmp_path / "report.tsv"
    assert run("evaluate", "--corpus", corpus_file, "--method", "weight,random,logistic", "--task", "sd",
               "--out", out) == 0
    lines = out.read_text().splitlines()
    assert lines[0].split("\t") == ["method", "MP@R", "MAP", "MR@10", "R@10>0.1", "R@10>0.9"]
    assert [line.split("\t")[0] for line in lines[1:]] == ["weight", "random", "logistic"]
    assert all(len(v.split(".")[1]) == 4 for v in lines[1].split("\t")[1:])
    prov = json.loads((tmp_path / "report.tsv.runconfig.json").read_text())
    assert prov["run_config"]["method"] == "weight,random,logistic"


def test_evaluate_checkpoint_uses_held_out_split(corpus_file, lfm_model, tmp_path):
    a, b = tmp_path / "a.tsv", tmp_path / "b.tsv"
    assert run("evaluate", "--corpus", corpus_file, "--model", lfm_model, "--out", a) == 0
    assert run("evaluate", "--corpus", corpus_file, "--model", lfm_model, "--out", b) == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().splitlines()[1].startswith("lfm\t")


def _known(model, tmp_path, kind):
    out = tmp_path / "vocab.tsv"
    assert run("export-embeddings", "--model", model, "--out", out) == 0
    return [line.split("\t")[0] for line in out.read_text().splitlines() if line.split("\t")[1] == kind]


def test_rank_queries(lfm_model, tmp_path):
    s0, s1 = _known(lfm_model, tmp_path, "symptom")[:2]
    r0 = _known(lfm_model, tmp_path, "test_result")[0]
    q = tmp_path / "q.txt"
    q.write_text(f"# comment\n{s0}=1, {s1}=present\n\n{r0}=absent\n")
    out = tmp_path / "ranked.tsv"
    assert run("rank", "--model", lfm_model, "--queries", q, "-n", 3, "--out", out) == 0
    blocks = out.read_text().split("\n\n")
    assert len(blocks) == 2
    header, *rows = blocks[0].splitlines()
    assert header == f"# {s0}=1, {s1}=present"
    assert [r.split("\t")[0] for r in rows] == ["1", "2", "3"]
    probs = [float(r.split("\t")[2]) for r in rows]
    assert probs == sorted(probs, reverse=True)


def test_neighbors_and_export(lfm_model, tmp_path, capsys):
    assert run("neighbors", "--model", lfm_model, "--entity", "disease_000", "-n", 4) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 4 and all(line.split("\t")[2] == "disease" for line in lines)
    out = tmp_path / "emb.tsv"
    assert run("export-embeddings", "--model", lfm_model, "--out", out) == 0
    name, kind, vec = out.read_text().splitlines()[0].split("\t")
    assert len(vec.split(",")) == 8


def test_baseline_checkpoint_round_trip(corpus_file, tmp_path):
    out = tmp_path / "nb.pkl"
    assert run("train", "--corpus", corpus_file, "--method", "naive_bayes", "--n-train", 140, "--out", out) == 0
    rep = tmp_path / "nb.tsv"
    assert run("evaluate", "--corpus", corpus_file, "--model", out, "--out", rep) == 0
    assert rep.read_text().splitlines()[1].startswith("naive_bayes\t")


def test_config_file_and_flag_precedence(corpus_file, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"method = theta\nepochs = 2\nk-neg = 5\ncorpus = {corpus_file}\nn_train = 140\n")
    out = tmp_path / "m.json"
    assert run("train", "--config", cfg, "--epochs", 1, "--out", out) == 0
    rc = json.loads(out.read_text())["run_config"]
    assert (rc["epochs"], rc["k_neg"], rc["method"]) == (1, 5, "theta")


def _err(capsys):
    err = capsys.readouterr().err.strip()
    assert "\n" not in err
    return err


def test_distinct_diagnostics(corpus_file, lfm_model, tmp_path, capsys):
    assert run("train", "--corpus", tmp_path / "missing.tsv", "--out", tmp_path / "x.json") == 1
    missing = _err(capsys)
    assert missing.startswith("error: file not found")

    assert run("train", "--corpus", corpus_file, "--method", "svm", "--out", tmp_path / "x.json") == 1
    invalid = _err(capsys)
    assert invalid.startswith("error: invalid config")

    q = tmp_path / "q.txt"
    q.write_text("not_an_entity=1\n")
    assert run("rank", "--model", lfm_model, "--queries", q) == 1
    vocab = _err(capsys)
    assert vocab.startswith("error: vocabulary mismatch")

    bad = tmp_path / "bad.tsv"
    bad.write_text("r1\tfoo|organ|present\n")
    assert run("stats", "--corpus", bad) == 1
    fmt = _err(capsys)
    assert "corpus format error" in fmt and "line 1" in fmt

    assert len({missing, invalid, vocab, fmt}) == 4


def test_vocabulary_mismatch_on_foreign_corpus(lfm_model, tmp_path, capsys):
    other = tmp_path / "other.tsv"
    other.write_text("r1\tzzz|symptom|present\tqqq|disease|present\n")
    assert run("evaluate", "--corpus", other, "--model", lfm_model, "--n-train", 0) == 1
    assert "error:" in _err(capsys)
    assert run("evaluate", "--corpus", other, "--model", lfm_model) == 1


def test_non_embedding_model_rejected(corpus_file, tmp_path, capsys):
    out = tmp_path / "theta.json"
    assert run("train", "--corpus", corpus_file, "--method", "theta", "--epochs", 1, "--out", out) == 0
    assert run("neighbors", "--model", out, "--entity", "disease_000") == 1
    assert "no entity embeddings" in _err(capsys)


def test_inputs_not_mutated(corpus_file, tmp_path):
    before = corpus_file.read_bytes()
    run("stats", "--corpus", corpus_file, "--out", tmp_path / "s.tsv")
    run("evaluate", "--corpus", corpus_file, "--method", "weight", "--out", tmp_path / "e.tsv")
    assert corpus_file.read_bytes() == before
