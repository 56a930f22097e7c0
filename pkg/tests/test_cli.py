import json

import numpy as np
import pytest

from conftest import rule_corpus, rule_lexicon, toy_table
from medner.chunking import Chunk, write_chunk_records
from medner.cli import main
from medner.corpus import TSV2, parse_conll, write_conll
from medner.embeddings import write_embeddings
from medner.nercore.serialize import load_model, save_model


@pytest.fixture()
def workdir(tmp_path):
    rng = np.random.default_rng(5)
    corpus = rule_corpus(rng, 36)
    table = toy_table(rule_lexicon(), 16, rng)
    train_file = tmp_path / "train.tsv"
    train_file.write_text(write_conll(corpus, TSV2), encoding="utf-8")
    emb_file = tmp_path / "vectors.txt"
    write_embeddings(table, str(emb_file))
    return tmp_path, corpus, train_file, emb_file


TRAIN_FLAGS = [
    "--embed-dim", "16", "--char-dim", "8", "--num-filters", "8",
    "--lstm-size", "16", "--learning-rate", "3e-3", "--batch-size", "16",
    "--max-epochs", "3", "--dropout", "0.0", "--warmup-steps", "5",
    "--seed", "42",
]


def run_train(tmp_path, train_file, emb_file, out_name="run", extra=()):
    out = tmp_path / out_name
    code = main(
        ["train", "--train", str(train_file), "--embeddings", str(emb_file),
         "--out-dir", str(out), *TRAIN_FLAGS, *extra]
    )
    return code, out


class TestTrain:
    def test_produces_model_and_logs(self, workdir):
        tmp_path, corpus, train_file, emb_file = workdir
        code, out = run_train(tmp_path, train_file, emb_file)
        assert code == 0
        model = load_model(str(out / "model.medner"))
        assert model.schema.tags == corpus.schema.tags
        log_lines = (out / "metrics.log").read_text().splitlines()
        assert len(log_lines) == 3
        assert (out / "eval_report.json").exists()

    def test_explicit_val_corpus(self, workdir):
        tmp_path, corpus, train_file, emb_file = workdir
        code, out = run_train(
            tmp_path, train_file, emb_file, "run_val", ("--val", str(train_file))
        )
        assert code == 0

    def test_determinism_byte_identical(self, workdir):
        tmp_path, _, train_file, emb_file = workdir
        _, out_a = run_train(tmp_path, train_file, emb_file, "run_a")
        _, out_b = run_train(tmp_path, train_file, emb_file, "run_b")
        assert (out_a / "metrics.log").read_bytes() == (out_b / "metrics.log").read_bytes()
        assert (out_a / "model.medner").read_bytes() == (out_b / "model.medner").read_bytes()

    def test_config_file_with_flag_override(self, workdir):
        tmp_path, _, train_file, emb_file = workdir
        cfg = tmp_path / "run.conf"
        cfg.write_text("max_epochs = 2\nlstm_size = 12\n", encoding="utf-8")
        out = tmp_path / "run_cfg"
        code = main(
            ["train", "--config", str(cfg), "--train", str(train_file),
             "--embeddings", str(emb_file), "--out-dir", str(out),
             "--embed-dim", "16", "--char-dim", "8", "--num-filters", "8",
             "--learning-rate", "3e-3", "--batch-size", "16", "--dropout", "0.0",
             "--warmup-steps", "5", "--seed", "42",
             "--max-epochs", "1"]  # flag wins over config file
        )
        assert code == 0
        model = load_model(str(out / "model.medner"))
        assert model.config.max_epochs == 1
        assert model.config.lstm_size == 12

    def test_grid_search(self, workdir):
        tmp_path, _, train_file, emb_file = workdir
        grid = tmp_path / "grid.conf"
        grid.write_text("learning_rate = 1e-3, 3e-3\n", encoding="utf-8")
        code, out = run_train(tmp_path, train_file, emb_file, "run_grid",
                              ("--grid", str(grid)))
        assert code == 0
        runs = json.loads((out / "grid_results.json").read_text())
        assert len(runs) == 2

    def test_missing_embeddings_is_usage_error(self, workdir):
        tmp_path, _, train_file, _ = workdir
        code = main(["train", "--train", str(train_file), "--out-dir", str(tmp_path / "x")])
        assert code == 2

    def test_paths_from_config_file(self, workdir):
        tmp_path, _, train_file, emb_file = workdir
        cfg = tmp_path / "pipeline.conf"
        cfg.write_text(
            f"train = {train_file}\nembeddings = {emb_file}\n"
            f"out_dir = {tmp_path / 'run_file_cfg'}\n"
            "word_dim = 16\nchar_dim = 8\nnum_filters = 8\nlstm_size = 16\n"
            "learning_rate = 3e-3\nbatch_size = 16\nmax_epochs = 1\n"
            "dropout = 0.0\nwarmup_steps = 5\nseed = 42\n",
            encoding="utf-8",
        )
        code = main(["train", "--config", str(cfg)])
        assert code == 0
        assert (tmp_path / "run_file_cfg" / "model.medner").exists()

    def test_malformed_corpus_is_parse_error(self, workdir, tmp_path):
        _, _, _, emb_file = workdir
        bad = tmp_path / "bad.tsv"
        bad.write_text("word_without_tag\n", encoding="utf-8")
        code = main(
            ["train", "--train", str(bad), "--embeddings", str(emb_file),
             "--out-dir", str(tmp_path / "y"), *TRAIN_FLAGS]
        )
        assert code == 3


@pytest.fixture()
def model_file(trained_tiny_model, tmp_path):
    model, _, _ = trained_tiny_model
    path = tmp_path / "model.medner"
    save_model(model, str(path))
    return path


class TestPredict:
    def test_raw_text(self, model_file, tmp_path):
        text = "patient took 250mg daily. fever noted since yesterday."
        inp = tmp_path / "note.txt"
        inp.write_text(text, encoding="utf-8")
        out = tmp_path / "pred"
        code = main(["predict", "--model", str(model_file), "--input", str(inp),
                     "--out-dir", str(out)])
        assert code == 0
        lines = [l for l in (out / "chunks.tsv").read_text().splitlines()
                 if l and not l.startswith("#")]
        assert lines, "the overfit model should find at least one chunk"
        for line in lines:
            sent, begin, end, surface, etype, conf = line.split("\t")
            assert etype in ("Dosage", "Symptom")
            assert 0.0 <= float(conf) <= 1.0
            assert text[int(begin) : int(end) + 1] == surface or " " in surface

    def test_empty_input(self, model_file, tmp_path):
        inp = tmp_path / "empty.txt"
        inp.write_text("", encoding="utf-8")
        out = tmp_path / "pred_empty"
        code = main(["predict", "--model", str(model_file), "--input", str(inp),
                     "--out-dir", str(out)])
        assert code == 0
        lines = [l for l in (out / "chunks.tsv").read_text().splitlines()
                 if l and not l.startswith("#")]
        assert lines == []

    def test_min_confidence_filters(self, model_file, tmp_path):
        text = "patient took 250mg daily. fever noted since yesterday."
        inp = tmp_path / "note.txt"
        inp.write_text(text, encoding="utf-8")
        out_all = tmp_path / "pred_all"
        out_high = tmp_path / "pred_high"
        main(["predict", "--model", str(model_file), "--input", str(inp),
              "--out-dir", str(out_all)])
        main(["predict", "--model", str(model_file), "--input", str(inp),
              "--min-confidence", "0.99999", "--out-dir", str(out_high)])

        def confs(p):
            return [float(l.split("\t")[5]) for l in (p / "chunks.tsv").read_text().splitlines()
                    if l and not l.startswith("#")]

        assert len(confs(out_high)) <= len(confs(out_all))

    def test_conll_input(self, model_file, trained_tiny_model, tmp_path):
        _, corpus, _ = trained_tiny_model
        inp = tmp_path / "in.tsv"
        inp.write_text(write_conll(corpus, TSV2), encoding="utf-8")
        out = tmp_path / "pred_conll"
        code = main(["predict", "--model", str(model_file), "--input", str(inp),
                     "--input-format", "tsv2", "--out-dir", str(out)])
        assert code == 0

    def test_schema_mismatch_names_both(self, model_file, tmp_path, caplog):
        inp = tmp_path / "in.tsv"
        inp.write_text("fever\tB-Disease\n", encoding="utf-8")
        code = main(["predict", "--model", str(model_file), "--input", str(inp),
                     "--input-format", "tsv2", "--out-dir", str(tmp_path / "x")])
        assert code == 4
        assert "Disease" in caplog.text and "Symptom" in caplog.text


class TestEvaluate:
    def test_gold_vs_itself(self, trained_tiny_model, tmp_path, capsys):
        _, corpus, _ = trained_tiny_model
        gold = tmp_path / "gold.tsv"
        gold.write_text(write_conll(corpus, TSV2), encoding="utf-8")
        code = main(["evaluate", "--gold", str(gold), "--pred", str(gold)])
        assert code == 0
        captured = capsys.readouterr().out
        assert "micro-F1:  1.0000" in captured

    def test_documented_fixture_scores(self, tmp_path, capsys):
        # type A: gold 4 chunks vs pred 3 (2 exact); type B: one exact match
        gold_tags = [["B-A"], ["B-A"], ["B-A"], ["B-A"], ["B-B"]]
        pred_tags = [["B-A"], ["B-A"], ["O"], ["O"], ["B-B"]]
        extra_pred = [["O"], ["O"], ["B-A"], ["O"], ["O"]]  # the off-target A
        gold_lines = []
        pred_lines = []
        for i, (g, p, e) in enumerate(zip(gold_tags, pred_tags, extra_pred)):
            gold_lines += [f"w{i}a\t{g[0]}", f"w{i}b\tO", ""]
            pred_lines += [f"w{i}a\t{p[0]}", f"w{i}b\t{e[0]}", ""]
        gold = tmp_path / "gold.tsv"
        pred = tmp_path / "pred.tsv"
        gold.write_text("\n".join(gold_lines) + "\n", encoding="utf-8")
        pred.write_text("\n".join(pred_lines) + "\n", encoding="utf-8")
        out = tmp_path / "eval"
        code = main(["evaluate", "--gold", str(gold), "--pred", str(pred),
                     "--out-dir", str(out)])
        assert code == 0
        report = json.loads((out / "eval_report.json").read_text())
        assert report["micro_f1"] == pytest.approx(2 / 3)
        assert report["macro_f1"] == pytest.approx(11 / 14)

    def test_alignment_mismatch(self, trained_tiny_model, tmp_path):
        _, corpus, _ = trained_tiny_model
        gold = tmp_path / "gold.tsv"
        gold.write_text(write_conll(corpus, TSV2), encoding="utf-8")
        shorter = tmp_path / "short.tsv"
        text = write_conll(corpus, TSV2)
        first_blank = text.index("\n\n")
        shorter.write_text(text[: first_blank + 1], encoding="utf-8")
        code = main(["evaluate", "--gold", str(gold), "--pred", str(shorter)])
        assert code == 4

    def test_micro_gate(self, trained_tiny_model, tmp_path):
        _, corpus, _ = trained_tiny_model
        gold = tmp_path / "gold.tsv"
        gold.write_text(write_conll(corpus, TSV2), encoding="utf-8")
        code = main(["evaluate", "--gold", str(gold), "--pred", str(gold),
                     "--min-micro-f1", "1.5"])
        assert code == 1

    def test_model_on_the_fly(self, model_file, trained_tiny_model, tmp_path):
        _, corpus, _ = trained_tiny_model
        gold = tmp_path / "gold.tsv"
        gold.write_text(write_conll(corpus, TSV2), encoding="utf-8")
        code = main(["evaluate", "--gold", str(gold), "--model", str(model_file),
                     "--min-micro-f1", "0.9"])
        assert code == 0  # the fixture model overfits its training corpus


FIGURE_TEXT = (
    "Record date : 2021-01-14 , Philips Jo , Name : Joseph , "
    "MR # 234333 Date : 01/16/1989 .\n"
    "PCP : Alicia , 54 years-old , Record date : 2012-11-04 .\n"
    "Scarborough Hospital , 0295 Keats Street , Phone 55-555-5555 .\n"
)

FIGURE_SPANS = [
    (0, "2021-01-14", "Date"),
    (0, "Philips Jo", "Name"),
    (0, "Joseph", "Name"),
    (0, "01/16/1989", "Date"),
    (1, "Alicia", "Name"),
    (1, "54", "Age"),
    (1, "2012-11-04", "Date"),
    (2, "Scarborough Hospital", "Hospital"),
    (2, "0295 Keats Street", "Street"),
]

FIGURE_EXPECTED = (
    "Record date : <DATE> , <NAME> , Name : <NAME> , MR # 234333 Date : <DATE> .\n"
    "PCP : <NAME> , <AGE> years-old , Record date : <DATE> .\n"
    "<HOSPITAL> , <STREET> , Phone 55-555-5555 .\n"
)


def figure_chunk_records() -> str:
    chunks = []
    cursor = 0
    for sent, surface, etype in FIGURE_SPANS:
        begin = FIGURE_TEXT.index(surface, cursor)
        chunks.append(Chunk(etype, None, begin, begin + len(surface) - 1,
                            surface, 1.0, sent))
        cursor = begin + len(surface)
    return write_chunk_records(chunks)


class TestDeidentify:
    def test_figure_fixture_golden(self, tmp_path):
        inp = tmp_path / "notes.txt"
        inp.write_text(FIGURE_TEXT, encoding="utf-8")
        spans = tmp_path / "gold_chunks.tsv"
        spans.write_text(figure_chunk_records(), encoding="utf-8")
        out = tmp_path / "deid"
        code = main(["deidentify", "--input", str(inp), "--chunks", str(spans),
                     "--out-dir", str(out)])
        assert code == 0
        assert (out / "deidentified.txt").read_text(encoding="utf-8") == FIGURE_EXPECTED
        log_lines = (out / "replacements.log").read_text().splitlines()
        assert len(log_lines) == len(FIGURE_SPANS)

    def test_empty_policy_identity(self, tmp_path):
        inp = tmp_path / "notes.txt"
        inp.write_text(FIGURE_TEXT, encoding="utf-8")
        spans = tmp_path / "gold_chunks.tsv"
        spans.write_text(figure_chunk_records(), encoding="utf-8")
        policy = tmp_path / "empty.policy"
        policy.write_text("# nothing protected\n", encoding="utf-8")
        out = tmp_path / "deid_noop"
        code = main(["deidentify", "--input", str(inp), "--chunks", str(spans),
                     "--policy", str(policy), "--out-dir", str(out)])
        assert code == 0
        assert (out / "deidentified.txt").read_text(encoding="utf-8") == FIGURE_TEXT

    def test_substitution_seed_determinism(self, tmp_path):
        inp = tmp_path / "notes.txt"
        inp.write_text(FIGURE_TEXT, encoding="utf-8")
        spans = tmp_path / "gold_chunks.tsv"
        spans.write_text(figure_chunk_records(), encoding="utf-8")
        policy = tmp_path / "subst.policy"
        policy.write_text("Name = substitute Pat, Sam, Alex, Robin\nDate = mask\n",
                          encoding="utf-8")
        outputs = []
        for name in ("d1", "d2"):
            out = tmp_path / name
            code = main(["deidentify", "--input", str(inp), "--chunks", str(spans),
                         "--policy", str(policy), "--seed", "7", "--out-dir", str(out)])
            assert code == 0
            outputs.append((out / "deidentified.txt").read_bytes())
        assert outputs[0] == outputs[1]

    def test_overlapping_spans_error(self, tmp_path):
        inp = tmp_path / "notes.txt"
        inp.write_text("Alicia Alicia", encoding="utf-8")
        chunks = [
            Chunk("Name", None, 0, 7, "Alicia A", 1.0, 0),
            Chunk("Name", None, 5, 12, "a Alicia", 1.0, 0),
        ]
        spans = tmp_path / "bad_chunks.tsv"
        spans.write_text(write_chunk_records(chunks), encoding="utf-8")
        code = main(["deidentify", "--input", str(inp), "--chunks", str(spans),
                     "--out-dir", str(tmp_path / "deid_bad")])
        assert code == 4

    def test_model_driven(self, model_file, tmp_path):
        inp = tmp_path / "notes.txt"
        inp.write_text("patient took 250mg daily.", encoding="utf-8")
        policy = tmp_path / "dose.policy"
        policy.write_text("Dosage = mask\n", encoding="utf-8")
        out = tmp_path / "deid_model"
        code = main(["deidentify", "--input", str(inp), "--model", str(model_file),
                     "--policy", str(policy), "--out-dir", str(out)])
        assert code == 0
        text = (out / "deidentified.txt").read_text(encoding="utf-8")
        assert "<DOSAGE>" in text


class TestConvert:
    def test_conll4_tsv2_roundtrip(self, tmp_path):
        rng = np.random.default_rng(6)
        corpus = rule_corpus(rng, 10)
        src = tmp_path / "src.conll"
        src.write_text(write_conll(corpus, TSV2), encoding="utf-8")
        mid = tmp_path / "mid.conll4"
        back = tmp_path / "back.tsv"
        assert main(["convert", "--input", str(src), "--from", "tsv2",
                     "--to", "conll4", "--out", str(mid)]) == 0
        assert main(["convert", "--input", str(mid), "--from", "conll4",
                     "--to", "tsv2", "--out", str(back)]) == 0
        original = parse_conll(src.read_text(), TSV2)
        final = parse_conll(back.read_text(), TSV2)
        for a, b in zip(original.sentences, final.sentences):
            assert a.surfaces() == b.surfaces()
            assert a.tags() == b.tags()

    def test_iob1_to_iob2_same_chunks(self, tmp_path):
        src = tmp_path / "iob1.tsv"
        src.write_text("a\tI-X\nb\tI-X\nc\tB-X\n\n", encoding="utf-8")
        out = tmp_path / "iob2.tsv"
        assert main(["convert", "--input", str(src), "--from", "tsv2",
                     "--to", "tsv2", "--from-scheme", "IOB1",
                     "--to-scheme", "IOB2", "--out", str(out)]) == 0
        converted = parse_conll(out.read_text(), TSV2)
        assert converted.sentences[0].tags() == ["B-X", "I-X", "B-X"]

    def test_to_chunk_records(self, tmp_path):
        src = tmp_path / "src.tsv"
        src.write_text("fever\tB-Symptom\n\n", encoding="utf-8")
        out = tmp_path / "chunks.tsv"
        assert main(["convert", "--input", str(src), "--from", "tsv2",
                     "--to", "chunk-records", "--out", str(out)]) == 0
        assert "fever\tSymptom\t1.00" in out.read_text()

    def test_unknown_format_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as err:
            main(["convert", "--input", "x", "--from", "xml", "--to", "tsv2",
                  "--out", "y"])
        assert err.value.code == 2

    def test_chunk_records_source_rejected(self, tmp_path):
        src = tmp_path / "chunks.tsv"
        src.write_text("# header\n", encoding="utf-8")
        code = main(["convert", "--input", str(src), "--from", "chunk-records",
                     "--to", "tsv2", "--out", str(tmp_path / "out.tsv")])
        assert code == 4
