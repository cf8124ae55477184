"""Command line: full stage chain, exit codes, determinism."""

import json
import sys

import pytest

from lmdebunk import write_claims, write_corpus
from lmdebunk.cli import build_parser, build_runconfig, main

from conftest import separation_dataset


@pytest.fixture(scope="module")
def dataset_files(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli-data")
    claims, corpus = separation_dataset()
    claims_path = root / "claims.jsonl"
    corpus_path = root / "corpus.jsonl"
    write_claims(claims, claims_path)
    write_corpus(corpus, corpus_path)
    return claims_path, corpus_path


def run(argv, capsys):
    code = main([str(a) for a in argv])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def last_json(out: str):
    return json.loads(out.strip().splitlines()[-1])


class TestStageChain:
    def test_end_to_end(self, dataset_files, tmp_path, capsys):
        claims_path, corpus_path = dataset_files

        code, out, _ = run(["ingest", "--claims", claims_path], capsys)
        assert code == 0
        assert last_json(out) == {"claims": {"false": 10, "true": 10, "unlabeled": 0}}

        index_path = tmp_path / "index.json"
        code, out, _ = run(["index", "build", "--corpus", corpus_path,
                         "--out", index_path], capsys)
        assert code == 0
        assert last_json(out)["sentences_indexed"] == 40

        code, out, _ = run(["index", "query", "--index", index_path,
                         "--text", "solar panels sunlight", "--k", "3"], capsys)
        assert code == 0
        hits = [json.loads(l) for l in out.strip().splitlines()]
        assert 0 < len(hits) <= 3
        assert hits[0]["doc_id"] == "topic-00"

        evidence_path = tmp_path / "evidence.jsonl"
        code, _, err = run(["retrieve", "--claims", claims_path, "--corpus", corpus_path,
                       "--out", evidence_path], capsys)
        assert code == 0
        records = [json.loads(l) for l in evidence_path.read_text().splitlines()]
        assert len(records) == 20
        assert all(set(r) == {"claim_id", "evidence", "rejected"} for r in records)
        assert all(len(r["evidence"]) <= 3 for r in records)

        model_path = tmp_path / "model.json"
        code, _, err = run(["ground", "--evidence", evidence_path,
                       "--model-out", model_path], capsys)
        assert code == 0

        code, out, _ = run(["score", "--model", model_path,
                         "--text", "Solar panels generate electricity."], capsys)
        assert code == 0
        assert last_json(out)["ppl"] > 0

        scores_path = tmp_path / "scores.jsonl"
        code, _, err = run(["score", "--model", model_path, "--claims", claims_path,
                       "--out", scores_path], capsys)
        assert code == 0
        scores = [json.loads(l) for l in scores_path.read_text().splitlines()]
        assert len(scores) == 20

        code, out, _ = run(["calibrate", "--scores", scores_path, "--claims", claims_path,
                         "--seed", "7", "--k", "4"], capsys)
        assert code == 0
        payload = last_json(out)
        assert payload["threshold"] > 0
        assert payload["cv"]["k"] == 4
        assert len(payload["cv"]["fold_thresholds"]) == 4

    def test_plain_text_evidence_file(self, tmp_path, capsys):
        evidence_path = tmp_path / "evidence.txt"
        evidence_path.write_text("the tide lifts barges\nthe harbor holds ships\n")
        model_path = tmp_path / "model.json"
        code, _, err = run(["ground", "--evidence", evidence_path,
                       "--model-out", model_path], capsys)
        assert code == 0
        code, out, _ = run(["score", "--model", model_path, "--text", "the tide"], capsys)
        assert code == 0
        assert last_json(out)["ppl"] > 0

    def test_no_filter_keeps_everything(self, dataset_files, tmp_path, capsys):
        claims_path, corpus_path = dataset_files
        evidence_path = tmp_path / "evidence.jsonl"
        code, _, err = run(["retrieve", "--claims", claims_path, "--corpus", corpus_path,
                       "--out", evidence_path, "--no-filter"], capsys)
        assert code == 0
        records = [json.loads(l) for l in evidence_path.read_text().splitlines()]
        assert all(r["rejected"] == [] for r in records)


class TestEvaluate:
    def evaluate(self, dataset_files, out_dir, capsys, extra=()):
        claims_path, corpus_path = dataset_files
        return run(["evaluate", "--claims", claims_path, "--corpus", corpus_path,
                    "--seed", "13", "--k", "4", "--out-dir", out_dir, *extra], capsys)

    def test_writes_all_artifacts(self, dataset_files, tmp_path, capsys):
        out_dir = tmp_path / "run"
        code, out, _ = self.evaluate(dataset_files, out_dir, capsys)
        assert code == 0
        for name in ("report.json", "report.md", "verdicts.jsonl",
                     "evidence_audit.jsonl", "sweep.csv", "model.json"):
            assert (out_dir / name).exists(), name
        payload = last_json(out)
        assert payload["cv_averaged"]["accuracy"] >= 0.8
        report = json.loads((out_dir / "report.json").read_text())
        assert report["schema_version"] == 1
        assert set(report["dataset_checksums"]) == {"claims", "corpus"}
        verdicts = [json.loads(l) for l in (out_dir / "verdicts.jsonl").read_text().splitlines()]
        assert len(verdicts) == 20
        assert set(verdicts[0]) == {"claim_id", "ppl", "threshold", "predicted",
                                    "gold", "fold", "no_evidence"}

    def test_same_seed_same_bytes(self, dataset_files, tmp_path, capsys):
        code_a, _, _ = self.evaluate(dataset_files, tmp_path / "a", capsys)
        code_b, _, _ = self.evaluate(dataset_files, tmp_path / "b", capsys)
        assert code_a == code_b == 0
        for name in ("report.json", "verdicts.jsonl", "sweep.csv"):
            assert (tmp_path / "a" / name).read_bytes() == \
                (tmp_path / "b" / name).read_bytes(), name

    def test_preset_threshold(self, dataset_files, tmp_path, capsys):
        out_dir = tmp_path / "run"
        code, out, _ = self.evaluate(dataset_files, out_dir, capsys,
                                  extra=["--threshold", "5.0"])
        assert code == 0
        assert last_json(out)["threshold"] == 5.0

    def test_report_rerender(self, dataset_files, tmp_path, capsys):
        out_dir = tmp_path / "run"
        self.evaluate(dataset_files, out_dir, capsys)
        before = (out_dir / "report.md").read_text()
        (out_dir / "report.md").unlink()
        code, _, err = run(["report", "--run-dir", out_dir], capsys)
        assert code == 0
        assert (out_dir / "report.md").read_text() == before

    def test_ablate_runs(self, dataset_files, tmp_path, capsys):
        claims_path, corpus_path = dataset_files
        out_path = tmp_path / "ablation.json"
        code, out, _ = run(["ablate", "--claims", claims_path, "--corpus", corpus_path,
                         "--seed", "13", "--out", out_path], capsys)
        assert code == 0
        payload = last_json(out)
        assert set(payload) >= {"before", "after", "f1_macro_gain"}
        assert out_path.exists()


class TestExitCodes:
    def test_usage_error_is_one(self):
        with pytest.raises(SystemExit) as exc:
            main(["retrieve", "--claims", "only.jsonl"])
        assert exc.value.code == 1

    def test_unknown_command_is_one(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 1

    def test_calibrate_requires_seed(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["calibrate", "--scores", str(tmp_path / "s.jsonl"),
                  "--claims", str(tmp_path / "c.jsonl")])
        assert exc.value.code == 1

    def test_missing_file_is_two(self, tmp_path, capsys):
        code, _, err = run(["ingest", "--claims", tmp_path / "absent.jsonl"], capsys)
        assert code == 2

    def test_malformed_claims_is_two(self, tmp_path, capsys):
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"id": "x"}\n')
        code, _, err = run(["ingest", "--claims", bad], capsys)
        assert code == 2
        assert "bad.jsonl:1" in err

    def test_score_without_model_is_two(self, capsys):
        code, _, err = run(["score", "--text", "anything"], capsys)
        assert code == 2
        assert "scorer not grounded" in err

    def test_dead_bridge_is_three(self, dataset_files, tmp_path, capsys):
        claims_path, corpus_path = dataset_files
        dead = f"{sys.executable} -c 'import sys; sys.exit(0)'"
        code, _, err = run(["evaluate", "--claims", claims_path, "--corpus", corpus_path,
                       "--seed", "1", "--out-dir", tmp_path / "run",
                       "--bridge-command", dead], capsys)
        assert code == 3
        assert "bridge" in err

    def test_version_exits_zero(self):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0


class TestConfigMerge:
    def test_flags_override_config_file(self, tmp_path):
        cfg_path = tmp_path / "run.json"
        cfg_path.write_text(json.dumps({
            "k_candidates": 7,
            "objective": "f1_macro",
            "grounding": {"ngram_order": 2},
        }))
        parser = build_parser()
        args = parser.parse_args([
            "retrieve", "--claims", "c", "--corpus", "d", "--out", "o",
            "--config", str(cfg_path), "--k-candidates", "3",
        ])
        cfg = build_runconfig(args)
        assert cfg.k_candidates == 3
        assert cfg.objective == "f1_macro"
        assert cfg.grounding.ngram_order == 2

    def test_bridge_flag_selects_external_scorer(self, tmp_path):
        parser = build_parser()
        args = parser.parse_args([
            "evaluate", "--claims", "c", "--corpus", "d", "--seed", "1",
            "--bridge-address", "localhost:9999",
        ])
        cfg = build_runconfig(args)
        assert cfg.scorer_kind == "external"
        assert cfg.bridge_address == "localhost:9999"

    def test_unknown_config_key_is_two(self, tmp_path, capsys):
        cfg_path = tmp_path / "run.json"
        cfg_path.write_text(json.dumps({"krandidates": 7}))
        code, _, err = run(["retrieve", "--claims", "c", "--corpus", "d", "--out", "o",
                       "--config", cfg_path], capsys)
        assert code == 2
