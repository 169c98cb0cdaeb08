"""CLI wiring: subcommands, exit codes, hermetic isolation."""

import json
from importlib import resources

import pytest

from penheal.cli import main
from penheal.model import deserialize_run


def run_cli(*argv):
    return main(list(argv))


def hermetic_args(out_dir):
    return [
        "run",
        "--target",
        "10.0.2.4",
        "--mode",
        "hermetic",
        "--out",
        str(out_dir),
    ]


class TestRun:
    def test_hermetic_run_succeeds_offline(self, tmp_path, capsys, no_network):
        code = run_cli(*hermetic_args(tmp_path / "out"))
        assert code == 0
        artifact_path = tmp_path / "out" / "run-artifact.json"
        assert artifact_path.exists()
        plan, findings, recommendations, report = deserialize_run(
            artifact_path.read_bytes()
        )
        assert len(findings) == 6
        assert report.s_d == 6.0
        assert (tmp_path / "out" / "history.jsonl").exists()
        assert (tmp_path / "out" / "report.txt").exists()

    def test_missing_target_names_the_key(self, tmp_path, capsys):
        code = run_cli("run", "--mode", "hermetic", "--out", str(tmp_path / "out"))
        assert code == 1
        assert "target_address" in capsys.readouterr().err

    def test_exhausted_fixtures_fail_with_role_and_hash(self, tmp_path, capsys, no_network):
        code = run_cli(
            "run",
            "--target",
            "10.9.9.9",  # prompts differ from every recorded request
            "--mode",
            "hermetic",
            "--out",
            str(tmp_path / "out"),
        )
        assert code == 1
        err = capsys.readouterr().err
        assert "Planner" in err
        assert "request hash" in err

    def test_config_file_with_env_interpolation(self, tmp_path, monkeypatch, no_network):
        monkeypatch.setenv("TEST_TARGET_HOST", "10.0.2.4")
        config = {"target_address": "${TEST_TARGET_HOST}", "mode": "hermetic"}
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps(config))
        code = run_cli(
            "run", "--config", str(config_path), "--out", str(tmp_path / "out")
        )
        assert code == 0

    def test_missing_env_variable_is_fatal(self, tmp_path, capsys):
        config_path = tmp_path / "config.json"
        config_path.write_text(json.dumps({"target_address": "${NO_SUCH_VAR_SET}"}))
        code = run_cli("run", "--config", str(config_path))
        assert code == 1
        assert "NO_SUCH_VAR_SET" in capsys.readouterr().err

    def test_malformed_config_is_fatal(self, tmp_path, capsys):
        config_path = tmp_path / "bad.json"
        config_path.write_text("{not json")
        assert run_cli("run", "--config", str(config_path)) == 1
        assert "not valid JSON" in capsys.readouterr().err


class TestPentestSubcommand:
    def test_discovery_stage_only(self, tmp_path, capsys, no_network):
        code = run_cli(
            "pentest",
            "--target",
            "10.0.2.4",
            "--mode",
            "hermetic",
            "--out",
            str(tmp_path / "out"),
        )
        assert code == 0
        _, findings, recommendations, report = deserialize_run(
            (tmp_path / "out" / "run-artifact.json").read_bytes()
        )
        assert len(findings) == 6
        assert recommendations == [] and report is None
        assert "CVE-2011-2523@ftp:21" in capsys.readouterr().out


class TestScoreSubcommand:
    @pytest.fixture
    def artifact(self, tmp_path, no_network):
        out = tmp_path / "out"
        assert run_cli(*hermetic_args(out)) == 0
        return out / "run-artifact.json"

    def test_scores_single_artifact(self, artifact, capsys):
        assert run_cli("score", str(artifact)) == 0
        out = capsys.readouterr().out
        assert "6.00" in out  # detection row

    def test_sum_aggregation_flag(self, artifact, capsys):
        assert run_cli("score", str(artifact), "--aggregation", "sum") == 0
        assert "S_D + S_R - C" in capsys.readouterr().out

    def test_repeat_mean_over_three_artifacts(self, artifact, capsys):
        assert (
            run_cli(
                "score", str(artifact), str(artifact), str(artifact), "--repeat-mean"
            )
            == 0
        )
        out = capsys.readouterr().out
        assert "mean over 3 runs" in out
        assert "S_D       = 6.0000" in out

    def test_corrupt_artifact_fails(self, tmp_path, capsys):
        bad = tmp_path / "corrupt.json"
        bad.write_text("{broken")
        assert run_cli("score", str(bad)) == 1

    def test_custom_truth_file(self, artifact, tmp_path, capsys):
        truth = [{"id": "CVE-2011-2523", "service": "ftp", "port": 21}]
        truth_path = tmp_path / "truth.json"
        truth_path.write_text(json.dumps(truth))
        assert run_cli("score", str(artifact), "--truth", str(truth_path)) == 0
        assert "1 ground truth" in capsys.readouterr().out


class TestIngestSubcommand:
    def test_ingest_bundled_corpus_prints_count(self, tmp_path, capsys):
        corpus = resources.files("penheal.data").joinpath("corpus/pentest_notes.txt")
        doc = tmp_path / "notes.txt"
        doc.write_text(corpus.read_text(encoding="utf-8"))
        code = run_cli("ingest", str(doc), "--kb", str(tmp_path / "kb"))
        assert code == 0
        out = capsys.readouterr().out
        assert "8 chunks" in out  # golden count for the bundled corpus
        assert (tmp_path / "kb" / "meta.json").exists()
        assert (tmp_path / "kb" / "chunks.jsonl").exists()
        assert (tmp_path / "kb" / "vectors.bin").exists()

    def test_missing_file_fatal(self, tmp_path):
        assert run_cli("ingest", str(tmp_path / "nope.txt"), "--kb", str(tmp_path / "kb")) == 1


class TestReplaySubcommand:
    def test_intact_transcript_verifies(self, capsys):
        fixtures = resources.files("penheal.data").joinpath("fixtures/golden6.jsonl")
        with resources.as_file(fixtures) as path:
            assert run_cli("replay", str(path)) == 0
        assert "transcript ok" in capsys.readouterr().out

    def test_truncated_transcript_fails(self, tmp_path, capsys):
        fixtures = resources.files("penheal.data").joinpath("fixtures/golden6.jsonl")
        raw = fixtures.read_bytes()
        clipped = tmp_path / "clipped.jsonl"
        clipped.write_bytes(raw[: int(len(raw) * 0.7)])
        assert run_cli("replay", str(clipped)) == 1

    def test_tampered_content_fails_hash_check(self, tmp_path, capsys):
        fixtures = resources.files("penheal.data").joinpath("fixtures/nofind.jsonl")
        lines = fixtures.read_text(encoding="utf-8").splitlines()
        doc = json.loads(lines[0])
        doc["messages"][-1]["content"] += " TAMPERED"
        lines[0] = json.dumps(doc)
        tampered = tmp_path / "tampered.jsonl"
        tampered.write_text("\n".join(lines) + "\n")
        assert run_cli("replay", str(tampered)) == 1
        assert "hash mismatch" in capsys.readouterr().err


class TestOutputContainment:
    def test_run_writes_only_inside_out_dir(self, tmp_path, no_network, monkeypatch):
        monkeypatch.chdir(tmp_path)
        out = tmp_path / "only-here"
        assert run_cli(*hermetic_args(out)) == 0
        created = {p.name for p in tmp_path.iterdir()}
        assert created == {"only-here"}


class TestReplayDeterminism:
    def test_artifacts_byte_identical_except_timestamp(self, tmp_path, no_network):
        docs = []
        for i in range(2):
            out = tmp_path / f"out{i}"
            assert run_cli(*hermetic_args(out)) == 0
            docs.append(json.loads((out / "run-artifact.json").read_text()))
        for doc in docs:
            doc.pop("created_at")
        assert json.dumps(docs[0], sort_keys=True) == json.dumps(docs[1], sort_keys=True)


class TestTwoStageFlow:
    def test_pentest_artifact_feeds_remediate(self, tmp_path, no_network):
        stage1 = tmp_path / "stage1"
        assert (
            run_cli(
                "pentest", "--target", "10.0.2.4", "--mode", "hermetic",
                "--out", str(stage1),
            )
            == 0
        )
        stage2 = tmp_path / "stage2"
        assert (
            run_cli(
                "remediate", str(stage1 / "run-artifact.json"),
                "--target", "10.0.2.4", "--mode", "hermetic", "--out", str(stage2),
            )
            == 0
        )
        _, findings, recommendations, report = deserialize_run(
            (stage2 / "run-artifact.json").read_bytes()
        )
        assert len(findings) == 6
        adopted = [r for r in recommendations if r.status.value == "adopted"]
        assert len(adopted) == 6
        assert report.s_d == 6.0
