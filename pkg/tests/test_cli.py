import json
import sys
from pathlib import Path

import pytest

from conftest import GCD_PROMPT, GCD_SIG, int_sheet, make_srm
from nvarena.cli import (
    EXIT_ARENA,
    EXIT_NO_SURVIVORS,
    EXIT_OK,
    EXIT_PARSE,
    EXIT_PROVIDER,
    EXIT_USAGE,
    exit_code_for,
    main,
)
from nvarena.errors import (
    DslSyntaxError,
    NoSurvivorsError,
    ProviderUnavailableError,
    SheetSyntaxError,
    UsageError,
    WorkerUnavailableError,
)
from nvarena.matrix import save_srm


@pytest.fixture()
def prompt_file(tmp_path):
    path = tmp_path / "gcd_prompt.py"
    path.write_text(GCD_PROMPT)
    return str(path)


@pytest.fixture()
def srm_file(tmp_path):
    srm = make_srm([[1, 1, 2], [5, 5, 5]])
    path = tmp_path / "fixture.srm.jsonl"
    save_srm(srm, path)
    return str(path)


def test_exit_code_mapping_is_total():
    assert exit_code_for(UsageError("x")) == EXIT_USAGE
    assert exit_code_for(SheetSyntaxError("x")) == EXIT_PARSE
    assert exit_code_for(DslSyntaxError("x")) == EXIT_PARSE
    assert exit_code_for(NoSurvivorsError("x")) == EXIT_NO_SURVIVORS
    assert exit_code_for(ProviderUnavailableError("x")) == EXIT_PROVIDER
    assert exit_code_for(WorkerUnavailableError("x")) == EXIT_ARENA
    assert exit_code_for(RuntimeError("x")) == 70


def test_recommend_happy_path(prompt_file, tmp_path, capsys):
    out = tmp_path / "run.srm.jsonl"
    code = main([
        "recommend", "--prompt", prompt_file, "-n", "6", "--seed", "42",
        "--out", str(out), "--json",
    ])
    assert code == EXIT_OK
    captured = capsys.readouterr()
    doc = json.loads(captured.out)  # exactly one JSON document on stdout
    assert doc["recommended"]["version"]
    assert out.exists()

    # top version satisfies the prompt assertions on the persisted SRM
    from nvarena.matrix import load_srm, output_vector

    srm = load_srm(out)
    top = srm.stimulus.version_index(doc["recommended"]["version"])
    assert output_vector(srm, 0, top) == ["1"]
    assert output_vector(srm, 1, top) == ["5"]


def test_recommend_n_zero_is_usage_error(prompt_file, capsys):
    assert main(["recommend", "--prompt", prompt_file, "-n", "0"]) == EXIT_USAGE


def test_recommend_missing_transcript_is_provider_error(prompt_file, tmp_path, capsys):
    conf = tmp_path / "nvarena.conf"
    missing = tmp_path / "nope.jsonl"
    conf.write_text(f"[provider]\ntranscript = {missing}\nmodel = m\nurl = http://x\n")
    code = main([
        "recommend", "--prompt", prompt_file, "--provider", "http", "--config", str(conf),
    ])
    assert code == EXIT_PROVIDER
    captured = capsys.readouterr()
    assert "nope.jsonl" in captured.err


def test_recommend_no_survivors(tmp_path, capsys):
    # prompt whose asserted value no mock variant produces
    prompt = tmp_path / "prompt.py"
    prompt.write_text(
        'def gcd(a: int, b: int) -> int:\n    """\n    >>> gcd(3, 7)\n    999\n    """\n'
    )
    code = main(["recommend", "--prompt", str(prompt), "-n", "4", "--json"])
    assert code == EXIT_NO_SURVIVORS
    captured = capsys.readouterr()
    assert "no version passed the prompt tests" in captured.err
    assert json.loads(captured.out)["error"]["exit"] == EXIT_NO_SURVIVORS


def test_oracle_cluster_json(srm_file, capsys):
    assert main(["oracle", "--srm", srm_file, "--strategy", "cluster", "--json"]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["strategy"] == "cluster_based"
    assert doc["correct"] == ["V1", "V2"]
    assert doc["clusters"][0]["members"] == ["V1", "V2"]


def test_testquality_and_minimize(srm_file, capsys):
    assert main(["testquality", "--srm", srm_file, "--base-id", "V1", "--json"]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["score"]["raw"] == 0.5  # V3 killed out of {V2, V3}

    assert main(["minimize", "--srm", srm_file, "--base-id", "V1", "--json"]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["tests"] == ["t1"]


def test_minimize_zero_kills(tmp_path, capsys):
    srm = make_srm([[7, 7], [9, 9]])
    path = tmp_path / "same.srm.jsonl"
    save_srm(srm, path)
    assert main(["minimize", "--srm", str(path), "--base-id", "V1", "--json"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["tests"] == []


def test_difftest_against_existing_column(srm_file, capsys):
    assert main(["difftest", "--srm", srm_file, "--base-id", "V1", "--json"]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["per_version"] == {"V2": 0, "V3": 1}


def test_difftest_no_discrepancies_message(tmp_path, capsys):
    srm = make_srm([[1, 1]])
    path = tmp_path / "same.srm.jsonl"
    save_srm(srm, path)
    assert main(["difftest", "--srm", str(path), "--base-id", "V1"]) == EXIT_OK
    assert "no discrepancies" in capsys.readouterr().out


def test_difftest_unknown_base_id(srm_file, capsys):
    assert main(["difftest", "--srm", srm_file, "--base-id", "V99"]) == EXIT_PARSE


def test_difftest_base_file_merges_column(srm_file, tmp_path, capsys):
    base = tmp_path / "base.py"
    base.write_text("def gcd(a: int, b: int) -> int:\n    while b != 0:\n        a, b = b, a % b\n    return abs(a)\n")
    assert main(["difftest", "--srm", srm_file, "--base", str(base), "--json"]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["base"] == "base"
    assert set(doc["per_version"]) == {"V1", "V2", "V3"}


def test_export_row_count(srm_file, tmp_path, capsys):
    csv_path = tmp_path / "out.csv"
    assert main(["export", "--srm", srm_file, "--csv", str(csv_path), "--json"]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["rows"] == 6
    lines = Path(csv_path).read_text().strip().splitlines()
    assert len(lines) == 1 + 6
    assert lines[0] == "problem,test,version,status,wall_us,oracle_match"


def test_run_pipeline_command(prompt_file, tmp_path, capsys):
    script = tmp_path / "flow.dgai"
    out = tmp_path / "ranking.json"
    script.write_text(
        "generate versions n=6 seed=42\nexecute\noracle strategy=cluster\nrank\n"
        f'emit ranking path="{out}"\n'
    )
    code = main(["run", str(script), "--prompt", prompt_file, "--seed", "42", "--json"])
    assert code == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert "ranking" in doc["artifacts"]
    assert out.exists()


def test_run_bad_script_exit_parse(prompt_file, tmp_path):
    script = tmp_path / "bad.dgai"
    script.write_text("rank\n")
    assert main(["run", str(script), "--prompt", prompt_file]) == EXIT_PARSE


def test_json_mode_keeps_stdout_clean(srm_file, capsys):
    assert main(["oracle", "--srm", srm_file, "--json"]) == EXIT_OK
    captured = capsys.readouterr()
    json.loads(captured.out)  # must parse as a single document


def test_config_precedence(prompt_file, tmp_path, capsys, monkeypatch):
    # config sets a tiny pool; flag seed still wins over default
    conf = tmp_path / "nvarena.conf"
    conf.write_text("[arena]\npool_size = 1\nwall_ms = 400\n")
    out = tmp_path / "x.srm.jsonl"
    code = main([
        "recommend", "--prompt", prompt_file, "-n", "4", "--seed", "42",
        "--config", str(conf), "--out", str(out), "--json",
    ])
    assert code == EXIT_OK
    capsys.readouterr()


def test_unknown_subcommand_usage(capsys):
    assert main(["frobnicate"]) == EXIT_USAGE


def test_conformance_unlaunchable_worker(capsys):
    assert main(["conformance", "--worker", "/no/such/binary"]) == EXIT_ARENA


def test_conformance_against_fixture_worker(capsys):
    worker = f"{sys.executable} {Path(__file__).parent / 'fixture_worker.py'}"
    code = main(["conformance", "--worker", worker, "--json"])
    doc = json.loads(capsys.readouterr().out)
    assert doc["total"] == 12
    # the naive fixture enforces no limits: timing-sensitive cases fail
    assert code == EXIT_ARENA
    by_id = {c["id"]: c for c in doc["cases"]}
    assert by_id["ok_int"]["pass"] is True
    assert by_id["timeout_loop"]["pass"] is False
