import hashlib
import json

import pytest

from conftest import GCD_PROMPT
from nvarena.errors import DataflowError, DslSyntaxError, PipelineStepError
from nvarena.pipeline import (
    PipelineContext,
    PipelineScript,
    Step,
    parse_pipeline,
    render_pipeline,
    run_pipeline,
)

RECOMMEND_SCRIPT = """\
# recommend workflow
generate versions n=8
generate tests n=4
execute
oracle strategy=cluster
rank
"""


def test_parse_recommend_script():
    script = parse_pipeline(RECOMMEND_SCRIPT)
    assert [s.verb for s in script.steps] == ["generate", "generate", "execute", "oracle", "rank"]
    assert script.steps[0].subject == "versions"
    assert script.steps[0].args == {"n": 8}
    assert script.steps[3].args == {"strategy": "cluster"}


def test_rank_before_execute_is_dataflow_error():
    with pytest.raises(DataflowError):
        parse_pipeline("generate versions n=2\nrank\n")


def test_execute_before_generate_versions():
    with pytest.raises(DataflowError):
        parse_pipeline("generate tests n=2\nexecute\n")


def test_unknown_strategy_diagnostic():
    with pytest.raises(DslSyntaxError) as err:
        parse_pipeline("generate versions n=2\nexecute\noracle strategy=banana\n")
    assert "banana" in str(err.value)
    assert "cluster" in str(err.value)  # enum options listed


def test_unknown_verb_line_number():
    with pytest.raises(DslSyntaxError) as err:
        parse_pipeline("generate versions n=2\nfrobnicate\n")
    assert err.value.line == 2


def test_bad_value_rejected():
    with pytest.raises(DslSyntaxError):
        parse_pipeline('generate versions n="not an int" m\n')


def test_emit_requires_produced_slot():
    with pytest.raises(DataflowError):
        parse_pipeline('emit srm path="x.jsonl"\n')
    with pytest.raises(DslSyntaxError):
        parse_pipeline("generate versions n=2\nexecute\nemit srm\n")


def test_minimize_needs_killscore():
    with pytest.raises(DataflowError):
        parse_pipeline("generate versions n=2\nexecute\nminimize\n")


def test_killscore_needs_oracle_or_base():
    with pytest.raises(DataflowError):
        parse_pipeline("generate versions n=2\nexecute\nkillscore\n")
    parse_pipeline("generate versions n=2\nexecute\nkillscore base=V1\n")
    parse_pipeline("generate versions n=2\nexecute\noracle strategy=cluster\nkillscore\n")


def test_comments_and_quoted_hash():
    script = parse_pipeline('generate versions n=2 # trailing comment\nexecute\ndiff base="a#b"\n')
    assert script.steps[0].args == {"n": 2}
    assert script.steps[2].args == {"base": "a#b"}


def test_parse_render_round_trip():
    script = parse_pipeline(
        'generate versions n=8 seed=3\nexecute virtual_time=true\n'
        'oracle strategy=cluster\nrank\nemit ranking path="out dir/r.json"\n'
    )
    assert parse_pipeline(render_pipeline(script)) == script


def test_run_recommend_pipeline(tmp_path):
    out = tmp_path / "ranking.json"
    srm_out = tmp_path / "run.srm.jsonl"
    script = parse_pipeline(
        "generate versions n=6 seed=42\n"
        "generate tests n=2 seed=42\n"
        "execute\n"
        "oracle strategy=cluster\n"
        "rank\n"
        f'emit ranking path="{out}"\n'
        f'emit srm path="{srm_out}"\n'
    )
    context = PipelineContext(prompt_text=GCD_PROMPT, seed=42)
    artifacts = run_pipeline(script, context)
    assert artifacts["srm"].shape == (4, 6)
    ranking = artifacts["ranking"]

    # the top recommendation satisfies both prompt assertions
    from nvarena.matrix import output_vector

    srm = artifacts["srm"]
    top = srm.stimulus.version_index(ranking[0].version_id)
    assert output_vector(srm, 0, top) == ["1"]
    assert output_vector(srm, 1, top) == ["5"]
    assert out.exists() and srm_out.exists()
    assert json.loads(out.read_text())[0]["version"] == ranking[0].version_id


def test_partial_pipeline_artifacts():
    script = parse_pipeline("generate versions n=3\n")
    artifacts = run_pipeline(script, PipelineContext(prompt_text=GCD_PROMPT, seed=1))
    assert len(artifacts["versions"]) == 3
    assert artifacts["sm"].shape == (2, 3)  # prompt tests only
    assert "srm" not in artifacts and "ranking" not in artifacts


def test_pipeline_determinism_byte_identical(tmp_path):
    def run_once(tag):
        paths = {
            slot: tmp_path / f"{tag}.{slot}"
            for slot in ("srm", "verdict", "ranking", "killscore", "minimized")
        }
        script = parse_pipeline(
            "generate versions n=6 seed=42\n"
            "generate tests n=3 seed=42\n"
            "execute\n"
            "oracle strategy=cluster\n"
            "killscore\n"
            "minimize\n"
            "rank\n"
            + "".join(f'emit {slot} path="{p}"\n' for slot, p in paths.items())
        )
        run_pipeline(script, PipelineContext(prompt_text=GCD_PROMPT, seed=42))
        return {slot: hashlib.sha256(p.read_bytes()).hexdigest() for slot, p in paths.items()}

    assert run_once("a") == run_once("b")


def test_step_errors_carry_index():
    script = parse_pipeline("generate versions n=6\nexecute\ndiff base=V99\n")
    with pytest.raises(PipelineStepError) as err:
        run_pipeline(script, PipelineContext(prompt_text=GCD_PROMPT, seed=0))
    assert err.value.step_index == 2
    assert err.value.verb == "diff"


def test_failed_step_keeps_earlier_emits(tmp_path):
    out = tmp_path / "versions-intact.json"
    script = parse_pipeline(
        "generate versions n=4\n"
        "execute\n"
        f'emit sm path="{out}"\n'
        "diff base=V99\n"
    )
    with pytest.raises(PipelineStepError):
        run_pipeline(script, PipelineContext(prompt_text=GCD_PROMPT, seed=0))
    assert out.exists()
    assert json.loads(out.read_text())["problem"] == "gcd"


def test_render_is_parseable_for_generated_scripts():
    steps = (
        Step("generate", "versions", {"n": 5, "seed": 1}),
        Step("execute", None, {"virtual_time": True}),
        Step("oracle", None, {"strategy": "test_based"}),
        Step("rank", None, {}),
    )
    script = PipelineScript(steps)
    reparsed = parse_pipeline(render_pipeline(script))
    assert [s.verb for s in reparsed.steps] == [s.verb for s in steps]
    assert reparsed.steps[0].args == {"n": 5, "seed": 1}
