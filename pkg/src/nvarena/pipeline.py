"""Line-oriented workflow DSL composing the engine's services.

One step per line, ``#`` comments, flat dataflow over named slots — no
variables, loops or conditionals. The grammar here is an original design
(only the workflow idea is given): ``step := verb [subject] (key=value)*``
with JSON-literal values (bare identifiers read as strings). Scripts use
the ``.dgai`` extension.

Example::

    generate versions n=8
    generate tests n=4
    execute
    oracle strategy=cluster
    rank
    emit ranking path="out/ranking.json"
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from . import analysis, arena, matrix, oracle, providers
from .errors import DataflowError, DslSyntaxError, PipelineStepError
from .matrix import ModuleVersion, build_sm, save_srm
from .sheets import parse_sheet, render_sheet, sheets_from_prompt

VERBS = ("generate", "execute", "oracle", "killscore", "minimize", "diff", "rank", "emit")

EMIT_SLOTS = ("sm", "srm", "verdict", "km", "killscore", "minimized", "diff", "ranking")

_BARE_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.\-]*$")

_ORACLE_STRATEGIES = {
    "test": "test_based",
    "test_based": "test_based",
    "cluster": "cluster_based",
    "cluster_based": "cluster_based",
    "prompt": "prompt_assertions",
    "prompt_assertions": "prompt_assertions",
}


@dataclass(frozen=True)
class Step:
    verb: str
    subject: str | None
    args: dict
    line_no: int = 0


@dataclass(frozen=True)
class PipelineScript:
    steps: tuple

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))


def _parse_value(token: str, line_no: int, column: int):
    try:
        return json.loads(token)
    except json.JSONDecodeError:
        if _BARE_RE.match(token):
            return token
        raise DslSyntaxError(f"bad value {token!r}", line_no, column) from None


def _tokenize(line: str, line_no: int):
    # split on spaces outside strings/brackets so quoted paths survive
    from .sheets import _split_top_level

    try:
        pieces = _split_top_level(line, seps=(" ", "\t"))
    except Exception:
        raise DslSyntaxError("unterminated literal", line_no) from None
    return [p for p in pieces if p.strip()]


def parse_pipeline(text: str) -> PipelineScript:
    """Parse and dataflow-check a script; errors carry line (and column) info."""
    steps = []
    produced = set()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).rstrip()
        if not line.strip():
            continue
        tokens = _tokenize(line, line_no)
        verb = tokens[0]
        if verb not in VERBS:
            raise DslSyntaxError(f"unknown verb {verb!r} (one of {', '.join(VERBS)})", line_no, 1)
        subject = None
        rest = tokens[1:]
        if rest and "=" not in rest[0].split('"', 1)[0]:
            subject = rest[0]
            rest = rest[1:]
        args = {}
        for tok in rest:
            if "=" not in tok:
                raise DslSyntaxError(f"expected key=value, got {tok!r}", line_no, line.find(tok) + 1)
            key, value = tok.split("=", 1)
            if not _BARE_RE.match(key):
                raise DslSyntaxError(f"bad argument name {key!r}", line_no, line.find(tok) + 1)
            args[key] = _parse_value(value, line_no, line.find(value) + 1)
        step = Step(verb, subject, args, line_no)
        _check_step(step, produced, line_no)
        steps.append(step)
        produced.update(_produces(step))
    return PipelineScript(tuple(steps))


def _strip_comment(line: str) -> str:
    in_str = False
    escape = False
    for i, ch in enumerate(line):
        if escape:
            escape = False
            continue
        if ch == "\\" and in_str:
            escape = True
        elif ch == '"':
            in_str = not in_str
        elif ch == "#" and not in_str:
            return line[:i]
    return line


def _check_step(step: Step, produced: set, line_no: int):
    verb, subject, args = step.verb, step.subject, step.args
    if verb == "generate":
        if subject not in ("versions", "tests"):
            raise DslSyntaxError("generate needs a subject: versions or tests", line_no)
        if "n" in args and (not isinstance(args["n"], int) or args["n"] < 1):
            raise DslSyntaxError(f"n must be a positive integer, got {args['n']!r}", line_no)
    elif verb == "emit":
        if subject not in EMIT_SLOTS:
            raise DslSyntaxError(f"emit needs a slot, one of {', '.join(EMIT_SLOTS)}", line_no)
        if "path" not in args:
            raise DslSyntaxError("emit requires path=", line_no)
        if subject not in produced:
            raise DataflowError(f"line {line_no}: emit {subject} before it was produced")
    elif subject is not None:
        raise DslSyntaxError(f"verb {verb!r} takes no subject", line_no)

    if verb == "oracle":
        strategy = args.get("strategy", "cluster")
        if strategy not in _ORACLE_STRATEGIES:
            raise DslSyntaxError(
                f"strategy must be one of {sorted(set(_ORACLE_STRATEGIES))}, got {strategy!r}", line_no
            )
    if verb == "diff" and "base" not in args:
        raise DslSyntaxError("diff requires base=", line_no)

    if verb == "execute" and "versions" not in produced:
        raise DataflowError(f"line {line_no}: execute before generate versions")
    if verb in ("oracle", "killscore", "minimize", "diff", "rank") and "srm" not in produced:
        raise DataflowError(f"line {line_no}: {verb} before execute")
    if verb == "killscore" and "base" not in args and "verdict" not in produced:
        raise DataflowError(f"line {line_no}: killscore needs a prior oracle or base=")
    if verb == "minimize" and "km" not in produced:
        raise DataflowError(f"line {line_no}: minimize needs a prior killscore")


def _produces(step: Step):
    if step.verb == "generate":
        out = {step.subject}
        if step.subject == "versions":
            out.add("sm")
        return out
    return {
        "execute": {"srm"},
        "oracle": {"verdict"},
        "killscore": {"km", "killscore"},
        "minimize": {"minimized"},
        "diff": {"diff"},
        "rank": {"ranking"},
        "emit": set(),
    }[step.verb]


def render_pipeline(script: PipelineScript) -> str:
    lines = []
    for step in script.steps:
        parts = [step.verb]
        if step.subject:
            parts.append(step.subject)
        parts.extend(f"{k}={json.dumps(v, ensure_ascii=False)}" for k, v in step.args.items())
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


# --- interpreter -------------------------------------------------------------------


@dataclass
class PipelineContext:
    prompt_text: str
    provider: object = None
    seed: int = 0
    arena_config: arena.ArenaConfig = None
    weights: analysis.RankingWeights = None
    problem_id: str = ""

    def __post_init__(self):
        if self.provider is None:
            self.provider = providers.MockProvider()
        if self.arena_config is None:
            # pipeline runs default to virtual timing so emitted artifacts are
            # reproducible byte for byte; opt out with execute virtual_time=false
            self.arena_config = arena.ArenaConfig(virtual_time=True)
        if self.weights is None:
            self.weights = analysis.RankingWeights()


def run_pipeline(script: PipelineScript, context: PipelineContext) -> dict:
    """Interpret the script sequentially over a blackboard of named slots."""
    signature, prompt_sheets = sheets_from_prompt(context.prompt_text)
    problem_id = context.problem_id or signature.name
    slots = {
        "signature": signature,
        "prompt_tests": list(prompt_sheets),
        "tests": list(prompt_sheets),
        "versions": None,
        "emitted": {},
    }
    for index, step in enumerate(script.steps):
        try:
            _run_step(step, slots, context, problem_id)
        except PipelineStepError:
            raise
        except Exception as exc:
            raise PipelineStepError(index, step.verb, exc) from exc

    artifacts = {k: v for k, v in slots.items() if v is not None and k != "signature"}
    return artifacts


def _run_step(step: Step, slots: dict, context: PipelineContext, problem_id: str):
    args = step.args
    if step.verb == "generate":
        seed = args.get("seed", context.seed)
        req = providers.GenerationRequest(
            prompt_text=context.prompt_text,
            kind=step.subject,
            n=args.get("n", 6 if step.subject == "versions" else 2),
            seed=seed,
            temperature=args.get("temperature", 0.8),
            max_tokens=args.get("max_tokens", 512),
        )
        result = providers.generate(req, context.provider)
        if step.subject == "versions":
            slots["versions"] = [
                ModuleVersion("", "python", src, slots["signature"].name, "provider")
                for src in result.items
            ]
        else:
            slots["tests"] = slots["tests"] + [parse_sheet(text) for text in result.items]
        _refresh_sm(slots, problem_id)
    elif step.verb == "execute":
        if slots.get("sm") is None:
            _refresh_sm(slots, problem_id)
        cfg = context.arena_config
        overrides = {k: args[k] for k in ("pool_size", "wall_ms", "mem_mb", "virtual_time", "retry_on_crash") if k in args}
        if overrides:
            cfg = arena.ArenaConfig(
                pool_size=overrides.get("pool_size", cfg.pool_size),
                wall_ms=overrides.get("wall_ms", cfg.wall_ms),
                mem_mb=overrides.get("mem_mb", cfg.mem_mb),
                worker_command=dict(cfg.worker_command),
                retry_on_crash=overrides.get("retry_on_crash", cfg.retry_on_crash),
                virtual_time=overrides.get("virtual_time", cfg.virtual_time),
            )
        slots["srm"] = arena.execute(slots["sm"], cfg)
    elif step.verb == "oracle":
        strategy = _ORACLE_STRATEGIES[args.get("strategy", "cluster")]
        allow = bool(args.get("allow_degenerate", False))
        if strategy == "test_based":
            slots["verdict"] = oracle.vote_test_based(slots["srm"], allow_degenerate=allow)
        elif strategy == "cluster_based":
            slots["verdict"] = oracle.vote_cluster_based(slots["srm"], allow_degenerate=allow)
        else:
            slots["verdict"] = oracle.oracle_from_prompt(slots["prompt_tests"])
    elif step.verb == "killscore":
        reference = args.get("base", slots.get("verdict"))
        km = analysis.kill_matrix(slots["srm"], reference)
        slots["km"] = km
        slots["killscore"] = analysis.kill_score(km)
    elif step.verb == "minimize":
        slots["minimized"] = analysis.minimize_tests(slots["km"])
    elif step.verb == "diff":
        slots["diff"] = analysis.diff_report(slots["srm"], args["base"])
    elif step.verb == "rank":
        slots["ranking"] = analysis.rank_versions(
            slots["srm"], slots["prompt_tests"], slots.get("verdict"), context.weights
        )
    elif step.verb == "emit":
        path = args["path"]
        _emit(step.subject, slots, path)
        slots["emitted"][step.subject] = path


def _refresh_sm(slots: dict, problem_id: str):
    if slots.get("versions"):
        slots["sm"] = build_sm(problem_id, slots["signature"], slots["tests"], slots["versions"])


def _emit(slot: str, slots: dict, path: str):
    value = slots.get(slot)
    if value is None:
        raise DataflowError(f"slot {slot!r} is empty")
    if slot == "srm":
        save_srm(value, path)
        return
    doc = _to_doc(slot, value)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, ensure_ascii=False, indent=2)
        fh.write("\n")


def _to_doc(slot: str, value):
    if slot == "sm":
        return {
            "problem": value.problem_id,
            "signature": value.signature.render(),
            "tests": [render_sheet(s) for s in value.tests],
            "versions": [
                {"id": v.version_id, "language": v.language_tag, "source": v.source,
                 "entry": v.entry, "origin": v.origin, "static_metrics": v.static_metrics}
                for v in value.versions
            ],
        }
    if slot == "minimized":
        return {"tests": list(value)}
    if slot == "ranking":
        return [r.to_json() for r in value]
    return value.to_json()
